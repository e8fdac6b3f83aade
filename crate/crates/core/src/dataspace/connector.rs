// SPDX-License-Identifier: Apache-2.0

use std::collections::BTreeMap;
use std::sync::{Arc, Mutex, RwLock};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::catalog::{AssetDescriptor, Catalog};
use super::negotiation::{Applied, ContractNegotiation, NegotiationState};
use super::policy::{enforce_policy, DenyReason, PolicyDecision};
use super::transfer::{Admission, TransferProcess, TransferState, RATE_WINDOW_SECS};
use super::{DataspaceError, ProtocolViolation};
use crate::domain::{EpochSecs, SensorReading, TimeWindow};
use crate::store::SeriesStore;

/// One edge of either state machine.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum MessageType {
    ContractRequested,
    ContractOffered,
    ContractAccepted,
    ContractAgreed,
    ContractFinalized,
    ContractTerminated,
    TransferRequested,
    TransferStarted,
    TransferSuspended,
    TransferCompleted,
    TransferTerminated,
}

impl MessageType {
    pub const ALL: [MessageType; 11] = [
        MessageType::ContractRequested,
        MessageType::ContractOffered,
        MessageType::ContractAccepted,
        MessageType::ContractAgreed,
        MessageType::ContractFinalized,
        MessageType::ContractTerminated,
        MessageType::TransferRequested,
        MessageType::TransferStarted,
        MessageType::TransferSuspended,
        MessageType::TransferCompleted,
        MessageType::TransferTerminated,
    ];

    fn negotiation_target(self) -> Option<NegotiationState> {
        Some(match self {
            MessageType::ContractRequested => NegotiationState::Requested,
            MessageType::ContractOffered => NegotiationState::Offered,
            MessageType::ContractAccepted => NegotiationState::Accepted,
            MessageType::ContractAgreed => NegotiationState::Agreed,
            MessageType::ContractFinalized => NegotiationState::Finalized,
            MessageType::ContractTerminated => NegotiationState::Terminated,
            _ => return None,
        })
    }

    fn transfer_target(self) -> Option<TransferState> {
        Some(match self {
            MessageType::TransferRequested => TransferState::Requested,
            MessageType::TransferStarted => TransferState::Started,
            MessageType::TransferSuspended => TransferState::Suspended,
            MessageType::TransferCompleted => TransferState::Completed,
            MessageType::TransferTerminated => TransferState::Terminated,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProcessRef {
    NegotiationId(String),
    TransferId(String),
}

/// Wire envelope shared by the in-memory bus and the HTTP endpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DspMessage {
    pub message_type: MessageType,
    #[serde(flatten)]
    pub process: ProcessRef,
    pub sender: String,
    #[serde(default)]
    pub payload: Value,
}

impl DspMessage {
    pub fn negotiation(message_type: MessageType, negotiation_id: &str, sender: &str) -> Self {
        Self {
            message_type,
            process: ProcessRef::NegotiationId(negotiation_id.to_string()),
            sender: sender.to_string(),
            payload: Value::Null,
        }
    }

    pub fn contract_request(negotiation_id: &str, consumer: &str, asset_id: &str) -> Self {
        Self { payload: json!({ "asset_id": asset_id }), ..Self::negotiation(MessageType::ContractRequested, negotiation_id, consumer) }
    }

    pub fn transfer(message_type: MessageType, transfer_id: &str, sender: &str) -> Self {
        Self {
            message_type,
            process: ProcessRef::TransferId(transfer_id.to_string()),
            sender: sender.to_string(),
            payload: Value::Null,
        }
    }

    pub fn transfer_request(transfer_id: &str, consumer: &str, negotiation_id: &str, window: TimeWindow) -> Self {
        Self {
            payload: json!({ "negotiation_id": negotiation_id, "from": window.from(), "to": window.to() }),
            ..Self::transfer(MessageType::TransferRequested, transfer_id, consumer)
        }
    }
}

/// What a handled message did.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MessageOutcome {
    pub process_id: String,
    /// State before and after; equal when the message was idempotently ignored.
    pub from: Option<String>,
    pub to: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reason: Option<String>,
}

/// Where a provider's readings come from.
pub trait ReadingSource: Send + Sync {
    /// Readings behind `asset` inside `window`, ascending by time.
    fn readings(&self, asset: &AssetDescriptor, window: TimeWindow) -> Vec<SensorReading>;
}

/// Serves an asset from a store, using the endpoint's last path segment as
/// the device id and merging all of that device's modalities.
pub struct StoreSource(pub Arc<SeriesStore>);

impl ReadingSource for StoreSource {
    fn readings(&self, asset: &AssetDescriptor, window: TimeWindow) -> Vec<SensorReading> {
        let Some(device) = asset.endpoint_device() else { return Vec::new() };
        let mut out: Vec<SensorReading> = self
            .0
            .keys()
            .into_iter()
            .filter(|(d, _)| *d == device)
            .flat_map(|(d, m)| self.0.query(&d, m, window))
            .collect();
        out.sort_by_key(SensorReading::timestamp);
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PumpReport {
    pub transfer_id: String,
    pub delivered: u64,
    pub state: TransferState,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub last_delivered_at: Option<EpochSecs>,
}

type Shared<T> = Arc<Mutex<T>>;

/// Provider-side connector: owns the catalog, the negotiations and the
/// transfers. Messages for one process are applied one at a time; distinct
/// processes only share the outer map locks briefly.
pub struct ProviderConnector {
    participant_id: String,
    catalog: Arc<Catalog>,
    source: Arc<dyn ReadingSource>,
    negotiations: RwLock<BTreeMap<String, Shared<ContractNegotiation>>>,
    transfers: RwLock<BTreeMap<String, Shared<(TransferProcess, usize)>>>,
}

impl ProviderConnector {
    pub fn new(participant_id: impl Into<String>, catalog: Arc<Catalog>, source: Arc<dyn ReadingSource>) -> Self {
        Self {
            participant_id: participant_id.into(),
            catalog,
            source,
            negotiations: RwLock::new(BTreeMap::new()),
            transfers: RwLock::new(BTreeMap::new()),
        }
    }

    pub fn participant_id(&self) -> &str {
        &self.participant_id
    }

    pub fn catalog(&self) -> &Catalog {
        &self.catalog
    }

    pub fn negotiation(&self, id: &str) -> Option<ContractNegotiation> {
        let map = self.negotiations.read().expect("negotiations lock poisoned");
        map.get(id).map(|n| n.lock().expect("negotiation lock poisoned").clone())
    }

    pub fn transfer(&self, id: &str) -> Option<TransferProcess> {
        let map = self.transfers.read().expect("transfers lock poisoned");
        map.get(id).map(|t| t.lock().expect("transfer lock poisoned").0.clone())
    }

    pub fn negotiations(&self) -> Vec<ContractNegotiation> {
        let map = self.negotiations.read().expect("negotiations lock poisoned");
        map.values().map(|n| n.lock().expect("negotiation lock poisoned").clone()).collect()
    }

    pub fn transfers(&self) -> Vec<TransferProcess> {
        let map = self.transfers.read().expect("transfers lock poisoned");
        map.values().map(|t| t.lock().expect("transfer lock poisoned").0.clone()).collect()
    }

    fn payload_str<'a>(msg: &'a DspMessage, key: &str) -> Result<&'a str, DataspaceError> {
        msg.payload
            .get(key)
            .and_then(Value::as_str)
            .ok_or_else(|| DataspaceError::BadMessage(format!("{:?} needs payload.{key}", msg.message_type)))
    }

    /// Applies one protocol message sent at simulated time `now`.
    pub fn handle(&self, msg: &DspMessage, now: EpochSecs) -> Result<MessageOutcome, DataspaceError> {
        match (&msg.process, msg.message_type.negotiation_target(), msg.message_type.transfer_target()) {
            (ProcessRef::NegotiationId(id), Some(target), _) => self.handle_negotiation(id, target, msg, now),
            (ProcessRef::TransferId(id), _, Some(target)) => self.handle_transfer(id, target, msg, now),
            _ => Err(DataspaceError::BadMessage(format!("{:?} does not match the process reference", msg.message_type))),
        }
    }

    fn handle_negotiation(&self, id: &str, target: NegotiationState, msg: &DspMessage, now: EpochSecs) -> Result<MessageOutcome, DataspaceError> {
        if target == NegotiationState::Requested {
            let asset_id = Self::payload_str(msg, "asset_id")?;
            let asset = self.catalog.get(asset_id).ok_or_else(|| DataspaceError::UnknownAsset(asset_id.to_string()))?;
            if msg.sender == self.participant_id {
                return Err(ProtocolViolation::WrongRole { role: super::Role::Provider, message: target.to_string() }.into());
            }
            let mut map = self.negotiations.write().expect("negotiations lock poisoned");
            if map.contains_key(id) {
                return Err(ProtocolViolation::DuplicateProcess(id.to_string()).into());
            }
            let n = ContractNegotiation::request(id, asset_id, &self.participant_id, &msg.sender, &asset.access_policy, now);
            let out = MessageOutcome {
                process_id: id.to_string(),
                from: None,
                to: n.state.to_string(),
                reason: n.termination_reason.map(|r| r.to_string()),
            };
            map.insert(id.to_string(), Arc::new(Mutex::new(n)));
            return Ok(out);
        }
        let cell = {
            let map = self.negotiations.read().expect("negotiations lock poisoned");
            map.get(id).cloned().ok_or_else(|| DataspaceError::UnknownProcess(id.to_string()))?
        };
        let mut n = cell.lock().expect("negotiation lock poisoned");
        let policy = self
            .catalog
            .get(&n.asset_id)
            .map(|a| a.access_policy)
            .ok_or_else(|| DataspaceError::UnknownAsset(n.asset_id.clone()))?;
        let applied = n.apply(target, &msg.sender, &policy, now)?;
        let (from, to) = match applied {
            Applied::Moved { from, to } => (from, to),
            Applied::Ignored => (n.state, n.state),
        };
        Ok(MessageOutcome {
            process_id: id.to_string(),
            from: Some(from.to_string()),
            to: to.to_string(),
            reason: n.termination_reason.filter(|_| to == NegotiationState::Terminated).map(|r| r.to_string()),
        })
    }

    fn handle_transfer(&self, id: &str, target: TransferState, msg: &DspMessage, now: EpochSecs) -> Result<MessageOutcome, DataspaceError> {
        if target == TransferState::Requested {
            let negotiation_id = Self::payload_str(msg, "negotiation_id")?;
            let window = match (msg.payload.get("from").and_then(Value::as_i64), msg.payload.get("to").and_then(Value::as_i64)) {
                (Some(a), Some(b)) => TimeWindow::new(a, b).map_err(|e| DataspaceError::BadMessage(e.to_string()))?,
                _ => TimeWindow::new(EpochSecs::MIN, EpochSecs::MAX).expect("full range is ordered"),
            };
            let cell = {
                let map = self.negotiations.read().expect("negotiations lock poisoned");
                map.get(negotiation_id).cloned().ok_or_else(|| DataspaceError::UnknownProcess(negotiation_id.to_string()))?
            };
            let mut n = cell.lock().expect("negotiation lock poisoned");
            if n.state != NegotiationState::Finalized {
                return Err(DataspaceError::NotFinalized { negotiation_id: negotiation_id.to_string(), state: n.state.to_string() });
            }
            let agreement = n.agreement.clone().expect("finalized negotiations carry an agreement");
            if msg.sender != agreement.consumer_id {
                return Err(DataspaceError::PolicyDenied(DenyReason::NotAllowed));
            }
            n.transfer_requests.retain(|&t| t > now - RATE_WINDOW_SECS);
            let observed = u32::try_from(n.transfer_requests.len() + 1).unwrap_or(u32::MAX);
            match enforce_policy(&agreement.policy, &msg.sender, now, observed) {
                PolicyDecision::Allow => {}
                PolicyDecision::Deny(DenyReason::Rate) => return Err(DataspaceError::Throttled),
                PolicyDecision::Deny(r) => return Err(DataspaceError::PolicyDenied(r)),
            }
            let mut map = self.transfers.write().expect("transfers lock poisoned");
            if map.contains_key(id) {
                return Err(ProtocolViolation::DuplicateProcess(id.to_string()).into());
            }
            n.transfer_requests.push(now);
            let t = TransferProcess::new(id, negotiation_id, agreement, window);
            map.insert(id.to_string(), Arc::new(Mutex::new((t, 0))));
            return Ok(MessageOutcome { process_id: id.to_string(), from: None, to: TransferState::Requested.to_string(), reason: None });
        }
        let cell = {
            let map = self.transfers.read().expect("transfers lock poisoned");
            map.get(id).cloned().ok_or_else(|| DataspaceError::UnknownProcess(id.to_string()))?
        };
        let mut guard = cell.lock().expect("transfer lock poisoned");
        let from = guard.0.state;
        let to = guard.0.apply(target, &msg.sender, now)?;
        Ok(MessageOutcome {
            process_id: id.to_string(),
            from: Some(from.to_string()),
            to: to.to_string(),
            reason: guard.0.termination_reason.filter(|_| to == TransferState::Terminated).map(|r| r.to_string()),
        })
    }

    /// Delivers up to `limit` further readings of a STARTED transfer to
    /// `sink`. Reaching the end of the source completes the transfer.
    pub fn pump(&self, transfer_id: &str, limit: Option<usize>, sink: &mut dyn FnMut(&SensorReading)) -> Result<PumpReport, DataspaceError> {
        let cell = {
            let map = self.transfers.read().expect("transfers lock poisoned");
            map.get(transfer_id).cloned().ok_or_else(|| DataspaceError::UnknownProcess(transfer_id.to_string()))?
        };
        let mut guard = cell.lock().expect("transfer lock poisoned");
        let (t, cursor) = &mut *guard;
        if t.state != TransferState::Started {
            return Err(ProtocolViolation::NotStarted(t.state.to_string()).into());
        }
        // The agreement must still be final and must name this consumer.
        let finalized = self
            .negotiation(&t.negotiation_id)
            .is_some_and(|n| n.state == NegotiationState::Finalized && n.agreement.as_ref() == Some(&t.agreement));
        if !finalized {
            return Err(DataspaceError::NotFinalized { negotiation_id: t.negotiation_id.clone(), state: "unknown".into() });
        }
        let asset = self.catalog.get(&t.agreement.asset_id).ok_or_else(|| DataspaceError::UnknownAsset(t.agreement.asset_id.clone()))?;
        let readings = self.source.readings(&asset, t.window);
        let mut last = None;
        let mut sent = 0usize;
        while *cursor < readings.len() && limit.map_or(true, |l| sent < l) {
            let r = &readings[*cursor];
            match t.admit(r.timestamp())? {
                Admission::Deliver { at } => {
                    sink(r);
                    last = Some(at);
                    *cursor += 1;
                    sent += 1;
                }
                Admission::Expired => break,
            }
        }
        if t.state == TransferState::Started && *cursor >= readings.len() {
            t.apply(TransferState::Completed, &self.participant_id.clone(), t.clock.unwrap_or(t.window.from()))?;
        }
        Ok(PumpReport { transfer_id: transfer_id.to_string(), delivered: t.delivered, state: t.state, last_delivered_at: last })
    }
}

/// In-process message bus: delivers envelopes to the provider and keeps a
/// log of every message and its outcome.
#[derive(Default)]
pub struct InMemoryBus {
    pub log: Vec<(DspMessage, Result<MessageOutcome, String>)>,
}

impl InMemoryBus {
    pub fn send(&mut self, provider: &ProviderConnector, msg: DspMessage, now: EpochSecs) -> Result<MessageOutcome, DataspaceError> {
        // Round-trip through JSON so the in-process path uses the wire schema.
        let wire = serde_json::to_string(&msg).expect("messages serialize");
        let msg: DspMessage = serde_json::from_str(&wire).map_err(|e| DataspaceError::BadMessage(e.to_string()))?;
        let result = provider.handle(&msg, now);
        self.log.push((msg, result.as_ref().map(Clone::clone).map_err(ToString::to_string)));
        result
    }
}

/// Drives the happy-path sequence from the consumer's request to FINALIZED,
/// stopping early if the provider terminates. Returns the negotiation and
/// every state it passed through.
pub fn negotiate(
    bus: &mut InMemoryBus,
    provider: &ProviderConnector,
    consumer_id: &str,
    asset_id: &str,
    negotiation_id: &str,
    now: EpochSecs,
) -> Result<(ContractNegotiation, Vec<String>), DataspaceError> {
    let pid = provider.participant_id().to_string();
    let steps = [
        DspMessage::contract_request(negotiation_id, consumer_id, asset_id),
        DspMessage::negotiation(MessageType::ContractOffered, negotiation_id, &pid),
        DspMessage::negotiation(MessageType::ContractAccepted, negotiation_id, consumer_id),
        DspMessage::negotiation(MessageType::ContractAgreed, negotiation_id, &pid),
        DspMessage::negotiation(MessageType::ContractFinalized, negotiation_id, &pid),
    ];
    let mut trace = Vec::new();
    for msg in steps {
        let out = bus.send(provider, msg, now)?;
        trace.push(out.to.clone());
        if out.to == NegotiationState::Terminated.to_string() {
            break;
        }
    }
    let n = provider.negotiation(negotiation_id).ok_or_else(|| DataspaceError::UnknownProcess(negotiation_id.to_string()))?;
    Ok((n, trace))
}
