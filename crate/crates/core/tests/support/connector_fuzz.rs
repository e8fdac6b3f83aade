// SPDX-License-Identifier: Apache-2.0

//! Random message interleavings against one provider connector. Each op is
//! decoded from four bytes so both proptest and a plain seeded RNG can drive
//! the same checker.

use std::collections::HashMap;
use std::sync::Arc;

use edgespace_core::dataspace::{
    AssetDescriptor, Catalog, DspMessage, MessageType, NegotiationState, ProcessRef, ProviderConnector, StoreSource, TransferState,
    UsagePolicy,
};
use edgespace_core::store::SeriesStore;
use edgespace_core::{Modality, SensorReading, TimeWindow};

pub const PROVIDER: &str = "provider";
pub const PARTICIPANTS: [&str; 3] = [PROVIDER, "consumer", "mallory"];
const ASSET: &str = "asset-1";
const DEVICE: &str = "dev1";
const T0: i64 = 10_000;

#[derive(Debug, Clone)]
pub enum Op {
    Send(DspMessage),
    Pump { transfer: String, limit: usize },
    SetPolicy(UsagePolicy),
}

#[derive(Debug, Default, Clone, Copy)]
pub struct Stats {
    pub ops: usize,
    pub delivered: usize,
    pub finalized: usize,
}

fn policy(k: u8, now: i64) -> UsagePolicy {
    match k % 5 {
        0 => UsagePolicy::allow(["consumer"], "monitoring"),
        1 => UsagePolicy::deny_all("monitoring"),
        2 => UsagePolicy::allow(["mallory"], "monitoring"),
        3 => UsagePolicy::allow(["consumer"], "monitoring").with_expiry(now + 90),
        _ => UsagePolicy::allow(["consumer", "mallory"], "monitoring").with_rate(3),
    }
}

fn happy(step: u8, slot: u8, sender: &str) -> DspMessage {
    let n = format!("n{}", slot % 2);
    let t = format!("t{}", slot % 2);
    match step % 7 {
        0 => DspMessage::contract_request(&n, sender, ASSET),
        1 => DspMessage::negotiation(MessageType::ContractOffered, &n, PROVIDER),
        2 => DspMessage::negotiation(MessageType::ContractAccepted, &n, sender),
        3 => DspMessage::negotiation(MessageType::ContractAgreed, &n, PROVIDER),
        4 => DspMessage::negotiation(MessageType::ContractFinalized, &n, PROVIDER),
        5 => DspMessage::transfer_request(&t, sender, &n, TimeWindow::new(T0, T0 + 3600).unwrap()),
        _ => DspMessage::transfer(MessageType::TransferStarted, &t, PROVIDER),
    }
}

/// Decodes raw bytes into operations; `now` advances with the index. Some
/// ops advance a per-slot cursor along the happy path so interleavings
/// regularly reach delivery.
pub fn decode(raw: &[(u8, u8, u8, u8)]) -> Vec<Op> {
    let mut cursor = [0u8; 2];
    raw.iter()
        .enumerate()
        .map(|(i, &(a, b, c, d))| {
            let sender = PARTICIPANTS[usize::from(c) % 3];
            match a % 8 {
                0..=2 => {
                    let slot = usize::from(d % 2);
                    let step = cursor[slot];
                    cursor[slot] = (step + 1).min(6);
                    if b % 16 == 0 {
                        cursor[slot] = 0;
                    }
                    Op::Send(happy(step, d, if c % 5 == 0 { sender } else { "consumer" }))
                }
                3 | 4 => {
                    let ty = MessageType::ALL[usize::from(b) % MessageType::ALL.len()];
                    let msg = match ty {
                        MessageType::ContractRequested => DspMessage::contract_request(&format!("n{}", d % 2), sender, ASSET),
                        MessageType::TransferRequested => DspMessage::transfer_request(
                            &format!("t{}", d % 2),
                            sender,
                            &format!("n{}", (d >> 1) % 2),
                            TimeWindow::new(T0, T0 + 600 * i64::from(d % 8)).unwrap(),
                        ),
                        t if (t as usize) < 6 => DspMessage::negotiation(t, &format!("n{}", d % 2), sender),
                        t => DspMessage::transfer(t, &format!("t{}", d % 2), sender),
                    };
                    // Occasionally swap the process reference to the wrong kind.
                    if d & 0x80 != 0 {
                        let mut m = msg;
                        m.process = match m.process {
                            ProcessRef::NegotiationId(x) => ProcessRef::TransferId(x),
                            ProcessRef::TransferId(x) => ProcessRef::NegotiationId(x),
                        };
                        Op::Send(m)
                    } else {
                        Op::Send(msg)
                    }
                }
                5 | 6 => Op::Pump { transfer: format!("t{}", d % 2), limit: usize::from(c % 6) + 1 },
                _ => Op::SetPolicy(policy(b, T0 + 7 * i as i64)),
            }
        })
        .collect()
}

fn setup() -> ProviderConnector {
    let store = SeriesStore::in_memory(None);
    for k in 0..40 {
        store.append(SensorReading::new(DEVICE, "room", Modality::Temperature, 21.0 + k as f64 * 0.1, T0 + 60 * k).unwrap()).unwrap();
    }
    let catalog = Catalog::in_memory();
    catalog
        .register_asset(
            AssetDescriptor {
                asset_id: ASSET.into(),
                endpoint: format!("http://provider.local/sensors/{DEVICE}"),
                device_type: "env".into(),
                location: "room".into(),
                data_modality: "temperature".into(),
                protocol: "http".into(),
                temporal_resolution: 60,
                update_frequency: 60,
                license: "CC-BY-4.0".into(),
                access_policy: UsagePolicy::allow(["consumer"], "monitoring"),
            },
            0,
        )
        .unwrap();
    ProviderConnector::new(PROVIDER, Arc::new(catalog), Arc::new(StoreSource(Arc::new(store))))
}

/// Runs one interleaving and checks the safety properties after every step.
pub fn check(ops: &[Op]) -> Result<Stats, String> {
    let provider = setup();
    let mut stats = Stats::default();
    let mut neg_seen: HashMap<String, NegotiationState> = HashMap::new();
    let mut xfer_seen: HashMap<String, TransferState> = HashMap::new();
    let mut snapshots: HashMap<String, UsagePolicy> = HashMap::new();
    for (i, op) in ops.iter().enumerate() {
        let now = T0 + 7 * i as i64;
        stats.ops += 1;
        match op {
            Op::Send(msg) => {
                let _ = provider.handle(msg, now);
            }
            Op::SetPolicy(p) => {
                provider.catalog().update_policy(ASSET, p.clone()).map_err(|e| e.to_string())?;
            }
            Op::Pump { transfer, limit } => {
                let mut got: Vec<SensorReading> = Vec::new();
                let _ = provider.pump(transfer, Some(*limit), &mut |r| got.push(r.clone()));
                if !got.is_empty() {
                    let t = provider.transfer(transfer).ok_or("delivery without a transfer")?;
                    let n = provider.negotiation(&t.negotiation_id).ok_or("delivery without a negotiation")?;
                    if n.state != NegotiationState::Finalized {
                        return Err(format!("step {i}: delivered {} readings while negotiation is {}", got.len(), n.state));
                    }
                    let agreement = n.agreement.as_ref().ok_or("finalized without agreement")?;
                    if !agreement.policy.allowed_participants.contains(&agreement.consumer_id) {
                        return Err(format!("step {i}: snapshot does not allow {}", agreement.consumer_id));
                    }
                    if got.iter().any(|r| r.device_id() != DEVICE || !t.window.contains(r.timestamp())) {
                        return Err(format!("step {i}: reading outside the agreed asset or window"));
                    }
                    stats.delivered += got.len();
                }
            }
        }
        for n in provider.negotiations() {
            if let Some(prev) = neg_seen.get(&n.negotiation_id) {
                if prev.is_final() && *prev != n.state {
                    return Err(format!("step {i}: negotiation {} left {prev} for {}", n.negotiation_id, n.state));
                }
            }
            if n.state == NegotiationState::Finalized {
                let a = n.agreement.as_ref().ok_or("finalized without agreement")?;
                match snapshots.get(&n.negotiation_id) {
                    Some(p) if *p != a.policy => return Err(format!("step {i}: agreement policy of {} changed", n.negotiation_id)),
                    Some(_) => {}
                    None => {
                        stats.finalized += 1;
                        snapshots.insert(n.negotiation_id.clone(), a.policy.clone());
                    }
                }
            }
            neg_seen.insert(n.negotiation_id.clone(), n.state);
        }
        for t in provider.transfers() {
            if let Some(prev) = xfer_seen.get(&t.transfer_id) {
                if prev.is_absorbing() && *prev != t.state {
                    return Err(format!("step {i}: transfer {} left {prev} for {}", t.transfer_id, t.state));
                }
            }
            let n = provider.negotiation(&t.negotiation_id).ok_or("transfer without negotiation")?;
            if n.state != NegotiationState::Finalized || n.agreement.as_ref() != Some(&t.agreement) {
                return Err(format!("step {i}: transfer {} exists without its finalized agreement", t.transfer_id));
            }
            xfer_seen.insert(t.transfer_id.clone(), t.state);
        }
    }
    Ok(stats)
}

/// Happy path through the bus: exactly five negotiation transitions.
pub fn happy_path_transitions() -> u32 {
    let provider = setup();
    let mut bus = edgespace_core::dataspace::InMemoryBus::default();
    let (n, _) = edgespace_core::dataspace::negotiate(&mut bus, &provider, "consumer", ASSET, "n-happy", T0).unwrap();
    assert_eq!(n.state, NegotiationState::Finalized);
    n.transitions
}
