// SPDX-License-Identifier: Apache-2.0

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use super::negotiation::{Agreement, TerminationReason};
use super::{ProtocolViolation, Role};
use crate::domain::{EpochSecs, TimeWindow};

/// Length of the sliding window the request-rate cap applies to.
pub const RATE_WINDOW_SECS: i64 = 60;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum TransferState {
    Requested,
    Started,
    Completed,
    Suspended,
    Terminated,
}

impl TransferState {
    pub fn is_absorbing(self) -> bool {
        matches!(self, TransferState::Completed | TransferState::Terminated)
    }
}

impl std::fmt::Display for TransferState {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            TransferState::Requested => "REQUESTED",
            TransferState::Started => "STARTED",
            TransferState::Completed => "COMPLETED",
            TransferState::Suspended => "SUSPENDED",
            TransferState::Terminated => "TERMINATED",
        })
    }
}

/// Result of asking to deliver one reading.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Admission {
    /// Deliver at this simulated instant (later than the reading when throttled).
    Deliver { at: EpochSecs },
    /// The agreement ran out; the transfer is now TERMINATED.
    Expired,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransferProcess {
    pub transfer_id: String,
    pub negotiation_id: String,
    pub agreement: Agreement,
    pub window: TimeWindow,
    pub state: TransferState,
    /// Every state the process has been in, oldest first.
    pub history: Vec<TransferState>,
    pub delivered: u64,
    /// Readings whose delivery was postponed by the rate cap.
    pub throttled: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub termination_reason: Option<TerminationReason>,
    /// Simulated clock: the delivery time of the last reading.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub clock: Option<EpochSecs>,
    #[serde(skip)]
    recent: VecDeque<EpochSecs>,
}

impl TransferProcess {
    pub fn new(transfer_id: impl Into<String>, negotiation_id: impl Into<String>, agreement: Agreement, window: TimeWindow) -> Self {
        Self {
            transfer_id: transfer_id.into(),
            negotiation_id: negotiation_id.into(),
            agreement,
            window,
            state: TransferState::Requested,
            history: vec![TransferState::Requested],
            delivered: 0,
            throttled: 0,
            termination_reason: None,
            clock: None,
            recent: VecDeque::new(),
        }
    }

    pub fn role_of(&self, participant: &str) -> Option<Role> {
        if participant == self.agreement.provider_id {
            Some(Role::Provider)
        } else if participant == self.agreement.consumer_id {
            Some(Role::Consumer)
        } else {
            None
        }
    }

    fn set(&mut self, s: TransferState) {
        self.state = s;
        self.history.push(s);
    }

    fn expired_at(&self, now: EpochSecs) -> bool {
        self.agreement.policy.expiry.is_some_and(|e| now > e)
    }

    fn expire(&mut self) {
        if self.state == TransferState::Started {
            self.set(TransferState::Suspended);
        }
        self.set(TransferState::Terminated);
        self.termination_reason = Some(TerminationReason::Expired);
    }

    /// Applies a STARTED / SUSPENDED / COMPLETED / TERMINATED message.
    pub fn apply(&mut self, target: TransferState, sender: &str, now: EpochSecs) -> Result<TransferState, ProtocolViolation> {
        use TransferState as S;
        let role = self.role_of(sender).ok_or_else(|| ProtocolViolation::UnknownSender(sender.to_string()))?;
        let out_of_order = ProtocolViolation::OutOfOrder { state: self.state.to_string(), message: target.to_string() };
        if self.state.is_absorbing() {
            return Err(out_of_order);
        }
        let need = |want: Role| {
            if role == want {
                Ok(())
            } else {
                Err(ProtocolViolation::WrongRole { role, message: target.to_string() })
            }
        };
        match (self.state, target) {
            (S::Requested | S::Suspended, S::Started) => {
                need(Role::Provider)?;
                if self.expired_at(now) {
                    self.expire();
                } else {
                    self.set(S::Started);
                }
            }
            (S::Started, S::Suspended) => self.set(S::Suspended),
            (S::Started, S::Completed) => {
                need(Role::Provider)?;
                self.set(S::Completed);
            }
            (_, S::Terminated) => {
                self.set(S::Terminated);
                self.termination_reason = Some(match role {
                    Role::Consumer => TerminationReason::TerminatedByConsumer,
                    Role::Provider => TerminationReason::TerminatedByProvider,
                });
            }
            _ => return Err(out_of_order),
        }
        Ok(self.state)
    }

    /// Admits one reading stamped `reading_ts` under the agreement's rate
    /// cap and expiry. The simulated clock never runs backwards.
    pub fn admit(&mut self, reading_ts: EpochSecs) -> Result<Admission, ProtocolViolation> {
        if self.state != TransferState::Started {
            return Err(ProtocolViolation::NotStarted(self.state.to_string()));
        }
        let mut t = self.clock.map_or(reading_ts, |c| c.max(reading_ts));
        if let Some(cap) = self.agreement.policy.max_request_rate {
            let cap = cap as usize;
            loop {
                while self.recent.front().is_some_and(|&f| f <= t - RATE_WINDOW_SECS) {
                    self.recent.pop_front();
                }
                if self.recent.len() < cap || cap == 0 {
                    break;
                }
                t = self.recent[self.recent.len() - cap] + RATE_WINDOW_SECS;
                self.throttled += 1;
            }
            if cap == 0 {
                // A zero cap never admits anything; nothing sensible to wait for.
                self.throttled += 1;
                return Err(ProtocolViolation::Throttled);
            }
        }
        if self.expired_at(t) {
            self.expire();
            return Ok(Admission::Expired);
        }
        self.recent.push_back(t);
        self.clock = Some(t);
        self.delivered += 1;
        Ok(Admission::Deliver { at: t })
    }
}
