// SPDX-License-Identifier: Apache-2.0

use serde::{Deserialize, Serialize};

use super::policy::{enforce_policy, DenyReason, PolicyDecision, UsagePolicy};
use super::{ProtocolViolation, Role};
use crate::domain::EpochSecs;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum NegotiationState {
    Requested,
    Offered,
    Accepted,
    Agreed,
    Finalized,
    Terminated,
}

impl NegotiationState {
    /// No message moves a negotiation out of these states.
    pub fn is_final(self) -> bool {
        matches!(self, NegotiationState::Finalized | NegotiationState::Terminated)
    }
}

impl std::fmt::Display for NegotiationState {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            NegotiationState::Requested => "REQUESTED",
            NegotiationState::Offered => "OFFERED",
            NegotiationState::Accepted => "ACCEPTED",
            NegotiationState::Agreed => "AGREED",
            NegotiationState::Finalized => "FINALIZED",
            NegotiationState::Terminated => "TERMINATED",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TerminationReason {
    PolicyDenied,
    Expired,
    TerminatedByConsumer,
    TerminatedByProvider,
}

impl std::fmt::Display for TerminationReason {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            TerminationReason::PolicyDenied => "policy-denied",
            TerminationReason::Expired => "expired",
            TerminationReason::TerminatedByConsumer => "terminated-by-consumer",
            TerminationReason::TerminatedByProvider => "terminated-by-provider",
        })
    }
}

fn denial(reason: DenyReason) -> TerminationReason {
    match reason {
        DenyReason::Expired => TerminationReason::Expired,
        DenyReason::NotAllowed | DenyReason::Rate => TerminationReason::PolicyDenied,
    }
}

/// Agreement record: the policy as it stood when the provider agreed.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Agreement {
    pub agreement_id: String,
    pub asset_id: String,
    pub provider_id: String,
    pub consumer_id: String,
    pub policy: UsagePolicy,
    pub timestamp: EpochSecs,
}

/// Outcome of applying one message.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Applied {
    Moved { from: NegotiationState, to: NegotiationState },
    /// Duplicate ACCEPTED while already accepted.
    Ignored,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContractNegotiation {
    pub negotiation_id: String,
    pub asset_id: String,
    pub provider_id: String,
    pub consumer_id: String,
    pub state: NegotiationState,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub agreement: Option<Agreement>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub termination_reason: Option<TerminationReason>,
    /// State changes so far, counting the initial REQUESTED.
    pub transitions: u32,
    /// Timestamps of transfer requests, for rate enforcement.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub transfer_requests: Vec<EpochSecs>,
}

impl ContractNegotiation {
    /// A consumer's request. The asset policy is checked straight away; an
    /// excluded consumer gets a negotiation that is already TERMINATED.
    pub fn request(
        negotiation_id: impl Into<String>,
        asset_id: impl Into<String>,
        provider_id: impl Into<String>,
        consumer_id: impl Into<String>,
        policy: &UsagePolicy,
        now: EpochSecs,
    ) -> Self {
        let mut n = Self {
            negotiation_id: negotiation_id.into(),
            asset_id: asset_id.into(),
            provider_id: provider_id.into(),
            consumer_id: consumer_id.into(),
            state: NegotiationState::Requested,
            agreement: None,
            termination_reason: None,
            transitions: 1,
            transfer_requests: Vec::new(),
        };
        if let PolicyDecision::Deny(r) = enforce_policy(policy, &n.consumer_id, now, 0) {
            n.terminate(denial(r));
        }
        n
    }

    pub fn role_of(&self, participant: &str) -> Option<Role> {
        if participant == self.provider_id {
            Some(Role::Provider)
        } else if participant == self.consumer_id {
            Some(Role::Consumer)
        } else {
            None
        }
    }

    fn terminate(&mut self, reason: TerminationReason) {
        self.state = NegotiationState::Terminated;
        self.agreement = None;
        self.termination_reason = Some(reason);
        self.transitions += 1;
    }

    fn advance(&mut self, to: NegotiationState) -> Applied {
        let from = self.state;
        self.state = to;
        self.transitions += 1;
        Applied::Moved { from, to }
    }

    /// Applies the edge `target` sent by `sender`. Protocol violations leave
    /// the negotiation untouched. `current_policy` is the catalog's policy at
    /// this instant; it is snapshotted into the agreement on AGREED.
    pub fn apply(
        &mut self,
        target: NegotiationState,
        sender: &str,
        current_policy: &UsagePolicy,
        now: EpochSecs,
    ) -> Result<Applied, ProtocolViolation> {
        use NegotiationState as S;
        let role = self.role_of(sender).ok_or_else(|| ProtocolViolation::UnknownSender(sender.to_string()))?;
        let state = self.state;
        let violation = move || ProtocolViolation::OutOfOrder { state: state.to_string(), message: target.to_string() };
        if self.state.is_final() {
            return Err(violation());
        }
        let expect = move |want: Role| {
            if role == want {
                Ok(())
            } else {
                Err(ProtocolViolation::WrongRole { role, message: target.to_string() })
            }
        };
        match (self.state, target) {
            (from, S::Terminated) => {
                self.terminate(match role {
                    Role::Consumer => TerminationReason::TerminatedByConsumer,
                    Role::Provider => TerminationReason::TerminatedByProvider,
                });
                Ok(Applied::Moved { from, to: S::Terminated })
            }
            (S::Requested, S::Offered) => {
                expect(Role::Provider)?;
                Ok(self.advance(S::Offered))
            }
            (S::Offered, S::Accepted) => {
                expect(Role::Consumer)?;
                Ok(self.advance(S::Accepted))
            }
            (S::Accepted, S::Accepted) if role == Role::Consumer => Ok(Applied::Ignored),
            (S::Accepted, S::Agreed) => {
                expect(Role::Provider)?;
                if let PolicyDecision::Deny(r) = enforce_policy(current_policy, &self.consumer_id, now, 0) {
                    let from = self.state;
                    self.terminate(denial(r));
                    return Ok(Applied::Moved { from, to: S::Terminated });
                }
                self.agreement = Some(Agreement {
                    agreement_id: format!("{}-agreement", self.negotiation_id),
                    asset_id: self.asset_id.clone(),
                    provider_id: self.provider_id.clone(),
                    consumer_id: self.consumer_id.clone(),
                    policy: current_policy.clone(),
                    timestamp: now,
                });
                Ok(self.advance(S::Agreed))
            }
            (S::Agreed, S::Finalized) => {
                expect(Role::Provider)?;
                Ok(self.advance(S::Finalized))
            }
            _ => Err(violation()),
        }
    }
}
