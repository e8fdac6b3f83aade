// SPDX-License-Identifier: Apache-2.0

//! Miniature dataspace: asset catalog, usage policies, and the contract
//! negotiation and transfer process state machines between one provider and
//! its consumers.

pub mod catalog;
pub mod connector;
pub mod negotiation;
pub mod policy;
pub mod transfer;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use catalog::{AssetDescriptor, Catalog, CatalogFilter};
pub use connector::{negotiate, DspMessage, InMemoryBus, MessageOutcome, MessageType, ProcessRef, ProviderConnector, PumpReport, ReadingSource, StoreSource};
pub use negotiation::{Agreement, ContractNegotiation, NegotiationState, TerminationReason};
pub use policy::{enforce_policy, DenyReason, PolicyDecision, UsagePolicy};
pub use transfer::{TransferProcess, TransferState};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Provider,
    Consumer,
}

impl std::fmt::Display for Role {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Role::Provider => "provider",
            Role::Consumer => "consumer",
        })
    }
}

/// A message the state machines refuse; state is left unchanged.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ProtocolViolation {
    #[error("protocol violation: {message} is not valid in state {state}")]
    OutOfOrder { state: String, message: String },
    #[error("protocol violation: {role} may not send {message}")]
    WrongRole { role: Role, message: String },
    #[error("protocol violation: `{0}` is not a party to this process")]
    UnknownSender(String),
    #[error("protocol violation: process `{0}` already exists")]
    DuplicateProcess(String),
    #[error("transfer is {0}, not STARTED")]
    NotStarted(String),
    #[error("request rate above the agreed limit")]
    Throttled,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DataspaceError {
    #[error("asset `{0}` is already registered")]
    DuplicateAsset(String),
    #[error("invalid asset: {0}")]
    InvalidAsset(String),
    #[error("unknown asset `{0}`")]
    UnknownAsset(String),
    #[error("unknown process `{0}`")]
    UnknownProcess(String),
    #[error("negotiation `{negotiation_id}` is {state}; transfers need a FINALIZED agreement")]
    NotFinalized { negotiation_id: String, state: String },
    #[error("policy denied: {0}")]
    PolicyDenied(DenyReason),
    #[error("throttled: request rate above the agreed limit")]
    Throttled,
    #[error("malformed message: {0}")]
    BadMessage(String),
    #[error("catalog journal: {0}")]
    Journal(String),
    #[error(transparent)]
    Protocol(#[from] ProtocolViolation),
}
