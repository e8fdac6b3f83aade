// SPDX-License-Identifier: Apache-2.0

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::domain::EpochSecs;

/// Access rules attached to an asset. An empty participant set denies everyone.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UsagePolicy {
    #[serde(default)]
    pub allowed_participants: BTreeSet<String>,
    pub purpose: String,
    /// Epoch seconds after which the policy no longer grants access.
    #[serde(default)]
    pub expiry: Option<EpochSecs>,
    /// Requests per minute.
    #[serde(default)]
    pub max_request_rate: Option<u32>,
}

impl UsagePolicy {
    pub fn allow(participants: impl IntoIterator<Item = impl Into<String>>, purpose: impl Into<String>) -> Self {
        Self {
            allowed_participants: participants.into_iter().map(Into::into).collect(),
            purpose: purpose.into(),
            expiry: None,
            max_request_rate: None,
        }
    }

    pub fn deny_all(purpose: impl Into<String>) -> Self {
        Self::allow(Vec::<String>::new(), purpose)
    }

    pub fn with_expiry(mut self, expiry: EpochSecs) -> Self {
        self.expiry = Some(expiry);
        self
    }

    pub fn with_rate(mut self, per_minute: u32) -> Self {
        self.max_request_rate = Some(per_minute);
        self
    }

    /// A policy may only be created with an expiry still in the future.
    pub fn validate_at(&self, now: EpochSecs) -> Result<(), String> {
        match self.expiry {
            Some(e) if e <= now => Err(format!("policy expiry {e} is not after creation time {now}")),
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DenyReason {
    NotAllowed,
    Expired,
    Rate,
}

impl std::fmt::Display for DenyReason {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            DenyReason::NotAllowed => "not-allowed",
            DenyReason::Expired => "expired",
            DenyReason::Rate => "rate",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "decision", content = "reason", rename_all = "snake_case")]
pub enum PolicyDecision {
    Allow,
    Deny(DenyReason),
}

impl PolicyDecision {
    pub fn is_allowed(self) -> bool {
        self == PolicyDecision::Allow
    }
}

/// Membership, then expiry (`now > expiry`), then rate (`observed > cap`).
pub fn enforce_policy(policy: &UsagePolicy, participant: &str, now: EpochSecs, observed_rate: u32) -> PolicyDecision {
    if !policy.allowed_participants.contains(participant) {
        return PolicyDecision::Deny(DenyReason::NotAllowed);
    }
    if policy.expiry.is_some_and(|e| now > e) {
        return PolicyDecision::Deny(DenyReason::Expired);
    }
    if policy.max_request_rate.is_some_and(|cap| observed_rate > cap) {
        return PolicyDecision::Deny(DenyReason::Rate);
    }
    PolicyDecision::Allow
}
