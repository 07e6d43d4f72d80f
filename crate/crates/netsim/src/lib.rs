//! Simulated network of peers, an ordering service and clients.
//!
//! Every node is a single-server FIFO queue driven by one discrete-event
//! loop with a seeded RNG, so a run is a pure function of its topology,
//! seed and client inputs. The same loop can be paced against the host
//! clock (see [`ClockMode::Wall`]).
//!
//! A submission goes through the usual execute, order, validate flow:
//!
//! 1. the client sends the signed proposal to each endorser chosen by the
//!    policy, one every `client_coordination_ms`;
//! 2. each endorser simulates it against its own committed state;
//! 3. once all responses are in and agree, the transaction goes to the
//!    orderer, which batches transactions into blocks;
//! 4. every peer validates and commits each block, and the submitter's
//!    event peer reports the outcome.

mod cutter;
mod network;
mod topology;
mod trace;

pub use cutter::{BlockCutter, CutReason, PushOutcome};
pub use network::{
    ClockMode, Network, NetworkIdentities, Notification, SubmissionId, SubscriptionId, EPOCH_MS,
};
pub use topology::{OrdererSpec, OrgSpec, PeerTiming, Topology, MIN_PEERS_PER_ORG};
pub use trace::{TraceKind, TraceRecord};

use hailchain_core::identity::IdentityError;
use hailchain_core::ledger::{ChaincodeFailure, EndorseError, LedgerError};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum NetError {
    #[error("invalid topology: {0}")]
    InvalidTopology(String),
    #[error("unknown organization {0}")]
    UnknownOrg(String),
    #[error("replayed block {0} validated differently")]
    ReplayMismatch(u64),
    #[error(transparent)]
    Identity(#[from] IdentityError),
    #[error(transparent)]
    Ledger(#[from] LedgerError),
}

/// Why a submission never reached the orderer.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SubmitError {
    #[error("{0}")]
    Chaincode(ChaincodeFailure),
    /// Endorsers returned different results, typically because one of them
    /// had not yet committed a block the others had.
    #[error("endorsement mismatch: endorsers disagree on the result")]
    EndorsementMismatch,
    #[error("proposal rejected: {0}")]
    Rejected(String),
}

impl From<EndorseError> for SubmitError {
    fn from(e: EndorseError) -> Self {
        match e {
            EndorseError::Chaincode(f) => SubmitError::Chaincode(f),
            other => SubmitError::Rejected(other.to_string()),
        }
    }
}
