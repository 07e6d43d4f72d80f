//! Hash-chained block store and versioned world state.
//!
//! Chaincode runs against an immutable [`WorldState`] snapshot through a
//! [`TxSimulator`], which records the version of every key read and buffers
//! every write into a [`ReadWriteSet`]. Endorsed transactions are ordered
//! into [`Block`]s; each peer then validates them in order with a
//! [`Validator`] and applies only the valid ones. A transaction whose reads
//! no longer match the current versions is kept in the block but flagged
//! [`InvalidReason::ReadConflict`].

mod block;
mod chain;
mod endorse;
mod state;
mod store;
mod validate;

pub use block::{
    Block, ChaincodeEvent, CommittedBlock, Endorsement, InvalidReason, Proposal,
    ProposalResponse, SignedProposal, Transaction, Validation,
};
pub use chain::{verify_chain, CommitReport, Ledger, LedgerError};
pub use endorse::{
    assemble, check_proposal, simulate, Chaincode, ChaincodeFailure, ClientIdentity, EndorseError,
    EndorserIdentity, InvocationContext,
};
pub use state::{KvRead, KvWrite, ReadWriteSet, TxSimulator, Version, VersionedValue, WorldState};
pub use store::{dump_json, BlockFile, StoreError};
pub use validate::{EndorsementPolicy, Validator};
