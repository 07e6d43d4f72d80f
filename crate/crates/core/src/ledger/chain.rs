use std::collections::HashSet;

use thiserror::Error;

use crate::crypto::Digest;
use crate::ledger::block::{Block, CommittedBlock, Validation};
use crate::ledger::state::{Version, WorldState};
use crate::ledger::validate::Validator;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LedgerError {
    #[error("block {got} does not extend the chain (expected number {expected}, prev hash {prev_hash})")]
    BrokenChain {
        expected: u64,
        got: u64,
        prev_hash: Digest,
    },
    #[error("block {0} hash does not match its contents")]
    CorruptBlock(u64),
}

/// Per-transaction outcome of committing one block.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CommitReport {
    pub block_number: u64,
    pub validation: Vec<Validation>,
}

/// One peer's replica: the committed chain plus the world state it implies.
#[derive(Debug, Clone)]
pub struct Ledger {
    blocks: Vec<CommittedBlock>,
    state: WorldState,
    tx_ids: HashSet<Digest>,
}

impl Default for Ledger {
    fn default() -> Self {
        Self::new()
    }
}

impl Ledger {
    /// A ledger holding only the genesis block.
    pub fn new() -> Self {
        Ledger {
            blocks: vec![CommittedBlock::seal(Block::genesis(), Vec::new(), &Digest::ZERO)],
            state: WorldState::new(),
            tx_ids: HashSet::new(),
        }
    }

    pub fn height(&self) -> u64 {
        self.blocks.len() as u64
    }

    pub fn head(&self) -> &CommittedBlock {
        self.blocks.last().expect("ledger always holds genesis")
    }

    pub fn blocks(&self) -> &[CommittedBlock] {
        &self.blocks
    }

    pub fn state(&self) -> &WorldState {
        &self.state
    }

    pub fn state_hash(&self) -> Digest {
        self.state.state_hash()
    }

    pub fn contains_tx(&self, tx_id: &Digest) -> bool {
        self.tx_ids.contains(tx_id)
    }

    /// Validates `candidate`'s transactions in order and appends it. Invalid
    /// transactions stay in the block, flagged, and write nothing.
    pub fn append_block(
        &mut self,
        candidate: Block,
        validator: &Validator<'_>,
    ) -> Result<CommitReport, LedgerError> {
        let head = &self.head().block;
        if candidate.number != self.height() || candidate.prev_hash != head.hash {
            return Err(LedgerError::BrokenChain {
                expected: self.height(),
                got: candidate.number,
                prev_hash: candidate.prev_hash,
            });
        }
        if candidate.compute_hash() != candidate.hash {
            return Err(LedgerError::CorruptBlock(candidate.number));
        }
        let mut validation = Vec::with_capacity(candidate.transactions.len());
        for (i, tx) in candidate.transactions.iter().enumerate() {
            let v = validator.validate_transaction(tx, &self.state, &self.tx_ids);
            if v.is_valid() {
                self.state
                    .apply(&tx.response.rwset, Version::new(candidate.number, i as u32));
            }
            // Ids of invalid transactions are burned too, except exact
            // duplicates which were already recorded.
            self.tx_ids.insert(tx.tx_id);
            validation.push(v);
        }
        let report = CommitReport {
            block_number: candidate.number,
            validation: validation.clone(),
        };
        let sealed = CommittedBlock::seal(candidate, validation, &self.head().commit_hash);
        self.blocks.push(sealed);
        Ok(report)
    }
}

/// True iff every block hash and commit hash recomputes and every block
/// links to its predecessor, starting from an all-zero genesis parent.
pub fn verify_chain(blocks: &[CommittedBlock]) -> bool {
    let mut prev_hash = Digest::ZERO;
    let mut prev_commit = Digest::ZERO;
    for (i, cb) in blocks.iter().enumerate() {
        let b = &cb.block;
        if b.number != i as u64
            || b.prev_hash != prev_hash
            || b.compute_hash() != b.hash
            || cb.validation.len() != b.transactions.len()
            || CommittedBlock::compute_commit_hash(&b.hash, &cb.validation, &prev_commit)
                != cb.commit_hash
        {
            return false;
        }
        prev_hash = b.hash;
        prev_commit = cb.commit_hash;
    }
    !blocks.is_empty()
}
