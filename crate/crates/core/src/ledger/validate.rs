use std::collections::{BTreeSet, HashSet};

use serde::{Deserialize, Serialize};

use crate::codec::Canonical;
use crate::crypto::Digest;
use crate::identity::{Msp, Role, UserId};
use crate::ledger::block::{InvalidReason, Transaction, Validation};
use crate::ledger::state::WorldState;

/// Which endorsements make a transaction valid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EndorsementPolicy {
    /// Every channel peer must endorse.
    AllPeers,
    /// At least `n` distinct channel peers.
    AnyN(usize),
    /// One endorsement, from whichever peer the client rotated to.
    LoadBalanced,
}

impl EndorsementPolicy {
    pub fn required(&self, members: usize) -> usize {
        match self {
            EndorsementPolicy::AllPeers => members,
            EndorsementPolicy::AnyN(n) => *n,
            EndorsementPolicy::LoadBalanced => 1,
        }
    }

    pub fn is_satisfied(&self, endorsers: &BTreeSet<UserId>, members: &BTreeSet<UserId>) -> bool {
        let counted = endorsers.intersection(members).count();
        match self {
            EndorsementPolicy::AllPeers => !members.is_empty() && counted == members.len(),
            other => counted >= other.required(members.len()).max(1),
        }
    }
}

/// Commit-time validation for one channel.
#[derive(Debug, Clone, Copy)]
pub struct Validator<'a> {
    pub msp: &'a Msp,
    pub policy: EndorsementPolicy,
    /// Peer identities whose endorsements count toward the policy.
    pub members: &'a BTreeSet<UserId>,
}

impl<'a> Validator<'a> {
    pub fn new(msp: &'a Msp, policy: EndorsementPolicy, members: &'a BTreeSet<UserId>) -> Self {
        Validator {
            msp,
            policy,
            members,
        }
    }

    /// Creator, signatures and policy; everything that does not depend on
    /// world state.
    pub fn check_endorsements(&self, tx: &Transaction) -> Result<(), InvalidReason> {
        let creator = &tx.proposal.creator;
        if creator.role != Role::Client || !self.msp.verify_certificate(creator) {
            return Err(InvalidReason::BadCreator);
        }
        if tx.proposal.tx_id() != tx.tx_id
            || !self.msp.verify_signature(
                &creator.public_key,
                &tx.proposal.to_canonical_bytes(),
                &tx.client_signature,
            )
        {
            return Err(InvalidReason::BadSignature);
        }
        let digest = tx.response.digest(&tx.tx_id);
        let mut endorsers = BTreeSet::new();
        for e in &tx.endorsements {
            let id = e.endorser.user_id();
            let ok = e.response_digest == digest
                && e.endorser.role == Role::Peer
                && self.members.contains(&id)
                && self.msp.verify_certificate(&e.endorser)
                && self.msp.verify_signature(&e.endorser.public_key, digest.as_bytes(), &e.signature);
            if !ok {
                return Err(InvalidReason::BadSignature);
            }
            endorsers.insert(id);
        }
        if !self.policy.is_satisfied(&endorsers, self.members) {
            return Err(InvalidReason::PolicyUnmet);
        }
        Ok(())
    }

    /// Full validation of `tx` against the state as left by every earlier
    /// valid transaction. `seen` holds tx ids already in the chain.
    pub fn validate_transaction(
        &self,
        tx: &Transaction,
        state: &WorldState,
        seen: &HashSet<Digest>,
    ) -> Validation {
        if seen.contains(&tx.tx_id) {
            return Validation::Invalid(InvalidReason::DuplicateTxId);
        }
        if let Err(reason) = self.check_endorsements(tx) {
            return Validation::Invalid(reason);
        }
        if !state.reads_current(&tx.response.rwset) {
            return Validation::Invalid(InvalidReason::ReadConflict);
        }
        Validation::Valid
    }
}
