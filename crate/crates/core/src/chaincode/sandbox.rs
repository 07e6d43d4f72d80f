//! Serial in-process channel: one org, a few peers sharing one ledger,
//! every transaction endorsed by all of them and committed immediately.
//!
//! Used by tests and examples that care about chaincode semantics rather
//! than timing. Transactions can also be endorsed first and committed
//! together to reproduce stale-read conflicts.

use std::collections::BTreeSet;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::chaincode::contract::RideContract;
use crate::identity::{IdentityError, Msp, Role, UserId};
use crate::ledger::{
    assemble, Block, ChaincodeEvent, ClientIdentity, CommitReport, EndorseError, EndorsementPolicy,
    EndorserIdentity, Ledger, LedgerError, Transaction, Validation, Validator,
};

pub const SANDBOX_ORG: &str = "Org2PeerOrgMSP";

#[derive(Debug, Error)]
pub enum SandboxError {
    #[error(transparent)]
    Identity(#[from] IdentityError),
    #[error(transparent)]
    Endorse(#[from] EndorseError),
    #[error(transparent)]
    Ledger(#[from] LedgerError),
    #[error("transaction invalidated: {0:?}")]
    Invalidated(Validation),
}

/// Result of a committed invocation.
#[derive(Debug, Clone)]
pub struct Outcome {
    pub payload: Vec<u8>,
    pub events: Vec<ChaincodeEvent>,
    pub tx_id: crate::crypto::Digest,
    pub block: u64,
}

pub struct Sandbox {
    msp: Msp,
    peers: Vec<EndorserIdentity>,
    members: BTreeSet<UserId>,
    ledger: Ledger,
    contract: RideContract,
    rng: ChaCha8Rng,
    clock_ms: u64,
}

impl Sandbox {
    pub fn new(seed: u64) -> Self {
        Self::with_contract(seed, RideContract::default())
    }

    pub fn with_contract(seed: u64, contract: RideContract) -> Self {
        let mut msp = Msp::with_seed(seed);
        msp.create_org(SANDBOX_ORG).expect("fresh msp");
        let peers: Vec<EndorserIdentity> = (0..2)
            .map(|i| {
                let (certificate, key) = msp
                    .issue_certificate(SANDBOX_ORG, &format!("peer{i}"), Role::Peer)
                    .expect("fresh org");
                EndorserIdentity { certificate, key }
            })
            .collect();
        let members = peers.iter().map(|p| p.certificate.user_id()).collect();
        Sandbox {
            msp,
            peers,
            members,
            ledger: Ledger::new(),
            contract,
            rng: ChaCha8Rng::seed_from_u64(seed ^ 0x5a5a),
            clock_ms: 1_700_000_000_000,
        }
    }

    pub fn msp(&self) -> &Msp {
        &self.msp
    }

    pub fn ledger(&self) -> &Ledger {
        &self.ledger
    }

    pub fn contract(&self) -> &RideContract {
        &self.contract
    }

    pub fn client(&mut self, local_id: &str) -> Result<ClientIdentity, SandboxError> {
        let (certificate, key) = self.msp.issue_certificate(SANDBOX_ORG, local_id, Role::Client)?;
        Ok(ClientIdentity { certificate, key })
    }

    /// Executes against the current state on every peer without ordering.
    pub fn endorse(
        &mut self,
        client: &ClientIdentity,
        function: &str,
        args: &[&str],
    ) -> Result<Transaction, SandboxError> {
        self.clock_ms += 1;
        let mut nonce = [0u8; 16];
        self.rng.fill_bytes(&mut nonce);
        let signed = client.propose(
            function,
            args.iter().map(|a| a.to_string()).collect(),
            self.clock_ms,
            nonce,
        );
        let mut response = None;
        let mut endorsements = Vec::new();
        for peer in &self.peers {
            let (r, e) = peer.endorse(&self.msp, self.ledger.state(), &self.contract, &signed)?;
            response = Some(r);
            endorsements.push(e);
        }
        Ok(assemble(signed, response.expect("at least one peer"), endorsements))
    }

    /// Orders the given transactions into one block and commits it.
    pub fn commit(&mut self, txs: Vec<Transaction>) -> Result<CommitReport, SandboxError> {
        let head = self.ledger.head().block.hash;
        let block = Block::new(self.ledger.height(), self.clock_ms, head, txs);
        let validator = Validator::new(&self.msp, EndorsementPolicy::AllPeers, &self.members);
        Ok(self.ledger.append_block(block, &validator)?)
    }

    /// Endorses and commits in one step. Chaincode rejections come back as
    /// `SandboxError::Endorse(EndorseError::Chaincode(..))`.
    pub fn invoke(
        &mut self,
        client: &ClientIdentity,
        function: &str,
        args: &[&str],
    ) -> Result<Outcome, SandboxError> {
        let tx = self.endorse(client, function, args)?;
        let outcome = Outcome {
            payload: tx.response.payload.clone(),
            events: tx.response.events.clone(),
            tx_id: tx.tx_id,
            block: self.ledger.height(),
        };
        let report = self.commit(vec![tx])?;
        match &report.validation[0] {
            Validation::Valid => Ok(outcome),
            other => Err(SandboxError::Invalidated(*other)),
        }
    }

    /// Evaluates without committing.
    pub fn query(
        &mut self,
        client: &ClientIdentity,
        function: &str,
        args: &[&str],
    ) -> Result<Vec<u8>, SandboxError> {
        Ok(self.endorse(client, function, args)?.response.payload)
    }
}

impl SandboxError {
    /// The chaincode error code, if this was a chaincode rejection.
    pub fn chaincode_code(&self) -> Option<&str> {
        match self {
            SandboxError::Endorse(EndorseError::Chaincode(f)) => Some(&f.code),
            _ => None,
        }
    }
}
