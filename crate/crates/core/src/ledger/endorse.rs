use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::codec::Canonical;
use crate::crypto::{sign, Digest, SecretKey};
use crate::identity::{Certificate, Msp, Role, UserId};
use crate::ledger::block::{
    ChaincodeEvent, Endorsement, Proposal, ProposalResponse, SignedProposal, Transaction,
};
use crate::ledger::state::{TxSimulator, WorldState};

/// A chaincode rejection, carried back to the client in the proposal
/// response. `code` is a stable machine-readable name.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, Error)]
#[error("{code}: {message}")]
pub struct ChaincodeFailure {
    pub code: String,
    pub message: String,
}

/// Smart-contract code installed on every peer.
pub trait Chaincode {
    fn invoke(&self, ctx: &mut InvocationContext<'_>) -> Result<Vec<u8>, ChaincodeFailure>;
}

/// Everything an invocation can see. The caller is known only through its
/// certificate; there is no way to pass an identity as an argument.
pub struct InvocationContext<'a> {
    creator: &'a Certificate,
    function: &'a str,
    args: &'a [String],
    tx_id: Digest,
    timestamp_ms: u64,
    sim: TxSimulator<'a>,
    events: Vec<ChaincodeEvent>,
}

impl fmt::Debug for InvocationContext<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("InvocationContext")
            .field("function", &self.function)
            .field("tx_id", &self.tx_id)
            .finish_non_exhaustive()
    }
}

impl<'a> InvocationContext<'a> {
    pub fn new(
        state: &'a WorldState,
        creator: &'a Certificate,
        function: &'a str,
        args: &'a [String],
        tx_id: Digest,
        timestamp_ms: u64,
    ) -> Self {
        InvocationContext {
            creator,
            function,
            args,
            tx_id,
            timestamp_ms,
            sim: TxSimulator::new(state),
            events: Vec::new(),
        }
    }

    pub fn creator(&self) -> &Certificate {
        self.creator
    }

    pub fn caller_id(&self) -> UserId {
        self.creator.user_id()
    }

    pub fn function(&self) -> &str {
        self.function
    }

    pub fn args(&self) -> &[String] {
        self.args
    }

    pub fn tx_id(&self) -> Digest {
        self.tx_id
    }

    pub fn timestamp_ms(&self) -> u64 {
        self.timestamp_ms
    }

    pub fn get_state(&mut self, key: &str) -> Option<Vec<u8>> {
        self.sim.get(key)
    }

    pub fn put_state(&mut self, key: &str, value: Vec<u8>) {
        self.sim.put(key, value)
    }

    pub fn del_state(&mut self, key: &str) {
        self.sim.delete(key)
    }

    pub fn scan_prefix(&mut self, prefix: &str) -> Vec<(String, Vec<u8>)> {
        self.sim.scan_prefix(prefix)
    }

    pub fn emit(&mut self, name: &str, payload: Vec<u8>) {
        self.events.push(ChaincodeEvent {
            name: name.to_owned(),
            payload,
        });
    }

    pub fn finish(self, payload: Vec<u8>) -> ProposalResponse {
        ProposalResponse {
            payload,
            rwset: self.sim.into_rwset(),
            events: self.events,
        }
    }
}

/// Runs a proposal against a snapshot without any signature checks.
pub fn simulate<C: Chaincode + ?Sized>(
    chaincode: &C,
    state: &WorldState,
    signed: &SignedProposal,
) -> Result<ProposalResponse, ChaincodeFailure> {
    let p = &signed.proposal;
    let mut ctx = InvocationContext::new(
        state,
        &p.creator,
        &p.function,
        &p.args,
        p.tx_id(),
        p.timestamp_ms,
    );
    let payload = chaincode.invoke(&mut ctx)?;
    Ok(ctx.finish(payload))
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EndorseError {
    #[error("creator certificate does not verify")]
    BadCreator,
    #[error("only client identities may invoke chaincode")]
    NotAClient,
    #[error("proposal signature does not verify")]
    BadSignature,
    #[error("chaincode rejected proposal: {0}")]
    Chaincode(ChaincodeFailure),
}

/// A client's signing identity: the certificate and its secret key.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ClientIdentity {
    pub certificate: Certificate,
    pub key: SecretKey,
}

impl ClientIdentity {
    pub fn user_id(&self) -> UserId {
        self.certificate.user_id()
    }

    /// Builds and signs a proposal. The nonce makes every tx id unique.
    pub fn propose(
        &self,
        function: &str,
        args: Vec<String>,
        timestamp_ms: u64,
        nonce: [u8; 16],
    ) -> SignedProposal {
        Proposal {
            function: function.to_owned(),
            args,
            creator: self.certificate.clone(),
            timestamp_ms,
            nonce,
        }
        .sign(&self.key)
    }
}

/// A peer's signing identity.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EndorserIdentity {
    pub certificate: Certificate,
    pub key: SecretKey,
}

impl EndorserIdentity {
    /// Verifies the proposal, executes it against `state` and signs the
    /// resulting response digest.
    pub fn endorse<C: Chaincode + ?Sized>(
        &self,
        msp: &Msp,
        state: &WorldState,
        chaincode: &C,
        signed: &SignedProposal,
    ) -> Result<(ProposalResponse, Endorsement), EndorseError> {
        check_proposal(msp, signed)?;
        let response = simulate(chaincode, state, signed).map_err(EndorseError::Chaincode)?;
        let digest = response.digest(&signed.proposal.tx_id());
        let endorsement = Endorsement {
            endorser: self.certificate.clone(),
            response_digest: digest,
            signature: sign(&self.key, digest.as_bytes()),
        };
        Ok((response, endorsement))
    }
}

/// Creator must be a verified client and must have signed the proposal.
pub fn check_proposal(msp: &Msp, signed: &SignedProposal) -> Result<(), EndorseError> {
    let creator = &signed.proposal.creator;
    if !msp.verify_certificate(creator) {
        return Err(EndorseError::BadCreator);
    }
    if creator.role != Role::Client {
        return Err(EndorseError::NotAClient);
    }
    if !msp.verify_signature(
        &creator.public_key,
        &signed.proposal.to_canonical_bytes(),
        &signed.signature,
    ) {
        return Err(EndorseError::BadSignature);
    }
    Ok(())
}

/// Packages an endorsed proposal for ordering.
pub fn assemble(
    signed: SignedProposal,
    response: ProposalResponse,
    endorsements: Vec<Endorsement>,
) -> Transaction {
    Transaction {
        tx_id: signed.proposal.tx_id(),
        proposal: signed.proposal,
        client_signature: signed.signature,
        response,
        endorsements,
    }
}
