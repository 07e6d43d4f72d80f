use std::fmt;

use serde::{Serialize, Serializer};

use crate::codec::{Canonical, CodecError, Reader, Writer};
use crate::crypto::{sign, Digest, SecretKey, Signature};
use crate::identity::Certificate;
use crate::ledger::state::ReadWriteSet;

/// Renders opaque bytes as text when they are UTF-8 (chaincode values are
/// JSON), hex otherwise. Only used for human-facing dumps.
pub(crate) fn bytes_as_text<S: Serializer>(v: &[u8], s: S) -> Result<S::Ok, S::Error> {
    match std::str::from_utf8(v) {
        Ok(text) => s.serialize_str(text),
        Err(_) => s.serialize_str(&format!("0x{}", hex::encode(v))),
    }
}

fn opt_bytes_as_text<S: Serializer>(v: &Option<Vec<u8>>, s: S) -> Result<S::Ok, S::Error> {
    match v {
        Some(v) => bytes_as_text(v, s),
        None => s.serialize_none(),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Proposal {
    pub function: String,
    pub args: Vec<String>,
    pub creator: Certificate,
    /// Client-side clock; the only timestamp chaincode may observe.
    pub timestamp_ms: u64,
    #[serde(serialize_with = "nonce_hex")]
    pub nonce: [u8; 16],
}

fn nonce_hex<S: Serializer>(v: &[u8; 16], s: S) -> Result<S::Ok, S::Error> {
    s.serialize_str(&hex::encode(v))
}

impl Proposal {
    pub fn tx_id(&self) -> Digest {
        let mut w = Writer::new();
        w.put(&self.creator)
            .fixed(&self.nonce)
            .str(&self.function)
            .list(&self.args, |w, a| {
                w.str(a);
            });
        Digest::of(w.as_slice())
    }

    pub fn sign(self, key: &SecretKey) -> SignedProposal {
        let signature = sign(key, &self.to_canonical_bytes());
        SignedProposal {
            proposal: self,
            signature,
        }
    }
}

impl Canonical for Proposal {
    fn encode(&self, w: &mut Writer) {
        w.str(&self.function)
            .list(&self.args, |w, a| {
                w.str(a);
            })
            .put(&self.creator)
            .u64(self.timestamp_ms)
            .fixed(&self.nonce);
    }

    fn decode(r: &mut Reader<'_>) -> Result<Self, CodecError> {
        Ok(Proposal {
            function: r.string()?,
            args: r.list(|r| r.string())?,
            creator: r.get()?,
            timestamp_ms: r.u64()?,
            nonce: r.array()?,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SignedProposal {
    pub proposal: Proposal,
    pub signature: Signature,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ChaincodeEvent {
    pub name: String,
    #[serde(serialize_with = "bytes_as_text")]
    pub payload: Vec<u8>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct ProposalResponse {
    #[serde(serialize_with = "bytes_as_text")]
    pub payload: Vec<u8>,
    #[serde(serialize_with = "rwset_text")]
    pub rwset: ReadWriteSet,
    pub events: Vec<ChaincodeEvent>,
}

fn rwset_text<S: Serializer>(rw: &ReadWriteSet, s: S) -> Result<S::Ok, S::Error> {
    #[derive(Serialize)]
    struct W<'a> {
        key: &'a str,
        #[serde(serialize_with = "opt_bytes_as_text")]
        value: &'a Option<Vec<u8>>,
    }
    #[derive(Serialize)]
    struct View<'a> {
        reads: &'a [crate::ledger::state::KvRead],
        writes: Vec<W<'a>>,
    }
    View {
        reads: &rw.reads,
        writes: rw
            .writes
            .iter()
            .map(|w| W {
                key: &w.key,
                value: &w.value,
            })
            .collect(),
    }
    .serialize(s)
}

impl ProposalResponse {
    /// The digest every endorser signs: binds the response to its tx id.
    pub fn digest(&self, tx_id: &Digest) -> Digest {
        let mut w = Writer::new();
        w.put(tx_id).put(self);
        Digest::of(w.as_slice())
    }
}

impl Canonical for ProposalResponse {
    fn encode(&self, w: &mut Writer) {
        w.bytes(&self.payload).put(&self.rwset).list(&self.events, |w, e| {
            w.str(&e.name).bytes(&e.payload);
        });
    }

    fn decode(r: &mut Reader<'_>) -> Result<Self, CodecError> {
        Ok(ProposalResponse {
            payload: r.bytes()?,
            rwset: r.get()?,
            events: r.list(|r| {
                Ok(ChaincodeEvent {
                    name: r.string()?,
                    payload: r.bytes()?,
                })
            })?,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Endorsement {
    pub endorser: Certificate,
    pub response_digest: Digest,
    pub signature: Signature,
}

impl Canonical for Endorsement {
    fn encode(&self, w: &mut Writer) {
        w.put(&self.endorser)
            .put(&self.response_digest)
            .put(&self.signature);
    }

    fn decode(r: &mut Reader<'_>) -> Result<Self, CodecError> {
        Ok(Endorsement {
            endorser: r.get()?,
            response_digest: r.get()?,
            signature: r.get()?,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Transaction {
    pub tx_id: Digest,
    pub proposal: Proposal,
    pub client_signature: Signature,
    pub response: ProposalResponse,
    pub endorsements: Vec<Endorsement>,
}

impl Canonical for Transaction {
    fn encode(&self, w: &mut Writer) {
        w.put(&self.tx_id)
            .put(&self.proposal)
            .put(&self.client_signature)
            .put(&self.response)
            .list(&self.endorsements, |w, e| {
                w.put(e);
            });
    }

    fn decode(r: &mut Reader<'_>) -> Result<Self, CodecError> {
        Ok(Transaction {
            tx_id: r.get()?,
            proposal: r.get()?,
            client_signature: r.get()?,
            response: r.get()?,
            endorsements: r.list(|r| r.get())?,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum InvalidReason {
    /// Creator certificate does not verify or is not a client.
    BadCreator,
    /// A client or endorser signature, or the tx id, does not check out.
    BadSignature,
    PolicyUnmet,
    ReadConflict,
    DuplicateTxId,
}

impl InvalidReason {
    const ALL: [InvalidReason; 5] = [
        InvalidReason::BadCreator,
        InvalidReason::BadSignature,
        InvalidReason::PolicyUnmet,
        InvalidReason::ReadConflict,
        InvalidReason::DuplicateTxId,
    ];
}

impl fmt::Display for InvalidReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            InvalidReason::BadCreator => "BadCreator",
            InvalidReason::BadSignature => "BadSignature",
            InvalidReason::PolicyUnmet => "PolicyUnmet",
            InvalidReason::ReadConflict => "ReadConflict",
            InvalidReason::DuplicateTxId => "DuplicateTxId",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Validation {
    Valid,
    Invalid(InvalidReason),
}

impl Validation {
    pub fn is_valid(&self) -> bool {
        matches!(self, Validation::Valid)
    }
}

impl Canonical for Validation {
    fn encode(&self, w: &mut Writer) {
        match self {
            Validation::Valid => w.u8(0),
            Validation::Invalid(r) => w.u8(1).u8(*r as u8),
        };
    }

    fn decode(r: &mut Reader<'_>) -> Result<Self, CodecError> {
        match r.u8()? {
            0 => Ok(Validation::Valid),
            1 => {
                let tag = r.u8()?;
                InvalidReason::ALL
                    .get(tag as usize)
                    .map(|r| Validation::Invalid(*r))
                    .ok_or(CodecError::InvalidTag {
                        what: "invalid reason",
                        tag,
                    })
            }
            tag => Err(CodecError::InvalidTag {
                what: "validation",
                tag,
            }),
        }
    }
}

/// An ordered batch of transactions as cut by the ordering service.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Block {
    pub number: u64,
    pub timestamp_ms: u64,
    pub prev_hash: Digest,
    pub transactions: Vec<Transaction>,
    pub hash: Digest,
}

impl Block {
    pub fn new(number: u64, timestamp_ms: u64, prev_hash: Digest, transactions: Vec<Transaction>) -> Self {
        let mut b = Block {
            number,
            timestamp_ms,
            prev_hash,
            transactions,
            hash: Digest::ZERO,
        };
        b.hash = b.compute_hash();
        b
    }

    pub fn genesis() -> Self {
        Block::new(0, 0, Digest::ZERO, Vec::new())
    }

    /// SHA-256 over `(number, timestamp_ms, prev_hash, transactions)`.
    pub fn compute_hash(&self) -> Digest {
        let mut w = Writer::new();
        w.u64(self.number)
            .u64(self.timestamp_ms)
            .put(&self.prev_hash)
            .list(&self.transactions, |w, t| {
                w.put(t);
            });
        Digest::of(w.as_slice())
    }
}

impl Canonical for Block {
    fn encode(&self, w: &mut Writer) {
        w.u64(self.number)
            .u64(self.timestamp_ms)
            .put(&self.prev_hash)
            .list(&self.transactions, |w, t| {
                w.put(t);
            })
            .put(&self.hash);
    }

    fn decode(r: &mut Reader<'_>) -> Result<Self, CodecError> {
        Ok(Block {
            number: r.u64()?,
            timestamp_ms: r.u64()?,
            prev_hash: r.get()?,
            transactions: r.list(|r| r.get())?,
            hash: r.get()?,
        })
    }
}

/// A block as committed by a peer: the ordered block plus the per-transaction
/// validation flags, sealed by a second hash chain so the flags are
/// tamper-evident too.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct CommittedBlock {
    pub block: Block,
    pub validation: Vec<Validation>,
    pub commit_hash: Digest,
}

impl CommittedBlock {
    pub fn seal(block: Block, validation: Vec<Validation>, prev_commit_hash: &Digest) -> Self {
        let commit_hash = Self::compute_commit_hash(&block.hash, &validation, prev_commit_hash);
        CommittedBlock {
            block,
            validation,
            commit_hash,
        }
    }

    /// SHA-256 over `(prev_commit_hash, block.hash, validation)`.
    pub fn compute_commit_hash(
        block_hash: &Digest,
        validation: &[Validation],
        prev_commit_hash: &Digest,
    ) -> Digest {
        let mut w = Writer::new();
        w.put(prev_commit_hash).put(block_hash).list(validation, |w, v| {
            w.put(v);
        });
        Digest::of(w.as_slice())
    }
}

impl Canonical for CommittedBlock {
    fn encode(&self, w: &mut Writer) {
        w.put(&self.block)
            .list(&self.validation, |w, v| {
                w.put(v);
            })
            .put(&self.commit_hash);
    }

    fn decode(r: &mut Reader<'_>) -> Result<Self, CodecError> {
        Ok(CommittedBlock {
            block: r.get()?,
            validation: r.list(|r| r.get())?,
            commit_hash: r.get()?,
        })
    }
}
