use serde::Serialize;

use crate::cutter::CutReason;

/// One line of the JSONL trace.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TraceRecord {
    pub t_us: u64,
    #[serde(flatten)]
    pub kind: TraceKind,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum TraceKind {
    Submitted {
        submission: u64,
        tx_id: String,
        function: String,
        endorsers: usize,
    },
    Endorsed {
        submission: u64,
        peer: usize,
        ok: bool,
    },
    /// All responses agreed; the transaction is on its way to the orderer.
    Endorsements {
        submission: u64,
    },
    EndorsementFailed {
        submission: u64,
        error: String,
    },
    Acked {
        submission: u64,
    },
    BlockCut {
        block: u64,
        size: usize,
        reason: CutReason,
        hash: String,
    },
    Committed {
        peer: usize,
        block: u64,
        valid: usize,
        invalid: usize,
        state_hash: String,
    },
    Notified {
        submission: u64,
        valid: bool,
    },
    EventDelivered {
        subscription: u64,
        name: String,
    },
}
