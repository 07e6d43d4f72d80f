//! Block cutting checked against an independent queue model of the
//! orderer, over random submission schedules.

use hailchain_core::chaincode::function as f;
use hailchain_core::crypto::Digest;
use hailchain_netsim::{CutReason, Network, Notification, Topology, TraceKind};
use proptest::prelude::*;

const MAX: usize = 10;
const TIMEOUT_US: u64 = 2_000_000;
const SERVICE_US: u64 = 500;
const LINK_US: u64 = 1_000;

/// Reference: FIFO single server, then size-or-timeout batching. A timer
/// that expires at the same instant as an arrival fires first.
fn reference(mut sent: Vec<u64>) -> Vec<(usize, CutReason, u64)> {
    sent.sort_unstable();
    let mut done = Vec::new();
    let mut free_at = 0;
    for s in sent {
        let start = (s + LINK_US).max(free_at);
        free_at = start + SERVICE_US;
        done.push(free_at);
    }
    let mut blocks = Vec::new();
    let mut batch: Vec<u64> = Vec::new();
    for d in done {
        if let Some(&first) = batch.first() {
            if d >= first + TIMEOUT_US {
                blocks.push((batch.len(), CutReason::Timeout, first + TIMEOUT_US));
                batch.clear();
            }
        }
        batch.push(d);
        if batch.len() == MAX {
            blocks.push((MAX, CutReason::Size, d));
            batch.clear();
        }
    }
    if let Some(&first) = batch.first() {
        blocks.push((batch.len(), CutReason::Timeout, first + TIMEOUT_US));
    }
    blocks
}

fn run(offsets_ms: &[u64], seed: u64) -> (Vec<u64>, Vec<(usize, CutReason, u64)>) {
    let mut net = Network::build(Topology::uniform(2, 2), seed).unwrap();
    let clients: Vec<_> = (0..offsets_ms.len())
        .map(|i| net.issue_client("Org2PeerOrgMSP", &format!("c{i}")).unwrap())
        .collect();
    for (i, ms) in offsets_ms.iter().enumerate() {
        net.schedule_timer(ms * 1000, i as u64);
    }
    let salt = "000102030405060708090a0b0c0d0e0f";
    while let Some(n) = net.poll() {
        if let Notification::Timer { token } = n {
            let c = &clients[token as usize];
            net.submit(c, f::REGISTER_USER, vec![Digest::of(b"pw").to_hex(), salt.into()]);
        }
    }
    let mut sent = Vec::new();
    let mut cuts = Vec::new();
    for r in net.trace() {
        match r.kind {
            TraceKind::Endorsements { .. } => sent.push(r.t_us),
            TraceKind::BlockCut { size, reason, .. } => cuts.push((size, reason, r.t_us)),
            _ => {}
        }
    }
    (sent, cuts)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn blocks_match_reference_queue(
        offsets in prop::collection::vec(0u64..6_000, 1..45),
        seed in 0u64..1000,
    ) {
        let (sent, cuts) = run(&offsets, seed);
        prop_assert_eq!(sent.len(), offsets.len());
        for (size, reason, _) in &cuts {
            // Exactly one of: full block, or a short block cut by timeout.
            prop_assert!((*size == MAX) != (*reason == CutReason::Timeout && *size < MAX));
        }
        prop_assert_eq!(cuts, reference(sent));
    }
}

#[test]
fn reference_agrees_on_the_textbook_case() {
    // 25 at once: ten, ten, then five after the timeout.
    let r = reference(vec![0; 25]);
    let sizes: Vec<_> = r.iter().map(|b| (b.0, b.1)).collect();
    assert_eq!(
        sizes,
        [(10, CutReason::Size), (10, CutReason::Size), (5, CutReason::Timeout)]
    );
    let (sent, cuts) = run(&[0; 25], 1);
    assert_eq!(cuts, reference(sent));
}
