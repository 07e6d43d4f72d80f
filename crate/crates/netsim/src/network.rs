use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet, BinaryHeap, HashMap, VecDeque};
use std::io::{self, Write};
use std::time::{Duration, Instant};

use hailchain_core::chaincode::RideContract;
use hailchain_core::crypto::Digest;
use hailchain_core::identity::{Msp, Role, UserId};
use hailchain_core::ledger::{
    assemble, check_proposal, simulate, Block, Chaincode, ChaincodeEvent, ClientIdentity,
    CommittedBlock, EndorseError, Endorsement, EndorsementPolicy, EndorserIdentity, Ledger,
    ProposalResponse, SignedProposal, Transaction, Validation, Validator,
};
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::cutter::{BlockCutter, CutReason, PushOutcome};
use crate::topology::Topology;
use crate::trace::{TraceKind, TraceRecord};
use crate::{NetError, SubmitError};

/// Proposal timestamps are this epoch plus virtual time.
pub const EPOCH_MS: u64 = 1_700_000_000_000;

pub type SubmissionId = u64;
pub type SubscriptionId = u64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClockMode {
    /// Discrete-event time; runs as fast as the host allows.
    Virtual,
    /// Each event waits for its virtual time to pass on the host clock.
    Wall,
}

/// Everything needed to rebuild the same network later: the CA state and
/// the signing keys of every node and bootstrap client.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NetworkIdentities {
    pub msp: Msp,
    pub peers: Vec<EndorserIdentity>,
    pub orderers: Vec<EndorserIdentity>,
    pub clients: Vec<ClientIdentity>,
}

/// Something a client of the network can observe.
#[derive(Debug, Clone, PartialEq)]
pub enum Notification {
    Timer {
        token: u64,
    },
    /// Endorsements collected and the orderer acknowledged the transaction.
    SubmissionDone {
        submission: SubmissionId,
        tx_id: Digest,
        payload: Vec<u8>,
        peer_latency_us: u64,
        orderer_latency_us: u64,
    },
    /// The transaction never reached the orderer.
    EndorsementFailed {
        submission: SubmissionId,
        tx_id: Digest,
        error: SubmitError,
        peer_latency_us: u64,
    },
    /// The submitter's event peer committed the block holding the
    /// transaction.
    TxCommitted {
        submission: SubmissionId,
        tx_id: Digest,
        block: u64,
        validation: Validation,
        /// Chaincode events the transaction emitted.
        events: usize,
        event_latency_us: u64,
    },
    ChaincodeEvent {
        subscription: SubscriptionId,
        tx_id: Digest,
        block: u64,
        event: ChaincodeEvent,
    },
}

type EndorseResult = Result<(ProposalResponse, Endorsement), EndorseError>;

enum Ev {
    ProposalArrive { peer: usize, sub: SubmissionId, slot: usize },
    PeerDone { peer: usize },
    ResponseArrive { sub: SubmissionId, slot: usize, result: Box<EndorseResult> },
    OrdererArrive { sub: SubmissionId },
    OrdererDone,
    AckArrive { sub: SubmissionId },
    BatchTimer { generation: u64 },
    BlockArrive { peer: usize, block: Box<Block> },
    CommitNotice { sub: SubmissionId, block: u64, validation: Validation, events: usize },
    EventNotice { subscription: SubscriptionId, tx_id: Digest, block: u64, event: ChaincodeEvent },
    Timer { token: u64 },
}

struct Scheduled {
    t_us: u64,
    seq: u64,
    ev: Ev,
}

impl PartialEq for Scheduled {
    fn eq(&self, other: &Self) -> bool {
        (self.t_us, self.seq) == (other.t_us, other.seq)
    }
}
impl Eq for Scheduled {}
impl PartialOrd for Scheduled {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Scheduled {
    // Reversed: BinaryHeap is a max-heap and we want the earliest event.
    fn cmp(&self, other: &Self) -> Ordering {
        (other.t_us, other.seq).cmp(&(self.t_us, self.seq))
    }
}

enum Job {
    Endorse { sub: SubmissionId, slot: usize },
    Commit { block: Box<Block> },
}

struct Peer {
    identity: EndorserIdentity,
    id: UserId,
    ledger: Ledger,
    queue: VecDeque<(Job, u64)>,
    busy: bool,
    extra_delivery_us: u64,
}

struct Orderer {
    queue: VecDeque<SubmissionId>,
    busy: bool,
    cutter: BlockCutter<Transaction>,
    next_number: u64,
    prev_hash: Digest,
}

struct Submission {
    signed: SignedProposal,
    tx_id: Digest,
    event_peer: usize,
    endorsers: Vec<usize>,
    responses: Vec<Option<EndorseResult>>,
    received: usize,
    submit_us: u64,
    ordered_us: u64,
    peer_latency_us: u64,
    payload: Vec<u8>,
    tx: Option<Transaction>,
}

struct Subscription {
    peer: usize,
    filter: Option<String>,
}

pub struct Network {
    topology: Topology,
    msp: Msp,
    peers: Vec<Peer>,
    /// Peer indices of each organization, in topology order.
    org_peers: Vec<Vec<usize>>,
    members: BTreeSet<UserId>,
    orderer_ids: Vec<EndorserIdentity>,
    orderer: Orderer,
    clients: BTreeMap<UserId, ClientIdentity>,
    chaincode: Box<dyn Chaincode + Send + Sync>,
    rng: ChaCha8Rng,
    heap: BinaryHeap<Scheduled>,
    seq: u64,
    now_us: u64,
    mode: ClockMode,
    wall_start: Option<Instant>,
    submissions: BTreeMap<SubmissionId, Submission>,
    by_tx: HashMap<Digest, SubmissionId>,
    next_submission: SubmissionId,
    subscriptions: BTreeMap<SubscriptionId, Subscription>,
    next_subscription: SubscriptionId,
    rotation: usize,
    outbox: VecDeque<Notification>,
    trace: Vec<TraceRecord>,
    tracing: bool,
}

fn ms_to_us(ms: f64) -> u64 {
    (ms * 1000.0).round().max(0.0) as u64
}

impl Network {
    /// Issues every certificate from a fresh CA seeded with `seed`.
    pub fn build(topology: Topology, seed: u64) -> Result<Self, NetError> {
        topology.validate()?;
        let mut msp = Msp::with_seed(seed);
        let mut peers = Vec::new();
        let mut clients = Vec::new();
        for org in &topology.orgs {
            msp.create_org(&org.msp_id)?;
            for i in 0..org.peers {
                let (certificate, key) =
                    msp.issue_certificate(&org.msp_id, &format!("peer{i}"), Role::Peer)?;
                peers.push(EndorserIdentity { certificate, key });
            }
            for c in &org.clients {
                let (certificate, key) = msp.issue_certificate(&org.msp_id, c, Role::Client)?;
                clients.push(ClientIdentity { certificate, key });
            }
        }
        msp.create_org(&topology.orderer.msp_id)?;
        let mut orderers = Vec::new();
        for i in 0..topology.orderer.nodes {
            let (certificate, key) = msp.issue_certificate(
                &topology.orderer.msp_id,
                &format!("orderer{i}"),
                Role::Orderer,
            )?;
            orderers.push(EndorserIdentity { certificate, key });
        }
        let ids = NetworkIdentities {
            msp,
            peers,
            orderers,
            clients,
        };
        Self::from_identities(topology, ids, seed)
    }

    /// Rebuilds a network around previously issued identities.
    pub fn from_identities(
        topology: Topology,
        ids: NetworkIdentities,
        seed: u64,
    ) -> Result<Self, NetError> {
        topology.validate()?;
        let mut org_peers = vec![Vec::new(); topology.orgs.len()];
        for (i, p) in ids.peers.iter().enumerate() {
            let org = topology
                .orgs
                .iter()
                .position(|o| o.msp_id == p.certificate.org_msp_id)
                .ok_or_else(|| {
                    NetError::InvalidTopology(format!(
                        "peer {} belongs to no organization",
                        p.certificate.user_id()
                    ))
                })?;
            if !ids.msp.verify_certificate(&p.certificate) || p.certificate.role != Role::Peer {
                return Err(NetError::InvalidTopology(format!(
                    "peer certificate {} does not verify",
                    p.certificate.user_id()
                )));
            }
            org_peers[org].push(i);
        }
        for (o, spec) in topology.orgs.iter().enumerate() {
            if org_peers[o].len() != spec.peers {
                return Err(NetError::InvalidTopology(format!(
                    "{} expects {} peers, identities hold {}",
                    spec.msp_id,
                    spec.peers,
                    org_peers[o].len()
                )));
            }
        }
        let peers: Vec<Peer> = ids
            .peers
            .into_iter()
            .map(|identity| Peer {
                id: identity.certificate.user_id(),
                identity,
                ledger: Ledger::new(),
                queue: VecDeque::new(),
                busy: false,
                extra_delivery_us: 0,
            })
            .collect();
        let members = peers.iter().map(|p| p.id.clone()).collect();
        let genesis = peers[0].ledger.head().block.hash;
        let orderer = Orderer {
            queue: VecDeque::new(),
            busy: false,
            cutter: BlockCutter::new(
                topology.orderer.max_message_count,
                topology.orderer.batch_timeout_ms * 1000,
            ),
            next_number: 1,
            prev_hash: genesis,
        };
        let chaincode = Box::new(RideContract::new(topology.pickup_tolerance_m));
        Ok(Network {
            msp: ids.msp,
            peers,
            org_peers,
            members,
            orderer_ids: ids.orderers,
            orderer,
            clients: ids
                .clients
                .into_iter()
                .map(|c| (c.user_id(), c))
                .collect(),
            chaincode,
            rng: ChaCha8Rng::seed_from_u64(seed),
            heap: BinaryHeap::new(),
            seq: 0,
            now_us: 0,
            mode: ClockMode::Virtual,
            wall_start: None,
            submissions: BTreeMap::new(),
            by_tx: HashMap::new(),
            next_submission: 0,
            subscriptions: BTreeMap::new(),
            next_subscription: 0,
            rotation: 0,
            outbox: VecDeque::new(),
            trace: Vec::new(),
            tracing: true,
            topology,
        })
    }

    pub fn with_chaincode(mut self, chaincode: Box<dyn Chaincode + Send + Sync>) -> Self {
        self.chaincode = chaincode;
        self
    }

    pub fn identities(&self) -> NetworkIdentities {
        NetworkIdentities {
            msp: self.msp.clone(),
            peers: self.peers.iter().map(|p| p.identity.clone()).collect(),
            orderers: self.orderer_ids.clone(),
            clients: self.clients.values().cloned().collect(),
        }
    }

    pub fn topology(&self) -> &Topology {
        &self.topology
    }

    pub fn msp(&self) -> &Msp {
        &self.msp
    }

    pub fn policy(&self) -> EndorsementPolicy {
        self.topology.policy
    }

    pub fn set_clock(&mut self, mode: ClockMode) {
        self.mode = mode;
        self.wall_start = None;
    }

    pub fn set_tracing(&mut self, on: bool) {
        self.tracing = on;
    }

    /// Delays block delivery to one peer, leaving its snapshot stale for
    /// that long after every other peer has committed.
    pub fn set_delivery_delay(&mut self, peer: usize, delay_us: u64) {
        self.peers[peer].extra_delivery_us = delay_us;
    }

    pub fn now_us(&self) -> u64 {
        self.now_us
    }

    pub fn peer_count(&self) -> usize {
        self.peers.len()
    }

    pub fn peer_id(&self, peer: usize) -> &UserId {
        &self.peers[peer].id
    }

    pub fn peer_ledger(&self, peer: usize) -> &Ledger {
        &self.peers[peer].ledger
    }

    pub fn state_hashes(&self) -> Vec<Digest> {
        self.peers.iter().map(|p| p.ledger.state_hash()).collect()
    }

    /// True iff every peer holds a byte-identical chain.
    pub fn replicas_consistent(&self) -> bool {
        let first = self.peers[0].ledger.blocks();
        self.peers.iter().all(|p| p.ledger.blocks() == first)
    }

    pub fn is_idle(&self) -> bool {
        self.heap.is_empty()
    }

    pub fn issue_client(&mut self, org: &str, local_id: &str) -> Result<ClientIdentity, NetError> {
        if !self.topology.orgs.iter().any(|o| o.msp_id == org) {
            return Err(NetError::UnknownOrg(org.to_owned()));
        }
        let (certificate, key) = self.msp.issue_certificate(org, local_id, Role::Client)?;
        let c = ClientIdentity { certificate, key };
        self.clients.insert(c.user_id(), c.clone());
        Ok(c)
    }

    pub fn client(&self, id: &UserId) -> Option<&ClientIdentity> {
        self.clients.get(id)
    }

    pub fn clients(&self) -> impl Iterator<Item = &ClientIdentity> {
        self.clients.values()
    }

    /// First peer of the client's organization; falls back to peer 0.
    pub fn event_peer(&self, client: &ClientIdentity) -> usize {
        self.topology
            .orgs
            .iter()
            .position(|o| o.msp_id == client.certificate.org_msp_id)
            .map(|o| self.org_peers[o][0])
            .unwrap_or(0)
    }

    /// Replays already committed blocks into every peer and the orderer.
    pub fn load_blocks(&mut self, blocks: &[CommittedBlock]) -> Result<(), NetError> {
        let validator = Validator::new(&self.msp, self.topology.policy, &self.members);
        for cb in blocks.iter().skip_while(|b| b.block.number == 0) {
            for p in &mut self.peers {
                let report = p.ledger.append_block(cb.block.clone(), &validator)?;
                if report.validation != cb.validation {
                    return Err(NetError::ReplayMismatch(cb.block.number));
                }
            }
            self.orderer.next_number = cb.block.number + 1;
            self.orderer.prev_hash = cb.block.hash;
        }
        Ok(())
    }

    fn schedule(&mut self, t_us: u64, ev: Ev) {
        self.seq += 1;
        self.heap.push(Scheduled {
            t_us,
            seq: self.seq,
            ev,
        });
    }

    fn record(&mut self, kind: TraceKind) {
        if self.tracing {
            self.trace.push(TraceRecord {
                t_us: self.now_us,
                kind,
            });
        }
    }

    pub fn trace(&self) -> &[TraceRecord] {
        &self.trace
    }

    pub fn take_trace(&mut self) -> Vec<TraceRecord> {
        std::mem::take(&mut self.trace)
    }

    pub fn write_trace_jsonl(&self, mut out: impl Write) -> io::Result<()> {
        for r in &self.trace {
            serde_json::to_writer(&mut out, r)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn trace_jsonl(&self) -> String {
        let mut buf = Vec::new();
        self.write_trace_jsonl(&mut buf).expect("in-memory write");
        String::from_utf8(buf).expect("json is utf-8")
    }

    /// Fires `Notification::Timer { token }` at `at_us`.
    pub fn schedule_timer(&mut self, at_us: u64, token: u64) {
        let at = at_us.max(self.now_us);
        self.schedule(at, Ev::Timer { token });
    }

    /// Delivers chaincode events named `filter` (or all) from valid
    /// transactions committed after this call, as seen by the client's
    /// event peer.
    pub fn subscribe(&mut self, client: &ClientIdentity, filter: Option<&str>) -> SubscriptionId {
        let peer = self.event_peer(client);
        self.next_subscription += 1;
        let id = self.next_subscription;
        self.subscriptions.insert(
            id,
            Subscription {
                peer,
                filter: filter.map(str::to_owned),
            },
        );
        id
    }

    pub fn unsubscribe(&mut self, id: SubscriptionId) {
        self.subscriptions.remove(&id);
    }

    fn endorsers(&mut self) -> Vec<usize> {
        let n = self.peers.len();
        match self.topology.policy {
            EndorsementPolicy::AllPeers => (0..n).collect(),
            EndorsementPolicy::AnyN(k) => {
                let start = self.rotation;
                self.rotation = (self.rotation + 1) % n;
                (0..k).map(|i| (start + i) % n).collect()
            }
            EndorsementPolicy::LoadBalanced => {
                let p = self.rotation;
                self.rotation = (self.rotation + 1) % n;
                vec![p]
            }
        }
    }

    fn new_proposal(
        &mut self,
        client: &ClientIdentity,
        function: &str,
        args: Vec<String>,
    ) -> SignedProposal {
        let mut nonce = [0u8; 16];
        self.rng.fill_bytes(&mut nonce);
        client.propose(function, args, EPOCH_MS + self.now_us / 1000, nonce)
    }

    /// Starts the endorse, order and commit flow for one invocation.
    pub fn submit(
        &mut self,
        client: &ClientIdentity,
        function: &str,
        args: Vec<String>,
    ) -> SubmissionId {
        let signed = self.new_proposal(client, function, args);
        let tx_id = signed.proposal.tx_id();
        let endorsers = self.endorsers();
        self.next_submission += 1;
        let sub = self.next_submission;
        let c_us = ms_to_us(self.topology.client_coordination_ms);
        let link = ms_to_us(self.topology.link_latency_ms);
        for (slot, &peer) in endorsers.iter().enumerate() {
            let at = self.now_us + slot as u64 * c_us + link;
            self.schedule(at, Ev::ProposalArrive { peer, sub, slot });
        }
        self.record(TraceKind::Submitted {
            submission: sub,
            tx_id: tx_id.to_hex(),
            function: function.to_owned(),
            endorsers: endorsers.len(),
        });
        self.by_tx.insert(tx_id, sub);
        let event_peer = self.event_peer(client);
        self.submissions.insert(
            sub,
            Submission {
                signed,
                tx_id,
                event_peer,
                responses: vec![None; endorsers.len()],
                endorsers,
                received: 0,
                submit_us: self.now_us,
                ordered_us: 0,
                peer_latency_us: 0,
                payload: Vec::new(),
                tx: None,
            },
        );
        sub
    }

    /// Executes a read-only invocation on the client's event peer, now,
    /// without ordering or timing.
    pub fn evaluate(
        &mut self,
        client: &ClientIdentity,
        function: &str,
        args: Vec<String>,
    ) -> Result<Vec<u8>, SubmitError> {
        let signed = self.new_proposal(client, function, args);
        check_proposal(&self.msp, &signed).map_err(SubmitError::from)?;
        let peer = self.event_peer(client);
        simulate(self.chaincode.as_ref(), self.peers[peer].ledger.state(), &signed)
            .map(|r| r.payload)
            .map_err(SubmitError::Chaincode)
    }

    /// Next notification, advancing simulated time as needed. `None` once
    /// nothing is left to happen.
    pub fn poll(&mut self) -> Option<Notification> {
        loop {
            if let Some(n) = self.outbox.pop_front() {
                return Some(n);
            }
            if !self.step() {
                return None;
            }
        }
    }

    /// Like [`poll`](Self::poll) but never advances past `deadline_us`.
    pub fn poll_until(&mut self, deadline_us: u64) -> Option<Notification> {
        loop {
            if let Some(n) = self.outbox.pop_front() {
                return Some(n);
            }
            match self.heap.peek() {
                Some(s) if s.t_us <= deadline_us => {
                    self.step();
                }
                _ => {
                    self.now_us = self.now_us.max(deadline_us);
                    return None;
                }
            }
        }
    }

    /// Processes every pending event. Notifications stay queued for `poll`.
    pub fn run_until_idle(&mut self) {
        while self.step() {}
    }

    /// Drains and returns all notifications, running until idle.
    pub fn drain(&mut self) -> Vec<Notification> {
        let mut out = Vec::new();
        while let Some(n) = self.poll() {
            out.push(n);
        }
        out
    }

    /// Processes the earliest event. Returns false when none are pending.
    pub fn step(&mut self) -> bool {
        let Some(Scheduled { t_us, ev, .. }) = self.heap.pop() else {
            return false;
        };
        if self.mode == ClockMode::Wall {
            let start = *self
                .wall_start
                .get_or_insert_with(|| Instant::now() - Duration::from_micros(self.now_us));
            let due = start + Duration::from_micros(t_us);
            let now = Instant::now();
            if due > now {
                std::thread::sleep(due - now);
            }
        }
        self.now_us = self.now_us.max(t_us);
        self.handle(ev);
        true
    }

    fn handle(&mut self, ev: Ev) {
        match ev {
            Ev::ProposalArrive { peer, sub, slot } => {
                self.enqueue_job(peer, Job::Endorse { sub, slot });
            }
            Ev::PeerDone { peer } => self.finish_job(peer),
            Ev::ResponseArrive { sub, slot, result } => self.collect(sub, slot, *result),
            Ev::OrdererArrive { sub } => {
                self.orderer.queue.push_back(sub);
                if !self.orderer.busy {
                    self.start_orderer();
                }
            }
            Ev::OrdererDone => self.finish_orderer(),
            Ev::AckArrive { sub } => {
                let Some(s) = self.submissions.get(&sub) else {
                    return;
                };
                let orderer_latency_us = self.now_us - s.ordered_us;
                let n = Notification::SubmissionDone {
                    submission: sub,
                    tx_id: s.tx_id,
                    payload: s.payload.clone(),
                    peer_latency_us: s.peer_latency_us,
                    orderer_latency_us,
                };
                self.record(TraceKind::Acked { submission: sub });
                self.outbox.push_back(n);
            }
            Ev::BatchTimer { generation } => {
                if let Some(txs) = self.orderer.cutter.on_timer(generation) {
                    self.cut(txs, CutReason::Timeout);
                }
            }
            Ev::BlockArrive { peer, block } => self.enqueue_job(peer, Job::Commit { block }),
            Ev::CommitNotice {
                sub,
                block,
                validation,
                events,
            } => {
                let Some(s) = self.submissions.remove(&sub) else {
                    return;
                };
                self.by_tx.remove(&s.tx_id);
                let event_latency_us = self.now_us - s.ordered_us;
                self.record(TraceKind::Notified {
                    submission: sub,
                    valid: validation.is_valid(),
                });
                self.outbox.push_back(Notification::TxCommitted {
                    submission: sub,
                    tx_id: s.tx_id,
                    block,
                    validation,
                    events,
                    event_latency_us,
                });
            }
            Ev::EventNotice {
                subscription,
                tx_id,
                block,
                event,
            } => {
                if self.subscriptions.contains_key(&subscription) {
                    self.record(TraceKind::EventDelivered {
                        subscription,
                        name: event.name.clone(),
                    });
                    self.outbox.push_back(Notification::ChaincodeEvent {
                        subscription,
                        tx_id,
                        block,
                        event,
                    });
                }
            }
            Ev::Timer { token } => {
                self.outbox.push_back(Notification::Timer { token });
            }
        }
    }

    fn service_us(&mut self, job: &Job) -> u64 {
        let t = &self.topology.peer;
        match job {
            Job::Endorse { .. } => {
                let u: f64 = if t.endorse_jitter > 0.0 {
                    self.rng.gen_range(-1.0..=1.0)
                } else {
                    0.0
                };
                ms_to_us(t.endorse_base_ms * (1.0 + t.endorse_jitter * u))
            }
            Job::Commit { block } => {
                let per_tx: f64 = block
                    .transactions
                    .iter()
                    .map(|tx| t.validate_tx_ms + t.verify_sig_ms * tx.endorsements.len() as f64)
                    .sum();
                ms_to_us(t.validate_block_ms + per_tx)
            }
        }
    }

    fn enqueue_job(&mut self, peer: usize, job: Job) {
        let service = self.service_us(&job);
        self.peers[peer].queue.push_back((job, service));
        if !self.peers[peer].busy {
            self.start_job(peer);
        }
    }

    fn start_job(&mut self, peer: usize) {
        let Some((_, service)) = self.peers[peer].queue.front() else {
            self.peers[peer].busy = false;
            return;
        };
        let at = self.now_us + service;
        self.peers[peer].busy = true;
        self.schedule(at, Ev::PeerDone { peer });
    }

    /// Effects happen when service completes, so an endorsement sees every
    /// block that reached the peer before the proposal did.
    fn finish_job(&mut self, peer: usize) {
        let (job, _) = self.peers[peer]
            .queue
            .pop_front()
            .expect("a running job is queued");
        match job {
            Job::Endorse { sub, slot } => {
                let Some(s) = self.submissions.get(&sub) else {
                    self.start_job(peer);
                    return;
                };
                let p = &self.peers[peer];
                let result = p.identity.endorse(
                    &self.msp,
                    p.ledger.state(),
                    self.chaincode.as_ref(),
                    &s.signed,
                );
                self.record(TraceKind::Endorsed {
                    submission: sub,
                    peer,
                    ok: result.is_ok(),
                });
                let at = self.now_us + ms_to_us(self.topology.link_latency_ms);
                self.schedule(
                    at,
                    Ev::ResponseArrive {
                        sub,
                        slot,
                        result: Box::new(result),
                    },
                );
            }
            Job::Commit { block } => self.commit(peer, *block),
        }
        self.start_job(peer);
    }

    fn commit(&mut self, peer: usize, block: Block) {
        let number = block.number;
        let txs: Vec<(Digest, Vec<ChaincodeEvent>)> = block
            .transactions
            .iter()
            .map(|t| (t.tx_id, t.response.events.clone()))
            .collect();
        let validator = Validator::new(&self.msp, self.topology.policy, &self.members);
        let report = self.peers[peer]
            .ledger
            .append_block(block, &validator)
            .expect("orderer produces a linked chain");
        let state_hash = self.peers[peer].ledger.state_hash().to_hex();
        let valid = report.validation.iter().filter(|v| v.is_valid()).count();
        self.record(TraceKind::Committed {
            peer,
            block: number,
            valid,
            invalid: report.validation.len() - valid,
            state_hash,
        });
        let link = ms_to_us(self.topology.link_latency_ms);
        let at = self.now_us + link;
        for ((tx_id, events), validation) in txs.into_iter().zip(report.validation) {
            if let Some(&sub) = self.by_tx.get(&tx_id) {
                if self.submissions[&sub].event_peer == peer {
                    self.schedule(
                        at,
                        Ev::CommitNotice {
                            sub,
                            block: number,
                            validation,
                            events: events.len(),
                        },
                    );
                }
            }
            if !validation.is_valid() {
                continue;
            }
            let targets: Vec<SubscriptionId> = self
                .subscriptions
                .iter()
                .filter(|(_, s)| s.peer == peer)
                .map(|(id, _)| *id)
                .collect();
            for event in &events {
                for &subscription in &targets {
                    let wanted = self.subscriptions[&subscription]
                        .filter
                        .as_deref()
                        .is_none_or(|f| f == event.name);
                    if wanted {
                        self.schedule(
                            at,
                            Ev::EventNotice {
                                subscription,
                                tx_id,
                                block: number,
                                event: event.clone(),
                            },
                        );
                    }
                }
            }
        }
    }

    fn collect(&mut self, sub: SubmissionId, slot: usize, result: EndorseResult) {
        let now = self.now_us;
        let Some(s) = self.submissions.get_mut(&sub) else {
            return;
        };
        s.responses[slot] = Some(result);
        s.received += 1;
        if s.received < s.endorsers.len() {
            return;
        }
        s.peer_latency_us = now - s.submit_us;
        let mut responses = Vec::new();
        let mut endorsements = Vec::new();
        let mut failure = None;
        for r in s.responses.drain(..).flatten() {
            match r {
                Ok((resp, e)) => {
                    responses.push(resp);
                    endorsements.push(e);
                }
                Err(e) => {
                    failure.get_or_insert(SubmitError::from(e));
                }
            }
        }
        if failure.is_none() && responses.windows(2).any(|w| w[0] != w[1]) {
            failure = Some(SubmitError::EndorsementMismatch);
        }
        if let Some(error) = failure {
            let s = self.submissions.remove(&sub).expect("present");
            self.by_tx.remove(&s.tx_id);
            self.record(TraceKind::EndorsementFailed {
                submission: sub,
                error: error.to_string(),
            });
            self.outbox.push_back(Notification::EndorsementFailed {
                submission: sub,
                tx_id: s.tx_id,
                error,
                peer_latency_us: s.peer_latency_us,
            });
            return;
        }
        let response = responses.swap_remove(0);
        s.payload = response.payload.clone();
        s.tx = Some(assemble(s.signed.clone(), response, endorsements));
        s.ordered_us = now;
        let at = now + ms_to_us(self.topology.link_latency_ms);
        self.record(TraceKind::Endorsements { submission: sub });
        self.schedule(at, Ev::OrdererArrive { sub });
    }

    fn start_orderer(&mut self) {
        if self.orderer.queue.is_empty() {
            self.orderer.busy = false;
            return;
        }
        self.orderer.busy = true;
        let at = self.now_us + ms_to_us(self.topology.orderer.service_ms);
        self.schedule(at, Ev::OrdererDone);
    }

    fn finish_orderer(&mut self) {
        let sub = self.orderer.queue.pop_front().expect("orderer job queued");
        let link = ms_to_us(self.topology.link_latency_ms);
        let tx = self
            .submissions
            .get_mut(&sub)
            .and_then(|s| s.tx.take())
            .expect("ordered submission has its transaction");
        self.schedule(self.now_us + link, Ev::AckArrive { sub });
        match self.orderer.cutter.push(tx, self.now_us) {
            PushOutcome::Queued => {}
            PushOutcome::ArmTimer {
                deadline_us,
                generation,
            } => self.schedule(deadline_us, Ev::BatchTimer { generation }),
            PushOutcome::Cut(txs) => self.cut(txs, CutReason::Size),
        }
        self.start_orderer();
    }

    fn cut(&mut self, txs: Vec<Transaction>, reason: CutReason) {
        let number = self.orderer.next_number;
        let size = txs.len();
        let block = Block::new(
            number,
            EPOCH_MS + self.now_us / 1000,
            self.orderer.prev_hash,
            txs,
        );
        self.orderer.next_number += 1;
        self.orderer.prev_hash = block.hash;
        self.record(TraceKind::BlockCut {
            block: number,
            size,
            reason,
            hash: block.hash.to_hex(),
        });
        let link = ms_to_us(self.topology.link_latency_ms);
        for peer in 0..self.peers.len() {
            let at = self.now_us + link + self.peers[peer].extra_delivery_us;
            self.schedule(
                at,
                Ev::BlockArrive {
                    peer,
                    block: Box::new(block.clone()),
                },
            );
        }
    }
}
