use std::collections::BTreeMap;

use hailchain_core::chaincode::{function as f, request_key, GeoPoint};
use hailchain_core::crypto::Digest;
use hailchain_core::ledger::{ClientIdentity, Validation};
use hailchain_netsim::{Network, Notification, SubmissionId};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::profile::{IntervalSampler, TrafficProfile};
use crate::report::{Counts, LatencyReport, TxSample};
use crate::HarnessError;

/// request, accept, set destination, pickup, dropoff, leave.
pub const TXS_PER_RIDE: usize = 6;

const MAX_CONSECUTIVE_FAILURES: usize = 50;

/// Timer token bit marking a retry wake-up rather than a send slot.
const RETRY: u64 = 1 << 63;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorkloadSpec {
    pub rides: usize,
    pub workers: usize,
    /// Rider/driver pairs per worker; bounds the rides a worker has open.
    pub pairs_per_worker: usize,
    /// Drivers to register; `None` gives every pair its driver.
    pub drivers: Option<usize>,
    pub seed: u64,
    /// Give up after this much simulated time without a commit.
    pub stall_ms: u64,
    /// Wait before retrying a failed step.
    pub retry_backoff_ms: u64,
}

impl Default for WorkloadSpec {
    fn default() -> Self {
        WorkloadSpec {
            rides: 1000,
            workers: 4,
            pairs_per_worker: 16,
            drivers: None,
            seed: 7,
            stall_ms: 60_000,
            retry_backoff_ms: 250,
        }
    }
}

impl WorkloadSpec {
    pub fn rides(rides: usize) -> Self {
        WorkloadSpec {
            rides,
            ..Self::default()
        }
    }

    pub fn total_txs(&self) -> usize {
        self.rides * TXS_PER_RIDE
    }
}

struct Pair {
    rider: ClientIdentity,
    driver: Option<ClientIdentity>,
    busy: bool,
}

struct Ride {
    pair: usize,
    step: usize,
    in_flight: bool,
    not_before_us: u64,
    pickup: GeoPoint,
    dropoff: GeoPoint,
}

struct Worker {
    pairs: Vec<usize>,
    quota: usize,
    started: usize,
    rides: Vec<usize>,
    sampler: IntervalSampler,
    in_flight: Option<SubmissionId>,
    /// The send interval elapsed while a submission was outstanding.
    due: bool,
    /// Due, but no ride had a step ready.
    starved: bool,
}

fn nashville(rng: &mut impl Rng) -> GeoPoint {
    GeoPoint::from_e7(
        rng.gen_range(360_900_000..362_100_000),
        rng.gen_range(-868_700_000..-866_500_000),
    )
    .expect("inside valid range")
}

/// Tracks the submission that each pending notification belongs to.
struct Pending {
    worker: usize,
    ride: usize,
    sample: usize,
}

struct SetupTx {
    who: ClientIdentity,
    function: &'static str,
    args: Vec<String>,
    /// Upgrade to driver once this registration commits.
    then_upgrade: bool,
    attempts: usize,
}

/// Registers one rider/driver pair per slot, outside the measurement.
/// Failed registrations are retried after the backoff.
fn setup(net: &mut Network, spec: &WorkloadSpec) -> Result<Vec<Pair>, HarnessError> {
    let orgs: Vec<String> = net.topology().orgs.iter().map(|o| o.msp_id.clone()).collect();
    let total = spec.workers * spec.pairs_per_worker;
    let drivers = spec.drivers.unwrap_or(total).min(total);
    let salt = hex_salt(spec.seed);
    let hash = Digest::of(b"harness").to_hex();
    let register = |who: &ClientIdentity, then_upgrade| SetupTx {
        who: who.clone(),
        function: f::REGISTER_USER,
        args: vec![hash.clone(), salt.clone()],
        then_upgrade,
        attempts: 0,
    };
    let mut pairs = Vec::with_capacity(total);
    let mut queue = Vec::new();
    for i in 0..total {
        let rider = net.issue_client(&orgs[i % orgs.len()], &format!("rider{i}"))?;
        queue.push(register(&rider, false));
        let driver = if i < drivers {
            let d = net.issue_client(&orgs[(i + 1) % orgs.len()], &format!("driver{i}"))?;
            queue.push(register(&d, true));
            Some(d)
        } else {
            None
        };
        pairs.push(Pair {
            rider,
            driver,
            busy: false,
        });
    }
    let expected = total + 2 * drivers;
    let mut done = 0;
    let mut outstanding = BTreeMap::new();
    let mut waiting = BTreeMap::new();
    let send = |net: &mut Network, tx: SetupTx, outstanding: &mut BTreeMap<_, _>| {
        let s = net.submit(&tx.who, tx.function, tx.args.clone());
        outstanding.insert(s, tx);
    };
    for tx in queue {
        send(net, tx, &mut outstanding);
    }
    let backoff_us = spec.retry_backoff_ms * 1000;
    let mut next_token = 0u64;
    while let Some(n) = net.poll() {
        let (submission, ok) = match n {
            Notification::TxCommitted {
                submission,
                validation,
                ..
            } => (submission, validation == Validation::Valid),
            Notification::EndorsementFailed { submission, .. } => (submission, false),
            Notification::Timer { token } => {
                if let Some(tx) = waiting.remove(&token) {
                    send(net, tx, &mut outstanding);
                }
                continue;
            }
            _ => continue,
        };
        let Some(mut tx) = outstanding.remove(&submission) else {
            continue;
        };
        if ok {
            done += 1;
            if tx.then_upgrade {
                let local = tx.who.certificate.local_id.clone();
                let upgrade = SetupTx {
                    function: f::UPGRADE_TO_DRIVER,
                    args: vec![local, "Toyota".into(), "Camry".into(), "2019".into()],
                    then_upgrade: false,
                    attempts: 0,
                    ..tx
                };
                send(net, upgrade, &mut outstanding);
            }
        } else {
            tx.attempts += 1;
            if tx.attempts > MAX_CONSECUTIVE_FAILURES {
                return Err(HarnessError::HarnessTimeout { done, expected });
            }
            next_token += 1;
            net.schedule_timer(net.now_us() + backoff_us, next_token);
            waiting.insert(next_token, tx);
        }
    }
    if done != expected {
        return Err(HarnessError::HarnessTimeout { done, expected });
    }
    Ok(pairs)
}

fn hex_salt(seed: u64) -> String {
    let d = Digest::of(&seed.to_be_bytes());
    d.to_hex()[..32].to_owned()
}

struct Driver<'a> {
    net: &'a mut Network,
    pairs: Vec<Pair>,
    rides: Vec<Ride>,
    workers: Vec<Worker>,
    pending: BTreeMap<SubmissionId, Pending>,
    samples: Vec<TxSample>,
    rng: ChaCha8Rng,
    failures: usize,
    completed: usize,
    valid: usize,
    consecutive_failures: usize,
    /// When the first worker finished all its rides, and the valid
    /// commits up to then.
    drain: Option<(u64, usize)>,
}

impl Driver<'_> {
    fn ride_args(&self, ride: &Ride) -> (ClientIdentity, &'static str, Vec<String>) {
        let pair = &self.pairs[ride.pair];
        let key = request_key(&pair.rider.user_id());
        let rider = pair.rider.clone();
        let driver = pair.driver.clone();
        let (p, d) = (ride.pickup.to_string(), ride.dropoff.to_string());
        match ride.step {
            0 => (rider, f::REQUEST_RIDE, vec![p]),
            1 => (driver.expect("checked"), f::ACCEPT_RIDE, vec![key]),
            2 => (rider, f::SET_RIDE_DESTINATION, vec![d]),
            3 => (driver.expect("checked"), f::PICKUP_RIDER, vec![key, p]),
            4 => (driver.expect("checked"), f::DROPOFF_RIDER, vec![key, d]),
            _ => (rider, f::LEAVE_DRIVER, vec![d]),
        }
    }

    fn ready(&self, r: usize) -> bool {
        let ride = &self.rides[r];
        let needs_driver = matches!(ride.step, 1 | 3 | 4);
        !ride.in_flight
            && ride.step < TXS_PER_RIDE
            && ride.not_before_us <= self.net.now_us()
            && (!needs_driver || self.pairs[ride.pair].driver.is_some())
    }

    /// Picks the oldest ride with a step ready, else opens a new one.
    fn pick(&mut self, w: usize) -> Option<usize> {
        if let Some(&r) = self.workers[w].rides.iter().find(|&&r| self.ready(r)) {
            return Some(r);
        }
        let worker = &self.workers[w];
        if worker.started >= worker.quota {
            return None;
        }
        let pair = *worker.pairs.iter().find(|&&p| !self.pairs[p].busy)?;
        self.pairs[pair].busy = true;
        let pickup = nashville(&mut self.rng);
        let dropoff = nashville(&mut self.rng);
        self.rides.push(Ride {
            pair,
            step: 0,
            in_flight: false,
            not_before_us: 0,
            pickup,
            dropoff,
        });
        let r = self.rides.len() - 1;
        let worker = &mut self.workers[w];
        worker.started += 1;
        worker.rides.push(r);
        Some(r)
    }

    fn try_send(&mut self, w: usize) {
        let Some(r) = self.pick(w) else {
            self.workers[w].starved = true;
            return;
        };
        let (who, function, args) = self.ride_args(&self.rides[r]);
        let now = self.net.now_us();
        let sub = self.net.submit(&who, function, args);
        self.rides[r].in_flight = true;
        let worker = &mut self.workers[w];
        worker.in_flight = Some(sub);
        worker.due = false;
        worker.starved = false;
        let gap = worker.sampler.next_us();
        self.net.schedule_timer(now + gap, w as u64);
        self.samples.push(TxSample::default());
        self.pending.insert(
            sub,
            Pending {
                worker: w,
                ride: r,
                sample: self.samples.len() - 1,
            },
        );
    }

    fn worker_free(&mut self, w: usize) {
        self.workers[w].in_flight = None;
        if self.workers[w].due {
            self.try_send(w);
        }
    }

    /// Counts a failed step and schedules its retry.
    fn fail(&mut self, p: &Pending, backoff_us: u64) -> Result<(), ()> {
        self.failures += 1;
        self.consecutive_failures += 1;
        if self.consecutive_failures > MAX_CONSECUTIVE_FAILURES {
            return Err(());
        }
        let at = self.net.now_us() + backoff_us;
        self.rides[p.ride].not_before_us = at;
        self.net.schedule_timer(at, RETRY | p.worker as u64);
        Ok(())
    }

    fn finished(&self) -> bool {
        self.workers
            .iter()
            .all(|w| w.started == w.quota && w.rides.is_empty())
    }
}

/// Drives `spec.rides` complete rides through `net`.
///
/// Each worker keeps at most one submission outstanding until the orderer
/// acknowledges it; its next send happens at the later of the sampled gap
/// and that acknowledgement. A send advances the oldest of the worker's
/// rides whose previous step has committed, or opens a new ride. Failed
/// steps are counted and retried.
pub fn run_load(
    net: &mut Network,
    spec: &WorkloadSpec,
    profile: TrafficProfile,
) -> Result<LatencyReport, HarnessError> {
    profile.validate()?;
    if spec.workers == 0 || spec.pairs_per_worker == 0 {
        return Err(HarnessError::InvalidProfile("need at least one worker and pair".into()));
    }
    // More pairs than a worker has rides would only slow setup down.
    let per_worker = spec.rides.div_ceil(spec.workers).max(1);
    let spec = &WorkloadSpec {
        pairs_per_worker: spec.pairs_per_worker.min(per_worker),
        ..spec.clone()
    };
    let pairs = setup(net, spec)?;
    let orgs: Vec<ClientIdentity> = {
        let mut seen = BTreeMap::new();
        for p in &pairs {
            seen.entry(p.rider.certificate.org_msp_id.clone())
                .or_insert_with(|| p.rider.clone());
        }
        seen.into_values().collect()
    };
    let subscriptions: Vec<_> = orgs.iter().map(|c| net.subscribe(c, None)).collect();

    let mut workers = Vec::with_capacity(spec.workers);
    for w in 0..spec.workers {
        let quota = spec.rides / spec.workers + usize::from(w < spec.rides % spec.workers);
        workers.push(Worker {
            pairs: (w * spec.pairs_per_worker..(w + 1) * spec.pairs_per_worker).collect(),
            quota,
            started: 0,
            rides: Vec::new(),
            sampler: IntervalSampler::new(profile, spec.seed.wrapping_mul(1000).wrapping_add(w as u64))?,
            in_flight: None,
            due: true,
            starved: false,
        });
    }
    let start_us = net.now_us();
    let mut d = Driver {
        net,
        pairs,
        rides: Vec::new(),
        workers,
        pending: BTreeMap::new(),
        samples: Vec::new(),
        rng: ChaCha8Rng::seed_from_u64(spec.seed),
        failures: 0,
        completed: 0,
        valid: 0,
        consecutive_failures: 0,
        drain: None,
    };
    for w in 0..spec.workers {
        d.try_send(w);
    }
    let stall_us = spec.stall_ms * 1000;
    let backoff_us = spec.retry_backoff_ms * 1000;
    let mut last_progress = start_us;
    let mut last_commit = start_us;
    let mut events_received = 0usize;
    let mut events_emitted = 0usize;
    let timeout = |d: &Driver| HarnessError::HarnessTimeout {
        done: d.completed * TXS_PER_RIDE,
        expected: spec.total_txs(),
    };
    while !d.finished() {
        let Some(n) = d.net.poll_until(last_progress + stall_us) else {
            return Err(timeout(&d));
        };
        match n {
            Notification::Timer { token } if token & RETRY != 0 => {
                let w = (token & !RETRY) as usize;
                if d.workers[w].starved && d.workers[w].in_flight.is_none() {
                    d.try_send(w);
                }
            }
            Notification::Timer { token } => {
                let w = token as usize;
                if d.workers[w].in_flight.is_some() {
                    d.workers[w].due = true;
                } else {
                    d.workers[w].due = true;
                    d.try_send(w);
                }
            }
            Notification::SubmissionDone {
                submission,
                peer_latency_us,
                orderer_latency_us,
                ..
            } => {
                let p = &d.pending[&submission];
                let (w, s) = (p.worker, p.sample);
                d.samples[s].peer_us = Some(peer_latency_us);
                d.samples[s].orderer_us = Some(orderer_latency_us);
                d.worker_free(w);
            }
            Notification::EndorsementFailed {
                submission,
                peer_latency_us,
                ..
            } => {
                let p = d.pending.remove(&submission).expect("own submission");
                d.samples[p.sample].peer_us = Some(peer_latency_us);
                d.rides[p.ride].in_flight = false;
                if d.fail(&p, backoff_us).is_err() {
                    return Err(timeout(&d));
                }
                d.worker_free(p.worker);
            }
            Notification::TxCommitted {
                submission,
                validation,
                event_latency_us,
                events,
                ..
            } => {
                let p = d.pending.remove(&submission).expect("own submission");
                let now = d.net.now_us();
                last_progress = now;
                d.samples[p.sample].event_us = Some(event_latency_us);
                d.rides[p.ride].in_flight = false;
                if validation == Validation::Valid {
                    d.consecutive_failures = 0;
                    d.valid += 1;
                    last_commit = now;
                    d.samples[p.sample].valid = true;
                    events_emitted += subscriptions.len() * events;
                    let ride = &mut d.rides[p.ride];
                    ride.step += 1;
                    if ride.step == TXS_PER_RIDE {
                        let pair = ride.pair;
                        d.pairs[pair].busy = false;
                        let worker = &mut d.workers[p.worker];
                        worker.rides.retain(|&r| r != p.ride);
                        d.completed += 1;
                        if worker.started == worker.quota && worker.rides.is_empty() && d.drain.is_none() {
                            d.drain = Some((now, d.valid));
                        }
                    }
                } else if d.fail(&p, backoff_us).is_err() {
                    return Err(timeout(&d));
                }
                // Readiness changed; wake workers that found nothing to do.
                for w in 0..d.workers.len() {
                    if d.workers[w].starved && d.workers[w].in_flight.is_none() {
                        d.try_send(w);
                    }
                }
            }
            Notification::ChaincodeEvent { .. } => events_received += 1,
        }
    }
    // Deliveries scheduled by the last commit.
    while let Some(n) = d.net.poll_until(d.net.now_us() + stall_us) {
        if let Notification::ChaincodeEvent { .. } = n {
            events_received += 1;
        }
    }
    for s in subscriptions {
        d.net.unsubscribe(s);
    }
    let (drain_us, drain_valid) = d.drain.unwrap_or((last_commit, d.valid));
    Ok(LatencyReport::from_samples(
        &d.samples,
        Counts {
            failures: d.failures,
            rides_completed: d.completed,
            duration_us: last_commit - start_us,
            loaded_us: drain_us - start_us,
            loaded_valid: drain_valid,
            events_emitted,
            events_received,
        },
    ))
}
