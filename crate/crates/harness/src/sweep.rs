use hailchain_core::ledger::EndorsementPolicy;
use hailchain_netsim::{Network, Topology};
use serde::{Deserialize, Serialize};

use crate::load::{run_load, WorkloadSpec};
use crate::profile::TrafficProfile;
use crate::report::LatencyReport;
use crate::HarnessError;

/// The parameter a sweep varies. Every other setting comes from the
/// sweep's base configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    ConstantDelayMs(Vec<f64>),
    PoissonLambda(Vec<f64>),
    PeersPerOrg(Vec<usize>),
    Orgs(Vec<usize>),
}

impl SweepAxis {
    pub fn values(&self) -> Vec<f64> {
        match self {
            SweepAxis::ConstantDelayMs(v) | SweepAxis::PoissonLambda(v) => v.clone(),
            SweepAxis::PeersPerOrg(v) | SweepAxis::Orgs(v) => v.iter().map(|&x| x as f64).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sweep {
    pub name: String,
    pub axis: SweepAxis,
    pub topology: Topology,
    pub profile: TrafficProfile,
    pub workload: WorkloadSpec,
    /// Scale the worker count with the organization count.
    pub workers_per_org: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub axis_value: f64,
    pub report: LatencyReport,
}

impl Sweep {
    pub fn new(name: &str, axis: SweepAxis, rides: usize) -> Self {
        Sweep {
            name: name.to_owned(),
            axis,
            topology: Topology::uniform(2, 2),
            profile: TrafficProfile::constant(300.0),
            workload: WorkloadSpec::rides(rides),
            workers_per_org: None,
        }
    }

    /// Configuration of the `i`-th point.
    pub fn point(&self, i: usize) -> (Topology, WorkloadSpec, TrafficProfile) {
        let mut topology = self.topology.clone();
        let mut workload = self.workload.clone();
        let mut profile = self.profile;
        let peers = topology.orgs[0].peers;
        match &self.axis {
            SweepAxis::ConstantDelayMs(v) => profile = TrafficProfile::constant(v[i]),
            SweepAxis::PoissonLambda(v) => profile = TrafficProfile::poisson(v[i]),
            SweepAxis::PeersPerOrg(v) => {
                for o in &mut topology.orgs {
                    o.peers = v[i];
                }
            }
            SweepAxis::Orgs(v) => {
                let timed = Topology::uniform(v[i], peers);
                topology.orgs = timed.orgs;
            }
        }
        if let Some(k) = self.workers_per_org {
            workload.workers = k * topology.orgs.len();
        }
        // Fixed per point so reruns are comparable.
        workload.seed = self.workload.seed.wrapping_add(i as u64);
        (topology, workload, profile)
    }
}

/// One fresh network and one load run per axis value.
pub fn run_sweep(sweep: &Sweep) -> Result<Vec<SweepPoint>, HarnessError> {
    let values = sweep.axis.values();
    let mut out = Vec::with_capacity(values.len());
    for (i, axis_value) in values.into_iter().enumerate() {
        let (topology, workload, profile) = sweep.point(i);
        let mut net = Network::build(topology, workload.seed)?;
        net.set_tracing(false);
        let report = run_load(&mut net, &workload, profile)?;
        out.push(SweepPoint { axis_value, report });
    }
    Ok(out)
}

pub const PRESETS: [&str; 6] = ["fig9", "constant-low", "poisson", "fig11", "fig12", "fig13"];

/// Named sweeps. `fig11` yields one sweep per endorsement policy.
///
/// | preset | axis | setup |
/// |---|---|---|
/// | fig9 | constant delay 100..=500 ms | 2 orgs × 2 peers, 4 workers |
/// | constant-low | constant delay 10..=90 ms | same |
/// | poisson | λ 10..=90 tx/s per worker | same |
/// | fig11 | peers 2..=8 in one org | all-peers and load-balanced, 2 workers at 200 ms |
/// | fig12, fig13 | orgs 1..=8, 2 peers each | 2 workers per org at 200 ms |
pub fn preset(name: &str, rides: usize) -> Result<Vec<Sweep>, HarnessError> {
    let s = |axis| Sweep::new(name, axis, rides);
    let steps = |from: usize, to: usize, by: usize| (from..=to).step_by(by).map(|x| x as f64).collect();
    Ok(match name {
        "fig9" => vec![s(SweepAxis::ConstantDelayMs(steps(100, 500, 100)))],
        "constant-low" => vec![s(SweepAxis::ConstantDelayMs(steps(10, 90, 10)))],
        "poisson" => {
            let mut p = s(SweepAxis::PoissonLambda(steps(10, 90, 10)));
            p.profile = TrafficProfile::poisson(10.0);
            vec![p]
        }
        "fig11" => [
            ("fig11-all-peers", EndorsementPolicy::AllPeers),
            ("fig11-load-balanced", EndorsementPolicy::LoadBalanced),
        ]
        .into_iter()
        .map(|(n, policy)| {
            let mut p = Sweep::new(n, SweepAxis::PeersPerOrg(vec![2, 4, 6, 8]), rides);
            p.topology = Topology::uniform(1, 2);
            p.topology.policy = policy;
            p.profile = TrafficProfile::constant(200.0);
            p.workload.workers = 2;
            p
        })
        .collect(),
        "fig12" | "fig13" => {
            let mut p = s(SweepAxis::Orgs((1..=8).collect()));
            p.profile = TrafficProfile::constant(200.0);
            p.workers_per_org = Some(2);
            vec![p]
        }
        other => return Err(HarnessError::UnknownPreset(other.to_owned())),
    })
}
