use std::collections::HashSet;
use std::path::Path;

use hailchain_core::chaincode::DEFAULT_PICKUP_TOLERANCE_M;
use hailchain_core::ledger::EndorsementPolicy;
use serde::{Deserialize, Serialize};

use crate::NetError;

/// Minimum peers per organization.
pub const MIN_PEERS_PER_ORG: usize = 2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrgSpec {
    pub msp_id: String,
    pub peers: usize,
    /// Client identities issued at bootstrap.
    #[serde(default)]
    pub clients: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OrdererSpec {
    pub msp_id: String,
    pub nodes: usize,
    pub batch_timeout_ms: u64,
    pub max_message_count: usize,
    /// Constant per-transaction service time.
    pub service_ms: f64,
}

impl Default for OrdererSpec {
    fn default() -> Self {
        OrdererSpec {
            msp_id: "OrdererMSP".into(),
            nodes: 1,
            batch_timeout_ms: 2000,
            max_message_count: 10,
            service_ms: 0.5,
        }
    }
}

/// Service-time model of one peer. Each peer serves one job at a time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PeerTiming {
    pub endorse_base_ms: f64,
    /// Uniform jitter as a fraction of the base, e.g. 0.2 for ±20%.
    pub endorse_jitter: f64,
    pub validate_block_ms: f64,
    pub validate_tx_ms: f64,
    /// Per endorsement signature checked at commit.
    pub verify_sig_ms: f64,
}

impl Default for PeerTiming {
    fn default() -> Self {
        PeerTiming {
            endorse_base_ms: 5.0,
            endorse_jitter: 0.2,
            validate_block_ms: 1.0,
            validate_tx_ms: 0.5,
            verify_sig_ms: 2.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Topology {
    pub orgs: Vec<OrgSpec>,
    #[serde(default)]
    pub orderer: OrdererSpec,
    #[serde(default = "default_policy")]
    pub policy: EndorsementPolicy,
    #[serde(default)]
    pub peer: PeerTiming,
    /// Client-side cost of each additional endorser contacted.
    #[serde(default = "default_coordination")]
    pub client_coordination_ms: f64,
    #[serde(default = "default_link")]
    pub link_latency_ms: f64,
    #[serde(default = "default_tolerance")]
    pub pickup_tolerance_m: f64,
}

fn default_policy() -> EndorsementPolicy {
    EndorsementPolicy::AllPeers
}

fn default_coordination() -> f64 {
    2.0
}

fn default_link() -> f64 {
    1.0
}

fn default_tolerance() -> f64 {
    DEFAULT_PICKUP_TOLERANCE_M
}

impl Topology {
    /// `orgs` organizations named `Org1PeerOrgMSP`, `Org2PeerOrgMSP`, ...
    /// with `peers` peers each and default timing.
    pub fn uniform(orgs: usize, peers: usize) -> Self {
        Topology {
            orgs: (1..=orgs)
                .map(|i| OrgSpec {
                    msp_id: format!("Org{i}PeerOrgMSP"),
                    peers,
                    clients: Vec::new(),
                })
                .collect(),
            orderer: OrdererSpec::default(),
            policy: default_policy(),
            peer: PeerTiming::default(),
            client_coordination_ms: default_coordination(),
            link_latency_ms: default_link(),
            pickup_tolerance_m: default_tolerance(),
        }
    }

    pub fn from_json(text: &str) -> Result<Self, NetError> {
        let t: Topology =
            serde_json::from_str(text).map_err(|e| NetError::InvalidTopology(e.to_string()))?;
        t.validate()?;
        Ok(t)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, NetError> {
        let text = std::fs::read_to_string(path.as_ref()).map_err(|e| {
            NetError::InvalidTopology(format!("{}: {e}", path.as_ref().display()))
        })?;
        Self::from_json(&text)
    }

    pub fn peer_count(&self) -> usize {
        self.orgs.iter().map(|o| o.peers).sum()
    }

    pub fn validate(&self) -> Result<(), NetError> {
        let bad = |m: String| Err(NetError::InvalidTopology(m));
        if self.orgs.is_empty() {
            return bad("at least one organization is required".into());
        }
        let mut names = HashSet::new();
        for o in &self.orgs {
            if o.peers < MIN_PEERS_PER_ORG {
                return bad(format!(
                    "{} has {} peer(s); each organization needs at least {MIN_PEERS_PER_ORG}",
                    o.msp_id, o.peers
                ));
            }
            if !names.insert(o.msp_id.as_str()) {
                return bad(format!("duplicate organization {}", o.msp_id));
            }
        }
        if names.contains(self.orderer.msp_id.as_str()) {
            return bad(format!("orderer org {} clashes with a peer org", self.orderer.msp_id));
        }
        if self.orderer.nodes == 0 || self.orderer.max_message_count == 0 {
            return bad("orderer needs at least one node and a positive batch size".into());
        }
        if self.orderer.batch_timeout_ms == 0 {
            return bad("batch timeout must be positive".into());
        }
        if let EndorsementPolicy::AnyN(n) = self.policy {
            if n == 0 || n > self.peer_count() {
                return bad(format!("policy needs {n} of {} peers", self.peer_count()));
            }
        }
        let t = &self.peer;
        let times = [
            t.endorse_base_ms,
            t.validate_block_ms,
            t.validate_tx_ms,
            t.verify_sig_ms,
            self.client_coordination_ms,
            self.link_latency_ms,
            self.orderer.service_ms,
        ];
        if times.iter().any(|v| !v.is_finite() || *v < 0.0) || !(0.0..1.0).contains(&t.endorse_jitter)
        {
            return bad("timing parameters must be finite and non-negative, jitter in [0, 1)".into());
        }
        Ok(())
    }
}
