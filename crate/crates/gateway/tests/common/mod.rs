#![allow(dead_code)]

use hailchain_gateway::{Gateway, Places, SessionInfo, View};
use hailchain_netsim::{Network, Topology};

pub const ORG1: &str = "Org1PeerOrgMSP";
pub const ORG2: &str = "Org2PeerOrgMSP";

pub fn places() -> Places {
    Places::load(concat!(env!("CARGO_MANIFEST_DIR"), "/../../fixtures/places-nashville.json")).unwrap()
}

pub fn gateway(seed: u64) -> Gateway {
    Gateway::new(Network::build(Topology::uniform(2, 2), seed).unwrap(), places())
}

pub fn rider(g: &mut Gateway, org: &str, name: &str) -> SessionInfo {
    g.register(org, name, &format!("{name}-secret"), Some(name)).unwrap()
}

/// Registers, upgrades and logs in a driver session.
pub fn driver(g: &mut Gateway, org: &str, name: &str) -> SessionInfo {
    let s = rider(g, org, name);
    g.upgrade(&s.token, "Toyota", "Prius", 2020).unwrap();
    g.logout(&s.token);
    g.login(org, name, &format!("{name}-secret"), View::Driver).unwrap()
}
