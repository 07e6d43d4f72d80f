mod common;

use common::*;
use hailchain_core::chaincode::{CoriderKind, ParticipantRole, RideStatus};
use hailchain_gateway::{Gateway, GatewayError, GatewayEvent, Places, View};
use hailchain_netsim::Topology;

#[test]
fn happy_path_yields_four_progress_states() {
    let mut g = gateway(1);
    let alice = rider(&mut g, ORG1, "alice");
    let bob = driver(&mut g, ORG2, "bob");
    g.start_driving(&bob.token, "Downtown", false).unwrap();

    let ticket = g.request_ride(&alice.token, "Nissan Stadium", "Belmont University").unwrap();
    assert_eq!(ticket.key, format!("rideRequest:{}", alice.user_id));
    assert_eq!(
        g.take_events(&bob.token).unwrap(),
        vec![GatewayEvent::Offer {
            key: ticket.key.clone(),
            pickup: ticket.pickup
        }]
    );

    let id = g.respond(&bob.token, &ticket.key, true).unwrap();
    assert_eq!(id, Some(ticket.ride_id));
    // The destination went on the ledger without the rider doing anything.
    let req = g.history(&alice.token).unwrap().active.unwrap();
    assert_eq!(req.status, RideStatus::Accepted);
    assert_eq!(req.destination, Some(ticket.destination));

    assert_eq!(g.pickup(&bob.token, &ticket.key, "nissan stadium").unwrap(), 0);
    let (dropped, n) = g.dropoff(&bob.token, &ticket.key, "Belmont University").unwrap();
    assert_eq!((dropped, n), (ticket.ride_id, 0));

    let progress = g.take_events(&alice.token).unwrap();
    let names: Vec<&str> = progress.iter().map(|e| e.name()).collect();
    assert_eq!(names, ["accepted", "driver_arrived", "ride_ending", "archived"]);
    assert_eq!(progress[3], GatewayEvent::Archived { ride_id: ticket.ride_id });
    assert!(g.take_events(&bob.token).unwrap().is_empty());

    let h = g.history(&alice.token).unwrap();
    assert!(h.active.is_none());
    assert_eq!(h.rides.len(), 1);
    assert_eq!(h.rides[0].ride_id, ticket.ride_id);
    assert_eq!(h.rides[0].role, ParticipantRole::Rider);
    let hb = g.history(&bob.token).unwrap();
    assert_eq!(hb.rides.len(), 1);
    assert_eq!(hb.rides[0].role, ParticipantRole::Driver);
    assert!(g.health().replicas_consistent);
}

#[test]
fn passwords_never_reach_the_ledger() {
    let dir = tempfile::tempdir().unwrap();
    let mut g = Gateway::open(dir.path(), Topology::uniform(2, 2), places()).unwrap();
    let alice = g.register(ORG1, "alice", "correct horse battery", None).unwrap();
    let bob = g.register(ORG2, "bob", "hunter2-staple", None).unwrap();
    g.upgrade(&bob.token, "Ford", "Focus", 2015).unwrap();
    let t = g.request_ride(&alice.token, "Greyhound Bus Station", "Nissan Stadium").unwrap();
    let bob = g.login(ORG2, "bob", "hunter2-staple", View::Driver).unwrap();
    g.respond(&bob.token, &t.key, true).unwrap();
    drop(g);

    let raw = std::fs::read(dir.path().join("ledger.blocks")).unwrap();
    for pw in ["correct horse battery", "hunter2-staple"] {
        assert!(!contains(&raw, pw.as_bytes()), "{pw:?} in block file");
        assert!(!contains(&raw, hex::encode(pw).as_bytes()));
    }
    // Every proposal argument is visible in a block; the hash is there.
    let blocks = hailchain_gateway::Store::new(dir.path()).unwrap().blocks().read_all().unwrap();
    let args: Vec<&String> = blocks
        .iter()
        .flat_map(|b| &b.block.transactions)
        .flat_map(|tx| &tx.proposal.args)
        .collect();
    assert!(!args.is_empty());
    assert!(args.iter().all(|a| !a.contains("correct horse") && !a.contains("hunter2")));
}

fn contains(hay: &[u8], needle: &[u8]) -> bool {
    hay.windows(needle.len()).any(|w| w == needle)
}

#[test]
fn simultaneous_accepts_leave_one_winner() {
    let mut g = gateway(2);
    let alice = rider(&mut g, ORG1, "alice");
    let d1 = driver(&mut g, ORG1, "dana");
    let d2 = driver(&mut g, ORG2, "dave");
    for d in [&d1, &d2] {
        g.start_driving(&d.token, "Downtown", false).unwrap();
    }
    let t = g.request_ride(&alice.token, "Nissan Stadium", "Downtown").unwrap();
    let results = g.accept_together(&[(&d1.token, &t.key), (&d2.token, &t.key)]);
    let wins = results.iter().filter(|r| r.is_ok()).count();
    let taken = results.iter().filter(|r| matches!(r, Err(GatewayError::RideTaken))).count();
    assert_eq!((wins, taken), (1, 1), "{results:?}");
    assert_eq!(GatewayError::RideTaken.to_string(), "ride taken");

    // A late accept after the commit is also a lost race.
    let d3 = driver(&mut g, ORG2, "dora");
    assert!(matches!(g.respond(&d3.token, &t.key, true), Err(GatewayError::RideTaken)));

    let req = g.history(&alice.token).unwrap().active.unwrap();
    let winner = if results[0].is_ok() { &d1 } else { &d2 };
    assert_eq!(req.driver.as_ref(), Some(&winner.user_id));
    assert_eq!(
        g.take_events(&alice.token).unwrap(),
        vec![GatewayEvent::Accepted { key: t.key.clone() }]
    );
}

#[test]
fn losing_drivers_see_the_offer_withdrawn() {
    let mut g = gateway(3);
    let alice = rider(&mut g, ORG1, "alice");
    let d1 = driver(&mut g, ORG1, "dana");
    let d2 = driver(&mut g, ORG2, "dave");
    for d in [&d1, &d2] {
        g.start_driving(&d.token, "Downtown", false).unwrap();
    }
    let t = g.request_ride(&alice.token, "Nissan Stadium", "Downtown").unwrap();
    g.take_events(&d2.token).unwrap();
    g.respond(&d1.token, &t.key, true).unwrap();
    assert_eq!(g.take_events(&d2.token).unwrap(), vec![GatewayEvent::OfferTaken { key: t.key.clone() }]);
    assert!(g.offers(&d2.token).unwrap().is_empty());
    let own: Vec<_> = g.take_events(&d1.token).unwrap().into_iter().map(|e| e.name()).collect();
    assert_eq!(own, ["offer"]);
}

#[test]
fn denying_leaves_the_request_open() {
    let mut g = gateway(4);
    let alice = rider(&mut g, ORG1, "alice");
    let d1 = driver(&mut g, ORG1, "dana");
    let d2 = driver(&mut g, ORG2, "dave");
    g.start_driving(&d1.token, "Downtown", false).unwrap();
    let t = g.request_ride(&alice.token, "Nissan Stadium", "Downtown").unwrap();
    assert_eq!(g.respond(&d1.token, &t.key, false).unwrap(), None);
    assert!(g.offers(&d1.token).unwrap().is_empty());
    // A driver who starts later finds it by rescanning.
    let open = g.start_driving(&d2.token, "Downtown", true).unwrap();
    assert_eq!(open.len(), 1);
    assert_eq!(open[0].key, t.key);
    assert!(g.respond(&d2.token, &t.key, true).unwrap().is_some());
}

#[test]
fn events_reach_only_entitled_sessions() {
    let mut g = gateway(5);
    let alice = rider(&mut g, ORG1, "alice");
    let carol = rider(&mut g, ORG2, "carol");
    let idle = driver(&mut g, ORG1, "ivan");
    let bob = driver(&mut g, ORG2, "bob");
    g.start_driving(&bob.token, "Downtown", false).unwrap();
    let t = g.request_ride(&alice.token, "Nissan Stadium", "Downtown").unwrap();
    g.respond(&bob.token, &t.key, true).unwrap();
    g.pickup(&bob.token, &t.key, "Nissan Stadium").unwrap();
    g.dropoff(&bob.token, &t.key, "Downtown").unwrap();
    assert!(g.take_events(&carol.token).unwrap().is_empty());
    // Not driving, so no offers.
    assert!(g.take_events(&idle.token).unwrap().is_empty());
    assert_eq!(g.take_events(&alice.token).unwrap().len(), 4);
}

#[test]
fn corider_updates_follow_presence() {
    let mut g = gateway(6);
    let b = rider(&mut g, ORG1, "b");
    let c = rider(&mut g, ORG2, "c");
    let d = rider(&mut g, ORG1, "d");
    let drv = driver(&mut g, ORG2, "drv");
    g.start_driving(&drv.token, "Downtown", false).unwrap();

    let tb = g.request_ride(&b.token, "Nissan Stadium", "Belmont University").unwrap();
    let tc = g.request_ride(&c.token, "Greyhound Bus Station", "Vanderbilt University").unwrap();
    g.respond(&drv.token, &tb.key, true).unwrap();
    g.respond(&drv.token, &tc.key, true).unwrap();
    assert_eq!(g.pickup(&drv.token, &tb.key, "Nissan Stadium").unwrap(), 0);
    assert_eq!(g.pickup(&drv.token, &tc.key, "Greyhound Bus Station").unwrap(), 1);
    let (_, n) = g.dropoff(&drv.token, &tb.key, "Belmont University").unwrap();
    assert_eq!(n, 1);
    // D boards after B left and must never learn about B.
    let td = g.request_ride(&d.token, "Music City Center", "Vanderbilt University").unwrap();
    g.respond(&drv.token, &td.key, true).unwrap();
    assert_eq!(g.pickup(&drv.token, &td.key, "Music City Center").unwrap(), 1);
    assert_eq!(g.dropoff(&drv.token, &tc.key, "Vanderbilt University").unwrap().1, 1);
    assert_eq!(g.dropoff(&drv.token, &td.key, "Vanderbilt University").unwrap().1, 0);

    let places = g.places().clone();
    let at = |n: &str| places.geocode(n).unwrap();
    let rb = &g.history(&b.token).unwrap().rides[0];
    assert_eq!(stops(&rb.witnessed_corider_pickups), [(c.user_id.to_string(), at("Greyhound Bus Station"))]);
    assert!(rb.witnessed_corider_dropoffs.is_empty());

    let rc = g.history(&c.token).unwrap().rides[0].clone();
    assert_eq!(stops(&rc.witnessed_corider_pickups), [(d.user_id.to_string(), at("Music City Center"))]);
    assert_eq!(stops(&rc.witnessed_corider_dropoffs), [(b.user_id.to_string(), at("Belmont University"))]);

    let rd = g.history(&d.token).unwrap().rides[0].clone();
    assert!(rd.witnessed_corider_pickups.is_empty());
    assert_eq!(stops(&rd.witnessed_corider_dropoffs), [(c.user_id.to_string(), at("Vanderbilt University"))]);
    assert!(rd.counterparts == vec![drv.user_id.clone()]);
}

fn stops(s: &[hailchain_core::chaincode::Stop]) -> Vec<(String, hailchain_core::chaincode::GeoPoint)> {
    s.iter().map(|s| (s.user.to_string(), s.location)).collect()
}

#[test]
fn manual_corider_records_are_checked_by_the_contract() {
    let mut g = gateway(7);
    let b = rider(&mut g, ORG1, "b");
    let drv = driver(&mut g, ORG2, "drv");
    let t = g.request_ride(&b.token, "Nissan Stadium", "Downtown").unwrap();
    g.respond(&drv.token, &t.key, true).unwrap();
    let err = g
        .record_corider(&drv.token, &t.key, &b.user_id, "Downtown", CoriderKind::Pickup)
        .unwrap_err();
    assert!(err.code().is_some(), "{err}");
}

#[test]
fn account_errors() {
    let mut g = gateway(8);
    let alice = rider(&mut g, ORG1, "alice");
    assert!(matches!(g.register(ORG1, "alice", "x", None), Err(GatewayError::DuplicateLocalId(_))));
    // Same local id in another organization is a different user.
    assert!(g.register(ORG2, "alice", "x", None).is_ok());
    assert!(matches!(g.login(ORG1, "alice", "wrong", View::Rider), Err(GatewayError::AuthFailed)));
    assert!(matches!(g.login(ORG1, "nobody", "x", View::Rider), Err(GatewayError::AuthFailed)));
    assert!(matches!(g.login(ORG1, "alice", "alice-secret", View::Driver), Err(GatewayError::NotADriver)));
    assert!(matches!(g.register("NoSuchOrg", "z", "x", None), Err(GatewayError::BadRequest(_))));
    assert!(matches!(
        g.request_ride(&alice.token, "Atlantis", "Downtown"),
        Err(GatewayError::GeocodeMiss(_))
    ));
    assert!(matches!(g.request_ride(&alice.token, "", "Downtown"), Err(GatewayError::GeocodeMiss(_))));
    assert!(matches!(g.start_driving(&alice.token, "Downtown", false), Err(GatewayError::WrongView(View::Driver))));
    g.request_ride(&alice.token, "36.1665,-86.7713", "Downtown").unwrap();
    let again = g.request_ride(&alice.token, "Downtown", "Nissan Stadium").unwrap_err();
    assert_eq!(again.code(), Some("RideAlreadyActive"));
    g.logout(&alice.token);
    assert!(matches!(g.history(&alice.token), Err(GatewayError::UnknownSession)));
}

#[test]
fn pickup_far_from_the_rider_is_refused() {
    let mut g = gateway(9);
    let b = rider(&mut g, ORG1, "b");
    let drv = driver(&mut g, ORG2, "drv");
    let t = g.request_ride(&b.token, "Nissan Stadium", "Downtown").unwrap();
    g.respond(&drv.token, &t.key, true).unwrap();
    let err = g.pickup(&drv.token, &t.key, "Belmont University").unwrap_err();
    assert_eq!(err.code(), Some("NotAtPickupLocation"));
    assert_eq!(g.pickup(&drv.token, &t.key, "Nissan Stadium").unwrap(), 0);
}

#[test]
fn state_survives_a_restart() {
    let dir = tempfile::tempdir().unwrap();
    let open = || Gateway::open(dir.path(), Topology::uniform(2, 2), places()).unwrap();
    let key = {
        let mut g = open();
        let a = g.register(ORG1, "alice", "pw", None).unwrap();
        let d = g.register(ORG2, "dan", "pw", None).unwrap();
        g.upgrade(&d.token, "Kia", "Soul", 2019).unwrap();
        let t = g.request_ride(&a.token, "Nissan Stadium", "Downtown").unwrap();
        let d = g.login(ORG2, "dan", "pw", View::Driver).unwrap();
        g.respond(&d.token, &t.key, true).unwrap();
        g.pickup(&d.token, &t.key, "Nissan Stadium").unwrap();
        t.key
    };
    let mut g = open();
    let h0 = g.health();
    let d = g.login(ORG2, "dan", "pw", View::Driver).unwrap();
    g.dropoff(&d.token, &key, "Downtown").unwrap();
    // The rider was offline for the dropoff and catches up on login.
    let a = g.login(ORG1, "alice", "pw", View::Rider).unwrap();
    assert!(g.advance(&a.token).unwrap().is_none());
    assert_eq!(g.history(&a.token).unwrap().rides.len(), 1);
    assert!(g.health().height > h0.height);
    drop(g);
    let g = open();
    assert!(g.health().replicas_consistent);
    assert!(g.rider_flow(&a.user_id).is_none());
}

#[test]
fn places_table_rejects_unknown_names_only() {
    let p = Places::load(concat!(env!("CARGO_MANIFEST_DIR"), "/../../fixtures/places-nashville.json")).unwrap();
    assert!(p.len() >= 5);
    for name in ["Nashville International Airport", "Nissan Stadium", "Greyhound Bus Station", "Belmont University"] {
        assert!(p.geocode(&name.to_uppercase()).is_ok(), "{name}");
    }
    assert!(p.geocode("Nashville").is_err());
}
