//! Shared multi-rider scenario driver and its independent presence oracle.

#![allow(dead_code)]

use std::collections::BTreeSet;

use hailchain_core::chaincode::{
    function as f, request_key, GeoPoint, PermanentRide, PresenceTracker, RideId, Sandbox, Stop,
};
use hailchain_core::crypto::Digest;
use hailchain_core::identity::UserId;
use hailchain_core::ledger::ClientIdentity;
use rand::seq::SliceRandom;
use rand::Rng;

pub fn register(sb: &mut Sandbox, who: &ClientIdentity) {
    let salt = [7u8; 16];
    let hash = Digest::of_parts([&salt[..], b"pw"]);
    sb.invoke(who, f::REGISTER_USER, &[&hash.to_hex(), &hex::encode(salt)])
        .expect("register");
}

pub fn make_driver(sb: &mut Sandbox, name: &str) -> ClientIdentity {
    let d = sb.client(name).unwrap();
    register(sb, &d);
    sb.invoke(&d, f::UPGRADE_TO_DRIVER, &[name, "Make", "Model", "2018"])
        .expect("upgrade");
    d
}

pub fn point(i: usize, salt: u32) -> GeoPoint {
    // Distinct points spread over a few kilometers of Nashville.
    GeoPoint::from_e7(
        361_000_000 + (i as i64) * 20_000 + salt as i64 * 3,
        -867_000_000 - (i as i64) * 20_000 - salt as i64 * 7,
    )
    .unwrap()
}

/// One boarding or alighting, in schedule order.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Step {
    Pickup(usize),
    Dropoff(usize),
}

/// A random interleaving of one pickup and one later dropoff per rider.
pub fn random_schedule(rng: &mut impl Rng, riders: usize) -> Vec<Step> {
    let mut slots: Vec<usize> = (0..riders).flat_map(|r| [r, r]).collect();
    slots.shuffle(rng);
    let mut seen = vec![false; riders];
    slots
        .into_iter()
        .map(|r| {
            if seen[r] {
                Step::Dropoff(r)
            } else {
                seen[r] = true;
                Step::Pickup(r)
            }
        })
        .collect()
}

/// What each participant should have archived, computed from the schedule
/// alone: rider R witnesses event E iff E's subject is not R and E falls
/// inside R's own pickup..dropoff interval.
pub struct Expected {
    pub witnessed_pickups: Vec<BTreeSet<(usize, GeoPoint)>>,
    pub witnessed_dropoffs: Vec<BTreeSet<(usize, GeoPoint)>>,
}

pub fn oracle(schedule: &[Step], pickup_at: &[GeoPoint], dropoff_at: &[GeoPoint]) -> Expected {
    let n = pickup_at.len();
    let time_of = |s: Step| schedule.iter().position(|x| *x == s).unwrap();
    let mut wp = vec![BTreeSet::new(); n];
    let mut wd = vec![BTreeSet::new(); n];
    for r in 0..n {
        let (start, end) = (time_of(Step::Pickup(r)), time_of(Step::Dropoff(r)));
        for (t, step) in schedule.iter().enumerate() {
            if t < start || t > end {
                continue;
            }
            match *step {
                Step::Pickup(s) if s != r => {
                    wp[r].insert((s, pickup_at[s]));
                }
                Step::Dropoff(s) if s != r => {
                    wd[r].insert((s, dropoff_at[s]));
                }
                _ => {}
            }
        }
    }
    Expected {
        witnessed_pickups: wp,
        witnessed_dropoffs: wd,
    }
}

pub struct Played {
    pub riders: Vec<ClientIdentity>,
    pub driver: ClientIdentity,
    pub pickup_at: Vec<GeoPoint>,
    pub dropoff_at: Vec<GeoPoint>,
    pub rider_archives: Vec<PermanentRide>,
    pub driver_archive: PermanentRide,
    pub rider_ride_ids: Vec<RideId>,
}

/// Runs one driver and `riders` riders through `schedule` on a fresh
/// sandbox, with the driver's presence tracker issuing co-rider calls.
pub fn play(seed: u64, riders: usize, schedule: &[Step]) -> Played {
    let mut sb = Sandbox::new(seed);
    let driver = make_driver(&mut sb, "driver");
    let ids: Vec<ClientIdentity> = (0..riders)
        .map(|i| {
            let c = sb.client(&format!("rider{i}")).unwrap();
            register(&mut sb, &c);
            c
        })
        .collect();
    let pickup_at: Vec<GeoPoint> = (0..riders).map(|i| point(i, 1)).collect();
    let dropoff_at: Vec<GeoPoint> = (0..riders).map(|i| point(i + 50, 2)).collect();
    let keys: Vec<String> = ids.iter().map(|c| request_key(&c.user_id())).collect();
    for (i, c) in ids.iter().enumerate() {
        sb.invoke(c, f::REQUEST_RIDE, &[&pickup_at[i].to_string()]).unwrap();
        sb.invoke(&driver, f::ACCEPT_RIDE, &[&keys[i]]).unwrap();
        sb.invoke(c, f::SET_RIDE_DESTINATION, &[&point(i + 90, 3).to_string()])
            .unwrap();
    }
    let uid: Vec<UserId> = ids.iter().map(|c| c.user_id()).collect();
    let mut tracker = PresenceTracker::new();
    let mut ride_ids = vec![None; riders];
    for step in schedule {
        match *step {
            Step::Pickup(r) => {
                let here = pickup_at[r].to_string();
                sb.invoke(&driver, f::PICKUP_RIDER, &[&keys[r], &here]).unwrap();
                for call in tracker.pickup(&uid[r], pickup_at[r]) {
                    let args = call.args();
                    let args: Vec<&str> = args.iter().map(String::as_str).collect();
                    sb.invoke(&driver, f::SET_CORIDER_INFORMATION, &args).unwrap();
                }
            }
            Step::Dropoff(r) => {
                for call in tracker.dropoff(&uid[r], dropoff_at[r]) {
                    let args = call.args();
                    let args: Vec<&str> = args.iter().map(String::as_str).collect();
                    sb.invoke(&driver, f::SET_CORIDER_INFORMATION, &args).unwrap();
                }
                let here = dropoff_at[r].to_string();
                let out = sb.invoke(&driver, f::DROPOFF_RIDER, &[&keys[r], &here]).unwrap();
                let id: RideId = String::from_utf8(out.payload).unwrap().parse().unwrap();
                let left = sb.invoke(&ids[r], f::LEAVE_DRIVER, &[&here]).unwrap();
                assert_eq!(left.payload, id.to_string().into_bytes());
                ride_ids[r] = Some(id);
            }
        }
    }
    let ride_ids: Vec<RideId> = ride_ids.into_iter().map(Option::unwrap).collect();
    let rider_archives = ids
        .iter()
        .zip(&ride_ids)
        .map(|(c, id)| {
            serde_json::from_slice(&sb.query(c, f::GET_RIDE, &[&id.to_string()]).unwrap()).unwrap()
        })
        .collect();
    let info: hailchain_core::chaincode::UserInfo =
        serde_json::from_slice(&sb.query(&driver, f::GET_USER_INFO, &[]).unwrap()).unwrap();
    // One schedule is one continuous run of overlapping rides only if the
    // car never empties; merge every group the driver archived.
    let mut driver_archive: Option<PermanentRide> = None;
    for gid in &info.ride_ids {
        let part: PermanentRide = serde_json::from_slice(
            &sb.query(&driver, f::GET_RIDE, &[&gid.to_string()]).unwrap(),
        )
        .unwrap();
        match &mut driver_archive {
            None => driver_archive = Some(part),
            Some(a) => {
                a.pickups.extend(part.pickups);
                a.dropoffs.extend(part.dropoffs);
            }
        }
    }
    Played {
        riders: ids,
        driver,
        pickup_at,
        dropoff_at,
        rider_archives,
        driver_archive: driver_archive.expect("driver archived something"),
        rider_ride_ids: ride_ids,
    }
}

fn as_set(stops: &[Stop], uid: &[UserId]) -> BTreeSet<(usize, GeoPoint)> {
    stops
        .iter()
        .map(|s| (uid.iter().position(|u| *u == s.user).unwrap(), s.location))
        .collect()
}

/// Compares a played schedule with the oracle. Returns a description of the
/// first mismatch.
pub fn check(schedule: &[Step], p: &Played) -> Result<(), String> {
    let exp = oracle(schedule, &p.pickup_at, &p.dropoff_at);
    let uid: Vec<UserId> = p.riders.iter().map(|c| c.user_id()).collect();
    for (r, a) in p.rider_archives.iter().enumerate() {
        let got_p = as_set(&a.witnessed_corider_pickups, &uid);
        let got_d = as_set(&a.witnessed_corider_dropoffs, &uid);
        if a.witnessed_corider_pickups.len() != got_p.len()
            || a.witnessed_corider_dropoffs.len() != got_d.len()
        {
            return Err(format!("rider {r}: duplicated co-rider entries"));
        }
        if got_p != exp.witnessed_pickups[r] {
            return Err(format!(
                "rider {r} pickups: got {got_p:?}, want {:?}",
                exp.witnessed_pickups[r]
            ));
        }
        if got_d != exp.witnessed_dropoffs[r] {
            return Err(format!(
                "rider {r} dropoffs: got {got_d:?}, want {:?}",
                exp.witnessed_dropoffs[r]
            ));
        }
        if a.pickups.len() != 1 || a.pickups[0].location != p.pickup_at[r] {
            return Err(format!("rider {r}: own pickup wrong"));
        }
        if a.dropoffs.len() != 1 || a.dropoffs[0].location != p.dropoff_at[r] {
            return Err(format!("rider {r}: own dropoff wrong"));
        }
    }
    let all_p: BTreeSet<_> = (0..uid.len()).map(|r| (r, p.pickup_at[r])).collect();
    let all_d: BTreeSet<_> = (0..uid.len()).map(|r| (r, p.dropoff_at[r])).collect();
    let d = &p.driver_archive;
    if d.pickups.len() != uid.len() || as_set(&d.pickups, &uid) != all_p {
        return Err("driver pickups incomplete".into());
    }
    if d.dropoffs.len() != uid.len() || as_set(&d.dropoffs, &uid) != all_d {
        return Err("driver dropoffs incomplete".into());
    }
    Ok(())
}
