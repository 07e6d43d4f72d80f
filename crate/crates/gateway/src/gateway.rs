use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};
use std::path::Path;

use hailchain_core::chaincode::{
    function, rider_of_request_key, request_key, CoriderCall, CoriderKind, DriverProfile, EventPayload,
    GeoPoint, OpenRequest, PermanentRide, PresenceTracker, RideEventKind, RideId, RideStatus,
    TemporalRideRequest, UserInfo,
};
use hailchain_core::crypto::Digest;
use hailchain_core::identity::{IdentityError, UserId};
use hailchain_core::ledger::{ChaincodeEvent, ClientIdentity, Validation};
use hailchain_netsim::{NetError, Network, Notification, SubmissionId, SubscriptionId, Topology};
use rand::RngCore;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use tokio::sync::broadcast;

use crate::{GatewayError, Places, Store, View};

const EVENT_LOG_CAP: usize = 1024;
const CONFLICT_RETRIES: usize = 3;

/// What a session is told. Rider progress is exactly `accepted`,
/// `driver_arrived`, `ride_ending`, `archived`, one per committed event.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum GatewayEvent {
    Offer { key: String, pickup: GeoPoint },
    OfferTaken { key: String },
    Accepted { key: String },
    DriverArrived { key: String },
    RideEnding { ride_id: RideId, location: GeoPoint },
    Archived { ride_id: RideId },
    Error { message: String },
}

impl GatewayEvent {
    pub fn name(&self) -> &'static str {
        match self {
            GatewayEvent::Offer { .. } => "offer",
            GatewayEvent::OfferTaken { .. } => "offer_taken",
            GatewayEvent::Accepted { .. } => "accepted",
            GatewayEvent::DriverArrived { .. } => "driver_arrived",
            GatewayEvent::RideEnding { .. } => "ride_ending",
            GatewayEvent::Archived { .. } => "archived",
            GatewayEvent::Error { .. } => "error",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SessionInfo {
    pub token: String,
    pub user_id: UserId,
    pub view: View,
}

/// A rider's ride in flight, kept until `leaveDriver` commits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RiderFlow {
    pub key: String,
    pub ride_id: RideId,
    pub destination: GeoPoint,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RideTicket {
    pub key: String,
    pub ride_id: RideId,
    pub pickup: GeoPoint,
    pub destination: GeoPoint,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RideHistory {
    pub user_id: UserId,
    pub name: Option<String>,
    pub driver: Option<DriverProfile>,
    pub rides: Vec<PermanentRide>,
    /// The caller's own open request, if any.
    pub active: Option<TemporalRideRequest>,
    /// Requests the caller is currently driving.
    pub driving: Vec<TemporalRideRequest>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HealthReport {
    pub height: u64,
    pub peers: usize,
    pub replicas_consistent: bool,
    pub sessions: usize,
}

/// Gateway-side state that must survive a restart.
#[derive(Debug, Default, Serialize, Deserialize)]
struct Saved {
    flows: BTreeMap<UserId, RiderFlow>,
    on_board: BTreeMap<UserId, Vec<UserId>>,
}

struct Session {
    user: UserId,
    view: View,
    subscription: SubscriptionId,
    driving_at: Option<GeoPoint>,
    offers: BTreeMap<String, GeoPoint>,
    accepting: BTreeSet<String>,
    log: VecDeque<GatewayEvent>,
    live: broadcast::Sender<GatewayEvent>,
}

impl Session {
    fn emit(&mut self, event: GatewayEvent) {
        if self.log.len() == EVENT_LOG_CAP {
            self.log.pop_front();
        }
        self.log.push_back(event.clone());
        // No live listener is fine; the log still has it.
        let _ = self.live.send(event);
    }
}

/// Salted password hash stored on the ledger. The plaintext never leaves
/// the gateway.
pub fn password_hash(salt: &[u8; 16], password: &str) -> Digest {
    Digest::of_parts([&salt[..], password.as_bytes()])
}

fn random_hex(bytes: usize) -> String {
    let mut buf = vec![0u8; bytes];
    rand::thread_rng().fill_bytes(&mut buf);
    hex::encode(buf)
}

pub struct Gateway {
    net: Network,
    places: Places,
    store: Option<Store>,
    sessions: HashMap<String, Session>,
    by_subscription: HashMap<SubscriptionId, String>,
    flows: BTreeMap<UserId, RiderFlow>,
    trackers: BTreeMap<UserId, PresenceTracker>,
    payloads: HashMap<SubmissionId, Vec<u8>>,
    outcomes: HashMap<SubmissionId, Result<Vec<u8>, GatewayError>>,
    deferred: VecDeque<UserId>,
    persisted_blocks: usize,
}

impl Gateway {
    /// In-memory gateway over an existing network.
    pub fn new(net: Network, places: Places) -> Self {
        Gateway {
            net,
            places,
            store: None,
            sessions: HashMap::new(),
            by_subscription: HashMap::new(),
            flows: BTreeMap::new(),
            trackers: BTreeMap::new(),
            payloads: HashMap::new(),
            outcomes: HashMap::new(),
            deferred: VecDeque::new(),
            persisted_blocks: 0,
        }
    }

    /// Opens the data directory, bootstrapping a network from `topology`
    /// the first time and replaying the stored ledger afterwards. Once a
    /// directory is initialized its saved topology wins.
    pub fn open(dir: impl AsRef<Path>, topology: Topology, places: Places) -> Result<Self, GatewayError> {
        let store = Store::new(dir.as_ref())?;
        let seed = rand::random();
        let mut gw = if store.is_initialized() {
            let mut net = Network::from_identities(store.load_topology()?, store.load_identities()?, seed)?;
            let blocks = store.blocks().read_all()?;
            net.load_blocks(&blocks)?;
            let saved: Saved = store.read_json("gateway.json")?.unwrap_or_default();
            let mut gw = Gateway::new(net, places);
            gw.persisted_blocks = blocks.len();
            gw.flows = saved.flows;
            for (driver, riders) in saved.on_board {
                let mut t = PresenceTracker::new();
                for r in &riders {
                    t.pickup(r, GeoPoint::new(0.0, 0.0).expect("origin is valid"));
                }
                gw.trackers.insert(driver, t);
            }
            gw
        } else {
            let net = Network::build(topology, seed)?;
            store.save_topology(net.topology())?;
            store.save_identities(&net.identities())?;
            Gateway::new(net, places)
        };
        gw.store = Some(store);
        gw.persist()?;
        Ok(gw)
    }

    pub fn network(&self) -> &Network {
        &self.net
    }

    pub fn places(&self) -> &Places {
        &self.places
    }

    pub fn orgs(&self) -> Vec<String> {
        self.net.topology().orgs.iter().map(|o| o.msp_id.clone()).collect()
    }

    pub fn health(&self) -> HealthReport {
        HealthReport {
            height: self.net.peer_ledger(0).height(),
            peers: self.net.peer_count(),
            replicas_consistent: self.net.replicas_consistent(),
            sessions: self.sessions.len(),
        }
    }

    // Sessions

    /// Issues a certificate, registers the salted password hash on the
    /// ledger and opens a rider session.
    pub fn register(
        &mut self,
        org: &str,
        local_id: &str,
        password: &str,
        name: Option<&str>,
    ) -> Result<SessionInfo, GatewayError> {
        let user = self.issue_or_reuse(org, local_id)?;
        let mut salt = [0u8; 16];
        rand::thread_rng().fill_bytes(&mut salt);
        let mut args = vec![password_hash(&salt, password).to_hex(), hex::encode(salt)];
        if let Some(n) = name.filter(|n| !n.trim().is_empty()) {
            args.push(n.to_owned());
        }
        let result = self.transact(&user, function::REGISTER_USER, args);
        self.settle()?;
        result?;
        Ok(self.open_session(user, View::Rider))
    }

    fn issue_or_reuse(&mut self, org: &str, local_id: &str) -> Result<UserId, GatewayError> {
        let id: UserId = format!("{local_id}@{org}")
            .parse()
            .map_err(|e: IdentityError| GatewayError::BadRequest(e.to_string()))?;
        if self.net.client(&id).is_some() {
            // An identity whose registration never committed may be reused.
            return match self.query::<UserInfo>(&id, function::GET_USER_INFO, vec![]) {
                Err(e) if e.code() == Some("NotRegistered") => Ok(id),
                _ => Err(GatewayError::DuplicateLocalId(local_id.to_owned())),
            };
        }
        match self.net.issue_client(org, local_id) {
            Ok(c) => {
                if let Some(store) = &self.store {
                    store.save_identities(&self.net.identities())?;
                }
                Ok(c.user_id())
            }
            Err(NetError::Identity(IdentityError::DuplicateLocalId(l))) => Err(GatewayError::DuplicateLocalId(l)),
            Err(NetError::Identity(e)) => Err(GatewayError::BadRequest(e.to_string())),
            Err(NetError::UnknownOrg(o)) => Err(GatewayError::BadRequest(format!("unknown organization {o:?}"))),
            Err(e) => Err(e.into()),
        }
    }

    /// Verifies the password against the ledger record and opens a session.
    /// Unknown users and wrong passwords are indistinguishable.
    pub fn login(&mut self, org: &str, local_id: &str, password: &str, view: View) -> Result<SessionInfo, GatewayError> {
        let id: UserId = format!("{local_id}@{org}").parse().map_err(|_| GatewayError::AuthFailed)?;
        if self.net.client(&id).is_none() {
            return Err(GatewayError::AuthFailed);
        }
        let info: UserInfo = match self.query(&id, function::GET_USER_INFO, vec![]) {
            Ok(i) => i,
            Err(e) if e.code().is_some() => return Err(GatewayError::AuthFailed),
            Err(e) => return Err(e),
        };
        if password_hash(&info.salt, password) != info.password_hash {
            return Err(GatewayError::AuthFailed);
        }
        if view == View::Driver && info.driver.is_none() {
            return Err(GatewayError::NotADriver);
        }
        Ok(self.open_session(id, view))
    }

    fn open_session(&mut self, user: UserId, view: View) -> SessionInfo {
        let token = random_hex(16);
        let client = self.net.client(&user).expect("wallet holds the user").clone();
        let subscription = self.net.subscribe(&client, None);
        self.by_subscription.insert(subscription, token.clone());
        self.sessions.insert(
            token.clone(),
            Session {
                user: user.clone(),
                view,
                subscription,
                driving_at: None,
                offers: BTreeMap::new(),
                accepting: BTreeSet::new(),
                log: VecDeque::new(),
                live: broadcast::channel(256).0,
            },
        );
        SessionInfo {
            token,
            user_id: user,
            view,
        }
    }

    pub fn logout(&mut self, token: &str) {
        if let Some(s) = self.sessions.remove(token) {
            self.by_subscription.remove(&s.subscription);
            self.net.unsubscribe(s.subscription);
        }
    }

    pub fn session(&self, token: &str) -> Result<SessionInfo, GatewayError> {
        let s = self.sessions.get(token).ok_or(GatewayError::UnknownSession)?;
        Ok(SessionInfo {
            token: token.to_owned(),
            user_id: s.user.clone(),
            view: s.view,
        })
    }

    fn user_in(&self, token: &str, view: View) -> Result<UserId, GatewayError> {
        let s = self.sessions.get(token).ok_or(GatewayError::UnknownSession)?;
        if s.view != view {
            return Err(GatewayError::WrongView(view));
        }
        Ok(s.user.clone())
    }

    /// Events delivered to the session since the last call.
    pub fn take_events(&mut self, token: &str) -> Result<Vec<GatewayEvent>, GatewayError> {
        let s = self.sessions.get_mut(token).ok_or(GatewayError::UnknownSession)?;
        Ok(s.log.drain(..).collect())
    }

    /// Live feed of the session's events, for streaming.
    pub fn live_events(&self, token: &str) -> Result<broadcast::Receiver<GatewayEvent>, GatewayError> {
        let s = self.sessions.get(token).ok_or(GatewayError::UnknownSession)?;
        Ok(s.live.subscribe())
    }

    // Driver operations

    pub fn upgrade(&mut self, token: &str, make: &str, model: &str, year: u32) -> Result<(), GatewayError> {
        let user = self.sessions.get(token).ok_or(GatewayError::UnknownSession)?.user.clone();
        let info: UserInfo = self.query(&user, function::GET_USER_INFO, vec![])?;
        let name = info.name.unwrap_or_else(|| user.local_id().to_owned());
        let args = vec![name, make.to_owned(), model.to_owned(), year.to_string()];
        let r = self.transact(&user, function::UPGRADE_TO_DRIVER, args);
        self.settle()?;
        r.map(drop)
    }

    /// Marks the driver as available at `location`. From now on new
    /// requests arrive as offers. With `rescan`, requests that were already
    /// open are listed and added as offers too.
    pub fn start_driving(&mut self, token: &str, location: &str, rescan: bool) -> Result<Vec<OpenRequest>, GatewayError> {
        let user = self.user_in(token, View::Driver)?;
        let at = self.places.resolve(location)?;
        let open = if rescan {
            let own = request_key(&user);
            let mut all: Vec<OpenRequest> = self.query(&user, function::QUERY_OPEN_REQUESTS, vec![])?;
            all.retain(|r| r.key != own);
            all
        } else {
            Vec::new()
        };
        let s = self.sessions.get_mut(token).expect("checked above");
        s.driving_at = Some(at);
        for r in &open {
            s.offers.insert(r.key.clone(), r.pickup);
        }
        Ok(open)
    }

    pub fn stop_driving(&mut self, token: &str) -> Result<(), GatewayError> {
        self.user_in(token, View::Driver)?;
        let s = self.sessions.get_mut(token).expect("checked above");
        s.driving_at = None;
        s.offers.clear();
        Ok(())
    }

    /// Offers currently pending for the driver.
    pub fn offers(&self, token: &str) -> Result<Vec<OpenRequest>, GatewayError> {
        self.user_in(token, View::Driver)?;
        Ok(self.sessions[token]
            .offers
            .iter()
            .map(|(key, pickup)| OpenRequest {
                key: key.clone(),
                pickup: *pickup,
            })
            .collect())
    }

    /// Accepts or denies an offer. Denying is local: the request stays open
    /// for other drivers. Accepting is never retried; losing a race to
    /// another driver is [`GatewayError::RideTaken`].
    pub fn respond(&mut self, token: &str, key: &str, accept: bool) -> Result<Option<RideId>, GatewayError> {
        self.user_in(token, View::Driver)?;
        if !accept {
            self.sessions.get_mut(token).expect("checked above").offers.remove(key);
            return Ok(None);
        }
        self.accept_together(&[(token, key)]).pop().expect("one attempt").map(Some)
    }

    /// Submits several accepts before waiting for any of them, as taps in
    /// separate sessions at the same moment would. Results are in input
    /// order.
    pub fn accept_together(&mut self, attempts: &[(&str, &str)]) -> Vec<Result<RideId, GatewayError>> {
        let mut calls = Vec::new();
        let mut slots = Vec::new();
        for (token, key) in attempts {
            match self.user_in(token, View::Driver) {
                Ok(user) => {
                    let s = self.sessions.get_mut(*token).expect("checked above");
                    s.accepting.insert((*key).to_owned());
                    slots.push(Ok(calls.len()));
                    calls.push((user, function::ACCEPT_RIDE, vec![(*key).to_owned()]));
                }
                Err(e) => slots.push(Err(e)),
            }
        }
        let mut results: Vec<Option<Result<Vec<u8>, GatewayError>>> =
            self.transact_all(calls).into_iter().map(Some).collect();
        let out: Vec<Result<RideId, GatewayError>> = slots
            .into_iter()
            .zip(attempts)
            .map(|(slot, (token, key))| {
                let r = results[slot?].take().expect("each result used once");
                let s = self.sessions.get_mut(*token).expect("checked above");
                s.accepting.remove(*key);
                match r {
                    Ok(payload) => {
                        s.offers.remove(*key);
                        parse_ride_id(&payload)
                    }
                    Err(e) if matches!(e.code(), Some("ReadConflict" | "RideNotOpen")) => {
                        s.offers.remove(*key);
                        Err(GatewayError::RideTaken)
                    }
                    Err(e) => Err(e),
                }
            })
            .collect();
        if let Err(e) = self.settle() {
            return out.into_iter().map(|_| Err(GatewayError::BadRequest(e.to_string()))).collect();
        }
        out
    }

    /// Records the pickup, then tells riders already on board. Returns the
    /// number of co-rider updates made.
    pub fn pickup(&mut self, token: &str, key: &str, location: &str) -> Result<usize, GatewayError> {
        let driver = self.user_in(token, View::Driver)?;
        let at = self.places.resolve(location)?;
        let rider = rider_of_request_key(key).ok_or_else(|| GatewayError::BadRequest(format!("bad request key {key:?}")))?;
        let r = self
            .transact(&driver, function::PICKUP_RIDER, vec![key.to_owned(), at.to_string()])
            .and_then(|_| {
                let calls = self.trackers.entry(driver.clone()).or_default().pickup(&rider, at);
                self.corider_calls(&driver, &calls)
            });
        self.settle()?;
        r
    }

    /// Tells the riders who stay aboard, then records the dropoff. The
    /// presence list only changes if the dropoff commits.
    pub fn dropoff(&mut self, token: &str, key: &str, location: &str) -> Result<(RideId, usize), GatewayError> {
        let driver = self.user_in(token, View::Driver)?;
        let at = self.places.resolve(location)?;
        let rider = rider_of_request_key(key).ok_or_else(|| GatewayError::BadRequest(format!("bad request key {key:?}")))?;
        let mut tracker = self.trackers.get(&driver).cloned().unwrap_or_default();
        let calls = tracker.dropoff(&rider, at);
        let r = self.corider_calls(&driver, &calls).and_then(|n| {
            let payload = self.transact(&driver, function::DROPOFF_RIDER, vec![key.to_owned(), at.to_string()])?;
            Ok((parse_ride_id(&payload)?, n))
        });
        if r.is_ok() {
            if tracker.on_board().is_empty() {
                self.trackers.remove(&driver);
            } else {
                self.trackers.insert(driver, tracker);
            }
        }
        self.settle()?;
        r
    }

    /// Manual co-rider record, for drivers correcting a missed update.
    pub fn record_corider(
        &mut self,
        token: &str,
        key: &str,
        corider: &UserId,
        location: &str,
        kind: CoriderKind,
    ) -> Result<(), GatewayError> {
        let driver = self.user_in(token, View::Driver)?;
        let call = CoriderCall {
            rider_key: key.to_owned(),
            corider: corider.clone(),
            location: self.places.resolve(location)?,
            kind,
        };
        let r = self.corider_calls(&driver, &[call]);
        self.settle()?;
        r.map(drop)
    }

    fn corider_calls(&mut self, driver: &UserId, calls: &[CoriderCall]) -> Result<usize, GatewayError> {
        for c in calls {
            self.transact_retrying(driver, function::SET_CORIDER_INFORMATION, c.args())?;
        }
        Ok(calls.len())
    }

    // Rider operations

    /// Opens a ride request. The destination is kept by the gateway and
    /// only written to the ledger once a driver accepts.
    pub fn request_ride(&mut self, token: &str, from: &str, to: &str) -> Result<RideTicket, GatewayError> {
        let user = self.user_in(token, View::Rider)?;
        let pickup = self.places.resolve(from)?;
        let destination = self.places.resolve(to)?;
        let r = self
            .transact(&user, function::REQUEST_RIDE, vec![pickup.to_string()])
            .and_then(|payload| {
                let key = String::from_utf8(payload).map_err(|e| GatewayError::BadRequest(e.to_string()))?;
                let req: TemporalRideRequest = self.query(&user, function::GET_RIDE_REQUEST, vec![])?;
                let ride_id = RideId::derive(&user, &req.request_tx);
                self.flows.insert(
                    user.clone(),
                    RiderFlow {
                        key: key.clone(),
                        ride_id,
                        destination,
                    },
                );
                Ok(RideTicket {
                    key,
                    ride_id,
                    pickup,
                    destination,
                })
            });
        self.settle()?;
        r
    }

    /// Runs whatever rider step the ledger is waiting for and returns the
    /// request as it now stands. For clients that are not online to
    /// receive events.
    pub fn advance(&mut self, token: &str) -> Result<Option<TemporalRideRequest>, GatewayError> {
        let user = self.user_in(token, View::Rider)?;
        let r = self.advance_rider(&user);
        self.settle()?;
        r?;
        match self.query(&user, function::GET_RIDE_REQUEST, vec![]) {
            Ok(req) => Ok(Some(req)),
            Err(e) if e.code() == Some("NoActiveRide") => Ok(None),
            Err(e) => Err(e),
        }
    }

    pub fn rider_flow(&self, user: &UserId) -> Option<&RiderFlow> {
        self.flows.get(user)
    }

    fn advance_rider(&mut self, user: &UserId) -> Result<(), GatewayError> {
        let Some(flow) = self.flows.get(user).cloned() else {
            return Ok(());
        };
        let req: TemporalRideRequest = match self.query(user, function::GET_RIDE_REQUEST, vec![]) {
            Ok(r) => r,
            Err(e) if e.code() == Some("NoActiveRide") => {
                self.flows.remove(user);
                return Ok(());
            }
            Err(e) => return Err(e),
        };
        if RideId::derive(user, &req.request_tx) != flow.ride_id {
            self.flows.remove(user);
            return Ok(());
        }
        match req.status {
            RideStatus::Accepted | RideStatus::PickedUp if req.destination.is_none() => {
                self.transact_retrying(user, function::SET_RIDE_DESTINATION, vec![flow.destination.to_string()])?;
            }
            RideStatus::Dropping => {
                let at = req.dropoff.unwrap_or(flow.destination);
                let payload = self.transact_retrying(user, function::LEAVE_DRIVER, vec![at.to_string()])?;
                let ride_id = parse_ride_id(&payload)?;
                self.flows.remove(user);
                self.emit_to(user, View::Rider, GatewayEvent::Archived { ride_id });
            }
            _ => {}
        }
        Ok(())
    }

    /// Archived rides plus anything in flight, as the caller may see it.
    pub fn history(&mut self, token: &str) -> Result<RideHistory, GatewayError> {
        let user = self.sessions.get(token).ok_or(GatewayError::UnknownSession)?.user.clone();
        let info: UserInfo = self.query(&user, function::GET_USER_INFO, vec![])?;
        let mut rides = Vec::with_capacity(info.ride_ids.len());
        for id in &info.ride_ids {
            rides.push(self.query(&user, function::GET_RIDE, vec![id.to_string()])?);
        }
        let active = match self.query(&user, function::GET_RIDE_REQUEST, vec![]) {
            Ok(r) => Some(r),
            Err(e) if e.code() == Some("NoActiveRide") => None,
            Err(e) => return Err(e),
        };
        let driving = if info.driver.is_some() {
            self.query(&user, function::GET_DRIVEN_REQUESTS, vec![])?
        } else {
            Vec::new()
        };
        Ok(RideHistory {
            user_id: user,
            name: info.name,
            driver: info.driver,
            rides,
            active,
            driving,
        })
    }

    // Network plumbing

    fn client(&self, user: &UserId) -> Result<ClientIdentity, GatewayError> {
        self.net.client(user).cloned().ok_or(GatewayError::AuthFailed)
    }

    fn query<T: DeserializeOwned>(&mut self, user: &UserId, f: &str, args: Vec<String>) -> Result<T, GatewayError> {
        let client = self.client(user)?;
        let bytes = self.net.evaluate(&client, f, args)?;
        serde_json::from_slice(&bytes).map_err(|e| GatewayError::TxRejected {
            code: "CorruptState".into(),
            message: format!("{f}: {e}"),
        })
    }

    fn transact(&mut self, user: &UserId, f: &'static str, args: Vec<String>) -> Result<Vec<u8>, GatewayError> {
        self.transact_all(vec![(user.clone(), f, args)]).pop().expect("one call")
    }

    /// Retries transient conflicts. Only for idempotent follow-up steps.
    fn transact_retrying(&mut self, user: &UserId, f: &'static str, args: Vec<String>) -> Result<Vec<u8>, GatewayError> {
        let mut attempt = 0;
        loop {
            attempt += 1;
            match self.transact(user, f, args.clone()) {
                Err(e) if attempt < CONFLICT_RETRIES && matches!(e.code(), Some("ReadConflict" | "EndorsementMismatch")) => {}
                r => return r,
            }
        }
    }

    fn transact_all(&mut self, calls: Vec<(UserId, &'static str, Vec<String>)>) -> Vec<Result<Vec<u8>, GatewayError>> {
        let mut subs = Vec::with_capacity(calls.len());
        for (user, f, args) in calls {
            match self.client(&user) {
                Ok(c) => subs.push(Ok(self.net.submit(&c, f, args))),
                Err(e) => subs.push(Err(e)),
            }
        }
        while subs.iter().any(|s| matches!(s, Ok(id) if !self.outcomes.contains_key(id))) {
            match self.net.poll() {
                Some(n) => self.handle(n),
                None => break,
            }
        }
        subs.into_iter()
            .map(|s| self.outcomes.remove(&s?).unwrap_or(Err(GatewayError::Stalled)))
            .collect()
    }

    fn handle(&mut self, n: Notification) {
        match n {
            Notification::SubmissionDone { submission, payload, .. } => {
                self.payloads.insert(submission, payload);
            }
            Notification::EndorsementFailed { submission, error, .. } => {
                self.outcomes.insert(submission, Err(error.into()));
            }
            Notification::TxCommitted {
                submission, validation, ..
            } => {
                let payload = self.payloads.remove(&submission).unwrap_or_default();
                let r = match validation {
                    Validation::Valid => Ok(payload),
                    Validation::Invalid(reason) => Err(GatewayError::invalid(reason)),
                };
                self.outcomes.insert(submission, r);
            }
            Notification::ChaincodeEvent { subscription, event, .. } => self.route(subscription, &event),
            Notification::Timer { .. } => {}
        }
    }

    /// Delivers one committed event to one session, if it concerns it.
    fn route(&mut self, subscription: SubscriptionId, event: &ChaincodeEvent) {
        let Some(token) = self.by_subscription.get(&subscription) else {
            return;
        };
        let (Some(kind), Ok(p)) = (
            RideEventKind::from_name(&event.name),
            serde_json::from_slice::<EventPayload>(&event.payload),
        ) else {
            return;
        };
        let s = self.sessions.get_mut(token).expect("subscriptions track sessions");
        let flow = self.flows.get(&s.user).filter(|_| s.view == View::Rider);
        let mine = flow.is_some_and(|f| f.key == p.reference);
        match kind {
            RideEventKind::RideRequested => {
                if s.driving_at.is_some() && p.reference != request_key(&s.user) {
                    s.offers.insert(p.reference.clone(), p.location);
                    s.emit(GatewayEvent::Offer {
                        key: p.reference,
                        pickup: p.location,
                    });
                }
            }
            RideEventKind::RideAccepted => {
                if s.offers.remove(&p.reference).is_some() && !s.accepting.contains(&p.reference) {
                    s.emit(GatewayEvent::OfferTaken { key: p.reference.clone() });
                }
                if mine {
                    s.emit(GatewayEvent::Accepted { key: p.reference });
                    if !self.deferred.contains(&s.user) {
                        self.deferred.push_back(s.user.clone());
                    }
                }
            }
            RideEventKind::DriverArrived => {
                if mine {
                    s.emit(GatewayEvent::DriverArrived { key: p.reference });
                }
            }
            RideEventKind::RideEnding => {
                if let Some(f) = flow.filter(|f| f.ride_id.to_string() == p.reference) {
                    s.emit(GatewayEvent::RideEnding {
                        ride_id: f.ride_id,
                        location: p.location,
                    });
                    if !self.deferred.contains(&s.user) {
                        self.deferred.push_back(s.user.clone());
                    }
                }
            }
        }
    }

    fn emit_to(&mut self, user: &UserId, view: View, event: GatewayEvent) {
        for s in self.sessions.values_mut().filter(|s| &s.user == user && s.view == view) {
            s.emit(event.clone());
        }
    }

    /// Runs the network dry, including automatic rider steps triggered by
    /// events, then persists.
    fn settle(&mut self) -> Result<(), GatewayError> {
        loop {
            while let Some(n) = self.net.poll() {
                self.handle(n);
            }
            let Some(user) = self.deferred.pop_front() else {
                break;
            };
            if let Err(e) = self.advance_rider(&user) {
                self.emit_to(&user, View::Rider, GatewayEvent::Error { message: e.to_string() });
            }
        }
        self.outcomes.clear();
        self.payloads.clear();
        self.persist()
    }

    fn persist(&mut self) -> Result<(), GatewayError> {
        let Some(store) = &self.store else {
            return Ok(());
        };
        let blocks = self.net.peer_ledger(0).blocks();
        if blocks.len() > self.persisted_blocks {
            store.blocks().append(&blocks[self.persisted_blocks..])?;
            self.persisted_blocks = blocks.len();
        }
        let saved = Saved {
            flows: self.flows.clone(),
            on_board: self
                .trackers
                .iter()
                .map(|(d, t)| (d.clone(), t.on_board().to_vec()))
                .collect(),
        };
        store.write_json("gateway.json", &saved)
    }
}

fn parse_ride_id(payload: &[u8]) -> Result<RideId, GatewayError> {
    std::str::from_utf8(payload)
        .ok()
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| GatewayError::BadRequest("chaincode returned a malformed ride id".into()))
}
