use serde::de::DeserializeOwned;
use serde::Serialize;
use thiserror::Error;

use crate::chaincode::geo::{GeoError, GeoPoint};
use crate::chaincode::records::*;
use crate::crypto::Digest;
use crate::identity::UserId;
use crate::ledger::{Chaincode, ChaincodeFailure, InvocationContext};

pub const DEFAULT_PICKUP_TOLERANCE_M: f64 = 100.0;

/// Wire names of the chaincode functions.
pub mod function {
    pub const REGISTER_USER: &str = "registerUser";
    pub const UNREGISTER_USER: &str = "unregisterUser";
    pub const UPGRADE_TO_DRIVER: &str = "upgradeToDriver";
    pub const GET_USER_INFO: &str = "getUserInfo";
    pub const REQUEST_RIDE: &str = "requestRide";
    pub const ACCEPT_RIDE: &str = "acceptRide";
    pub const SET_RIDE_DESTINATION: &str = "setRideDestination";
    pub const PICKUP_RIDER: &str = "pickupRider";
    pub const SET_CORIDER_INFORMATION: &str = "setCoriderInformation";
    pub const DROPOFF_RIDER: &str = "dropoffRider";
    pub const LEAVE_DRIVER: &str = "leaveDriver";
    pub const GET_RIDE: &str = "getRide";
    pub const GET_RIDE_REQUEST: &str = "getRideRequest";
    pub const GET_DRIVEN_REQUESTS: &str = "getDrivenRequests";
    pub const QUERY_OPEN_REQUESTS: &str = "queryOpenRequests";
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ChaincodeError {
    #[error("caller is not registered")]
    NotRegistered,
    #[error("caller is already registered")]
    AlreadyRegistered,
    #[error("caller has a ride in progress")]
    RideInProgress,
    #[error("caller is already a driver")]
    AlreadyDriver,
    #[error("caller is not a driver")]
    NotADriver,
    #[error("caller already has an active ride request")]
    RideAlreadyActive,
    #[error("ride request is not open")]
    RideNotOpen,
    #[error("drivers may not accept their own requests")]
    OwnRequest,
    #[error("no such ride request {0:?}")]
    NoSuchRequest(String),
    #[error("caller has no active ride request")]
    NoActiveRide,
    #[error("ride request is in status {0:?}")]
    WrongStatus(RideStatus),
    #[error("destination already set")]
    AlreadySet,
    #[error("caller is not the driver of this ride")]
    NotYourRide,
    #[error("driver is {distance_m:.1} m from the pickup point")]
    NotAtPickupLocation { distance_m: f64 },
    #[error("a rider cannot be their own co-rider")]
    SelfCorider,
    #[error("no such ride")]
    NoSuchRide,
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("unknown function {0:?}")]
    UnknownFunction(String),
    #[error("corrupt ledger value under {0:?}")]
    CorruptState(String),
}

impl ChaincodeError {
    pub fn code(&self) -> &'static str {
        match self {
            ChaincodeError::NotRegistered => "NotRegistered",
            ChaincodeError::AlreadyRegistered => "AlreadyRegistered",
            ChaincodeError::RideInProgress => "RideInProgress",
            ChaincodeError::AlreadyDriver => "AlreadyDriver",
            ChaincodeError::NotADriver => "NotADriver",
            ChaincodeError::RideAlreadyActive => "RideAlreadyActive",
            ChaincodeError::RideNotOpen => "RideNotOpen",
            ChaincodeError::OwnRequest => "OwnRequest",
            ChaincodeError::NoSuchRequest(_) => "NoSuchRequest",
            ChaincodeError::NoActiveRide => "NoActiveRide",
            ChaincodeError::WrongStatus(_) => "WrongStatus",
            ChaincodeError::AlreadySet => "AlreadySet",
            ChaincodeError::NotYourRide => "NotYourRide",
            ChaincodeError::NotAtPickupLocation { .. } => "NotAtPickupLocation",
            ChaincodeError::SelfCorider => "SelfCorider",
            ChaincodeError::NoSuchRide => "NoSuchRide",
            ChaincodeError::InvalidArgument(_) => "InvalidArgument",
            ChaincodeError::UnknownFunction(_) => "UnknownFunction",
            ChaincodeError::CorruptState(_) => "CorruptState",
        }
    }
}

impl From<GeoError> for ChaincodeError {
    fn from(e: GeoError) -> Self {
        ChaincodeError::InvalidArgument(e.to_string())
    }
}

impl From<ChaincodeError> for ChaincodeFailure {
    fn from(e: ChaincodeError) -> Self {
        ChaincodeFailure {
            code: e.code().to_owned(),
            message: e.to_string(),
        }
    }
}

type Result<T> = std::result::Result<T, ChaincodeError>;

/// The ride-hailing contract.
///
/// Every operation is a pure function of its invocation context: caller
/// certificate, arguments, tx id, client timestamp and the snapshot. No
/// state is kept between invocations.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RideContract {
    pub pickup_tolerance_m: f64,
}

impl Default for RideContract {
    fn default() -> Self {
        RideContract {
            pickup_tolerance_m: DEFAULT_PICKUP_TOLERANCE_M,
        }
    }
}

fn load<T: DeserializeOwned>(ctx: &mut InvocationContext<'_>, key: &str) -> Result<Option<T>> {
    match ctx.get_state(key) {
        None => Ok(None),
        Some(bytes) => serde_json::from_slice(&bytes)
            .map(Some)
            .map_err(|_| ChaincodeError::CorruptState(key.to_owned())),
    }
}

fn store<T: Serialize>(ctx: &mut InvocationContext<'_>, key: &str, value: &T) {
    let bytes = serde_json::to_vec(value).expect("records serialize");
    ctx.put_state(key, bytes);
}

fn emit(ctx: &mut InvocationContext<'_>, kind: RideEventKind, reference: String, location: GeoPoint) {
    let payload = serde_json::to_vec(&EventPayload {
        reference,
        location,
    })
    .expect("payload serializes");
    ctx.emit(kind.name(), payload);
}

fn json<T: Serialize>(v: &T) -> Vec<u8> {
    serde_json::to_vec(v).expect("response serializes")
}

impl RideContract {
    pub fn new(pickup_tolerance_m: f64) -> Self {
        RideContract { pickup_tolerance_m }
    }

    fn caller_record(&self, ctx: &mut InvocationContext<'_>) -> Result<(UserId, UserRecord)> {
        let me = ctx.caller_id();
        let rec = load(ctx, &user_key(&me))?.ok_or(ChaincodeError::NotRegistered)?;
        Ok((me, rec))
    }

    fn request_at(
        &self,
        ctx: &mut InvocationContext<'_>,
        key: &str,
    ) -> Result<TemporalRideRequest> {
        if rider_of_request_key(key).is_none() {
            return Err(ChaincodeError::InvalidArgument(format!(
                "{key:?} is not a ride request key"
            )));
        }
        load(ctx, key)?.ok_or_else(|| ChaincodeError::NoSuchRequest(key.to_owned()))
    }

    /// Loads a request the caller drives or may come to drive. Another
    /// driver's ride is `NotYourRide`; the status is checked afterwards.
    fn driven_request(
        &self,
        ctx: &mut InvocationContext<'_>,
        key: &str,
        me: &UserId,
        expected: RideStatus,
    ) -> Result<TemporalRideRequest> {
        let req = self.request_at(ctx, key)?;
        if matches!(&req.driver, Some(d) if d != me) {
            return Err(ChaincodeError::NotYourRide);
        }
        if req.status != expected {
            return Err(ChaincodeError::WrongStatus(req.status));
        }
        Ok(req)
    }

    pub fn register_user(
        &self,
        ctx: &mut InvocationContext<'_>,
        password_hash: Digest,
        salt: [u8; 16],
        name: Option<String>,
    ) -> Result<()> {
        let me = ctx.caller_id();
        let key = user_key(&me);
        if ctx.get_state(&key).is_some() {
            return Err(ChaincodeError::AlreadyRegistered);
        }
        let record = UserRecord {
            password_hash,
            salt,
            ride_ids: Vec::new(),
            name: name.filter(|n| !n.is_empty()),
            driver: None,
            active_rides: Vec::new(),
            active_group: None,
        };
        store(ctx, &key, &record);
        Ok(())
    }

    pub fn unregister_user(&self, ctx: &mut InvocationContext<'_>) -> Result<()> {
        let (me, rec) = self.caller_record(ctx)?;
        if ctx.get_state(&request_key(&me)).is_some() || !rec.active_rides.is_empty() {
            return Err(ChaincodeError::RideInProgress);
        }
        ctx.del_state(&user_key(&me));
        Ok(())
    }

    pub fn upgrade_to_driver(
        &self,
        ctx: &mut InvocationContext<'_>,
        name: &str,
        make: &str,
        model: &str,
        year: u32,
    ) -> Result<()> {
        for (field, v) in [("name", name), ("make", make), ("model", model)] {
            if v.trim().is_empty() {
                return Err(ChaincodeError::InvalidArgument(format!("{field} is empty")));
            }
        }
        if year == 0 {
            return Err(ChaincodeError::InvalidArgument("year must be positive".into()));
        }
        let (me, mut rec) = self.caller_record(ctx)?;
        if rec.driver.is_some() {
            return Err(ChaincodeError::AlreadyDriver);
        }
        rec.name = Some(name.to_owned());
        rec.driver = Some(DriverProfile {
            vehicle_make: make.to_owned(),
            vehicle_model: model.to_owned(),
            vehicle_year: year,
        });
        store(ctx, &user_key(&me), &rec);
        Ok(())
    }

    pub fn get_user_info(&self, ctx: &mut InvocationContext<'_>) -> Result<UserInfo> {
        Ok(self.caller_record(ctx)?.1.into())
    }

    pub fn request_ride(&self, ctx: &mut InvocationContext<'_>, pickup: GeoPoint) -> Result<String> {
        let (me, _) = self.caller_record(ctx)?;
        let key = request_key(&me);
        if ctx.get_state(&key).is_some() {
            return Err(ChaincodeError::RideAlreadyActive);
        }
        let req = TemporalRideRequest {
            rider: me,
            status: RideStatus::Open,
            pickup,
            destination: None,
            driver: None,
            corider_pickups: Vec::new(),
            corider_dropoffs: Vec::new(),
            ride_id: None,
            requested_at: ctx.timestamp_ms(),
            request_tx: ctx.tx_id(),
            group_id: None,
            dropoff: None,
        };
        store(ctx, &key, &req);
        emit(ctx, RideEventKind::RideRequested, key.clone(), pickup);
        Ok(key)
    }

    pub fn accept_ride(&self, ctx: &mut InvocationContext<'_>, temporal_key: &str) -> Result<RideId> {
        let (me, mut rec) = self.caller_record(ctx)?;
        if rec.driver.is_none() {
            return Err(ChaincodeError::NotADriver);
        }
        let mut req = self.request_at(ctx, temporal_key)?;
        if req.status != RideStatus::Open {
            return Err(ChaincodeError::RideNotOpen);
        }
        if req.rider == me {
            return Err(ChaincodeError::OwnRequest);
        }
        let ride_id = RideId::derive(&req.rider, &req.request_tx);
        let group = match (rec.active_rides.is_empty(), rec.active_group) {
            (false, Some(g)) => g,
            _ => ride_id,
        };
        rec.active_rides.push(req.rider.clone());
        rec.active_group = Some(group);
        req.status = RideStatus::Accepted;
        req.driver = Some(me.clone());
        req.ride_id = Some(ride_id);
        req.group_id = Some(group);
        store(ctx, &user_key(&me), &rec);
        store(ctx, temporal_key, &req);
        emit(ctx, RideEventKind::RideAccepted, temporal_key.to_owned(), req.pickup);
        Ok(ride_id)
    }

    pub fn set_ride_destination(
        &self,
        ctx: &mut InvocationContext<'_>,
        destination: GeoPoint,
    ) -> Result<()> {
        let me = ctx.caller_id();
        let key = request_key(&me);
        let mut req: TemporalRideRequest = load(ctx, &key)?.ok_or(ChaincodeError::NoActiveRide)?;
        if req.status != RideStatus::Accepted {
            return Err(ChaincodeError::WrongStatus(req.status));
        }
        if req.destination.is_some() {
            return Err(ChaincodeError::AlreadySet);
        }
        req.destination = Some(destination);
        store(ctx, &key, &req);
        Ok(())
    }

    pub fn pickup_rider(
        &self,
        ctx: &mut InvocationContext<'_>,
        temporal_key: &str,
        driver_location: GeoPoint,
    ) -> Result<()> {
        let me = ctx.caller_id();
        let mut req = self.driven_request(ctx, temporal_key, &me, RideStatus::Accepted)?;
        if req.destination.is_none() {
            return Err(ChaincodeError::WrongStatus(req.status));
        }
        let distance_m = driver_location.haversine_m(&req.pickup);
        if distance_m > self.pickup_tolerance_m {
            return Err(ChaincodeError::NotAtPickupLocation { distance_m });
        }
        req.status = RideStatus::PickedUp;
        store(ctx, temporal_key, &req);
        emit(ctx, RideEventKind::DriverArrived, temporal_key.to_owned(), req.pickup);
        Ok(())
    }

    pub fn set_corider_information(
        &self,
        ctx: &mut InvocationContext<'_>,
        rider_key: &str,
        corider: &UserId,
        location: GeoPoint,
        kind: CoriderKind,
    ) -> Result<()> {
        let me = ctx.caller_id();
        let mut req = self.driven_request(ctx, rider_key, &me, RideStatus::PickedUp)?;
        if &req.rider == corider {
            return Err(ChaincodeError::SelfCorider);
        }
        // Presence is asserted by the driver; the co-rider's own request is
        // not read, so this write never conflicts with the co-rider's ride.
        let stop = Stop {
            user: corider.clone(),
            location,
        };
        match kind {
            CoriderKind::Pickup => req.corider_pickups.push(stop),
            CoriderKind::Dropoff => req.corider_dropoffs.push(stop),
        }
        store(ctx, rider_key, &req);
        Ok(())
    }

    pub fn dropoff_rider(
        &self,
        ctx: &mut InvocationContext<'_>,
        temporal_key: &str,
        dropoff_location: GeoPoint,
    ) -> Result<RideId> {
        let me = ctx.caller_id();
        let mut req = self.driven_request(ctx, temporal_key, &me, RideStatus::PickedUp)?;
        let (ride_id, group) = match (req.ride_id, req.group_id) {
            (Some(r), Some(g)) => (r, g),
            _ => return Err(ChaincodeError::CorruptState(temporal_key.to_owned())),
        };
        let (_, mut rec) = self.caller_record(ctx)?;

        let archive_key = ride_key(&me, &group);
        let mut archive: PermanentRide = load(ctx, &archive_key)?.unwrap_or(PermanentRide {
            ride_id: group,
            role: ParticipantRole::Driver,
            pickups: Vec::new(),
            dropoffs: Vec::new(),
            witnessed_corider_pickups: Vec::new(),
            witnessed_corider_dropoffs: Vec::new(),
            counterparts: Vec::new(),
            completed_at: 0,
        });
        archive.pickups.push(Stop {
            user: req.rider.clone(),
            location: req.pickup,
        });
        archive.dropoffs.push(Stop {
            user: req.rider.clone(),
            location: dropoff_location,
        });
        archive.counterparts.push(req.rider.clone());
        archive.completed_at = ctx.timestamp_ms();
        store(ctx, &archive_key, &archive);

        rec.active_rides.retain(|r| r != &req.rider);
        if !rec.ride_ids.contains(&group) {
            rec.ride_ids.push(group);
        }
        if rec.active_rides.is_empty() {
            rec.active_group = None;
        }
        store(ctx, &user_key(&me), &rec);

        req.status = RideStatus::Dropping;
        req.dropoff = Some(dropoff_location);
        store(ctx, temporal_key, &req);
        emit(ctx, RideEventKind::RideEnding, ride_id.to_string(), dropoff_location);
        Ok(ride_id)
    }

    pub fn leave_driver(
        &self,
        ctx: &mut InvocationContext<'_>,
        dropoff_location: GeoPoint,
    ) -> Result<RideId> {
        let me = ctx.caller_id();
        let key = request_key(&me);
        let req: TemporalRideRequest = load(ctx, &key)?.ok_or(ChaincodeError::NoActiveRide)?;
        if req.status != RideStatus::Dropping {
            return Err(ChaincodeError::WrongStatus(req.status));
        }
        let (Some(ride_id), Some(driver)) = (req.ride_id, req.driver.clone()) else {
            return Err(ChaincodeError::CorruptState(key));
        };
        let (_, mut rec) = self.caller_record(ctx)?;
        let archive = PermanentRide {
            ride_id,
            role: ParticipantRole::Rider,
            pickups: vec![Stop {
                user: me.clone(),
                location: req.pickup,
            }],
            dropoffs: vec![Stop {
                user: me.clone(),
                location: dropoff_location,
            }],
            witnessed_corider_pickups: req.corider_pickups,
            witnessed_corider_dropoffs: req.corider_dropoffs,
            counterparts: vec![driver],
            completed_at: ctx.timestamp_ms(),
        };
        store(ctx, &ride_key(&me, &ride_id), &archive);
        rec.ride_ids.push(ride_id);
        store(ctx, &user_key(&me), &rec);
        ctx.del_state(&key);
        Ok(ride_id)
    }

    pub fn get_ride(&self, ctx: &mut InvocationContext<'_>, ride_id: &RideId) -> Result<PermanentRide> {
        let (me, _) = self.caller_record(ctx)?;
        load(ctx, &ride_key(&me, ride_id))?.ok_or(ChaincodeError::NoSuchRide)
    }

    /// The caller's own in-flight request.
    pub fn get_ride_request(&self, ctx: &mut InvocationContext<'_>) -> Result<TemporalRideRequest> {
        let me = ctx.caller_id();
        load(ctx, &request_key(&me))?.ok_or(ChaincodeError::NoActiveRide)
    }

    /// In-flight requests the calling driver has accepted.
    pub fn get_driven_requests(
        &self,
        ctx: &mut InvocationContext<'_>,
    ) -> Result<Vec<TemporalRideRequest>> {
        let (_, rec) = self.caller_record(ctx)?;
        if rec.driver.is_none() {
            return Err(ChaincodeError::NotADriver);
        }
        let mut out = Vec::new();
        for rider in &rec.active_rides {
            if let Some(req) = load::<TemporalRideRequest>(ctx, &request_key(rider))? {
                out.push(req);
            }
        }
        Ok(out)
    }

    /// Open requests only, reduced to key and pickup point.
    pub fn query_open_requests(&self, ctx: &mut InvocationContext<'_>) -> Result<Vec<OpenRequest>> {
        let (_, rec) = self.caller_record(ctx)?;
        if rec.driver.is_none() {
            return Err(ChaincodeError::NotADriver);
        }
        let mut out = Vec::new();
        for (key, bytes) in ctx.scan_prefix(REQUEST_PREFIX) {
            let req: TemporalRideRequest = serde_json::from_slice(&bytes)
                .map_err(|_| ChaincodeError::CorruptState(key.clone()))?;
            if req.status == RideStatus::Open {
                out.push(OpenRequest {
                    key,
                    pickup: req.pickup,
                });
            }
        }
        Ok(out)
    }

    fn dispatch(&self, ctx: &mut InvocationContext<'_>) -> Result<Vec<u8>> {
        use function::*;
        let function = ctx.function().to_owned();
        let args: Vec<String> = ctx.args().to_vec();
        let arity = |n: usize| -> Result<()> {
            if args.len() == n {
                Ok(())
            } else {
                Err(ChaincodeError::InvalidArgument(format!(
                    "{function} takes {n} arguments, got {}",
                    args.len()
                )))
            }
        };
        let geo = |i: usize| -> Result<GeoPoint> { Ok(args[i].parse::<GeoPoint>()?) };
        match function.as_str() {
            REGISTER_USER => {
                if !(2..=3).contains(&args.len()) {
                    arity(2)?;
                }
                let hash: Digest = args[0]
                    .parse()
                    .map_err(|_| ChaincodeError::InvalidArgument("password hash must be 32 hex bytes".into()))?;
                let mut salt = [0u8; 16];
                hex::decode_to_slice(&args[1], &mut salt)
                    .map_err(|_| ChaincodeError::InvalidArgument("salt must be 16 hex bytes".into()))?;
                self.register_user(ctx, hash, salt, args.get(2).cloned())?;
                Ok(Vec::new())
            }
            UNREGISTER_USER => {
                arity(0)?;
                self.unregister_user(ctx)?;
                Ok(Vec::new())
            }
            UPGRADE_TO_DRIVER => {
                arity(4)?;
                let year = args[3]
                    .parse()
                    .map_err(|_| ChaincodeError::InvalidArgument(format!("bad year {:?}", args[3])))?;
                self.upgrade_to_driver(ctx, &args[0], &args[1], &args[2], year)?;
                Ok(Vec::new())
            }
            GET_USER_INFO => {
                arity(0)?;
                Ok(json(&self.get_user_info(ctx)?))
            }
            REQUEST_RIDE => {
                arity(1)?;
                Ok(self.request_ride(ctx, geo(0)?)?.into_bytes())
            }
            ACCEPT_RIDE => {
                arity(1)?;
                Ok(self.accept_ride(ctx, &args[0])?.to_string().into_bytes())
            }
            SET_RIDE_DESTINATION => {
                arity(1)?;
                self.set_ride_destination(ctx, geo(0)?)?;
                Ok(Vec::new())
            }
            PICKUP_RIDER => {
                arity(2)?;
                self.pickup_rider(ctx, &args[0], geo(1)?)?;
                Ok(Vec::new())
            }
            SET_CORIDER_INFORMATION => {
                arity(4)?;
                let corider: UserId = args[1]
                    .parse()
                    .map_err(|e: crate::identity::IdentityError| ChaincodeError::InvalidArgument(e.to_string()))?;
                let kind: CoriderKind = args[3].parse().map_err(ChaincodeError::InvalidArgument)?;
                self.set_corider_information(ctx, &args[0], &corider, geo(2)?, kind)?;
                Ok(Vec::new())
            }
            DROPOFF_RIDER => {
                arity(2)?;
                Ok(self.dropoff_rider(ctx, &args[0], geo(1)?)?.to_string().into_bytes())
            }
            LEAVE_DRIVER => {
                arity(1)?;
                Ok(self.leave_driver(ctx, geo(0)?)?.to_string().into_bytes())
            }
            GET_RIDE => {
                arity(1)?;
                let id: RideId = args[0]
                    .parse()
                    .map_err(|_| ChaincodeError::InvalidArgument("ride id must be 32 hex bytes".into()))?;
                Ok(json(&self.get_ride(ctx, &id)?))
            }
            GET_RIDE_REQUEST => {
                arity(0)?;
                Ok(json(&self.get_ride_request(ctx)?))
            }
            GET_DRIVEN_REQUESTS => {
                arity(0)?;
                Ok(json(&self.get_driven_requests(ctx)?))
            }
            QUERY_OPEN_REQUESTS => {
                arity(0)?;
                Ok(json(&self.query_open_requests(ctx)?))
            }
            other => Err(ChaincodeError::UnknownFunction(other.to_owned())),
        }
    }
}

impl Chaincode for RideContract {
    fn invoke(&self, ctx: &mut InvocationContext<'_>) -> std::result::Result<Vec<u8>, ChaincodeFailure> {
        self.dispatch(ctx).map_err(Into::into)
    }
}
