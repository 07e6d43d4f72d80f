use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::chaincode::geo::GeoPoint;
use crate::crypto::Digest;
use crate::identity::UserId;

pub const USER_PREFIX: &str = "user:";
pub const REQUEST_PREFIX: &str = "rideRequest:";
pub const RIDE_PREFIX: &str = "ride:";

pub fn user_key(id: &UserId) -> String {
    format!("{USER_PREFIX}{id}")
}

pub fn request_key(rider: &UserId) -> String {
    format!("{REQUEST_PREFIX}{rider}")
}

pub fn ride_key(owner: &UserId, ride: &RideId) -> String {
    format!("{RIDE_PREFIX}{owner}:{ride}")
}

/// Recovers the rider from a `rideRequest:<rider>` key.
pub fn rider_of_request_key(key: &str) -> Option<UserId> {
    key.strip_prefix(REQUEST_PREFIX)?.parse().ok()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct RideId(pub Digest);

impl RideId {
    /// SHA-256 of the rider id followed by the 32-byte id of the
    /// transaction that created the request.
    pub fn derive(rider: &UserId, request_tx: &Digest) -> Self {
        RideId(Digest::of_parts([rider.as_str().as_bytes(), request_tx.as_bytes()]))
    }
}

impl fmt::Display for RideId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

impl FromStr for RideId {
    type Err = hex::FromHexError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        s.parse().map(RideId)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DriverProfile {
    pub vehicle_make: String,
    pub vehicle_model: String,
    pub vehicle_year: u32,
}

/// Ledger value under `user:<UserId>`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UserRecord {
    pub password_hash: Digest,
    #[serde(with = "hex::serde")]
    pub salt: [u8; 16],
    pub ride_ids: Vec<RideId>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub driver: Option<DriverProfile>,
    /// Riders whose accepted rides this driver has not yet dropped off.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub active_rides: Vec<UserId>,
    /// Archive group for the current run of overlapping rides.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub active_group: Option<RideId>,
}

/// What `getUserInfo` returns: the caller's own registration data.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UserInfo {
    pub password_hash: Digest,
    #[serde(with = "hex::serde")]
    pub salt: [u8; 16],
    pub ride_ids: Vec<RideId>,
    pub name: Option<String>,
    pub driver: Option<DriverProfile>,
}

impl From<UserRecord> for UserInfo {
    fn from(r: UserRecord) -> Self {
        UserInfo {
            password_hash: r.password_hash,
            salt: r.salt,
            ride_ids: r.ride_ids,
            name: r.name,
            driver: r.driver,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RideStatus {
    Open,
    Accepted,
    PickedUp,
    Dropping,
}

impl RideStatus {
    pub const ALL: [RideStatus; 4] = [
        RideStatus::Open,
        RideStatus::Accepted,
        RideStatus::PickedUp,
        RideStatus::Dropping,
    ];
}

/// A participant at a location: a pickup, a dropoff, or a co-rider event.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Stop {
    pub user: UserId,
    pub location: GeoPoint,
}

/// Ledger value under `rideRequest:<rider>`; at most one per rider.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TemporalRideRequest {
    pub rider: UserId,
    pub status: RideStatus,
    pub pickup: GeoPoint,
    pub destination: Option<GeoPoint>,
    pub driver: Option<UserId>,
    pub corider_pickups: Vec<Stop>,
    pub corider_dropoffs: Vec<Stop>,
    pub ride_id: Option<RideId>,
    pub requested_at: u64,
    pub request_tx: Digest,
    /// Driver-side archive this ride is grouped under.
    pub group_id: Option<RideId>,
    /// Where the driver recorded the dropoff.
    pub dropoff: Option<GeoPoint>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParticipantRole {
    Driver,
    Rider,
}

/// Ledger value under `ride:<owner>:<RideID>`: one participant's archive.
///
/// A rider's archive has its own single pickup and dropoff plus only the
/// co-rider events it was present for. A driver's archive lists every pickup
/// and dropoff of the rides grouped under it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PermanentRide {
    pub ride_id: RideId,
    pub role: ParticipantRole,
    pub pickups: Vec<Stop>,
    pub dropoffs: Vec<Stop>,
    pub witnessed_corider_pickups: Vec<Stop>,
    pub witnessed_corider_dropoffs: Vec<Stop>,
    pub counterparts: Vec<UserId>,
    pub completed_at: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum RideEventKind {
    RideRequested,
    RideAccepted,
    DriverArrived,
    RideEnding,
}

impl RideEventKind {
    pub fn name(self) -> &'static str {
        match self {
            RideEventKind::RideRequested => "RideRequested",
            RideEventKind::RideAccepted => "RideAccepted",
            RideEventKind::DriverArrived => "DriverArrived",
            RideEventKind::RideEnding => "RideEnding",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        [
            RideEventKind::RideRequested,
            RideEventKind::RideAccepted,
            RideEventKind::DriverArrived,
            RideEventKind::RideEnding,
        ]
        .into_iter()
        .find(|k| k.name() == name)
    }
}

/// Event payload: a temporal key or RideID, and one location.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EventPayload {
    pub reference: String,
    pub location: GeoPoint,
}

/// One entry of the open-request listing used by late-joining drivers.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OpenRequest {
    pub key: String,
    pub pickup: GeoPoint,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CoriderKind {
    Pickup,
    Dropoff,
}

impl FromStr for CoriderKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "pickup" => Ok(CoriderKind::Pickup),
            "dropoff" => Ok(CoriderKind::Dropoff),
            other => Err(format!("unknown co-rider event kind {other:?}")),
        }
    }
}

impl fmt::Display for CoriderKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CoriderKind::Pickup => "pickup",
            CoriderKind::Dropoff => "dropoff",
        })
    }
}
