//! The ride-hailing contract and the data it keeps on the ledger.
//!
//! State lives under three key families:
//!
//! | key                          | value                    |
//! |------------------------------|--------------------------|
//! | `user:<UserId>`              | [`UserRecord`]           |
//! | `rideRequest:<UserId>`       | [`TemporalRideRequest`]  |
//! | `ride:<UserId>:<RideId>`     | [`PermanentRide`]        |
//!
//! Values are JSON. Temporal requests are deleted when the rider leaves;
//! permanent rides are never modified after they are written.

mod contract;
mod geo;
mod presence;
mod records;
mod sandbox;

pub use contract::{function, ChaincodeError, RideContract, DEFAULT_PICKUP_TOLERANCE_M};
pub use geo::{GeoError, GeoPoint, EARTH_RADIUS_M};
pub use presence::{CoriderCall, PresenceTracker};
pub use records::*;
pub use sandbox::{Outcome, Sandbox, SandboxError, SANDBOX_ORG};
