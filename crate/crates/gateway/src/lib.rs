//! Client gateway for the ride-hailing network.
//!
//! A [`Gateway`] owns a simulated network, a wallet of client identities and
//! a set of login sessions. Each operation submits its transaction, drives
//! the network until that transaction commits and then lets the network
//! settle, so callers always see a quiescent ledger. Chaincode events are
//! routed only to the sessions entitled to them, and the rider side of a ride
//! (setting the destination, leaving the driver) runs automatically off
//! those events.
//!
//! [`http::router`] exposes the same operations over HTTP with a
//! server-sent event stream per session.

use std::fmt;
use std::io;
use std::str::FromStr;

use hailchain_core::ledger::{InvalidReason, StoreError};
use hailchain_netsim::{NetError, SubmitError};
use serde::{Deserialize, Serialize};
use thiserror::Error;

mod gateway;
pub mod http;
mod places;
mod store;

pub use gateway::{
    password_hash, Gateway, GatewayEvent, HealthReport, RideHistory, RideTicket, RiderFlow, SessionInfo,
};
pub use places::{Place, Places};
pub use store::Store;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum View {
    Rider,
    Driver,
}

impl fmt::Display for View {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            View::Rider => "rider",
            View::Driver => "driver",
        })
    }
}

impl FromStr for View {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "rider" => Ok(View::Rider),
            "driver" => Ok(View::Driver),
            other => Err(format!("unknown view {other:?}, expected rider or driver")),
        }
    }
}

#[derive(Debug, Error)]
pub enum GatewayError {
    #[error("local id {0:?} is already taken in this organization")]
    DuplicateLocalId(String),
    #[error("authentication failed")]
    AuthFailed,
    #[error("user is not registered as a driver")]
    NotADriver,
    #[error("no place named {0:?}")]
    GeocodeMiss(String),
    #[error("ride taken")]
    RideTaken,
    #[error("{code}: {message}")]
    TxRejected { code: String, message: String },
    #[error("unknown or expired session")]
    UnknownSession,
    #[error("operation needs a {0} session")]
    WrongView(View),
    #[error("bad request: {0}")]
    BadRequest(String),
    #[error("network went idle before the transaction committed")]
    Stalled,
    #[error(transparent)]
    Net(#[from] NetError),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error(transparent)]
    Io(#[from] io::Error),
}

impl GatewayError {
    /// Chaincode error code or invalidation reason, if this is a rejection.
    pub fn code(&self) -> Option<&str> {
        match self {
            GatewayError::TxRejected { code, .. } => Some(code),
            _ => None,
        }
    }

    fn invalid(reason: InvalidReason) -> Self {
        GatewayError::TxRejected {
            code: reason.to_string(),
            message: "transaction invalidated at commit".into(),
        }
    }
}

impl From<SubmitError> for GatewayError {
    fn from(e: SubmitError) -> Self {
        match e {
            SubmitError::Chaincode(f) => GatewayError::TxRejected {
                code: f.code,
                message: f.message,
            },
            SubmitError::EndorsementMismatch => GatewayError::TxRejected {
                code: "EndorsementMismatch".into(),
                message: e.to_string(),
            },
            SubmitError::Rejected(m) => GatewayError::TxRejected {
                code: "Rejected".into(),
                message: m,
            },
        }
    }
}
