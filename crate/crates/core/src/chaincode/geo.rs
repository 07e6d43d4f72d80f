use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

const SCALE: i64 = 10_000_000;
const MAX_FRACTION_DIGITS: usize = 7;
pub const EARTH_RADIUS_M: f64 = 6_371_000.0;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GeoError {
    #[error("latitude {0} outside [-90, 90]")]
    LatitudeRange(String),
    #[error("longitude {0} outside [-180, 180]")]
    LongitudeRange(String),
    #[error("malformed coordinate {0:?}; expected \"lat,lon\" with at most 7 fractional digits")]
    Malformed(String),
}

/// A latitude/longitude pair stored as fixed-point 1e-7 degrees, so the
/// wire form `"lat,lon"` round-trips exactly and equality is exact.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct GeoPoint {
    lat_e7: i32,
    lon_e7: i32,
}

impl GeoPoint {
    pub fn new(lat: f64, lon: f64) -> Result<Self, GeoError> {
        let lat_e7 = (lat * SCALE as f64).round();
        let lon_e7 = (lon * SCALE as f64).round();
        Self::from_e7(lat_e7 as i64, lon_e7 as i64).map_err(|e| match e {
            GeoError::LatitudeRange(_) => GeoError::LatitudeRange(lat.to_string()),
            GeoError::LongitudeRange(_) => GeoError::LongitudeRange(lon.to_string()),
            other => other,
        })
    }

    pub fn from_e7(lat_e7: i64, lon_e7: i64) -> Result<Self, GeoError> {
        if !(-90 * SCALE..=90 * SCALE).contains(&lat_e7) {
            return Err(GeoError::LatitudeRange(fixed(lat_e7)));
        }
        if !(-180 * SCALE..=180 * SCALE).contains(&lon_e7) {
            return Err(GeoError::LongitudeRange(fixed(lon_e7)));
        }
        Ok(GeoPoint {
            lat_e7: lat_e7 as i32,
            lon_e7: lon_e7 as i32,
        })
    }

    pub fn lat(&self) -> f64 {
        self.lat_e7 as f64 / SCALE as f64
    }

    pub fn lon(&self) -> f64 {
        self.lon_e7 as f64 / SCALE as f64
    }

    /// Great-circle distance in meters on a spherical earth.
    pub fn haversine_m(&self, other: &GeoPoint) -> f64 {
        let (p1, p2) = (self.lat().to_radians(), other.lat().to_radians());
        let dp = p2 - p1;
        let dl = (other.lon() - self.lon()).to_radians();
        let a = (dp / 2.0).sin().powi(2) + p1.cos() * p2.cos() * (dl / 2.0).sin().powi(2);
        2.0 * EARTH_RADIUS_M * a.sqrt().min(1.0).asin()
    }
}

fn fixed(v: i64) -> String {
    let sign = if v < 0 { "-" } else { "" };
    let a = v.unsigned_abs();
    format!("{sign}{}.{:07}", a / SCALE as u64, a % SCALE as u64)
}

/// Parses a decimal degree value exactly into 1e-7 units.
fn parse_fixed(s: &str) -> Option<i64> {
    let (neg, body) = match s.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, s.strip_prefix('+').unwrap_or(s)),
    };
    let (int, frac) = body.split_once('.').unwrap_or((body, ""));
    if int.is_empty()
        || int.len() > 3
        || frac.len() > MAX_FRACTION_DIGITS
        || !int.bytes().all(|b| b.is_ascii_digit())
        || !frac.bytes().all(|b| b.is_ascii_digit())
        || (body.contains('.') && frac.is_empty())
    {
        return None;
    }
    let mut v: i64 = int.parse().ok()?;
    let mut f: i64 = 0;
    for (i, b) in frac.bytes().enumerate() {
        f += (b - b'0') as i64 * 10i64.pow((MAX_FRACTION_DIGITS - 1 - i) as u32);
    }
    v = v * SCALE + f;
    Some(if neg { -v } else { v })
}

impl fmt::Display for GeoPoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{},{}", fixed(self.lat_e7 as i64), fixed(self.lon_e7 as i64))
    }
}

impl FromStr for GeoPoint {
    type Err = GeoError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let malformed = || GeoError::Malformed(s.to_owned());
        let (lat, lon) = s.split_once(',').ok_or_else(malformed)?;
        let lat = parse_fixed(lat.trim()).ok_or_else(malformed)?;
        let lon = parse_fixed(lon.trim()).ok_or_else(malformed)?;
        GeoPoint::from_e7(lat, lon)
    }
}

#[derive(Serialize, Deserialize)]
struct LatLon {
    lat: f64,
    lon: f64,
}

impl Serialize for GeoPoint {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        LatLon {
            lat: self.lat(),
            lon: self.lon(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for GeoPoint {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let ll = LatLon::deserialize(d)?;
        GeoPoint::new(ll.lat, ll.lon).map_err(serde::de::Error::custom)
    }
}
