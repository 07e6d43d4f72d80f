use std::collections::BTreeMap;
use std::path::Path;

use hailchain_core::chaincode::GeoPoint;
use serde::{Deserialize, Serialize};

use crate::GatewayError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Place {
    pub name: String,
    pub lat: f64,
    pub lon: f64,
}

#[derive(Debug, Serialize, Deserialize)]
struct PlacesFile {
    places: Vec<Place>,
}

/// Offline geocoder over a fixed list of named places.
///
/// Lookup is an exact match after trimming and case folding. There is no
/// fuzzy matching: an unknown name is a [`GatewayError::GeocodeMiss`].
#[derive(Debug, Clone, Default)]
pub struct Places {
    by_name: BTreeMap<String, (String, GeoPoint)>,
}

fn fold(name: &str) -> String {
    name.trim().to_lowercase()
}

impl Places {
    pub fn new(places: impl IntoIterator<Item = Place>) -> Result<Self, GatewayError> {
        let mut by_name = BTreeMap::new();
        for p in places {
            let point = GeoPoint::new(p.lat, p.lon)
                .map_err(|e| GatewayError::BadRequest(format!("place {:?}: {e}", p.name)))?;
            if fold(&p.name).is_empty() {
                return Err(GatewayError::BadRequest("place with an empty name".into()));
            }
            by_name.insert(fold(&p.name), (p.name, point));
        }
        Ok(Places { by_name })
    }

    pub fn from_json(text: &str) -> Result<Self, GatewayError> {
        let file: PlacesFile =
            serde_json::from_str(text).map_err(|e| GatewayError::BadRequest(format!("places file: {e}")))?;
        Self::new(file.places)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, GatewayError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn len(&self) -> usize {
        self.by_name.len()
    }

    pub fn is_empty(&self) -> bool {
        self.by_name.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, GeoPoint)> {
        self.by_name.values().map(|(n, p)| (n.as_str(), *p))
    }

    pub fn geocode(&self, name: &str) -> Result<GeoPoint, GatewayError> {
        self.by_name
            .get(&fold(name))
            .map(|(_, p)| *p)
            .ok_or_else(|| GatewayError::GeocodeMiss(name.to_owned()))
    }

    /// Accepts either `"lat,lon"` or a place name.
    pub fn resolve(&self, location: &str) -> Result<GeoPoint, GatewayError> {
        match location.parse::<GeoPoint>() {
            Ok(p) => Ok(p),
            Err(_) => self.geocode(location),
        }
    }
}
