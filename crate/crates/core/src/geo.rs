//! Geographic coordinates and great-circle distance, used to rank caches
//! by proximity in place of a GeoIP database.

use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

/// Mean Earth radius in kilometers (spherical model).
pub const EARTH_RADIUS_KM: f64 = 6_371.0;

/// A latitude/longitude pair in degrees, range-checked at construction.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(try_from = "RawCoordinate", into = "RawCoordinate")]
pub struct GeoCoordinate {
    latitude: f64,
    longitude: f64,
}

#[derive(serde::Serialize, serde::Deserialize)]
struct RawCoordinate {
    latitude: f64,
    longitude: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GeoError {
    LatitudeOutOfRange(f64),
    LongitudeOutOfRange(f64),
}

impl fmt::Display for GeoError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GeoError::LatitudeOutOfRange(v) => write!(f, "latitude {v} outside [-90, 90]"),
            GeoError::LongitudeOutOfRange(v) => write!(f, "longitude {v} outside [-180, 180]"),
        }
    }
}

impl core::error::Error for GeoError {}

impl GeoCoordinate {
    pub fn new(latitude: f64, longitude: f64) -> Result<Self, GeoError> {
        if !(-90.0..=90.0).contains(&latitude) || latitude.is_nan() {
            return Err(GeoError::LatitudeOutOfRange(latitude));
        }
        if !(-180.0..=180.0).contains(&longitude) || longitude.is_nan() {
            return Err(GeoError::LongitudeOutOfRange(longitude));
        }
        Ok(GeoCoordinate { latitude, longitude })
    }

    pub fn latitude(&self) -> f64 {
        self.latitude
    }

    pub fn longitude(&self) -> f64 {
        self.longitude
    }
}

impl TryFrom<RawCoordinate> for GeoCoordinate {
    type Error = GeoError;
    fn try_from(raw: RawCoordinate) -> Result<Self, GeoError> {
        GeoCoordinate::new(raw.latitude, raw.longitude)
    }
}

impl From<GeoCoordinate> for RawCoordinate {
    fn from(c: GeoCoordinate) -> Self {
        RawCoordinate { latitude: c.latitude, longitude: c.longitude }
    }
}

/// Great-circle distance between two coordinates in kilometers, on a
/// sphere of radius [`EARTH_RADIUS_KM`]. Symmetric, non-negative, and zero
/// iff the coordinates are equal.
pub fn haversine_km(a: GeoCoordinate, b: GeoCoordinate) -> f64 {
    if a == b {
        return 0.0;
    }
    let lat_a = a.latitude.to_radians();
    let lat_b = b.latitude.to_radians();
    let d_lat = (b.latitude - a.latitude).to_radians();
    let d_lon = (b.longitude - a.longitude).to_radians();

    let s_lat = libm::sin(d_lat / 2.0);
    let s_lon = libm::sin(d_lon / 2.0);
    let h = s_lat * s_lat + libm::cos(lat_a) * libm::cos(lat_b) * s_lon * s_lon;
    2.0 * EARTH_RADIUS_KM * libm::asin(libm::sqrt(h.min(1.0)))
}

/// A cache endpoint plus its location, as published in the redirector's
/// cache directory.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct CacheDescriptor {
    pub cache_id: String,
    pub endpoint: String,
    pub location: GeoCoordinate,
}

/// Orders `caches` ascending by distance from `client`, breaking distance
/// ties by `cache_id` so the ranking is deterministic.
pub fn rank_caches(client: GeoCoordinate, caches: &[CacheDescriptor]) -> Vec<CacheDescriptor> {
    let mut ranked: Vec<(f64, &CacheDescriptor)> = caches
        .iter()
        .map(|c| (haversine_km(client, c.location), c))
        .collect();
    ranked.sort_by(|(da, a), (db, b)| da.total_cmp(db).then_with(|| a.cache_id.cmp(&b.cache_id)));
    ranked.into_iter().map(|(_, c)| c.clone()).collect()
}
