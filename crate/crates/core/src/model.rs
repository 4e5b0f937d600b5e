//! Geometric and temporal primitives shared by every pipeline stage.

use std::fmt;
use std::sync::Arc;

use chrono::{Datelike, NaiveDateTime, Timelike};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Mean Earth radius in meters.
pub const EARTH_RADIUS_M: f64 = 6_371_000.0;

/// Opaque user identifier. Cheap to clone; every point carries one.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct UserId(Arc<str>);

impl UserId {
    pub fn new(id: impl AsRef<str>) -> Self {
        UserId(Arc::from(id.as_ref()))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Debug for UserId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}", &*self.0)
    }
}

impl fmt::Display for UserId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for UserId {
    fn from(s: &str) -> Self {
        UserId::new(s)
    }
}

/// A latitude/longitude pair in decimal degrees.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LatLon {
    pub lat: f64,
    pub lon: f64,
}

impl LatLon {
    pub const fn new(lat: f64, lon: f64) -> Self {
        LatLon { lat, lon }
    }

    pub fn is_valid(&self) -> bool {
        self.lat.is_finite()
            && self.lon.is_finite()
            && (-90.0..=90.0).contains(&self.lat)
            && (-180.0..=180.0).contains(&self.lon)
    }

    pub fn distance_to(&self, other: &LatLon) -> f64 {
        haversine_distance(*self, *other)
    }
}

/// A timestamped fix. Timestamps are naive local time, as recorded by the source.
#[derive(Debug, Clone, PartialEq)]
pub struct Point {
    pub user: UserId,
    pub lat: f64,
    pub lon: f64,
    pub time: NaiveDateTime,
}

impl Point {
    /// Builds a point, rejecting coordinates outside the valid ranges.
    pub fn new(user: UserId, lat: f64, lon: f64, time: NaiveDateTime) -> Result<Self> {
        if !LatLon::new(lat, lon).is_valid() {
            return Err(Error::Input(format!(
                "coordinates out of bounds: ({lat}, {lon})"
            )));
        }
        Ok(Point {
            user,
            lat,
            lon,
            time,
        })
    }

    #[inline]
    pub fn latlon(&self) -> LatLon {
        LatLon::new(self.lat, self.lon)
    }

    #[inline]
    pub fn distance_to(&self, other: &Point) -> f64 {
        haversine_distance(self.latlon(), other.latlon())
    }

    /// Seconds elapsed from `self` to `later` (negative if `later` is earlier).
    #[inline]
    pub fn seconds_until(&self, later: &Point) -> f64 {
        seconds_between(self.time, later.time)
    }
}

pub(crate) fn seconds_between(from: NaiveDateTime, to: NaiveDateTime) -> f64 {
    let d = to - from;
    d.num_milliseconds() as f64 / 1000.0
}

/// Great-circle distance in meters on a sphere of radius [`EARTH_RADIUS_M`].
#[inline]
pub fn haversine_distance(a: LatLon, b: LatLon) -> f64 {
    let phi1 = a.lat.to_radians();
    let phi2 = b.lat.to_radians();
    let dphi = phi2 - phi1;
    let dlambda = (b.lon - a.lon).to_radians();
    let h = (dphi * 0.5).sin().powi(2) + phi1.cos() * phi2.cos() * (dlambda * 0.5).sin().powi(2);
    2.0 * EARTH_RADIUS_M * h.sqrt().min(1.0).asin()
}

/// Arithmetic mean of latitudes and longitudes. Valid for clusters spanning
/// well under a degree and not straddling the antimeridian.
pub fn centroid<I>(points: I) -> Result<LatLon>
where
    I: IntoIterator<Item = LatLon>,
{
    let mut n = 0usize;
    let (mut slat, mut slon) = (0.0, 0.0);
    for p in points {
        slat += p.lat;
        slon += p.lon;
        n += 1;
    }
    if n == 0 {
        return Err(Error::Input("centroid of an empty collection".into()));
    }
    Ok(LatLon::new(slat / n as f64, slon / n as f64))
}

/// Start hour mapped onto the unit circle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CyclicHour {
    pub sin_h: f64,
    pub cos_h: f64,
}

impl CyclicHour {
    pub fn as_array(&self) -> [f64; 2] {
        [self.sin_h, self.cos_h]
    }

    /// Inverse of [`encode_hour_cyclic`]; returns an hour in `[0, 24)`.
    pub fn hour(&self) -> f64 {
        angle_to_hour(self.sin_h.atan2(self.cos_h))
    }

    pub fn chord_distance(&self, other: &CyclicHour) -> f64 {
        ((self.sin_h - other.sin_h).powi(2) + (self.cos_h - other.cos_h).powi(2)).sqrt()
    }
}

pub(crate) fn angle_to_hour(theta: f64) -> f64 {
    let h = theta * 24.0 / std::f64::consts::TAU;
    let h = h.rem_euclid(24.0);
    // rem_euclid can round up to exactly 24.0 for tiny negative inputs
    if h >= 24.0 {
        0.0
    } else {
        h
    }
}

/// Maps an hour of day in `[0, 24)` to `(sin 2πh/24, cos 2πh/24)`.
pub fn encode_hour_cyclic(start_hour: f64) -> Result<CyclicHour> {
    if !(0.0..24.0).contains(&start_hour) {
        return Err(Error::Input(format!(
            "start hour {start_hour} outside [0, 24)"
        )));
    }
    let theta = std::f64::consts::TAU * start_hour / 24.0;
    Ok(CyclicHour {
        sin_h: theta.sin(),
        cos_h: theta.cos(),
    })
}

/// Circular mean of hours of day, in `[0, 24)`. `None` when the resultant
/// vector vanishes (e.g. empty input or perfectly opposed hours).
pub fn circular_mean_hour<I>(hours: I) -> Option<f64>
where
    I: IntoIterator<Item = f64>,
{
    let (mut s, mut c, mut n) = (0.0, 0.0, 0usize);
    for h in hours {
        let theta = std::f64::consts::TAU * h / 24.0;
        s += theta.sin();
        c += theta.cos();
        n += 1;
    }
    if n == 0 || (s * s + c * c).sqrt() < 1e-12 * n as f64 {
        return None;
    }
    Some(angle_to_hour(s.atan2(c)))
}

/// Hour of day as a real number (`hour + minutes/60 + seconds/3600`).
pub fn fractional_hour(t: &NaiveDateTime) -> f64 {
    t.hour() as f64 + t.minute() as f64 / 60.0 + t.second() as f64 / 3600.0
}

/// Monday = 0 .. Sunday = 6.
pub fn day_of_week(t: &NaiveDateTime) -> u8 {
    t.weekday().num_days_from_monday() as u8
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryFeatures {
    pub length_m: f64,
    pub duration_s: f64,
    pub start_hour: f64,
    pub day_of_week: u8,
    pub mean_velocity: f64,
    pub start: LatLon,
    pub end: LatLon,
    pub start_time: NaiveDateTime,
    pub end_time: NaiveDateTime,
}

/// An ordered run of one user's fixes with strictly increasing timestamps.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub id: usize,
    pub points: Vec<Point>,
    pub features: TrajectoryFeatures,
}

impl Trajectory {
    /// Validates the point sequence and computes its features.
    pub fn new(id: usize, points: Vec<Point>) -> Result<Self> {
        if points.len() < 2 {
            return Err(Error::Input(format!(
                "trajectory needs at least 2 points, got {}",
                points.len()
            )));
        }
        let user = &points[0].user;
        for w in points.windows(2) {
            if w[1].time <= w[0].time {
                return Err(Error::Input(format!(
                    "trajectory timestamps not strictly increasing at {}",
                    w[1].time
                )));
            }
            if &w[1].user != user {
                return Err(Error::Input("trajectory mixes users".into()));
            }
        }
        let features = crate::segment::derive_features(&points);
        Ok(Trajectory {
            id,
            points,
            features,
        })
    }

    pub fn user(&self) -> &UserId {
        &self.points[0].user
    }
}
