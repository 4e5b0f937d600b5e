//! Stay-point detection: anchor-radius scan with a minimum dwell time.

use chrono::NaiveDateTime;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{centroid, LatLon, Point, UserId};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StayPointParams {
    /// Meters from the anchor fix.
    pub distance_threshold: f64,
    /// Minimum dwell in seconds.
    pub time_threshold: f64,
}

impl Default for StayPointParams {
    fn default() -> Self {
        StayPointParams {
            distance_threshold: 200.0,
            time_threshold: 1200.0,
        }
    }
}

impl StayPointParams {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("distance_threshold", self.distance_threshold),
            ("time_threshold", self.time_threshold),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::param(name, format!("must be > 0, got {v}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StayPoint {
    pub user: UserId,
    pub lat: f64,
    pub lon: f64,
    pub arrival: NaiveDateTime,
    pub departure: NaiveDateTime,
    pub point_count: usize,
    /// Index of the anchor fix in the scanned stream.
    #[serde(skip)]
    pub anchor_index: usize,
}

impl StayPoint {
    pub fn position(&self) -> LatLon {
        LatLon::new(self.lat, self.lon)
    }

    pub fn duration_s(&self) -> f64 {
        (self.departure - self.arrival).num_milliseconds() as f64 / 1000.0
    }
}

/// Scans one user's time-sorted fixes. From anchor `i`, extends `j` while
/// fix `j` is within `distance_threshold` of the anchor; if the run spans at
/// least `time_threshold`, emits its centroid and resumes after the run,
/// otherwise moves the anchor forward by one.
pub fn detect_stay_points(points: &[Point], params: &StayPointParams) -> Vec<StayPoint> {
    let n = points.len();
    let mut out = Vec::new();
    let mut i = 0;
    while i + 1 < n {
        let anchor = &points[i];
        let mut j = i;
        while j + 1 < n && anchor.distance_to(&points[j + 1]) <= params.distance_threshold {
            j += 1;
        }
        if j > i && anchor.seconds_until(&points[j]) >= params.time_threshold {
            let c = centroid(points[i..=j].iter().map(Point::latlon))
                .expect("run holds at least two fixes");
            out.push(StayPoint {
                user: anchor.user.clone(),
                lat: c.lat,
                lon: c.lon,
                arrival: anchor.time,
                departure: points[j].time,
                point_count: j - i + 1,
                anchor_index: i,
            });
            i = j + 1;
        } else {
            i += 1;
        }
    }
    out
}
