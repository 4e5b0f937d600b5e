//! Splitting a user's point stream into trajectories.
//!
//! A boundary falls between two consecutive fixes when the time gap between
//! them exceeds `gap_threshold`, or when the user is stopped around that hop:
//! the mean speed over a window of `stop_window` seconds centred on the hop
//! (widened to whole fixes, never crossing a gap) is below `stop_speed`. With
//! sparse fixes the window degenerates to the hop itself, so two identical
//! consecutive positions always split. While the user stays put every hop
//! splits, leaving single-fix segments that are discarded.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{
    day_of_week, fractional_hour, seconds_between, Point, Trajectory, TrajectoryFeatures,
};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SegmentationParams {
    /// Seconds; a larger gap between consecutive fixes always splits.
    pub gap_threshold: f64,
    /// m/s; window mean speed below this counts as stopped.
    pub stop_speed: f64,
    /// Seconds covered by the window centred on each hop.
    pub stop_window: f64,
}

impl Default for SegmentationParams {
    fn default() -> Self {
        SegmentationParams {
            gap_threshold: 1800.0,
            stop_speed: 0.5,
            stop_window: 300.0,
        }
    }
}

impl SegmentationParams {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("gap_threshold", self.gap_threshold),
            ("stop_speed", self.stop_speed),
            ("stop_window", self.stop_window),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::param(name, format!("must be > 0, got {v}")));
            }
        }
        Ok(())
    }
}

/// For each hop `i-1 -> i` (index `i`), whether the user is stopped around it.
/// Index 0 is always `false`.
fn stopped_hops(points: &[Point], params: &SegmentationParams) -> Vec<bool> {
    let n = points.len();
    let mut stopped = vec![false; n];
    if n < 2 {
        return stopped;
    }
    let mut cum = vec![0.0; n];
    for i in 1..n {
        cum[i] = cum[i - 1] + points[i - 1].distance_to(&points[i]);
    }
    let t0 = points[0].time;
    let secs: Vec<f64> = points.iter().map(|p| seconds_between(t0, p.time)).collect();

    let half = params.stop_window * 0.5;
    let breaks = |j: usize| {
        let dt = secs[j] - secs[j - 1];
        dt > params.gap_threshold || dt <= 0.0
    };
    let mut run_start = 0;
    while run_start + 1 < n {
        // [run_start, run_end) is a maximal gap-free run
        let mut run_end = run_start + 1;
        while run_end < n && !breaks(run_end) {
            run_end += 1;
        }
        let (mut a, mut b) = (run_start, run_start + 1);
        for j in run_start + 1..run_end {
            let mid = 0.5 * (secs[j - 1] + secs[j]);
            // a: latest index <= j-1 at or before mid - half (else run start)
            while a + 1 < j && secs[a + 1] <= mid - half {
                a += 1;
            }
            // b: earliest index >= j at or after mid + half (else run end)
            b = b.max(j);
            while b + 1 < run_end && secs[b] < mid + half {
                b += 1;
            }
            let span = secs[b] - secs[a];
            stopped[j] = span > 0.0 && (cum[b] - cum[a]) / span < params.stop_speed;
        }
        run_start = run_end;
    }
    stopped
}

/// Index ranges of the raw segments (including single-point ones).
pub fn segment_bounds(
    points: &[Point],
    params: &SegmentationParams,
) -> Vec<std::ops::Range<usize>> {
    let stopped = stopped_hops(points, params);
    let mut out = Vec::new();
    let mut start = 0;
    for j in 1..points.len() {
        let dt = points[j - 1].seconds_until(&points[j]);
        if dt > params.gap_threshold || dt <= 0.0 || stopped[j] {
            out.push(start..j);
            start = j;
        }
    }
    if start < points.len() {
        out.push(start..points.len());
    }
    out
}

/// Splits one user's time-sorted points into trajectories with ids counted
/// from `first_id`. Segments shorter than two points are dropped.
pub fn segment_trajectories(
    points: &[Point],
    params: &SegmentationParams,
    first_id: usize,
) -> Vec<Trajectory> {
    let mut id = first_id;
    segment_bounds(points, params)
        .into_iter()
        .filter(|r| r.len() >= 2)
        .filter_map(|r| {
            let t = Trajectory::new(id, points[r].to_vec()).ok()?;
            id += 1;
            Some(t)
        })
        .collect()
}

/// Features of an ordered run of at least two fixes.
pub fn derive_features(points: &[Point]) -> TrajectoryFeatures {
    let first = &points[0];
    let last = &points[points.len() - 1];
    let length_m: f64 = points.windows(2).map(|w| w[0].distance_to(&w[1])).sum();
    let duration_s = first.seconds_until(last);
    TrajectoryFeatures {
        length_m,
        duration_s,
        start_hour: fractional_hour(&first.time),
        day_of_week: day_of_week(&first.time),
        mean_velocity: if duration_s > 0.0 {
            length_m / duration_s
        } else {
            0.0
        },
        start: first.latlon(),
        end: last.latlon(),
        start_time: first.time,
        end_time: last.time,
    }
}
