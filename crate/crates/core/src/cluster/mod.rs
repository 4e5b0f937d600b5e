//! Grouping stay points into meaningful places.
//!
//! [`dbmeans`] is the primary method; [`dbscan_baseline`] and
//! [`location_clustering_baseline`] exist for side-by-side comparison.

mod dbmeans;
mod dbscan;
pub(crate) mod grid;
mod location;

pub use dbmeans::dbmeans;
pub use dbscan::dbscan_baseline;
pub use location::location_clustering_baseline;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{haversine_distance, LatLon};

/// Distances closer than this are treated as ties in [`predict`].
pub const TIE_TOLERANCE_M: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClusterParams {
    /// Neighbourhood radius in meters.
    pub eps: f64,
    pub min_pts: usize,
    pub rng_seed: u64,
}

impl Default for ClusterParams {
    fn default() -> Self {
        ClusterParams {
            eps: 200.0,
            min_pts: 5,
            rng_seed: 0,
        }
    }
}

impl ClusterParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.eps.is_finite() && self.eps > 0.0) {
            return Err(Error::param(
                "eps",
                format!("must be > 0, got {}", self.eps),
            ));
        }
        if self.min_pts < 1 {
            return Err(Error::param("min_pts", "must be >= 1"));
        }
        Ok(())
    }
}

/// Per-input labels (`None` = noise) plus per-cluster centroid and size.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PlaceClustering {
    pub labels: Vec<Option<usize>>,
    pub centroids: Vec<LatLon>,
    pub visit_counts: Vec<usize>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub diagnostics: Vec<String>,
}

impl PlaceClustering {
    pub fn cluster_count(&self) -> usize {
        self.centroids.len()
    }

    pub fn noise_count(&self) -> usize {
        self.labels.iter().filter(|l| l.is_none()).count()
    }

    /// Builds the clustering from labels, taking each centroid as the mean of
    /// its members. Labels must be dense (`0..k`).
    pub fn from_labels(points: &[LatLon], labels: Vec<Option<usize>>) -> Self {
        let k = labels.iter().flatten().map(|&c| c + 1).max().unwrap_or(0);
        let mut sums = vec![(0.0, 0.0, 0usize); k];
        for (p, l) in points.iter().zip(&labels) {
            if let Some(c) = l {
                sums[*c].0 += p.lat;
                sums[*c].1 += p.lon;
                sums[*c].2 += 1;
            }
        }
        let centroids = sums
            .iter()
            .map(|&(a, b, n)| LatLon::new(a / n.max(1) as f64, b / n.max(1) as f64))
            .collect();
        let visit_counts = sums.iter().map(|s| s.2).collect();
        PlaceClustering {
            labels,
            centroids,
            visit_counts,
            diagnostics: Vec::new(),
        }
    }
}

pub(crate) fn check_finite(points: &[LatLon]) -> Result<()> {
    match points.iter().position(|p| !p.is_valid()) {
        Some(i) => Err(Error::Input(format!(
            "point {i} has an invalid coordinate ({}, {})",
            points[i].lat, points[i].lon
        ))),
        None => Ok(()),
    }
}

pub(crate) fn mean(points: &[LatLon], members: &[usize]) -> LatLon {
    let n = members.len() as f64;
    let (a, b) = members.iter().fold((0.0, 0.0), |(a, b), &i| {
        (a + points[i].lat, b + points[i].lon)
    });
    LatLon::new(a / n, b / n)
}

/// Label of the nearest centroid when strictly closer than `eps`, else noise.
/// Ties within [`TIE_TOLERANCE_M`] go to the lower cluster id.
pub fn predict(points: &[LatLon], centroids: &[LatLon], eps: f64) -> Vec<Option<usize>> {
    points
        .iter()
        .map(|p| nearest_within(p, centroids, eps))
        .collect()
}

pub(crate) fn nearest_within(p: &LatLon, centroids: &[LatLon], eps: f64) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (id, c) in centroids.iter().enumerate() {
        let d = haversine_distance(*p, *c);
        if d >= eps {
            continue;
        }
        match best {
            Some((_, bd)) if d >= bd - TIE_TOLERANCE_M => {}
            _ => best = Some((id, d)),
        }
    }
    best.map(|(id, _)| id)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum PlaceTag {
    Home,
    Work,
    Other,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeaningfulPlace {
    pub place_id: usize,
    pub centroid: LatLon,
    pub visit_count: usize,
    pub rank: usize,
    pub tag: PlaceTag,
}

/// Orders clusters by visit count (ties to the lower id); the top two become
/// home and work.
pub fn rank_places(clustering: &PlaceClustering) -> Vec<MeaningfulPlace> {
    let mut ids: Vec<usize> = (0..clustering.cluster_count()).collect();
    ids.sort_by(|&a, &b| {
        clustering.visit_counts[b]
            .cmp(&clustering.visit_counts[a])
            .then(a.cmp(&b))
    });
    ids.into_iter()
        .enumerate()
        .map(|(i, id)| MeaningfulPlace {
            place_id: id,
            centroid: clustering.centroids[id],
            visit_count: clustering.visit_counts[id],
            rank: i + 1,
            tag: match i {
                0 => PlaceTag::Home,
                1 => PlaceTag::Work,
                _ => PlaceTag::Other,
            },
        })
        .collect()
}
