//! Location Clustering baseline: converge, then remove members for good.

use log::warn;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::dbmeans::MAX_SHIFT_ITERATIONS;
use super::grid::SpatialGrid;
use super::{check_finite, mean, ClusterParams, PlaceClustering};
use crate::error::Result;
use crate::model::LatLon;

/// Mean-shifts each seed over the points not yet claimed by a cluster; a
/// converged neighbourhood with at least `min_pts` points becomes a cluster
/// and its points leave the pool. Leftovers around a claimed region can later
/// form their own satellite clusters.
pub fn location_clustering_baseline(
    points: &[LatLon],
    params: &ClusterParams,
) -> Result<PlaceClustering> {
    params.validate()?;
    check_finite(points)?;
    if points.is_empty() {
        return Ok(PlaceClustering::default());
    }
    let grid = SpatialGrid::new(points, params.eps);
    let mut labels: Vec<Option<usize>> = vec![None; points.len()];
    let mut tried = vec![false; points.len()];
    let mut centroids = Vec::new();
    let mut diagnostics = Vec::new();

    let mut order: Vec<usize> = (0..points.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(params.rng_seed));

    let mut members: Vec<usize> = Vec::new();
    let mut previous: Vec<usize> = Vec::new();
    for &seed in &order {
        if labels[seed].is_some() || tried[seed] {
            continue;
        }
        tried[seed] = true;
        let mut center = points[seed];
        members.clear();
        members.push(seed);
        previous.clear();
        let mut iterations = 0;
        while members != previous {
            if iterations == MAX_SHIFT_ITERATIONS {
                let msg = format!("mean shift from seed {seed} did not settle");
                warn!("{msg}");
                diagnostics.push(msg);
                break;
            }
            iterations += 1;
            std::mem::swap(&mut members, &mut previous);
            grid.query(center, params.eps, false, &mut members);
            members.retain(|&m| labels[m].is_none());
            if members.is_empty() {
                break;
            }
            center = mean(points, &members);
        }
        if members.len() >= params.min_pts {
            let id = centroids.len();
            centroids.push(center);
            for &m in &members {
                labels[m] = Some(id);
            }
        }
    }

    let mut visit_counts = vec![0; centroids.len()];
    for c in labels.iter().flatten() {
        visit_counts[*c] += 1;
    }
    Ok(PlaceClustering {
        labels,
        centroids,
        visit_counts,
        diagnostics,
    })
}
