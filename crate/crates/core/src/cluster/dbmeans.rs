//! DBMeans: density clustering with mean-shift centroid refinement.
//!
//! Seeds are drawn from a seeded shuffle of the input. From a seed, the
//! candidate centroid moves to the mean of all points strictly within `eps`
//! until that neighbourhood stops changing. Any earlier cluster with at least
//! `min_pts` members inside the converged neighbourhood is dissolved (its
//! points go back to noise, its centroid is dropped). The neighbourhood then
//! becomes a new cluster if it holds at least `min_pts` points. A final
//! nearest-centroid pass assigns the labels.

use log::warn;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::grid::SpatialGrid;
use super::{check_finite, mean, predict, ClusterParams, PlaceClustering};
use crate::error::Result;
use crate::model::LatLon;

pub const MAX_SHIFT_ITERATIONS: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum State {
    Unvisited,
    Noise,
    Cluster(usize),
}

pub fn dbmeans(points: &[LatLon], params: &ClusterParams) -> Result<PlaceClustering> {
    params.validate()?;
    check_finite(points)?;
    if points.is_empty() {
        return Ok(PlaceClustering::default());
    }

    let grid = SpatialGrid::new(points, params.eps);
    let mut state = vec![State::Unvisited; points.len()];
    // indexed by cluster id; None once dissolved
    let mut centroids: Vec<Option<LatLon>> = Vec::new();
    let mut diagnostics = Vec::new();

    let mut order: Vec<usize> = (0..points.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(params.rng_seed));

    let mut members = Vec::new();
    let mut previous = Vec::new();
    let mut absorbed: Vec<(usize, usize)> = Vec::new();

    for &seed in &order {
        if state[seed] != State::Unvisited {
            continue;
        }
        state[seed] = State::Noise;
        let mut center = points[seed];
        members.clear();
        members.push(seed);
        previous.clear();

        let mut iterations = 0;
        while members != previous {
            if iterations == MAX_SHIFT_ITERATIONS {
                let msg = format!(
                    "mean shift from seed {seed} did not settle after {MAX_SHIFT_ITERATIONS} iterations"
                );
                warn!("{msg}");
                diagnostics.push(msg);
                break;
            }
            iterations += 1;
            std::mem::swap(&mut members, &mut previous);
            grid.query(center, params.eps, false, &mut members);
            if members.is_empty() {
                break;
            }
            center = mean(points, &members);

            // count how many members each existing cluster contributes
            absorbed.clear();
            for &m in &members {
                if let State::Cluster(c) = state[m] {
                    match absorbed.iter_mut().find(|(id, _)| *id == c) {
                        Some(entry) => entry.1 += 1,
                        None => absorbed.push((c, 1)),
                    }
                }
            }
            for &(c, count) in &absorbed {
                if count >= params.min_pts {
                    for s in state.iter_mut() {
                        if *s == State::Cluster(c) {
                            *s = State::Noise;
                        }
                    }
                    centroids[c] = None;
                }
            }
        }

        if members.len() >= params.min_pts {
            let id = centroids.len();
            centroids.push(Some(center));
            for &m in &members {
                state[m] = State::Cluster(id);
            }
        }
    }

    Ok(finalize(points, centroids, params, diagnostics))
}

/// Final nearest-centroid assignment. A cluster left with fewer than
/// `min_pts` members is dropped and the assignment repeated once; dropping a
/// centroid can only grow the others, so one repeat suffices.
fn finalize(
    points: &[LatLon],
    centroids: Vec<Option<LatLon>>,
    params: &ClusterParams,
    diagnostics: Vec<String>,
) -> PlaceClustering {
    let mut active: Vec<LatLon> = centroids.into_iter().flatten().collect();
    let mut labels = predict(points, &active, params.eps);
    let counts = count_labels(&labels, active.len());
    if counts.iter().any(|&n| n < params.min_pts) {
        active = active
            .into_iter()
            .zip(&counts)
            .filter(|(_, &n)| n >= params.min_pts)
            .map(|(c, _)| c)
            .collect();
        labels = predict(points, &active, params.eps);
    }
    let visit_counts = count_labels(&labels, active.len());
    PlaceClustering {
        labels,
        centroids: active,
        visit_counts,
        diagnostics,
    }
}

fn count_labels(labels: &[Option<usize>], k: usize) -> Vec<usize> {
    let mut counts = vec![0; k];
    for c in labels.iter().flatten() {
        counts[*c] += 1;
    }
    counts
}
