//! Textbook DBSCAN over haversine distance.

use super::grid::SpatialGrid;
use super::{check_finite, ClusterParams};
use crate::error::Result;
use crate::model::LatLon;

/// Labels each point with a cluster id in discovery order, or `None` for
/// noise. A point is core when at least `min_pts` points (itself included)
/// lie within `eps`; border points join the first cluster that reaches them.
pub fn dbscan_baseline(points: &[LatLon], params: &ClusterParams) -> Result<Vec<Option<usize>>> {
    params.validate()?;
    check_finite(points)?;
    let n = points.len();
    let grid = SpatialGrid::new(points, params.eps);
    let mut labels: Vec<Option<usize>> = vec![None; n];
    let mut visited = vec![false; n];
    let mut next_id = 0;
    let mut neighbours = Vec::new();
    let mut frontier: Vec<usize> = Vec::new();

    for p in 0..n {
        if visited[p] {
            continue;
        }
        visited[p] = true;
        grid.query(points[p], params.eps, true, &mut neighbours);
        if neighbours.len() < params.min_pts {
            continue;
        }
        let id = next_id;
        next_id += 1;
        labels[p] = Some(id);
        frontier.clear();
        frontier.extend(neighbours.iter().copied().filter(|&q| q != p));
        while let Some(q) = frontier.pop() {
            if labels[q].is_none() {
                labels[q] = Some(id);
            }
            if visited[q] {
                continue;
            }
            visited[q] = true;
            grid.query(points[q], params.eps, true, &mut neighbours);
            if neighbours.len() >= params.min_pts {
                frontier.extend(
                    neighbours
                        .iter()
                        .copied()
                        .filter(|&r| !visited[r] || labels[r].is_none()),
                );
            }
        }
    }
    Ok(labels)
}
