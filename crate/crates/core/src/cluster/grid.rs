use std::collections::HashMap;

use crate::model::{haversine_distance, LatLon, EARTH_RADIUS_M};

/// Bucket grid over lat/lon for fixed-radius neighbour queries.
///
/// Cells are square in degrees with side equal to the query radius expressed
/// as a latitude span; the longitude reach of a query is widened by the
/// cosine of the most poleward latitude it can touch.
pub(crate) struct SpatialGrid<'a> {
    points: &'a [LatLon],
    cell_deg: f64,
    cells: HashMap<(i64, i64), Vec<usize>>,
}

impl<'a> SpatialGrid<'a> {
    pub fn new(points: &'a [LatLon], radius_m: f64) -> Self {
        let cell_deg = (radius_m / EARTH_RADIUS_M).to_degrees().max(1e-9);
        let mut cells: HashMap<(i64, i64), Vec<usize>> = HashMap::new();
        for (i, p) in points.iter().enumerate() {
            cells.entry(key(p, cell_deg)).or_default().push(i);
        }
        SpatialGrid {
            points,
            cell_deg,
            cells,
        }
    }

    /// Indices of all points with `distance(center, p) < radius` (or `<=` when
    /// `inclusive`), ascending. `radius` must not exceed the build radius.
    pub fn query(&self, center: LatLon, radius: f64, inclusive: bool, out: &mut Vec<usize>) {
        out.clear();
        let (ci, cj) = key(&center, self.cell_deg);
        let radius_deg = (radius / EARTH_RADIUS_M).to_degrees();
        let max_lat = (center.lat.abs() + radius_deg).min(89.999_999);
        let lon_reach = radius_deg / max_lat.to_radians().cos();
        let lon_cells = ((lon_reach / self.cell_deg).ceil() as i64)
            .min((360.0 / self.cell_deg).ceil() as i64)
            .max(1);
        for di in -1..=1 {
            for dj in -lon_cells..=lon_cells {
                if let Some(bucket) = self.cells.get(&(ci + di, cj + dj)) {
                    for &idx in bucket {
                        let d = haversine_distance(center, self.points[idx]);
                        if d < radius || (inclusive && d == radius) {
                            out.push(idx);
                        }
                    }
                }
            }
        }
        out.sort_unstable();
    }
}

fn key(p: &LatLon, cell_deg: f64) -> (i64, i64) {
    (
        (p.lat / cell_deg).floor() as i64,
        (p.lon / cell_deg).floor() as i64,
    )
}
