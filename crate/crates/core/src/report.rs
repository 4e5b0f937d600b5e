//! Per-user summaries and plot-ready histogram data.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::cluster::{
    dbmeans, dbscan_baseline, location_clustering_baseline, ClusterParams, MeaningfulPlace,
    PlaceClustering,
};
use crate::error::{Error, Result};
use crate::habits::{Habit, OdPair, Trip};
use crate::ingest::CleaningReport;
use crate::model::{haversine_distance, LatLon, UserId};

/// Lower edges in meters of the trip-length bins. The last bin is open-ended.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct LengthBins(Vec<f64>);

impl Default for LengthBins {
    /// 250 m steps up to 2 km, then everything longer.
    fn default() -> Self {
        LengthBins((0..=8).map(|i| 250.0 * i as f64).collect())
    }
}

impl LengthBins {
    pub fn new(edges: Vec<f64>) -> Result<Self> {
        if edges.is_empty() {
            return Err(Error::param("length_bins", "needs at least one edge"));
        }
        if edges.iter().any(|e| !e.is_finite()) || edges.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::param(
                "length_bins",
                "edges must be finite and strictly increasing",
            ));
        }
        Ok(LengthBins(edges))
    }

    pub fn edges(&self) -> &[f64] {
        &self.0
    }

    /// Bin holding `length`; values below the first edge land in bin 0.
    pub fn bin(&self, length: f64) -> usize {
        self.0.partition_point(|&e| e <= length).saturating_sub(1)
    }
}

/// Start-hour, weekday and length distributions of one set of trips.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistogramBundle {
    pub trip_count: usize,
    /// Indexed by `floor(start_hour)`.
    pub hour: Vec<usize>,
    /// Monday = 0.
    pub day_of_week: Vec<usize>,
    /// `hour_dow[dow][hour]`.
    pub hour_dow: Vec<Vec<usize>>,
    pub length_edges: Vec<f64>,
    pub length: Vec<usize>,
}

pub fn emit_histograms(trips: &[Trip], bins: &LengthBins) -> Result<HistogramBundle> {
    if trips.is_empty() {
        return Err(Error::Input("no trips to histogram".into()));
    }
    let mut hour = vec![0; 24];
    let mut day_of_week = vec![0; 7];
    let mut hour_dow = vec![vec![0; 24]; 7];
    let mut length = vec![0; bins.edges().len()];
    for t in trips {
        let h = (t.start_hour.floor() as usize).min(23);
        let d = usize::from(t.day_of_week).min(6);
        hour[h] += 1;
        day_of_week[d] += 1;
        hour_dow[d][h] += 1;
        length[bins.bin(t.length_m)] += 1;
    }
    Ok(HistogramBundle {
        trip_count: trips.len(),
        hour,
        day_of_week,
        hour_dow,
        length_edges: bins.edges().to_vec(),
        length,
    })
}

impl HistogramBundle {
    /// Long-format CSV with columns `histogram,bin,count`. Hour-by-weekday
    /// cells use `bin = dow * 24 + hour`; length bins are labelled by their
    /// lower edge in meters.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        wtr.write_record(["histogram", "bin", "count"])?;
        for (i, c) in self.hour.iter().enumerate() {
            wtr.write_record(["hour", &i.to_string(), &c.to_string()])?;
        }
        for (i, c) in self.day_of_week.iter().enumerate() {
            wtr.write_record(["day_of_week", &i.to_string(), &c.to_string()])?;
        }
        for (d, row) in self.hour_dow.iter().enumerate() {
            for (h, c) in row.iter().enumerate() {
                wtr.write_record(["hour_dow", &(d * 24 + h).to_string(), &c.to_string()])?;
            }
        }
        for (e, c) in self.length_edges.iter().zip(&self.length) {
            wtr.write_record(["length", &e.to_string(), &c.to_string()])?;
        }
        wtr.flush().map_err(|e| Error::io("<csv writer>", e))?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterRadius {
    pub cluster: usize,
    pub members: usize,
    pub mean_m: f64,
    pub max_m: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodSummary {
    pub method: String,
    pub cluster_count: usize,
    pub noise_count: usize,
    pub radii: Vec<ClusterRadius>,
}

impl MethodSummary {
    fn from_clustering(method: &str, points: &[LatLon], c: &PlaceClustering) -> Self {
        let mut radii: Vec<ClusterRadius> = c
            .centroids
            .iter()
            .enumerate()
            .map(|(id, _)| ClusterRadius {
                cluster: id,
                members: 0,
                mean_m: 0.0,
                max_m: 0.0,
            })
            .collect();
        for (p, l) in points.iter().zip(&c.labels) {
            if let Some(id) = *l {
                let d = haversine_distance(*p, c.centroids[id]);
                let r = &mut radii[id];
                r.members += 1;
                r.mean_m += d;
                r.max_m = r.max_m.max(d);
            }
        }
        for r in &mut radii {
            if r.members > 0 {
                r.mean_m /= r.members as f64;
            }
        }
        MethodSummary {
            method: method.to_string(),
            cluster_count: c.cluster_count(),
            noise_count: c.noise_count(),
            radii,
        }
    }
}

/// Runs DBMeans and both baselines on the same points. Radii are measured
/// from each cluster's centroid; DBSCAN clusters use their member mean.
pub fn compare_clusterers(points: &[LatLon], params: &ClusterParams) -> Result<Vec<MethodSummary>> {
    let db = dbmeans(points, params)?;
    let scan = PlaceClustering::from_labels(points, dbscan_baseline(points, params)?);
    let loc = location_clustering_baseline(points, params)?;
    Ok(vec![
        MethodSummary::from_clustering("dbmeans", points, &db),
        MethodSummary::from_clustering("dbscan", points, &scan),
        MethodSummary::from_clustering("location_clustering", points, &loc),
    ])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairReport {
    pub od_pair: OdPair,
    pub trip_count: usize,
    pub habits: Vec<Habit>,
    pub histograms: HistogramBundle,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserReport {
    pub user_id: UserId,
    pub cleaning: CleaningReport,
    pub trajectory_count: usize,
    pub stay_point_count: usize,
    pub place_count: usize,
    pub trip_count: usize,
    pub top_places: Vec<MeaningfulPlace>,
    pub habitual_pairs: Vec<PairReport>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub diagnostics: Vec<String>,
}
