//! Trips between meaningful places, the origin/destination matrix, and
//! habit segmentation of each frequent pair by start hour.

pub mod gmm;

use std::collections::BTreeMap;

use chrono::NaiveDateTime;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use gmm::{fit_gmm, select_components, GmmModel};

use crate::cluster::nearest_within;
use crate::error::{Error, Result};
use crate::model::{circular_mean_hour, encode_hour_cyclic, LatLon, Trajectory};

/// Ordered (origin place, destination place).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct OdPair {
    pub origin: usize,
    pub destination: usize,
}

impl OdPair {
    pub fn new(origin: usize, destination: usize) -> Self {
        OdPair {
            origin,
            destination,
        }
    }
}

impl std::fmt::Display for OdPair {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}->{}", self.origin, self.destination)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trip {
    pub trajectory_id: usize,
    pub origin: usize,
    pub destination: usize,
    pub start_time: NaiveDateTime,
    pub start_hour: f64,
    pub day_of_week: u8,
    pub length_m: f64,
    pub duration_s: f64,
}

impl Trip {
    pub fn od_pair(&self) -> OdPair {
        OdPair::new(self.origin, self.destination)
    }
}

/// Endpoint summary of a trajectory; enough to derive a [`Trip`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectorySummary {
    pub trajectory_id: usize,
    pub start: LatLon,
    pub end: LatLon,
    pub start_time: NaiveDateTime,
    pub end_time: NaiveDateTime,
    pub start_hour: f64,
    pub day_of_week: u8,
    pub length_m: f64,
    pub duration_s: f64,
}

impl From<&Trajectory> for TrajectorySummary {
    fn from(t: &Trajectory) -> Self {
        let f = &t.features;
        TrajectorySummary {
            trajectory_id: t.id,
            start: f.start,
            end: f.end,
            start_time: f.start_time,
            end_time: f.end_time,
            start_hour: f.start_hour,
            day_of_week: f.day_of_week,
            length_m: f.length_m,
            duration_s: f.duration_s,
        }
    }
}

/// Keeps trajectories whose start and end both fall within `eps` of a place
/// centroid (nearest-centroid rule, as in clustering).
pub fn extract_trips<'a, I>(trajectories: I, centroids: &[LatLon], eps: f64) -> Vec<Trip>
where
    I: IntoIterator<Item = &'a TrajectorySummary>,
{
    trajectories
        .into_iter()
        .filter_map(|t| {
            let origin = nearest_within(&t.start, centroids, eps)?;
            let destination = nearest_within(&t.end, centroids, eps)?;
            Some(Trip {
                trajectory_id: t.trajectory_id,
                origin,
                destination,
                start_time: t.start_time,
                start_hour: t.start_hour,
                day_of_week: t.day_of_week,
                length_m: t.length_m,
                duration_s: t.duration_s,
            })
        })
        .collect()
}

/// Directional trip counts per place pair.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct OdMatrix {
    pub counts: BTreeMap<OdPair, usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OdEntry {
    pub origin: usize,
    pub destination: usize,
    pub count: usize,
}

impl OdMatrix {
    pub fn get(&self, pair: OdPair) -> usize {
        self.counts.get(&pair).copied().unwrap_or(0)
    }

    pub fn entries(&self) -> Vec<OdEntry> {
        self.counts
            .iter()
            .map(|(p, &count)| OdEntry {
                origin: p.origin,
                destination: p.destination,
                count,
            })
            .collect()
    }
}

pub fn build_od_matrix(trips: &[Trip]) -> OdMatrix {
    let mut counts = BTreeMap::new();
    for t in trips {
        *counts.entry(t.od_pair()).or_insert(0) += 1;
    }
    OdMatrix { counts }
}

/// Pairs with at least `min_trips` trips, most frequent first.
pub fn filter_habitual_pairs(matrix: &OdMatrix, min_trips: usize) -> Vec<OdPair> {
    let mut pairs: Vec<(OdPair, usize)> = matrix
        .counts
        .iter()
        .filter(|(_, &c)| c >= min_trips)
        .map(|(&p, &c)| (p, c))
        .collect();
    pairs.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
    pairs.into_iter().map(|(p, _)| p).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Habit {
    pub od_pair: OdPair,
    pub habit_index: usize,
    pub modal_hour: f64,
    pub support: usize,
    pub trip_ids: Vec<usize>,
}

pub fn cyclic_features(trips: &[Trip]) -> Result<Vec<gmm::Vec2>> {
    trips
        .iter()
        .map(|t| encode_hour_cyclic(t.start_hour).map(|c| c.as_array()))
        .collect()
}

/// Hard-assigns each trip to its most responsible component. Components
/// that receive no trips yield no habit.
pub fn classify_habits(trips: &[Trip], model: &GmmModel) -> Result<Vec<Habit>> {
    let Some(first) = trips.first() else {
        return Ok(Vec::new());
    };
    let od_pair = first.od_pair();
    let features = cyclic_features(trips)?;
    let mut groups: Vec<Vec<usize>> = vec![Vec::new(); model.k];
    for (i, x) in features.iter().enumerate() {
        groups[model.assign(x)].push(i);
    }
    let habits = groups
        .into_iter()
        .enumerate()
        .filter(|(_, g)| !g.is_empty())
        .map(|(c, members)| {
            let hours = members.iter().map(|&i| trips[i].start_hour);
            // a vanishing resultant falls back to the component mean's angle
            let modal_hour = circular_mean_hour(hours).unwrap_or_else(|| {
                let [s, co] = model.means[c];
                crate::model::angle_to_hour(s.atan2(co))
            });
            Habit {
                od_pair,
                habit_index: c,
                modal_hour,
                support: members.len(),
                trip_ids: members.iter().map(|&i| trips[i].trajectory_id).collect(),
            }
        })
        .collect();
    Ok(habits)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HabitParams {
    pub min_trips: usize,
    pub k_max: usize,
    pub restarts: usize,
    pub rng_seed: u64,
    /// Lower bound on mixture covariance eigenvalues.
    pub reg_floor: f64,
}

impl Default for HabitParams {
    fn default() -> Self {
        HabitParams {
            min_trips: 5,
            k_max: 6,
            restarts: 5,
            rng_seed: 0,
            reg_floor: gmm::REG_FLOOR,
        }
    }
}

impl HabitParams {
    pub fn validate(&self) -> Result<()> {
        if self.min_trips < 1 {
            return Err(Error::param("min_trips", "must be >= 1"));
        }
        if self.k_max < 1 {
            return Err(Error::param("k_max", "must be >= 1"));
        }
        if self.restarts < 1 {
            return Err(Error::param("restarts", "must be >= 1"));
        }
        if !(self.reg_floor.is_finite() && self.reg_floor > 0.0) {
            return Err(Error::param(
                "reg_floor",
                format!("must be > 0, got {}", self.reg_floor),
            ));
        }
        Ok(())
    }
}

/// Habits of one frequent OD pair along with the selected mixture.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairHabits {
    pub od_pair: OdPair,
    pub trip_count: usize,
    pub model: GmmModel,
    pub habits: Vec<Habit>,
}

/// Groups trips by pair, keeps the frequent pairs and segments each one.
pub fn mine_habits(trips: &[Trip], params: &HabitParams) -> Result<Vec<PairHabits>> {
    params.validate()?;
    let matrix = build_od_matrix(trips);
    filter_habitual_pairs(&matrix, params.min_trips)
        .into_par_iter()
        .map(|pair| {
            let pair_trips: Vec<Trip> = trips
                .iter()
                .filter(|t| t.od_pair() == pair)
                .cloned()
                .collect();
            let features = cyclic_features(&pair_trips)?;
            let model = gmm::select_components_with_floor(
                &features,
                params.k_max,
                params.restarts,
                params.rng_seed,
                params.reg_floor,
            )?;
            let habits = classify_habits(&pair_trips, &model)?;
            Ok(PairHabits {
                od_pair: pair,
                trip_count: pair_trips.len(),
                model,
                habits,
            })
        })
        .collect()
}
