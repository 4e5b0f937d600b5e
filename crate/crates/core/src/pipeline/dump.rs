//! Per-user dump files: one directory per user, one file per stage output.

use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use chrono::NaiveDateTime;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::cluster::{MeaningfulPlace, PlaceClustering};
use crate::error::{Error, Result};
use crate::habits::gmm::{Mat2, Vec2};
use crate::habits::{Habit, OdPair, PairHabits, TrajectorySummary};
use crate::ingest::{parse_gsm_csv, write_gsm_csv, GsmLayout};
use crate::model::{LatLon, Point, UserId};
use crate::staypoint::StayPoint;

pub const CLEANING: &str = "cleaning.json";
pub const POINTS: &str = "points.csv";
pub const TRAJECTORIES: &str = "trajectories.csv";
pub const STAY_POINTS: &str = "staypoints.csv";
pub const CLUSTERS: &str = "clusters.csv";
pub const PLACES: &str = "places.json";
pub const HABITS: &str = "habits.json";
pub const REPORT: &str = "report.json";
pub const COMPARISON: &str = "comparison.json";
pub const HISTOGRAMS: &str = "histograms";
pub const RUN_SUMMARY: &str = "run.json";

/// Directory name for a user: characters outside `[A-Za-z0-9_.-]` become `_`.
pub fn user_dir(root: &Path, user: &UserId) -> PathBuf {
    let name: String = user
        .as_str()
        .chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || matches!(c, '_' | '.' | '-') {
                c
            } else {
                '_'
            }
        })
        .collect();
    root.join(name)
}

/// User directories under `root` that contain `file`, sorted by name.
pub fn user_dirs_with(root: &Path, file: &str) -> Result<Vec<(UserId, PathBuf)>> {
    let entries = fs::read_dir(root).map_err(|e| Error::io(root, e))?;
    let mut out = Vec::new();
    for entry in entries {
        let entry = entry.map_err(|e| Error::io(root, e))?;
        let path = entry.path();
        if path.is_dir() && path.join(file).is_file() {
            let name = entry.file_name().to_string_lossy().into_owned();
            out.push((UserId::new(name), path));
        }
    }
    out.sort_by(|a, b| a.0.cmp(&b.0));
    Ok(out)
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Error::io(path, e))
}

fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| Error::io(path, e))
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    serde_json::from_reader(open(path)?)
        .map_err(|e| Error::Format(format!("{}: {e}", path.display())))
}

fn write_rows<T: Serialize>(path: &Path, rows: &[T], header: &[&str]) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(create(path)?);
    if rows.is_empty() {
        wtr.write_record(header)?;
    }
    for r in rows {
        wtr.serialize(r)?;
    }
    wtr.flush().map_err(|e| Error::io(path, e))
}

fn read_rows<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let mut rdr = csv::Reader::from_reader(open(path)?);
    rdr.deserialize()
        .map(|r| r.map_err(|e| Error::Format(format!("{}: {e}", path.display()))))
        .collect()
}

pub fn write_points(path: &Path, points: &[Point]) -> Result<()> {
    let mut w = create(path)?;
    write_gsm_csv(points, &mut w)?;
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_points(path: &Path) -> Result<Vec<Point>> {
    let parsed = parse_gsm_csv(open(path)?, &GsmLayout::default())?;
    if parsed.rejected > 0 {
        return Err(Error::Format(format!(
            "{}: {} malformed rows",
            path.display(),
            parsed.rejected
        )));
    }
    Ok(parsed.points)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct TrajectoryRow {
    user_id: UserId,
    traj_id: usize,
    start_time: NaiveDateTime,
    end_time: NaiveDateTime,
    length_m: f64,
    duration_s: f64,
    start_lat: f64,
    start_lon: f64,
    end_lat: f64,
    end_lon: f64,
    dow: u8,
    start_hour: f64,
}

const TRAJECTORY_HEADER: &[&str] = &[
    "user_id",
    "traj_id",
    "start_time",
    "end_time",
    "length_m",
    "duration_s",
    "start_lat",
    "start_lon",
    "end_lat",
    "end_lon",
    "dow",
    "start_hour",
];

pub fn write_trajectories(
    path: &Path,
    user: &UserId,
    trajectories: &[TrajectorySummary],
) -> Result<()> {
    let rows: Vec<TrajectoryRow> = trajectories
        .iter()
        .map(|t| TrajectoryRow {
            user_id: user.clone(),
            traj_id: t.trajectory_id,
            start_time: t.start_time,
            end_time: t.end_time,
            length_m: t.length_m,
            duration_s: t.duration_s,
            start_lat: t.start.lat,
            start_lon: t.start.lon,
            end_lat: t.end.lat,
            end_lon: t.end.lon,
            dow: t.day_of_week,
            start_hour: t.start_hour,
        })
        .collect();
    write_rows(path, &rows, TRAJECTORY_HEADER)
}

pub fn read_trajectories(path: &Path) -> Result<Vec<TrajectorySummary>> {
    let rows: Vec<TrajectoryRow> = read_rows(path)?;
    Ok(rows
        .into_iter()
        .map(|r| TrajectorySummary {
            trajectory_id: r.traj_id,
            start: LatLon::new(r.start_lat, r.start_lon),
            end: LatLon::new(r.end_lat, r.end_lon),
            start_time: r.start_time,
            end_time: r.end_time,
            start_hour: r.start_hour,
            day_of_week: r.dow,
            length_m: r.length_m,
            duration_s: r.duration_s,
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct StayPointRow {
    user_id: UserId,
    sp_id: usize,
    lat: f64,
    lon: f64,
    arrival: NaiveDateTime,
    departure: NaiveDateTime,
    point_count: usize,
}

const STAY_POINT_HEADER: &[&str] = &[
    "user_id",
    "sp_id",
    "lat",
    "lon",
    "arrival",
    "departure",
    "point_count",
];

pub fn write_stay_points(path: &Path, stay_points: &[StayPoint]) -> Result<()> {
    let rows: Vec<StayPointRow> = stay_points
        .iter()
        .enumerate()
        .map(|(i, sp)| StayPointRow {
            user_id: sp.user.clone(),
            sp_id: i,
            lat: sp.lat,
            lon: sp.lon,
            arrival: sp.arrival,
            departure: sp.departure,
            point_count: sp.point_count,
        })
        .collect();
    write_rows(path, &rows, STAY_POINT_HEADER)
}

/// Stay points in `sp_id` order. The anchor index is not stored and reads
/// back as 0.
pub fn read_stay_points(path: &Path) -> Result<Vec<StayPoint>> {
    let mut rows: Vec<StayPointRow> = read_rows(path)?;
    rows.sort_by_key(|r| r.sp_id);
    Ok(rows
        .into_iter()
        .map(|r| StayPoint {
            user: r.user_id,
            lat: r.lat,
            lon: r.lon,
            arrival: r.arrival,
            departure: r.departure,
            point_count: r.point_count,
            anchor_index: 0,
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct ClusterRow {
    user_id: UserId,
    sp_id: usize,
    /// -1 for noise.
    label: i64,
    centroid_lat: Option<f64>,
    centroid_lon: Option<f64>,
}

const CLUSTER_HEADER: &[&str] = &["user_id", "sp_id", "label", "centroid_lat", "centroid_lon"];

pub fn write_clusters(path: &Path, user: &UserId, clustering: &PlaceClustering) -> Result<()> {
    let rows: Vec<ClusterRow> = clustering
        .labels
        .iter()
        .enumerate()
        .map(|(i, l)| {
            let c = l.map(|id| clustering.centroids[id]);
            ClusterRow {
                user_id: user.clone(),
                sp_id: i,
                label: l.map_or(-1, |id| id as i64),
                centroid_lat: c.map(|c| c.lat),
                centroid_lon: c.map(|c| c.lon),
            }
        })
        .collect();
    write_rows(path, &rows, CLUSTER_HEADER)
}

/// Stay-point labels in `sp_id` order (`None` = noise).
pub fn read_cluster_labels(path: &Path) -> Result<Vec<Option<usize>>> {
    let mut rows: Vec<ClusterRow> = read_rows(path)?;
    rows.sort_by_key(|r| r.sp_id);
    Ok(rows
        .into_iter()
        .map(|r| usize::try_from(r.label).ok())
        .collect())
}

/// Centroids indexed by place id.
pub fn centroids_of(places: &[MeaningfulPlace]) -> Vec<LatLon> {
    let mut by_id: Vec<(usize, LatLon)> = places.iter().map(|p| (p.place_id, p.centroid)).collect();
    by_id.sort_by_key(|p| p.0);
    by_id.into_iter().map(|p| p.1).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GmmSummary {
    pub weights: Vec<f64>,
    pub means: Vec<Vec2>,
    pub covariances: Vec<Mat2>,
    pub bic: f64,
}

/// One line of `habits.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HabitRecord {
    pub od_pair: OdPair,
    pub habit_index: usize,
    pub modal_hour: f64,
    pub support: usize,
    pub trip_ids: Vec<usize>,
    pub gmm: GmmSummary,
}

pub fn habit_records(pairs: &[PairHabits]) -> Vec<HabitRecord> {
    pairs
        .iter()
        .flat_map(|p| {
            let gmm = GmmSummary {
                weights: p.model.weights.clone(),
                means: p.model.means.clone(),
                covariances: p.model.covariances.clone(),
                bic: p.model.bic,
            };
            p.habits.iter().map(move |h| HabitRecord {
                od_pair: h.od_pair,
                habit_index: h.habit_index,
                modal_hour: h.modal_hour,
                support: h.support,
                trip_ids: h.trip_ids.clone(),
                gmm: gmm.clone(),
            })
        })
        .collect()
}

/// Habits grouped by pair, keeping file order.
pub fn group_habits(records: Vec<HabitRecord>) -> Vec<(OdPair, Vec<Habit>)> {
    let mut out: Vec<(OdPair, Vec<Habit>)> = Vec::new();
    for r in records {
        let habit = Habit {
            od_pair: r.od_pair,
            habit_index: r.habit_index,
            modal_hour: r.modal_hour,
            support: r.support,
            trip_ids: r.trip_ids,
        };
        match out.iter_mut().find(|(p, _)| *p == r.od_pair) {
            Some((_, hs)) => hs.push(habit),
            None => out.push((r.od_pair, vec![habit])),
        }
    }
    out
}
