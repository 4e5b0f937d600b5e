//! End-to-end orchestration: configuration, per-user stages and dump files.

pub mod dump;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use log::{info, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cluster::{dbmeans, rank_places, ClusterParams, MeaningfulPlace, PlaceClustering};
use crate::error::{Error, Result};
use crate::habits::{
    extract_trips, mine_habits, Habit, HabitParams, OdPair, PairHabits, TrajectorySummary, Trip,
};
use crate::ingest::{
    clean, load_geolife, load_gsm, CleaningReport, GsmLayout, Loaded, Source, DEFAULT_MAX_SPEED,
};
use crate::model::{Point, UserId};
use crate::report::{
    compare_clusterers, emit_histograms, LengthBins, MethodSummary, PairReport, UserReport,
};
use crate::segment::{segment_trajectories, SegmentationParams};
use crate::staypoint::{detect_stay_points, StayPoint, StayPointParams};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InputConfig {
    /// Geolife root directories or GSM CSV files.
    pub paths: Vec<PathBuf>,
    pub format: Source,
    /// Restrict the run to these user ids.
    pub users: Option<Vec<String>>,
    pub gsm: GsmLayout,
}

impl Default for InputConfig {
    fn default() -> Self {
        InputConfig {
            paths: Vec::new(),
            format: Source::Geolife,
            users: None,
            gsm: GsmLayout::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CleaningParams {
    /// Speed in m/s above which an isolated jump is treated as a spike.
    pub max_speed: f64,
}

impl Default for CleaningParams {
    fn default() -> Self {
        CleaningParams {
            max_speed: DEFAULT_MAX_SPEED,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReportParams {
    pub length_bins: LengthBins,
    /// How many ranked places each report lists.
    pub top_places: usize,
}

impl Default for ReportParams {
    fn default() -> Self {
        ReportParams {
            length_bins: LengthBins::default(),
            top_places: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: PathBuf,
    /// Worker threads; 0 uses one per core.
    pub threads: usize,
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig {
            dir: PathBuf::from("out"),
            threads: 0,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub input: InputConfig,
    pub cleaning: CleaningParams,
    pub segmentation: SegmentationParams,
    pub staypoints: StayPointParams,
    pub clustering: ClusterParams,
    pub habits: HabitParams,
    pub report: ReportParams,
    pub output: OutputConfig,
}

impl PipelineConfig {
    pub fn from_toml_str(s: &str) -> Result<Self> {
        toml::from_str(s).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    /// Checks every parameter block. Input paths are checked only when
    /// `check_inputs` is set, since stage runs read dump files instead.
    pub fn validate(&self, check_inputs: bool) -> Result<()> {
        if !(self.cleaning.max_speed.is_finite() && self.cleaning.max_speed > 0.0) {
            return Err(Error::param("max_speed", "must be > 0"));
        }
        self.segmentation.validate()?;
        self.staypoints.validate()?;
        self.clustering.validate()?;
        self.habits.validate()?;
        LengthBins::new(self.report.length_bins.edges().to_vec())?;
        if check_inputs {
            if self.input.paths.is_empty() {
                return Err(Error::Config("no input paths given".into()));
            }
            for p in &self.input.paths {
                if !p.exists() {
                    return Err(Error::io(
                        p,
                        std::io::Error::new(
                            std::io::ErrorKind::NotFound,
                            "input path does not exist",
                        ),
                    ));
                }
            }
        }
        Ok(())
    }
}

/// Reads and groups every configured input, merging users across paths.
pub fn load_input(cfg: &InputConfig) -> Result<Loaded> {
    let mut merged = Loaded::default();
    for path in &cfg.paths {
        let loaded = match cfg.format {
            Source::Geolife => load_geolife(path, cfg.users.as_deref())?,
            Source::Gsm => load_gsm(path, &cfg.gsm, cfg.users.as_deref())?,
        };
        merged.rejected += loaded.rejected;
        for (user, parsed) in loaded.by_user {
            merged.by_user.entry(user).or_default().extend(parsed);
        }
    }
    Ok(merged)
}

// ---------------------------------------------------------------------------
// Stages

pub fn stage_clean(points: Vec<Point>, cfg: &PipelineConfig) -> (Vec<Point>, CleaningReport) {
    clean(points, cfg.cleaning.max_speed)
}

/// Segments the cleaned stream into trajectories and detects stay points
/// over the whole stream.
pub fn stage_staypoints(
    points: &[Point],
    cfg: &PipelineConfig,
) -> (Vec<TrajectorySummary>, Vec<StayPoint>) {
    let trajectories = segment_trajectories(points, &cfg.segmentation, 0)
        .iter()
        .map(TrajectorySummary::from)
        .collect();
    let stay_points = detect_stay_points(points, &cfg.staypoints);
    (trajectories, stay_points)
}

pub fn stage_cluster(
    stay_points: &[StayPoint],
    cfg: &PipelineConfig,
) -> Result<(PlaceClustering, Vec<MeaningfulPlace>)> {
    let positions: Vec<_> = stay_points.iter().map(StayPoint::position).collect();
    let clustering = dbmeans(&positions, &cfg.clustering)?;
    for d in &clustering.diagnostics {
        warn!("{d}");
    }
    let places = rank_places(&clustering);
    Ok((clustering, places))
}

pub fn stage_trips(
    trajectories: &[TrajectorySummary],
    places: &[MeaningfulPlace],
    cfg: &PipelineConfig,
) -> Vec<Trip> {
    extract_trips(
        trajectories,
        &dump::centroids_of(places),
        cfg.clustering.eps,
    )
}

pub fn stage_habits(trips: &[Trip], cfg: &PipelineConfig) -> Result<Vec<PairHabits>> {
    mine_habits(trips, &cfg.habits)
}

pub struct ReportInput<'a> {
    pub user: &'a UserId,
    pub cleaning: CleaningReport,
    pub trajectory_count: usize,
    pub stay_point_count: usize,
    pub places: &'a [MeaningfulPlace],
    pub trips: &'a [Trip],
    pub habits: &'a [(OdPair, Vec<Habit>)],
}

pub fn stage_report(input: ReportInput<'_>, cfg: &PipelineConfig) -> Result<UserReport> {
    let mut habitual_pairs = Vec::with_capacity(input.habits.len());
    for (pair, habits) in input.habits {
        let pair_trips: Vec<Trip> = input
            .trips
            .iter()
            .filter(|t| t.od_pair() == *pair)
            .cloned()
            .collect();
        let histograms = emit_histograms(&pair_trips, &cfg.report.length_bins)?;
        habitual_pairs.push(PairReport {
            od_pair: *pair,
            trip_count: pair_trips.len(),
            habits: habits.clone(),
            histograms,
        });
    }
    Ok(UserReport {
        user_id: input.user.clone(),
        cleaning: input.cleaning,
        trajectory_count: input.trajectory_count,
        stay_point_count: input.stay_point_count,
        place_count: input.places.len(),
        trip_count: input.trips.len(),
        top_places: input
            .places
            .iter()
            .take(cfg.report.top_places)
            .cloned()
            .collect(),
        habitual_pairs,
        diagnostics: Vec::new(),
    })
}

fn pair_habits(pairs: &[PairHabits]) -> Vec<(OdPair, Vec<Habit>)> {
    pairs
        .iter()
        .map(|p| (p.od_pair, p.habits.clone()))
        .collect()
}

/// Everything the pipeline derives for one user.
#[derive(Debug, Clone)]
pub struct UserResult {
    pub user: UserId,
    pub points: Vec<Point>,
    pub trajectories: Vec<TrajectorySummary>,
    pub stay_points: Vec<StayPoint>,
    pub clustering: PlaceClustering,
    pub places: Vec<MeaningfulPlace>,
    pub trips: Vec<Trip>,
    pub habits: Vec<PairHabits>,
    pub report: UserReport,
}

pub fn process_user(user: &UserId, points: Vec<Point>, cfg: &PipelineConfig) -> Result<UserResult> {
    let (points, cleaning) = stage_clean(points, cfg);
    let (trajectories, stay_points) = stage_staypoints(&points, cfg);
    let (clustering, places) = stage_cluster(&stay_points, cfg)?;
    let trips = stage_trips(&trajectories, &places, cfg);
    let habits = stage_habits(&trips, cfg)?;
    let mut report = stage_report(
        ReportInput {
            user,
            cleaning,
            trajectory_count: trajectories.len(),
            stay_point_count: stay_points.len(),
            places: &places,
            trips: &trips,
            habits: &pair_habits(&habits),
        },
        cfg,
    )?;
    report
        .diagnostics
        .extend(clustering.diagnostics.iter().cloned());
    for p in &habits {
        report
            .diagnostics
            .extend(p.model.diagnostics.iter().cloned());
    }
    Ok(UserResult {
        user: user.clone(),
        points,
        trajectories,
        stay_points,
        clustering,
        places,
        trips,
        habits,
        report,
    })
}

pub fn write_histograms(dir: &Path, report: &UserReport) -> Result<()> {
    for pair in &report.habitual_pairs {
        let stem = format!("{}-{}", pair.od_pair.origin, pair.od_pair.destination);
        let base = dir.join(dump::HISTOGRAMS);
        dump::write_json(&base.join(format!("{stem}.json")), &pair.histograms)?;
        let path = base.join(format!("{stem}.csv"));
        std::fs::create_dir_all(&base).map_err(|e| Error::io(&base, e))?;
        let file = std::fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
        pair.histograms.write_csv(std::io::BufWriter::new(file))?;
    }
    Ok(())
}

/// Writes every dump file of one user into its own directory.
pub fn write_user(root: &Path, r: &UserResult) -> Result<()> {
    let dir = dump::user_dir(root, &r.user);
    dump::write_json(&dir.join(dump::CLEANING), &r.report.cleaning)?;
    dump::write_points(&dir.join(dump::POINTS), &r.points)?;
    dump::write_trajectories(&dir.join(dump::TRAJECTORIES), &r.user, &r.trajectories)?;
    dump::write_stay_points(&dir.join(dump::STAY_POINTS), &r.stay_points)?;
    dump::write_clusters(&dir.join(dump::CLUSTERS), &r.user, &r.clustering)?;
    dump::write_json(&dir.join(dump::PLACES), &r.places)?;
    dump::write_json(&dir.join(dump::HABITS), &dump::habit_records(&r.habits))?;
    dump::write_json(&dir.join(dump::REPORT), &r.report)?;
    write_histograms(&dir, &r.report)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkippedUser {
    pub user: UserId,
    pub error: String,
}

/// Outcome of a run across users.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub users: Vec<UserId>,
    pub skipped: Vec<SkippedUser>,
    pub rejected_lines: usize,
}

impl RunSummary {
    pub fn is_partial(&self) -> bool {
        !self.skipped.is_empty()
    }

    fn absorb(&mut self, outcomes: Vec<(UserId, Result<()>)>) {
        for (user, res) in outcomes {
            match res {
                Ok(()) => self.users.push(user),
                Err(e) => {
                    warn!("user {user}: skipped ({e})");
                    self.skipped.push(SkippedUser {
                        user,
                        error: e.to_string(),
                    });
                }
            }
        }
    }
}

fn with_pool<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::Config(format!("worker pool: {e}")))?;
    Ok(pool.install(f))
}

/// Runs every stage for every selected user and writes the dump files
/// under `cfg.output.dir`, plus `run.json`. Users that fail are skipped and
/// listed in the summary; I/O failures on the input are fatal.
pub fn run_pipeline(cfg: &PipelineConfig) -> Result<(RunSummary, Vec<UserReport>)> {
    cfg.validate(true)?;
    let loaded = load_input(&cfg.input)?;
    info!(
        "{} users loaded, {} lines rejected",
        loaded.by_user.len(),
        loaded.rejected
    );
    let root = cfg.output.dir.clone();
    std::fs::create_dir_all(&root).map_err(|e| Error::io(&root, e))?;

    let users: Vec<(UserId, Vec<Point>)> = loaded
        .by_user
        .into_iter()
        .map(|(u, p)| (u, p.points))
        .collect();
    let results: Vec<(UserId, Result<UserReport>)> = with_pool(cfg.output.threads, || {
        users
            .into_par_iter()
            .map(|(user, points)| {
                let res = process_user(&user, points, cfg).and_then(|r| {
                    write_user(&root, &r)?;
                    Ok(r.report)
                });
                (user, res)
            })
            .collect()
    })?;

    let mut reports = Vec::new();
    let mut outcomes = Vec::new();
    for (user, res) in results {
        match res {
            Ok(rep) => {
                reports.push(rep);
                outcomes.push((user, Ok(())));
            }
            Err(e) => outcomes.push((user, Err(e))),
        }
    }
    let mut summary = RunSummary {
        rejected_lines: loaded.rejected,
        ..Default::default()
    };
    summary.absorb(outcomes);
    dump::write_json(&root.join(dump::RUN_SUMMARY), &summary)?;
    Ok((summary, reports))
}

// ---------------------------------------------------------------------------
// Standalone stages over dump directories

/// A pipeline step that can run on its own from earlier dump files.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    /// Raw input to `points.csv` and `cleaning.json`.
    Ingest,
    /// `points.csv` to `trajectories.csv` and `staypoints.csv`.
    StayPoints,
    /// `staypoints.csv` to `clusters.csv` and `places.json`.
    Cluster,
    /// `trajectories.csv` and `places.json` to `habits.json`.
    Habits,
    /// All earlier dumps to `report.json` and histograms.
    Report,
    /// `staypoints.csv` to `comparison.json`.
    Compare,
}

impl Stage {
    fn required_file(self) -> &'static str {
        match self {
            Stage::Ingest => "",
            Stage::StayPoints => dump::POINTS,
            Stage::Cluster | Stage::Compare => dump::STAY_POINTS,
            Stage::Habits => dump::PLACES,
            Stage::Report => dump::HABITS,
        }
    }
}

fn run_ingest(cfg: &PipelineConfig, out: &Path) -> Result<RunSummary> {
    cfg.validate(true)?;
    let loaded = load_input(&cfg.input)?;
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let users: Vec<(UserId, Vec<Point>)> = loaded
        .by_user
        .into_iter()
        .map(|(u, p)| (u, p.points))
        .collect();
    let outcomes = with_pool(cfg.output.threads, || {
        users
            .into_par_iter()
            .map(|(user, points)| {
                let (points, report) = stage_clean(points, cfg);
                let dir = dump::user_dir(out, &user);
                let res = dump::write_json(&dir.join(dump::CLEANING), &report)
                    .and_then(|_| dump::write_points(&dir.join(dump::POINTS), &points));
                (user, res)
            })
            .collect()
    })?;
    let mut summary = RunSummary {
        rejected_lines: loaded.rejected,
        ..Default::default()
    };
    summary.absorb(outcomes);
    Ok(summary)
}

fn run_user_stage(
    stage: Stage,
    user: &UserId,
    input: &Path,
    out: &Path,
    cfg: &PipelineConfig,
) -> Result<()> {
    match stage {
        Stage::Ingest => unreachable!("ingest reads raw input"),
        Stage::StayPoints => {
            let points = dump::read_points(&input.join(dump::POINTS))?;
            let (trajectories, stay_points) = stage_staypoints(&points, cfg);
            dump::write_trajectories(&out.join(dump::TRAJECTORIES), user, &trajectories)?;
            dump::write_stay_points(&out.join(dump::STAY_POINTS), &stay_points)
        }
        Stage::Cluster => {
            let stay_points = dump::read_stay_points(&input.join(dump::STAY_POINTS))?;
            let (clustering, places) = stage_cluster(&stay_points, cfg)?;
            dump::write_clusters(&out.join(dump::CLUSTERS), user, &clustering)?;
            dump::write_json(&out.join(dump::PLACES), &places)
        }
        Stage::Habits => {
            let trajectories = dump::read_trajectories(&input.join(dump::TRAJECTORIES))?;
            let places: Vec<MeaningfulPlace> = dump::read_json(&input.join(dump::PLACES))?;
            let trips = stage_trips(&trajectories, &places, cfg);
            let habits = stage_habits(&trips, cfg)?;
            dump::write_json(&out.join(dump::HABITS), &dump::habit_records(&habits))
        }
        Stage::Report => {
            let cleaning: CleaningReport = dump::read_json(&input.join(dump::CLEANING))?;
            let trajectories = dump::read_trajectories(&input.join(dump::TRAJECTORIES))?;
            let stay_points = dump::read_stay_points(&input.join(dump::STAY_POINTS))?;
            let places: Vec<MeaningfulPlace> = dump::read_json(&input.join(dump::PLACES))?;
            let records: Vec<dump::HabitRecord> = dump::read_json(&input.join(dump::HABITS))?;
            let trips = stage_trips(&trajectories, &places, cfg);
            let report = stage_report(
                ReportInput {
                    user,
                    cleaning,
                    trajectory_count: trajectories.len(),
                    stay_point_count: stay_points.len(),
                    places: &places,
                    trips: &trips,
                    habits: &dump::group_habits(records),
                },
                cfg,
            )?;
            dump::write_json(&out.join(dump::REPORT), &report)?;
            write_histograms(out, &report)
        }
        Stage::Compare => {
            let stay_points = dump::read_stay_points(&input.join(dump::STAY_POINTS))?;
            let positions: Vec<_> = stay_points.iter().map(StayPoint::position).collect();
            let cmp: Vec<MethodSummary> = compare_clusterers(&positions, &cfg.clustering)?;
            dump::write_json(&out.join(dump::COMPARISON), &cmp)
        }
    }
}

/// Runs one stage. `Ingest` reads the configured raw input; every other
/// stage reads the per-user dump directories under `input` and writes its
/// files under `out` (which may equal `input`).
pub fn run_stage(
    stage: Stage,
    input: &Path,
    out: &Path,
    cfg: &PipelineConfig,
) -> Result<RunSummary> {
    if stage == Stage::Ingest {
        return run_ingest(cfg, out);
    }
    cfg.validate(false)?;
    let mut dirs = dump::user_dirs_with(input, stage.required_file())?;
    if let Some(filter) = &cfg.input.users {
        dirs.retain(|(u, _)| filter.iter().any(|f| f == u.as_str()));
    }
    let outcomes = with_pool(cfg.output.threads, || {
        dirs.into_par_iter()
            .map(|(user, dir)| {
                let target = dump::user_dir(out, &user);
                let res = run_user_stage(stage, &user, &dir, &target, cfg);
                (user, res)
            })
            .collect()
    })?;
    let mut summary = RunSummary::default();
    summary.absorb(outcomes);
    Ok(summary)
}

/// Per-user counts read back from dump files, for cross-checking a report.
pub fn dump_counts(dir: &Path) -> Result<BTreeMap<&'static str, usize>> {
    let mut m = BTreeMap::new();
    m.insert(
        "trajectories",
        dump::read_trajectories(&dir.join(dump::TRAJECTORIES))?.len(),
    );
    m.insert(
        "stay_points",
        dump::read_stay_points(&dir.join(dump::STAY_POINTS))?.len(),
    );
    let places: Vec<MeaningfulPlace> = dump::read_json(&dir.join(dump::PLACES))?;
    m.insert("places", places.len());
    let labels = dump::read_cluster_labels(&dir.join(dump::CLUSTERS))?;
    m.insert("clustered_stay_points", labels.iter().flatten().count());
    Ok(m)
}
