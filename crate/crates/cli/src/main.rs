use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use log::error;
use mobmine::ingest::Source;
use mobmine::pipeline::{run_pipeline, run_stage, PipelineConfig, RunSummary, Stage};

/// Mine meaningful places and travel habits from GPS or GSM fixes.
#[derive(Debug, Parser)]
#[command(name = "mobmine", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run every stage from raw input to reports.
    Run(Opts),
    /// Parse and clean raw input into per-user point dumps.
    Ingest(Opts),
    /// Segment trajectories and detect stay points from point dumps.
    Staypoints(Opts),
    /// Cluster stay points into meaningful places.
    Cluster(Opts),
    /// Build trips between places and segment them into habits.
    Habits(Opts),
    /// Write per-user reports and histograms from earlier dumps.
    Report(Opts),
    /// Run DBMeans, DBSCAN and Location Clustering on the same stay points.
    Compare(Opts),
    /// Print the effective configuration as TOML.
    Config(Opts),
}

#[derive(Debug, Args)]
struct Opts {
    /// TOML configuration; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Raw input paths (run, ingest) or a dump directory (other verbs).
    #[arg(long, num_args = 1..)]
    input: Vec<PathBuf>,
    #[arg(long, value_parser = parse_source)]
    format: Option<Source>,
    /// Only process these users; repeatable.
    #[arg(long = "user")]
    users: Vec<String>,
    /// Clustering radius in meters.
    #[arg(long)]
    eps: Option<f64>,
    #[arg(long)]
    min_pts: Option<usize>,
    /// Stay-point distance threshold in meters.
    #[arg(long)]
    dist_th: Option<f64>,
    /// Stay-point time threshold in seconds.
    #[arg(long)]
    time_th: Option<f64>,
    /// Segmentation gap threshold in seconds.
    #[arg(long)]
    gap: Option<f64>,
    #[arg(long)]
    min_trips: Option<usize>,
    #[arg(long)]
    k_max: Option<usize>,
    /// Seed for clustering and mixture fitting.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory; stage verbs default to the input directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads (0 = one per core).
    #[arg(long)]
    threads: Option<usize>,
}

fn parse_source(s: &str) -> std::result::Result<Source, String> {
    s.parse().map_err(|e: mobmine::Error| e.to_string())
}

impl Opts {
    fn config(&self) -> Result<PipelineConfig> {
        let mut cfg = match &self.config {
            Some(path) => PipelineConfig::load(path)?,
            None => PipelineConfig::default(),
        };
        if !self.input.is_empty() {
            cfg.input.paths = self.input.clone();
        }
        if let Some(f) = self.format {
            cfg.input.format = f;
        }
        if !self.users.is_empty() {
            cfg.input.users = Some(self.users.clone());
        }
        if let Some(v) = self.eps {
            cfg.clustering.eps = v;
        }
        if let Some(v) = self.min_pts {
            cfg.clustering.min_pts = v;
        }
        if let Some(v) = self.dist_th {
            cfg.staypoints.distance_threshold = v;
        }
        if let Some(v) = self.time_th {
            cfg.staypoints.time_threshold = v;
        }
        if let Some(v) = self.gap {
            cfg.segmentation.gap_threshold = v;
        }
        if let Some(v) = self.min_trips {
            cfg.habits.min_trips = v;
        }
        if let Some(v) = self.k_max {
            cfg.habits.k_max = v;
        }
        if let Some(v) = self.seed {
            cfg.clustering.rng_seed = v;
            cfg.habits.rng_seed = v;
        }
        if let Some(v) = &self.out {
            cfg.output.dir = v.clone();
        }
        if let Some(v) = self.threads {
            cfg.output.threads = v;
        }
        Ok(cfg)
    }

    /// Dump directory read by a stage verb.
    fn dump_dir(&self, cfg: &PipelineConfig) -> Result<PathBuf> {
        match self.input.as_slice() {
            [dir] => Ok(dir.clone()),
            [] => cfg
                .input
                .paths
                .first()
                .cloned()
                .context("--input <dump dir> is required"),
            _ => anyhow::bail!("stage verbs take a single --input directory"),
        }
    }
}

fn stage_verb(stage: Stage, opts: &Opts) -> Result<RunSummary> {
    let cfg = opts.config()?;
    if stage == Stage::Ingest {
        return Ok(run_stage(stage, &cfg.output.dir, &cfg.output.dir, &cfg)?);
    }
    let input = opts.dump_dir(&cfg)?;
    let out = opts.out.clone().unwrap_or_else(|| input.clone());
    Ok(run_stage(stage, &input, &out, &cfg)?)
}

fn execute(command: Command) -> Result<RunSummary> {
    match command {
        Command::Run(opts) => {
            let cfg = opts.config()?;
            let (summary, _) = run_pipeline(&cfg)?;
            Ok(summary)
        }
        Command::Ingest(o) => stage_verb(Stage::Ingest, &o),
        Command::Staypoints(o) => stage_verb(Stage::StayPoints, &o),
        Command::Cluster(o) => stage_verb(Stage::Cluster, &o),
        Command::Habits(o) => stage_verb(Stage::Habits, &o),
        Command::Report(o) => stage_verb(Stage::Report, &o),
        Command::Compare(o) => stage_verb(Stage::Compare, &o),
        Command::Config(o) => {
            print!("{}", o.config()?.to_toml_string()?);
            Ok(RunSummary::default())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let quiet = matches!(cli.command, Command::Config(_));
    match execute(cli.command) {
        Ok(summary) => {
            if !quiet {
                println!(
                    "{} users processed, {} skipped, {} input lines rejected",
                    summary.users.len(),
                    summary.skipped.len(),
                    summary.rejected_lines
                );
            }
            for s in &summary.skipped {
                eprintln!("skipped {}: {}", s.user, s.error);
            }
            ExitCode::from(if summary.is_partial() { 2 } else { 0 })
        }
        Err(e) => {
            error!("{e:#}");
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
