//! Mining meaningful places and travel habits from positioning fixes.
//!
//! The pipeline runs ingest → clean → segment → stay points → DBMeans
//! clustering → origin/destination trips → per-pair Gaussian mixtures over
//! cyclically encoded start hours.

pub mod cluster;
pub mod error;
pub mod habits;
pub mod ingest;
pub mod model;
pub mod pipeline;
pub mod report;
pub mod segment;
pub mod staypoint;
pub mod synth;

pub use cluster::{
    dbmeans, dbscan_baseline, location_clustering_baseline, predict, rank_places, ClusterParams,
    MeaningfulPlace, PlaceClustering, PlaceTag,
};
pub use error::{Error, Result};
pub use ingest::{clean, CleaningReport, GsmLayout, Source};
pub use model::{
    centroid, encode_hour_cyclic, haversine_distance, CyclicHour, LatLon, Point, Trajectory,
    TrajectoryFeatures, UserId,
};
pub use segment::{derive_features, segment_trajectories, SegmentationParams};
pub use staypoint::{detect_stay_points, StayPoint, StayPointParams};
