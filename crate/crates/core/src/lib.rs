//! Habit extraction from smart-home appliance usage logs.
//!
//! Activities are observed as dated (start, end) intervals in decimal
//! hours. For each activity the pipeline sweeps k-means and agglomerative
//! clusterings over a k grid, keeps the arrangement with the best
//! silhouette, validates every cluster against a per-cluster sparsity
//! threshold, and falls back to density-based clustering with a shrinking
//! radius when the data is too scattered. Accepted clusters become habit
//! profiles: typical start/end bands with a confidence score.

pub mod clustering;
pub mod habits;
pub mod ingest;
pub mod model;
pub mod pipeline;
pub mod quality;
pub mod report;
pub mod synth;

pub use clustering::{
    agglomerative, dbscan, euclidean, kmeans, AgglomerativeParams, ClusterError, DbscanParams,
    KMeansParams, Linkage, MethodParams,
};
pub use habits::{extract_habits, ConfidenceDenominator, HabitError};
pub use ingest::{
    parse_event_log, parse_power_csv, read_intervals_csv, write_intervals_csv, IngestConfig,
    IngestError,
};
pub use model::{
    normalize_interval, ActivityInterval, ClusterQuality, Clustering, HabitProfile, Label, Method,
    ModelError, Point, PointSet,
};
pub use pipeline::{
    dbscan_fallback, profile_activity, sweep_partitional, validate_noise, NoiseVerdict,
    PipelineConfig, PipelineError, PipelineResult, Stage, TraceEntry, Verdict,
};
pub use quality::{
    cluster_noise_metrics, elbow_eps, k_distance_curve, knee_index, noise_metric,
    silhouette_score, KDistanceCurve, QualityError,
};
pub use report::{build_error_report, build_report, format_report, Report};
pub use synth::{generate, to_intervals, PlantedCluster, PlantedSpec, SynthError};
