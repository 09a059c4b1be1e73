//! Batch front end: ingest raw logs into the canonical intervals file,
//! profile activities into habit reports, plot clustered tuples, and
//! generate planted synthetic datasets.
//!
//! Exit codes: 0 success, 2 malformed or unreadable input, 3 empty result,
//! 4 when any activity came back partial or failed to profile.

mod plot;

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use habitminer_core::{
    generate, parse_event_log, parse_power_csv, profile_activity, read_intervals_csv, to_intervals,
    write_intervals_csv, ActivityInterval, AgglomerativeParams, DbscanParams, IngestConfig,
    IngestError, KMeansParams, Label, Linkage, PipelineConfig, PlantedSpec, Point, PointSet,
    Report,
};

const EXIT_OK: u8 = 0;
const EXIT_BAD_INPUT: u8 = 2;
const EXIT_EMPTY: u8 = 3;
const EXIT_PARTIAL: u8 = 4;

#[derive(Parser)]
#[command(
    name = "habitminer",
    version,
    about = "Extract habit time bands from appliance usage logs"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum InputFormat {
    Refit,
    Casas,
    Intervals,
}

#[derive(Subcommand)]
enum Command {
    /// Parse a raw dataset into the canonical intervals file
    Ingest(IngestArgs),
    /// Profile each activity of an intervals file into a habit report
    Profile(ProfileArgs),
    /// Render an intervals file and its report as an SVG scatter
    Plot(PlotArgs),
    /// Generate a planted synthetic dataset from a spec file
    Synth(SynthArgs),
}

#[derive(Args)]
struct IngestArgs {
    #[arg(long, value_enum)]
    format: InputFormat,
    #[arg(long)]
    input: PathBuf,
    /// Appliance column to threshold (refit format)
    #[arg(long)]
    appliance: Option<String>,
    /// Activity label to extract (casas format)
    #[arg(long)]
    activity: Option<String>,
    #[arg(long, default_value_t = 5.0)]
    threshold_watts: f64,
    /// Merge ON runs separated by at most this many seconds
    #[arg(long, default_value_t = 60)]
    merge_gap: i64,
    /// Drop intervals shorter than this many seconds
    #[arg(long, default_value_t = 120)]
    min_duration: i64,
    /// Skip malformed rows instead of failing
    #[arg(long)]
    skip_errors: bool,
    #[arg(long)]
    output: PathBuf,
}

#[derive(Args)]
struct ProfileArgs {
    #[arg(long)]
    input: PathBuf,
    /// Profile only this activity (default: every activity in the file)
    #[arg(long)]
    activity: Option<String>,
    #[arg(long, default_value_t = 10)]
    k_max: usize,
    /// Per-cluster sparsity threshold
    #[arg(long, default_value_t = 4.0)]
    tau: f64,
    /// Minimum neighborhood occupancy for the density fallback
    #[arg(long, default_value_t = 4)]
    min_points: usize,
    #[arg(long, default_value_t = 0.9)]
    eps_decay: f64,
    /// Seed for the k-means restarts (default: HABITMINER_SEED or 0)
    #[arg(long)]
    seed: Option<u64>,
    /// Count noise points in the confidence denominator
    #[arg(long, default_value_t = true, action = clap::ArgAction::Set)]
    noise_in_denominator: bool,
    /// Output directory; one report document per activity
    #[arg(long)]
    output: PathBuf,
}

#[derive(Args)]
struct PlotArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    report: PathBuf,
    #[arg(long)]
    output: PathBuf,
}

#[derive(Args)]
struct SynthArgs {
    /// JSON spec with planted clusters, scatter count, and seed
    #[arg(long)]
    spec: PathBuf,
    #[arg(long)]
    output: PathBuf,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Ingest(args) => cmd_ingest(&args),
        Command::Profile(args) => cmd_profile(&args),
        Command::Plot(args) => cmd_plot(&args),
        Command::Synth(args) => cmd_synth(&args),
    };
    match outcome {
        Ok(code) => ExitCode::from(code),
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(EXIT_BAD_INPUT)
        }
    }
}

/// Writes through a sibling temp file so readers never observe a torn file.
fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent)
                .with_context(|| format!("creating {}", parent.display()))?;
        }
    }
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, bytes).with_context(|| format!("writing {}", tmp.display()))?;
    fs::rename(&tmp, path).with_context(|| format!("renaming into {}", path.display()))?;
    Ok(())
}

fn cmd_ingest(args: &IngestArgs) -> Result<u8> {
    let file = fs::File::open(&args.input)
        .with_context(|| format!("opening {}", args.input.display()))?;
    let config = IngestConfig {
        power_threshold_watts: args.threshold_watts,
        merge_gap_seconds: args.merge_gap,
        min_duration_seconds: args.min_duration,
    };
    let parsed: Result<Vec<ActivityInterval>, IngestError> = match args.format {
        InputFormat::Refit => {
            let appliance = args
                .appliance
                .as_deref()
                .ok_or_else(|| anyhow!("--appliance is required for --format refit"))?;
            parse_power_csv(file, appliance, &config, args.skip_errors)
        }
        InputFormat::Casas => {
            let activity = args
                .activity
                .as_deref()
                .ok_or_else(|| anyhow!("--activity is required for --format casas"))?;
            parse_event_log(file, activity, args.skip_errors)
        }
        InputFormat::Intervals => read_intervals_csv(file),
    };
    let intervals = match parsed {
        Ok(intervals) => intervals,
        Err(IngestError::EmptyResult(activity)) => {
            eprintln!("no rows matched activity {activity:?}");
            let mut buf = Vec::new();
            write_intervals_csv(&mut buf, &[])?;
            write_atomic(&args.output, &buf)?;
            return Ok(EXIT_EMPTY);
        }
        Err(err) => return Err(err.into()),
    };
    let mut buf = Vec::new();
    write_intervals_csv(&mut buf, &intervals)?;
    write_atomic(&args.output, &buf)?;
    if intervals.is_empty() {
        eprintln!("input parsed but produced no intervals");
        return Ok(EXIT_EMPTY);
    }
    Ok(EXIT_OK)
}

fn pipeline_config(args: &ProfileArgs) -> PipelineConfig {
    let seed = args.seed.unwrap_or_else(|| {
        std::env::var("HABITMINER_SEED")
            .ok()
            .and_then(|v| v.parse().ok())
            .unwrap_or(0)
    });
    PipelineConfig {
        k_max: args.k_max,
        tau: args.tau,
        min_points_v: args.min_points,
        eps_decay: args.eps_decay,
        seed,
        noise_in_denominator: args.noise_in_denominator,
        ..PipelineConfig::default()
    }
}

fn sanitize_file_name(activity: &str) -> String {
    let cleaned: String = activity
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
        .collect();
    if cleaned.is_empty() {
        "activity".to_string()
    } else {
        cleaned
    }
}

fn cmd_profile(args: &ProfileArgs) -> Result<u8> {
    let file = fs::File::open(&args.input)
        .with_context(|| format!("opening {}", args.input.display()))?;
    let intervals = read_intervals_csv(file)?;
    let mut by_activity: BTreeMap<String, Vec<ActivityInterval>> = BTreeMap::new();
    for iv in intervals {
        by_activity.entry(iv.activity.clone()).or_default().push(iv);
    }
    if let Some(activity) = &args.activity {
        if !by_activity.contains_key(activity) {
            bail!("activity {activity:?} not present in {}", args.input.display());
        }
        by_activity.retain(|name, _| name == activity);
    }
    if by_activity.is_empty() {
        bail!("no intervals to profile in {}", args.input.display());
    }

    let config = pipeline_config(args);
    let source = args.input.display().to_string();
    fs::create_dir_all(&args.output)
        .with_context(|| format!("creating {}", args.output.display()))?;
    let mut any_partial = false;
    for (activity, intervals) in &by_activity {
        let points = PointSet::from_intervals(intervals);
        let report = match profile_activity(&points, &config) {
            Ok(result) => {
                if result.partial {
                    any_partial = true;
                }
                habitminer_core::build_report(activity, &source, &config, &result)
            }
            Err(err) => {
                any_partial = true;
                eprintln!("activity {activity:?}: {err}");
                habitminer_core::build_error_report(activity, &source, &config, &err.to_string())
            }
        };
        let rendered = habitminer_core::format_report(&report);
        // schema check before anything touches disk
        Report::parse(&rendered)
            .with_context(|| format!("internal: report for {activity:?} violates the schema"))?;
        let path = args
            .output
            .join(format!("{}.json", sanitize_file_name(activity)));
        write_atomic(&path, rendered.as_bytes())?;
    }
    Ok(if any_partial { EXIT_PARTIAL } else { EXIT_OK })
}

/// Re-runs the report's chosen clustering so points can be colored without
/// the report having to carry per-point labels.
fn recluster(points: &PointSet, report: &Report) -> Result<Vec<Label>> {
    let pipe = report
        .pipeline
        .as_ref()
        .ok_or_else(|| anyhow!("report carries no pipeline section (profiling failed)"))?;
    let params = &pipe.params;
    let clustering = match pipe.chosen_method.as_str() {
        "KMEANS" => habitminer_core::kmeans(
            points,
            &KMeansParams {
                k: params.k.ok_or_else(|| anyhow!("report params missing k"))?,
                restarts: params.restarts.unwrap_or(10),
                max_iterations: params.max_iterations.unwrap_or(300),
                convergence_tol: params.convergence_tol.unwrap_or(1e-6),
                seed: params.seed.unwrap_or(0),
            },
        )?,
        "AGGLOMERATIVE" => habitminer_core::agglomerative(
            points,
            &AgglomerativeParams {
                k: params.k.ok_or_else(|| anyhow!("report params missing k"))?,
                linkage: params
                    .linkage
                    .as_deref()
                    .and_then(Linkage::parse)
                    .unwrap_or(Linkage::Ward),
            },
        )?,
        "DBSCAN" => habitminer_core::dbscan(
            points,
            &DbscanParams {
                eps: params.eps.ok_or_else(|| anyhow!("report params missing eps"))?,
                min_points: params
                    .min_points
                    .ok_or_else(|| anyhow!("report params missing min_points"))?,
            },
        )?,
        other => bail!("unknown method {other:?} in report"),
    };
    Ok(clustering.labels)
}

fn cmd_plot(args: &PlotArgs) -> Result<u8> {
    let file = fs::File::open(&args.input)
        .with_context(|| format!("opening {}", args.input.display()))?;
    let intervals = read_intervals_csv(file)?;
    let report_text = fs::read_to_string(&args.report)
        .with_context(|| format!("reading {}", args.report.display()))?;
    let report = Report::parse(&report_text)
        .with_context(|| format!("parsing {}", args.report.display()))?;

    let matching: Vec<&ActivityInterval> = intervals
        .iter()
        .filter(|iv| iv.activity == report.activity)
        .collect();
    if matching.is_empty() {
        eprintln!(
            "no intervals for activity {:?} in {}",
            report.activity,
            args.input.display()
        );
        return Ok(EXIT_BAD_INPUT);
    }
    if let Some(habit) = report.habits.first() {
        if habit.total_n != matching.len() {
            eprintln!(
                "report profiled {} points but input has {} for {:?}",
                habit.total_n,
                matching.len(),
                report.activity
            );
            return Ok(EXIT_BAD_INPUT);
        }
    }
    let points: Vec<Point> = matching.iter().map(|iv| iv.point()).collect();
    let point_set = PointSet::new(report.activity.clone(), points.clone());
    let labels = recluster(&point_set, &report)?;
    let means: Vec<(f64, f64)> = report
        .habits
        .iter()
        .map(|h| (h.mean_start_hours, h.mean_end_hours))
        .collect();
    let svg = plot::render_svg(&plot::PlotInput {
        activity: &report.activity,
        points: &points,
        labels: &labels,
        means: &means,
    });
    write_atomic(&args.output, svg.as_bytes())?;
    Ok(EXIT_OK)
}

fn cmd_synth(args: &SynthArgs) -> Result<u8> {
    let text = fs::read_to_string(&args.spec)
        .with_context(|| format!("reading {}", args.spec.display()))?;
    let spec = PlantedSpec::from_json(&text)?;
    let (points, truth) = generate(&spec)?;
    let intervals = to_intervals(&points);
    let mut buf = Vec::new();
    write_intervals_csv(&mut buf, &intervals)?;
    write_atomic(&args.output, &buf)?;

    let mut labels_csv = String::from("index,label\n");
    for (i, label) in truth.iter().enumerate() {
        match label {
            Some(id) => labels_csv.push_str(&format!("{i},{id}\n")),
            None => labels_csv.push_str(&format!("{i},NOISE\n")),
        }
    }
    let sidecar = args.output.with_extension("labels.csv");
    write_atomic(&sidecar, labels_csv.as_bytes())?;
    Ok(EXIT_OK)
}
