//! The per-activity report document: schema structs, a byte-deterministic
//! JSON renderer with nine-significant-digit reals, and the matching parser.

use serde::Deserialize;

use crate::clustering::MethodParams;
use crate::pipeline::{PipelineConfig, PipelineResult};

/// Formats a finite real with exactly nine significant digits, in plain
/// decimal notation. Parsing the result back and re-formatting it is
/// byte-stable, since nine decimal digits identify an f64 unambiguously.
pub fn fmt_sig9(value: f64) -> String {
    if value == 0.0 {
        return "0.0".to_string();
    }
    let formatted = format!("{value:.8e}");
    let (mantissa, exp) = formatted
        .split_once('e')
        .expect("exponential format always carries an exponent");
    let exp: i32 = exp.parse().expect("numeric exponent");
    let neg = mantissa.starts_with('-');
    let digits: String = mantissa.chars().filter(|c| c.is_ascii_digit()).collect();
    debug_assert_eq!(digits.len(), 9);
    let point = exp + 1; // digits before the decimal point
    let body = if point <= 0 {
        format!("0.{}{}", "0".repeat(-point as usize), digits)
    } else if (point as usize) < digits.len() {
        format!("{}.{}", &digits[..point as usize], &digits[point as usize..])
    } else {
        format!("{}{}", digits, "0".repeat(point as usize - digits.len()))
    };
    if neg {
        format!("-{body}")
    } else {
        body
    }
}

fn fmt_opt(value: Option<f64>) -> String {
    value.map_or_else(|| "null".to_string(), fmt_sig9)
}

fn escape_json(s: &str) -> String {
    let mut out = String::with_capacity(s.len() + 2);
    for c in s.chars() {
        match c {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            '\r' => out.push_str("\\r"),
            '\t' => out.push_str("\\t"),
            c if (c as u32) < 0x20 => out.push_str(&format!("\\u{:04x}", c as u32)),
            c => out.push(c),
        }
    }
    out
}

/// Renders a clock time such as `8:30am`, with a day marker once the hours
/// wrap past midnight.
pub fn clock_string(hours: f64) -> String {
    let mut minutes = (hours * 60.0).round() as i64;
    let mut days = 0i64;
    while minutes >= 1440 {
        minutes -= 1440;
        days += 1;
    }
    let (h, m) = (minutes / 60, minutes % 60);
    let (display_h, suffix) = match h {
        0 => (12, "am"),
        1..=11 => (h, "am"),
        12 => (12, "pm"),
        _ => (h - 12, "pm"),
    };
    let base = format!("{display_h}:{m:02}{suffix}");
    if days > 0 {
        format!("{base} (+{days} day)")
    } else {
        base
    }
}

/// Human-readable presentation of a habit band:
/// `8:30am ± 18 minutes - 8:38am ± 12 minutes`.
pub fn clock_render(mean_start: f64, std_start: f64, mean_end: f64, std_end: f64) -> String {
    format!(
        "{} ± {} minutes - {} ± {} minutes",
        clock_string(mean_start),
        (std_start * 60.0).round() as i64,
        clock_string(mean_end),
        (std_end * 60.0).round() as i64,
    )
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
pub struct ReportParameters {
    pub k_max: usize,
    pub tau: f64,
    pub min_points_v: usize,
    pub eps_decay: f64,
    pub eps_floor: f64,
    pub max_fallback_rounds: usize,
    pub seed: u64,
    pub linkage: String,
    pub noise_in_denominator: bool,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
pub struct ReportSource {
    pub file: String,
    pub parameters: ReportParameters,
}

#[derive(Debug, Clone, PartialEq, Default, Deserialize)]
pub struct ReportMethodParams {
    #[serde(default)]
    pub k: Option<usize>,
    #[serde(default)]
    pub restarts: Option<usize>,
    #[serde(default)]
    pub max_iterations: Option<usize>,
    #[serde(default)]
    pub convergence_tol: Option<f64>,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub linkage: Option<String>,
    #[serde(default)]
    pub eps: Option<f64>,
    #[serde(default)]
    pub min_points: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
pub struct ReportPipeline {
    pub chosen_method: String,
    pub params: ReportMethodParams,
    pub silhouette: Option<f64>,
    pub tau: f64,
    pub partial: bool,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
pub struct ReportHabit {
    pub cluster_id: usize,
    pub mean_start_hours: f64,
    pub std_start_hours: f64,
    pub mean_end_hours: f64,
    pub std_end_hours: f64,
    pub support: usize,
    pub total_n: usize,
    pub confidence: f64,
    pub clock_render: String,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
pub struct ReportTraceEntry {
    pub stage: String,
    pub method: String,
    pub k_or_eps: f64,
    pub silhouette: Option<f64>,
    #[serde(rename = "worst_Pr")]
    pub worst_pr: Option<f64>,
    pub verdict: String,
}

/// One report document per activity.
#[derive(Debug, Clone, PartialEq, Deserialize)]
pub struct Report {
    pub activity: String,
    pub source: ReportSource,
    #[serde(default)]
    pub error: Option<String>,
    pub pipeline: Option<ReportPipeline>,
    pub habits: Vec<ReportHabit>,
    pub trace: Vec<ReportTraceEntry>,
}

impl Report {
    pub fn parse(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }
}

fn method_params(params: &MethodParams) -> ReportMethodParams {
    let mut out = ReportMethodParams::default();
    match params {
        MethodParams::KMeans(p) => {
            out.k = Some(p.k);
            out.restarts = Some(p.restarts);
            out.max_iterations = Some(p.max_iterations);
            out.convergence_tol = Some(p.convergence_tol);
            out.seed = Some(p.seed);
        }
        MethodParams::Agglomerative(p) => {
            out.k = Some(p.k);
            out.linkage = Some(p.linkage.as_str().to_string());
        }
        MethodParams::Dbscan(p) => {
            out.eps = Some(p.eps);
            out.min_points = Some(p.min_points);
        }
    }
    out
}

/// Builds the document for a profiled activity.
pub fn build_report(
    activity: &str,
    source_file: &str,
    config: &PipelineConfig,
    result: &PipelineResult,
) -> Report {
    let total_n = result.clustering.labels.len();
    Report {
        activity: activity.to_string(),
        source: ReportSource {
            file: source_file.to_string(),
            parameters: parameters_from(config),
        },
        error: None,
        pipeline: Some(ReportPipeline {
            chosen_method: result.clustering.method.as_str().to_string(),
            params: method_params(&result.clustering.params),
            silhouette: result.quality.silhouette,
            tau: result.quality.tau,
            partial: result.partial,
        }),
        habits: result
            .habits
            .iter()
            .map(|h| ReportHabit {
                cluster_id: h.cluster_id,
                mean_start_hours: h.mean_start,
                std_start_hours: h.std_start,
                mean_end_hours: h.mean_end,
                std_end_hours: h.std_end,
                support: h.support,
                total_n,
                confidence: h.confidence,
                clock_render: clock_render(h.mean_start, h.std_start, h.mean_end, h.std_end),
            })
            .collect(),
        trace: result
            .trace
            .iter()
            .map(|t| ReportTraceEntry {
                stage: t.stage.as_str().to_string(),
                method: t.method.as_str().to_string(),
                k_or_eps: t.k_or_eps,
                silhouette: t.silhouette,
                worst_pr: t.worst_pr,
                verdict: t.verdict.as_str().to_string(),
            })
            .collect(),
    }
}

/// Builds the document for an activity whose profiling failed; siblings are
/// unaffected.
pub fn build_error_report(
    activity: &str,
    source_file: &str,
    config: &PipelineConfig,
    error: &str,
) -> Report {
    Report {
        activity: activity.to_string(),
        source: ReportSource {
            file: source_file.to_string(),
            parameters: parameters_from(config),
        },
        error: Some(error.to_string()),
        pipeline: None,
        habits: Vec::new(),
        trace: Vec::new(),
    }
}

fn parameters_from(config: &PipelineConfig) -> ReportParameters {
    ReportParameters {
        k_max: config.k_max,
        tau: config.tau,
        min_points_v: config.min_points_v,
        eps_decay: config.eps_decay,
        eps_floor: config.eps_floor,
        max_fallback_rounds: config.max_fallback_rounds,
        seed: config.seed,
        linkage: config.linkage.as_str().to_string(),
        noise_in_denominator: config.noise_in_denominator,
    }
}

/// Serializes the document with a fixed key order, two-space indentation,
/// and nine-significant-digit reals. Identical documents render to
/// identical bytes.
pub fn format_report(report: &Report) -> String {
    let mut out = String::new();
    out.push_str("{\n");
    out.push_str(&format!("  \"activity\": \"{}\",\n", escape_json(&report.activity)));
    out.push_str("  \"source\": {\n");
    out.push_str(&format!(
        "    \"file\": \"{}\",\n",
        escape_json(&report.source.file)
    ));
    let p = &report.source.parameters;
    out.push_str("    \"parameters\": {\n");
    out.push_str(&format!("      \"k_max\": {},\n", p.k_max));
    out.push_str(&format!("      \"tau\": {},\n", fmt_sig9(p.tau)));
    out.push_str(&format!("      \"min_points_v\": {},\n", p.min_points_v));
    out.push_str(&format!("      \"eps_decay\": {},\n", fmt_sig9(p.eps_decay)));
    out.push_str(&format!("      \"eps_floor\": {},\n", fmt_sig9(p.eps_floor)));
    out.push_str(&format!(
        "      \"max_fallback_rounds\": {},\n",
        p.max_fallback_rounds
    ));
    out.push_str(&format!("      \"seed\": {},\n", p.seed));
    out.push_str(&format!("      \"linkage\": \"{}\",\n", escape_json(&p.linkage)));
    out.push_str(&format!(
        "      \"noise_in_denominator\": {}\n",
        p.noise_in_denominator
    ));
    out.push_str("    }\n");
    out.push_str("  },\n");
    match &report.error {
        Some(e) => out.push_str(&format!("  \"error\": \"{}\",\n", escape_json(e))),
        None => out.push_str("  \"error\": null,\n"),
    }
    match &report.pipeline {
        None => out.push_str("  \"pipeline\": null,\n"),
        Some(pipe) => {
            out.push_str("  \"pipeline\": {\n");
            out.push_str(&format!(
                "    \"chosen_method\": \"{}\",\n",
                escape_json(&pipe.chosen_method)
            ));
            out.push_str("    \"params\": {");
            let mut parts: Vec<String> = Vec::new();
            let mp = &pipe.params;
            if let Some(k) = mp.k {
                parts.push(format!("\"k\": {k}"));
            }
            if let Some(r) = mp.restarts {
                parts.push(format!("\"restarts\": {r}"));
            }
            if let Some(m) = mp.max_iterations {
                parts.push(format!("\"max_iterations\": {m}"));
            }
            if let Some(t) = mp.convergence_tol {
                parts.push(format!("\"convergence_tol\": {}", fmt_sig9(t)));
            }
            if let Some(s) = mp.seed {
                parts.push(format!("\"seed\": {s}"));
            }
            if let Some(l) = &mp.linkage {
                parts.push(format!("\"linkage\": \"{}\"", escape_json(l)));
            }
            if let Some(e) = mp.eps {
                parts.push(format!("\"eps\": {}", fmt_sig9(e)));
            }
            if let Some(m) = mp.min_points {
                parts.push(format!("\"min_points\": {m}"));
            }
            out.push_str(&parts.join(", "));
            out.push_str("},\n");
            out.push_str(&format!(
                "    \"silhouette\": {},\n",
                fmt_opt(pipe.silhouette)
            ));
            out.push_str(&format!("    \"tau\": {},\n", fmt_sig9(pipe.tau)));
            out.push_str(&format!("    \"partial\": {}\n", pipe.partial));
            out.push_str("  },\n");
        }
    }
    if report.habits.is_empty() {
        out.push_str("  \"habits\": [],\n");
    } else {
        out.push_str("  \"habits\": [\n");
        for (i, h) in report.habits.iter().enumerate() {
            out.push_str("    {\n");
            out.push_str(&format!("      \"cluster_id\": {},\n", h.cluster_id));
            out.push_str(&format!(
                "      \"mean_start_hours\": {},\n",
                fmt_sig9(h.mean_start_hours)
            ));
            out.push_str(&format!(
                "      \"std_start_hours\": {},\n",
                fmt_sig9(h.std_start_hours)
            ));
            out.push_str(&format!(
                "      \"mean_end_hours\": {},\n",
                fmt_sig9(h.mean_end_hours)
            ));
            out.push_str(&format!(
                "      \"std_end_hours\": {},\n",
                fmt_sig9(h.std_end_hours)
            ));
            out.push_str(&format!("      \"support\": {},\n", h.support));
            out.push_str(&format!("      \"total_n\": {},\n", h.total_n));
            out.push_str(&format!(
                "      \"confidence\": {},\n",
                fmt_sig9(h.confidence)
            ));
            out.push_str(&format!(
                "      \"clock_render\": \"{}\"\n",
                escape_json(&h.clock_render)
            ));
            out.push_str(if i + 1 == report.habits.len() {
                "    }\n"
            } else {
                "    },\n"
            });
        }
        out.push_str("  ],\n");
    }
    if report.trace.is_empty() {
        out.push_str("  \"trace\": []\n");
    } else {
        out.push_str("  \"trace\": [\n");
        for (i, t) in report.trace.iter().enumerate() {
            out.push_str(&format!(
                "    {{\"stage\": \"{}\", \"method\": \"{}\", \"k_or_eps\": {}, \"silhouette\": {}, \"worst_Pr\": {}, \"verdict\": \"{}\"}}{}\n",
                escape_json(&t.stage),
                escape_json(&t.method),
                fmt_sig9(t.k_or_eps),
                fmt_opt(t.silhouette),
                fmt_opt(t.worst_pr),
                escape_json(&t.verdict),
                if i + 1 == report.trace.len() { "" } else { "," }
            ));
        }
        out.push_str("  ]\n");
    }
    out.push('}');
    out.push('\n');
    out
}
