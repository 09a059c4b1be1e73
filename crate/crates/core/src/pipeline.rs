//! End-to-end decision procedure for one activity: sweep the partitional
//! methods over k and keep the best silhouette, validate the winner against
//! the per-cluster sparsity threshold, fall back to density-based clustering
//! with a shrinking radius when validation fails, and hand the accepted
//! clustering to habit extraction.

use rayon::prelude::*;
use thiserror::Error;

use crate::clustering::{
    agglomerative, dbscan, kmeans, AgglomerativeParams, ClusterError, DbscanParams, KMeansParams,
    Linkage,
};
use crate::habits::{extract_habits, ConfidenceDenominator, HabitError};
use crate::model::{ClusterQuality, Clustering, HabitProfile, Method, PointSet};
use crate::quality::{cluster_noise_metrics, elbow_eps, silhouette_score, QualityError};

#[derive(Debug, Error, PartialEq)]
pub enum PipelineError {
    #[error("need at least {needed} points to profile, got {got}")]
    TooFewPoints { needed: usize, got: usize },
    #[error("every density round labeled all points noise; no cluster found")]
    NoClusterFound,
    #[error(transparent)]
    Cluster(#[from] ClusterError),
    #[error(transparent)]
    Quality(#[from] QualityError),
    #[error(transparent)]
    Habit(#[from] HabitError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    /// Upper bound of the k sweep (further capped at n - 1).
    pub k_max: usize,
    /// Per-cluster sparsity threshold; clusters above it are too loose to
    /// count as habits.
    pub tau: f64,
    /// Minimum neighborhood occupancy for the density fallback, and the
    /// neighbor rank used to pick its starting radius.
    pub min_points_v: usize,
    /// Geometric factor applied to the radius after each rejected round.
    pub eps_decay: f64,
    /// Fallback stops once the next radius would drop below this.
    pub eps_floor: f64,
    pub max_fallback_rounds: usize,
    pub seed: u64,
    /// Linkage criterion used on the agglomerative side of the sweep.
    pub linkage: Linkage,
    /// Whether noise points stay in the confidence denominator.
    pub noise_in_denominator: bool,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            k_max: 10,
            tau: 4.0,
            min_points_v: 4,
            eps_decay: 0.9,
            eps_floor: 0.05,
            max_fallback_rounds: 20,
            seed: 0,
            linkage: Linkage::Ward,
            noise_in_denominator: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Sweep,
    Validate,
    Fallback,
}

impl Stage {
    pub fn as_str(self) -> &'static str {
        match self {
            Stage::Sweep => "sweep",
            Stage::Validate => "validate",
            Stage::Fallback => "fallback",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Accept,
    Reject,
    Partial,
}

impl Verdict {
    pub fn as_str(self) -> &'static str {
        match self {
            Verdict::Accept => "accept",
            Verdict::Reject => "reject",
            Verdict::Partial => "partial",
        }
    }
}

/// One attempted configuration in the decision trace.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceEntry {
    pub stage: Stage,
    pub method: Method,
    /// k for partitional attempts, the radius for density rounds.
    pub k_or_eps: f64,
    pub silhouette: Option<f64>,
    /// Largest per-cluster sparsity of the attempt; absent when the round
    /// produced no cluster at all.
    pub worst_pr: Option<f64>,
    pub verdict: Verdict,
}

/// Outcome of checking every non-noise cluster against the threshold.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NoiseVerdict {
    Pass,
    Fail { cluster_id: usize, worst_pr: f64 },
}

impl NoiseVerdict {
    pub fn passed(self) -> bool {
        matches!(self, NoiseVerdict::Pass)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineResult {
    pub clustering: Clustering,
    pub quality: ClusterQuality,
    pub habits: Vec<HabitProfile>,
    pub trace: Vec<TraceEntry>,
    /// Set when the fallback exhausted its rounds and the best-seen
    /// clustering was returned instead of an accepted one.
    pub partial: bool,
}

/// PASS iff every non-noise cluster's sparsity stays at or below `tau`
/// (the boundary itself passes). FAIL names the worst cluster.
pub fn validate_noise(
    points: &PointSet,
    clustering: &Clustering,
    tau: f64,
) -> Result<NoiseVerdict, PipelineError> {
    let metrics = cluster_noise_metrics(points, clustering)?;
    let mut worst: Option<(usize, f64)> = None;
    for (&id, &pr) in &metrics {
        if worst.is_none_or(|(_, w)| pr > w) {
            worst = Some((id, pr));
        }
    }
    Ok(match worst {
        Some((cluster_id, worst_pr)) if worst_pr > tau => NoiseVerdict::Fail {
            cluster_id,
            worst_pr,
        },
        _ => NoiseVerdict::Pass,
    })
}

fn worst_pr(points: &PointSet, clustering: &Clustering) -> Result<Option<f64>, PipelineError> {
    let metrics = cluster_noise_metrics(points, clustering)?;
    Ok(metrics.values().copied().fold(None, |acc, v| {
        Some(acc.map_or(v, |a: f64| a.max(v)))
    }))
}

struct SweepOutcome {
    clustering: Clustering,
    silhouette: f64,
    trace: Vec<TraceEntry>,
}

/// Runs both partitional methods over the k grid and keeps the arrangement
/// with the highest silhouette. Ties break toward smaller k, then k-means.
/// The grid is evaluated in parallel but reduced in grid order.
fn sweep(points: &PointSet, config: &PipelineConfig) -> Result<SweepOutcome, PipelineError> {
    let n = points.len();
    if n < 3 {
        return Err(PipelineError::TooFewPoints { needed: 3, got: n });
    }
    let k_hi = config.k_max.min(n - 1);
    let mut grid: Vec<(Method, usize)> = Vec::new();
    for method in [Method::KMeans, Method::Agglomerative] {
        for k in 2..=k_hi {
            grid.push((method, k));
        }
    }
    type GridEval = (Clustering, f64, Option<f64>);
    let cells: Vec<Result<GridEval, PipelineError>> = grid
        .par_iter()
        .map(|&(method, k)| {
            let clustering = match method {
                Method::KMeans => kmeans(points, &KMeansParams::new(k, config.seed))?,
                Method::Agglomerative => agglomerative(
                    points,
                    &AgglomerativeParams {
                        k,
                        linkage: config.linkage,
                    },
                )?,
                Method::Dbscan => unreachable!("sweep grid is partitional only"),
            };
            let sil = silhouette_score(points, &clustering)?;
            let worst = worst_pr(points, &clustering)?;
            Ok((clustering, sil, worst))
        })
        .collect();
    let mut evaluated = Vec::with_capacity(cells.len());
    for cell in cells {
        evaluated.push(cell?);
    }
    let mut best: Option<usize> = None;
    for (idx, (_, sil, _)) in evaluated.iter().enumerate() {
        let better = match best {
            None => true,
            Some(b) => {
                let (_, best_sil, _) = &evaluated[b];
                let (best_method, best_k) = grid[b];
                let (method, k) = grid[idx];
                if *sil != *best_sil {
                    *sil > *best_sil
                } else if k != best_k {
                    k < best_k
                } else {
                    method == Method::KMeans && best_method != Method::KMeans
                }
            }
        };
        if better {
            best = Some(idx);
        }
    }
    let best = best.expect("k grid is non-empty for n >= 3");
    let trace = grid
        .iter()
        .zip(&evaluated)
        .map(|(&(method, k), (_, sil, worst))| TraceEntry {
            stage: Stage::Sweep,
            method,
            k_or_eps: k as f64,
            silhouette: Some(*sil),
            worst_pr: *worst,
            verdict: Verdict::Reject,
        })
        .collect();
    let (clustering, silhouette, _) = evaluated.swap_remove(best);
    Ok(SweepOutcome {
        clustering,
        silhouette,
        trace,
    })
}

/// Best partitional clustering over the grid and its silhouette.
pub fn sweep_partitional(
    points: &PointSet,
    config: &PipelineConfig,
) -> Result<(Clustering, f64), PipelineError> {
    let outcome = sweep(points, config)?;
    Ok((outcome.clustering, outcome.silhouette))
}

#[derive(Debug)]
struct FallbackOutcome {
    clustering: Clustering,
    partial: bool,
    trace: Vec<TraceEntry>,
}

/// Density fallback: start from the elbow radius, shrink geometrically
/// until every cluster passes the threshold. Failure exits (radius floor,
/// round budget, or an all-noise round) return the best-seen clustering
/// flagged partial; if no round ever produced a cluster there is nothing to
/// return.
fn fallback(points: &PointSet, config: &PipelineConfig) -> Result<FallbackOutcome, PipelineError> {
    let mut eps = elbow_eps(points, config.min_points_v)?;
    let mut trace = Vec::new();
    let mut best: Option<(f64, Clustering)> = None; // (worst_pr, clustering)
    for _ in 0..config.max_fallback_rounds {
        let clustering = dbscan(
            points,
            &DbscanParams {
                eps,
                min_points: config.min_points_v,
            },
        )?;
        let worst = worst_pr(points, &clustering)?;
        let all_noise = clustering.k == 0;
        let accepted = !all_noise && worst.is_some_and(|w| w <= config.tau);
        trace.push(TraceEntry {
            stage: Stage::Fallback,
            method: Method::Dbscan,
            k_or_eps: eps,
            silhouette: None,
            worst_pr: worst,
            verdict: if accepted { Verdict::Accept } else { Verdict::Reject },
        });
        if accepted {
            return Ok(FallbackOutcome {
                clustering,
                partial: false,
                trace,
            });
        }
        if let Some(w) = worst {
            if best.as_ref().is_none_or(|(bw, _)| w < *bw) {
                best = Some((w, clustering));
            }
        }
        if all_noise {
            break; // shrinking the radius further only loses more points
        }
        let next = eps * config.eps_decay;
        if next < config.eps_floor {
            break;
        }
        eps = next;
    }
    match best {
        Some((w, clustering)) => {
            trace.push(TraceEntry {
                stage: Stage::Fallback,
                method: Method::Dbscan,
                k_or_eps: match &clustering.params {
                    crate::clustering::MethodParams::Dbscan(p) => p.eps,
                    _ => eps,
                },
                silhouette: None,
                worst_pr: Some(w),
                verdict: Verdict::Partial,
            });
            Ok(FallbackOutcome {
                clustering,
                partial: true,
                trace,
            })
        }
        None => Err(PipelineError::NoClusterFound),
    }
}

/// The accepted (or best-seen) density clustering for scattered data.
pub fn dbscan_fallback(
    points: &PointSet,
    config: &PipelineConfig,
) -> Result<Clustering, PipelineError> {
    Ok(fallback(points, config)?.clustering)
}

/// Full decision procedure for one activity. Deterministic for a given
/// (points, config) pair, independent of thread count.
pub fn profile_activity(
    points: &PointSet,
    config: &PipelineConfig,
) -> Result<PipelineResult, PipelineError> {
    let outcome = sweep(points, config)?;
    let mut trace = outcome.trace;
    let verdict = validate_noise(points, &outcome.clustering, config.tau)?;
    let winner_worst = worst_pr(points, &outcome.clustering)?;
    let winner_k = outcome.clustering.k;
    trace.push(TraceEntry {
        stage: Stage::Validate,
        method: outcome.clustering.method,
        k_or_eps: winner_k as f64,
        silhouette: Some(outcome.silhouette),
        worst_pr: winner_worst,
        verdict: if verdict.passed() {
            Verdict::Accept
        } else {
            Verdict::Reject
        },
    });
    let denominator = if config.noise_in_denominator {
        ConfidenceDenominator::AllPoints
    } else {
        ConfidenceDenominator::ClusteredPoints
    };
    let (clustering, silhouette, partial) = if verdict.passed() {
        (outcome.clustering, Some(outcome.silhouette), false)
    } else {
        let fb = fallback(points, config)?;
        trace.extend(fb.trace);
        (fb.clustering, None, fb.partial)
    };
    let quality = ClusterQuality {
        silhouette,
        noise_per_cluster: cluster_noise_metrics(points, &clustering)?,
        tau: config.tau,
    };
    let habits = extract_habits(points, &clustering, denominator)?;
    Ok(PipelineResult {
        clustering,
        quality,
        habits,
        trace,
        partial,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Point;
    use crate::synth::{generate, PlantedCluster, PlantedSpec};

    fn set(points: &[(f64, f64)]) -> PointSet {
        PointSet::new(
            "test",
            points.iter().map(|&(s, e)| Point::new(s, e)).collect(),
        )
    }

    fn blob_spec(clusters: Vec<PlantedCluster>, scatter: usize, seed: u64) -> PointSet {
        let spec = PlantedSpec {
            activity: "test".into(),
            clusters,
            scatter_count: scatter,
            seed,
        };
        generate(&spec).unwrap().0
    }

    fn planted(center_start: f64, center_end: f64, std: f64, count: usize) -> PlantedCluster {
        PlantedCluster {
            center_start,
            center_end,
            std,
            count,
        }
    }

    #[test]
    fn sweep_recovers_planted_cluster_count() {
        // four tight blobs, inter-center distance well above 10x the spread
        let ps = blob_spec(
            vec![
                planted(2.0, 3.0, 0.05, 10),
                planted(8.0, 9.5, 0.05, 10),
                planted(14.0, 16.0, 0.05, 10),
                planted(20.0, 22.0, 0.05, 10),
            ],
            0,
            11,
        );
        let (clustering, sil) = sweep_partitional(&ps, &PipelineConfig::default()).unwrap();
        assert_eq!(clustering.k, 4);
        assert!(sil > 0.7, "silhouette {sil}");
    }

    #[test]
    fn sweep_perfect_pairs_scores_one() {
        let ps = set(&[(0.0, 0.0), (0.0, 0.0), (10.0, 10.0), (10.0, 10.0)]);
        let (clustering, sil) = sweep_partitional(&ps, &PipelineConfig::default()).unwrap();
        assert_eq!(clustering.k, 2);
        assert_eq!(sil, 1.0);
    }

    #[test]
    fn sweep_needs_three_points() {
        let ps = set(&[(0.0, 0.0), (1.0, 1.0)]);
        assert_eq!(
            sweep_partitional(&ps, &PipelineConfig::default()).unwrap_err(),
            PipelineError::TooFewPoints { needed: 3, got: 2 }
        );
    }

    #[test]
    fn validate_noise_boundary_is_inclusive() {
        let ps = set(&[(0.0, 0.0), (0.0, 3.0), (0.0, 6.0), (20.0, 20.0)]);
        let clustering = crate::clustering::dbscan(
            &ps,
            &DbscanParams {
                eps: 7.0,
                min_points: 2,
            },
        )
        .unwrap();
        assert_eq!(clustering.k, 1);
        // P_r of the chain cluster is exactly (3 + 6 + 3) / 3 = 4.0
        assert!(validate_noise(&ps, &clustering, 4.0).unwrap().passed());
        match validate_noise(&ps, &clustering, 3.9).unwrap() {
            NoiseVerdict::Fail {
                cluster_id,
                worst_pr,
            } => {
                assert_eq!(cluster_id, 0);
                assert_eq!(worst_pr, 4.0);
            }
            NoiseVerdict::Pass => panic!("expected failure at tau 3.9"),
        }
    }

    #[test]
    fn validate_noise_all_singletons_pass() {
        let ps = set(&[(0.0, 0.0), (5.0, 5.0), (10.0, 10.0)]);
        let clustering = crate::clustering::kmeans(
            &ps,
            &crate::clustering::KMeansParams::new(3, 0),
        )
        .unwrap();
        assert!(validate_noise(&ps, &clustering, 0.1).unwrap().passed());
    }

    #[test]
    fn fallback_accepts_identical_points_immediately() {
        let ps = set(&[(4.0, 5.0), (4.0, 5.0), (4.0, 5.0), (4.0, 5.0), (4.0, 5.0)]);
        let config = PipelineConfig::default();
        let clustering = dbscan_fallback(&ps, &config).unwrap();
        assert_eq!(clustering.k, 1);
        assert_eq!(clustering.noise_count(), 0);
    }

    #[test]
    fn fallback_prunes_scatter() {
        let ps = blob_spec(
            vec![planted(4.0, 5.0, 0.1, 20), planted(18.0, 20.0, 0.1, 20)],
            60,
            21,
        );
        let config = PipelineConfig::default();
        let fb = fallback(&ps, &config).unwrap();
        assert!(!fb.partial);
        let verdict = validate_noise(&ps, &fb.clustering, config.tau).unwrap();
        assert!(verdict.passed());
        // scatter occupies indices 40.. in generation order
        let noise_among_scatter = (40..ps.len())
            .filter(|&i| fb.clustering.labels[i].is_noise())
            .count();
        assert!(
            noise_among_scatter * 5 >= 60 * 4,
            "only {noise_among_scatter}/60 scatter points labeled noise"
        );
    }

    #[test]
    fn fallback_reports_no_cluster_for_equidistant_triangle() {
        // Three points whose computed pairwise distances are bit-identical:
        // the starting radius equals that distance, the strict neighborhood
        // captures nothing, and the first round is already all noise.
        let a = Point::new(0.0, 0.0);
        let b = Point::new(6.0, 8.0);
        let c = equidistant_third(a, b);
        let ps = PointSet::new("tri", vec![a, b, c]);
        let config = PipelineConfig {
            min_points_v: 2,
            ..PipelineConfig::default()
        };
        assert_eq!(
            fallback(&ps, &config).unwrap_err(),
            PipelineError::NoClusterFound
        );
    }

    /// Searches near the geometric apex for a third point whose computed
    /// distances to both anchors equal the anchor distance exactly.
    fn equidistant_third(a: Point, b: Point) -> Point {
        let d = crate::clustering::euclidean(a, b);
        let mid = Point::new((a.start + b.start) / 2.0, (a.end + b.end) / 2.0);
        let (ux, uy) = (
            -(b.end - a.end) / d,
            (b.start - a.start) / d,
        );
        let h = d * 3.0f64.sqrt() / 2.0;
        let apex = Point::new(mid.start + ux * h, mid.end + uy * h);
        for i in -300i64..300 {
            for j in -300i64..300 {
                let cand = Point::new(
                    apex.start + i as f64 * f64::EPSILON * apex.start.abs().max(1.0),
                    apex.end + j as f64 * f64::EPSILON * apex.end.abs().max(1.0),
                );
                if crate::clustering::euclidean(cand, a) == d
                    && crate::clustering::euclidean(cand, b) == d
                {
                    return cand;
                }
            }
        }
        panic!("no bit-equidistant apex found");
    }

    #[test]
    fn profile_recovers_planted_proportions() {
        // cluster sizes 18/24/44/13 (n = 99); tight spread keeps every
        // cluster under the default threshold
        let ps = blob_spec(
            vec![
                planted(8.5, 10.0, 0.06, 18),
                planted(10.5, 12.2, 0.06, 24),
                planted(13.0, 15.0, 0.06, 44),
                planted(16.0, 17.8, 0.06, 13),
            ],
            0,
            5,
        );
        let result = profile_activity(&ps, &PipelineConfig::default()).unwrap();
        assert!(!result.partial);
        assert_eq!(result.habits.len(), 4);
        let mut confidences: Vec<f64> = result.habits.iter().map(|h| h.confidence).collect();
        confidences.sort_by(f64::total_cmp);
        assert_eq!(
            confidences,
            vec![13.0 / 99.0, 18.0 / 99.0, 24.0 / 99.0, 44.0 / 99.0]
        );
        assert!(result.quality.silhouette.is_some());
        let accepts = result
            .trace
            .iter()
            .filter(|t| t.verdict == Verdict::Accept)
            .count();
        assert_eq!(accepts, 1);
    }

    #[test]
    fn profile_falls_back_on_scattered_data() {
        let ps = blob_spec(
            vec![planted(5.0, 6.0, 0.1, 20), planted(17.0, 19.0, 0.1, 20)],
            60,
            33,
        );
        let result = profile_activity(&ps, &PipelineConfig::default()).unwrap();
        assert!(!result.partial);
        assert_eq!(result.clustering.method, Method::Dbscan);
        assert!(result.quality.silhouette.is_none());
        let validate_rejected = result
            .trace
            .iter()
            .any(|t| t.stage == Stage::Validate && t.verdict == Verdict::Reject
                && t.worst_pr.is_some_and(|w| w > 4.0));
        assert!(validate_rejected, "partitional winner should fail validation");
        let fallback_accepted = result
            .trace
            .iter()
            .any(|t| t.stage == Stage::Fallback && t.verdict == Verdict::Accept);
        assert!(fallback_accepted);
        for &pr in result.quality.noise_per_cluster.values() {
            assert!(pr <= 4.0);
        }
    }

    #[test]
    fn profile_coincident_triple_uses_tiebreak() {
        let ps = set(&[(9.0, 9.5), (9.0, 9.5), (9.0, 9.5)]);
        let result = profile_activity(&ps, &PipelineConfig::default()).unwrap();
        assert!(!result.partial);
        assert_eq!(result.clustering.method, Method::KMeans);
        assert_eq!(result.clustering.k, 2);
        assert_eq!(result.habits.len(), 2);
        assert_eq!(result.quality.silhouette, Some(0.0));
    }

    #[test]
    fn profile_is_deterministic() {
        let ps = blob_spec(
            vec![planted(6.0, 7.5, 0.3, 25), planted(15.0, 18.0, 0.4, 30)],
            10,
            77,
        );
        let config = PipelineConfig::default();
        let a = profile_activity(&ps, &config).unwrap();
        let b = profile_activity(&ps, &config).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn fallback_radii_strictly_decrease() {
        let ps = blob_spec(
            vec![planted(5.0, 6.0, 0.8, 30), planted(9.0, 11.0, 0.8, 30)],
            40,
            13,
        );
        let config = PipelineConfig {
            tau: 0.5, // force many rejected rounds
            ..PipelineConfig::default()
        };
        if let Ok(result) = profile_activity(&ps, &config) {
            let radii: Vec<f64> = result
                .trace
                .iter()
                .filter(|t| t.stage == Stage::Fallback && t.verdict != Verdict::Partial)
                .map(|t| t.k_or_eps)
                .collect();
            for w in radii.windows(2) {
                assert!(w[1] < w[0], "radii not strictly decreasing: {radii:?}");
            }
        }
    }

    #[test]
    fn subclusters_never_sparser_than_parent() {
        // per-capita pairwise sums cannot grow when points are removed
        let ps = blob_spec(
            vec![planted(7.0, 9.0, 0.5, 30), planted(16.0, 18.5, 0.5, 30)],
            0,
            41,
        );
        let config = PipelineConfig {
            tau: 1e9, // accept whatever the sweep picks
            ..PipelineConfig::default()
        };
        let result = profile_activity(&ps, &config).unwrap();
        for (&id, &parent_pr) in &result.quality.noise_per_cluster {
            let member_points: Vec<Point> = result
                .clustering
                .members(id)
                .into_iter()
                .map(|i| ps.points[i])
                .collect();
            if member_points.len() < 3 {
                continue;
            }
            let sub = PointSet::new("sub", member_points);
            if let Ok(sub_result) = profile_activity(&sub, &config) {
                for &sub_pr in sub_result.quality.noise_per_cluster.values() {
                    assert!(
                        sub_pr <= parent_pr + 1e-9,
                        "subcluster {sub_pr} sparser than parent {parent_pr}"
                    );
                }
            }
        }
    }
}
