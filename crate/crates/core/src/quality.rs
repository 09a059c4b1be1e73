//! Cluster-validity computations: the silhouette coefficient, the
//! per-cluster sparsity metric used to accept or reject clusterings, and
//! elbow-based selection of the density radius.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::clustering::euclidean;
use crate::model::{Clustering, Point, PointSet};

/// Returned instead of a zero radius when the knee of the k-distance curve
/// sits on duplicate points.
pub const EPS_FLOOR: f64 = 1e-6;

#[derive(Debug, Error, PartialEq)]
pub enum QualityError {
    #[error("silhouette needs at least 2 non-noise clusters")]
    DegenerateClustering,
    #[error("cluster has no members")]
    EmptyCluster,
    #[error("need more than {rank} points, got {got}")]
    TooFewPoints { rank: usize, got: usize },
    #[error("neighbor rank must be at least 1")]
    InvalidNeighborRank,
}

/// Sorted distances to each point's `v`-th nearest neighbor, descending.
#[derive(Debug, Clone, PartialEq)]
pub struct KDistanceCurve {
    pub sorted_distances: Vec<f64>,
    pub v: usize,
}

/// Mean silhouette over all non-noise points.
///
/// For a point `i`, `a(i)` is its mean distance to the rest of its cluster
/// (0 for singletons, whose silhouette is defined as 0), `b(i)` the smallest
/// mean distance to any other cluster, and `s(i) = (b - a) / max(a, b)`.
/// Noise points are excluded from both sides of the computation.
pub fn silhouette_score(points: &PointSet, clustering: &Clustering) -> Result<f64, QualityError> {
    let pts = &points.points;
    let sizes = clustering.cluster_sizes();
    let k = sizes.iter().filter(|&&s| s > 0).count();
    if k < 2 {
        return Err(QualityError::DegenerateClustering);
    }
    let mut total = 0.0;
    let mut counted = 0usize;
    for (i, label) in clustering.labels.iter().enumerate() {
        let Some(own) = label.cluster_id() else {
            continue;
        };
        if sizes[own] == 1 {
            counted += 1;
            continue; // singleton contributes 0
        }
        let mut sums = vec![0.0f64; clustering.k];
        for (j, other) in clustering.labels.iter().enumerate() {
            if i == j {
                continue;
            }
            if let Some(c) = other.cluster_id() {
                sums[c] += euclidean(pts[i], pts[j]);
            }
        }
        let a = sums[own] / (sizes[own] - 1) as f64;
        let mut b = f64::INFINITY;
        for c in 0..clustering.k {
            if c != own && sizes[c] > 0 {
                b = b.min(sums[c] / sizes[c] as f64);
            }
        }
        let denom = a.max(b);
        if denom > 0.0 {
            total += (b - a) / denom;
        }
        counted += 1;
    }
    Ok(total / counted as f64)
}

/// Sparsity of one cluster: the sum of Euclidean distances over all
/// unordered member pairs, divided by the member count. Singletons score 0.
pub fn noise_metric(cluster_points: &[Point]) -> Result<f64, QualityError> {
    let n = cluster_points.len();
    if n == 0 {
        return Err(QualityError::EmptyCluster);
    }
    let mut sum = 0.0;
    for i in 0..n {
        for j in (i + 1)..n {
            sum += euclidean(cluster_points[i], cluster_points[j]);
        }
    }
    Ok(sum / n as f64)
}

/// Per-cluster sparsity values for every non-noise cluster of a clustering.
pub fn cluster_noise_metrics(
    points: &PointSet,
    clustering: &Clustering,
) -> Result<BTreeMap<usize, f64>, QualityError> {
    let mut out = BTreeMap::new();
    for id in 0..clustering.k {
        let members: Vec<Point> = clustering
            .members(id)
            .into_iter()
            .map(|i| points.points[i])
            .collect();
        out.insert(id, noise_metric(&members)?);
    }
    Ok(out)
}

/// Distance from each point to its `v`-th nearest neighbor (the point
/// itself excluded), sorted descending.
pub fn k_distance_curve(points: &PointSet, v: usize) -> Result<KDistanceCurve, QualityError> {
    if v < 1 {
        return Err(QualityError::InvalidNeighborRank);
    }
    let n = points.len();
    if n <= v {
        return Err(QualityError::TooFewPoints { rank: v, got: n });
    }
    let pts = &points.points;
    let mut values: Vec<f64> = (0..n)
        .map(|i| {
            let mut dists: Vec<f64> = (0..n)
                .filter(|&j| j != i)
                .map(|j| euclidean(pts[i], pts[j]))
                .collect();
            dists.sort_by(f64::total_cmp);
            dists[v - 1]
        })
        .collect();
    values.sort_by(|a, b| b.total_cmp(a));
    Ok(KDistanceCurve {
        sorted_distances: values,
        v,
    })
}

/// Index of the curve point farthest (perpendicularly) from the straight
/// line joining the curve's first and last points; ties break toward the
/// smaller index. On a perfectly linear curve every distance is 0 and the
/// tie-break yields index 0.
pub fn knee_index(curve: &[f64]) -> usize {
    if curve.len() < 3 {
        return 0;
    }
    let last = (curve.len() - 1) as f64;
    let dy = curve[curve.len() - 1] - curve[0];
    let dx = last;
    let mut best = 0usize;
    let mut best_num = 0.0f64;
    for (i, &y) in curve.iter().enumerate() {
        let num = (dy * i as f64 - dx * (y - curve[0])).abs();
        if num > best_num {
            best_num = num;
            best = i;
        }
    }
    best
}

/// Density radius chosen at the knee of the k-distance curve, floored to a
/// small positive value when the knee lands on duplicates.
pub fn elbow_eps(points: &PointSet, v: usize) -> Result<f64, QualityError> {
    let curve = k_distance_curve(points, v)?;
    let eps = curve.sorted_distances[knee_index(&curve.sorted_distances)];
    Ok(if eps > 0.0 { eps } else { EPS_FLOOR })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::clustering::{DbscanParams, MethodParams};
    use crate::model::{Label, Method};
    use proptest::prelude::*;

    fn set(points: &[(f64, f64)]) -> PointSet {
        PointSet::new(
            "test",
            points.iter().map(|&(s, e)| Point::new(s, e)).collect(),
        )
    }

    fn labeled(points: &[(f64, f64)], labels: &[isize]) -> (PointSet, Clustering) {
        let k = labels.iter().filter(|&&l| l >= 0).max().map_or(0, |&m| m as usize + 1);
        let clustering = Clustering {
            method: Method::Dbscan,
            params: MethodParams::Dbscan(DbscanParams {
                eps: 1.0,
                min_points: 1,
            }),
            labels: labels
                .iter()
                .map(|&l| {
                    if l < 0 {
                        Label::Noise
                    } else {
                        Label::Cluster(l as usize)
                    }
                })
                .collect(),
            k,
        };
        (set(points), clustering)
    }

    /// Direct textbook evaluation, kept independent of the implementation
    /// above: per-point loops with no shared accumulators.
    fn silhouette_oracle(points: &[Point], labels: &[Option<usize>]) -> f64 {
        let live: Vec<usize> = (0..points.len()).filter(|&i| labels[i].is_some()).collect();
        let mut total = 0.0;
        for &i in &live {
            let own = labels[i].unwrap();
            let own_members: Vec<usize> = live
                .iter()
                .copied()
                .filter(|&j| labels[j] == Some(own) && j != i)
                .collect();
            let s = if own_members.is_empty() {
                0.0
            } else {
                let a: f64 = own_members
                    .iter()
                    .map(|&j| euclidean(points[i], points[j]))
                    .sum::<f64>()
                    / own_members.len() as f64;
                let mut b = f64::INFINITY;
                let clusters: std::collections::BTreeSet<usize> =
                    live.iter().filter_map(|&j| labels[j]).collect();
                for c in clusters {
                    if c == own {
                        continue;
                    }
                    let others: Vec<usize> =
                        live.iter().copied().filter(|&j| labels[j] == Some(c)).collect();
                    let mean = others
                        .iter()
                        .map(|&j| euclidean(points[i], points[j]))
                        .sum::<f64>()
                        / others.len() as f64;
                    b = b.min(mean);
                }
                if a.max(b) > 0.0 {
                    (b - a) / a.max(b)
                } else {
                    0.0
                }
            };
            total += s;
        }
        total / live.len() as f64
    }

    #[test]
    fn silhouette_of_coincident_pairs_is_one() {
        let (ps, c) = labeled(
            &[(0.0, 0.0), (0.0, 0.0), (10.0, 10.0), (10.0, 10.0)],
            &[0, 0, 1, 1],
        );
        assert_eq!(silhouette_score(&ps, &c).unwrap(), 1.0);
    }

    #[test]
    fn silhouette_rejects_single_cluster() {
        let (ps, c) = labeled(&[(0.0, 0.0), (1.0, 1.0), (2.0, 2.0), (3.0, 3.0)], &[0, 0, 0, 0]);
        assert_eq!(
            silhouette_score(&ps, &c),
            Err(QualityError::DegenerateClustering)
        );
    }

    #[test]
    fn silhouette_matches_oracle_on_unit_square() {
        let pts = [(0.0, 0.0), (0.0, 1.0), (1.0, 0.0), (1.0, 1.0)];
        let (ps, c) = labeled(&pts, &[0, 0, 1, 1]);
        let expected = silhouette_oracle(
            &ps.points,
            &c.labels.iter().map(|l| l.cluster_id()).collect::<Vec<_>>(),
        );
        let got = silhouette_score(&ps, &c).unwrap();
        assert!((got - expected).abs() < 1e-12, "{got} vs {expected}");
    }

    #[test]
    fn noise_metric_examples() {
        assert_eq!(noise_metric(&[Point::new(8.0, 9.0)]).unwrap(), 0.0);
        assert_eq!(
            noise_metric(&[Point::new(8.0, 8.5), Point::new(8.0, 9.5)]).unwrap(),
            0.5
        );
        let three = [Point::new(0.0, 0.0), Point::new(0.0, 3.0), Point::new(0.0, 6.0)];
        assert_eq!(noise_metric(&three).unwrap(), 4.0);
        assert_eq!(noise_metric(&[]), Err(QualityError::EmptyCluster));
    }

    #[test]
    fn knee_index_examples() {
        let curve = [10.0, 9.8, 9.6, 2.0, 1.9, 1.8, 1.7];
        assert_eq!(knee_index(&curve), 3);
        assert_eq!(curve[knee_index(&curve)], 2.0);
        // perfectly linear: every distance 0, tie-break to index 0
        assert_eq!(knee_index(&[5.0, 4.0, 3.0, 2.0, 1.0]), 0);
    }

    #[test]
    fn elbow_floors_duplicate_only_sets() {
        let ps = set(&[(3.0, 4.0), (3.0, 4.0), (3.0, 4.0)]);
        assert_eq!(elbow_eps(&ps, 1).unwrap(), EPS_FLOOR);
    }

    #[test]
    fn elbow_rejects_small_sets() {
        let ps = set(&[(3.0, 4.0), (3.0, 5.0)]);
        assert_eq!(
            elbow_eps(&ps, 2),
            Err(QualityError::TooFewPoints { rank: 2, got: 2 })
        );
        assert_eq!(elbow_eps(&ps, 0), Err(QualityError::InvalidNeighborRank));
    }

    #[test]
    fn elbow_picks_a_curve_value() {
        let pts: Vec<(f64, f64)> = (0..20)
            .map(|i| {
                let x = (i as f64 * 1.37).sin().abs() * 10.0;
                (x, x + 0.5)
            })
            .collect();
        let ps = set(&pts);
        let curve = k_distance_curve(&ps, 3).unwrap();
        let eps = elbow_eps(&ps, 3).unwrap();
        assert!(eps > 0.0);
        assert!(curve.sorted_distances.contains(&eps));
    }

    fn arb_points(max_n: usize) -> impl Strategy<Value = Vec<Point>> {
        proptest::collection::vec((0.0f64..24.0, 0.0f64..12.0), 1..max_n)
            .prop_map(|raw| raw.into_iter().map(|(s, d)| Point::new(s, s + d)).collect())
    }

    proptest! {
        #[test]
        fn noise_metric_scales_exactly(pts in arb_points(40)) {
            let base = noise_metric(&pts).unwrap();
            let doubled: Vec<Point> =
                pts.iter().map(|p| Point::new(p.start * 2.0, p.end * 2.0)).collect();
            prop_assert_eq!(noise_metric(&doubled).unwrap(), 2.0 * base);
        }

        #[test]
        fn noise_metric_ignores_translation_and_order(pts in arb_points(30), shift in -5.0f64..5.0) {
            let base = noise_metric(&pts).unwrap();
            let moved: Vec<Point> =
                pts.iter().map(|p| Point::new(p.start + shift, p.end + shift)).collect();
            prop_assert!((noise_metric(&moved).unwrap() - base).abs() < 1e-9);
            let mut reversed = pts.clone();
            reversed.reverse();
            prop_assert!((noise_metric(&reversed).unwrap() - base).abs() < 1e-9);
        }

        #[test]
        fn noise_metric_zero_iff_coincident(pts in arb_points(20)) {
            let value = noise_metric(&pts).unwrap();
            let coincident = pts.iter().all(|p| p.start == pts[0].start && p.end == pts[0].end);
            prop_assert_eq!(value == 0.0, coincident);
        }

        #[test]
        fn silhouette_bounded_and_matches_oracle(
            raw in proptest::collection::vec((0.0f64..24.0, 0.0f64..12.0, 0usize..4), 4..60)
        ) {
            let points: Vec<Point> =
                raw.iter().map(|&(s, d, _)| Point::new(s, s + d)).collect();
            let mut labels: Vec<usize> = raw.iter().map(|&(_, _, l)| l).collect();
            // force at least two non-empty clusters
            labels[0] = 0;
            labels[1] = 1;
            let compact: Vec<usize> = {
                let mut map = std::collections::BTreeMap::new();
                labels.iter().map(|&l| {
                    let next = map.len();
                    *map.entry(l).or_insert(next)
                }).collect()
            };
            let k = compact.iter().max().unwrap() + 1;
            let clustering = Clustering {
                method: Method::KMeans,
                params: MethodParams::Dbscan(DbscanParams { eps: 1.0, min_points: 1 }),
                labels: compact.iter().map(|&l| Label::Cluster(l)).collect(),
                k,
            };
            let ps = PointSet::new("p", points.clone());
            let got = silhouette_score(&ps, &clustering).unwrap();
            prop_assert!((-1.0..=1.0).contains(&got));
            let expected = silhouette_oracle(
                &points,
                &compact.iter().map(|&l| Some(l)).collect::<Vec<_>>(),
            );
            prop_assert!((got - expected).abs() < 1e-12);
        }

        #[test]
        fn elbow_output_is_positive_curve_value(pts in arb_points(40)) {
            prop_assume!(pts.len() > 3);
            let ps = PointSet::new("p", pts);
            let curve = k_distance_curve(&ps, 3).unwrap();
            let eps = elbow_eps(&ps, 3).unwrap();
            prop_assert!(eps > 0.0);
            prop_assert!(curve.sorted_distances.contains(&eps) || eps == EPS_FLOOR);
        }
    }
}
