//! From-scratch clustering kernels over 2-D occurrence tuples: Lloyd-style
//! k-means with greedy farthest-biased seeding, bottom-up agglomerative
//! merging with Lance-Williams updates, and density-based clustering with a
//! noise label.
//!
//! All three are deterministic: identical inputs and seeds produce
//! bit-identical labels, regardless of how many threads execute the k-means
//! restarts.

use std::collections::VecDeque;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::model::{Clustering, Label, Method, Point, PointSet};

#[derive(Debug, Error, PartialEq)]
pub enum ClusterError {
    #[error("need at least {needed} points, got {got}")]
    TooFewPoints { needed: usize, got: usize },
    #[error("invalid parameters: {0}")]
    InvalidParams(&'static str),
}

/// Euclidean distance between two tuples, in hours.
pub fn euclidean(a: Point, b: Point) -> f64 {
    let ds = a.start - b.start;
    let de = a.end - b.end;
    (ds * ds + de * de).sqrt()
}

fn squared_distance(a: Point, b: Point) -> f64 {
    let ds = a.start - b.start;
    let de = a.end - b.end;
    ds * ds + de * de
}

/// Splitmix64 step; gives each k-means restart an independent stream so the
/// restarts can run concurrently without sharing generator state.
pub(crate) fn derive_seed(seed: u64, index: u64) -> u64 {
    let mut z = seed ^ index.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, PartialEq)]
pub struct KMeansParams {
    pub k: usize,
    pub restarts: usize,
    pub max_iterations: usize,
    /// Convergence bound on the summed squared centroid shift per iteration.
    pub convergence_tol: f64,
    pub seed: u64,
}

impl KMeansParams {
    pub fn new(k: usize, seed: u64) -> Self {
        KMeansParams {
            k,
            restarts: 10,
            max_iterations: 300,
            convergence_tol: 1e-6,
            seed,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Linkage {
    Ward,
    Complete,
    Average,
    Single,
}

impl Linkage {
    pub fn as_str(self) -> &'static str {
        match self {
            Linkage::Ward => "ward",
            Linkage::Complete => "complete",
            Linkage::Average => "average",
            Linkage::Single => "single",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s.to_ascii_lowercase().as_str() {
            "ward" => Some(Linkage::Ward),
            "complete" => Some(Linkage::Complete),
            "average" => Some(Linkage::Average),
            "single" => Some(Linkage::Single),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AgglomerativeParams {
    pub k: usize,
    pub linkage: Linkage,
}

impl AgglomerativeParams {
    pub fn new(k: usize) -> Self {
        AgglomerativeParams {
            k,
            linkage: Linkage::Ward,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DbscanParams {
    /// Neighborhood radius; two points are neighbors iff their distance is
    /// strictly below `eps`.
    pub eps: f64,
    /// Minimum neighborhood occupancy (including the point itself) for a
    /// core point.
    pub min_points: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub enum MethodParams {
    KMeans(KMeansParams),
    Agglomerative(AgglomerativeParams),
    Dbscan(DbscanParams),
}

/// Relabels cluster ids so they appear in increasing order of first member
/// index. Noise labels pass through.
fn canonicalize(raw: &[usize], k: usize) -> Vec<Label> {
    let mut remap = vec![usize::MAX; k];
    let mut next = 0usize;
    let mut labels = Vec::with_capacity(raw.len());
    for &id in raw {
        if remap[id] == usize::MAX {
            remap[id] = next;
            next += 1;
        }
        labels.push(Label::Cluster(remap[id]));
    }
    labels
}

fn mean_of(points: &[Point], members: impl Iterator<Item = usize>) -> Point {
    let mut sum = Point::new(0.0, 0.0);
    let mut n = 0usize;
    for i in members {
        sum.start += points[i].start;
        sum.end += points[i].end;
        n += 1;
    }
    Point::new(sum.start / n as f64, sum.end / n as f64)
}

/// Greedy farthest-biased seeding: the first centroid is drawn uniformly,
/// each further one with probability proportional to the squared distance
/// from the nearest centroid chosen so far.
fn seed_centroids(points: &[Point], k: usize, rng: &mut ChaCha8Rng) -> Vec<Point> {
    let n = points.len();
    let mut chosen_idx = Vec::with_capacity(k);
    chosen_idx.push(rng.gen_range(0..n));
    let mut dist2: Vec<f64> = points
        .iter()
        .map(|&p| squared_distance(p, points[chosen_idx[0]]))
        .collect();
    while chosen_idx.len() < k {
        let total: f64 = dist2.iter().sum();
        let next = if total > 0.0 {
            let mut r = rng.gen::<f64>() * total;
            let mut pick = n - 1;
            for (i, &d) in dist2.iter().enumerate() {
                if r < d {
                    pick = i;
                    break;
                }
                r -= d;
            }
            pick
        } else {
            // All remaining mass is zero (duplicate-heavy data): take the
            // smallest index not yet chosen.
            (0..n).find(|i| !chosen_idx.contains(i)).unwrap_or(0)
        };
        chosen_idx.push(next);
        for (i, d) in dist2.iter_mut().enumerate() {
            let cand = squared_distance(points[i], points[next]);
            if cand < *d {
                *d = cand;
            }
        }
    }
    chosen_idx.into_iter().map(|i| points[i]).collect()
}

/// Assigns every point to its nearest centroid (ties to the smaller centroid
/// index), then repairs empty clusters by moving over the point farthest
/// from its assigned centroid.
fn assign(points: &[Point], centroids: &[Point]) -> Vec<usize> {
    let k = centroids.len();
    let mut labels = Vec::with_capacity(points.len());
    for &p in points {
        let mut best = 0usize;
        let mut best_d = squared_distance(p, centroids[0]);
        for (c, &centroid) in centroids.iter().enumerate().skip(1) {
            let d = squared_distance(p, centroid);
            if d < best_d {
                best_d = d;
                best = c;
            }
        }
        labels.push(best);
    }
    let mut sizes = vec![0usize; k];
    for &l in &labels {
        sizes[l] += 1;
    }
    for empty in 0..k {
        if sizes[empty] > 0 {
            continue;
        }
        let mut pick = usize::MAX;
        let mut pick_d = f64::NEG_INFINITY;
        for (i, &l) in labels.iter().enumerate() {
            if sizes[l] < 2 {
                continue; // moving it would empty another cluster
            }
            let d = squared_distance(points[i], centroids[l]);
            if d > pick_d {
                pick_d = d;
                pick = i;
            }
        }
        if pick != usize::MAX {
            sizes[labels[pick]] -= 1;
            labels[pick] = empty;
            sizes[empty] += 1;
        }
    }
    labels
}

fn lloyd(points: &[Point], mut centroids: Vec<Point>, params: &KMeansParams) -> (Vec<usize>, f64) {
    let k = centroids.len();
    let mut labels = vec![0usize; points.len()];
    for _ in 0..params.max_iterations {
        labels = assign(points, &centroids);
        let mut shift = 0.0;
        for (c, centroid) in centroids.iter_mut().enumerate() {
            let next =
                mean_of(points, labels.iter().enumerate().filter(|&(_, &l)| l == c).map(|(i, _)| i));
            shift += squared_distance(next, *centroid);
            *centroid = next;
        }
        if shift <= params.convergence_tol {
            break;
        }
    }
    // Within-cluster sum of squares for the final partition, against the
    // cluster means themselves.
    let mut means = vec![Point::new(0.0, 0.0); k];
    let mut counts = vec![0usize; k];
    for (i, &l) in labels.iter().enumerate() {
        means[l].start += points[i].start;
        means[l].end += points[i].end;
        counts[l] += 1;
    }
    for (m, &c) in means.iter_mut().zip(&counts) {
        m.start /= c as f64;
        m.end /= c as f64;
    }
    let inertia = labels
        .iter()
        .enumerate()
        .map(|(i, &l)| squared_distance(points[i], means[l]))
        .sum();
    (labels, inertia)
}

/// Lloyd's algorithm over `restarts` independent seedings; returns the
/// labeling with the lowest within-cluster sum of squared distances. The
/// winner is resolved in restart-index order, so concurrent restarts cannot
/// change the result.
pub fn kmeans(points: &PointSet, params: &KMeansParams) -> Result<Clustering, ClusterError> {
    let n = points.len();
    if params.k < 2 {
        return Err(ClusterError::InvalidParams("k must be at least 2"));
    }
    if params.restarts < 1 {
        return Err(ClusterError::InvalidParams("restarts must be at least 1"));
    }
    if params.k > n {
        return Err(ClusterError::TooFewPoints {
            needed: params.k,
            got: n,
        });
    }
    let runs: Vec<(f64, Vec<usize>)> = (0..params.restarts)
        .into_par_iter()
        .map(|r| {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(params.seed, r as u64));
            let centroids = seed_centroids(&points.points, params.k, &mut rng);
            let (labels, inertia) = lloyd(&points.points, centroids, params);
            (inertia, labels)
        })
        .collect();
    let mut best = 0usize;
    for i in 1..runs.len() {
        if runs[i].0 < runs[best].0 {
            best = i;
        }
    }
    Ok(Clustering {
        method: Method::KMeans,
        params: MethodParams::KMeans(params.clone()),
        labels: canonicalize(&runs[best].1, params.k),
        k: params.k,
    })
}

/// Merge cost between two clusters under a linkage, tracked via
/// Lance-Williams updates. For Ward the tracked quantity is twice the
/// increase in within-cluster sum of squares, which reduces to the squared
/// distance for singletons.
fn initial_cost(linkage: Linkage, a: Point, b: Point) -> f64 {
    match linkage {
        Linkage::Ward => squared_distance(a, b),
        _ => euclidean(a, b),
    }
}

fn lance_williams(
    linkage: Linkage,
    cost_ik: f64,
    cost_jk: f64,
    cost_ij: f64,
    n_i: f64,
    n_j: f64,
    n_k: f64,
) -> f64 {
    match linkage {
        Linkage::Single => cost_ik.min(cost_jk),
        Linkage::Complete => cost_ik.max(cost_jk),
        Linkage::Average => (n_i * cost_ik + n_j * cost_jk) / (n_i + n_j),
        Linkage::Ward => {
            ((n_i + n_k) * cost_ik + (n_j + n_k) * cost_jk - n_k * cost_ij) / (n_i + n_j + n_k)
        }
    }
}

/// Bottom-up merging from singletons until exactly `k` clusters remain.
/// Equal merge costs break toward the smallest (id, id) pair; a merged
/// cluster keeps the smaller of the two ids.
pub fn agglomerative(
    points: &PointSet,
    params: &AgglomerativeParams,
) -> Result<Clustering, ClusterError> {
    let n = points.len();
    if params.k < 2 {
        return Err(ClusterError::InvalidParams("k must be at least 2"));
    }
    if params.k > n {
        return Err(ClusterError::TooFewPoints {
            needed: params.k,
            got: n,
        });
    }
    let pts = &points.points;
    let mut active: Vec<bool> = vec![true; n];
    let mut sizes: Vec<f64> = vec![1.0; n];
    let mut owner: Vec<usize> = (0..n).collect(); // point -> cluster id
    let mut cost = vec![vec![0.0f64; n]; n];
    for i in 0..n {
        for j in (i + 1)..n {
            let c = initial_cost(params.linkage, pts[i], pts[j]);
            cost[i][j] = c;
            cost[j][i] = c;
        }
    }
    let mut remaining = n;
    while remaining > params.k {
        let mut best: Option<(usize, usize)> = None;
        let mut best_cost = f64::INFINITY;
        for i in 0..n {
            if !active[i] {
                continue;
            }
            for j in (i + 1)..n {
                if !active[j] {
                    continue;
                }
                if cost[i][j] < best_cost {
                    best_cost = cost[i][j];
                    best = Some((i, j));
                }
            }
        }
        let (i, j) = best.expect("at least two active clusters");
        let (n_i, n_j) = (sizes[i], sizes[j]);
        let cost_ij = cost[i][j];
        for m in 0..n {
            if !active[m] || m == i || m == j {
                continue;
            }
            let merged = lance_williams(
                params.linkage,
                cost[i][m],
                cost[j][m],
                cost_ij,
                n_i,
                n_j,
                sizes[m],
            );
            cost[i][m] = merged;
            cost[m][i] = merged;
        }
        sizes[i] += sizes[j];
        active[j] = false;
        for o in owner.iter_mut() {
            if *o == j {
                *o = i;
            }
        }
        remaining -= 1;
    }
    Ok(Clustering {
        method: Method::Agglomerative,
        params: MethodParams::Agglomerative(params.clone()),
        labels: canonicalize(&owner, n),
        k: params.k,
    })
}

/// Density-based clustering. A point is core iff at least `min_points`
/// points (itself included) lie strictly within `eps`; clusters are the
/// density-connected components of core points plus the border points they
/// reach. Border points go to the first cluster that claims them during the
/// index-ordered scan, and clusters are numbered in creation order.
pub fn dbscan(points: &PointSet, params: &DbscanParams) -> Result<Clustering, ClusterError> {
    if !params.eps.is_finite() || params.eps <= 0.0 {
        return Err(ClusterError::InvalidParams("eps must be positive"));
    }
    if params.min_points < 1 {
        return Err(ClusterError::InvalidParams("min_points must be at least 1"));
    }
    let pts = &points.points;
    let n = pts.len();
    let neighbors: Vec<Vec<usize>> = (0..n)
        .map(|i| {
            (0..n)
                .filter(|&j| euclidean(pts[i], pts[j]) < params.eps)
                .collect()
        })
        .collect();
    let mut labels = vec![Label::Noise; n];
    let mut visited = vec![false; n];
    let mut next_cluster = 0usize;
    for i in 0..n {
        if visited[i] {
            continue;
        }
        visited[i] = true;
        if neighbors[i].len() < params.min_points {
            continue;
        }
        let cid = next_cluster;
        next_cluster += 1;
        labels[i] = Label::Cluster(cid);
        let mut queue: VecDeque<usize> = neighbors[i].iter().copied().filter(|&j| j != i).collect();
        while let Some(j) = queue.pop_front() {
            if labels[j].is_noise() {
                labels[j] = Label::Cluster(cid);
            }
            if visited[j] {
                continue;
            }
            visited[j] = true;
            if neighbors[j].len() >= params.min_points {
                queue.extend(neighbors[j].iter().copied().filter(|&m| m != j));
            }
        }
    }
    Ok(Clustering {
        method: Method::Dbscan,
        params: MethodParams::Dbscan(params.clone()),
        labels,
        k: next_cluster,
    })
}
