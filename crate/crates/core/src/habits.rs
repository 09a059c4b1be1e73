//! Turns an accepted clustering into habit profiles: per-cluster mean and
//! spread of start/end times plus a confidence score.

use thiserror::Error;

use crate::model::{Clustering, HabitProfile, PointSet};

#[derive(Debug, Error, PartialEq)]
pub enum HabitError {
    #[error("clustering has no non-noise clusters to profile")]
    NoAcceptedClusters,
}

/// How the confidence denominator counts an activity's occurrences.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConfidenceDenominator {
    /// Every observed occurrence, noise included (default).
    AllPoints,
    /// Only occurrences that landed in some cluster.
    ClusteredPoints,
}

/// One profile per non-noise cluster: coordinate means, population standard
/// deviations, the member count as support, and confidence `support / n`.
/// Output is sorted by descending confidence, ties by earlier mean start.
pub fn extract_habits(
    points: &PointSet,
    clustering: &Clustering,
    denominator: ConfidenceDenominator,
) -> Result<Vec<HabitProfile>, HabitError> {
    if clustering.k == 0 {
        return Err(HabitError::NoAcceptedClusters);
    }
    let total = match denominator {
        ConfidenceDenominator::AllPoints => clustering.labels.len(),
        ConfidenceDenominator::ClusteredPoints => {
            clustering.labels.len() - clustering.noise_count()
        }
    };
    let mut habits = Vec::with_capacity(clustering.k);
    for id in 0..clustering.k {
        let members = clustering.members(id);
        let q = members.len();
        debug_assert!(q >= 1, "clusters are non-empty by construction");
        let (mut sum_s, mut sum_e) = (0.0f64, 0.0f64);
        for &i in &members {
            sum_s += points.points[i].start;
            sum_e += points.points[i].end;
        }
        let mean_start = sum_s / q as f64;
        let mean_end = sum_e / q as f64;
        let (mut var_s, mut var_e) = (0.0f64, 0.0f64);
        for &i in &members {
            var_s += (points.points[i].start - mean_start).powi(2);
            var_e += (points.points[i].end - mean_end).powi(2);
        }
        habits.push(HabitProfile {
            cluster_id: id,
            mean_start,
            mean_end,
            std_start: (var_s / q as f64).sqrt(),
            std_end: (var_e / q as f64).sqrt(),
            support: q,
            confidence: q as f64 / total as f64,
        });
    }
    habits.sort_by(|a, b| {
        b.confidence
            .total_cmp(&a.confidence)
            .then(a.mean_start.total_cmp(&b.mean_start))
            .then(a.cluster_id.cmp(&b.cluster_id))
    });
    Ok(habits)
}
