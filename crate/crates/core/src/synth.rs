//! Synthetic activity datasets with planted habit structure, for tests and
//! acceptance fixtures.

use chrono::{NaiveDate, TimeDelta};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{ActivityInterval, Point, PointSet};

#[derive(Debug, Error, PartialEq)]
pub enum SynthError {
    #[error("invalid spec: {0}")]
    InvalidSpec(String),
}

/// One planted habit: an isotropic normal around (center_start, center_end).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantedCluster {
    pub center_start: f64,
    pub center_end: f64,
    pub std: f64,
    pub count: usize,
}

fn default_activity() -> String {
    "synthetic".to_string()
}

/// Recipe for a planted dataset: habit clusters plus uniform scatter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantedSpec {
    #[serde(default = "default_activity")]
    pub activity: String,
    pub clusters: Vec<PlantedCluster>,
    #[serde(default)]
    pub scatter_count: usize,
    pub seed: u64,
}

impl PlantedSpec {
    pub fn from_json(text: &str) -> Result<Self, SynthError> {
        let spec: PlantedSpec =
            serde_json::from_str(text).map_err(|e| SynthError::InvalidSpec(e.to_string()))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        for (i, c) in self.clusters.iter().enumerate() {
            let probe = ActivityInterval {
                activity: self.activity.clone(),
                date: NaiveDate::from_ymd_opt(2024, 1, 1).unwrap(),
                start_hours: c.center_start,
                end_hours: c.center_end,
            };
            if let Err(msg) = probe.validate() {
                return Err(SynthError::InvalidSpec(format!("cluster {i}: {msg}")));
            }
            if !(c.std.is_finite() && c.std >= 0.0) {
                return Err(SynthError::InvalidSpec(format!(
                    "cluster {i}: std must be finite and non-negative"
                )));
            }
            if c.count < 1 {
                return Err(SynthError::InvalidSpec(format!(
                    "cluster {i}: count must be at least 1"
                )));
            }
        }
        Ok(())
    }
}

fn tuple_is_valid(start: f64, end: f64) -> bool {
    (0.0..24.0).contains(&start) && end >= start && end < 48.0 && end - start < 24.0
}

/// Draws the planted dataset. Cluster points come first in planting order,
/// scatter last; the returned labels carry the planted cluster index, with
/// `None` marking scatter. Deterministic for a given seed.
pub fn generate(spec: &PlantedSpec) -> Result<(PointSet, Vec<Option<usize>>), SynthError> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut points = Vec::new();
    let mut labels = Vec::new();
    for (id, cluster) in spec.clusters.iter().enumerate() {
        let normal = if cluster.std > 0.0 {
            Some(Normal::new(0.0, cluster.std).expect("validated std"))
        } else {
            None
        };
        for _ in 0..cluster.count {
            let point = match &normal {
                None => Point::new(cluster.center_start, cluster.center_end),
                Some(dist) => {
                    let mut accepted = None;
                    // Resample rather than clamp, so the empirical means stay
                    // on the planted centers; clamp only as a last resort.
                    for _ in 0..100 {
                        let s = cluster.center_start + dist.sample(&mut rng);
                        let e = cluster.center_end + dist.sample(&mut rng);
                        if tuple_is_valid(s, e) {
                            accepted = Some(Point::new(s, e));
                            break;
                        }
                    }
                    accepted.unwrap_or_else(|| {
                        let s = cluster.center_start.clamp(0.0, 23.999);
                        let e = cluster.center_end.clamp(s, (s + 23.999).min(47.999));
                        Point::new(s, e)
                    })
                }
            };
            points.push(point);
            labels.push(Some(id));
        }
    }
    for _ in 0..spec.scatter_count {
        let s = rng.gen_range(0.0..24.0);
        let d = rng.gen_range(0.0..12.0);
        points.push(Point::new(s, s + d));
        labels.push(None);
    }
    Ok((PointSet::new(spec.activity.clone(), points), labels))
}

/// Renders generated points as dated intervals, one occurrence per day
/// starting from a fixed epoch, so they can round-trip through the
/// canonical intervals file.
pub fn to_intervals(set: &PointSet) -> Vec<ActivityInterval> {
    let epoch = NaiveDate::from_ymd_opt(2024, 1, 1).unwrap();
    set.points
        .iter()
        .enumerate()
        .map(|(i, p)| ActivityInterval {
            activity: set.activity.clone(),
            date: (epoch.and_hms_opt(0, 0, 0).unwrap() + TimeDelta::days(i as i64)).date(),
            start_hours: p.start,
            end_hours: p.end,
        })
        .collect()
}
