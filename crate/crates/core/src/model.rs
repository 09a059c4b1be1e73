//! Shared domain types: activity occurrences as (start, end) decimal-hour
//! tuples, clusterings over them, and the habit profiles derived from
//! accepted clusterings.

use std::collections::BTreeMap;

use chrono::{NaiveDate, NaiveDateTime, TimeDelta, Timelike};
use thiserror::Error;

use crate::clustering::MethodParams;

#[derive(Debug, Error, PartialEq)]
pub enum ModelError {
    #[error("interval end must be strictly after its start")]
    NonPositiveDuration,
    #[error("interval spans {hours:.2} h; durations must stay under 24 h")]
    OverlongInterval { hours: f64 },
}

/// A single activity occurrence as a 2-D point in decimal hours.
///
/// `start` lies in [0, 24); `end` may extend past 24 when the occurrence
/// wraps midnight, but never 24 h past `start`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Point {
    pub start: f64,
    pub end: f64,
}

impl Point {
    pub fn new(start: f64, end: f64) -> Self {
        Point { start, end }
    }
}

/// One dated occurrence of an activity.
#[derive(Debug, Clone, PartialEq)]
pub struct ActivityInterval {
    pub activity: String,
    pub date: NaiveDate,
    pub start_hours: f64,
    pub end_hours: f64,
}

impl ActivityInterval {
    /// Checks the coordinate invariants shared by every producer of
    /// intervals: finite coordinates, start in [0, 24), end in [start, 48),
    /// and a span below 24 h.
    pub fn validate(&self) -> Result<(), String> {
        if !self.start_hours.is_finite() || !self.end_hours.is_finite() {
            return Err("non-finite hours".into());
        }
        if self.start_hours < 0.0 || self.start_hours >= 24.0 {
            return Err(format!("start_hours {} outside [0, 24)", self.start_hours));
        }
        if self.end_hours < self.start_hours {
            return Err(format!(
                "end_hours {} before start_hours {}",
                self.end_hours, self.start_hours
            ));
        }
        if self.end_hours >= 48.0 {
            return Err(format!("end_hours {} outside [0, 48)", self.end_hours));
        }
        if self.end_hours - self.start_hours >= 24.0 {
            return Err(format!(
                "interval spans {} h, must stay under 24",
                self.end_hours - self.start_hours
            ));
        }
        Ok(())
    }

    pub fn point(&self) -> Point {
        Point::new(self.start_hours, self.end_hours)
    }
}

fn clock_hours(ts: NaiveDateTime) -> f64 {
    let t = ts.time();
    f64::from(t.hour())
        + f64::from(t.minute()) / 60.0
        + f64::from(t.second()) / 3600.0
        + f64::from(t.nanosecond()) / 3_600_000_000_000.0
}

/// Converts a pair of wall-clock timestamps into one interval tuple.
///
/// The start keeps its clock reading; an end that crosses midnight is
/// extended past 24 instead of splitting the occurrence, so the tuple stays
/// one point per occurrence. The date is the calendar date of the start.
pub fn normalize_interval(
    activity: impl Into<String>,
    start: NaiveDateTime,
    end: NaiveDateTime,
) -> Result<ActivityInterval, ModelError> {
    let span = end.signed_duration_since(start);
    if span <= TimeDelta::zero() {
        return Err(ModelError::NonPositiveDuration);
    }
    if span >= TimeDelta::hours(24) {
        return Err(ModelError::OverlongInterval {
            hours: span.num_milliseconds() as f64 / 3_600_000.0,
        });
    }
    let start_hours = clock_hours(start);
    let mut end_hours = clock_hours(end);
    if end_hours < start_hours {
        end_hours += 24.0;
    }
    Ok(ActivityInterval {
        activity: activity.into(),
        date: start.date(),
        start_hours,
        end_hours,
    })
}

/// An ordered set of occurrence tuples for one activity. Point `i`
/// corresponds to interval `i` of the source list.
#[derive(Debug, Clone, PartialEq)]
pub struct PointSet {
    pub points: Vec<Point>,
    pub activity: String,
}

impl PointSet {
    pub fn new(activity: impl Into<String>, points: Vec<Point>) -> Self {
        PointSet {
            points,
            activity: activity.into(),
        }
    }

    /// Builds a point set from intervals, keeping their order. The activity
    /// label is taken from the first interval.
    pub fn from_intervals(intervals: &[ActivityInterval]) -> Self {
        let activity = intervals
            .first()
            .map(|iv| iv.activity.clone())
            .unwrap_or_default();
        PointSet {
            points: intervals.iter().map(ActivityInterval::point).collect(),
            activity,
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Per-point assignment: a cluster id in `0..k`, or noise for points no
/// density-based run could attach anywhere.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Label {
    Cluster(usize),
    Noise,
}

impl Label {
    pub fn cluster_id(self) -> Option<usize> {
        match self {
            Label::Cluster(id) => Some(id),
            Label::Noise => None,
        }
    }

    pub fn is_noise(self) -> bool {
        matches!(self, Label::Noise)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    KMeans,
    Agglomerative,
    Dbscan,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::KMeans => "KMEANS",
            Method::Agglomerative => "AGGLOMERATIVE",
            Method::Dbscan => "DBSCAN",
        }
    }
}

/// The outcome of one clustering run: which method with which parameters,
/// the per-point labels, and the resulting non-noise cluster count.
#[derive(Debug, Clone, PartialEq)]
pub struct Clustering {
    pub method: Method,
    pub params: MethodParams,
    pub labels: Vec<Label>,
    pub k: usize,
}

impl Clustering {
    /// Point indices belonging to cluster `id`, in input order.
    pub fn members(&self, id: usize) -> Vec<usize> {
        self.labels
            .iter()
            .enumerate()
            .filter(|(_, l)| l.cluster_id() == Some(id))
            .map(|(i, _)| i)
            .collect()
    }

    pub fn cluster_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0usize; self.k];
        for l in &self.labels {
            if let Some(id) = l.cluster_id() {
                sizes[id] += 1;
            }
        }
        sizes
    }

    pub fn noise_count(&self) -> usize {
        self.labels.iter().filter(|l| l.is_noise()).count()
    }
}

/// Validity measurements for one clustering: the overall silhouette (absent
/// on the density-based path) and the per-cluster sparsity values checked
/// against the threshold `tau`.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterQuality {
    pub silhouette: Option<f64>,
    pub noise_per_cluster: BTreeMap<usize, f64>,
    pub tau: f64,
}

/// One extracted habit: the typical start/end band of a cluster plus how
/// often the activity fell into it.
#[derive(Debug, Clone, PartialEq)]
pub struct HabitProfile {
    pub cluster_id: usize,
    pub mean_start: f64,
    pub mean_end: f64,
    pub std_start: f64,
    pub std_end: f64,
    /// Member count of the cluster.
    pub support: usize,
    /// `support / n`, with `n` the occurrence count of the whole activity.
    pub confidence: f64,
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::NaiveTime;
    use proptest::prelude::*;

    fn ts(date: &str, time: &str) -> NaiveDateTime {
        let d = NaiveDate::parse_from_str(date, "%Y-%m-%d").unwrap();
        let t = NaiveTime::parse_from_str(time, "%H:%M:%S%.f").unwrap();
        d.and_time(t)
    }

    #[test]
    fn normalize_plain_interval() {
        let iv = normalize_interval("tv", ts("2024-03-01", "08:30:00"), ts("2024-03-01", "08:45:00"))
            .unwrap();
        assert_eq!(iv.start_hours, 8.5);
        assert_eq!(iv.end_hours, 8.75);
        assert_eq!(iv.date, NaiveDate::from_ymd_opt(2024, 3, 1).unwrap());
    }

    #[test]
    fn normalize_wraps_midnight() {
        let iv = normalize_interval("tv", ts("2024-03-01", "23:30:00"), ts("2024-03-02", "00:30:00"))
            .unwrap();
        assert_eq!(iv.start_hours, 23.5);
        assert_eq!(iv.end_hours, 24.5);
        assert_eq!(iv.date, NaiveDate::from_ymd_opt(2024, 3, 1).unwrap());
    }

    #[test]
    fn normalize_rejects_degenerate() {
        let t = ts("2024-03-01", "10:00:00");
        assert_eq!(
            normalize_interval("tv", t, t),
            Err(ModelError::NonPositiveDuration)
        );
        assert_eq!(
            normalize_interval("tv", ts("2024-03-01", "10:00:00"), ts("2024-03-01", "09:00:00")),
            Err(ModelError::NonPositiveDuration)
        );
    }

    #[test]
    fn normalize_rejects_overlong() {
        let err = normalize_interval(
            "tv",
            ts("2024-03-01", "08:00:00"),
            ts("2024-03-02", "09:00:00"),
        )
        .unwrap_err();
        assert!(matches!(err, ModelError::OverlongInterval { .. }));
    }

    /// Rebuilds timestamps from an interval so it can be normalized again.
    fn denormalize(iv: &ActivityInterval) -> (NaiveDateTime, NaiveDateTime) {
        let to_ts = |hours: f64| {
            let base = iv.date.and_hms_opt(0, 0, 0).unwrap();
            base + TimeDelta::nanoseconds((hours * 3_600_000_000_000.0).round() as i64)
        };
        (to_ts(iv.start_hours), to_ts(iv.end_hours))
    }

    proptest! {
        #[test]
        fn normalize_is_idempotent(start_min in 0i64..1440, dur_min in 1i64..1440) {
            let start = ts("2024-03-01", "00:00:00") + TimeDelta::minutes(start_min);
            let end = start + TimeDelta::minutes(dur_min);
            let iv = normalize_interval("a", start, end).unwrap();
            let (s2, e2) = denormalize(&iv);
            let again = normalize_interval("a", s2, e2).unwrap();
            prop_assert_eq!(&iv, &again);
        }

        #[test]
        fn normalized_span_is_under_a_day(start_min in 0i64..1440, dur_min in 1i64..1440) {
            let start = ts("2024-03-01", "00:00:00") + TimeDelta::minutes(start_min);
            let end = start + TimeDelta::minutes(dur_min);
            let iv = normalize_interval("a", start, end).unwrap();
            let span = iv.end_hours - iv.start_hours;
            prop_assert!((0.0..24.0).contains(&span));
            prop_assert!(iv.validate().is_ok());
        }
    }
}
