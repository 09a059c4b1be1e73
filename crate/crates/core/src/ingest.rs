//! Parsers for the supported raw layouts: per-appliance power readings,
//! labeled sensor event logs, and the canonical intervals file used to move
//! interval lists between commands.

use std::io::{Read, Write};

use chrono::{DateTime, NaiveDate, NaiveDateTime, NaiveTime};
use thiserror::Error;

use crate::model::{normalize_interval, ActivityInterval, ModelError};

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("line {line}: {reason}")]
    MalformedRow { line: u64, reason: String },
    #[error("unknown column {0:?}")]
    UnknownColumn(String),
    #[error("no rows matched activity {0:?}")]
    EmptyResult(String),
    #[error("line {line}: {reason}")]
    InvariantViolation { line: u64, reason: String },
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

/// One raw power reading.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerSample {
    pub timestamp: NaiveDateTime,
    pub watts: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OnOff {
    On,
    Off,
}

/// One pre-labeled sensor event carrying an explicit device state.
#[derive(Debug, Clone, PartialEq)]
pub struct OnOffEvent {
    pub timestamp: NaiveDateTime,
    pub state: OnOff,
    pub activity: String,
}

/// Knobs for turning a power trace into occurrence intervals.
#[derive(Debug, Clone, PartialEq)]
pub struct IngestConfig {
    /// A sample counts as ON iff its reading is strictly above this.
    pub power_threshold_watts: f64,
    /// ON runs separated by at most this many seconds are merged.
    pub merge_gap_seconds: i64,
    /// Intervals shorter than this are dropped (standby flicker).
    pub min_duration_seconds: i64,
}

impl Default for IngestConfig {
    fn default() -> Self {
        IngestConfig {
            power_threshold_watts: 5.0,
            merge_gap_seconds: 60,
            min_duration_seconds: 120,
        }
    }
}

fn malformed(line: u64, reason: impl Into<String>) -> IngestError {
    IngestError::MalformedRow {
        line,
        reason: reason.into(),
    }
}

fn parse_power_timestamp(
    unix: Option<&str>,
    time: Option<&str>,
    line: u64,
) -> Result<NaiveDateTime, IngestError> {
    if let Some(raw) = unix {
        let secs: i64 = raw
            .trim()
            .parse()
            .map_err(|_| malformed(line, format!("bad unix timestamp {raw:?}")))?;
        return DateTime::from_timestamp(secs, 0)
            .map(|dt| dt.naive_utc())
            .ok_or_else(|| malformed(line, format!("unix timestamp {raw} out of range")));
    }
    if let Some(raw) = time {
        return NaiveDateTime::parse_from_str(raw.trim(), "%m/%d/%Y %I:%M:%S %p")
            .map_err(|_| malformed(line, format!("bad time {raw:?}")));
    }
    Err(IngestError::UnknownColumn("Unix/Time".into()))
}

/// Parses a power trace with a header row and numeric appliance columns,
/// thresholds the named column into ON runs, merges runs across short gaps,
/// and drops intervals below the duration floor. Malformed rows are fatal
/// unless `skip_errors` is set.
pub fn parse_power_csv<R: Read>(
    reader: R,
    appliance_column: &str,
    config: &IngestConfig,
    skip_errors: bool,
) -> Result<Vec<ActivityInterval>, IngestError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers = rdr.headers()?.clone();
    let col = headers
        .iter()
        .position(|h| h == appliance_column)
        .ok_or_else(|| IngestError::UnknownColumn(appliance_column.to_string()))?;
    let unix_col = headers.iter().position(|h| h == "Unix");
    let time_col = headers.iter().position(|h| h == "Time");
    if unix_col.is_none() && time_col.is_none() {
        return Err(IngestError::UnknownColumn("Unix/Time".into()));
    }

    let mut samples: Vec<PowerSample> = Vec::new();
    for (idx, record) in rdr.records().enumerate() {
        let line = idx as u64 + 2; // header occupies line 1
        let row = match record {
            Ok(r) => r,
            Err(e) => {
                if skip_errors {
                    continue;
                }
                return Err(malformed(line, e.to_string()));
            }
        };
        let parsed: Result<PowerSample, IngestError> = (|| {
            if row.len() != headers.len() {
                return Err(malformed(
                    line,
                    format!("expected {} fields, got {}", headers.len(), row.len()),
                ));
            }
            let timestamp = parse_power_timestamp(
                unix_col.map(|c| &row[c]),
                time_col.map(|c| &row[c]),
                line,
            )?;
            let raw = &row[col];
            let watts: f64 = raw
                .parse()
                .map_err(|_| malformed(line, format!("non-numeric reading {raw:?}")))?;
            if !watts.is_finite() || watts < 0.0 {
                return Err(malformed(line, format!("reading {watts} must be >= 0")));
            }
            Ok(PowerSample { timestamp, watts })
        })();
        match parsed {
            Ok(sample) => samples.push(sample),
            Err(e) if skip_errors => {
                let _ = e;
            }
            Err(e) => return Err(e),
        }
    }
    samples.sort_by_key(|s| s.timestamp);

    // maximal ON runs as (first, last) sample timestamps
    let mut runs: Vec<(NaiveDateTime, NaiveDateTime)> = Vec::new();
    let mut current: Option<(NaiveDateTime, NaiveDateTime)> = None;
    for s in &samples {
        if s.watts > config.power_threshold_watts {
            current = match current {
                None => Some((s.timestamp, s.timestamp)),
                Some((first, _)) => Some((first, s.timestamp)),
            };
        } else if let Some(run) = current.take() {
            runs.push(run);
        }
    }
    if let Some(run) = current {
        runs.push(run);
    }

    let mut merged: Vec<(NaiveDateTime, NaiveDateTime)> = Vec::new();
    for run in runs {
        match merged.last_mut() {
            Some(prev) if (run.0 - prev.1).num_seconds() <= config.merge_gap_seconds => {
                prev.1 = run.1;
            }
            _ => merged.push(run),
        }
    }

    let mut intervals = Vec::new();
    for (start, end) in merged {
        if (end - start).num_seconds() < config.min_duration_seconds {
            continue;
        }
        match normalize_interval(appliance_column, start, end) {
            Ok(iv) => intervals.push(iv),
            // zero-length or day-spanning runs cannot be represented as
            // occurrence tuples
            Err(ModelError::NonPositiveDuration) | Err(ModelError::OverlongInterval { .. }) => {}
        }
    }
    intervals.sort_by(|a, b| (a.date, a.start_hours).partial_cmp(&(b.date, b.start_hours)).unwrap());
    Ok(intervals)
}

/// Parses a whitespace- or comma-delimited sensor log whose rows carry
/// `date time sensor translate1 translate2 message sensor_type activity`,
/// and groups maximal contiguous runs of the requested activity label into
/// intervals (first to last timestamp of the run). Zero-duration runs drop.
pub fn parse_event_log<R: Read>(
    reader: R,
    activity_filter: &str,
    skip_errors: bool,
) -> Result<Vec<ActivityInterval>, IngestError> {
    let mut text = String::new();
    let mut reader = reader;
    reader.read_to_string(&mut text)?;

    let mut intervals = Vec::new();
    let mut matched_any = false;
    let mut run: Option<(NaiveDateTime, NaiveDateTime)> = None;
    let close_run = |run: &mut Option<(NaiveDateTime, NaiveDateTime)>,
                     intervals: &mut Vec<ActivityInterval>| {
        if let Some((first, last)) = run.take() {
            if let Ok(iv) = normalize_interval(activity_filter, first, last) {
                intervals.push(iv);
            }
        }
    };

    for (idx, raw_line) in text.lines().enumerate() {
        let line = idx as u64 + 1;
        if raw_line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = if raw_line.contains(',') {
            raw_line.split(',').map(str::trim).collect()
        } else {
            raw_line.split_whitespace().collect()
        };
        let parsed: Result<(NaiveDateTime, &str), IngestError> = (|| {
            if fields.len() != 8 {
                return Err(malformed(
                    line,
                    format!("expected 8 fields, got {}", fields.len()),
                ));
            }
            let date = NaiveDate::parse_from_str(fields[0], "%Y-%m-%d")
                .map_err(|_| malformed(line, format!("bad date {:?}", fields[0])))?;
            let time = NaiveTime::parse_from_str(fields[1], "%H:%M:%S%.f")
                .map_err(|_| malformed(line, format!("bad time {:?}", fields[1])))?;
            Ok((date.and_time(time), fields[7]))
        })();
        let (timestamp, activity) = match parsed {
            Ok(v) => v,
            Err(e) if skip_errors => {
                let _ = e;
                continue;
            }
            Err(e) => return Err(e),
        };
        if activity == activity_filter {
            matched_any = true;
            run = match run {
                None => Some((timestamp, timestamp)),
                Some((first, _)) => Some((first, timestamp)),
            };
        } else {
            close_run(&mut run, &mut intervals);
        }
    }
    close_run(&mut run, &mut intervals);

    if !matched_any {
        return Err(IngestError::EmptyResult(activity_filter.to_string()));
    }
    Ok(intervals)
}

/// Parses an event row into an explicit ON/OFF state where the message
/// carries one; sensor messages with other payloads yield `None`.
pub fn parse_on_off_event(
    timestamp: NaiveDateTime,
    message: &str,
    activity: &str,
) -> Option<OnOffEvent> {
    let state = match message {
        "ON" => OnOff::On,
        "OFF" => OnOff::Off,
        _ => return None,
    };
    Some(OnOffEvent {
        timestamp,
        state,
        activity: activity.to_string(),
    })
}

pub const INTERVALS_HEADER: [&str; 4] = ["activity", "date", "start_hours", "end_hours"];

/// Formats hours losslessly with at least four fractional digits.
pub fn fmt_hours(value: f64) -> String {
    let s = format!("{value}");
    match s.find('.') {
        Some(dot) => {
            let frac = s.len() - dot - 1;
            if frac >= 4 {
                s
            } else {
                format!("{s}{}", "0".repeat(4 - frac))
            }
        }
        None => format!("{s}.0000"),
    }
}

/// Reads the canonical intervals file. Column order is free; every row must
/// satisfy the interval invariants.
pub fn read_intervals_csv<R: Read>(reader: R) -> Result<Vec<ActivityInterval>, IngestError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers = rdr.headers()?.clone();
    let mut cols = [0usize; 4];
    for (slot, name) in cols.iter_mut().zip(INTERVALS_HEADER) {
        *slot = headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| IngestError::UnknownColumn(name.to_string()))?;
    }
    let mut out = Vec::new();
    for (idx, record) in rdr.records().enumerate() {
        let line = idx as u64 + 2;
        let row = record.map_err(|e| malformed(line, e.to_string()))?;
        if row.len() != headers.len() {
            return Err(malformed(
                line,
                format!("expected {} fields, got {}", headers.len(), row.len()),
            ));
        }
        let date = NaiveDate::parse_from_str(&row[cols[1]], "%Y-%m-%d")
            .map_err(|_| malformed(line, format!("bad date {:?}", &row[cols[1]])))?;
        let start_hours: f64 = row[cols[2]]
            .parse()
            .map_err(|_| malformed(line, format!("bad start_hours {:?}", &row[cols[2]])))?;
        let end_hours: f64 = row[cols[3]]
            .parse()
            .map_err(|_| malformed(line, format!("bad end_hours {:?}", &row[cols[3]])))?;
        let interval = ActivityInterval {
            activity: row[cols[0]].to_string(),
            date,
            start_hours,
            end_hours,
        };
        interval
            .validate()
            .map_err(|reason| IngestError::InvariantViolation { line, reason })?;
        out.push(interval);
    }
    Ok(out)
}

/// Writes the canonical intervals file: `activity,date,start_hours,end_hours`
/// with ISO dates and lossless decimal hours.
pub fn write_intervals_csv<W: Write>(
    writer: W,
    intervals: &[ActivityInterval],
) -> Result<(), IngestError> {
    let mut wtr = csv::Writer::from_writer(writer);
    wtr.write_record(INTERVALS_HEADER)?;
    for iv in intervals {
        wtr.write_record([
            iv.activity.as_str(),
            &iv.date.format("%Y-%m-%d").to_string(),
            &fmt_hours(iv.start_hours),
            &fmt_hours(iv.end_hours),
        ])?;
    }
    wtr.flush()?;
    Ok(())
}
