//! CSV ingestion for signal logs.
//!
//! Header: `timestamp,<signal columns...>,cycle,state` (column names matched
//! case-insensitively; every column that is not one of the three keys is a
//! signal, in header order). Timestamps are either Table-style time of day
//! (`HH:MM:SS.ffff`) or ISO-8601 date-times. Row numbers in errors are
//! 1-based data-row indices (the header is not counted).

use std::io::{Read, Write};

use chrono::{NaiveDate, NaiveDateTime, NaiveTime, Timelike};

use super::{LogRow, SignalLog};
use crate::error::{RcaError, Result};

const MICROS_PER_DAY: i64 = 86_400_000_000;

/// Delimiter and quoting conventions of the input file.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CsvFormat {
    pub delimiter: u8,
}

impl Default for CsvFormat {
    fn default() -> Self {
        Self { delimiter: b',' }
    }
}

impl CsvFormat {
    pub fn tsv() -> Self {
        Self { delimiter: b'\t' }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum TimeStyle {
    TimeOfDay,
    DateTime,
}

/// Parsed timestamp in microseconds; time-of-day values are relative to midnight.
fn parse_timestamp_styled(s: &str) -> Option<(i64, TimeStyle)> {
    let s = s.trim();
    if s.contains('-') {
        for fmt in ["%Y-%m-%dT%H:%M:%S%.f", "%Y-%m-%d %H:%M:%S%.f", "%Y-%m-%dT%H:%M:%S%.fZ"] {
            if let Ok(dt) = NaiveDateTime::parse_from_str(s, fmt) {
                return Some((dt.and_utc().timestamp_micros(), TimeStyle::DateTime));
            }
        }
        None
    } else {
        let t = NaiveTime::parse_from_str(s, "%H:%M:%S%.f").ok()?;
        let us = i64::from(t.num_seconds_from_midnight()) * 1_000_000 + i64::from(t.nanosecond() / 1000);
        Some((us, TimeStyle::TimeOfDay))
    }
}

/// Parses a single timestamp to microseconds (time-of-day values count from midnight).
pub fn parse_timestamp(s: &str) -> Option<i64> {
    parse_timestamp_styled(s).map(|(us, _)| us)
}

/// ISO-8601 rendering with microsecond precision.
pub fn format_timestamp(us: i64) -> String {
    let base = NaiveDate::from_ymd_opt(1970, 1, 1)
        .and_then(|d| d.and_hms_opt(0, 0, 0))
        .expect("epoch is valid");
    let dt = base + chrono::Duration::microseconds(us);
    dt.format("%Y-%m-%dT%H:%M:%S%.6f").to_string()
}

struct Columns {
    timestamp: usize,
    cycle: usize,
    state: usize,
    signals: Vec<usize>,
    names: Vec<String>,
}

fn locate_columns(header: &csv::StringRecord) -> Result<Columns> {
    let find = |key: &str| {
        header
            .iter()
            .position(|h| h.trim().eq_ignore_ascii_case(key))
            .ok_or_else(|| RcaError::Header(format!("missing `{key}` column")))
    };
    let timestamp = find("timestamp")?;
    let cycle = find("cycle")?;
    let state = find("state")?;
    let (signals, names): (Vec<usize>, Vec<String>) = header
        .iter()
        .enumerate()
        .filter(|(i, _)| ![timestamp, cycle, state].contains(i))
        .map(|(i, h)| (i, h.trim().to_string()))
        .unzip();
    if signals.is_empty() {
        return Err(RcaError::Header("no signal columns".into()));
    }
    Ok(Columns {
        timestamp,
        cycle,
        state,
        signals,
        names,
    })
}

/// Streaming, validating reader over log rows.
pub struct LogRowReader<R: Read> {
    records: csv::StringRecordsIntoIter<R>,
    cols: Columns,
    row_index: usize,
    style: Option<TimeStyle>,
    day_offset: i64,
    prev: Option<(i64, u32, u32)>,
}

impl<R: Read> LogRowReader<R> {
    pub fn new(source: R, format: CsvFormat) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new()
            .delimiter(format.delimiter)
            .has_headers(true)
            .trim(csv::Trim::All)
            .from_reader(source);
        let cols = locate_columns(reader.headers()?)?;
        Ok(Self {
            records: reader.into_records(),
            cols,
            row_index: 0,
            style: None,
            day_offset: 0,
            prev: None,
        })
    }

    pub fn feature_names(&self) -> &[String] {
        &self.cols.names
    }

    fn parse_record(&mut self, rec: &csv::StringRecord) -> Result<LogRow> {
        let row = self.row_index;
        let field = |i: usize| rec.get(i).unwrap_or("");
        let ts_raw = field(self.cols.timestamp);
        let (mut ts, style) = parse_timestamp_styled(ts_raw)
            .ok_or_else(|| RcaError::parse(row, format!("malformed timestamp `{ts_raw}`")))?;
        match self.style {
            None => self.style = Some(style),
            Some(s) if s != style => {
                return Err(RcaError::parse(row, "timestamp style changes mid-file"));
            }
            _ => {}
        }

        let mut signals = Vec::with_capacity(self.cols.signals.len());
        for (&col, name) in self.cols.signals.iter().zip(&self.cols.names) {
            match field(col) {
                "0" => signals.push(0),
                "1" => signals.push(1),
                other => {
                    return Err(RcaError::parse(
                        row,
                        format!("non-binary value `{other}` in signal `{name}`"),
                    ))
                }
            }
        }
        let parse_pos = |what: &str, raw: &str| -> Result<u32> {
            raw.parse::<u32>()
                .ok()
                .filter(|&v| v > 0)
                .ok_or_else(|| RcaError::parse(row, format!("{what} must be a positive integer, got `{raw}`")))
        };
        let cycle = parse_pos("cycle", field(self.cols.cycle))?;
        let state = parse_pos("state", field(self.cols.state))?;

        if style == TimeStyle::TimeOfDay {
            ts += self.day_offset;
            if let Some((prev_ts, _, _)) = self.prev {
                // time-of-day logs wrap at midnight
                if prev_ts - ts > MICROS_PER_DAY / 2 {
                    self.day_offset += MICROS_PER_DAY;
                    ts += MICROS_PER_DAY;
                }
            }
        }
        if let Some((prev_ts, prev_cycle, prev_state)) = self.prev {
            if ts < prev_ts {
                return Err(RcaError::parse(row, "timestamp decreases"));
            }
            if cycle < prev_cycle {
                return Err(RcaError::parse(
                    row,
                    format!("cycle number decreases ({prev_cycle} -> {cycle})"),
                ));
            }
            if cycle == prev_cycle && state < prev_state {
                return Err(RcaError::parse(
                    row,
                    format!("state decreases within cycle {cycle} ({prev_state} -> {state})"),
                ));
            }
        }
        self.prev = Some((ts, cycle, state));
        Ok(LogRow {
            timestamp_us: ts,
            signals,
            cycle,
            state,
        })
    }
}

impl<R: Read> Iterator for LogRowReader<R> {
    type Item = Result<LogRow>;

    fn next(&mut self) -> Option<Self::Item> {
        let rec = self.records.next()?;
        self.row_index += 1;
        Some(match rec {
            Ok(rec) => self.parse_record(&rec),
            Err(e) => Err(RcaError::parse(self.row_index, e.to_string())),
        })
    }
}

/// Reads and validates a whole log.
pub fn parse_log<R: Read>(source: R, format: CsvFormat) -> Result<SignalLog> {
    let mut reader = LogRowReader::new(source, format)?;
    let feature_names = reader.feature_names().to_vec();
    let rows = reader.by_ref().collect::<Result<Vec<_>>>()?;
    Ok(SignalLog { feature_names, rows })
}

/// Writes the canonical CSV form (ISO-8601 timestamps).
pub fn write_log<W: Write>(log: &SignalLog, sink: W) -> Result<()> {
    let mut w = csv::WriterBuilder::new().from_writer(sink);
    let mut header = vec!["timestamp".to_string()];
    header.extend(log.feature_names.iter().cloned());
    header.push("cycle".into());
    header.push("state".into());
    w.write_record(&header)?;
    let mut rec: Vec<String> = Vec::with_capacity(header.len());
    for r in &log.rows {
        rec.clear();
        rec.push(format_timestamp(r.timestamp_us));
        rec.extend(r.signals.iter().map(|v| v.to_string()));
        rec.push(r.cycle.to_string());
        rec.push(r.state.to_string());
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}
