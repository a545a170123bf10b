//! Cyclic binary signal data: the raw log, its per-cycle segmentation and the
//! fixed-size cycle batches that the learners consume.

mod batch;
mod flag;
mod parse;

pub use batch::{make_batches, Batcher, CycleBatch};
pub use flag::{flag_productivity, ExternalLabel, FlagBasis, FlagPolicy, ProductivityFlag};
pub use parse::{format_timestamp, parse_log, parse_timestamp, write_log, CsvFormat, LogRowReader};

use serde::{Deserialize, Serialize};

/// Dense row-major 0/1 matrix.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BinaryMatrix {
    rows: usize,
    cols: usize,
    data: Vec<u8>,
}

impl BinaryMatrix {
    pub fn new(cols: usize) -> Self {
        Self {
            rows: 0,
            cols,
            data: Vec::new(),
        }
    }

    /// Builds a matrix from row slices. Panics on ragged input or values other than 0/1.
    pub fn from_rows<R: AsRef<[u8]>>(cols: usize, rows: &[R]) -> Self {
        let mut m = Self::new(cols);
        for r in rows {
            m.push_row(r.as_ref());
        }
        m
    }

    pub fn push_row(&mut self, row: &[u8]) {
        assert_eq!(row.len(), self.cols, "row width mismatch");
        assert!(row.iter().all(|&v| v <= 1), "binary matrix values must be 0 or 1");
        self.data.extend_from_slice(row);
        self.rows += 1;
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &[u8] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn get(&self, i: usize, j: usize) -> u8 {
        self.data[i * self.cols + j]
    }

    pub fn iter_rows(&self) -> impl Iterator<Item = &[u8]> + '_ {
        // chunks_exact on an empty slice with cols == 0 would panic
        self.data.chunks(self.cols.max(1)).take(self.rows)
    }

    pub fn column(&self, j: usize) -> Vec<u8> {
        (0..self.rows).map(|i| self.get(i, j)).collect()
    }

    /// Row-major copy as `f64`.
    pub fn to_f64(&self) -> Vec<f64> {
        self.data.iter().map(|&v| f64::from(v)).collect()
    }

    pub fn as_slice(&self) -> &[u8] {
        &self.data
    }
}

/// One row of the raw signal log.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LogRow {
    /// Microseconds on a monotonic wall clock.
    pub timestamp_us: i64,
    pub signals: Vec<u8>,
    pub cycle: u32,
    pub state: u32,
}

/// A validated, time-ordered PLC/sensor log.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SignalLog {
    pub feature_names: Vec<String>,
    pub rows: Vec<LogRow>,
}

impl SignalLog {
    pub fn dim(&self) -> usize {
        self.feature_names.len()
    }

    pub fn cycle_ids(&self) -> Vec<u32> {
        let mut ids: Vec<u32> = self.rows.iter().map(|r| r.cycle).collect();
        ids.dedup();
        ids
    }
}

/// One production cycle: the unit of analysis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CycleSeries {
    pub cycle_id: u32,
    pub matrix: BinaryMatrix,
    pub states: Vec<u32>,
    pub timestamps_us: Vec<i64>,
    pub duration_seconds: f64,
}

impl CycleSeries {
    pub fn len(&self) -> usize {
        self.matrix.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.matrix.rows() == 0
    }

    pub fn dim(&self) -> usize {
        self.matrix.cols()
    }

    /// Rebuilds the log rows this cycle was cut from.
    pub fn to_log_rows(&self) -> Vec<LogRow> {
        (0..self.len())
            .map(|i| LogRow {
                timestamp_us: self.timestamps_us[i],
                signals: self.matrix.row(i).to_vec(),
                cycle: self.cycle_id,
                state: self.states[i],
            })
            .collect()
    }
}

/// Incrementally cuts a row stream into cycles.
#[derive(Debug)]
pub struct CycleSegmenter {
    dim: usize,
    current: Option<CycleSeries>,
}

impl CycleSegmenter {
    pub fn new(dim: usize) -> Self {
        Self { dim, current: None }
    }

    /// Feeds one row; returns the previous cycle when this row starts a new one.
    pub fn push(&mut self, row: &LogRow) -> Option<CycleSeries> {
        let finished = match &self.current {
            Some(c) if c.cycle_id != row.cycle => self.current.take().map(finalize),
            _ => None,
        };
        let dim = self.dim;
        let cur = self.current.get_or_insert_with(|| CycleSeries {
            cycle_id: row.cycle,
            matrix: BinaryMatrix::new(dim),
            states: Vec::new(),
            timestamps_us: Vec::new(),
            duration_seconds: 0.0,
        });
        cur.matrix.push_row(&row.signals);
        cur.states.push(row.state);
        cur.timestamps_us.push(row.timestamp_us);
        finished
    }

    pub fn finish(&mut self) -> Option<CycleSeries> {
        self.current.take().map(finalize)
    }
}

fn finalize(mut c: CycleSeries) -> CycleSeries {
    let first = c.timestamps_us.first().copied().unwrap_or(0);
    let last = c.timestamps_us.last().copied().unwrap_or(0);
    c.duration_seconds = (last - first).max(0) as f64 / 1e6;
    c
}

/// Splits a log into one series per distinct cycle id, preserving order.
pub fn segment_cycles(log: &SignalLog) -> Vec<CycleSeries> {
    let mut seg = CycleSegmenter::new(log.dim());
    let mut out: Vec<CycleSeries> = log.rows.iter().filter_map(|r| seg.push(r)).collect();
    out.extend(seg.finish());
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(t: i64, cycle: u32, state: u32) -> LogRow {
        LogRow {
            timestamp_us: t,
            signals: vec![(t % 2) as u8, 1],
            cycle,
            state,
        }
    }

    #[test]
    fn single_row_log_is_one_cycle_of_zero_duration() {
        let log = SignalLog {
            feature_names: vec!["a".into(), "b".into()],
            rows: vec![row(5_000_000, 1, 1)],
        };
        let cycles = segment_cycles(&log);
        assert_eq!(cycles.len(), 1);
        assert_eq!(cycles[0].len(), 1);
        assert_eq!(cycles[0].duration_seconds, 0.0);
    }

    #[test]
    fn three_cycles_of_ten_rows() {
        let mut rows = Vec::new();
        for c in 1..=3u32 {
            for i in 0..10 {
                rows.push(row(i64::from(c) * 1_000_000_000 + i * 1_000_000, c, 1 + i as u32 / 5));
            }
        }
        let log = SignalLog {
            feature_names: vec!["a".into(), "b".into()],
            rows,
        };
        let cycles = segment_cycles(&log);
        assert_eq!(cycles.len(), 3);
        for (k, c) in cycles.iter().enumerate() {
            assert_eq!(c.cycle_id, k as u32 + 1);
            assert_eq!(c.len(), 10);
            assert!((c.duration_seconds - 9.0).abs() < 1e-12);
        }
        let rebuilt: Vec<LogRow> = cycles.iter().flat_map(|c| c.to_log_rows()).collect();
        assert_eq!(rebuilt, log.rows);
    }

    #[test]
    fn empty_log_has_no_cycles() {
        let log = SignalLog {
            feature_names: vec!["a".into()],
            rows: vec![],
        };
        assert!(segment_cycles(&log).is_empty());
    }
}
