//! Comparison detectors turned into feature attributors: an isolation forest
//! credited by path-length reduction, and Hamming kNN credited by per-feature
//! disagreement with the neighbours.

use rand::seq::index::sample;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::cycle::{BinaryMatrix, CycleSeries};
use crate::error::{RcaError, Result};
use crate::select::{select_top_fraction, SelectionPolicy};

const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

/// Average unsuccessful-search path length in a binary search tree of `n` points.
pub fn average_path_length(n: usize) -> f64 {
    match n {
        0 | 1 => 0.0,
        2 => 1.0,
        _ => {
            let n = n as f64;
            2.0 * ((n - 1.0).ln() + EULER_GAMMA) - 2.0 * (n - 1.0) / n
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IforestParams {
    pub num_trees: usize,
    pub subsample: usize,
    pub contamination: f64,
}

impl Default for IforestParams {
    fn default() -> Self {
        Self {
            num_trees: 100,
            subsample: 256,
            contamination: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
enum ITree {
    Split {
        feature: usize,
        threshold: f64,
        size: usize,
        low: Box<ITree>,
        high: Box<ITree>,
    },
    Leaf {
        size: usize,
    },
}

impl ITree {
    fn size(&self) -> usize {
        match self {
            ITree::Split { size, .. } | ITree::Leaf { size } => *size,
        }
    }

    fn grow<R: Rng>(x: &BinaryMatrix, rows: &[usize], depth: usize, limit: usize, rng: &mut R) -> Self {
        if depth >= limit || rows.len() <= 1 {
            return ITree::Leaf { size: rows.len() };
        }
        // only features that vary at this node can isolate anything
        let varying: Vec<usize> = (0..x.cols())
            .filter(|&f| {
                let first = x.get(rows[0], f);
                rows.iter().any(|&r| x.get(r, f) != first)
            })
            .collect();
        if varying.is_empty() {
            return ITree::Leaf { size: rows.len() };
        }
        let feature = varying[rng.gen_range(0..varying.len())];
        let threshold: f64 = rng.gen_range(f64::EPSILON..1.0);
        let (high, low): (Vec<usize>, Vec<usize>) = rows.iter().partition(|&&r| x.get(r, feature) as f64 > threshold);
        ITree::Split {
            feature,
            threshold,
            size: rows.len(),
            low: Box::new(Self::grow(x, &low, depth + 1, limit, rng)),
            high: Box::new(Self::grow(x, &high, depth + 1, limit, rng)),
        }
    }

    /// Path length of `row`, crediting each split with the expected length it saved.
    fn path(&self, row: &[u8], attribution: &mut [f64]) -> f64 {
        let mut node = self;
        let mut depth = 0.0;
        loop {
            match node {
                ITree::Leaf { size } => return depth + average_path_length(*size),
                ITree::Split {
                    feature,
                    threshold,
                    size,
                    low,
                    high,
                } => {
                    let next = if row[*feature] as f64 > *threshold { high } else { low };
                    let saved = average_path_length(*size) - 1.0 - average_path_length(next.size());
                    attribution[*feature] += saved.max(0.0);
                    depth += 1.0;
                    node = next;
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IsolationForestModel {
    pub params: IforestParams,
    pub dim: usize,
    /// Rows each tree was grown on.
    pub sample_size: usize,
    trees: Vec<ITree>,
}

impl IsolationForestModel {
    pub fn train<R: Rng>(x: &BinaryMatrix, params: &IforestParams, rng: &mut R) -> Result<Self> {
        if params.num_trees == 0 || params.subsample < 2 || !(0.0..=0.5).contains(&params.contamination) {
            return Err(RcaError::Config(
                "iforest: need num_trees ≥ 1, subsample ≥ 2 and contamination in [0, 0.5]".into(),
            ));
        }
        let n = x.rows();
        if n == 0 {
            return Err(RcaError::Degenerate("isolation forest needs training rows".into()));
        }
        let psi = params.subsample.min(n);
        let limit = (psi as f64).log2().ceil().max(1.0) as usize;
        let trees = (0..params.num_trees)
            .map(|_| {
                let rows = sample(rng, n, psi).into_vec();
                ITree::grow(x, &rows, 0, limit, rng)
            })
            .collect();
        Ok(Self {
            params: params.clone(),
            dim: x.cols(),
            sample_size: psi,
            trees,
        })
    }

    fn norm(&self) -> f64 {
        average_path_length(self.sample_size).max(f64::MIN_POSITIVE)
    }

    /// Anomaly score in (0, 1] and per-feature path-length reduction averaged over trees.
    pub fn score_row(&self, row: &[u8]) -> (f64, Vec<f64>) {
        let mut attribution = vec![0.0; self.dim];
        let mean_path: f64 =
            self.trees.iter().map(|t| t.path(row, &mut attribution)).sum::<f64>() / self.trees.len() as f64;
        attribution.iter_mut().for_each(|a| *a /= self.trees.len() as f64);
        (2f64.powf(-mean_path / self.norm()), attribution)
    }

    /// Mean attribution over the cycle's most anomalous rows (the contamination share).
    pub fn feature_scores(&self, cycle: &CycleSeries) -> Result<Vec<f64>> {
        if cycle.dim() != self.dim {
            return Err(RcaError::Dimension {
                expected: self.dim,
                actual: cycle.dim(),
            });
        }
        let n = cycle.len();
        if n == 0 {
            return Ok(vec![0.0; self.dim]);
        }
        let scored: Vec<(f64, Vec<f64>)> = cycle.matrix.iter_rows().map(|r| self.score_row(r)).collect();
        let take = anomalous_row_count(n, self.params.contamination);
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| scored[b].0.total_cmp(&scored[a].0));
        let mut out = vec![0.0; self.dim];
        for &r in &order[..take] {
            for (o, a) in out.iter_mut().zip(&scored[r].1) {
                *o += a;
            }
        }
        out.iter_mut().for_each(|o| *o /= take as f64);
        Ok(out)
    }

    pub fn root_causes(&self, cycle: &CycleSeries, policy: &SelectionPolicy) -> Result<Vec<usize>> {
        Ok(select_top_fraction(&self.feature_scores(cycle)?, baseline_fraction(policy)))
    }
}

/// Rows treated as anomalous: `round(contamination · n)`, at least one.
pub fn anomalous_row_count(n: usize, contamination: f64) -> usize {
    ((contamination * n as f64).round() as usize).clamp(1, n.max(1))
}

/// Baselines report as many features as `I_1a ∪ I_1b` holds.
pub fn baseline_fraction(policy: &SelectionPolicy) -> f64 {
    policy.frac_i1 * 2.0
}

#[derive(Debug, Clone, PartialEq)]
pub struct KnnModel {
    pub k: usize,
    pub reference: BinaryMatrix,
}

impl KnnModel {
    pub fn new(reference: BinaryMatrix, k: usize) -> Result<Self> {
        if k == 0 || k > reference.rows() {
            return Err(RcaError::Degenerate(format!(
                "kNN needs 1 ≤ k ≤ reference rows, got k={k} with {} rows",
                reference.rows()
            )));
        }
        Ok(Self { k, reference })
    }

    /// Indices of the `k` nearest reference rows by Hamming distance; ties go to the earlier row.
    pub fn neighbours(&self, row: &[u8]) -> Vec<usize> {
        let mut dist: Vec<(usize, usize)> = self
            .reference
            .iter_rows()
            .enumerate()
            .map(|(i, r)| (r.iter().zip(row).filter(|(a, b)| a != b).count(), i))
            .collect();
        dist.sort_unstable();
        dist[..self.k].iter().map(|&(_, i)| i).collect()
    }

    pub fn feature_scores(&self, cycle: &CycleSeries) -> Result<Vec<f64>> {
        let d = self.reference.cols();
        if cycle.dim() != d {
            return Err(RcaError::Dimension {
                expected: d,
                actual: cycle.dim(),
            });
        }
        let mut out = vec![0.0; d];
        for row in cycle.matrix.iter_rows() {
            let nb = self.neighbours(row);
            for f in 0..d {
                let mean = nb.iter().map(|&i| self.reference.get(i, f) as f64).sum::<f64>() / self.k as f64;
                out[f] += (row[f] as f64 - mean).abs();
            }
        }
        if !cycle.is_empty() {
            out.iter_mut().for_each(|o| *o /= cycle.len() as f64);
        }
        Ok(out)
    }

    pub fn root_causes(&self, cycle: &CycleSeries, policy: &SelectionPolicy) -> Result<Vec<usize>> {
        Ok(select_top_fraction(&self.feature_scores(cycle)?, baseline_fraction(policy)))
    }
}
