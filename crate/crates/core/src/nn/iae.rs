//! Incremental autoencoder.
//!
//! Trains batch by batch on the cycle stream. Forgetting is held back by an
//! EWC penalty anchored at a periodically refreshed diagonal Fisher estimate,
//! and by a FIFO replay buffer of past batches that is rehearsed every
//! `replay_period` batches.

use std::collections::VecDeque;
use std::io::{Read, Write};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::adam::AdamState;
use super::dense::{Activation, DenseNet, FisherInfo, LossParts};
use crate::cycle::{BinaryMatrix, CycleBatch, CycleSeries};
use crate::error::{RcaError, Result};
use crate::select::{rank_descending, top_count, SelectionPolicy};

const CHECKPOINT_FORMAT: &str = "plcrca-iae";
const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ErrorReduction {
    Mean,
    Max,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IaeConfig {
    /// Encoder widths after the input; the decoder mirrors them.
    pub hidden: Vec<usize>,
    pub dropout: f64,
    pub l1: f64,
    pub l2: f64,
    pub learning_rate: f64,
    /// Rows per optimizer step.
    pub minibatch_rows: usize,
    pub epochs: usize,
    pub replay_epochs: usize,
    pub replay_period: usize,
    pub replay_capacity: usize,
    pub replay_enabled: bool,
    pub ewc_lambda: f64,
    pub fisher_period_cycles: usize,
    pub error_reduction: ErrorReduction,
}

impl Default for IaeConfig {
    fn default() -> Self {
        Self {
            hidden: vec![32, 16, 8],
            dropout: 0.2,
            l1: 0.01,
            l2: 0.01,
            learning_rate: 1e-3,
            minibatch_rows: 16,
            epochs: 2,
            replay_epochs: 5,
            replay_period: 10,
            replay_capacity: 100,
            replay_enabled: true,
            ewc_lambda: 0.4,
            fisher_period_cycles: 50,
            error_reduction: ErrorReduction::Mean,
        }
    }
}

impl IaeConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(RcaError::Config(format!("iae: {m}")));
        if self.hidden.is_empty() || self.hidden.contains(&0) {
            return bad("hidden widths must be non-empty and positive");
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad("dropout must lie in [0, 1)");
        }
        if self.l1 < 0.0 || self.l2 < 0.0 || self.ewc_lambda < 0.0 || self.learning_rate < 0.0 {
            return bad("coefficients must be nonnegative");
        }
        if self.minibatch_rows == 0 || self.replay_period == 0 || self.replay_capacity == 0 {
            return bad("minibatch_rows, replay_period and replay_capacity must be positive");
        }
        if self.fisher_period_cycles == 0 {
            return bad("fisher_period_cycles must be positive");
        }
        Ok(())
    }

    /// `d → hidden… → reversed hidden… → d`.
    pub fn widths(&self, d: usize) -> Vec<usize> {
        let mut w = vec![d];
        w.extend(&self.hidden);
        w.extend(self.hidden.iter().rev().skip(1));
        w.push(d);
        w
    }
}

/// FIFO store of past batches (stacked rows).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplayBuffer {
    pub capacity: usize,
    pub batches: VecDeque<BinaryMatrix>,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Self {
        Self {
            capacity,
            batches: VecDeque::with_capacity(capacity),
        }
    }

    pub fn push(&mut self, rows: BinaryMatrix) {
        if self.batches.len() == self.capacity {
            self.batches.pop_front();
        }
        self.batches.push_back(rows);
    }

    pub fn len(&self) -> usize {
        self.batches.len()
    }

    pub fn is_empty(&self) -> bool {
        self.batches.is_empty()
    }
}

/// Number of batches rehearsed per replay iteration: `⌊len/8⌋ + 3`, capped at `len`.
pub fn replay_sample_count(len: usize) -> usize {
    (len / 8 + 3).min(len)
}

/// Per-feature reconstruction error of one cycle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureAnomalyScores {
    pub cycle_id: u32,
    pub scores: Vec<f64>,
}

/// Evidence produced for one high-loss cycle.
#[derive(Debug, Clone, PartialEq)]
pub struct IaeEvidence {
    pub scores: FeatureAnomalyScores,
    pub i1a: Vec<usize>,
    pub i1b: Vec<usize>,
}

/// What a call to [`Iae::train_incremental`] did.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainReport {
    pub last_loss: LossParts,
    pub replayed_batches: usize,
    pub fisher_refreshed: bool,
}

/// Diagonal empirical Fisher: mean over rows of squared per-row reconstruction-loss
/// gradients, anchored at the current parameters.
pub fn compute_fisher(net: &DenseNet, rows: &[f64], n: usize, lambda: f64) -> Result<FisherInfo> {
    if n == 0 {
        return Err(RcaError::Degenerate("Fisher estimate needs at least one row".into()));
    }
    let d = net.input_dim();
    let mut acc = vec![0.0; net.param_count()];
    for r in 0..n {
        let x = &rows[r * d..(r + 1) * d];
        let (y, cache) = net.forward::<ChaCha8Rng>(x, 1, false, None)?;
        let g = net.backward_data(&cache, &y, x);
        for (a, gi) in acc.iter_mut().zip(&g) {
            *a += gi * gi;
        }
    }
    for a in &mut acc {
        *a /= n as f64;
    }
    Ok(FisherInfo {
        lambda,
        fisher: acc,
        anchor: net.params.clone(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct RngState {
    seed: Vec<u8>,
    stream: u64,
    word_pos: String,
}

impl RngState {
    fn capture(rng: &ChaCha8Rng) -> Self {
        Self {
            seed: rng.get_seed().to_vec(),
            stream: rng.get_stream(),
            word_pos: rng.get_word_pos().to_string(),
        }
    }

    fn restore(&self) -> Result<ChaCha8Rng> {
        let seed: [u8; 32] = self
            .seed
            .as_slice()
            .try_into()
            .map_err(|_| RcaError::Checkpoint("rng seed must be 32 bytes".into()))?;
        let pos: u128 = self
            .word_pos
            .parse()
            .map_err(|_| RcaError::Checkpoint("bad rng word position".into()))?;
        let mut rng = ChaCha8Rng::from_seed(seed);
        rng.set_stream(self.stream);
        rng.set_word_pos(pos);
        Ok(rng)
    }
}

#[derive(Serialize, Deserialize)]
struct Checkpoint {
    format: String,
    version: u32,
    config: IaeConfig,
    net: DenseNet,
    adam: AdamState,
    fisher: Option<FisherInfo>,
    replay: ReplayBuffer,
    rng: RngState,
    batches_seen: u64,
    cycles_seen: u64,
    fisher_refreshes: u64,
}

/// The incremental autoencoder and all of its training state.
#[derive(Debug, Clone)]
pub struct Iae {
    pub config: IaeConfig,
    pub net: DenseNet,
    pub adam: AdamState,
    pub fisher: Option<FisherInfo>,
    pub replay: ReplayBuffer,
    rng: ChaCha8Rng,
    pub batches_seen: u64,
    pub cycles_seen: u64,
    fisher_refreshes: u64,
}

impl Iae {
    pub fn new(d: usize, config: IaeConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let net = DenseNet::new(
            &config.widths(d),
            Activation::Relu,
            Activation::Sigmoid,
            config.dropout,
            &mut rng,
        )
        .with_regularization(config.l1, config.l2);
        Ok(Self {
            adam: AdamState::new(net.param_count(), config.learning_rate),
            replay: ReplayBuffer::new(config.replay_capacity),
            net,
            fisher: None,
            rng,
            batches_seen: 0,
            cycles_seen: 0,
            fisher_refreshes: 0,
            config,
        })
    }

    pub fn dim(&self) -> usize {
        self.net.input_dim()
    }

    /// One ADAM step on a minibatch (autoencoder target = input), dropout active.
    pub fn step(&mut self, rows: &[f64], n: usize) -> Result<LossParts> {
        let (y, cache) = self.net.forward(rows, n, true, Some(&mut self.rng))?;
        let parts = self.net.loss(&y, rows, n, self.fisher.as_ref());
        if !parts.total().is_finite() {
            return Err(RcaError::NonFinite(format!(
                "loss {:?} at optimizer step {}",
                parts, self.adam.step
            )));
        }
        let grad = self.net.backward(&cache, &y, rows, self.fisher.as_ref());
        self.adam.update(&mut self.net.params, &grad);
        Ok(parts)
    }

    /// `epochs` shuffled passes over `rows` in minibatches.
    pub fn train_rows(&mut self, rows: &[f64], n: usize, epochs: usize) -> Result<LossParts> {
        let d = self.dim();
        let mut last = LossParts::default();
        let mut order: Vec<usize> = (0..n).collect();
        let mut mb = Vec::with_capacity(self.config.minibatch_rows * d);
        for _ in 0..epochs {
            order.shuffle(&mut self.rng);
            for chunk in order.chunks(self.config.minibatch_rows) {
                mb.clear();
                for &r in chunk {
                    mb.extend_from_slice(&rows[r * d..(r + 1) * d]);
                }
                last = self.step(&mb, chunk.len())?;
            }
        }
        Ok(last)
    }

    /// Train on one batch, store it for replay, rehearse on schedule and refresh the Fisher anchor.
    pub fn train_incremental(&mut self, batch: &CycleBatch) -> Result<TrainReport> {
        if batch.dim() != self.dim() {
            return Err(RcaError::Dimension {
                expected: self.dim(),
                actual: batch.dim(),
            });
        }
        let rows = batch.stacked.to_f64();
        let n = batch.stacked.rows();
        let mut report = TrainReport {
            last_loss: self.train_rows(&rows, n, self.config.epochs)?,
            ..TrainReport::default()
        };
        self.replay.push(batch.stacked.clone());
        self.batches_seen += 1;
        self.cycles_seen += batch.len() as u64;

        if self.config.replay_enabled && self.batches_seen % self.config.replay_period as u64 == 0 {
            let count = replay_sample_count(self.replay.len());
            let picked = rand::seq::index::sample(&mut self.rng, self.replay.len(), count).into_vec();
            let mut replay_rows = Vec::new();
            let mut replay_n = 0;
            for i in picked {
                let b = &self.replay.batches[i];
                replay_rows.extend(b.to_f64());
                replay_n += b.rows();
            }
            self.train_rows(&replay_rows, replay_n, self.config.replay_epochs)?;
            report.replayed_batches = count;
        }

        let due = self.cycles_seen / self.config.fisher_period_cycles as u64;
        if due > self.fisher_refreshes {
            self.fisher = Some(compute_fisher(&self.net, &rows, n, self.config.ewc_lambda)?);
            self.fisher_refreshes = due;
            report.fisher_refreshed = true;
        }
        Ok(report)
    }

    /// Per-feature squared reconstruction error of a cycle, reduced over its rows.
    pub fn feature_errors(&self, cycle: &CycleSeries) -> Result<FeatureAnomalyScores> {
        let d = self.dim();
        let n = cycle.len();
        let x = cycle.matrix.to_f64();
        let y = self.net.predict(&x, n)?;
        let mut scores = vec![0.0; d];
        for r in 0..n {
            for f in 0..d {
                let e = (x[r * d + f] - y[r * d + f]).powi(2);
                match self.config.error_reduction {
                    ErrorReduction::Mean => scores[f] += e,
                    ErrorReduction::Max => scores[f] = f64::max(scores[f], e),
                }
            }
        }
        if self.config.error_reduction == ErrorReduction::Mean && n > 0 {
            for s in &mut scores {
                *s /= n as f64;
            }
        }
        Ok(FeatureAnomalyScores {
            cycle_id: cycle.cycle_id,
            scores,
        })
    }

    /// Top-`t` features (`I_1a`) and the next `t` (`I_1b`) by reconstruction error.
    pub fn score_cycle(&self, cycle: &CycleSeries, policy: &SelectionPolicy) -> Result<IaeEvidence> {
        let scores = self.feature_errors(cycle)?;
        let d = scores.scores.len();
        let t = top_count(d, policy.frac_i1);
        let ranked = rank_descending(&scores.scores);
        let i1a = ranked[..t.min(d)].to_vec();
        let i1b = ranked[t.min(d)..(2 * t).min(d)].to_vec();
        Ok(IaeEvidence { scores, i1a, i1b })
    }

    /// Mean per-row reconstruction error (the loss's first term) in inference mode.
    pub fn reconstruction_error(&self, rows: &[f64], n: usize) -> Result<f64> {
        let y = self.net.predict(rows, n)?;
        Ok(self.net.loss(&y, rows, n, None).mse)
    }

    pub fn save<W: Write>(&self, sink: W) -> Result<()> {
        let cp = Checkpoint {
            format: CHECKPOINT_FORMAT.into(),
            version: CHECKPOINT_VERSION,
            config: self.config.clone(),
            net: self.net.clone(),
            adam: self.adam.clone(),
            fisher: self.fisher.clone(),
            replay: self.replay.clone(),
            rng: RngState::capture(&self.rng),
            batches_seen: self.batches_seen,
            cycles_seen: self.cycles_seen,
            fisher_refreshes: self.fisher_refreshes,
        };
        serde_json::to_writer(sink, &cp)?;
        Ok(())
    }

    pub fn load<R: Read>(source: R) -> Result<Self> {
        let cp: Checkpoint = serde_json::from_reader(source)?;
        if cp.format != CHECKPOINT_FORMAT || cp.version != CHECKPOINT_VERSION {
            return Err(RcaError::Checkpoint(format!(
                "unsupported checkpoint {} v{}",
                cp.format, cp.version
            )));
        }
        let widths = cp.config.widths(cp.net.input_dim());
        let chained = cp.net.layers.len() + 1 == widths.len()
            && cp.net.layers.iter().enumerate().all(|(i, l)| l.input == widths[i] && l.output == widths[i + 1]);
        let params: usize = cp.net.layers.iter().map(|l| l.input * l.output + l.output).sum();
        if !chained || params != cp.net.params.len() || cp.adam.m.len() != params {
            return Err(RcaError::Checkpoint("layer shapes do not match parameters".into()));
        }
        Ok(Self {
            rng: cp.rng.restore()?,
            config: cp.config,
            net: cp.net,
            adam: cp.adam,
            fisher: cp.fisher,
            replay: cp.replay,
            batches_seen: cp.batches_seen,
            cycles_seen: cp.cycles_seen,
            fisher_refreshes: cp.fisher_refreshes,
        })
    }
}
