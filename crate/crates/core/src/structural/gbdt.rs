//! Second-order gradient boosting on binary features with logistic loss.
//!
//! Every feature is 0/1, so a split needs only the threshold 0.5 and exact
//! greedy search is one pass of gradient/hessian sums per feature.

use serde::{Deserialize, Serialize};

use crate::cycle::BinaryMatrix;
use crate::error::{RcaError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GbdtParams {
    pub num_rounds: usize,
    pub max_depth: usize,
    pub learning_rate: f64,
    pub reg_lambda: f64,
    pub min_child_hessian: f64,
    /// Leaf-weight halvings tried before a round that would raise training logloss is dropped.
    pub max_step_halvings: usize,
}

impl Default for GbdtParams {
    fn default() -> Self {
        Self {
            num_rounds: 50,
            max_depth: 4,
            learning_rate: 0.3,
            reg_lambda: 1.0,
            min_child_hessian: 1.0,
            max_step_halvings: 20,
        }
    }
}

impl GbdtParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0) || self.reg_lambda < 0.0 || self.min_child_hessian < 0.0 {
            return Err(RcaError::Config(
                "gbdt: learning_rate must be positive, reg_lambda and min_child_hessian nonnegative".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Node {
    Split {
        feature: usize,
        gain: f64,
        cover: f64,
        /// Taken when the feature is 0.
        low: Box<Node>,
        high: Box<Node>,
    },
    Leaf {
        weight: f64,
    },
}

impl Node {
    fn predict(&self, row: &[u8]) -> f64 {
        match self {
            Node::Leaf { weight } => *weight,
            Node::Split { feature, low, high, .. } => {
                if row[*feature] == 0 {
                    low.predict(row)
                } else {
                    high.predict(row)
                }
            }
        }
    }

    fn scale(&mut self, f: f64) {
        match self {
            Node::Leaf { weight } => *weight *= f,
            Node::Split { low, high, .. } => {
                low.scale(f);
                high.scale(f);
            }
        }
    }

    fn visit_splits(&self, f: &mut impl FnMut(usize, f64, f64)) {
        if let Node::Split {
            feature,
            gain,
            cover,
            low,
            high,
        } = self
        {
            f(*feature, *gain, *cover);
            low.visit_splits(f);
            high.visit_splits(f);
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GbdtStatus {
    Trained,
    /// All labels were identical; the model is the clamped prior and carries no importance.
    SingleClass,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GbdtModel {
    pub params: GbdtParams,
    pub dim: usize,
    pub base_score: f64,
    pub trees: Vec<Node>,
    pub status: GbdtStatus,
    /// Total split gain per feature, normalized to sum 1 when any split exists.
    pub gain_importance: Vec<f64>,
    /// Hessian mass routed through splits on each feature (debug output).
    pub cover: Vec<f64>,
    pub split_count: Vec<usize>,
}

fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

/// Mean logistic loss of margins against 0/1 labels, computed stably.
pub fn logloss(margins: &[f64], labels: &[u8]) -> f64 {
    if margins.is_empty() {
        return 0.0;
    }
    let s: f64 = margins
        .iter()
        .zip(labels)
        .map(|(&z, &y)| {
            // log(1 + e^z) − y·z
            let softplus = if z > 0.0 { z + (-z).exp().ln_1p() } else { z.exp().ln_1p() };
            softplus - y as f64 * z
        })
        .sum();
    s / margins.len() as f64
}

struct Builder<'a> {
    x: &'a BinaryMatrix,
    grad: &'a [f64],
    hess: &'a [f64],
    params: &'a GbdtParams,
}

impl Builder<'_> {
    fn leaf(&self, g: f64, h: f64) -> Node {
        Node::Leaf {
            weight: -g / (h + self.params.reg_lambda) * self.params.learning_rate,
        }
    }

    fn score(&self, g: f64, h: f64) -> f64 {
        g * g / (h + self.params.reg_lambda)
    }

    fn build(&self, rows: &[usize], depth: usize) -> Node {
        let g: f64 = rows.iter().map(|&r| self.grad[r]).sum();
        let h: f64 = rows.iter().map(|&r| self.hess[r]).sum();
        if depth >= self.params.max_depth || rows.len() < 2 {
            return self.leaf(g, h);
        }
        let d = self.x.cols();
        let mut g_hi = vec![0.0; d];
        let mut h_hi = vec![0.0; d];
        for &r in rows {
            for (f, &v) in self.x.row(r).iter().enumerate() {
                if v == 1 {
                    g_hi[f] += self.grad[r];
                    h_hi[f] += self.hess[r];
                }
            }
        }
        let parent = self.score(g, h);
        let mut best: Option<(usize, f64)> = None;
        for f in 0..d {
            let (gr, hr) = (g_hi[f], h_hi[f]);
            let (gl, hl) = (g - gr, h - hr);
            if hl < self.params.min_child_hessian || hr < self.params.min_child_hessian {
                continue;
            }
            let gain = 0.5 * (self.score(gl, hl) + self.score(gr, hr) - parent);
            // strict comparison keeps the lowest feature index on ties
            if gain > 1e-12 && best.map_or(true, |(_, b)| gain > b) {
                best = Some((f, gain));
            }
        }
        let Some((feature, gain)) = best else {
            return self.leaf(g, h);
        };
        let (high, low): (Vec<usize>, Vec<usize>) = rows.iter().partition(|&&r| self.x.get(r, feature) == 1);
        if low.is_empty() || high.is_empty() {
            return self.leaf(g, h);
        }
        Node::Split {
            feature,
            gain,
            cover: h,
            low: Box::new(self.build(&low, depth + 1)),
            high: Box::new(self.build(&high, depth + 1)),
        }
    }
}

impl GbdtModel {
    /// Fit on rows of `x` with 0/1 `labels`.
    pub fn train(x: &BinaryMatrix, labels: &[u8], params: &GbdtParams) -> Result<Self> {
        params.validate()?;
        let n = x.rows();
        if labels.len() != n {
            return Err(RcaError::Dimension {
                expected: n,
                actual: labels.len(),
            });
        }
        let d = x.cols();
        let positives = labels.iter().filter(|&&y| y == 1).count();
        let p = (positives as f64 / n.max(1) as f64).clamp(1e-6, 1.0 - 1e-6);
        let base_score = (p / (1.0 - p)).ln();
        let mut model = GbdtModel {
            params: params.clone(),
            dim: d,
            base_score,
            trees: Vec::new(),
            status: GbdtStatus::Trained,
            gain_importance: vec![0.0; d],
            cover: vec![0.0; d],
            split_count: vec![0; d],
        };
        if positives == 0 || positives == n {
            model.status = GbdtStatus::SingleClass;
            return Ok(model);
        }
        let mut margin = vec![base_score; n];
        let mut current = logloss(&margin, labels);
        let all: Vec<usize> = (0..n).collect();
        for _ in 0..params.num_rounds {
            let prob: Vec<f64> = margin.iter().map(|&z| sigmoid(z)).collect();
            let grad: Vec<f64> = prob.iter().zip(labels).map(|(p, &y)| p - y as f64).collect();
            let hess: Vec<f64> = prob.iter().map(|p| (p * (1.0 - p)).max(1e-16)).collect();
            let builder = Builder {
                x,
                grad: &grad,
                hess: &hess,
                params,
            };
            let mut tree = builder.build(&all, 0);
            let mut accepted = None;
            for _ in 0..=params.max_step_halvings {
                let trial: Vec<f64> = (0..n).map(|r| margin[r] + tree.predict(x.row(r))).collect();
                let loss = logloss(&trial, labels);
                if loss <= current {
                    accepted = Some((trial, loss));
                    break;
                }
                tree.scale(0.5);
            }
            let Some((trial, loss)) = accepted else {
                break;
            };
            margin = trial;
            current = loss;
            model.trees.push(tree);
        }
        for t in &model.trees {
            t.visit_splits(&mut |f, gain, cover| {
                model.gain_importance[f] += gain;
                model.cover[f] += cover;
                model.split_count[f] += 1;
            });
        }
        let total: f64 = model.gain_importance.iter().sum();
        if total > 0.0 {
            model.gain_importance.iter_mut().for_each(|g| *g /= total);
        }
        Ok(model)
    }

    pub fn margin(&self, row: &[u8]) -> f64 {
        self.base_score + self.trees.iter().map(|t| t.predict(row)).sum::<f64>()
    }

    pub fn predict_proba(&self, row: &[u8]) -> f64 {
        sigmoid(self.margin(row))
    }

    pub fn margins(&self, x: &BinaryMatrix) -> Vec<f64> {
        x.iter_rows().map(|r| self.margin(r)).collect()
    }

    /// Training-set logloss after each prefix of 0..=K trees.
    pub fn loss_curve(&self, x: &BinaryMatrix, labels: &[u8]) -> Vec<f64> {
        let mut margin = vec![self.base_score; x.rows()];
        let mut out = vec![logloss(&margin, labels)];
        for t in &self.trees {
            for (m, r) in margin.iter_mut().zip(x.iter_rows()) {
                *m += t.predict(r);
            }
            out.push(logloss(&margin, labels));
        }
        out
    }
}
