//! Per-cycle PCA over the sample covariance, with a cyclic Jacobi eigensolver.

use serde::{Deserialize, Serialize};

use crate::cycle::{BinaryMatrix, CycleSeries};
use crate::error::{RcaError, Result};

/// How many leading components contribute to feature prominence.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PcaComponents {
    /// Smallest prefix covering `variance_coverage` of the variance (at least one).
    Auto,
    K(usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PcaConfig {
    pub components: PcaComponents,
    pub variance_coverage: f64,
}

impl Default for PcaConfig {
    fn default() -> Self {
        Self {
            components: PcaComponents::Auto,
            variance_coverage: 0.9,
        }
    }
}

impl PcaConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.variance_coverage > 0.0 && self.variance_coverage <= 1.0) {
            return Err(RcaError::Config("pca: variance_coverage must lie in (0, 1]".into()));
        }
        if self.components == PcaComponents::K(0) {
            return Err(RcaError::Config("pca: k must be positive".into()));
        }
        Ok(())
    }
}

/// Eigenpairs of a symmetric matrix, eigenvalues descending.
#[derive(Debug, Clone, PartialEq)]
pub struct SymmetricEigen {
    pub values: Vec<f64>,
    /// Row `j` is the unit eigenvector for `values[j]`.
    pub vectors: Vec<Vec<f64>>,
}

/// Cyclic Jacobi rotations until the off-diagonal mass is negligible.
pub fn jacobi_eigen(a: &[f64], n: usize) -> SymmetricEigen {
    assert_eq!(a.len(), n * n);
    let mut m = a.to_vec();
    let mut v = vec![0.0; n * n];
    for i in 0..n {
        v[i * n + i] = 1.0;
    }
    let scale: f64 = m.iter().map(|x| x * x).sum::<f64>().sqrt();
    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| m[i * n + j] * m[i * n + j])
            .sum::<f64>()
            .sqrt();
        if off <= 1e-15 * scale.max(f64::MIN_POSITIVE) {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = m[p * n + q];
                if apq == 0.0 {
                    continue;
                }
                let app = m[p * n + p];
                let aqq = m[q * n + q];
                let theta = (aqq - app) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let mkp = m[k * n + p];
                    let mkq = m[k * n + q];
                    m[k * n + p] = c * mkp - s * mkq;
                    m[k * n + q] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let mpk = m[p * n + k];
                    let mqk = m[q * n + k];
                    m[p * n + k] = c * mpk - s * mqk;
                    m[q * n + k] = s * mpk + c * mqk;
                }
                for k in 0..n {
                    let vkp = v[k * n + p];
                    let vkq = v[k * n + q];
                    v[k * n + p] = c * vkp - s * vkq;
                    v[k * n + q] = s * vkp + c * vkq;
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    // stable sort keeps equal eigenvalues in column order
    order.sort_by(|&i, &j| m[j * n + j].total_cmp(&m[i * n + i]));
    SymmetricEigen {
        values: order.iter().map(|&i| m[i * n + i]).collect(),
        vectors: order.iter().map(|&i| (0..n).map(|k| v[k * n + i]).collect()).collect(),
    }
}

/// Sample covariance (`n − 1` denominator) of the rows of `m`, row-major `d × d`.
pub fn covariance(m: &BinaryMatrix) -> Result<(Vec<f64>, Vec<f64>)> {
    let n = m.rows();
    if n < 2 {
        return Err(RcaError::Degenerate(format!("PCA needs at least 2 rows, got {n}")));
    }
    let d = m.cols();
    let mut mean = vec![0.0; d];
    for row in m.iter_rows() {
        for (a, &x) in mean.iter_mut().zip(row) {
            *a += x as f64;
        }
    }
    mean.iter_mut().for_each(|a| *a /= n as f64);
    let mut cov = vec![0.0; d * d];
    for row in m.iter_rows() {
        let c: Vec<f64> = row.iter().zip(&mean).map(|(&x, mu)| x as f64 - mu).collect();
        for i in 0..d {
            if c[i] == 0.0 {
                continue;
            }
            for j in i..d {
                cov[i * d + j] += c[i] * c[j];
            }
        }
    }
    for i in 0..d {
        for j in i..d {
            let v = cov[i * d + j] / (n - 1) as f64;
            cov[i * d + j] = v;
            cov[j * d + i] = v;
        }
    }
    Ok((cov, mean))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PcaResult {
    pub cycle_id: u32,
    /// Unit loading vectors, strongest first.
    pub components: Vec<Vec<f64>>,
    pub eigenvalues: Vec<f64>,
    pub explained_variance_ratio: Vec<f64>,
    pub mean: Vec<f64>,
    /// Number of leading components used for `feature_scores`.
    pub kept: usize,
    pub feature_scores: Vec<f64>,
}

impl PcaResult {
    pub fn loadings_csv(&self, names: &[String]) -> String {
        let mut out = String::from("component,explained_variance_ratio");
        for n in names {
            out.push(',');
            out.push_str(n);
        }
        out.push('\n');
        for (j, c) in self.components.iter().enumerate() {
            out.push_str(&format!("{},{}", j + 1, self.explained_variance_ratio[j]));
            for v in c {
                out.push_str(&format!(",{v}"));
            }
            out.push('\n');
        }
        out
    }
}

pub fn pca_cycle(cycle: &CycleSeries, config: &PcaConfig) -> Result<PcaResult> {
    pca_of(cycle.cycle_id, &cycle.matrix, config)
}

pub fn pca_of(cycle_id: u32, m: &BinaryMatrix, config: &PcaConfig) -> Result<PcaResult> {
    let d = m.cols();
    let (cov, mean) = covariance(m)?;
    let eig = jacobi_eigen(&cov, d);
    let trace: f64 = (0..d).map(|i| cov[i * d + i]).sum();
    let evr: Vec<f64> = if trace > 0.0 {
        eig.values.iter().map(|&l| l.max(0.0) / trace).collect()
    } else {
        vec![0.0; d]
    };
    let kept = match config.components {
        PcaComponents::K(k) => k.min(d),
        PcaComponents::Auto if trace <= 0.0 => 1,
        PcaComponents::Auto => {
            let mut acc = 0.0;
            let mut k = 0;
            for &r in &evr {
                k += 1;
                acc += r;
                if acc >= config.variance_coverage - 1e-12 {
                    break;
                }
            }
            k.max(1).min(d)
        }
    };
    let mut feature_scores = vec![0.0; d];
    for j in 0..kept {
        for (s, l) in feature_scores.iter_mut().zip(&eig.vectors[j]) {
            *s += evr[j] * l.abs();
        }
    }
    Ok(PcaResult {
        cycle_id,
        components: eig.vectors,
        eigenvalues: eig.values,
        explained_variance_ratio: evr,
        mean,
        kept,
        feature_scores,
    })
}
