//! Pairwise dependency lane: Pearson correlation and mutual information over
//! the features of one cycle, reduced to per-feature significance.

use serde::Serialize;

use crate::cycle::{BinaryMatrix, CycleSeries};
use crate::error::{RcaError, Result};
use crate::select::{select_top_fraction, SelectionPolicy};

/// Square symmetric matrix stored row-major.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SquareMatrix {
    pub n: usize,
    pub data: Vec<f64>,
}

impl SquareMatrix {
    pub fn zeros(n: usize) -> Self {
        Self {
            n,
            data: vec![0.0; n * n],
        }
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    fn set_sym(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.n + j] = v;
        self.data[j * self.n + i] = v;
    }

    /// Row sums excluding the diagonal, with `f` applied to each entry.
    pub fn off_diagonal_row_sums(&self, f: impl Fn(f64) -> f64) -> Vec<f64> {
        (0..self.n)
            .map(|i| (0..self.n).filter(|&j| j != i).map(|j| f(self.get(i, j))).sum())
            .collect()
    }

    pub fn to_csv(&self, names: &[String]) -> String {
        let mut out = String::from("feature");
        for n in names {
            out.push(',');
            out.push_str(n);
        }
        out.push('\n');
        for i in 0..self.n {
            out.push_str(&names[i]);
            for j in 0..self.n {
                out.push_str(&format!(",{}", self.get(i, j)));
            }
            out.push('\n');
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DependencyMatrices {
    pub cycle_id: u32,
    pub pcc: SquareMatrix,
    pub mi: SquareMatrix,
}

/// Column counts: ones per column and ones per column pair.
struct PairCounts {
    ones: Vec<usize>,
    both: Vec<usize>,
}

impl PairCounts {
    fn new(m: &BinaryMatrix) -> Self {
        let d = m.cols();
        let mut ones = vec![0; d];
        let mut both = vec![0; d * d];
        for row in m.iter_rows() {
            let on: Vec<usize> = (0..d).filter(|&j| row[j] == 1).collect();
            for (k, &i) in on.iter().enumerate() {
                ones[i] += 1;
                for &j in &on[k..] {
                    both[i * d + j] += 1;
                }
            }
        }
        Self { ones, both }
    }

    fn both(&self, i: usize, j: usize) -> usize {
        let d = self.ones.len();
        let (a, b) = if i <= j { (i, j) } else { (j, i) };
        self.both[a * d + b]
    }
}

/// Sample Pearson correlation for every feature pair. Pairs involving a
/// zero-variance column are 0, including that column's diagonal.
pub fn pearson_matrix(cycle: &CycleSeries) -> Result<SquareMatrix> {
    pearson_of(&cycle.matrix)
}

pub fn pearson_of(m: &BinaryMatrix) -> Result<SquareMatrix> {
    let n = m.rows();
    if n < 2 {
        return Err(RcaError::Degenerate(format!("correlation needs at least 2 rows, got {n}")));
    }
    let c = PairCounts::new(m);
    let d = m.cols();
    let nf = n as f64;
    // for 0/1 columns, n·cov = n11 − n1·n2/n and n·var = n1 − n1²/n
    let var: Vec<f64> = c.ones.iter().map(|&k| k as f64 - (k * k) as f64 / nf).collect();
    let mut out = SquareMatrix::zeros(d);
    for i in 0..d {
        if c.ones[i] == 0 || c.ones[i] == n {
            continue;
        }
        for j in i..d {
            if c.ones[j] == 0 || c.ones[j] == n {
                continue;
            }
            let cov = c.both(i, j) as f64 - (c.ones[i] * c.ones[j]) as f64 / nf;
            let r = (cov / (var[i] * var[j]).sqrt()).clamp(-1.0, 1.0);
            out.set_sym(i, j, if i == j { 1.0 } else { r });
        }
    }
    Ok(out)
}

/// Plug-in mutual information in bits for every feature pair; the diagonal is
/// the marginal entropy.
pub fn mutual_information_matrix(cycle: &CycleSeries) -> SquareMatrix {
    mutual_information_of(&cycle.matrix)
}

pub fn mutual_information_of(m: &BinaryMatrix) -> SquareMatrix {
    let d = m.cols();
    let mut out = SquareMatrix::zeros(d);
    let n = m.rows();
    if n == 0 {
        return out;
    }
    let c = PairCounts::new(m);
    for i in 0..d {
        for j in i..d {
            let n11 = c.both(i, j);
            let n10 = c.ones[i] - n11;
            let n01 = c.ones[j] - n11;
            let n00 = n - n11 - n10 - n01;
            let joint = [[n00, n01], [n10, n11]];
            let pi = [n - c.ones[i], c.ones[i]];
            let pj = [n - c.ones[j], c.ones[j]];
            let mut mi = 0.0;
            for a in 0..2 {
                for b in 0..2 {
                    let k = joint[a][b];
                    if k == 0 {
                        continue;
                    }
                    // p(a,b) log2(p(a,b) / (p(a) p(b))) = k/n · log2(k·n / (n_a·n_b))
                    mi += k as f64 / n as f64 * ((k * n) as f64 / (pi[a] * pj[b]) as f64).log2();
                }
            }
            out.set_sym(i, j, mi.max(0.0));
        }
    }
    out
}

pub fn dependency_matrices(cycle: &CycleSeries) -> Result<DependencyMatrices> {
    Ok(DependencyMatrices {
        cycle_id: cycle.cycle_id,
        pcc: pearson_matrix(cycle)?,
        mi: mutual_information_matrix(cycle),
    })
}

/// Both halves of the dependency lane before their union.
#[derive(Debug, Clone, PartialEq)]
pub struct DependencyEvidence {
    pub pcc_significance: Vec<f64>,
    pub mi_significance: Vec<f64>,
    pub pcc_top: Vec<usize>,
    pub mi_top: Vec<usize>,
    /// `pcc_top ∪ mi_top`, ascending.
    pub i2: Vec<usize>,
}

pub fn dependency_evidence(cycle: &CycleSeries, policy: &SelectionPolicy) -> Result<DependencyEvidence> {
    let m = dependency_matrices(cycle)?;
    let pcc_significance = m.pcc.off_diagonal_row_sums(f64::abs);
    let mi_significance = m.mi.off_diagonal_row_sums(|v| v);
    let pcc_top = select_top_fraction(&pcc_significance, policy.frac_i2);
    let mi_top = select_top_fraction(&mi_significance, policy.frac_i2);
    let mut i2: Vec<usize> = pcc_top.iter().chain(&mi_top).copied().collect();
    i2.sort_unstable();
    i2.dedup();
    Ok(DependencyEvidence {
        pcc_significance,
        mi_significance,
        pcc_top,
        mi_top,
        i2,
    })
}
