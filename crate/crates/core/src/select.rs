//! Top-fraction feature selection shared by every evidence lane.

use serde::{Deserialize, Serialize};

use crate::error::{RcaError, Result};

/// Fractions of the feature count each lane keeps.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SelectionPolicy {
    pub frac_i1: f64,
    pub frac_i2: f64,
    pub frac_pca: f64,
    pub frac_xgb: f64,
}

impl Default for SelectionPolicy {
    fn default() -> Self {
        Self {
            frac_i1: 0.0375,
            frac_i2: 0.065,
            frac_pca: 0.075,
            frac_xgb: 0.10,
        }
    }
}

impl SelectionPolicy {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("frac_i1", self.frac_i1),
            ("frac_i2", self.frac_i2),
            ("frac_pca", self.frac_pca),
            ("frac_xgb", self.frac_xgb),
        ] {
            if !(v > 0.0 && v <= 1.0) {
                return Err(RcaError::Config(format!("{name} must lie in (0, 1], got {v}")));
            }
        }
        Ok(())
    }
}

/// `max(1, round(frac × d))`, rounding half away from zero, capped at `d`.
pub fn top_count(d: usize, frac: f64) -> usize {
    ((frac * d as f64).round() as usize).max(1).min(d)
}

/// All indices ordered by descending score; ties go to the lower index and NaN ranks last.
pub fn rank_descending(scores: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| {
        let (x, y) = (scores[a], scores[b]);
        match (x.is_nan(), y.is_nan()) {
            (true, true) => a.cmp(&b),
            (true, false) => std::cmp::Ordering::Greater,
            (false, true) => std::cmp::Ordering::Less,
            _ => y.partial_cmp(&x).unwrap().then(a.cmp(&b)),
        }
    });
    idx
}

/// The `top_count(d, frac)` highest-scoring indices, best first.
pub fn select_top_fraction(scores: &[f64], frac: f64) -> Vec<usize> {
    if scores.is_empty() {
        return Vec::new();
    }
    let mut ranked = rank_descending(scores);
    ranked.truncate(top_count(scores.len(), frac));
    ranked
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn counts_follow_rounding_rule() {
        assert_eq!(top_count(26, 0.0375), 1);
        assert_eq!(top_count(83, 0.10), 8);
        assert_eq!(top_count(26, 0.065), 2);
        assert_eq!(top_count(26, 0.075), 2);
        assert_eq!(top_count(26, 0.10), 3);
        assert_eq!(top_count(3, 0.01), 1);
        // 0.5 rounds away from zero
        assert_eq!(top_count(10, 0.25), 3);
    }

    #[test]
    fn ties_prefer_lower_index() {
        assert_eq!(select_top_fraction(&[3.0, 3.0, 1.0], 0.67), vec![0, 1]);
        assert_eq!(select_top_fraction(&[0.0; 4], 0.5), vec![0, 1]);
    }

    #[test]
    fn nan_ranks_last() {
        assert_eq!(rank_descending(&[f64::NAN, 1.0, 2.0]), vec![2, 1, 0]);
    }

    proptest! {
        #[test]
        fn size_subset_and_scale_invariance(
            scores in prop::collection::vec(-100.0f64..100.0, 1..60),
            frac in 0.001f64..=1.0,
            scale in 0.001f64..1000.0,
        ) {
            let d = scores.len();
            let sel = select_top_fraction(&scores, frac);
            prop_assert_eq!(sel.len(), ((frac * d as f64).round() as usize).max(1).min(d));
            let mut dedup = sel.clone();
            dedup.sort_unstable();
            dedup.dedup();
            prop_assert_eq!(dedup.len(), sel.len());
            prop_assert!(sel.iter().all(|&i| i < d));
            for w in sel.windows(2) {
                prop_assert!(scores[w[0]] >= scores[w[1]]);
            }
            let scaled: Vec<f64> = scores.iter().map(|s| s * scale).collect();
            prop_assert_eq!(select_top_fraction(&scaled, frac), sel);
        }
    }
}
