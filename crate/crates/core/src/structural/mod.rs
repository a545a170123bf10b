//! Structural lane: per-cycle PCA prominence intersected with per-batch
//! boosted-tree importance.

mod gbdt;
mod pca;

pub use gbdt::{logloss, GbdtModel, GbdtParams, GbdtStatus, Node};
pub use pca::{covariance, jacobi_eigen, pca_cycle, pca_of, PcaComponents, PcaConfig, PcaResult, SymmetricEigen};

use crate::select::{select_top_fraction, SelectionPolicy};

/// Both halves of the structural lane before their intersection.
#[derive(Debug, Clone, PartialEq)]
pub struct StructuralEvidence {
    pub pca_top: Vec<usize>,
    pub gbdt_top: Vec<usize>,
    /// `pca_top ∩ gbdt_top`, ascending.
    pub i3: Vec<usize>,
}

pub fn structural_evidence(pca: &PcaResult, model: &GbdtModel, policy: &SelectionPolicy) -> StructuralEvidence {
    let pca_top = select_top_fraction(&pca.feature_scores, policy.frac_pca);
    let gbdt_top = select_top_fraction(&model.gain_importance, policy.frac_xgb);
    let mut i3: Vec<usize> = pca_top.iter().filter(|f| gbdt_top.contains(f)).copied().collect();
    i3.sort_unstable();
    StructuralEvidence { pca_top, gbdt_top, i3 }
}
