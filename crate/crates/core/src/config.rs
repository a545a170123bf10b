//! Every tunable of a run in one serializable tree.

use serde::{Deserialize, Serialize};

use crate::baselines::IforestParams;
use crate::cycle::FlagPolicy;
use crate::error::{RcaError, Result};
use crate::nn::IaeConfig;
use crate::select::SelectionPolicy;
use crate::sim::PlantConfig;
use crate::structural::{GbdtParams, PcaConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FlagConfig {
    /// Absent: flag against median + 3·MAD of the observed durations.
    pub ideal_cycle_seconds: Option<f64>,
    pub factor: f64,
}

impl Default for FlagConfig {
    fn default() -> Self {
        Self {
            ideal_cycle_seconds: None,
            factor: 1.1,
        }
    }
}

impl FlagConfig {
    pub fn policy(&self) -> FlagPolicy {
        FlagPolicy::Duration {
            ideal_cycle_seconds: self.ideal_cycle_seconds,
            factor: self.factor,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    /// Master seed; every component derives its own stream from it.
    pub seed: u64,
    /// Cycles per batch.
    pub batch_size: usize,
    pub selection: SelectionPolicy,
    pub flag: FlagConfig,
    pub iae: IaeConfig,
    pub pca: PcaConfig,
    pub gbdt: GbdtParams,
    pub iforest: IforestParams,
    pub knn_k: usize,
    pub plant: PlantConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 7,
            batch_size: 5,
            selection: SelectionPolicy::default(),
            flag: FlagConfig::default(),
            iae: IaeConfig::default(),
            pca: PcaConfig::default(),
            gbdt: GbdtParams::default(),
            iforest: IforestParams::default(),
            knn_k: 10,
            plant: PlantConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(RcaError::Config("batch_size must be positive".into()));
        }
        if self.knn_k == 0 {
            return Err(RcaError::Config("knn_k must be positive".into()));
        }
        if let Some(ideal) = self.flag.ideal_cycle_seconds {
            if !(ideal > 0.0) {
                return Err(RcaError::Config("flag.ideal_cycle_seconds must be positive".into()));
            }
        }
        if !(self.flag.factor > 0.0) {
            return Err(RcaError::Config("flag.factor must be positive".into()));
        }
        self.selection.validate()?;
        self.iae.validate()?;
        self.pca.validate()?;
        self.gbdt.validate()?;
        self.plant.validate()
    }
}
