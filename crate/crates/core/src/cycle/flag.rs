use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::CycleSeries;
use crate::error::{RcaError, Result};

/// Minimum number of cycles for the median/MAD fallback.
const MIN_CYCLES_FOR_MEDIAN: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FlagBasis {
    DurationThreshold,
    ExternalLabel,
}

/// Per-cycle productivity-loss flag `P`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProductivityFlag {
    pub cycle_id: u32,
    pub flag: u8,
    pub basis: FlagBasis,
}

impl ProductivityFlag {
    pub fn is_high_loss(&self) -> bool {
        self.flag == 1
    }
}

/// One entry of an external label file: `{"cycle": 3, "flag": 1}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExternalLabel {
    pub cycle: u32,
    pub flag: u8,
}

#[derive(Debug, Clone, PartialEq)]
pub enum FlagPolicy {
    /// Flag cycles that overrun `factor × ideal`; without an ideal time, cycles
    /// above `median + 3·MAD` of the observed durations.
    Duration {
        ideal_cycle_seconds: Option<f64>,
        factor: f64,
    },
    External(Vec<ExternalLabel>),
}

impl FlagPolicy {
    pub fn duration(ideal_cycle_seconds: Option<f64>) -> Self {
        FlagPolicy::Duration {
            ideal_cycle_seconds,
            factor: 1.1,
        }
    }

    /// Threshold for a duration policy, computed from `durations` when no ideal is set.
    pub fn duration_threshold(&self, durations: &[f64]) -> Result<Option<f64>> {
        match self {
            FlagPolicy::External(_) => Ok(None),
            FlagPolicy::Duration {
                ideal_cycle_seconds: Some(ideal),
                factor,
            } => {
                if !(*ideal > 0.0) || !(*factor > 0.0) {
                    return Err(RcaError::Config(format!(
                        "ideal cycle time and factor must be positive (got {ideal}, {factor})"
                    )));
                }
                Ok(Some(factor * ideal))
            }
            FlagPolicy::Duration {
                ideal_cycle_seconds: None,
                ..
            } => {
                if durations.len() < MIN_CYCLES_FOR_MEDIAN {
                    return Err(RcaError::Config(format!(
                        "median/MAD flagging needs at least {MIN_CYCLES_FOR_MEDIAN} cycles, got {}",
                        durations.len()
                    )));
                }
                let med = median(durations);
                let deviations: Vec<f64> = durations.iter().map(|d| (d - med).abs()).collect();
                Ok(Some(med + 3.0 * median(&deviations)))
            }
        }
    }
}

fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Assigns `P` to every cycle under `policy`.
pub fn flag_productivity(cycles: &[CycleSeries], policy: &FlagPolicy) -> Result<Vec<ProductivityFlag>> {
    match policy {
        FlagPolicy::External(labels) => {
            if labels.is_empty() && !cycles.is_empty() {
                return Err(RcaError::Config("no flag policy and no labels".into()));
            }
            let by_cycle: HashMap<u32, u8> = labels.iter().map(|l| (l.cycle, l.flag)).collect();
            if let Some(bad) = labels.iter().find(|l| l.flag > 1) {
                return Err(RcaError::Config(format!(
                    "label for cycle {} must be 0 or 1, got {}",
                    bad.cycle, bad.flag
                )));
            }
            cycles
                .iter()
                .map(|c| {
                    let flag = by_cycle
                        .get(&c.cycle_id)
                        .copied()
                        .ok_or_else(|| RcaError::Config(format!("no external label for cycle {}", c.cycle_id)))?;
                    Ok(ProductivityFlag {
                        cycle_id: c.cycle_id,
                        flag,
                        basis: FlagBasis::ExternalLabel,
                    })
                })
                .collect()
        }
        FlagPolicy::Duration { .. } => {
            let durations: Vec<f64> = cycles.iter().map(|c| c.duration_seconds).collect();
            let threshold = policy
                .duration_threshold(&durations)?
                .expect("duration policy yields a threshold");
            Ok(cycles
                .iter()
                .map(|c| ProductivityFlag {
                    cycle_id: c.cycle_id,
                    flag: u8::from(c.duration_seconds > threshold),
                    basis: FlagBasis::DurationThreshold,
                })
                .collect())
        }
    }
}
