//! Streaming root-cause analysis for cyclic binary PLC/sensor time series.
//!
//! Cycles with a high productivity loss are explained by three independent
//! evidence lanes (autoencoder reconstruction error, pairwise dependency
//! analysis, structural PCA intersected with boosted-tree importance) merged
//! by an integer vote.

pub mod baselines;
pub mod config;
pub mod cycle;
pub mod dependency;
pub mod ensemble;
pub mod error;
pub mod evalreport;
pub mod nn;
pub mod seed;
pub mod select;
pub mod sim;
pub mod structural;

pub use error::{RcaError, Result};
