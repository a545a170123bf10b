//! Small dense networks and the incremental autoencoder built on them.

mod adam;
mod dense;
mod iae;

pub use adam::AdamState;
pub use dense::{Activation, DenseNet, FisherInfo, ForwardCache, LayerSpec, LossParts};
pub use iae::{
    compute_fisher, replay_sample_count, ErrorReduction, FeatureAnomalyScores, Iae, IaeConfig, IaeEvidence,
    ReplayBuffer, TrainReport,
};
