//! Learned detectors: ViterbiNet and BCJRNet (learned likelihoods inside
//! the classical recursions), DeepSIC (classifier blocks inside the
//! interference-cancellation loop), the unfolded projected-gradient
//! detector, and the sliding bidirectional RNN receiver.

mod deepsic;
mod detnet;
mod likelihood;
mod sbrnn;

pub use deepsic::{
    deepsic_train_e2e, deepsic_train_seq, DeepSicArch, DeepSicConfig, DeepSicNet,
};
pub use detnet::{detnet_build, detnet_train, DetNet, DetNetConfig};
pub use likelihood::{
    bcjrnet_detect, likelihood_train, viterbinet_detect, Head, HeadKind, LikelihoodArch,
    LikelihoodModel,
};
pub use sbrnn::{brnn_block_detect, sbrnn_detect, sbrnn_train, SbrnnConfig, SbrnnModel};
