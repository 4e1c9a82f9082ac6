//! Symbol detection over simulated communication channels.
//!
//! This crate implements the classical model-based detectors for
//! finite-memory (ISI) and flat MIMO channels — Viterbi, BCJR,
//! iterative soft interference cancellation, and brute-force MAP/ML
//! oracles — together with their learned counterparts: ViterbiNet,
//! BCJRNet, DeepSIC, an unfolded projected-gradient network, and a
//! sliding bidirectional RNN detector. A small experiment harness
//! drives SNR / CSI-uncertainty sweeps and records symbol error rates.
//!
//! Layout:
//!
//! - [`numkit`]: dense matrices, seeded random streams, probability
//!   primitives, SPD solver
//! - [`channels`]: channel models, CSI perturbation, dataset generation
//! - [`trellis`]: Viterbi / BCJR recursions and exhaustive oracles
//! - [`mimo`]: interference cancellation, MIMO MAP oracle, projected
//!   gradient baseline
//! - [`neural`]: minimal reverse-mode network core (dense, LSTM,
//!   mixture heads, Adam)
//! - [`hybrid`]: the learned detectors built on the above
//! - [`harness`]: experiment specs, SER evaluation, sweeps, checkpoints

pub mod channels;
pub mod error;
pub mod harness;
pub mod hybrid;
pub mod mimo;
pub mod neural;
pub mod numkit;
pub mod trellis;

pub use error::Error;
pub use numkit::{Mat, PmfVec, RngStream};

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;
