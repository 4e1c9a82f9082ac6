//! Generative models and exact likelihoods for the simulated channels,
//! CSI perturbation, and labeled-dataset generation.
//!
//! Two channel families are covered: finite-memory (ISI) channels with
//! scalar outputs, in AWGN and Poisson variants, and flat MIMO channels
//! with vector outputs, in Gaussian and Poisson variants. Symbols are
//! represented as indices into a [`Constellation`] throughout; the
//! channel maps indices to real symbol values.
//!
//! Block-edge convention: symbols at time indices ≤ 0 are fixed to the
//! first constellation point (−1 for BPSK, 0 for OOK). Simulators,
//! state labels, and detectors all share this padding.

mod dataset;
mod flat;
mod fm;

pub use dataset::{
    gen_fm_dataset, gen_mimo_dataset, read_tap_file, symbol_frequencies, FmDataset, MimoDataset,
};
pub use flat::{build_spatial_h, perturb_h, MimoChannelSpec, MimoKind};
pub use fm::{exp_decay_taps, perturb_taps, FmChannelSpec, FmKind, TapProfile};

use crate::error::Error;
use crate::Result;

/// Index of the padding symbol used for pre-history (indices ≤ 0).
pub const PAD_SYMBOL: usize = 0;

/// Ordered finite symbol alphabet with real-valued points.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Constellation {
    points: Vec<f64>,
}

impl Constellation {
    /// At least two distinct finite points.
    pub fn new(points: Vec<f64>) -> Result<Self> {
        if points.len() < 2 {
            return Err(Error::Domain("constellation needs at least 2 points".into()));
        }
        if points.iter().any(|p| !p.is_finite()) {
            return Err(Error::Domain("constellation points must be finite".into()));
        }
        for i in 0..points.len() {
            for j in 0..i {
                if points[i] == points[j] {
                    return Err(Error::Domain("constellation points must be distinct".into()));
                }
            }
        }
        Ok(Constellation { points })
    }

    /// {−1, +1}.
    pub fn bpsk() -> Self {
        Constellation {
            points: vec![-1.0, 1.0],
        }
    }

    /// {0, 1}.
    pub fn ook() -> Self {
        Constellation {
            points: vec![0.0, 1.0],
        }
    }

    /// Constellation size M.
    pub fn size(&self) -> usize {
        self.points.len()
    }

    /// Symbol value at index `i`.
    pub fn point(&self, i: usize) -> f64 {
        self.points[i]
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    /// Draw a uniform symbol index.
    pub fn draw(&self, rng: &mut crate::numkit::RngStream) -> usize {
        rng.index(self.points.len())
    }
}
