//! Flat (memoryless) MIMO channels with vector outputs.

use super::Constellation;
use crate::error::Error;
use crate::numkit::{gaussian_logpdf_scalar, poisson_logpmf, Mat, RngStream};
use crate::Result;

/// Noise law of a flat MIMO channel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MimoKind {
    /// y = H s + w, w ~ N(0, σ_w² I).
    Gaussian,
    /// y_j ~ Poisson((1/√σ_w²)(H s)_j + 1).
    Poisson,
}

/// A fully specified flat MIMO channel with known N×K matrix H.
#[derive(Debug, Clone)]
pub struct MimoChannelSpec {
    pub kind: MimoKind,
    pub h: Mat,
    /// Noise variance σ_w²; the SNR is defined as 1/σ_w².
    pub noise_var: f64,
    pub constellation: Constellation,
}

impl MimoChannelSpec {
    pub fn new(kind: MimoKind, h: Mat, noise_var: f64, constellation: Constellation) -> Result<Self> {
        if !(noise_var > 0.0) {
            return Err(Error::Domain(format!(
                "mimo channel: σ_w² = {noise_var} must be > 0"
            )));
        }
        Ok(MimoChannelSpec {
            kind,
            h,
            noise_var,
            constellation,
        })
    }

    /// Number of receive antennas N.
    pub fn n_rx(&self) -> usize {
        self.h.rows()
    }

    /// Number of users K.
    pub fn n_users(&self) -> usize {
        self.h.cols()
    }

    fn symbol_values(&self, s: &[usize]) -> Vec<f64> {
        s.iter().map(|&i| self.constellation.point(i)).collect()
    }

    /// Expected channel output: H s for the Gaussian law, the Poisson
    /// rate vector otherwise.
    pub fn clean(&self, s: &[usize]) -> Vec<f64> {
        let hs = self.h.matvec(&self.symbol_values(s));
        match self.kind {
            MimoKind::Gaussian => hs,
            MimoKind::Poisson => {
                let scale = 1.0 / self.noise_var.sqrt();
                hs.iter().map(|v| scale * v + 1.0).collect()
            }
        }
    }

    /// Sample one channel output vector.
    pub fn sample(&self, s: &[usize], rng: &mut RngStream) -> Result<Vec<f64>> {
        if s.len() != self.n_users() {
            return Err(Error::Dim(format!(
                "mimo sample: {} symbols for {} users",
                s.len(),
                self.n_users()
            )));
        }
        let hs = self.h.matvec(&self.symbol_values(s));
        match self.kind {
            MimoKind::Gaussian => {
                let sd = self.noise_var.sqrt();
                Ok(hs.iter().map(|v| v + sd * rng.gaussian()).collect())
            }
            MimoKind::Poisson => {
                let scale = 1.0 / self.noise_var.sqrt();
                let mut out = Vec::with_capacity(hs.len());
                for v in &hs {
                    let rate = scale * v + 1.0;
                    if rate <= 0.0 {
                        return Err(Error::Domain(format!(
                            "poisson rate {rate} ≤ 0; check constellation and H"
                        )));
                    }
                    out.push(rng.poisson(rate)? as f64);
                }
                Ok(out)
            }
        }
    }

    /// Exact log p(y | s). Out-of-support pairs get −∞ so exhaustive
    /// searches treat them as impossible.
    pub fn loglik(&self, y: &[f64], s: &[usize]) -> f64 {
        let hs = self.h.matvec(&self.symbol_values(s));
        match self.kind {
            MimoKind::Gaussian => y
                .iter()
                .zip(&hs)
                .map(|(yi, mi)| gaussian_logpdf_scalar(*yi, *mi, self.noise_var))
                .sum(),
            MimoKind::Poisson => {
                let scale = 1.0 / self.noise_var.sqrt();
                let mut total = 0.0;
                for (yi, vi) in y.iter().zip(&hs) {
                    let rate = scale * vi + 1.0;
                    if rate <= 0.0 || *yi < 0.0 || yi.fract() != 0.0 {
                        return f64::NEG_INFINITY;
                    }
                    total += poisson_logpmf(*yi as u64, rate).unwrap_or(f64::NEG_INFINITY);
                }
                total
            }
        }
    }
}

/// Spatial exponential decay matrix: (H)_{i,k} = e^{−|i−k|}.
pub fn build_spatial_h(n: usize, k: usize) -> Mat {
    Mat::from_fn(n, k, |i, j| (-((i as f64) - (j as f64)).abs()).exp())
}

/// Additive Gaussian noise per entry with variance σ_e² · |(H)_{i,k}|;
/// zero entries stay exactly zero. σ_e² = 0 is the identity, bit-exact.
pub fn perturb_h(h: &Mat, err_var: f64, rng: &mut RngStream) -> Mat {
    if err_var == 0.0 {
        return h.clone();
    }
    Mat::from_fn(h.rows(), h.cols(), |i, j| {
        let v = h.get(i, j);
        if v == 0.0 {
            0.0
        } else {
            v + (err_var * v.abs()).sqrt() * rng.gaussian()
        }
    })
}
