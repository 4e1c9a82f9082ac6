//! Seeded, splittable random streams.
//!
//! `RngStream` wraps a counter-based ChaCha generator keyed by a
//! `(seed, stream)` pair, so every Monte Carlo trial can own an
//! independent stream whose draws do not depend on scheduling order.
//! Identical `(seed, stream)` pairs yield bit-identical sequences on
//! every platform, given the same draw order.

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

use crate::error::Error;
use crate::Result;

/// splitmix64 finalizer; decorrelates nearby integers.
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Fold a list of integers into a single stream id.
pub fn derive_stream(parts: &[u64]) -> u64 {
    let mut acc = 0x243F_6A88_85A3_08D3u64; // arbitrary fixed offset
    for &p in parts {
        acc = mix64(acc ^ mix64(p));
    }
    acc
}

/// A deterministic random stream keyed by `(seed, stream)`.
#[derive(Debug, Clone)]
pub struct RngStream {
    seed: u64,
    stream: u64,
    rng: ChaCha8Rng,
    spare_gauss: Option<f64>,
}

impl RngStream {
    pub fn new(seed: u64, stream: u64) -> Self {
        let mut key = [0u8; 32];
        let mut w = mix64(seed);
        for chunk in key.chunks_exact_mut(8) {
            w = mix64(w ^ mix64(stream));
            chunk.copy_from_slice(&w.to_le_bytes());
        }
        RngStream {
            seed,
            stream,
            rng: ChaCha8Rng::from_seed(key),
            spare_gauss: None,
        }
    }

    /// Fresh stream derived from this stream's key and `id`; used to hand
    /// independent generators to sub-tasks without advancing `self`.
    pub fn substream(&self, id: u64) -> RngStream {
        RngStream::new(self.seed, derive_stream(&[self.stream, id]))
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream(&self) -> u64 {
        self.stream
    }

    pub fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    /// Uniform in [0, 1), 53-bit resolution.
    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / 9007199254740992.0)
    }

    /// Uniform in (0, 1]; safe as a logarithm argument.
    fn uniform_open(&mut self) -> f64 {
        ((self.next_u64() >> 11) + 1) as f64 * (1.0 / 9007199254740992.0)
    }

    /// Uniform in [lo, hi).
    pub fn uniform_in(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    /// Uniform index in [0, n) via multiply-shift.
    pub fn index(&mut self, n: usize) -> usize {
        debug_assert!(n > 0);
        ((self.next_u64() as u128 * n as u128) >> 64) as usize
    }

    /// Standard normal draw via Box–Muller.
    pub fn gaussian(&mut self) -> f64 {
        if let Some(z) = self.spare_gauss.take() {
            return z;
        }
        let u1 = self.uniform_open();
        let u2 = self.uniform();
        let r = (-2.0 * u1.ln()).sqrt();
        let theta = 2.0 * std::f64::consts::PI * u2;
        self.spare_gauss = Some(r * theta.sin());
        r * theta.cos()
    }

    /// Poisson draw: inversion below λ = 30, PTRS transformed rejection above.
    pub fn poisson(&mut self, lambda: f64) -> Result<u64> {
        if !(lambda > 0.0) || !lambda.is_finite() {
            return Err(Error::Domain(format!("poisson rate {lambda} must be > 0")));
        }
        if lambda < 30.0 {
            Ok(self.poisson_inversion(lambda))
        } else {
            Ok(self.poisson_ptrs(lambda))
        }
    }

    fn poisson_inversion(&mut self, lambda: f64) -> u64 {
        let u = self.uniform();
        let mut x = 0u64;
        let mut p = (-lambda).exp();
        let mut f = p;
        while u > f {
            x += 1;
            p *= lambda / x as f64;
            f += p;
            if x > 10_000 {
                break; // unreachable for λ < 30 barring fp pathologies
            }
        }
        x
    }

    fn poisson_ptrs(&mut self, lambda: f64) -> u64 {
        let log_lambda = lambda.ln();
        let b = 0.931 + 2.53 * lambda.sqrt();
        let a = -0.059 + 0.02483 * b;
        let inv_alpha = 1.1239 + 1.1328 / (b - 3.4);
        let v_r = 0.9277 - 3.6224 / (b - 2.0);
        loop {
            let u = self.uniform() - 0.5;
            let v = self.uniform_open();
            let us = 0.5 - u.abs();
            let k = ((2.0 * a / us + b) * u + lambda + 0.43).floor();
            if us >= 0.07 && v <= v_r {
                return k as u64;
            }
            if k < 0.0 || (us < 0.013 && v > us) {
                continue;
            }
            let lhs = (v * inv_alpha / (a / (us * us) + b)).ln();
            let rhs = k * log_lambda - lambda - libm::lgamma(k + 1.0);
            if lhs <= rhs {
                return k as u64;
            }
        }
    }

    /// In-place Fisher–Yates shuffle.
    pub fn shuffle<T>(&mut self, xs: &mut [T]) {
        for i in (1..xs.len()).rev() {
            let j = self.index(i + 1);
            xs.swap(i, j);
        }
    }
}
