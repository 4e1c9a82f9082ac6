//! Finite-memory (ISI) channels with scalar outputs.

use super::{Constellation, PAD_SYMBOL};
use crate::error::Error;
use crate::numkit::{gaussian_logpdf_scalar, poisson_logpmf, RngStream};
use crate::Result;

/// Channel impulse response of length L (the channel memory).
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct TapProfile {
    taps: Vec<f64>,
    /// Decay parameter when the profile was synthesized; `None` for
    /// externally supplied taps.
    gamma: Option<f64>,
}

impl TapProfile {
    pub fn new(taps: Vec<f64>) -> Result<Self> {
        if taps.is_empty() {
            return Err(Error::Domain("tap profile must have length ≥ 1".into()));
        }
        if taps.iter().any(|t| !t.is_finite()) {
            return Err(Error::Domain("taps must be finite".into()));
        }
        Ok(TapProfile { taps, gamma: None })
    }

    pub fn taps(&self) -> &[f64] {
        &self.taps
    }

    pub fn memory(&self) -> usize {
        self.taps.len()
    }

    pub fn gamma(&self) -> Option<f64> {
        self.gamma
    }
}

/// Exponentially decaying profile: (h)_τ = e^{−γ(τ−1)}, τ = 1..L.
pub fn exp_decay_taps(len: usize, gamma: f64) -> Result<TapProfile> {
    if len < 1 {
        return Err(Error::Domain("exp_decay_taps: length must be ≥ 1".into()));
    }
    if !(gamma > 0.0) {
        return Err(Error::Domain(format!("exp_decay_taps: γ = {gamma} must be > 0")));
    }
    let taps = (0..len).map(|t| (-gamma * t as f64).exp()).collect();
    Ok(TapProfile {
        taps,
        gamma: Some(gamma),
    })
}

/// Additive i.i.d. N(0, σ_e²) noise on every tap. σ_e² = 0 is the
/// identity, bit-exact.
pub fn perturb_taps(h: &TapProfile, err_var: f64, rng: &mut RngStream) -> TapProfile {
    if err_var == 0.0 {
        return h.clone();
    }
    let sd = err_var.sqrt();
    TapProfile {
        taps: h.taps.iter().map(|t| t + sd * rng.gaussian()).collect(),
        gamma: None,
    }
}

/// Noise law of a finite-memory channel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FmKind {
    /// y_i = √ρ Σ_τ h_τ s_{i−τ+1} + w_i with unit-variance AWGN.
    Awgn,
    /// y_i ~ Poisson(√ρ Σ_τ h_τ s_{i−τ+1} + 1).
    Poisson,
}

/// A fully specified finite-memory channel.
#[derive(Debug, Clone)]
pub struct FmChannelSpec {
    pub kind: FmKind,
    pub taps: TapProfile,
    /// SNR parameter ρ (linear, not dB); multiplies the signal as √ρ.
    pub rho: f64,
    pub constellation: Constellation,
}

impl FmChannelSpec {
    pub fn new(
        kind: FmKind,
        taps: TapProfile,
        rho: f64,
        constellation: Constellation,
    ) -> Result<Self> {
        if !(rho > 0.0) {
            return Err(Error::Domain(format!("fm channel: ρ = {rho} must be > 0")));
        }
        Ok(FmChannelSpec {
            kind,
            taps,
            rho,
            constellation,
        })
    }

    pub fn memory(&self) -> usize {
        self.taps.memory()
    }

    /// Noiseless signal term √ρ Σ_τ h_τ s_{i−τ+1} for a state given as
    /// symbol indices ordered oldest → newest (s_{i−L+1} .. s_i).
    pub fn state_signal(&self, state: &[usize]) -> f64 {
        let l = self.memory();
        debug_assert_eq!(state.len(), l);
        let mut acc = 0.0;
        for (tau, h) in self.taps.taps().iter().enumerate() {
            // tap τ+1 multiplies s_{i−τ}, i.e. state[l−1−τ]
            acc += h * self.constellation.point(state[l - 1 - tau]);
        }
        self.rho.sqrt() * acc
    }

    /// Expected channel output for a state: the AWGN mean, or the
    /// Poisson rate √ρ·signal + 1.
    pub fn state_mean(&self, state: &[usize]) -> f64 {
        match self.kind {
            FmKind::Awgn => self.state_signal(state),
            FmKind::Poisson => self.state_signal(state) + 1.0,
        }
    }

    /// Exact log p(y | state). Out-of-support observations (negative or
    /// non-integer counts for the Poisson law, or a non-positive rate)
    /// get −∞ rather than an error, so exhaustive searches can skip them.
    pub fn loglik(&self, y: f64, state: &[usize]) -> f64 {
        match self.kind {
            FmKind::Awgn => gaussian_logpdf_scalar(y, self.state_signal(state), 1.0),
            FmKind::Poisson => {
                let rate = self.state_signal(state) + 1.0;
                if rate <= 0.0 {
                    return f64::NEG_INFINITY;
                }
                if y < 0.0 || y.fract() != 0.0 {
                    return f64::NEG_INFINITY;
                }
                poisson_logpmf(y as u64, rate).unwrap_or(f64::NEG_INFINITY)
            }
        }
    }

    /// Expected outputs per index for a symbol sequence, using the
    /// pre-history padding convention.
    pub fn clean(&self, symbols: &[usize]) -> Vec<f64> {
        let l = self.memory();
        let mut state = vec![PAD_SYMBOL; l];
        symbols
            .iter()
            .map(|&s| {
                state.rotate_left(1);
                state[l - 1] = s;
                self.state_mean(&state)
            })
            .collect()
    }

    /// Sample a block of channel outputs for the given symbol indices.
    pub fn sample(&self, symbols: &[usize], rng: &mut RngStream) -> Result<Vec<f64>> {
        let l = self.memory();
        let mut state = vec![PAD_SYMBOL; l];
        let mut out = Vec::with_capacity(symbols.len());
        for &s in symbols {
            state.rotate_left(1);
            state[l - 1] = s;
            let signal = self.state_signal(&state);
            let y = match self.kind {
                FmKind::Awgn => signal + rng.gaussian(),
                FmKind::Poisson => {
                    let rate = signal + 1.0;
                    if rate <= 0.0 {
                        return Err(Error::Domain(format!(
                            "poisson rate {rate} ≤ 0; check constellation"
                        )));
                    }
                    rng.poisson(rate)? as f64
                }
            };
            out.push(y);
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exp_decay_first_tap_is_one() {
        for gamma in [0.05, 0.7, 1.9] {
            let h = exp_decay_taps(5, gamma).unwrap();
            assert_eq!(h.taps()[0], 1.0);
        }
    }

    #[test]
    fn exp_decay_ln2_gives_halving() {
        let h = exp_decay_taps(4, 2.0f64.ln()).unwrap();
        let expect = [1.0, 0.5, 0.25, 0.125];
        for (t, e) in h.taps().iter().zip(expect) {
            assert!((t - e).abs() < 1e-15);
        }
    }

    #[test]
    fn exp_decay_matches_direct_evaluation() {
        let h = exp_decay_taps(4, 0.2).unwrap();
        for (tau, t) in h.taps().iter().enumerate() {
            assert!((t - (-0.2 * tau as f64).exp()).abs() < 1e-15);
        }
        assert!(exp_decay_taps(4, 0.0).is_err());
        assert!(exp_decay_taps(0, 0.5).is_err());
    }

    #[test]
    fn awgn_clean_single_tap() {
        // L = 1, h = [1], ρ = 4, s = +1 → mean 2
        let spec = FmChannelSpec::new(
            FmKind::Awgn,
            TapProfile::new(vec![1.0]).unwrap(),
            4.0,
            Constellation::bpsk(),
        )
        .unwrap();
        assert_eq!(spec.clean(&[1]), vec![2.0]);
    }

    #[test]
    fn awgn_sample_mean_matches_clean() {
        let spec = FmChannelSpec::new(
            FmKind::Awgn,
            exp_decay_taps(3, 0.4).unwrap(),
            2.5,
            Constellation::bpsk(),
        )
        .unwrap();
        let symbols = [1, 0, 1, 1];
        let clean = spec.clean(&symbols);
        let mut rng = RngStream::new(3, 9);
        let n = 100_000;
        let mut acc = vec![0.0; symbols.len()];
        for _ in 0..n {
            let y = spec.sample(&symbols, &mut rng).unwrap();
            for (a, v) in acc.iter_mut().zip(&y) {
                *a += v;
            }
        }
        for (a, c) in acc.iter().zip(&clean) {
            let mean = a / n as f64;
            assert!((mean - c).abs() < 3.0 / (n as f64).sqrt() * 1.5, "{mean} vs {c}");
        }
    }

    #[test]
    fn poisson_all_zero_ook_has_rate_one() {
        let spec = FmChannelSpec::new(
            FmKind::Poisson,
            exp_decay_taps(4, 0.2).unwrap(),
            10.0,
            Constellation::ook(),
        )
        .unwrap();
        let symbols = [0usize; 6];
        assert!(spec.clean(&symbols).iter().all(|&m| m == 1.0));
        let mut rng = RngStream::new(8, 1);
        let n = 40_000;
        let mut acc = 0.0;
        for _ in 0..n {
            acc += spec.sample(&symbols, &mut rng).unwrap().iter().sum::<f64>();
        }
        let mean = acc / (n as f64 * symbols.len() as f64);
        assert!((mean - 1.0).abs() < 0.02, "mean {mean}");
    }

    #[test]
    fn poisson_rejects_negative_rate() {
        // BPSK through the Poisson law can push the rate below zero
        let spec = FmChannelSpec::new(
            FmKind::Poisson,
            TapProfile::new(vec![1.0]).unwrap(),
            9.0,
            Constellation::bpsk(),
        )
        .unwrap();
        let mut rng = RngStream::new(1, 1);
        assert!(spec.sample(&[0], &mut rng).is_err()); // signal −3, rate −2
    }

    #[test]
    fn loglik_awgn_peak_and_poisson_zero_count() {
        let spec = FmChannelSpec::new(
            FmKind::Awgn,
            exp_decay_taps(2, 0.3).unwrap(),
            4.0,
            Constellation::bpsk(),
        )
        .unwrap();
        let state = [0usize, 1];
        let mean = spec.state_signal(&state);
        let peak = spec.loglik(mean, &state);
        assert!((peak + 0.5 * (2.0 * std::f64::consts::PI).ln()).abs() < 1e-14);

        let pspec = FmChannelSpec::new(
            FmKind::Poisson,
            exp_decay_taps(2, 0.3).unwrap(),
            4.0,
            Constellation::ook(),
        )
        .unwrap();
        let rate = pspec.state_signal(&state) + 1.0;
        assert!((pspec.loglik(0.0, &state) + rate).abs() < 1e-12);
    }

    #[test]
    fn loglik_normalizes_over_observations() {
        // AWGN: trapezoid quadrature over ±9σ; Poisson: sum over counts.
        let awgn = FmChannelSpec::new(
            FmKind::Awgn,
            exp_decay_taps(3, 0.5).unwrap(),
            3.0,
            Constellation::bpsk(),
        )
        .unwrap();
        let state = [1usize, 0, 1];
        let mean = awgn.state_signal(&state);
        let (lo, hi, steps) = (mean - 9.0, mean + 9.0, 20_000);
        let dx = (hi - lo) / steps as f64;
        let mut total = 0.0;
        for i in 0..=steps {
            let y = lo + i as f64 * dx;
            let w = if i == 0 || i == steps { 0.5 } else { 1.0 };
            total += w * awgn.loglik(y, &state).exp();
        }
        total *= dx;
        assert!((total - 1.0).abs() < 1e-6, "awgn integral {total}");

        let pois = FmChannelSpec::new(
            FmKind::Poisson,
            exp_decay_taps(3, 0.5).unwrap(),
            25.0,
            Constellation::ook(),
        )
        .unwrap();
        let state = [1usize, 1, 1];
        let rate = pois.state_signal(&state) + 1.0;
        let top = (rate + 40.0 * rate.sqrt()).ceil() as u64;
        let mut total = 0.0;
        for y in 0..=top {
            total += pois.loglik(y as f64, &state).exp();
        }
        assert!((total - 1.0).abs() < 1e-6, "poisson sum {total}");
    }

    #[test]
    fn sampled_pairs_have_positive_mass() {
        let mut rng = RngStream::new(21, 4);
        let pois = FmChannelSpec::new(
            FmKind::Poisson,
            exp_decay_taps(2, 0.7).unwrap(),
            16.0,
            Constellation::ook(),
        )
        .unwrap();
        let awgn = FmChannelSpec::new(
            FmKind::Awgn,
            exp_decay_taps(2, 0.7).unwrap(),
            16.0,
            Constellation::bpsk(),
        )
        .unwrap();
        for _ in 0..200 {
            let sym: Vec<usize> = (0..8).map(|_| rng.index(2)).collect();
            let yp = pois.sample(&sym, &mut rng).unwrap();
            let ya = awgn.sample(&sym, &mut rng).unwrap();
            let mut state = vec![PAD_SYMBOL; 2];
            for (i, &s) in sym.iter().enumerate() {
                state.rotate_left(1);
                state[1] = s;
                assert!(pois.loglik(yp[i], &state) > f64::NEG_INFINITY);
                assert!(awgn.loglik(ya[i], &state).is_finite());
            }
        }
    }

    #[test]
    fn perturb_zero_variance_is_identity() {
        let h = exp_decay_taps(4, 0.2).unwrap();
        let mut rng = RngStream::new(0, 0);
        let p = perturb_taps(&h, 0.0, &mut rng);
        assert_eq!(p.taps(), h.taps());
    }

    #[test]
    fn perturb_empirical_variance() {
        let h = exp_decay_taps(3, 0.2).unwrap();
        let mut rng = RngStream::new(17, 0);
        let err_var = 0.1; // the Gaussian-channel setting
        let n = 10_000;
        let mut acc = vec![0.0; 3];
        for _ in 0..n {
            let p = perturb_taps(&h, err_var, &mut rng);
            for (a, (pt, ht)) in acc.iter_mut().zip(p.taps().iter().zip(h.taps())) {
                *a += (pt - ht) * (pt - ht);
            }
        }
        for a in &acc {
            let v = a / n as f64;
            assert!((v - err_var).abs() / err_var < 0.05, "var {v}");
        }
    }
}
