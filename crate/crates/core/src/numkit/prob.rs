//! Probability primitives: log-sum-exp, softmax, scalar densities, and
//! the `PmfVec` type exchanged between soft detectors.

use crate::error::Error;
use crate::Result;

const LN_2PI: f64 = 1.8378770664093453;

/// Numerically stable log Σ exp(vᵢ) via max-shift.
pub fn logsumexp(v: &[f64]) -> f64 {
    let m = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    m + v.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// log softmax(v): v − logsumexp(v).
pub fn log_softmax(v: &[f64]) -> Vec<f64> {
    let lse = logsumexp(v);
    v.iter().map(|x| x - lse).collect()
}

/// Softmax as a normalized probability vector.
pub fn softmax(v: &[f64]) -> PmfVec {
    let m = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut e: Vec<f64> = v.iter().map(|x| (x - m).exp()).collect();
    let s: f64 = e.iter().sum();
    for x in e.iter_mut() {
        *x /= s;
    }
    PmfVec(e)
}

/// Log-density of a scalar normal.
pub fn gaussian_logpdf_scalar(y: f64, mean: f64, var: f64) -> f64 {
    let d = y - mean;
    -0.5 * (LN_2PI + var.ln() + d * d / var)
}

/// Log-pmf of a Poisson count: y ln λ − λ − ln Γ(y+1).
pub fn poisson_logpmf(y: u64, lambda: f64) -> Result<f64> {
    if !(lambda > 0.0) || !lambda.is_finite() {
        return Err(Error::Domain(format!(
            "poisson_logpmf: rate {lambda} must be > 0"
        )));
    }
    Ok(y as f64 * lambda.ln() - lambda - libm::lgamma(y as f64 + 1.0))
}

/// Nonnegative vector summing to one; the soft output exchanged between
/// detector stages.
#[derive(Debug, Clone, PartialEq)]
pub struct PmfVec(Vec<f64>);

impl PmfVec {
    /// Validate an already-normalized vector (sum within 1e-9 of 1).
    pub fn new(v: Vec<f64>) -> Result<Self> {
        if v.is_empty() {
            return Err(Error::Dim("PmfVec::new: empty vector".into()));
        }
        if v.iter().any(|x| !x.is_finite() || *x < 0.0) {
            return Err(Error::Domain("PmfVec::new: negative or non-finite mass".into()));
        }
        let s: f64 = v.iter().sum();
        if (s - 1.0).abs() > 1e-9 {
            return Err(Error::Domain(format!("PmfVec::new: sum {s} not 1")));
        }
        Ok(PmfVec(v))
    }

    /// Normalize nonnegative weights; errors if all mass is zero.
    pub fn from_unnormalized(v: Vec<f64>) -> Result<Self> {
        if v.is_empty() {
            return Err(Error::Dim("PmfVec::from_unnormalized: empty".into()));
        }
        if v.iter().any(|x| !x.is_finite() || *x < 0.0) {
            return Err(Error::Domain(
                "PmfVec::from_unnormalized: negative or non-finite mass".into(),
            ));
        }
        let s: f64 = v.iter().sum();
        if s <= 0.0 {
            return Err(Error::Domain("PmfVec::from_unnormalized: zero mass".into()));
        }
        Ok(PmfVec(v.into_iter().map(|x| x / s).collect()))
    }

    pub fn uniform(n: usize) -> Self {
        PmfVec(vec![1.0 / n as f64; n])
    }

    /// Point mass at `idx`.
    pub fn delta(n: usize, idx: usize) -> Self {
        let mut v = vec![0.0; n];
        v[idx] = 1.0;
        PmfVec(v)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn get(&self, i: usize) -> f64 {
        self.0[i]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    /// Index of the largest mass; ties break to the lowest index.
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (i, &p) in self.0.iter().enumerate().skip(1) {
            if p > self.0[best] {
                best = i;
            }
        }
        best
    }

    /// Uniform average of several equal-length pmfs.
    pub fn average(parts: &[&PmfVec]) -> Result<Self> {
        if parts.is_empty() {
            return Err(Error::Dim("PmfVec::average: no inputs".into()));
        }
        let n = parts[0].len();
        let mut acc = vec![0.0; n];
        for p in parts {
            if p.len() != n {
                return Err(Error::Dim("PmfVec::average: length mismatch".into()));
            }
            for (a, x) in acc.iter_mut().zip(p.as_slice()) {
                *a += x;
            }
        }
        let w = 1.0 / parts.len() as f64;
        for a in acc.iter_mut() {
            *a *= w;
        }
        Ok(PmfVec(acc))
    }
}
