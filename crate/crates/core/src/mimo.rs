//! Model-based flat-MIMO detection: iterative soft interference
//! cancellation, the exhaustive MAP oracle, and the plain projected
//! gradient baseline that the unfolded detector imitates.

use crate::channels::{Constellation, MimoChannelSpec};
use crate::error::Error;
use crate::numkit::{cholesky, dot, solve_with_factor, Mat, PmfVec};
use crate::Result;

/// Mean and variance of a symbol distribution over the constellation.
pub fn moments(p: &PmfVec, cons: &Constellation) -> (f64, f64) {
    debug_assert_eq!(p.len(), cons.size());
    let mut e = 0.0;
    for (j, &pj) in p.as_slice().iter().enumerate() {
        e += cons.point(j) * pj;
    }
    let mut v = 0.0;
    for (j, &pj) in p.as_slice().iter().enumerate() {
        let d = cons.point(j) - e;
        v += d * d * pj;
    }
    (e, v)
}

/// Interference-canceled observation for user `k`:
/// z_k = y − Σ_{l≠k} h_l e_l.
pub fn cancel(y: &[f64], h: &Mat, k: usize, means: &[f64]) -> Vec<f64> {
    debug_assert_eq!(y.len(), h.rows());
    debug_assert_eq!(means.len(), h.cols());
    let mut z = y.to_vec();
    for l in 0..h.cols() {
        if l == k {
            continue;
        }
        let e = means[l];
        for (row, zi) in z.iter_mut().enumerate() {
            *zi -= h.get(row, l) * e;
        }
    }
    z
}

/// Soft decode user `k` from its interference-canceled observation.
///
/// The residual interference plus noise is modeled as a zero-mean
/// Gaussian with covariance σ_w² I + Σ_{l≠k} v_l h_l h_lᵀ; the output is
/// the softmax over constellation points of the corresponding
/// quadratic forms, evaluated through the SPD solver.
pub fn soft_decode(
    z: &[f64],
    h: &Mat,
    k: usize,
    variances: &[f64],
    noise_var: f64,
    cons: &Constellation,
) -> Result<PmfVec> {
    if !(noise_var > 0.0) {
        return Err(Error::Domain("soft_decode: σ_w² must be > 0".into()));
    }
    let n = h.rows();
    let mut cov = Mat::from_fn(n, n, |i, j| if i == j { noise_var } else { 0.0 });
    for l in 0..h.cols() {
        if l == k || variances[l] == 0.0 {
            continue;
        }
        let v = variances[l];
        // fill the upper triangle and mirror, so the accumulated matrix
        // is symmetric to the last bit
        for i in 0..n {
            let vhi = v * h.get(i, l);
            for j in i..n {
                let inc = vhi * h.get(j, l);
                cov.set(i, j, cov.get(i, j) + inc);
                if j != i {
                    cov.set(j, i, cov.get(j, i) + inc);
                }
            }
        }
    }
    let factor = cholesky(&cov)?;
    let hk = h.col(k);
    let mut scores = Vec::with_capacity(cons.size());
    for j in 0..cons.size() {
        let alpha = cons.point(j);
        let d: Vec<f64> = z.iter().zip(&hk).map(|(zi, hi)| zi - hi * alpha).collect();
        let x = solve_with_factor(&factor, &d);
        scores.push(-0.5 * dot(&d, &x));
    }
    Ok(crate::numkit::softmax(&scores))
}

/// Iterative-SIC configuration.
#[derive(Debug, Clone, Copy)]
pub struct SicConfig {
    /// Number of cancellation/decoding rounds Q.
    pub iterations: usize,
}

impl Default for SicConfig {
    fn default() -> Self {
        SicConfig { iterations: 5 }
    }
}

/// Iterative soft interference cancellation.
///
/// Starts from uniform priors and runs Q parallel (Jacobi-style) rounds
/// of moments → cancel → soft decode for every user. Returns the full
/// soft-estimate history (Q+1 entries including the prior) and the hard
/// decisions from the final round.
pub fn iterative_sic(
    y: &[f64],
    h: &Mat,
    noise_var: f64,
    cons: &Constellation,
    config: &SicConfig,
) -> Result<(Vec<Vec<PmfVec>>, Vec<usize>)> {
    if config.iterations < 1 {
        return Err(Error::Domain("iterative_sic: Q must be ≥ 1".into()));
    }
    if y.len() != h.rows() {
        return Err(Error::Dim(format!(
            "iterative_sic: y has {} entries for {} rx antennas",
            y.len(),
            h.rows()
        )));
    }
    let k_users = h.cols();
    let m = cons.size();
    let mut history: Vec<Vec<PmfVec>> = Vec::with_capacity(config.iterations + 1);
    history.push(vec![PmfVec::uniform(m); k_users]);
    for _ in 0..config.iterations {
        let prev = history.last().unwrap();
        let mut means = vec![0.0; k_users];
        let mut vars = vec![0.0; k_users];
        for (l, p) in prev.iter().enumerate() {
            let (e, v) = moments(p, cons);
            means[l] = e;
            vars[l] = v;
        }
        let mut cur = Vec::with_capacity(k_users);
        for k in 0..k_users {
            let z = cancel(y, h, k, &means);
            cur.push(soft_decode(&z, h, k, &vars, noise_var, cons)?);
        }
        history.push(cur);
    }
    let hard = history.last().unwrap().iter().map(|p| p.argmax()).collect();
    Ok((history, hard))
}

const MAP_LIMIT: u64 = 1 << 20;

/// Exhaustive MAP detection: enumerates all M^K symbol vectors under the
/// exact channel likelihood. Returns the joint maximizer (lowest joint
/// index on ties) and the per-user posterior marginals.
pub fn mimo_map_bruteforce(y: &[f64], spec: &MimoChannelSpec) -> Result<(Vec<usize>, Vec<PmfVec>)> {
    let k = spec.n_users();
    let m = spec.constellation.size();
    let mut total: u64 = 1;
    for _ in 0..k {
        total = total
            .checked_mul(m as u64)
            .filter(|&v| v <= MAP_LIMIT)
            .ok_or_else(|| Error::TooLarge(format!("M^K = {m}^{k} symbol vectors")))?;
    }
    let decode = |idx: u64| -> Vec<usize> {
        let mut s = Vec::with_capacity(k);
        let mut rest = idx;
        for _ in 0..k {
            s.push((rest % m as u64) as usize);
            rest /= m as u64;
        }
        s
    };
    let mut lls = Vec::with_capacity(total as usize);
    let mut best_idx = 0u64;
    let mut best_ll = f64::NEG_INFINITY;
    for idx in 0..total {
        let ll = spec.loglik(y, &decode(idx));
        if ll > best_ll {
            best_ll = ll;
            best_idx = idx;
        }
        lls.push(ll);
    }
    if best_ll == f64::NEG_INFINITY {
        return Err(Error::Domain("mimo_map_bruteforce: all vectors impossible".into()));
    }
    let mut mass = vec![0.0f64; k * m];
    for (idx, ll) in lls.iter().enumerate() {
        let wgt = (ll - best_ll).exp();
        if wgt == 0.0 {
            continue;
        }
        let mut rest = idx as u64;
        for u in 0..k {
            mass[u * m + (rest % m as u64) as usize] += wgt;
            rest /= m as u64;
        }
    }
    let marginals = (0..k)
        .map(|u| {
            PmfVec::from_unnormalized(mass[u * m..(u + 1) * m].to_vec())
                .map_err(|_| Error::ZeroMessage { index: u })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((decode(best_idx), marginals))
}

/// Default projected-gradient step size: 1 / λ_max(HᵀH).
pub fn default_pg_step(h: &Mat) -> f64 {
    1.0 / h.gram().lambda_max_spd()
}

/// Projected gradient descent for BPSK minimum-distance detection.
///
/// Iterates ŝ_{q+1} = sign(ŝ_q − η_q Hᵀ(H ŝ_q − y)), computed from the
/// precomputed Hᵀy and HᵀH. A coordinate exactly at 0 projects to −1
/// (lowest symbol). Returns symbol indices into the BPSK constellation
/// (0 ↔ −1, 1 ↔ +1).
pub fn projected_gradient_detect(y: &[f64], h: &Mat, etas: &[f64], s0: &[f64]) -> Vec<usize> {
    let hty = h.matvec_t(y);
    let hth = h.gram();
    let mut s = s0.to_vec();
    for &eta in etas {
        let hths = hth.matvec(&s);
        for i in 0..s.len() {
            let v = s[i] - eta * (hths[i] - hty[i]);
            s[i] = if v > 0.0 { 1.0 } else { -1.0 };
        }
    }
    s.iter().map(|&v| if v > 0.0 { 1 } else { 0 }).collect()
}
