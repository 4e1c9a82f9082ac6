//! Mixture-density head for conditional density estimation.
//!
//! Observations in scope are scalar, so each conditioning state gets a
//! univariate Gaussian mixture: weights through a softmax head, means
//! unconstrained, variances through a softplus head (floored away from
//! zero). The table of heads is trained by maximizing likelihood.

use super::graph::{Graph, NodeId};
use super::params::{ParamId, ParamStore};
use crate::error::Error;
use crate::numkit::{gaussian_logpdf_scalar, logsumexp};
use crate::Result;

const VAR_FLOOR: f64 = 1e-6;
const LN_2PI: f64 = 1.8378770664093453;

/// One state's mixture: weights sum to one, variances are positive.
#[derive(Debug, Clone)]
pub struct MixtureParams {
    pub weights: Vec<f64>,
    pub means: Vec<f64>,
    pub vars: Vec<f64>,
}

impl MixtureParams {
    pub fn new(weights: Vec<f64>, means: Vec<f64>, vars: Vec<f64>) -> Result<Self> {
        if weights.len() != means.len() || weights.len() != vars.len() || weights.is_empty() {
            return Err(Error::Dim("mixture: component count mismatch".into()));
        }
        let s: f64 = weights.iter().sum();
        if weights.iter().any(|w| *w < 0.0) || (s - 1.0).abs() > 1e-9 {
            return Err(Error::Domain("mixture: weights must be a distribution".into()));
        }
        if vars.iter().any(|v| !(*v > 0.0)) {
            return Err(Error::Domain("mixture: variances must be positive".into()));
        }
        Ok(MixtureParams {
            weights,
            means,
            vars,
        })
    }

    pub fn n_components(&self) -> usize {
        self.weights.len()
    }
}

/// Negative log-likelihood −log Σ_k w_k N(y | μ_k, σ_k²), via logsumexp.
pub fn mdn_nll(mix: &MixtureParams, y: f64) -> f64 {
    let terms: Vec<f64> = (0..mix.n_components())
        .map(|k| mix.weights[k].ln() + gaussian_logpdf_scalar(y, mix.means[k], mix.vars[k]))
        .collect();
    -logsumexp(&terms)
}

/// Per-state mixture table: rows are conditioning states, columns are
/// mixture components.
#[derive(Debug, Clone)]
pub struct MdnTable {
    /// Pre-softmax mixture weights, n_states × n_comp.
    pub w_logit: ParamId,
    /// Component means, n_states × n_comp.
    pub mean: ParamId,
    /// Pre-softplus variances, n_states × n_comp.
    pub rho: ParamId,
    pub n_states: usize,
    pub n_comp: usize,
}

impl MdnTable {
    pub fn new(ps: &mut ParamStore, prefix: &str, n_states: usize, n_comp: usize) -> Self {
        let w_logit = ps.add_zeros(&format!("{prefix}.w_logit"), n_states, n_comp);
        // spread the initial means so components can specialize
        let mean = ps.add_dense(&format!("{prefix}.mean"), n_states, n_comp);
        let rho = ps.add_zeros(&format!("{prefix}.rho"), n_states, n_comp);
        MdnTable {
            w_logit,
            mean,
            rho,
            n_states,
            n_comp,
        }
    }

    /// Extract one state's mixture parameters.
    pub fn mixture(&self, ps: &ParamStore, state: usize) -> MixtureParams {
        let w = crate::numkit::softmax(ps.value(self.w_logit).row(state));
        let means = ps.value(self.mean).row(state).to_vec();
        let vars: Vec<f64> = ps
            .value(self.rho)
            .row(state)
            .iter()
            .map(|r| softplus(*r) + VAR_FLOOR)
            .collect();
        MixtureParams {
            weights: w.as_slice().to_vec(),
            means,
            vars,
        }
    }

    /// Learned log-density log p̂(y | state).
    pub fn log_density(&self, ps: &ParamStore, state: usize, y: f64) -> f64 {
        -mdn_nll(&self.mixture(ps, state), y)
    }

    /// Record the NLL of one (state, y) pair for training.
    pub fn build_nll(
        &self,
        g: &mut Graph,
        ps: &ParamStore,
        state: usize,
        y: f64,
    ) -> Result<NodeId> {
        let row = state * self.n_comp;
        let w_all = g.param(ps, self.w_logit);
        let w_row = g.slice(w_all, row, self.n_comp);
        let log_w = g.log_softmax(w_row);
        let mu_all = g.param(ps, self.mean);
        let mu_row = g.slice(mu_all, row, self.n_comp);
        let rho_all = g.param(ps, self.rho);
        let rho_row = g.slice(rho_all, row, self.n_comp);
        let var_raw = g.softplus(rho_row);
        let floor = g.input(vec![VAR_FLOOR; self.n_comp]);
        let var = g.add(var_raw, floor);

        // log N(y | μ, σ²) = −½(ln 2π + ln σ² + (y−μ)²/σ²), per component
        let yv = g.input(vec![y; self.n_comp]);
        let diff = g.sub(yv, mu_row);
        let diff2 = g.mul(diff, diff);
        let ln_var = g.ln(var);
        let inv_var = {
            let neg_ln = g.neg(ln_var);
            g.exp(neg_ln)
        };
        let quad = g.mul(diff2, inv_var);
        let half = -0.5;
        let quad_h = g.scale(quad, half);
        let lnv_h = g.scale(ln_var, half);
        let const_h = g.input(vec![-0.5 * LN_2PI; self.n_comp]);
        let logpdf = {
            let a = g.add(quad_h, lnv_h);
            g.add(a, const_h)
        };
        let terms = g.add(log_w, logpdf);
        // −logsumexp(terms) via softmax-free route: lse = ln Σ exp
        let e = g.exp(terms);
        let s = g.sum(e);
        let lse = g.ln(s);
        Ok(g.neg(lse))
    }
}

fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}
