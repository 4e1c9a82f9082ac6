//! Central finite-difference gradient checking.

use super::graph::{Graph, NodeId};
use super::params::ParamStore;
use crate::Result;

/// Numeric gradient of a scalar loss with respect to every parameter,
/// by central differences over the flat parameter vector.
pub fn numeric_grad(
    ps: &mut ParamStore,
    step: f64,
    mut build: impl FnMut(&mut Graph, &ParamStore) -> Result<NodeId>,
) -> Result<Vec<f64>> {
    let base = ps.flat();
    let mut grad = vec![0.0; base.len()];
    let mut probe = base.clone();
    for i in 0..base.len() {
        probe[i] = base[i] + step;
        ps.set_flat(&probe)?;
        let mut g = Graph::new();
        let hi_node = build(&mut g, ps)?;
        let hi = g.scalar(hi_node);
        probe[i] = base[i] - step;
        ps.set_flat(&probe)?;
        let mut g = Graph::new();
        let lo_node = build(&mut g, ps)?;
        let lo = g.scalar(lo_node);
        probe[i] = base[i];
        grad[i] = (hi - lo) / (2.0 * step);
    }
    ps.set_flat(&base)?;
    Ok(grad)
}

/// Analytic gradient via one backward sweep, flat layout.
pub fn analytic_grad(
    ps: &mut ParamStore,
    mut build: impl FnMut(&mut Graph, &ParamStore) -> Result<NodeId>,
) -> Result<Vec<f64>> {
    ps.zero_grads();
    let mut g = Graph::new();
    let loss = build(&mut g, ps)?;
    g.backward(loss, ps)?;
    Ok(ps.flat_grad())
}

/// Largest relative disagreement between two gradients, with an
/// absolute floor so near-zero entries compare sanely.
pub fn max_rel_err(analytic: &[f64], numeric: &[f64]) -> f64 {
    analytic
        .iter()
        .zip(numeric)
        .map(|(a, n)| (a - n).abs() / a.abs().max(n.abs()).max(1e-6))
        .fold(0.0, f64::max)
}

/// Run the full check: analytic vs central differences at `step`,
/// returning the worst relative error.
pub fn check_gradients(
    ps: &mut ParamStore,
    step: f64,
    mut build: impl FnMut(&mut Graph, &ParamStore) -> Result<NodeId>,
) -> Result<f64> {
    let a = analytic_grad(ps, &mut build)?;
    let n = numeric_grad(ps, step, &mut build)?;
    Ok(max_rel_err(&a, &n))
}
