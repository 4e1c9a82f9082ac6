//! Named parameter tensors with gradients and a flat view.

use std::collections::HashMap;

use crate::error::Error;
use crate::numkit::{Mat, RngStream};
use crate::Result;

/// Handle to one tensor inside a [`ParamStore`].
pub type ParamId = usize;

/// Flat named collection of real tensors with per-tensor gradients.
///
/// Initialization is derived deterministically from the store's seed:
/// dense weights are uniform in ±√(6/(fan_in+fan_out)), biases start at
/// zero. The flat view concatenates tensors in insertion order and
/// round-trips losslessly.
#[derive(Debug, Clone)]
pub struct ParamStore {
    names: Vec<String>,
    values: Vec<Mat>,
    grads: Vec<Mat>,
    by_name: HashMap<String, ParamId>,
    seed: u64,
    init_rng: RngStream,
}

impl ParamStore {
    pub fn new(seed: u64) -> Self {
        ParamStore {
            names: Vec::new(),
            values: Vec::new(),
            grads: Vec::new(),
            by_name: HashMap::new(),
            seed,
            init_rng: RngStream::new(seed, 0x7061_7261_6d73), // "params"
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    fn insert(&mut self, name: &str, value: Mat) -> ParamId {
        assert!(
            !self.by_name.contains_key(name),
            "duplicate parameter name {name}"
        );
        let id = self.values.len();
        self.names.push(name.to_string());
        self.grads.push(Mat::zeros(value.rows(), value.cols()));
        self.values.push(value);
        self.by_name.insert(name.to_string(), id);
        id
    }

    /// Dense weight matrix (out × in) with fan-balanced uniform init.
    pub fn add_dense(&mut self, name: &str, out_dim: usize, in_dim: usize) -> ParamId {
        let bound = (6.0 / (in_dim + out_dim) as f64).sqrt();
        let mut rng = self.init_rng.substream(self.values.len() as u64);
        let w = Mat::from_fn(out_dim, in_dim, |_, _| rng.uniform_in(-bound, bound));
        self.insert(name, w)
    }

    /// Zero-initialized tensor (biases, accumulators).
    pub fn add_zeros(&mut self, name: &str, rows: usize, cols: usize) -> ParamId {
        self.insert(name, Mat::zeros(rows, cols))
    }

    /// Scalar parameter with an explicit starting value.
    pub fn add_scalar(&mut self, name: &str, value: f64) -> ParamId {
        self.insert(name, Mat::from_vec(1, 1, vec![value]).expect("finite scalar"))
    }

    /// Tensor with an explicit starting value.
    pub fn add_tensor(&mut self, name: &str, value: Mat) -> ParamId {
        self.insert(name, value)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.by_name.get(name).copied()
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id]
    }

    pub fn value(&self, id: ParamId) -> &Mat {
        &self.values[id]
    }

    pub fn value_mut(&mut self, id: ParamId) -> &mut Mat {
        &mut self.values[id]
    }

    pub fn grad(&self, id: ParamId) -> &Mat {
        &self.grads[id]
    }

    pub fn grad_mut(&mut self, id: ParamId) -> &mut Mat {
        &mut self.grads[id]
    }

    /// Split borrow: the value of `id` read-only next to its gradient.
    pub fn value_and_grad_mut(&mut self, id: ParamId) -> (&Mat, &mut Mat) {
        (&self.values[id], &mut self.grads[id])
    }

    pub fn zero_grads(&mut self) {
        for g in self.grads.iter_mut() {
            g.as_mut_slice().fill(0.0);
        }
    }

    /// Total number of scalar parameters.
    pub fn n_scalars(&self) -> usize {
        self.values.iter().map(|m| m.as_slice().len()).sum()
    }

    /// Concatenated parameter values in insertion order.
    pub fn flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.n_scalars());
        for v in &self.values {
            out.extend_from_slice(v.as_slice());
        }
        out
    }

    /// Concatenated gradients in insertion order.
    pub fn flat_grad(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.n_scalars());
        for g in &self.grads {
            out.extend_from_slice(g.as_slice());
        }
        out
    }

    /// Overwrite all parameters from a flat vector.
    pub fn set_flat(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.n_scalars() {
            return Err(Error::Dim(format!(
                "set_flat: {} values for {} parameters",
                flat.len(),
                self.n_scalars()
            )));
        }
        let mut off = 0;
        for v in self.values.iter_mut() {
            let n = v.as_slice().len();
            v.as_mut_slice().copy_from_slice(&flat[off..off + n]);
            off += n;
        }
        Ok(())
    }

    /// Iterate (name, value) pairs in insertion order.
    pub fn iter(&self) -> impl Iterator<Item = (&str, &Mat)> {
        self.names.iter().map(|n| n.as_str()).zip(self.values.iter())
    }
}
