//! Mini-batch training loop with Adam and gradient clipping.

use super::graph::{Graph, NodeId};
use super::params::ParamStore;
use crate::error::Error;
use crate::numkit::RngStream;
use crate::Result;

/// Training hyperparameters. Defaults: Adam(0.9, 0.999, 1e-8) at rate
/// 1e-3, batch 128, 100 epochs, clipping at global norm 5.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    /// Global-norm clip threshold; `None` disables clipping.
    pub grad_clip: Option<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            batch_size: 128,
            epochs: 100,
            seed: 0,
            grad_clip: Some(5.0),
        }
    }
}

impl TrainConfig {
    pub fn with_epochs(mut self, epochs: usize) -> Self {
        self.epochs = epochs;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_learning_rate(mut self, lr: f64) -> Self {
        self.learning_rate = lr;
        self
    }

    pub fn with_batch_size(mut self, batch: usize) -> Self {
        self.batch_size = batch;
        self
    }

    fn validate(&self) -> Result<()> {
        if self.learning_rate < 0.0
            || self.batch_size == 0
            || self.epochs == 0
            || !(0.0..1.0).contains(&self.beta1)
            || !(0.0..1.0).contains(&self.beta2)
        {
            return Err(Error::Domain("invalid training configuration".into()));
        }
        Ok(())
    }
}

/// Adam state over the flat parameter vector.
#[derive(Debug, Clone)]
pub struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
}

impl Adam {
    pub fn new(n_params: usize) -> Self {
        Adam {
            m: vec![0.0; n_params],
            v: vec![0.0; n_params],
            t: 0,
        }
    }

    /// One update from the store's accumulated gradients.
    pub fn step(&mut self, ps: &mut ParamStore, cfg: &TrainConfig) -> Result<()> {
        let grad = ps.flat_grad();
        let mut flat = ps.flat();
        if grad.len() != self.m.len() {
            return Err(Error::Dim("adam: parameter count changed".into()));
        }
        self.t += 1;
        let bc1 = 1.0 - cfg.beta1.powi(self.t as i32);
        let bc2 = 1.0 - cfg.beta2.powi(self.t as i32);
        for i in 0..grad.len() {
            self.m[i] = cfg.beta1 * self.m[i] + (1.0 - cfg.beta1) * grad[i];
            self.v[i] = cfg.beta2 * self.v[i] + (1.0 - cfg.beta2) * grad[i] * grad[i];
            let mhat = self.m[i] / bc1;
            let vhat = self.v[i] / bc2;
            flat[i] -= cfg.learning_rate * mhat / (vhat.sqrt() + cfg.epsilon);
        }
        ps.set_flat(&flat)
    }
}

/// Scale gradients so their global norm is at most `max_norm`.
pub fn clip_global_norm(ps: &mut ParamStore, max_norm: f64) {
    let norm: f64 = ps
        .flat_grad()
        .iter()
        .map(|g| g * g)
        .sum::<f64>()
        .sqrt();
    if norm > max_norm && norm > 0.0 {
        let scale = max_norm / norm;
        for id in 0..ps.len() {
            for g in ps.grad_mut(id).as_mut_slice() {
                *g *= scale;
            }
        }
    }
}

/// Generic mini-batch trainer.
///
/// `build_loss` records one sample's loss on a fresh graph; gradients
/// are averaged over the batch, clipped, and applied with Adam. Sample
/// order is reshuffled per epoch from the config seed, so a run is
/// fully determined by (parameters, config, dataset). Returns the mean
/// loss per epoch. A NaN loss aborts with the epoch and batch index.
pub fn train(
    ps: &mut ParamStore,
    n_samples: usize,
    cfg: &TrainConfig,
    mut build_loss: impl FnMut(&mut Graph, &ParamStore, usize) -> Result<NodeId>,
) -> Result<Vec<f64>> {
    cfg.validate()?;
    if n_samples == 0 {
        return Err(Error::Domain("train: empty dataset".into()));
    }
    let mut adam = Adam::new(ps.n_scalars());
    let mut order: Vec<usize> = (0..n_samples).collect();
    let mut shuffle_rng = RngStream::new(cfg.seed, 0x7368_7566); // "shuf"
    let mut trace = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        shuffle_rng.shuffle(&mut order);
        let mut epoch_loss = 0.0;
        for (batch_no, batch) in order.chunks(cfg.batch_size).enumerate() {
            ps.zero_grads();
            let mut batch_loss = 0.0;
            for &idx in batch {
                let mut g = Graph::new();
                let sample_loss = build_loss(&mut g, ps, idx)?;
                let scaled = g.scale(sample_loss, 1.0 / batch.len() as f64);
                batch_loss += g.scalar(sample_loss);
                g.backward(scaled, ps)?;
            }
            batch_loss /= batch.len() as f64;
            if !batch_loss.is_finite() {
                return Err(Error::NanLoss {
                    epoch,
                    batch: batch_no,
                });
            }
            if let Some(max_norm) = cfg.grad_clip {
                clip_global_norm(ps, max_norm);
            }
            adam.step(ps, cfg)?;
            epoch_loss += batch_loss * batch.len() as f64;
        }
        trace.push(epoch_loss / n_samples as f64);
    }
    Ok(trace)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neural::blocks::{Activation, Mlp};

    fn toy_two_class() -> (Vec<Vec<f64>>, Vec<usize>) {
        // linearly separable clusters around ±2
        let mut xs = Vec::new();
        let mut labels = Vec::new();
        let mut rng = RngStream::new(42, 1);
        for _ in 0..100 {
            let c = rng.index(2);
            let center = if c == 0 { -2.0 } else { 2.0 };
            xs.push(vec![center + 0.3 * rng.gaussian(), center + 0.3 * rng.gaussian()]);
            labels.push(c);
        }
        (xs, labels)
    }

    fn fit(cfg: &TrainConfig) -> (ParamStore, Mlp, Vec<f64>) {
        let (xs, labels) = toy_two_class();
        let mut ps = ParamStore::new(cfg.seed);
        let mlp = Mlp::new(
            &mut ps,
            "net",
            &[2, 8, 2],
            &[Activation::Relu, Activation::Identity],
        );
        let trace = train(&mut ps, xs.len(), cfg, |g, ps, idx| {
            let x = g.input(xs[idx].clone());
            let logits = mlp.forward(g, ps, x)?;
            Ok(g.cross_entropy_logits(logits, labels[idx]))
        })
        .unwrap();
        (ps, mlp, trace)
    }

    #[test]
    fn separable_toy_set_reaches_low_loss() {
        let cfg = TrainConfig {
            epochs: 60,
            batch_size: 16,
            seed: 5,
            ..TrainConfig::default()
        };
        let (_, _, trace) = fit(&cfg);
        assert!(trace.last().unwrap() < &0.1, "final loss {}", trace.last().unwrap());
    }

    #[test]
    fn zero_learning_rate_leaves_parameters_unchanged() {
        let cfg = TrainConfig {
            learning_rate: 0.0,
            epochs: 3,
            seed: 5,
            ..TrainConfig::default()
        };
        let (xs, labels) = toy_two_class();
        let mut ps = ParamStore::new(5);
        let mlp = Mlp::new(
            &mut ps,
            "net",
            &[2, 4, 2],
            &[Activation::Relu, Activation::Identity],
        );
        let before = ps.flat();
        train(&mut ps, xs.len(), &cfg, |g, ps, idx| {
            let x = g.input(xs[idx].clone());
            let logits = mlp.forward(g, ps, x)?;
            Ok(g.cross_entropy_logits(logits, labels[idx]))
        })
        .unwrap();
        assert_eq!(ps.flat(), before);
    }

    #[test]
    fn same_seed_is_bit_identical() {
        let cfg = TrainConfig {
            epochs: 8,
            batch_size: 32,
            seed: 77,
            ..TrainConfig::default()
        };
        let (ps1, _, trace1) = fit(&cfg);
        let (ps2, _, trace2) = fit(&cfg);
        assert_eq!(ps1.flat(), ps2.flat());
        assert_eq!(trace1, trace2);
    }

    #[test]
    fn zero_gradient_step_is_a_no_op() {
        let mut ps = ParamStore::new(1);
        ps.add_dense("w", 3, 3);
        let before = ps.flat();
        let mut adam = Adam::new(ps.n_scalars());
        ps.zero_grads();
        adam.step(&mut ps, &TrainConfig::default()).unwrap();
        assert_eq!(ps.flat(), before);
    }

    #[test]
    fn nan_loss_reports_epoch_and_batch() {
        let mut ps = ParamStore::new(0);
        ps.add_scalar("theta", 1.0);
        let r = train(&mut ps, 4, &TrainConfig::default().with_epochs(2), |g, _, idx| {
            let v = if idx == 2 { f64::NAN } else { 1.0 };
            Ok(g.input(vec![v]))
        });
        match r {
            Err(Error::NanLoss { epoch: 0, .. }) => {}
            other => panic!("expected NanLoss at epoch 0, got {other:?}"),
        }
    }

    #[test]
    fn clipping_caps_global_norm() {
        let mut ps = ParamStore::new(0);
        let w = ps.add_zeros("w", 2, 2);
        ps.grad_mut(w).as_mut_slice().copy_from_slice(&[3.0, 4.0, 0.0, 0.0]);
        clip_global_norm(&mut ps, 1.0);
        let g = ps.flat_grad();
        let norm: f64 = g.iter().map(|x| x * x).sum::<f64>().sqrt();
        assert!((norm - 1.0).abs() < 1e-12);
    }
}
