//! Unfolded projected-gradient detector for flat Gaussian MIMO channels
//! with BPSK inputs.
//!
//! Layer q imitates one projected-gradient iteration in two trainable
//! sub-layers: a gradient stage
//! z_q = ReLU(W_{1,q}(ŝ_{q−1} − δ_{1,q}Hᵀy + δ_{2,q}HᵀH ŝ_{q−1}) + b_{1,q})
//! and a projection stage ŝ_q = softsign(W_{2,q} z_q + b_{2,q}).
//! The final decision takes the sign of each element of ŝ_Q.
//!
//! Training minimizes the weighted ℓ2 loss Σ_q log(q)·‖s − ŝ_q‖²; the
//! literal log(q) weight zeroes layer 1's term (a log(q+1) switch is
//! available).

use crate::channels::MimoDataset;
use crate::error::Error;
use crate::neural::{train, Graph, NodeId, ParamId, ParamStore, TrainConfig};
use crate::numkit::Mat;
use crate::Result;

/// Structural configuration of the unfolded network.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct DetNetConfig {
    /// Number of unfolded layers Q.
    pub layers: usize,
    /// Width of the hidden (gradient) sub-layer.
    pub hidden: usize,
    /// Use log(q+1) loss weights instead of the literal log(q).
    pub log_offset_one: bool,
}

impl DetNetConfig {
    /// Desk-scale default: Q = 20, hidden 4K.
    pub fn desk(k_users: usize) -> Self {
        DetNetConfig {
            layers: 20,
            hidden: 4 * k_users,
            log_offset_one: false,
        }
    }

    /// The large published configuration: Q = 90, hidden 8K. Feasible to
    /// build, but sized for far more training data than desk runs use.
    pub fn large(k_users: usize) -> Self {
        DetNetConfig {
            layers: 90,
            hidden: 8 * k_users,
            log_offset_one: false,
        }
    }

    fn loss_weight(&self, q: usize) -> f64 {
        let base = if self.log_offset_one { q + 1 } else { q };
        (base as f64).ln()
    }
}

#[derive(Debug, Clone)]
struct DetNetLayer {
    w1: ParamId,
    b1: ParamId,
    w2: ParamId,
    b2: ParamId,
    delta1: ParamId,
    delta2: ParamId,
}

/// Per-layer parameters of the unfolded detector, bound to a fixed H.
#[derive(Debug, Clone)]
pub struct DetNet {
    pub config: DetNetConfig,
    pub n_rx: usize,
    pub n_users: usize,
    pub h: Mat,
    ht_h: Mat,
    layers: Vec<DetNetLayer>,
    pub params: ParamStore,
}

/// Build an untrained network for a known channel matrix. The step-size
/// scalars start at −1/λ_max(HᵀH), the scale at which the inner stage
/// reproduces a plain gradient-descent step.
pub fn detnet_build(h: &Mat, config: &DetNetConfig, seed: u64) -> Result<DetNet> {
    if config.layers < 1 || config.hidden < 1 {
        return Err(Error::Domain("detnet: degenerate configuration".into()));
    }
    let k = h.cols();
    let ht_h = h.gram();
    let delta0 = -1.0 / ht_h.lambda_max_spd();
    let mut params = ParamStore::new(seed);
    let mut layers = Vec::with_capacity(config.layers);
    for q in 0..config.layers {
        layers.push(DetNetLayer {
            w1: params.add_dense(&format!("l{q}.w1"), config.hidden, k),
            b1: params.add_zeros(&format!("l{q}.b1"), config.hidden, 1),
            w2: params.add_dense(&format!("l{q}.w2"), k, config.hidden),
            b2: params.add_zeros(&format!("l{q}.b2"), k, 1),
            delta1: params.add_scalar(&format!("l{q}.delta1"), delta0),
            delta2: params.add_scalar(&format!("l{q}.delta2"), delta0),
        });
    }
    Ok(DetNet {
        config: *config,
        n_rx: h.rows(),
        n_users: k,
        h: h.clone(),
        ht_h,
        layers,
        params,
    })
}

impl DetNet {
    /// Hand-set the parameters of one layer; used to emulate model-based
    /// iterations and in tests.
    pub fn set_layer(
        &mut self,
        q: usize,
        w1: Mat,
        b1: Vec<f64>,
        w2: Mat,
        b2: Vec<f64>,
        delta1: f64,
        delta2: f64,
    ) -> Result<()> {
        let layer = self.layers[q].clone();
        let assign = |ps: &mut ParamStore, id: ParamId, m: Mat| -> Result<()> {
            let slot = ps.value_mut(id);
            if slot.rows() != m.rows() || slot.cols() != m.cols() {
                return Err(Error::Dim("set_layer: shape mismatch".into()));
            }
            *slot = m;
            Ok(())
        };
        assign(&mut self.params, layer.w1, w1)?;
        let b1m = Mat::from_vec(b1.len(), 1, b1)?;
        assign(&mut self.params, layer.b1, b1m)?;
        assign(&mut self.params, layer.w2, w2)?;
        let b2m = Mat::from_vec(b2.len(), 1, b2)?;
        assign(&mut self.params, layer.b2, b2m)?;
        self.params.value_mut(layer.delta1).as_mut_slice()[0] = delta1;
        self.params.value_mut(layer.delta2).as_mut_slice()[0] = delta2;
        Ok(())
    }

    /// Forward pass: the per-layer estimates ŝ_1..ŝ_Q (length Q).
    pub fn forward(&self, y: &[f64]) -> Vec<Vec<f64>> {
        let hty = self.h.matvec_t(y);
        let mut s = vec![0.0; self.n_users]; // ŝ_0 = 0
        let mut outputs = Vec::with_capacity(self.layers.len());
        for layer in &self.layers {
            let d1 = self.params.value(layer.delta1).as_slice()[0];
            let d2 = self.params.value(layer.delta2).as_slice()[0];
            let hths = self.ht_h.matvec(&s);
            let inner: Vec<f64> = (0..self.n_users)
                .map(|i| s[i] - d1 * hty[i] + d2 * hths[i])
                .collect();
            let w1 = self.params.value(layer.w1);
            let b1 = self.params.value(layer.b1).as_slice();
            let mut z = w1.matvec(&inner);
            for (zi, bi) in z.iter_mut().zip(b1) {
                *zi = (*zi + bi).max(0.0);
            }
            let w2 = self.params.value(layer.w2);
            let b2 = self.params.value(layer.b2).as_slice();
            let mut out = w2.matvec(&z);
            for (oi, bi) in out.iter_mut().zip(b2) {
                let v = *oi + bi;
                *oi = v / (1.0 + v.abs());
            }
            s = out.clone();
            outputs.push(out);
        }
        outputs
    }

    /// Hard decisions: sign of ŝ_Q per element; exactly 0 maps to −1
    /// (symbol index 0).
    pub fn detect(&self, y: &[f64]) -> Vec<usize> {
        let outputs = self.forward(y);
        outputs
            .last()
            .expect("at least one layer")
            .iter()
            .map(|&v| if v > 0.0 { 1 } else { 0 })
            .collect()
    }

    fn build_loss(
        &self,
        g: &mut Graph,
        ps: &ParamStore,
        y: &[f64],
        target: &[f64],
    ) -> Result<NodeId> {
        let hty = self.h.matvec_t(y);
        let hty_node = g.input(hty);
        let target_node = g.input(target.to_vec());
        let mut s = g.input(vec![0.0; self.n_users]);
        let mut loss = g.input(vec![0.0]);
        for (qi, layer) in self.layers.iter().enumerate() {
            let d1y = g.scale_by_param(ps, layer.delta1, hty_node);
            let hths = g.const_matvec(self.ht_h.clone(), s)?;
            let d2s = g.scale_by_param(ps, layer.delta2, hths);
            let tmp = g.sub(s, d1y);
            let inner = g.add(tmp, d2s);
            let pre = g.affine(ps, layer.w1, Some(layer.b1), inner)?;
            let z = g.relu(pre);
            let out_pre = g.affine(ps, layer.w2, Some(layer.b2), z)?;
            s = g.softsign(out_pre);
            let weight = self.config.loss_weight(qi + 1);
            if weight != 0.0 {
                let d2 = g.squared_distance(target_node, s);
                let term = g.scale(d2, weight);
                loss = g.add(loss, term);
            }
        }
        Ok(loss)
    }
}

/// Train on labeled samples drawn from the linear Gaussian model with
/// this network's H.
pub fn detnet_train(net: &mut DetNet, ds: &MimoDataset, cfg: &TrainConfig) -> Result<Vec<f64>> {
    if ds.n_users != net.n_users || ds.n_rx != net.n_rx {
        return Err(Error::Dim("detnet_train: dataset shape mismatch".into()));
    }
    let shell = net.clone();
    let targets: Vec<Vec<f64>> = (0..ds.n_samples)
        .map(|t| {
            ds.sym_row(t)
                .iter()
                .map(|&i| if i == 1 { 1.0 } else { -1.0 })
                .collect()
        })
        .collect();
    let trace = train(&mut net.params, ds.n_samples, cfg, |g, ps, idx| {
        shell.build_loss(g, ps, ds.obs_row(idx), &targets[idx])
    })?;
    Ok(trace)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channels::{build_spatial_h, gen_mimo_dataset, Constellation, MimoChannelSpec, MimoKind};
    use crate::mimo::default_pg_step;
    use crate::numkit::RngStream;

    #[test]
    fn forward_emits_one_estimate_per_layer() {
        let h = build_spatial_h(3, 3);
        let net = detnet_build(&h, &DetNetConfig::desk(3), 1).unwrap();
        let outs = net.forward(&[0.3, -0.8, 0.1]);
        assert_eq!(outs.len(), 20);
        assert_eq!(outs[0].len(), 3);
    }

    #[test]
    fn zero_projection_layers_tie_break_to_minus_one() {
        let h = build_spatial_h(2, 2);
        let cfg = DetNetConfig {
            layers: 3,
            hidden: 4,
            log_offset_one: false,
        };
        let mut net = detnet_build(&h, &cfg, 2).unwrap();
        for q in 0..3 {
            net.set_layer(
                q,
                Mat::zeros(4, 2),
                vec![0.0; 4],
                Mat::zeros(2, 4),
                vec![0.0; 2],
                0.0,
                0.0,
            )
            .unwrap();
        }
        assert_eq!(net.detect(&[0.5, -0.5]), vec![0, 0]);
    }

    #[test]
    fn one_layer_emulates_a_projected_gradient_step() {
        // stack [I; −I] before the ReLU and recombine with a large gain:
        // softsign(G(z⁺ − z⁻)) → sign(inner), one exact PG step
        let h = build_spatial_h(3, 3);
        let eta = default_pg_step(&h);
        let cfg = DetNetConfig {
            layers: 1,
            hidden: 6,
            log_offset_one: false,
        };
        let mut net = detnet_build(&h, &cfg, 3).unwrap();
        let mut w1 = Mat::zeros(6, 3);
        for i in 0..3 {
            w1.set(i, i, 1.0);
            w1.set(3 + i, i, -1.0);
        }
        let gain = 1e9;
        let mut w2 = Mat::zeros(3, 6);
        for i in 0..3 {
            w2.set(i, i, gain);
            w2.set(i, 3 + i, -gain);
        }
        // δ1 = δ2 = −η makes the inner stage ŝ0 + ηHᵀy − ηHᵀHŝ0, the
        // descent step on ‖y − Hs‖²/2
        net.set_layer(0, w1, vec![0.0; 6], w2, vec![0.0; 3], -eta, -eta)
            .unwrap();
        let mut rng = RngStream::new(4, 0);
        for _ in 0..50 {
            let y: Vec<f64> = (0..3).map(|_| rng.gaussian() * 2.0).collect();
            let hty = h.matvec_t(&y);
            let expect: Vec<f64> = hty.iter().map(|&v| (eta * v).signum()).collect();
            let got = net.forward(&y).pop().unwrap();
            for (g, e) in got.iter().zip(&expect) {
                assert!((g - e).abs() < 1e-3, "{g} vs {e}");
            }
        }
    }

    #[test]
    fn q1_literal_log_weight_means_no_training_signal() {
        let h = build_spatial_h(2, 2);
        let cfg = DetNetConfig {
            layers: 1,
            hidden: 8,
            log_offset_one: false,
        };
        let spec = MimoChannelSpec::new(MimoKind::Gaussian, h.clone(), 0.1, Constellation::bpsk())
            .unwrap();
        let mut rng = RngStream::new(5, 0);
        let ds = gen_mimo_dataset(&spec, 64, &mut rng).unwrap();
        let mut net = detnet_build(&h, &cfg, 6).unwrap();
        let before = net.params.flat();
        let trace = detnet_train(&mut net, &ds, &TrainConfig::default().with_epochs(3)).unwrap();
        assert_eq!(net.params.flat(), before);
        assert!(trace.iter().all(|&l| l == 0.0));
        // with the log(q+1) switch the same setup does train
        let cfg2 = DetNetConfig {
            log_offset_one: true,
            ..cfg
        };
        let mut net2 = detnet_build(&h, &cfg2, 6).unwrap();
        let before2 = net2.params.flat();
        detnet_train(&mut net2, &ds, &TrainConfig::default().with_epochs(3)).unwrap();
        assert_ne!(net2.params.flat(), before2);
    }

    #[test]
    fn training_loss_decreases() {
        let h = build_spatial_h(2, 2);
        let spec = MimoChannelSpec::new(MimoKind::Gaussian, h.clone(), 0.05, Constellation::bpsk())
            .unwrap();
        let mut rng = RngStream::new(8, 0);
        let ds = gen_mimo_dataset(&spec, 800, &mut rng).unwrap();
        let cfg = DetNetConfig {
            layers: 6,
            hidden: 8,
            log_offset_one: false,
        };
        let mut net = detnet_build(&h, &cfg, 9).unwrap();
        let trace =
            detnet_train(&mut net, &ds, &TrainConfig::default().with_epochs(25).with_seed(2))
                .unwrap();
        let avg = |w: &[f64]| w.iter().sum::<f64>() / w.len() as f64;
        assert!(
            avg(&trace[trace.len() - 5..]) < avg(&trace[..5]),
            "trace {trace:?}"
        );
    }

    #[test]
    fn forward_is_deterministic_in_inputs() {
        let h = build_spatial_h(4, 4);
        let net = detnet_build(&h, &DetNetConfig::desk(4), 10).unwrap();
        let y = [0.4, -0.2, 0.9, -1.4];
        assert_eq!(net.forward(&y), net.forward(&y));
    }

    #[test]
    fn trained_detnet_beats_plain_projected_gradient() {
        // a correlated 2×2 channel: the sign projection makes plain PG
        // misconverge on a visible fraction of vectors, which the
        // trained unfolding overcomes
        let h = Mat::from_vec(2, 2, vec![1.0, 0.6, 0.6, 1.0]).unwrap();
        let noise_var = 10f64.powf(-1.0);
        let spec =
            MimoChannelSpec::new(MimoKind::Gaussian, h.clone(), noise_var, Constellation::bpsk())
                .unwrap();
        let mut rng = RngStream::new(11, 0);
        let ds = gen_mimo_dataset(&spec, 3000, &mut rng).unwrap();
        let cfg = DetNetConfig {
            layers: 10,
            hidden: 8,
            log_offset_one: false,
        };
        let mut net = detnet_build(&h, &cfg, 12).unwrap();
        detnet_train(
            &mut net,
            &ds,
            &TrainConfig::default().with_epochs(40).with_seed(3),
        )
        .unwrap();
        let eta = default_pg_step(&h);
        let etas = vec![eta; 10];
        let trials = 20_000;
        let (mut err_net, mut err_pg) = (0u64, 0u64);
        for _ in 0..trials {
            let s = [rng.index(2), rng.index(2)];
            let y = spec.sample(&s, &mut rng).unwrap();
            let d_net = net.detect(&y);
            let d_pg = crate::mimo::projected_gradient_detect(&y, &h, &etas, &[0.0, 0.0]);
            err_net += d_net.iter().zip(&s).filter(|(a, b)| a != b).count() as u64;
            err_pg += d_pg.iter().zip(&s).filter(|(a, b)| a != b).count() as u64;
        }
        assert!(err_net < err_pg, "detnet {err_net} vs pg {err_pg}");
    }
}
