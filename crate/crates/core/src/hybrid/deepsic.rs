//! DeepSIC: iterative soft interference cancellation with the per-user
//! cancellation/decoding pair replaced by compact classifier networks.
//!
//! The receiver is a K×Q grid of blocks. Block (k, q) sees the channel
//! output concatenated with the other users' soft estimates from round
//! q−1, encoded as M−1 probabilities per interferer (the redundant last
//! entry is dropped, giving the N+K−1 input width at M = 2), and emits
//! a distribution over the constellation. Initial estimates are uniform.

use crate::channels::{Constellation, MimoDataset};
use crate::error::Error;
use crate::neural::{train, Activation, Graph, Mlp, NodeId, ParamStore, TrainConfig};
use crate::numkit::{softmax, PmfVec};
use crate::Result;

/// Which per-block architecture the net was built with.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DeepSicArch {
    /// Compact two-layer blocks, (N+K−1)×60 → ReLU → 60×M; suited to
    /// joint end-to-end training.
    EndToEnd,
    /// Deeper three-layer blocks, (N+K−1)×100 → sigmoid → 100×50 →
    /// ReLU → 50×M; suited to sequential training.
    Sequential,
}

/// DeepSIC structural configuration.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct DeepSicConfig {
    /// Rounds Q.
    pub iterations: usize,
    pub arch: DeepSicArch,
    /// Hidden width of the end-to-end block.
    pub e2e_hidden: usize,
    /// Hidden widths of the sequential block.
    pub seq_hidden: Vec<usize>,
}

impl DeepSicConfig {
    pub fn end_to_end() -> Self {
        DeepSicConfig {
            iterations: 5,
            arch: DeepSicArch::EndToEnd,
            e2e_hidden: 60,
            seq_hidden: vec![100, 50],
        }
    }

    pub fn sequential() -> Self {
        DeepSicConfig {
            arch: DeepSicArch::Sequential,
            ..DeepSicConfig::end_to_end()
        }
    }
}

/// A trained DeepSIC receiver: K·Q classifier blocks plus metadata.
#[derive(Debug, Clone)]
pub struct DeepSicNet {
    pub n_rx: usize,
    pub n_users: usize,
    pub config: DeepSicConfig,
    /// Blocks in round-major order: `blocks[q * n_users + k]`.
    pub blocks: Vec<Mlp>,
    pub params: ParamStore,
    pub constellation: Constellation,
}

impl DeepSicNet {
    /// Untrained net with seed-derived initialization.
    pub fn build(
        n_rx: usize,
        n_users: usize,
        constellation: &Constellation,
        config: &DeepSicConfig,
        seed: u64,
    ) -> Result<Self> {
        if config.iterations < 1 || n_users < 1 || n_rx < 1 {
            return Err(Error::Domain("deepsic: degenerate dimensions".into()));
        }
        let m = constellation.size();
        let in_dim = n_rx + (n_users - 1) * (m - 1);
        let mut params = ParamStore::new(seed);
        let mut blocks = Vec::with_capacity(config.iterations * n_users);
        for q in 0..config.iterations {
            for k in 0..n_users {
                let prefix = format!("q{q}.k{k}");
                let mlp = match config.arch {
                    DeepSicArch::EndToEnd => Mlp::new(
                        &mut params,
                        &prefix,
                        &[in_dim, config.e2e_hidden, m],
                        &[Activation::Relu, Activation::Identity],
                    ),
                    DeepSicArch::Sequential => {
                        let mut dims = vec![in_dim];
                        dims.extend_from_slice(&config.seq_hidden);
                        dims.push(m);
                        let mut acts = vec![Activation::Sigmoid];
                        for _ in 1..config.seq_hidden.len() {
                            acts.push(Activation::Relu);
                        }
                        acts.push(Activation::Identity);
                        Mlp::new(&mut params, &prefix, &dims, &acts)
                    }
                };
                blocks.push(mlp);
            }
        }
        Ok(DeepSicNet {
            n_rx,
            n_users,
            config: config.clone(),
            blocks,
            params,
            constellation: constellation.clone(),
        })
    }

    pub fn block(&self, q: usize, k: usize) -> &Mlp {
        &self.blocks[q * self.n_users + k]
    }

    fn block_input(&self, y: &[f64], priors: &[Vec<f64>], k: usize) -> Vec<f64> {
        let m = self.constellation.size();
        let mut input = Vec::with_capacity(self.n_rx + (self.n_users - 1) * (m - 1));
        input.extend_from_slice(y);
        for (l, p) in priors.iter().enumerate() {
            if l == k {
                continue;
            }
            input.extend_from_slice(&p[..m - 1]);
        }
        input
    }

    /// Soft estimates after `rounds` forward rounds (0 returns the
    /// uniform prior).
    pub fn soft_estimates(&self, y: &[f64], rounds: usize) -> Vec<Vec<f64>> {
        let m = self.constellation.size();
        let mut priors = vec![vec![1.0 / m as f64; m]; self.n_users];
        for q in 0..rounds {
            let mut next = Vec::with_capacity(self.n_users);
            for k in 0..self.n_users {
                let input = self.block_input(y, &priors, k);
                let logits = self.block(q, k).infer(&self.params, &input);
                next.push(softmax(&logits).as_slice().to_vec());
            }
            priors = next;
        }
        priors
    }

    /// Full detection: hard decisions plus the soft-estimate history
    /// (Q+1 entries including the uniform prior).
    pub fn detect(&self, y: &[f64]) -> (Vec<usize>, Vec<Vec<PmfVec>>) {
        let m = self.constellation.size();
        let q_rounds = self.config.iterations;
        let mut history: Vec<Vec<PmfVec>> = Vec::with_capacity(q_rounds + 1);
        history.push(vec![PmfVec::uniform(m); self.n_users]);
        let mut priors = vec![vec![1.0 / m as f64; m]; self.n_users];
        for q in 0..q_rounds {
            let mut next = Vec::with_capacity(self.n_users);
            for k in 0..self.n_users {
                let input = self.block_input(y, &priors, k);
                let logits = self.block(q, k).infer(&self.params, &input);
                next.push(softmax(&logits).as_slice().to_vec());
            }
            priors = next;
            history.push(
                priors
                    .iter()
                    .map(|p| PmfVec::new(p.clone()).expect("softmax output"))
                    .collect(),
            );
        }
        let hard = history.last().unwrap().iter().map(|p| p.argmax()).collect();
        (hard, history)
    }
}

/// Record the full K×Q interconnection for one sample and return the sum
/// cross entropy over users at the final round.
fn build_e2e_loss(
    blocks: &[Mlp],
    n_users: usize,
    m: usize,
    q_rounds: usize,
    g: &mut Graph,
    ps: &ParamStore,
    y: &[f64],
    labels: &[usize],
) -> Result<NodeId> {
    let y_node = g.input(y.to_vec());
    let mut priors: Vec<NodeId> = (0..n_users)
        .map(|_| g.input(vec![1.0 / m as f64; m]))
        .collect();
    let mut loss: Option<NodeId> = None;
    for q in 0..q_rounds {
        let mut next = Vec::with_capacity(n_users);
        for k in 0..n_users {
            let mut parts = vec![y_node];
            for (l, &p) in priors.iter().enumerate() {
                if l == k {
                    continue;
                }
                parts.push(g.slice(p, 0, m - 1));
            }
            let input = g.concat(&parts);
            let logits = blocks[q * n_users + k].forward(g, ps, input)?;
            if q + 1 == q_rounds {
                let ce = g.cross_entropy_logits(logits, labels[k]);
                loss = Some(match loss {
                    Some(acc) => g.add(acc, ce),
                    None => ce,
                });
            }
            next.push(g.softmax(logits));
        }
        priors = next;
    }
    Ok(loss.expect("at least one round"))
}

/// End-to-end training: all K·Q blocks updated jointly against the sum
/// cross entropy of the final round's estimates.
pub fn deepsic_train_e2e(
    ds: &MimoDataset,
    constellation: &Constellation,
    config: &DeepSicConfig,
    cfg: &TrainConfig,
) -> Result<(DeepSicNet, Vec<f64>)> {
    let mut net = DeepSicNet::build(ds.n_rx, ds.n_users, constellation, config, cfg.seed)?;
    let blocks = net.blocks.clone();
    let (n_users, m, q_rounds) = (net.n_users, constellation.size(), config.iterations);
    let trace = train(&mut net.params, ds.n_samples, cfg, |g, ps, idx| {
        build_e2e_loss(
            &blocks,
            n_users,
            m,
            q_rounds,
            g,
            ps,
            ds.obs_row(idx),
            ds.sym_row(idx),
        )
    })?;
    Ok((net, trace))
}

/// Sequential training: round q's blocks are trained against the soft
/// estimates produced by the already-trained rounds 1..q−1 on the same
/// dataset; each block's parameters are touched by exactly one training
/// run.
pub fn deepsic_train_seq(
    ds: &MimoDataset,
    constellation: &Constellation,
    config: &DeepSicConfig,
    cfg: &TrainConfig,
) -> Result<(DeepSicNet, Vec<Vec<f64>>)> {
    let mut net = DeepSicNet::build(ds.n_rx, ds.n_users, constellation, config, cfg.seed)?;
    let m = constellation.size();
    // soft estimates fed into the round being trained; starts uniform
    let mut priors: Vec<Vec<Vec<f64>>> =
        vec![vec![vec![1.0 / m as f64; m]; net.n_users]; ds.n_samples];
    let mut traces = Vec::new();
    for q in 0..config.iterations {
        for k in 0..net.n_users {
            let inputs: Vec<Vec<f64>> = (0..ds.n_samples)
                .map(|t| net.block_input(ds.obs_row(t), &priors[t], k))
                .collect();
            let mlp = net.block(q, k).clone();
            let block_cfg = TrainConfig {
                seed: crate::numkit::derive_stream(&[cfg.seed, q as u64, k as u64]),
                ..cfg.clone()
            };
            let trace = train(&mut net.params, ds.n_samples, &block_cfg, |g, ps, idx| {
                let x = g.input(inputs[idx].clone());
                let logits = mlp.forward(g, ps, x)?;
                Ok(g.cross_entropy_logits(logits, ds.sym_row(idx)[k]))
            })?;
            traces.push(trace);
        }
        // advance the training-set soft estimates through the round just
        // trained; these become round q+1's inputs
        for (t, prior) in priors.iter_mut().enumerate() {
            let mut next = Vec::with_capacity(net.n_users);
            for k in 0..net.n_users {
                let input = net.block_input(ds.obs_row(t), prior, k);
                let logits = net.block(q, k).infer(&net.params, &input);
                next.push(softmax(&logits).as_slice().to_vec());
            }
            *prior = next;
        }
    }
    Ok((net, traces))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channels::{build_spatial_h, gen_mimo_dataset, MimoChannelSpec, MimoKind};
    use crate::mimo::mimo_map_bruteforce;
    use crate::numkit::RngStream;

    fn spec(n: usize, k: usize, noise_var: f64) -> MimoChannelSpec {
        MimoChannelSpec::new(
            MimoKind::Gaussian,
            build_spatial_h(n, k),
            noise_var,
            Constellation::bpsk(),
        )
        .unwrap()
    }

    #[test]
    fn block_count_and_input_width() {
        let cons = Constellation::bpsk();
        let cfg = DeepSicConfig::end_to_end();
        let net = DeepSicNet::build(6, 6, &cons, &cfg, 1).unwrap();
        assert_eq!(net.blocks.len(), 30); // K·Q
        assert_eq!(net.blocks[0].in_dim, 6 + 5); // N + K − 1 at M = 2
    }

    #[test]
    fn history_has_q_plus_one_entries_with_uniform_prior() {
        let cons = Constellation::bpsk();
        let cfg = DeepSicConfig::end_to_end();
        let net = DeepSicNet::build(3, 3, &cons, &cfg, 2).unwrap();
        let (_, history) = net.detect(&[0.1, -0.2, 0.5]);
        assert_eq!(history.len(), 6);
        for p in &history[0] {
            assert_eq!(p.as_slice(), &[0.5, 0.5]);
        }
        for round in &history {
            for p in round {
                assert!((p.as_slice().iter().sum::<f64>() - 1.0).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn uniform_blocks_tie_break_to_lowest_symbol() {
        let cons = Constellation::bpsk();
        let cfg = DeepSicConfig::end_to_end();
        let mut net = DeepSicNet::build(2, 2, &cons, &cfg, 3).unwrap();
        // zero every parameter: all logits 0, all estimates uniform
        let zeros = vec![0.0; net.params.n_scalars()];
        net.params.set_flat(&zeros).unwrap();
        let (hard, _) = net.detect(&[0.4, -0.9]);
        assert_eq!(hard, vec![0, 0]);
    }

    #[test]
    fn zero_learning_rate_is_a_no_op_for_both_trainers() {
        let cons = Constellation::bpsk();
        let ch = spec(2, 2, 0.2);
        let mut rng = RngStream::new(5, 0);
        let ds = gen_mimo_dataset(&ch, 64, &mut rng).unwrap();
        let tcfg = TrainConfig::default()
            .with_epochs(2)
            .with_learning_rate(0.0)
            .with_seed(4);
        let (net, _) = deepsic_train_e2e(&ds, &cons, &DeepSicConfig::end_to_end(), &tcfg).unwrap();
        let fresh = DeepSicNet::build(2, 2, &cons, &DeepSicConfig::end_to_end(), 4).unwrap();
        assert_eq!(net.params.flat(), fresh.params.flat());
        let (net_s, _) =
            deepsic_train_seq(&ds, &cons, &DeepSicConfig::sequential(), &tcfg).unwrap();
        let fresh_s = DeepSicNet::build(2, 2, &cons, &DeepSicConfig::sequential(), 4).unwrap();
        assert_eq!(net_s.params.flat(), fresh_s.params.flat());
    }

    #[test]
    fn e2e_loss_trace_decreases_with_moving_average() {
        let cons = Constellation::bpsk();
        let ch = spec(3, 3, 0.15);
        let mut rng = RngStream::new(6, 0);
        let ds = gen_mimo_dataset(&ch, 600, &mut rng).unwrap();
        let tcfg = TrainConfig::default().with_epochs(20).with_seed(8);
        let (_, trace) = deepsic_train_e2e(&ds, &cons, &DeepSicConfig::end_to_end(), &tcfg).unwrap();
        let avg = |w: &[f64]| w.iter().sum::<f64>() / w.len() as f64;
        assert!(
            avg(&trace[trace.len() - 5..]) < avg(&trace[..5]),
            "trace {trace:?}"
        );
    }

    #[test]
    fn sequential_q1_matches_independent_classifier_training() {
        // with Q = 1 sequential training is exactly independent per-user
        // training on uniform priors
        let cons = Constellation::bpsk();
        let ch = spec(2, 2, 0.2);
        let mut rng = RngStream::new(9, 0);
        let ds = gen_mimo_dataset(&ch, 128, &mut rng).unwrap();
        let config = DeepSicConfig {
            iterations: 1,
            ..DeepSicConfig::sequential()
        };
        let tcfg = TrainConfig::default().with_epochs(5).with_seed(31);
        let (net, traces) = deepsic_train_seq(&ds, &cons, &config, &tcfg).unwrap();
        assert_eq!(traces.len(), 2); // one trace per block
        // reproduce block (0,1) training by hand
        let mut reference = DeepSicNet::build(2, 2, &cons, &config, 31).unwrap();
        let uniform = vec![vec![0.5, 0.5]; 2];
        let inputs: Vec<Vec<f64>> = (0..ds.n_samples)
            .map(|t| reference.block_input(ds.obs_row(t), &uniform, 1))
            .collect();
        let mlp = reference.block(0, 1).clone();
        let block_cfg = TrainConfig {
            seed: crate::numkit::derive_stream(&[31, 0, 1]),
            ..tcfg.clone()
        };
        train(&mut reference.params, ds.n_samples, &block_cfg, |g, ps, idx| {
            let x = g.input(inputs[idx].clone());
            let logits = mlp.forward(g, ps, x)?;
            Ok(g.cross_entropy_logits(logits, ds.sym_row(idx)[1]))
        })
        .unwrap();
        for (pid, (name, val)) in reference.params.iter().enumerate() {
            if name.starts_with("q0.k1") {
                assert_eq!(val, net.params.value(pid), "{name}");
            }
        }
    }

    #[test]
    fn sequential_feeds_previous_rounds_outputs() {
        // the estimates fed to round q are the trained rounds' outputs on
        // the training inputs; recomputing them after training matches
        let cons = Constellation::bpsk();
        let ch = spec(2, 2, 0.3);
        let mut rng = RngStream::new(12, 0);
        let ds = gen_mimo_dataset(&ch, 64, &mut rng).unwrap();
        let config = DeepSicConfig {
            iterations: 2,
            ..DeepSicConfig::sequential()
        };
        let tcfg = TrainConfig::default().with_epochs(3).with_seed(7);
        let (net, _) = deepsic_train_seq(&ds, &cons, &config, &tcfg).unwrap();
        // round-0 blocks were frozen after their training, so their
        // current outputs are exactly what round 1 consumed
        for t in 0..ds.n_samples {
            let p1 = net.soft_estimates(ds.obs_row(t), 1);
            for p in &p1 {
                assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn sequential_training_freezes_earlier_rounds() {
        // sequential training touches each block's parameters exactly
        // once: the round-0 blocks of a Q=2 run end identical to a Q=1
        // run with the same seeds
        let cons = Constellation::bpsk();
        let ch = spec(2, 2, 0.25);
        let mut rng = RngStream::new(77, 0);
        let ds = gen_mimo_dataset(&ch, 96, &mut rng).unwrap();
        let tcfg = TrainConfig::default().with_epochs(4).with_seed(21);
        let cfg_q1 = DeepSicConfig {
            iterations: 1,
            ..DeepSicConfig::sequential()
        };
        let cfg_q2 = DeepSicConfig {
            iterations: 2,
            ..DeepSicConfig::sequential()
        };
        let (net1, _) = deepsic_train_seq(&ds, &cons, &cfg_q1, &tcfg).unwrap();
        let (net2, _) = deepsic_train_seq(&ds, &cons, &cfg_q2, &tcfg).unwrap();
        for (pid, (name, val)) in net1.params.iter().enumerate() {
            assert_eq!(val, net2.params.value(pid), "{name} changed after round 0");
        }
    }

    #[test]
    fn single_user_net_tracks_exact_map() {
        // K = 1: blocks see only y; the trained posterior approaches the
        // exact single-user posterior and decisions match MAP
        let cons = Constellation::bpsk();
        let ch = spec(2, 1, 10f64.powf(-1.0));
        let mut rng = RngStream::new(14, 0);
        let ds = gen_mimo_dataset(&ch, 2000, &mut rng).unwrap();
        let config = DeepSicConfig::end_to_end();
        let tcfg = TrainConfig::default().with_epochs(60).with_seed(3);
        let (net, _) = deepsic_train_e2e(&ds, &cons, &config, &tcfg).unwrap();
        let mut agree = 0;
        let trials = 10_000;
        let mut ce_net = 0.0;
        let mut ce_oracle = 0.0;
        for _ in 0..trials {
            let s = [rng.index(2)];
            let y = ch.sample(&s, &mut rng).unwrap();
            let (hard, history) = net.detect(&y);
            let (map_s, marg) = mimo_map_bruteforce(&y, &ch).unwrap();
            if hard == map_s {
                agree += 1;
            }
            let p_net = history.last().unwrap()[0].get(s[0]).max(1e-12);
            let p_map = marg[0].get(s[0]).max(1e-12);
            ce_net -= p_net.ln();
            ce_oracle -= p_map.ln();
        }
        assert!(
            agree as f64 / trials as f64 >= 0.98,
            "agreement {agree}/{trials}"
        );
        let gap = (ce_net - ce_oracle) / trials as f64;
        assert!(gap < 0.05, "cross-entropy gap {gap}");
    }
}
