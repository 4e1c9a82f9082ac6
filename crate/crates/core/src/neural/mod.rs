//! Minimal differentiable-computation core sized for compact detector
//! networks: dense and recurrent blocks, softmax and mixture-density
//! heads, exact reverse-mode gradients, and an Adam training loop.

pub mod blocks;
pub mod fdcheck;
mod graph;
mod mdn;
mod params;
mod train;

pub use blocks::{Activation, BiLstmStack, DenseLayer, LstmCell, Mlp};
pub use graph::{Graph, NodeId};
pub use mdn::{mdn_nll, MdnTable, MixtureParams};
pub use params::{ParamId, ParamStore};
pub use train::{clip_global_norm, train, Adam, TrainConfig};

use crate::numkit::PmfVec;

/// Cross entropy −log p[label] of an already-normalized prediction.
///
/// A zero probability at the label is clamped to 1e-300; the returned
/// flag reports that the clamp fired.
pub fn cross_entropy(predicted: &PmfVec, label: usize) -> (f64, bool) {
    let p = predicted.get(label);
    if p <= 0.0 {
        (-(1e-300f64).ln(), true)
    } else {
        (-p.ln(), false)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numkit::RngStream;
    use crate::Result;

    #[test]
    fn cross_entropy_examples() {
        let (v, clamped) = cross_entropy(&PmfVec::delta(3, 1), 1);
        assert_eq!((v, clamped), (0.0, false));
        let (v, _) = cross_entropy(&PmfVec::uniform(4), 2);
        assert!((v - 4.0f64.ln()).abs() < 1e-15);
        let (v, _) = cross_entropy(&PmfVec::new(vec![0.25, 0.75]).unwrap(), 1);
        assert!((v + 0.75f64.ln()).abs() < 1e-15);
        let (v, clamped) = cross_entropy(&PmfVec::delta(2, 0), 1);
        assert!(clamped && v > 600.0);
    }

    /// Nudge values away from ReLU kinks so central differences are valid.
    fn smooth(v: f64) -> f64 {
        if v.abs() < 5e-3 {
            5e-3
        } else {
            v
        }
    }

    #[test]
    fn every_block_passes_finite_difference_check() {
        let mut rng = RngStream::new(1234, 0);
        type Builder = Box<dyn FnMut(&mut Graph, &ParamStore) -> Result<NodeId>>;
        // each case: set up params, return a loss builder over them
        let cases: Vec<(&str, Box<dyn FnOnce(&mut ParamStore, &mut RngStream) -> Builder>)> = vec![
            (
                "affine",
                Box::new(|ps, rng| {
                    let w = ps.add_dense("w", 4, 3);
                    let b = ps.add_zeros("b", 4, 1);
                    let x: Vec<f64> = (0..3).map(|_| rng.gaussian()).collect();
                    Box::new(move |g, ps| {
                        let xi = g.input(x.clone());
                        let y = g.affine(ps, w, Some(b), xi)?;
                        Ok(g.dot(y, y))
                    })
                }),
            ),
            (
                "relu",
                Box::new(|ps, rng| {
                    let w = ps.add_dense("w", 5, 2);
                    let x: Vec<f64> = (0..2).map(|_| smooth(rng.gaussian())).collect();
                    Box::new(move |g, ps| {
                        let xi = g.input(x.clone());
                        let y = g.affine(ps, w, None, xi)?;
                        let r = g.relu(y);
                        Ok(g.sum(r))
                    })
                }),
            ),
            (
                "sigmoid_tanh_softsign_softplus",
                Box::new(|ps, rng| {
                    let w = ps.add_dense("w", 4, 4);
                    let x: Vec<f64> = (0..4).map(|_| rng.gaussian()).collect();
                    Box::new(move |g, ps| {
                        let xi = g.input(x.clone());
                        let a = g.affine(ps, w, None, xi)?;
                        let s = g.sigmoid(a);
                        let t = g.tanh(s);
                        let ss = g.softsign(t);
                        let sp = g.softplus(ss);
                        Ok(g.sum(sp))
                    })
                }),
            ),
            (
                "softmax_mul_dot",
                Box::new(|ps, rng| {
                    let w = ps.add_dense("w", 3, 3);
                    let x: Vec<f64> = (0..3).map(|_| rng.gaussian()).collect();
                    let target: Vec<f64> = (0..3).map(|_| rng.uniform()).collect();
                    Box::new(move |g, ps| {
                        let xi = g.input(x.clone());
                        let a = g.affine(ps, w, None, xi)?;
                        let p = g.softmax(a);
                        let t = g.input(target.clone());
                        let m = g.mul(p, t);
                        Ok(g.sum(m))
                    })
                }),
            ),
            (
                "log_softmax_slice_concat",
                Box::new(|ps, rng| {
                    let w1 = ps.add_dense("w1", 3, 2);
                    let w2 = ps.add_dense("w2", 3, 2);
                    let x: Vec<f64> = (0..2).map(|_| rng.gaussian()).collect();
                    Box::new(move |g, ps| {
                        let xi = g.input(x.clone());
                        let a = g.affine(ps, w1, None, xi)?;
                        let b = g.affine(ps, w2, None, xi)?;
                        let cat = g.concat(&[a, b]);
                        let ls = g.log_softmax(cat);
                        let sl = g.slice(ls, 1, 3);
                        Ok(g.sum(sl))
                    })
                }),
            ),
            (
                "cross_entropy_logits",
                Box::new(|ps, rng| {
                    let w = ps.add_dense("w", 4, 3);
                    let b = ps.add_zeros("b", 4, 1);
                    let x: Vec<f64> = (0..3).map(|_| rng.gaussian()).collect();
                    Box::new(move |g, ps| {
                        let xi = g.input(x.clone());
                        let logits = g.affine(ps, w, Some(b), xi)?;
                        Ok(g.cross_entropy_logits(logits, 2))
                    })
                }),
            ),
            (
                "scale_by_param_const_matvec",
                Box::new(|ps, rng| {
                    let s = ps.add_scalar("s", 0.7);
                    let w = ps.add_dense("w", 3, 3);
                    let m = crate::numkit::Mat::from_fn(3, 3, |_, _| rng.gaussian());
                    let x: Vec<f64> = (0..3).map(|_| rng.gaussian()).collect();
                    Box::new(move |g, ps| {
                        let xi = g.input(x.clone());
                        let a = g.affine(ps, w, None, xi)?;
                        let sm = g.const_matvec(m.clone(), a)?;
                        let sc = g.scale_by_param(ps, s, sm);
                        let e = g.exp(sc);
                        let l = g.ln(e);
                        Ok(g.dot(l, l))
                    })
                }),
            ),
            (
                "mdn_nll",
                Box::new(|ps, _| {
                    let table = MdnTable::new(ps, "mdn", 2, 3);
                    Box::new(move |g, ps| table.build_nll(g, ps, 1, 0.42))
                }),
            ),
            (
                "lstm_cell",
                Box::new(|ps, rng| {
                    let cell = LstmCell::new(ps, "cell", 2, 3);
                    let x: Vec<f64> = (0..2).map(|_| rng.gaussian()).collect();
                    Box::new(move |g, ps| {
                        let xi = g.input(x.clone());
                        let h0 = g.input(vec![0.0; 3]);
                        let c0 = g.input(vec![0.0; 3]);
                        let (h, _) = cell.step(g, ps, xi, h0, c0)?;
                        Ok(g.dot(h, h))
                    })
                }),
            ),
        ];
        for (name, setup) in cases {
            let mut ps = ParamStore::new(rng.next_u64());
            let mut builder = setup(&mut ps, &mut rng);
            let err = fdcheck::check_gradients(&mut ps, 1e-5, &mut builder).unwrap();
            assert!(err < 1e-4, "{name}: max rel err {err:.2e}");
        }
    }

    #[test]
    fn unrolled_lstm_gradient_matches_finite_differences() {
        let mut ps = ParamStore::new(5150);
        let cell = LstmCell::new(&mut ps, "cell", 1, 3);
        let head = ps.add_dense("head", 1, 3);
        let xs = [0.5, -1.0, 0.25, 0.9, -0.3];
        let mut builder = move |g: &mut Graph, ps: &ParamStore| -> Result<NodeId> {
            let mut h = g.input(vec![0.0; 3]);
            let mut c = g.input(vec![0.0; 3]);
            for &x in &xs {
                let xi = g.input(vec![x]);
                let (h2, c2) = cell.step(g, ps, xi, h, c)?;
                h = h2;
                c = c2;
            }
            let out = g.affine(ps, head, None, h)?;
            Ok(g.dot(out, out))
        };
        let err = fdcheck::check_gradients(&mut ps, 1e-5, &mut builder).unwrap();
        assert!(err < 1e-4, "max rel err {err:.2e}");
    }

    #[test]
    fn randomly_composed_graphs_pass_gradient_check() {
        // three random compositions of depth ≤ 6 over the primitive set
        for seed in [11u64, 22, 33] {
            let mut rng = RngStream::new(seed, 0);
            let mut ps = ParamStore::new(seed);
            let dim = 3;
            let depth = 2 + rng.index(5);
            let ops: Vec<usize> = (0..depth).map(|_| rng.index(6)).collect();
            let ws: Vec<ParamId> = (0..depth)
                .map(|l| ps.add_dense(&format!("w{l}"), dim, dim))
                .collect();
            let x: Vec<f64> = (0..dim).map(|_| smooth(rng.gaussian())).collect();
            let mut builder = move |g: &mut Graph, ps: &ParamStore| -> Result<NodeId> {
                let mut h = g.input(x.clone());
                for (l, &op) in ops.iter().enumerate() {
                    h = g.affine(ps, ws[l], None, h)?;
                    h = match op {
                        0 => g.relu(h),
                        1 => g.sigmoid(h),
                        2 => g.tanh(h),
                        3 => g.softsign(h),
                        4 => g.softmax(h),
                        _ => g.softplus(h),
                    };
                }
                Ok(g.dot(h, h))
            };
            let err = fdcheck::check_gradients(&mut ps, 1e-5, &mut builder).unwrap();
            assert!(err < 1e-4, "seed {seed}: max rel err {err:.2e}");
        }
    }

    #[test]
    fn softmax_head_sums_to_one_after_training_steps() {
        let mut ps = ParamStore::new(77);
        let mlp = Mlp::new(
            &mut ps,
            "net",
            &[2, 6, 3],
            &[Activation::Relu, Activation::Identity],
        );
        let mut rng = RngStream::new(7, 7);
        let xs: Vec<Vec<f64>> = (0..64).map(|_| vec![rng.gaussian(), rng.gaussian()]).collect();
        let labels: Vec<usize> = (0..64).map(|_| rng.index(3)).collect();
        let cfg = TrainConfig::default().with_epochs(5).with_seed(1);
        train(&mut ps, xs.len(), &cfg, |g, ps, idx| {
            let x = g.input(xs[idx].clone());
            let logits = mlp.forward(g, ps, x)?;
            Ok(g.cross_entropy_logits(logits, labels[idx]))
        })
        .unwrap();
        for x in &xs {
            let p = crate::numkit::softmax(&mlp.infer(&ps, x));
            assert!((p.as_slice().iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
    }
}
