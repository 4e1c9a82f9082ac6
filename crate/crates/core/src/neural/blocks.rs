//! Composable network blocks: dense stacks and gated recurrent cells.
//!
//! Each block exposes both a graph builder (training path, records the
//! tape) and a plain `infer` path that computes the same forward values
//! without recording; consistency between the two is covered by tests.

use super::graph::{Graph, NodeId};
use super::params::{ParamId, ParamStore};
use crate::numkit::RngStream;
use crate::Result;

/// Activation applied after a dense layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Identity,
    Relu,
    Sigmoid,
    Tanh,
    Softsign,
}

impl Activation {
    fn apply_graph(self, g: &mut Graph, x: NodeId) -> NodeId {
        match self {
            Activation::Identity => x,
            Activation::Relu => g.relu(x),
            Activation::Sigmoid => g.sigmoid(x),
            Activation::Tanh => g.tanh(x),
            Activation::Softsign => g.softsign(x),
        }
    }

    fn apply_scalar(self, v: f64) -> f64 {
        match self {
            Activation::Identity => v,
            Activation::Relu => v.max(0.0),
            Activation::Sigmoid => sigmoid(v),
            Activation::Tanh => v.tanh(),
            Activation::Softsign => v / (1.0 + v.abs()),
        }
    }
}

/// One dense layer: weights, bias, activation.
#[derive(Debug, Clone)]
pub struct DenseLayer {
    pub w: ParamId,
    pub b: ParamId,
    pub act: Activation,
}

/// A stack of dense layers. The final layer's activation is typically
/// `Identity`, leaving logits for a softmax or cross-entropy head.
#[derive(Debug, Clone)]
pub struct Mlp {
    pub layers: Vec<DenseLayer>,
    pub in_dim: usize,
    pub out_dim: usize,
}

impl Mlp {
    /// `dims` = [in, h1, .., out]; `acts` has one entry per layer.
    pub fn new(ps: &mut ParamStore, prefix: &str, dims: &[usize], acts: &[Activation]) -> Self {
        assert!(dims.len() >= 2 && acts.len() == dims.len() - 1);
        let mut layers = Vec::new();
        for l in 0..dims.len() - 1 {
            let w = ps.add_dense(&format!("{prefix}.w{l}"), dims[l + 1], dims[l]);
            let b = ps.add_zeros(&format!("{prefix}.b{l}"), dims[l + 1], 1);
            layers.push(DenseLayer {
                w,
                b,
                act: acts[l],
            });
        }
        Mlp {
            layers,
            in_dim: dims[0],
            out_dim: *dims.last().unwrap(),
        }
    }

    /// Record the forward pass on the tape; returns the output node.
    pub fn forward(&self, g: &mut Graph, ps: &ParamStore, x: NodeId) -> Result<NodeId> {
        let mut h = x;
        for layer in &self.layers {
            h = g.affine(ps, layer.w, Some(layer.b), h)?;
            h = layer.act.apply_graph(g, h);
        }
        Ok(h)
    }

    /// Plain forward pass without recording.
    pub fn infer(&self, ps: &ParamStore, x: &[f64]) -> Vec<f64> {
        let mut h = x.to_vec();
        for layer in &self.layers {
            let w = ps.value(layer.w);
            let b = ps.value(layer.b);
            let mut out = w.matvec(&h);
            for (o, bi) in out.iter_mut().zip(b.as_slice()) {
                *o = layer.act.apply_scalar(*o + bi);
            }
            h = out;
        }
        h
    }
}

/// LSTM cell with combined gate matrices (gate order: i, f, g, o).
#[derive(Debug, Clone)]
pub struct LstmCell {
    /// Input weights, 4H × in.
    pub w: ParamId,
    /// Recurrent weights, 4H × H.
    pub u: ParamId,
    /// Gate biases, 4H.
    pub b: ParamId,
    pub hidden: usize,
    pub in_dim: usize,
}

impl LstmCell {
    pub fn new(ps: &mut ParamStore, prefix: &str, in_dim: usize, hidden: usize) -> Self {
        LstmCell {
            w: ps.add_dense(&format!("{prefix}.w"), 4 * hidden, in_dim),
            u: ps.add_dense(&format!("{prefix}.u"), 4 * hidden, hidden),
            b: ps.add_zeros(&format!("{prefix}.b"), 4 * hidden, 1),
            hidden,
            in_dim,
        }
    }

    /// One recorded step: (h, c) → (h', c').
    pub fn step(
        &self,
        g: &mut Graph,
        ps: &ParamStore,
        x: NodeId,
        h: NodeId,
        c: NodeId,
    ) -> Result<(NodeId, NodeId)> {
        let wx = g.affine(ps, self.w, Some(self.b), x)?;
        let uh = g.affine(ps, self.u, None, h)?;
        let pre = g.add(wx, uh);
        let hsz = self.hidden;
        let i_gate = g.slice(pre, 0, hsz);
        let f_gate = g.slice(pre, hsz, hsz);
        let g_gate = g.slice(pre, 2 * hsz, hsz);
        let o_gate = g.slice(pre, 3 * hsz, hsz);
        let i_act = g.sigmoid(i_gate);
        let f_act = g.sigmoid(f_gate);
        let g_act = g.tanh(g_gate);
        let o_act = g.sigmoid(o_gate);
        let fc = g.mul(f_act, c);
        let ig = g.mul(i_act, g_act);
        let c_new = g.add(fc, ig);
        let c_tanh = g.tanh(c_new);
        let h_new = g.mul(o_act, c_tanh);
        Ok((h_new, c_new))
    }

    /// One plain step without recording.
    pub fn infer_step(&self, ps: &ParamStore, x: &[f64], h: &[f64], c: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let w = ps.value(self.w);
        let u = ps.value(self.u);
        let b = ps.value(self.b).as_slice();
        let mut pre = w.matvec(x);
        let uh = u.matvec(h);
        for ((p, uhi), bi) in pre.iter_mut().zip(&uh).zip(b) {
            *p += uhi + bi;
        }
        let hsz = self.hidden;
        let mut h_new = vec![0.0; hsz];
        let mut c_new = vec![0.0; hsz];
        for j in 0..hsz {
            let i_act = sigmoid(pre[j]);
            let f_act = sigmoid(pre[hsz + j]);
            let g_act = pre[2 * hsz + j].tanh();
            let o_act = sigmoid(pre[3 * hsz + j]);
            c_new[j] = f_act * c[j] + i_act * g_act;
            h_new[j] = o_act * c_new[j].tanh();
        }
        (h_new, c_new)
    }
}

/// A stack of bidirectional LSTM layers with inter-layer dropout.
///
/// Each layer runs one cell over the sequence forward and another over
/// the reversed sequence, concatenating the two hidden states per
/// position (so the layer output width is 2H). Dropout is inverted and
/// applied between layers during training only.
#[derive(Debug, Clone)]
pub struct BiLstmStack {
    pub layers: Vec<(LstmCell, LstmCell)>,
    pub hidden: usize,
    pub dropout: f64,
}

impl BiLstmStack {
    pub fn new(
        ps: &mut ParamStore,
        prefix: &str,
        in_dim: usize,
        hidden: usize,
        n_layers: usize,
        dropout: f64,
    ) -> Self {
        let mut layers = Vec::new();
        let mut dim = in_dim;
        for l in 0..n_layers {
            let fwd = LstmCell::new(ps, &format!("{prefix}.l{l}.fwd"), dim, hidden);
            let bwd = LstmCell::new(ps, &format!("{prefix}.l{l}.bwd"), dim, hidden);
            layers.push((fwd, bwd));
            dim = 2 * hidden;
        }
        BiLstmStack {
            layers,
            hidden,
            dropout,
        }
    }

    pub fn out_dim(&self) -> usize {
        2 * self.hidden
    }

    /// Recorded bidirectional run; one output node per position. When
    /// `train_rng` is provided, inter-layer dropout masks are drawn from
    /// it (inverted dropout); pass `None` at inference.
    pub fn run(
        &self,
        g: &mut Graph,
        ps: &ParamStore,
        xs: &[NodeId],
        train_rng: Option<&mut RngStream>,
    ) -> Result<Vec<NodeId>> {
        let mut rng = train_rng;
        let mut seq: Vec<NodeId> = xs.to_vec();
        for (l, (fwd, bwd)) in self.layers.iter().enumerate() {
            let zeros_h = vec![0.0; self.hidden];
            let mut fwd_h = Vec::with_capacity(seq.len());
            let (mut h, mut c) = (g.input(zeros_h.clone()), g.input(zeros_h.clone()));
            for &x in &seq {
                let (h2, c2) = fwd.step(g, ps, x, h, c)?;
                fwd_h.push(h2);
                h = h2;
                c = c2;
            }
            let mut bwd_h = vec![0usize; seq.len()];
            let (mut h, mut c) = (g.input(zeros_h.clone()), g.input(zeros_h));
            for (pos, &x) in seq.iter().enumerate().rev() {
                let (h2, c2) = bwd.step(g, ps, x, h, c)?;
                bwd_h[pos] = h2;
                h = h2;
                c = c2;
            }
            let mut out = Vec::with_capacity(seq.len());
            for pos in 0..seq.len() {
                let cat = g.concat(&[fwd_h[pos], bwd_h[pos]]);
                out.push(cat);
            }
            // inter-layer dropout, skipped after the last layer
            if l + 1 < self.layers.len() && self.dropout > 0.0 {
                if let Some(r) = rng.as_deref_mut() {
                    let keep = 1.0 - self.dropout;
                    for node in out.iter_mut() {
                        let mask: Vec<f64> = (0..2 * self.hidden)
                            .map(|_| if r.uniform() < keep { 1.0 / keep } else { 0.0 })
                            .collect();
                        *node = g.mul_mask(*node, mask);
                    }
                }
            }
            seq = out;
        }
        Ok(seq)
    }

    /// Plain bidirectional run without recording or dropout.
    pub fn infer(&self, ps: &ParamStore, xs: &[Vec<f64>]) -> Vec<Vec<f64>> {
        let mut seq: Vec<Vec<f64>> = xs.to_vec();
        for (fwd, bwd) in &self.layers {
            let mut fwd_h = Vec::with_capacity(seq.len());
            let (mut h, mut c) = (vec![0.0; self.hidden], vec![0.0; self.hidden]);
            for x in &seq {
                let (h2, c2) = fwd.infer_step(ps, x, &h, &c);
                fwd_h.push(h2.clone());
                h = h2;
                c = c2;
            }
            let mut bwd_h = vec![Vec::new(); seq.len()];
            let (mut h, mut c) = (vec![0.0; self.hidden], vec![0.0; self.hidden]);
            for (pos, x) in seq.iter().enumerate().rev() {
                let (h2, c2) = bwd.infer_step(ps, x, &h, &c);
                bwd_h[pos] = h2.clone();
                h = h2;
                c = c2;
            }
            seq = fwd_h
                .into_iter()
                .zip(bwd_h)
                .map(|(f, b)| {
                    let mut v = f;
                    v.extend(b);
                    v
                })
                .collect();
        }
        seq
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mlp_infer_matches_graph_forward() {
        let mut ps = ParamStore::new(3);
        let mlp = Mlp::new(
            &mut ps,
            "net",
            &[3, 8, 2],
            &[Activation::Sigmoid, Activation::Identity],
        );
        let x = vec![0.3, -1.0, 0.8];
        let mut g = Graph::new();
        let xin = g.input(x.clone());
        let out = mlp.forward(&mut g, &ps, xin).unwrap();
        let plain = mlp.infer(&ps, &x);
        for (a, b) in g.value(out).iter().zip(&plain) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn lstm_zero_weights_give_zero_hidden() {
        let mut ps = ParamStore::new(0);
        let cell = LstmCell {
            w: ps.add_zeros("w", 8, 1),
            u: ps.add_zeros("u", 8, 2),
            b: ps.add_zeros("b", 8, 1),
            hidden: 2,
            in_dim: 1,
        };
        let (h, c) = cell.infer_step(&ps, &[1.5], &[0.0, 0.0], &[0.0, 0.0]);
        assert_eq!(h, vec![0.0, 0.0]);
        assert_eq!(c, vec![0.0, 0.0]);
    }

    #[test]
    fn lstm_infer_matches_graph_step() {
        let mut ps = ParamStore::new(7);
        let cell = LstmCell::new(&mut ps, "cell", 2, 3);
        let x = vec![0.5, -0.2];
        let h0 = vec![0.1, -0.3, 0.2];
        let c0 = vec![0.0, 0.4, -0.1];
        let mut g = Graph::new();
        let xn = g.input(x.clone());
        let hn = g.input(h0.clone());
        let cn = g.input(c0.clone());
        let (h1, c1) = cell.step(&mut g, &ps, xn, hn, cn).unwrap();
        let (h_plain, c_plain) = cell.infer_step(&ps, &x, &h0, &c0);
        for (a, b) in g.value(h1).iter().zip(&h_plain) {
            assert!((a - b).abs() < 1e-14);
        }
        for (a, b) in g.value(c1).iter().zip(&c_plain) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn bidirectional_single_position_uses_both_cells() {
        let mut ps = ParamStore::new(9);
        let stack = BiLstmStack::new(&mut ps, "s", 1, 4, 1, 0.0);
        let out = stack.infer(&ps, &[vec![0.7]]);
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].len(), 8);
        // forward and backward halves come from different cells
        assert_ne!(out[0][..4], out[0][4..]);
    }

    #[test]
    fn bidirectional_infer_matches_graph_run() {
        let mut ps = ParamStore::new(21);
        let stack = BiLstmStack::new(&mut ps, "s", 1, 3, 2, 0.5);
        let xs: Vec<Vec<f64>> = vec![vec![0.2], vec![-0.9], vec![1.4]];
        let mut g = Graph::new();
        let nodes: Vec<NodeId> = xs.iter().map(|x| g.input(x.clone())).collect();
        // no dropout at inference: both paths must agree exactly
        let outs = stack.run(&mut g, &ps, &nodes, None).unwrap();
        let plain = stack.infer(&ps, &xs);
        for (node, row) in outs.iter().zip(&plain) {
            for (a, b) in g.value(*node).iter().zip(row) {
                assert!((a - b).abs() < 1e-14);
            }
        }
    }
}
