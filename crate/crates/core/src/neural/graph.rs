//! Reverse-mode computation graph over vector-valued nodes.
//!
//! Forward values are computed eagerly as the graph is built; `backward`
//! replays the tape in reverse, accumulating parameter gradients into
//! the [`ParamStore`]. Every block the learned detectors need (dense
//! affine layers, elementwise activations, softmax heads, concatenation,
//! recurrent gating arithmetic) is expressed through these primitives,
//! so the finite-difference check on the primitives covers them all.

use super::params::{ParamId, ParamStore};
use crate::error::Error;
use crate::numkit::Mat;
use crate::Result;

/// Handle to a node in a [`Graph`].
pub type NodeId = usize;

#[derive(Debug, Clone)]
enum Op {
    Input,
    Param(ParamId),
    /// W x + b with parameter W (r×c) and optional bias b (r×1).
    Affine {
        w: ParamId,
        b: Option<ParamId>,
        x: NodeId,
    },
    /// M x with a constant matrix (no gradient into M).
    ConstMatVec { m: Mat, x: NodeId },
    Add(NodeId, NodeId),
    Sub(NodeId, NodeId),
    Mul(NodeId, NodeId),
    Scale(NodeId, f64),
    /// s · x with a scalar parameter s.
    ScaleByParam { s: ParamId, x: NodeId },
    Relu(NodeId),
    Sigmoid(NodeId),
    Tanh(NodeId),
    Softsign(NodeId),
    Softplus(NodeId),
    Exp(NodeId),
    Ln(NodeId),
    Neg(NodeId),
    Concat(Vec<NodeId>),
    Slice { x: NodeId, start: usize, len: usize },
    Softmax(NodeId),
    LogSoftmax(NodeId),
    Sum(NodeId),
    Dot(NodeId, NodeId),
    /// logsumexp(x) − x[label]; gradient is softmax(x) − e_label.
    CrossEntropyLogits { x: NodeId, label: usize },
    /// Elementwise product with a fixed mask (dropout, loss masking).
    MulMask { x: NodeId, mask: Vec<f64> },
}

#[derive(Debug, Clone)]
struct Node {
    value: Vec<f64>,
    op: Op,
}

/// A recorded composition of primitive blocks.
#[derive(Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
}

impl Graph {
    pub fn new() -> Self {
        Graph { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, id: NodeId) -> &[f64] {
        &self.nodes[id].value
    }

    pub fn scalar(&self, id: NodeId) -> f64 {
        debug_assert_eq!(self.nodes[id].value.len(), 1);
        self.nodes[id].value[0]
    }

    fn push(&mut self, value: Vec<f64>, op: Op) -> NodeId {
        self.nodes.push(Node { value, op });
        self.nodes.len() - 1
    }

    pub fn input(&mut self, v: Vec<f64>) -> NodeId {
        self.push(v, Op::Input)
    }

    /// Parameter tensor as a flattened (row-major) vector node.
    pub fn param(&mut self, ps: &ParamStore, id: ParamId) -> NodeId {
        self.push(ps.value(id).as_slice().to_vec(), Op::Param(id))
    }

    /// W x (+ b). Dimensions must match; errors name the parameter.
    pub fn affine(
        &mut self,
        ps: &ParamStore,
        w: ParamId,
        b: Option<ParamId>,
        x: NodeId,
    ) -> Result<NodeId> {
        let wm = ps.value(w);
        let xv = &self.nodes[x].value;
        if wm.cols() != xv.len() {
            return Err(Error::Dim(format!(
                "affine '{}': {}x{} applied to length {}",
                ps.name(w),
                wm.rows(),
                wm.cols(),
                xv.len()
            )));
        }
        let mut out = wm.matvec(xv);
        if let Some(bid) = b {
            let bv = ps.value(bid);
            if bv.as_slice().len() != out.len() {
                return Err(Error::Dim(format!(
                    "affine bias '{}': length {} for output {}",
                    ps.name(bid),
                    bv.as_slice().len(),
                    out.len()
                )));
            }
            for (o, bi) in out.iter_mut().zip(bv.as_slice()) {
                *o += bi;
            }
        }
        Ok(self.push(out, Op::Affine { w, b, x }))
    }

    /// M x with a constant (non-learned) matrix.
    pub fn const_matvec(&mut self, m: Mat, x: NodeId) -> Result<NodeId> {
        let xv = &self.nodes[x].value;
        if m.cols() != xv.len() {
            return Err(Error::Dim(format!(
                "const_matvec: {}x{} applied to length {}",
                m.rows(),
                m.cols(),
                xv.len()
            )));
        }
        let out = m.matvec(xv);
        Ok(self.push(out, Op::ConstMatVec { m, x }))
    }

    fn zip2(&mut self, a: NodeId, b: NodeId, f: impl Fn(f64, f64) -> f64, op: Op) -> NodeId {
        let (va, vb) = (&self.nodes[a].value, &self.nodes[b].value);
        assert_eq!(va.len(), vb.len(), "elementwise op length mismatch");
        let out = va.iter().zip(vb).map(|(x, y)| f(*x, *y)).collect();
        self.push(out, op)
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> NodeId {
        self.zip2(a, b, |x, y| x + y, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> NodeId {
        self.zip2(a, b, |x, y| x - y, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        self.zip2(a, b, |x, y| x * y, Op::Mul(a, b))
    }

    pub fn scale(&mut self, x: NodeId, c: f64) -> NodeId {
        let out = self.nodes[x].value.iter().map(|v| c * v).collect();
        self.push(out, Op::Scale(x, c))
    }

    pub fn scale_by_param(&mut self, ps: &ParamStore, s: ParamId, x: NodeId) -> NodeId {
        let sv = ps.value(s).as_slice()[0];
        let out = self.nodes[x].value.iter().map(|v| sv * v).collect();
        self.push(out, Op::ScaleByParam { s, x })
    }

    fn map1(&mut self, x: NodeId, f: impl Fn(f64) -> f64, op: Op) -> NodeId {
        let out = self.nodes[x].value.iter().map(|v| f(*v)).collect();
        self.push(out, op)
    }

    pub fn relu(&mut self, x: NodeId) -> NodeId {
        self.map1(x, |v| v.max(0.0), Op::Relu(x))
    }

    pub fn sigmoid(&mut self, x: NodeId) -> NodeId {
        self.map1(x, sigmoid, Op::Sigmoid(x))
    }

    pub fn tanh(&mut self, x: NodeId) -> NodeId {
        self.map1(x, f64::tanh, Op::Tanh(x))
    }

    /// softsign(x) = x / (1 + |x|).
    pub fn softsign(&mut self, x: NodeId) -> NodeId {
        self.map1(x, |v| v / (1.0 + v.abs()), Op::Softsign(x))
    }

    /// softplus(x) = ln(1 + e^x), computed stably.
    pub fn softplus(&mut self, x: NodeId) -> NodeId {
        self.map1(x, softplus, Op::Softplus(x))
    }

    pub fn exp(&mut self, x: NodeId) -> NodeId {
        self.map1(x, f64::exp, Op::Exp(x))
    }

    pub fn ln(&mut self, x: NodeId) -> NodeId {
        self.map1(x, f64::ln, Op::Ln(x))
    }

    pub fn neg(&mut self, x: NodeId) -> NodeId {
        self.map1(x, |v| -v, Op::Neg(x))
    }

    pub fn concat(&mut self, parts: &[NodeId]) -> NodeId {
        let mut out = Vec::new();
        for &p in parts {
            out.extend_from_slice(&self.nodes[p].value);
        }
        self.push(out, Op::Concat(parts.to_vec()))
    }

    pub fn slice(&mut self, x: NodeId, start: usize, len: usize) -> NodeId {
        let out = self.nodes[x].value[start..start + len].to_vec();
        self.push(out, Op::Slice { x, start, len })
    }

    pub fn softmax(&mut self, x: NodeId) -> NodeId {
        let out = crate::numkit::softmax(&self.nodes[x].value);
        self.push(out.as_slice().to_vec(), Op::Softmax(x))
    }

    pub fn log_softmax(&mut self, x: NodeId) -> NodeId {
        let out = crate::numkit::log_softmax(&self.nodes[x].value);
        self.push(out, Op::LogSoftmax(x))
    }

    /// Sum of entries, as a length-1 node.
    pub fn sum(&mut self, x: NodeId) -> NodeId {
        let s = self.nodes[x].value.iter().sum();
        self.push(vec![s], Op::Sum(x))
    }

    pub fn dot(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let (va, vb) = (&self.nodes[a].value, &self.nodes[b].value);
        assert_eq!(va.len(), vb.len(), "dot length mismatch");
        let s = va.iter().zip(vb).map(|(x, y)| x * y).sum();
        self.push(vec![s], Op::Dot(a, b))
    }

    /// ‖a − b‖² as a scalar node.
    pub fn squared_distance(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let d = self.sub(a, b);
        self.dot(d, d)
    }

    /// Cross entropy −log softmax(x)[label] as a scalar node.
    pub fn cross_entropy_logits(&mut self, x: NodeId, label: usize) -> NodeId {
        let v = &self.nodes[x].value;
        assert!(label < v.len(), "cross entropy label out of range");
        let loss = crate::numkit::logsumexp(v) - v[label];
        self.push(vec![loss], Op::CrossEntropyLogits { x, label })
    }

    /// Elementwise product with a fixed mask.
    pub fn mul_mask(&mut self, x: NodeId, mask: Vec<f64>) -> NodeId {
        let v = &self.nodes[x].value;
        assert_eq!(v.len(), mask.len(), "mask length mismatch");
        let out = v.iter().zip(&mask).map(|(a, m)| a * m).collect();
        self.push(out, Op::MulMask { x, mask })
    }

    /// Reverse-mode sweep from a scalar loss node. Parameter gradients
    /// are accumulated (not overwritten) into the store, so batches sum
    /// naturally; unreachable parameters are left untouched.
    pub fn backward(&self, loss: NodeId, ps: &mut ParamStore) -> Result<()> {
        if self.nodes[loss].value.len() != 1 {
            return Err(Error::Dim("backward: loss node must be scalar".into()));
        }
        let mut grads: Vec<Vec<f64>> = self.nodes.iter().map(|n| vec![0.0; n.value.len()]).collect();
        grads[loss][0] = 1.0;

        for id in (0..=loss).rev() {
            let g = std::mem::take(&mut grads[id]);
            if g.iter().all(|&v| v == 0.0) {
                continue;
            }
            let val = &self.nodes[id].value;
            match &self.nodes[id].op {
                Op::Input => {}
                Op::Param(pid) => {
                    let slot = ps.grad_mut(*pid);
                    for (gi, out) in g.iter().zip(slot.as_mut_slice()) {
                        *out += gi;
                    }
                }
                Op::Affine { w, b, x } => {
                    let xv = self.nodes[*x].value.clone();
                    {
                        let (wm, gw) = ps.value_and_grad_mut(*w);
                        let cols = wm.cols();
                        let gw = gw.as_mut_slice();
                        for (r, gr) in g.iter().enumerate() {
                            if *gr == 0.0 {
                                continue;
                            }
                            let row = &mut gw[r * cols..(r + 1) * cols];
                            for (slot, xi) in row.iter_mut().zip(&xv) {
                                *slot += gr * xi;
                            }
                        }
                    }
                    {
                        let wm = ps.value(*w);
                        let gx = &mut grads[*x];
                        for (r, gr) in g.iter().enumerate() {
                            if *gr == 0.0 {
                                continue;
                            }
                            for (slot, wij) in gx.iter_mut().zip(wm.row(r)) {
                                *slot += gr * wij;
                            }
                        }
                    }
                    if let Some(bid) = b {
                        let gb = ps.grad_mut(*bid);
                        for (gi, out) in g.iter().zip(gb.as_mut_slice()) {
                            *out += gi;
                        }
                    }
                }
                Op::ConstMatVec { m, x } => {
                    let gx = &mut grads[*x];
                    for (r, gr) in g.iter().enumerate() {
                        if *gr == 0.0 {
                            continue;
                        }
                        for (slot, mij) in gx.iter_mut().zip(m.row(r)) {
                            *slot += gr * mij;
                        }
                    }
                }
                Op::Add(a, b) => {
                    for (slot, gi) in grads[*a].iter_mut().zip(&g) {
                        *slot += gi;
                    }
                    for (slot, gi) in grads[*b].iter_mut().zip(&g) {
                        *slot += gi;
                    }
                }
                Op::Sub(a, b) => {
                    for (slot, gi) in grads[*a].iter_mut().zip(&g) {
                        *slot += gi;
                    }
                    for (slot, gi) in grads[*b].iter_mut().zip(&g) {
                        *slot -= gi;
                    }
                }
                Op::Mul(a, b) => {
                    let (va, vb) = (self.nodes[*a].value.clone(), self.nodes[*b].value.clone());
                    for ((slot, gi), bi) in grads[*a].iter_mut().zip(&g).zip(&vb) {
                        *slot += gi * bi;
                    }
                    for ((slot, gi), ai) in grads[*b].iter_mut().zip(&g).zip(&va) {
                        *slot += gi * ai;
                    }
                }
                Op::Scale(x, c) => {
                    for (slot, gi) in grads[*x].iter_mut().zip(&g) {
                        *slot += gi * c;
                    }
                }
                Op::ScaleByParam { s, x } => {
                    let sv = ps.value(*s).as_slice()[0];
                    let xv = self.nodes[*x].value.clone();
                    let mut gs = 0.0;
                    for ((slot, gi), xi) in grads[*x].iter_mut().zip(&g).zip(&xv) {
                        *slot += gi * sv;
                        gs += gi * xi;
                    }
                    ps.grad_mut(*s).as_mut_slice()[0] += gs;
                }
                Op::Relu(x) => {
                    let xv = &self.nodes[*x].value;
                    for ((slot, gi), xi) in grads[*x].iter_mut().zip(&g).zip(xv) {
                        if *xi > 0.0 {
                            *slot += gi;
                        }
                    }
                }
                Op::Sigmoid(x) => {
                    for ((slot, gi), yi) in grads[*x].iter_mut().zip(&g).zip(val) {
                        *slot += gi * yi * (1.0 - yi);
                    }
                }
                Op::Tanh(x) => {
                    for ((slot, gi), yi) in grads[*x].iter_mut().zip(&g).zip(val) {
                        *slot += gi * (1.0 - yi * yi);
                    }
                }
                Op::Softsign(x) => {
                    let xv = &self.nodes[*x].value;
                    for ((slot, gi), xi) in grads[*x].iter_mut().zip(&g).zip(xv) {
                        let d = 1.0 + xi.abs();
                        *slot += gi / (d * d);
                    }
                }
                Op::Softplus(x) => {
                    let xv = &self.nodes[*x].value;
                    for ((slot, gi), xi) in grads[*x].iter_mut().zip(&g).zip(xv) {
                        *slot += gi * sigmoid(*xi);
                    }
                }
                Op::Exp(x) => {
                    for ((slot, gi), yi) in grads[*x].iter_mut().zip(&g).zip(val) {
                        *slot += gi * yi;
                    }
                }
                Op::Ln(x) => {
                    let xv = &self.nodes[*x].value;
                    for ((slot, gi), xi) in grads[*x].iter_mut().zip(&g).zip(xv) {
                        *slot += gi / xi;
                    }
                }
                Op::Neg(x) => {
                    for (slot, gi) in grads[*x].iter_mut().zip(&g) {
                        *slot -= gi;
                    }
                }
                Op::Concat(parts) => {
                    let mut off = 0;
                    for &p in parts {
                        let n = self.nodes[p].value.len();
                        for (slot, gi) in grads[p].iter_mut().zip(&g[off..off + n]) {
                            *slot += gi;
                        }
                        off += n;
                    }
                }
                Op::Slice { x, start, len } => {
                    for (slot, gi) in grads[*x][*start..start + len].iter_mut().zip(&g) {
                        *slot += gi;
                    }
                }
                Op::Softmax(x) => {
                    // J = diag(p) − p pᵀ, so Jᵀ g = p ∘ (g − (g·p))
                    let gp: f64 = g.iter().zip(val).map(|(gi, pi)| gi * pi).sum();
                    for ((slot, gi), pi) in grads[*x].iter_mut().zip(&g).zip(val) {
                        *slot += pi * (gi - gp);
                    }
                }
                Op::LogSoftmax(x) => {
                    let gsum: f64 = g.iter().sum();
                    for ((slot, gi), li) in grads[*x].iter_mut().zip(&g).zip(val) {
                        *slot += gi - li.exp() * gsum;
                    }
                }
                Op::Sum(x) => {
                    for slot in grads[*x].iter_mut() {
                        *slot += g[0];
                    }
                }
                Op::Dot(a, b) => {
                    let (va, vb) = (self.nodes[*a].value.clone(), self.nodes[*b].value.clone());
                    if a == b {
                        for (slot, ai) in grads[*a].iter_mut().zip(&va) {
                            *slot += 2.0 * g[0] * ai;
                        }
                    } else {
                        for (slot, bi) in grads[*a].iter_mut().zip(&vb) {
                            *slot += g[0] * bi;
                        }
                        for (slot, ai) in grads[*b].iter_mut().zip(&va) {
                            *slot += g[0] * ai;
                        }
                    }
                }
                Op::CrossEntropyLogits { x, label } => {
                    let p = crate::numkit::softmax(&self.nodes[*x].value);
                    for (i, (slot, pi)) in grads[*x].iter_mut().zip(p.as_slice()).enumerate() {
                        let onehot = if i == *label { 1.0 } else { 0.0 };
                        *slot += g[0] * (pi - onehot);
                    }
                }
                Op::MulMask { x, mask } => {
                    for ((slot, gi), mi) in grads[*x].iter_mut().zip(&g).zip(mask) {
                        *slot += gi * mi;
                    }
                }
            }
        }
        Ok(())
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

fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}
