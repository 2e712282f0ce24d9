//! Reverse-mode autodiff on a flat operation tape.
//!
//! A [`Tape`] records eagerly evaluated operations over [`Tensor`] values.
//! [`Tape::backward`] replays the record in reverse, accumulating
//! vector-Jacobian products into gradients for every trainable leaf. Nodes
//! are topologically ordered by construction (an op can only consume
//! previously created vars), so the reverse sweep is a single pass.
//!
//! Every op output is checked for non-finite entries; producing a NaN or an
//! infinity is a hard error, because silently propagating one poisons a
//! training run in ways that are miserable to track down later.

use crate::error::{Error, Result};
use crate::scalar::{sigmoid, softplus, Scalar};
use crate::tensor::{matmul_nn, matmul_nt, matmul_tn, Tensor};

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Var(u32);

impl Var {
    #[inline]
    fn idx(self) -> usize {
        self.0 as usize
    }
}

#[derive(Clone, Debug)]
enum Op<S> {
    Leaf,
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Neg(Var),
    Matmul(Var, Var),
    AddRowVec(Var, Var),
    Relu(Var),
    Tanh(Var),
    Sigmoid(Var),
    Softplus(Var),
    Exp(Var),
    Ln(Var),
    Square(Var),
    Recip(Var),
    MinElem(Var, Var),
    Clamp(Var, S, S),
    ScaleConst(Var, S),
    AddConst(Var, S),
    MulScalar(Var, Var),
    Sum(Var),
    Mean(Var),
    RowSum(Var),
    SliceCols(Var, usize, usize),
    ConcatCols(Var, Var),
    SegmentSum(Var, Vec<usize>),
}

struct Node<S> {
    op: Op<S>,
    value: Tensor<S>,
    requires_grad: bool,
}

/// Gradients produced by [`Tape::backward`], indexed by the vars they belong
/// to. Only trainable leaves retain gradients; intermediate buffers are
/// dropped as soon as the reverse sweep has consumed them.
pub struct Gradients<S> {
    grads: Vec<Option<Tensor<S>>>,
}

impl<S: Scalar> Gradients<S> {
    /// Gradient with respect to `v`, if `v` participated in the loss.
    pub fn wrt(&self, v: Var) -> Option<&Tensor<S>> {
        self.grads.get(v.idx()).and_then(|g| g.as_ref())
    }

    /// Removes and returns the gradient for `v`.
    pub fn take(&mut self, v: Var) -> Option<Tensor<S>> {
        self.grads.get_mut(v.idx()).and_then(|g| g.take())
    }
}

/// Flat autodiff tape.
pub struct Tape<S> {
    nodes: Vec<Node<S>>,
}

impl<S: Scalar> Default for Tape<S> {
    fn default() -> Self {
        Self::new()
    }
}

impl<S: Scalar> Tape<S> {
    pub fn new() -> Self {
        Self { nodes: Vec::new() }
    }

    /// Drops all recorded nodes, keeping the allocation for reuse.
    pub fn clear(&mut self) {
        self.nodes.clear();
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Records a non-trainable leaf.
    pub fn constant(&mut self, value: Tensor<S>) -> Var {
        self.push(Op::Leaf, value, false)
    }

    /// Records a trainable leaf; [`Tape::backward`] will produce a gradient
    /// for it.
    pub fn param(&mut self, value: Tensor<S>) -> Var {
        self.push(Op::Leaf, value, true)
    }

    /// Value held by `v`.
    pub fn value(&self, v: Var) -> &Tensor<S> {
        &self.nodes[v.idx()].value
    }

    /// Re-enters the current value of `v` as a constant, cutting the
    /// gradient path.
    pub fn detach(&mut self, v: Var) -> Var {
        let t = self.value(v).clone();
        self.constant(t)
    }

    fn push(&mut self, op: Op<S>, value: Tensor<S>, requires_grad: bool) -> Var {
        assert!(
            value.all_finite(),
            "non-finite value produced on tape (node {}, {:?} shape {:?})",
            self.nodes.len(),
            op_name(&op),
            value.shape(),
        );
        let id = self.nodes.len();
        assert!(id <= u32::MAX as usize, "tape exhausted");
        self.nodes.push(Node {
            op,
            value,
            requires_grad,
        });
        Var(id as u32)
    }

    fn needs(&self, v: Var) -> bool {
        self.nodes[v.idx()].requires_grad
    }

    fn binary_elementwise(&mut self, a: Var, b: Var, op: Op<S>, f: impl Fn(S, S) -> S) -> Var {
        let (ta, tb) = (self.value(a), self.value(b));
        assert_eq!(
            ta.shape(),
            tb.shape(),
            "elementwise {} shape mismatch",
            op_name(&op)
        );
        let data = ta
            .data()
            .iter()
            .zip(tb.data())
            .map(|(&x, &y)| f(x, y))
            .collect();
        let value = Tensor::new(ta.rows(), ta.cols(), data).expect("shape preserved");
        let rg = self.needs(a) || self.needs(b);
        self.push(op, value, rg)
    }

    fn unary_elementwise(&mut self, a: Var, op: Op<S>, f: impl Fn(S) -> S) -> Var {
        let value = self.value(a).map(f);
        let rg = self.needs(a);
        self.push(op, value, rg)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        self.binary_elementwise(a, b, Op::Add(a, b), |x, y| x + y)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        self.binary_elementwise(a, b, Op::Sub(a, b), |x, y| x - y)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        self.binary_elementwise(a, b, Op::Mul(a, b), |x, y| x * y)
    }

    pub fn min_elem(&mut self, a: Var, b: Var) -> Var {
        self.binary_elementwise(a, b, Op::MinElem(a, b), |x, y| if y < x { y } else { x })
    }

    pub fn neg(&mut self, a: Var) -> Var {
        self.unary_elementwise(a, Op::Neg(a), |x| -x)
    }

    pub fn relu(&mut self, a: Var) -> Var {
        self.unary_elementwise(a, Op::Relu(a), |x| x.max(S::zero()))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        self.unary_elementwise(a, Op::Tanh(a), |x| x.tanh())
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        self.unary_elementwise(a, Op::Sigmoid(a), sigmoid)
    }

    pub fn softplus(&mut self, a: Var) -> Var {
        self.unary_elementwise(a, Op::Softplus(a), softplus)
    }

    pub fn exp(&mut self, a: Var) -> Var {
        self.unary_elementwise(a, Op::Exp(a), |x| x.exp())
    }

    pub fn ln(&mut self, a: Var) -> Var {
        self.unary_elementwise(a, Op::Ln(a), |x| x.ln())
    }

    pub fn square(&mut self, a: Var) -> Var {
        self.unary_elementwise(a, Op::Square(a), |x| x * x)
    }

    pub fn recip(&mut self, a: Var) -> Var {
        self.unary_elementwise(a, Op::Recip(a), |x| S::one() / x)
    }

    pub fn clamp(&mut self, a: Var, lo: S, hi: S) -> Var {
        assert!(lo < hi, "clamp bounds out of order");
        self.unary_elementwise(a, Op::Clamp(a, lo, hi), |x| x.max(lo).min(hi))
    }

    pub fn scale(&mut self, a: Var, c: S) -> Var {
        self.unary_elementwise(a, Op::ScaleConst(a, c), |x| x * c)
    }

    pub fn add_const(&mut self, a: Var, c: S) -> Var {
        self.unary_elementwise(a, Op::AddConst(a, c), |x| x + c)
    }

    /// Matrix product `a (n x k) * b (k x m)`.
    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let (ta, tb) = (self.value(a), self.value(b));
        let (n, k) = ta.shape();
        let (kb, m) = tb.shape();
        assert_eq!(k, kb, "matmul inner dims {k} vs {kb}");
        let mut out = Tensor::zeros(n, m);
        matmul_nn(ta, tb, &mut out, false);
        let rg = self.needs(a) || self.needs(b);
        self.push(Op::Matmul(a, b), out, rg)
    }

    /// Adds a `1 x m` row vector to every row of an `n x m` matrix.
    pub fn add_row_vec(&mut self, a: Var, bias: Var) -> Var {
        let (ta, tb) = (self.value(a), self.value(bias));
        let (n, m) = ta.shape();
        assert_eq!(tb.shape(), (1, m), "bias must be 1 x {m}");
        let mut out = ta.clone();
        let bd = tb.data().to_vec();
        for i in 0..n {
            let row = &mut out.data_mut()[i * m..(i + 1) * m];
            for (o, &bv) in row.iter_mut().zip(&bd) {
                *o += bv;
            }
        }
        let rg = self.needs(a) || self.needs(bias);
        self.push(Op::AddRowVec(a, bias), out, rg)
    }

    /// Multiplies every entry of `a` by a `1 x 1` scalar var.
    pub fn mul_scalar(&mut self, a: Var, s: Var) -> Var {
        let sv = self.value(s).item().expect("mul_scalar needs 1x1 scalar");
        let value = self.value(a).map(|x| x * sv);
        let rg = self.needs(a) || self.needs(s);
        self.push(Op::MulScalar(a, s), value, rg)
    }

    /// Sum of all entries, as a `1 x 1` tensor.
    pub fn sum(&mut self, a: Var) -> Var {
        let value = Tensor::scalar(self.value(a).sum());
        let rg = self.needs(a);
        self.push(Op::Sum(a), value, rg)
    }

    /// Mean of all entries, as a `1 x 1` tensor.
    pub fn mean(&mut self, a: Var) -> Var {
        let t = self.value(a);
        assert!(!t.is_empty(), "mean of empty tensor");
        let value = Tensor::scalar(t.sum() / S::c(t.len() as f64));
        let rg = self.needs(a);
        self.push(Op::Mean(a), value, rg)
    }

    /// Per-row sum: `n x m` to `n x 1`.
    pub fn row_sum(&mut self, a: Var) -> Var {
        let t = self.value(a);
        let (n, _) = t.shape();
        let mut out = Tensor::zeros(n, 1);
        for i in 0..n {
            let mut acc = S::zero();
            for &x in t.row_slice(i) {
                acc += x;
            }
            out.set(i, 0, acc);
        }
        let rg = self.needs(a);
        self.push(Op::RowSum(a), out, rg)
    }

    /// Column slice `[from, to)` of every row.
    pub fn slice_cols(&mut self, a: Var, from: usize, to: usize) -> Var {
        let t = self.value(a);
        let (n, m) = t.shape();
        assert!(from < to && to <= m, "slice_cols [{from},{to}) of width {m}");
        let mut out = Tensor::zeros(n, to - from);
        for i in 0..n {
            let src = &t.row_slice(i)[from..to];
            out.data_mut()[i * (to - from)..(i + 1) * (to - from)].copy_from_slice(src);
        }
        let rg = self.needs(a);
        self.push(Op::SliceCols(a, from, to), out, rg)
    }

    /// Horizontal concatenation of two matrices with equal row counts.
    pub fn concat_cols(&mut self, a: Var, b: Var) -> Var {
        let (ta, tb) = (self.value(a), self.value(b));
        let (n, p) = ta.shape();
        let (nb, q) = tb.shape();
        assert_eq!(n, nb, "concat_cols row counts {n} vs {nb}");
        let mut out = Tensor::zeros(n, p + q);
        for i in 0..n {
            out.data_mut()[i * (p + q)..i * (p + q) + p].copy_from_slice(ta.row_slice(i));
            out.data_mut()[i * (p + q) + p..(i + 1) * (p + q)].copy_from_slice(tb.row_slice(i));
        }
        let rg = self.needs(a) || self.needs(b);
        self.push(Op::ConcatCols(a, b), out, rg)
    }

    /// Sums contiguous row segments of an `n x 1` column into a `k x 1`
    /// column. `bounds` holds `k + 1` monotone offsets starting at 0 and
    /// ending at `n`.
    pub fn segment_sum(&mut self, a: Var, bounds: Vec<usize>) -> Var {
        let t = self.value(a);
        let (n, w) = t.shape();
        assert_eq!(w, 1, "segment_sum expects a column vector");
        assert!(bounds.len() >= 2, "segment_sum needs at least one segment");
        assert_eq!(*bounds.first().unwrap(), 0, "segment bounds must start at 0");
        assert_eq!(*bounds.last().unwrap(), n, "segment bounds must end at {n}");
        assert!(
            bounds.windows(2).all(|w| w[0] < w[1]),
            "segment bounds must be strictly increasing"
        );
        let k = bounds.len() - 1;
        let mut out = Tensor::zeros(k, 1);
        for seg in 0..k {
            let mut acc = S::zero();
            for &x in &t.data()[bounds[seg]..bounds[seg + 1]] {
                acc += x;
            }
            out.set(seg, 0, acc);
        }
        let rg = self.needs(a);
        self.push(Op::SegmentSum(a, bounds), out, rg)
    }

    /// Reverse sweep from a `1 x 1` loss root. Returns gradients for every
    /// trainable leaf the root depends on.
    pub fn backward(&self, root: Var) -> Result<Gradients<S>> {
        let root_node = &self.nodes[root.idx()];
        if !root_node.value.is_scalar() {
            return Err(Error::Autodiff(format!(
                "backward root must be 1x1, got {}x{}",
                root_node.value.shape().0,
                root_node.value.shape().1
            )));
        }
        let mut grads: Vec<Option<Tensor<S>>> = (0..self.nodes.len()).map(|_| None).collect();
        if !root_node.requires_grad {
            return Ok(Gradients { grads });
        }
        grads[root.idx()] = Some(Tensor::scalar(S::one()));

        for id in (0..=root.idx()).rev() {
            if matches!(self.nodes[id].op, Op::Leaf) {
                continue;
            }
            let Some(g) = grads[id].take() else {
                continue;
            };
            self.backprop_node(id, &g, &mut grads);
        }
        Ok(Gradients { grads })
    }

    fn accumulate(&self, grads: &mut [Option<Tensor<S>>], v: Var, update: impl FnOnce(&mut Tensor<S>)) {
        if !self.needs(v) {
            return;
        }
        let slot = &mut grads[v.idx()];
        if slot.is_none() {
            let t = self.value(v);
            *slot = Some(Tensor::zeros(t.rows(), t.cols()));
        }
        update(slot.as_mut().unwrap());
    }

    fn backprop_node(&self, id: usize, g: &Tensor<S>, grads: &mut [Option<Tensor<S>>]) {
        let add_elementwise = |dst: &mut Tensor<S>, src: &Tensor<S>, f: &dyn Fn(S) -> S| {
            for (d, &s) in dst.data_mut().iter_mut().zip(src.data()) {
                *d += f(s);
            }
        };
        match &self.nodes[id].op {
            Op::Leaf => unreachable!("leaves are skipped"),
            Op::Add(a, b) => {
                self.accumulate(grads, *a, |da| {
                    for (d, &s) in da.data_mut().iter_mut().zip(g.data()) {
                        *d += s;
                    }
                });
                self.accumulate(grads, *b, |db| {
                    for (d, &s) in db.data_mut().iter_mut().zip(g.data()) {
                        *d += s;
                    }
                });
            }
            Op::Sub(a, b) => {
                self.accumulate(grads, *a, |da| {
                    for (d, &s) in da.data_mut().iter_mut().zip(g.data()) {
                        *d += s;
                    }
                });
                self.accumulate(grads, *b, |db| {
                    for (d, &s) in db.data_mut().iter_mut().zip(g.data()) {
                        *d -= s;
                    }
                });
            }
            Op::Mul(a, b) => {
                let (ta, tb) = (self.value(*a).clone(), self.value(*b).clone());
                self.accumulate(grads, *a, |da| {
                    for ((d, &s), &y) in da.data_mut().iter_mut().zip(g.data()).zip(tb.data()) {
                        *d += s * y;
                    }
                });
                self.accumulate(grads, *b, |db| {
                    for ((d, &s), &x) in db.data_mut().iter_mut().zip(g.data()).zip(ta.data()) {
                        *d += s * x;
                    }
                });
            }
            Op::MinElem(a, b) => {
                let (ta, tb) = (self.value(*a).clone(), self.value(*b).clone());
                self.accumulate(grads, *a, |da| {
                    for (i, (d, &s)) in da.data_mut().iter_mut().zip(g.data()).enumerate() {
                        if ta.data()[i] <= tb.data()[i] {
                            *d += s;
                        }
                    }
                });
                self.accumulate(grads, *b, |db| {
                    for (i, (d, &s)) in db.data_mut().iter_mut().zip(g.data()).enumerate() {
                        if tb.data()[i] < ta.data()[i] {
                            *d += s;
                        }
                    }
                });
            }
            Op::Neg(a) => {
                self.accumulate(grads, *a, |da| {
                    for (d, &s) in da.data_mut().iter_mut().zip(g.data()) {
                        *d -= s;
                    }
                });
            }
            Op::Matmul(a, b) => {
                let (ta, tb) = (self.value(*a).clone(), self.value(*b).clone());
                self.accumulate(grads, *a, |da| matmul_nt(g, &tb, da, true));
                self.accumulate(grads, *b, |db| matmul_tn(&ta, g, db, true));
            }
            Op::AddRowVec(a, bias) => {
                self.accumulate(grads, *a, |da| {
                    for (d, &s) in da.data_mut().iter_mut().zip(g.data()) {
                        *d += s;
                    }
                });
                let (n, m) = g.shape();
                self.accumulate(grads, *bias, |db| {
                    for i in 0..n {
                        let grow = &g.data()[i * m..(i + 1) * m];
                        for (d, &s) in db.data_mut().iter_mut().zip(grow) {
                            *d += s;
                        }
                    }
                });
            }
            Op::Relu(a) => {
                let x = self.value(*a).clone();
                self.accumulate(grads, *a, |da| {
                    for ((d, &s), &xv) in da.data_mut().iter_mut().zip(g.data()).zip(x.data()) {
                        if xv > S::zero() {
                            *d += s;
                        }
                    }
                });
            }
            Op::Tanh(a) => {
                let y = self.nodes[id].value.clone();
                self.accumulate(grads, *a, |da| {
                    for ((d, &s), &yv) in da.data_mut().iter_mut().zip(g.data()).zip(y.data()) {
                        *d += s * (S::one() - yv * yv);
                    }
                });
            }
            Op::Sigmoid(a) => {
                let y = self.nodes[id].value.clone();
                self.accumulate(grads, *a, |da| {
                    for ((d, &s), &yv) in da.data_mut().iter_mut().zip(g.data()).zip(y.data()) {
                        *d += s * yv * (S::one() - yv);
                    }
                });
            }
            Op::Softplus(a) => {
                let x = self.value(*a).clone();
                self.accumulate(grads, *a, |da| {
                    for ((d, &s), &xv) in da.data_mut().iter_mut().zip(g.data()).zip(x.data()) {
                        *d += s * sigmoid(xv);
                    }
                });
            }
            Op::Exp(a) => {
                let y = self.nodes[id].value.clone();
                self.accumulate(grads, *a, |da| {
                    for ((d, &s), &yv) in da.data_mut().iter_mut().zip(g.data()).zip(y.data()) {
                        *d += s * yv;
                    }
                });
            }
            Op::Ln(a) => {
                let x = self.value(*a).clone();
                self.accumulate(grads, *a, |da| {
                    add_elementwise(da, g, &|_s| S::zero());
                    for ((d, &s), &xv) in da.data_mut().iter_mut().zip(g.data()).zip(x.data()) {
                        *d += s / xv;
                    }
                });
            }
            Op::Square(a) => {
                let x = self.value(*a).clone();
                let two = S::c(2.0);
                self.accumulate(grads, *a, |da| {
                    for ((d, &s), &xv) in da.data_mut().iter_mut().zip(g.data()).zip(x.data()) {
                        *d += s * two * xv;
                    }
                });
            }
            Op::Recip(a) => {
                let y = self.nodes[id].value.clone();
                self.accumulate(grads, *a, |da| {
                    for ((d, &s), &yv) in da.data_mut().iter_mut().zip(g.data()).zip(y.data()) {
                        *d -= s * yv * yv;
                    }
                });
            }
            Op::Clamp(a, lo, hi) => {
                let x = self.value(*a).clone();
                let (lo, hi) = (*lo, *hi);
                self.accumulate(grads, *a, |da| {
                    for ((d, &s), &xv) in da.data_mut().iter_mut().zip(g.data()).zip(x.data()) {
                        if xv > lo && xv < hi {
                            *d += s;
                        }
                    }
                });
            }
            Op::ScaleConst(a, c) => {
                let c = *c;
                self.accumulate(grads, *a, |da| {
                    for (d, &s) in da.data_mut().iter_mut().zip(g.data()) {
                        *d += s * c;
                    }
                });
            }
            Op::AddConst(a, _) => {
                self.accumulate(grads, *a, |da| {
                    for (d, &s) in da.data_mut().iter_mut().zip(g.data()) {
                        *d += s;
                    }
                });
            }
            Op::MulScalar(a, sv) => {
                let x = self.value(*a).clone();
                let s_val = self.value(*sv).item().expect("scalar var");
                self.accumulate(grads, *a, |da| {
                    for (d, &s) in da.data_mut().iter_mut().zip(g.data()) {
                        *d += s * s_val;
                    }
                });
                self.accumulate(grads, *sv, |ds| {
                    let mut acc = S::zero();
                    for (&s, &xv) in g.data().iter().zip(x.data()) {
                        acc += s * xv;
                    }
                    ds.data_mut()[0] += acc;
                });
            }
            Op::Sum(a) => {
                let s = g.data()[0];
                self.accumulate(grads, *a, |da| {
                    for d in da.data_mut() {
                        *d += s;
                    }
                });
            }
            Op::Mean(a) => {
                let n = self.value(*a).len();
                let s = g.data()[0] / S::c(n as f64);
                self.accumulate(grads, *a, |da| {
                    for d in da.data_mut() {
                        *d += s;
                    }
                });
            }
            Op::RowSum(a) => {
                let (n, m) = self.value(*a).shape();
                self.accumulate(grads, *a, |da| {
                    for i in 0..n {
                        let s = g.data()[i];
                        let drow = &mut da.data_mut()[i * m..(i + 1) * m];
                        for d in drow {
                            *d += s;
                        }
                    }
                });
            }
            Op::SliceCols(a, from, to) => {
                let (n, m) = self.value(*a).shape();
                let (from, to) = (*from, *to);
                let w = to - from;
                self.accumulate(grads, *a, |da| {
                    for i in 0..n {
                        let grow = &g.data()[i * w..(i + 1) * w];
                        let drow = &mut da.data_mut()[i * m + from..i * m + to];
                        for (d, &s) in drow.iter_mut().zip(grow) {
                            *d += s;
                        }
                    }
                });
            }
            Op::ConcatCols(a, b) => {
                let (n, p) = self.value(*a).shape();
                let (_, q) = self.value(*b).shape();
                self.accumulate(grads, *a, |da| {
                    for i in 0..n {
                        let grow = &g.data()[i * (p + q)..i * (p + q) + p];
                        let drow = &mut da.data_mut()[i * p..(i + 1) * p];
                        for (d, &s) in drow.iter_mut().zip(grow) {
                            *d += s;
                        }
                    }
                });
                self.accumulate(grads, *b, |db| {
                    for i in 0..n {
                        let grow = &g.data()[i * (p + q) + p..(i + 1) * (p + q)];
                        let drow = &mut db.data_mut()[i * q..(i + 1) * q];
                        for (d, &s) in drow.iter_mut().zip(grow) {
                            *d += s;
                        }
                    }
                });
            }
            Op::SegmentSum(a, bounds) => {
                let bounds = bounds.clone();
                self.accumulate(grads, *a, |da| {
                    for seg in 0..bounds.len() - 1 {
                        let s = g.data()[seg];
                        for d in &mut da.data_mut()[bounds[seg]..bounds[seg + 1]] {
                            *d += s;
                        }
                    }
                });
            }
        }
    }
}

fn op_name<S>(op: &Op<S>) -> &'static str {
    match op {
        Op::Leaf => "leaf",
        Op::Add(..) => "add",
        Op::Sub(..) => "sub",
        Op::Mul(..) => "mul",
        Op::Neg(..) => "neg",
        Op::Matmul(..) => "matmul",
        Op::AddRowVec(..) => "add_row_vec",
        Op::Relu(..) => "relu",
        Op::Tanh(..) => "tanh",
        Op::Sigmoid(..) => "sigmoid",
        Op::Softplus(..) => "softplus",
        Op::Exp(..) => "exp",
        Op::Ln(..) => "ln",
        Op::Square(..) => "square",
        Op::Recip(..) => "recip",
        Op::MinElem(..) => "min_elem",
        Op::Clamp(..) => "clamp",
        Op::ScaleConst(..) => "scale",
        Op::AddConst(..) => "add_const",
        Op::MulScalar(..) => "mul_scalar",
        Op::Sum(..) => "sum",
        Op::Mean(..) => "mean",
        Op::RowSum(..) => "row_sum",
        Op::SliceCols(..) => "slice_cols",
        Op::ConcatCols(..) => "concat_cols",
        Op::SegmentSum(..) => "segment_sum",
    }
}
