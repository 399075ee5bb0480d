//! Reverse-mode differentiation over matrix-valued nodes.
//!
//! A [`Tape`] records every operation as it is evaluated. Calling
//! [`Var::backward`] on a 1×1 node sweeps the tape in reverse and returns
//! adjoints for every node. Inverses only ever enter as
//! [`Var::solve_psd`] and [`Var::logdet_psd`]; their adjoints are those of
//! a linear solve (`B̄ = A⁻¹Ḡ`, `Ā = −B̄Xᵀ`) and of a log-determinant
//! (`Ā = ḡ·A⁻¹`, A symmetric). The Cholesky factor of each matrix that is
//! solved against is cached per node and reused in the backward pass.

use std::cell::RefCell;
use std::collections::HashMap;
use std::rc::Rc;

use crate::error::{Error, Result};
use crate::linalg::{self, CholFactor, Matrix};
use crate::params::{ParamVector, Segment, SegmentKind};
use crate::softplus::{sigmoid, softplus};

type NodeId = usize;

#[derive(Clone, Copy, Debug)]
enum Op {
    Leaf,
    Add(NodeId, NodeId),
    Sub(NodeId, NodeId),
    Mul(NodeId, NodeId),
    Scale(NodeId, f64),
    Offset(NodeId),
    MatMul(NodeId, NodeId),
    Transpose(NodeId),
    Exp(NodeId),
    Ln(NodeId),
    Softplus(NodeId),
    Recip(NodeId),
    Sum(NodeId),
    Trace(NodeId),
    DiagPart(NodeId),
    DiagEmbed(NodeId),
    Entry(NodeId, usize, usize),
    SqDist(NodeId, NodeId),
    SolvePsd(NodeId, NodeId),
    LogDet(NodeId),
}

struct Node {
    value: Rc<Matrix>,
    op: Op,
    /// Whether any tracked leaf feeds this node.
    tracked: bool,
}

#[derive(Default)]
pub struct Tape {
    nodes: RefCell<Vec<Node>>,
    factors: RefCell<HashMap<NodeId, Rc<CholFactor>>>,
}

#[derive(Clone, Copy)]
pub struct Var<'t> {
    tape: &'t Tape,
    id: NodeId,
}

impl std::fmt::Debug for Var<'_> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Var#{} {:?}", self.id, self.shape())
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Records a tracked input node whose adjoint can be read back.
    pub fn leaf(&self, value: Matrix) -> Var<'_> {
        self.push_node(value, Op::Leaf, true)
    }

    /// Records an input that needs no adjoint. Reverse sweeps skip any
    /// work that only flows into constants.
    pub fn constant(&self, value: Matrix) -> Var<'_> {
        self.push_node(value, Op::Leaf, false)
    }

    pub fn scalar(&self, value: f64) -> Var<'_> {
        self.leaf(Matrix::scalar(value))
    }

    pub fn column(&self, values: &[f64]) -> Var<'_> {
        self.leaf(Matrix::column(values))
    }

    fn push(&self, value: Matrix, op: Op) -> Var<'_> {
        let tracked = {
            let nodes = self.nodes.borrow();
            let t = |i: NodeId| nodes[i].tracked;
            match op {
                Op::Leaf => true,
                Op::Add(a, b) | Op::Sub(a, b) | Op::Mul(a, b) | Op::MatMul(a, b) => t(a) || t(b),
                Op::SqDist(a, b) | Op::SolvePsd(a, b) => t(a) || t(b),
                Op::Scale(a, _)
                | Op::Offset(a)
                | Op::Transpose(a)
                | Op::Exp(a)
                | Op::Ln(a)
                | Op::Softplus(a)
                | Op::Recip(a)
                | Op::Sum(a)
                | Op::Trace(a)
                | Op::DiagPart(a)
                | Op::DiagEmbed(a)
                | Op::Entry(a, _, _)
                | Op::LogDet(a) => t(a),
            }
        };
        self.push_node(value, op, tracked)
    }

    fn push_node(&self, value: Matrix, op: Op, tracked: bool) -> Var<'_> {
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node {
            value: Rc::new(value),
            op,
            tracked,
        });
        Var {
            tape: self,
            id: nodes.len() - 1,
        }
    }

    fn value(&self, id: NodeId) -> Rc<Matrix> {
        Rc::clone(&self.nodes.borrow()[id].value)
    }

    fn factor(&self, id: NodeId) -> Result<Rc<CholFactor>> {
        if let Some(f) = self.factors.borrow().get(&id) {
            return Ok(Rc::clone(f));
        }
        let f = Rc::new(linalg::cholesky_default(&self.value(id))?);
        self.factors.borrow_mut().insert(id, Rc::clone(&f));
        Ok(f)
    }
}

fn mismatch(op: &'static str, a: (usize, usize), b: (usize, usize)) -> Error {
    Error::DimensionMismatch {
        op,
        detail: format!("{a:?} vs {b:?}"),
    }
}

/// Shape of an elementwise result; 1×1 operands broadcast.
fn broadcast_shape(a: (usize, usize), b: (usize, usize)) -> Option<(usize, usize)> {
    if a == b || b == (1, 1) {
        Some(a)
    } else if a == (1, 1) {
        Some(b)
    } else {
        None
    }
}

fn elementwise(a: &Matrix, b: &Matrix, f: impl Fn(f64, f64) -> f64) -> Matrix {
    match (a.shape(), b.shape()) {
        (sa, sb) if sa == sb => a.zip_map(b, f),
        (_, (1, 1)) => {
            let s = b.to_scalar();
            a.map(|x| f(x, s))
        }
        _ => {
            let s = a.to_scalar();
            b.map(|x| f(s, x))
        }
    }
}

/// Sums an adjoint down to `shape` when the operand was broadcast.
fn reduce_to(g: Matrix, shape: (usize, usize)) -> Matrix {
    if g.shape() == shape {
        g
    } else {
        Matrix::scalar(g.sum())
    }
}

impl<'t> Var<'t> {
    pub fn tape(&self) -> &'t Tape {
        self.tape
    }

    pub fn value(&self) -> Rc<Matrix> {
        self.tape.value(self.id)
    }

    pub fn shape(&self) -> (usize, usize) {
        self.tape.nodes.borrow()[self.id].value.shape()
    }

    /// Value of a 1×1 node.
    pub fn scalar_value(&self) -> f64 {
        self.value().to_scalar()
    }

    fn same_tape(&self, other: &Var<'t>) {
        assert!(
            std::ptr::eq(self.tape, other.tape),
            "vars from different tapes"
        );
    }

    fn binary_elementwise(
        self,
        other: Var<'t>,
        name: &'static str,
        f: impl Fn(f64, f64) -> f64,
        op: Op,
    ) -> Var<'t> {
        self.same_tape(&other);
        let (a, b) = (self.value(), other.value());
        if broadcast_shape(a.shape(), b.shape()).is_none() {
            panic!("{}", mismatch(name, a.shape(), b.shape()));
        }
        self.tape.push(elementwise(&a, &b, f), op)
    }

    pub fn add(self, other: Var<'t>) -> Var<'t> {
        self.binary_elementwise(other, "add", |a, b| a + b, Op::Add(self.id, other.id))
    }

    pub fn sub(self, other: Var<'t>) -> Var<'t> {
        self.binary_elementwise(other, "sub", |a, b| a - b, Op::Sub(self.id, other.id))
    }

    /// Elementwise product; a 1×1 operand broadcasts.
    pub fn mul(self, other: Var<'t>) -> Var<'t> {
        self.binary_elementwise(other, "mul", |a, b| a * b, Op::Mul(self.id, other.id))
    }

    pub fn scale(self, c: f64) -> Var<'t> {
        let v = self.value().scale(c);
        self.tape.push(v, Op::Scale(self.id, c))
    }

    pub fn neg(self) -> Var<'t> {
        self.scale(-1.0)
    }

    pub fn offset(self, c: f64) -> Var<'t> {
        let v = self.value().map(|x| x + c);
        self.tape.push(v, Op::Offset(self.id))
    }

    pub fn matmul(self, other: Var<'t>) -> Var<'t> {
        self.same_tape(&other);
        let v = self
            .value()
            .matmul(&other.value())
            .unwrap_or_else(|e| panic!("{e}"));
        self.tape.push(v, Op::MatMul(self.id, other.id))
    }

    pub fn t(self) -> Var<'t> {
        let v = self.value().transpose();
        self.tape.push(v, Op::Transpose(self.id))
    }

    pub fn exp(self) -> Var<'t> {
        let v = self.value().map(f64::exp);
        self.tape.push(v, Op::Exp(self.id))
    }

    pub fn ln(self) -> Var<'t> {
        let v = self.value().map(f64::ln);
        self.tape.push(v, Op::Ln(self.id))
    }

    pub fn softplus(self) -> Var<'t> {
        let v = self.value().map(softplus);
        self.tape.push(v, Op::Softplus(self.id))
    }

    pub fn recip(self) -> Var<'t> {
        let v = self.value().map(f64::recip);
        self.tape.push(v, Op::Recip(self.id))
    }

    pub fn square(self) -> Var<'t> {
        self.mul(self)
    }

    pub fn sum(self) -> Var<'t> {
        let v = Matrix::scalar(self.value().sum());
        self.tape.push(v, Op::Sum(self.id))
    }

    pub fn trace(self) -> Var<'t> {
        let v = Matrix::scalar(self.value().trace());
        self.tape.push(v, Op::Trace(self.id))
    }

    /// Σ aᵢⱼ·bᵢⱼ.
    pub fn dot(self, other: Var<'t>) -> Var<'t> {
        self.mul(other).sum()
    }

    /// Diagonal of a square matrix as an n×1 column.
    pub fn diag_part(self) -> Var<'t> {
        let m = self.value();
        assert!(m.is_square(), "diag_part of non-square {:?}", m.shape());
        let v = Matrix::column(&m.diag());
        self.tape.push(v, Op::DiagPart(self.id))
    }

    /// n×1 column → n×n diagonal matrix.
    pub fn diag_embed(self) -> Var<'t> {
        let m = self.value();
        assert_eq!(m.cols(), 1, "diag_embed expects a column");
        let v = Matrix::from_diag(m.as_slice());
        self.tape.push(v, Op::DiagEmbed(self.id))
    }

    pub fn entry(self, i: usize, j: usize) -> Var<'t> {
        let v = Matrix::scalar(self.value()[(i, j)]);
        self.tape.push(v, Op::Entry(self.id, i, j))
    }

    /// Pairwise squared Euclidean distances between the rows of `self`
    /// (n×d) and `other` (m×d).
    pub fn sq_dist(self, other: Var<'t>) -> Var<'t> {
        self.same_tape(&other);
        let v = sq_dist(&self.value(), &other.value()).unwrap_or_else(|e| panic!("{e}"));
        self.tape.push(v, Op::SqDist(self.id, other.id))
    }

    /// `self⁻¹ · rhs` for symmetric positive-definite `self`.
    pub fn solve_psd(self, rhs: Var<'t>) -> Result<Var<'t>> {
        self.same_tape(&rhs);
        let f = self.tape.factor(self.id)?;
        let x = linalg::solve_psd(&f, &rhs.value())?;
        Ok(self.tape.push(x, Op::SolvePsd(self.id, rhs.id)))
    }

    /// ln|self| for symmetric positive-definite `self`.
    pub fn logdet_psd(self) -> Result<Var<'t>> {
        let f = self.tape.factor(self.id)?;
        let v = Matrix::scalar(linalg::logdet_psd(&f));
        Ok(self.tape.push(v, Op::LogDet(self.id)))
    }

    /// Reverse sweep from this 1×1 node.
    pub fn backward(self) -> Result<Gradients> {
        let (rows, cols) = self.shape();
        if (rows, cols) != (1, 1) {
            return Err(Error::NonScalarLoss { rows, cols });
        }
        let loss = self.scalar_value();
        if !loss.is_finite() {
            return Err(Error::NonFiniteLoss(loss));
        }
        let tape = self.tape;
        let nodes = tape.nodes.borrow();
        let mut grads: Vec<Option<Matrix>> = vec![None; self.id + 1];
        grads[self.id] = Some(Matrix::scalar(1.0));

        fn accumulate(grads: &mut [Option<Matrix>], id: NodeId, g: Matrix) {
            match &mut grads[id] {
                Some(acc) => acc.add_assign(&g),
                slot @ None => *slot = Some(g),
            }
        }

        for id in (0..=self.id).rev() {
            let Some(g) = grads[id].take() else { continue };
            let node = &nodes[id];
            let val = |i: NodeId| Rc::clone(&nodes[i].value);
            let want = |i: NodeId| nodes[i].tracked;
            macro_rules! push {
                ($i:expr, $g:expr) => {
                    if want($i) {
                        accumulate(&mut grads, $i, $g);
                    }
                };
            }
            match node.op {
                Op::Leaf => {}
                Op::Add(a, b) => {
                    push!(b, reduce_to(g.clone(), val(b).shape()));
                    push!(a, reduce_to(g.clone(), val(a).shape()));
                }
                Op::Sub(a, b) => {
                    push!(b, reduce_to(g.scale(-1.0), val(b).shape()));
                    push!(a, reduce_to(g.clone(), val(a).shape()));
                }
                Op::Mul(a, b) => {
                    let (va, vb) = (val(a), val(b));
                    push!(b, reduce_to(elementwise(&g, &va, |x, y| x * y), vb.shape()));
                    push!(a, reduce_to(elementwise(&g, &vb, |x, y| x * y), va.shape()));
                }
                Op::Scale(a, c) => push!(a, g.scale(c)),
                Op::Offset(a) => push!(a, g.clone()),
                Op::MatMul(a, b) => {
                    push!(b, val(a).transpose().matmul_unchecked(&g));
                    push!(a, g.matmul_unchecked(&val(b).transpose()));
                }
                Op::Transpose(a) => push!(a, g.transpose()),
                Op::Exp(a) => push!(a, g.hadamard(&node.value)),
                Op::Ln(a) => push!(a, g.zip_map(&val(a), |x, y| x / y)),
                Op::Softplus(a) => push!(a, g.zip_map(&val(a), |x, y| x * sigmoid(y))),
                Op::Recip(a) => push!(a, g.zip_map(&node.value, |x, r| -x * r * r)),
                Op::Sum(a) => {
                    let (r, c) = val(a).shape();
                    push!(a, Matrix::filled(r, c, g.to_scalar()));
                }
                Op::Trace(a) => {
                    let n = val(a).rows();
                    push!(a, Matrix::identity(n).scale(g.to_scalar()));
                }
                Op::DiagPart(a) => push!(a, Matrix::from_diag(g.as_slice())),
                Op::DiagEmbed(a) => push!(a, Matrix::column(&g.diag())),
                Op::Entry(a, i, j) => {
                    let (r, c) = val(a).shape();
                    let mut ga = Matrix::zeros(r, c);
                    ga[(i, j)] = g.to_scalar();
                    push!(a, ga);
                }
                Op::SqDist(a, b) => {
                    if want(a) || want(b) {
                        let (ga, gb) = sq_dist_adjoint(&val(a), &val(b), &g);
                        push!(b, gb);
                        push!(a, ga);
                    }
                }
                Op::SolvePsd(a, b) => {
                    let f = tape.factor(a)?;
                    let gb = linalg::solve_psd(&f, &g)?;
                    push!(a, gb.matmul_unchecked(&node.value.transpose()).scale(-1.0));
                    push!(b, gb);
                }
                Op::LogDet(a) => {
                    if want(a) {
                        let f = tape.factor(a)?;
                        accumulate(&mut grads, a, linalg::inverse_psd(&f).scale(g.to_scalar()));
                    }
                }
            }
            grads[id] = Some(g);
        }
        Ok(Gradients { loss, grads })
    }
}

/// Adjoints from one reverse sweep.
pub struct Gradients {
    loss: f64,
    grads: Vec<Option<Matrix>>,
}

impl Gradients {
    pub fn loss(&self) -> f64 {
        self.loss
    }

    /// Adjoint of `v`; zeros when the loss does not depend on it.
    pub fn wrt(&self, v: Var<'_>) -> Matrix {
        match self.grads.get(v.id).and_then(Option::as_ref) {
            Some(g) => g.clone(),
            None => {
                let (r, c) = v.shape();
                Matrix::zeros(r, c)
            }
        }
    }
}

pub fn sq_dist(a: &Matrix, b: &Matrix) -> Result<Matrix> {
    if a.cols() != b.cols() {
        return Err(mismatch("sq_dist", a.shape(), b.shape()));
    }
    let (n, m) = (a.rows(), b.rows());
    let mut out = Matrix::zeros(n, m);
    for i in 0..n {
        let ai = a.row(i);
        for j in 0..m {
            out[(i, j)] = ai
                .iter()
                .zip(b.row(j))
                .map(|(x, y)| (x - y) * (x - y))
                .sum();
        }
    }
    Ok(out)
}

fn sq_dist_adjoint(a: &Matrix, b: &Matrix, g: &Matrix) -> (Matrix, Matrix) {
    let (n, m, d) = (a.rows(), b.rows(), a.cols());
    let mut ga = Matrix::zeros(n, d);
    let mut gb = Matrix::zeros(m, d);
    for i in 0..n {
        for j in 0..m {
            let gij = 2.0 * g[(i, j)];
            if gij == 0.0 {
                continue;
            }
            for k in 0..d {
                let diff = gij * (a[(i, k)] - b[(j, k)]);
                ga[(i, k)] += diff;
                gb[(j, k)] -= diff;
            }
        }
    }
    (ga, gb)
}

/// One leaf per parameter segment, recorded on a tape.
pub struct ParamVars<'t> {
    vars: Vec<(Segment, Var<'t>)>,
}

impl<'t> ParamVars<'t> {
    pub fn record(tape: &'t Tape, p: &ParamVector) -> Self {
        let vars = p
            .layout()
            .segments()
            .iter()
            .map(|seg| (seg.clone(), tape.leaf(p.segment_matrix(seg.kind))))
            .collect();
        Self { vars }
    }

    pub fn get(&self, kind: SegmentKind) -> Option<Var<'t>> {
        self.vars.iter().find(|(s, _)| s.kind == kind).map(|(_, v)| *v)
    }

    /// Like [`get`](Self::get) but panics on a missing segment; the layout
    /// is fixed by whoever built the parameter vector.
    pub fn seg(&self, kind: SegmentKind) -> Var<'t> {
        self.get(kind)
            .unwrap_or_else(|| panic!("parameter layout has no {kind:?} segment"))
    }
}

/// Identity that pins a closure to the objective signature, so its
/// lifetimes are inferred as higher-ranked.
pub fn objective<F>(f: F) -> F
where
    F: for<'t> Fn(&'t Tape, &ParamVars<'t>) -> Result<Var<'t>>,
{
    f
}

/// Loss and gradient of `loss_fn` at `p`. The gradient has `p`'s layout.
pub fn backward_gradient<F>(loss_fn: F, p: &ParamVector) -> Result<(f64, ParamVector)>
where
    F: for<'t> Fn(&'t Tape, &ParamVars<'t>) -> Result<Var<'t>>,
{
    let tape = Tape::new();
    let vars = ParamVars::record(&tape, p);
    let loss = loss_fn(&tape, &vars)?;
    let grads = loss.backward()?;
    let mut flat = vec![0.0; p.len()];
    for (seg, var) in &vars.vars {
        let g = grads.wrt(*var);
        flat[seg.offset..seg.offset + seg.len()].copy_from_slice(g.as_slice());
    }
    if flat.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFiniteGradient);
    }
    Ok((grads.loss(), p.with_values(flat)))
}

/// Forward evaluation only.
pub fn evaluate<F>(loss_fn: F, p: &ParamVector) -> Result<f64>
where
    F: for<'t> Fn(&'t Tape, &ParamVars<'t>) -> Result<Var<'t>>,
{
    let tape = Tape::new();
    let vars = ParamVars::record(&tape, p);
    let loss = loss_fn(&tape, &vars)?;
    let (rows, cols) = loss.shape();
    if (rows, cols) != (1, 1) {
        return Err(Error::NonScalarLoss { rows, cols });
    }
    let v = loss.scalar_value();
    if !v.is_finite() {
        return Err(Error::NonFiniteLoss(v));
    }
    Ok(v)
}

/// Largest relative discrepancy between the reverse-mode gradient and
/// central finite differences with per-coordinate step `step·(1+|pᵢ|)`:
/// `maxᵢ |g_ad − g_fd| / (1e-8 + |g_fd| + |g_ad|)`.
pub fn finite_diff_check<F>(loss_fn: F, p: &ParamVector, step: f64) -> Result<f64>
where
    F: for<'t> Fn(&'t Tape, &ParamVars<'t>) -> Result<Var<'t>>,
{
    if !(step > 0.0) {
        return Err(Error::InvalidConfig(format!(
            "finite-difference step must be positive, got {step}"
        )));
    }
    let (_, ad) = backward_gradient(&loss_fn, p)?;
    let mut worst = 0.0_f64;
    for i in 0..p.len() {
        let h = step * (1.0 + p.values()[i].abs());
        let mut plus = p.values().to_vec();
        plus[i] += h;
        let mut minus = p.values().to_vec();
        minus[i] -= h;
        let fp = evaluate(&loss_fn, &p.with_values(plus))?;
        let fm = evaluate(&loss_fn, &p.with_values(minus))?;
        let fd = (fp - fm) / (2.0 * h);
        let g = ad.values()[i];
        worst = worst.max((g - fd).abs() / (1e-8 + fd.abs() + g.abs()));
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::ParamLayout;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn single_segment(values: Vec<f64>, rows: usize, cols: usize) -> ParamVector {
        let layout = ParamLayout::new(vec![(SegmentKind::Kernel, rows, cols)]);
        ParamVector::new(layout, values).unwrap()
    }

    #[test]
    fn quadratic_gradient() {
        let p = single_segment(vec![3.0], 1, 1);
        let (loss, g) =
            backward_gradient(|_, v| Ok(v.seg(SegmentKind::Kernel).square().sum()), &p).unwrap();
        assert_eq!(loss, 9.0);
        assert_eq!(g.values(), &[6.0]);
    }

    #[test]
    fn constant_loss_has_zero_gradient() {
        let p = single_segment(vec![1.0, -2.0, 0.5], 3, 1);
        let (loss, g) = backward_gradient(|t, _| Ok(t.scalar(4.25)), &p).unwrap();
        assert_eq!(loss, 4.25);
        assert!(g.values().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn non_scalar_and_non_finite_losses_are_rejected() {
        let p = single_segment(vec![1.0, 2.0], 2, 1);
        let r = backward_gradient(|_, v| Ok(v.seg(SegmentKind::Kernel)), &p);
        assert!(matches!(r, Err(Error::NonScalarLoss { rows: 2, cols: 1 })));
        let r = backward_gradient(|_, v| Ok(v.seg(SegmentKind::Kernel).scale(-1.0).ln().sum()), &p);
        assert!(matches!(r, Err(Error::NonFiniteLoss(_))));
    }

    #[test]
    fn quadratic_finite_difference_is_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let vals: Vec<f64> = (0..6).map(|_| rng.gen_range(-3.0..3.0)).collect();
        let p = single_segment(vals, 6, 1);
        let err = finite_diff_check(
            |_, v| Ok(v.seg(SegmentKind::Kernel).square().sum().scale(0.5)),
            &p,
            1e-5,
        )
        .unwrap();
        assert!(err <= 1e-9, "{err}");
    }

    #[test]
    fn every_primitive_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let vals: Vec<f64> = (0..12).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let p = single_segment(vals, 4, 3);
        let loss = objective(|t, v| {
            let _ = t;
            let x = v.seg(SegmentKind::Kernel);
            let d = x.sq_dist(x.scale(0.7)); // 4×4
            let k = d.scale(-0.5).exp().add(x.matmul(x.t()).softplus().scale(0.1));
            let k = k.add(k.t()).scale(0.5);
            let a = k.add(x.entry(0, 0).square().offset(1.0).mul(t.leaf(Matrix::identity(4))));
            let rhs = x.matmul(x.t().entry(1, 2).exp().mul(x.t()));
            let s = a.solve_psd(rhs)?;
            let ld = a.logdet_psd()?;
            let tr = s.trace();
            let dg = a.diag_part().recip().diag_embed().sum();
            Ok(ld.add(tr).sub(dg).add(x.sub(x.scale(2.0)).dot(x).neg()))
        });
        let err = finite_diff_check(loss, &p, 1e-5).unwrap();
        assert!(err <= 1e-6, "{err}");
    }

    #[test]
    fn cholesky_solve_adjoint_alone() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let vals: Vec<f64> = (0..9).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let p = single_segment(vals, 3, 3);
        let loss = objective(|t, v| {
            let b = v.seg(SegmentKind::Kernel);
            let a = b.matmul(b.t()).add(t.leaf(Matrix::identity(3)));
            let rhs = t.leaf(Matrix::from_rows(&[vec![1.0], vec![-2.0], vec![0.5]]).unwrap());
            let x = a.solve_psd(rhs)?;
            Ok(x.square().sum())
        });
        assert!(finite_diff_check(loss, &p, 1e-5).unwrap() <= 1e-6);
    }

    #[test]
    fn deterministic_gradients() {
        let p = single_segment(vec![0.3, -0.2, 1.1, 0.4], 2, 2);
        let loss = objective(|t, v| {
            let x = v.seg(SegmentKind::Kernel);
            let a = x.matmul(x.t()).add(t.leaf(Matrix::identity(2)));
            a.logdet_psd()
        });
        let (_, g1) = backward_gradient(loss, &p).unwrap();
        let (_, g2) = backward_gradient(loss, &p).unwrap();
        let bits = |g: &ParamVector| g.values().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&g1), bits(&g2));
    }

    #[test]
    fn rejects_non_positive_step() {
        let p = single_segment(vec![1.0], 1, 1);
        assert!(finite_diff_check(objective(|_, v| Ok(v.seg(SegmentKind::Kernel).sum())), &p, 0.0).is_err());
    }
}
