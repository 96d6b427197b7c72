//! Reverse-mode automatic differentiation over [`Tensor`] values.
//!
//! Operations are recorded on a [`Tape`] in creation order, which is also a
//! topological order, so the backward pass is a single reverse sweep.

use alloc::boxed::Box;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;
use core::cell::{Ref, RefCell};

use super::tensor::{matmul_into, matmul_nt_into, matmul_tn_into, Tensor};
use crate::{Error, Result};

/// Vector-Jacobian product of a user-defined op: `(grad_out, parent values, out value) -> parent grads`.
pub type CustomVjp = Box<dyn Fn(&Tensor, &[&Tensor], &Tensor) -> Vec<Tensor>>;

#[derive(Clone, Copy, Debug, PartialEq)]
enum Unary {
    Tanh,
    Sigmoid,
    Softplus,
    Exp,
    Ln,
    Sqrt,
    Recip,
    Square,
    Powf(f64),
}

enum Op {
    Leaf,
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    MulCol(usize, usize),
    AddRow(usize, usize),
    Scale(usize, f64),
    Offset(usize),
    MatMul(usize, usize),
    BmmLeft(usize, usize),
    Unary(usize, Unary),
    Clamp(usize, f64, f64),
    SumAll(usize),
    MeanAll(usize),
    SumLast(usize),
    NormLast(usize),
    Gather(usize, Vec<usize>),
    ScatterAdd(usize, Vec<usize>),
    Concat(Vec<usize>),
    Reshape(usize),
    Outer(usize, usize),
    Custom(Vec<usize>, CustomVjp),
}

impl Op {
    fn name(&self) -> &'static str {
        match self {
            Op::Leaf => "leaf",
            Op::Add(..) => "add",
            Op::Sub(..) => "sub",
            Op::Mul(..) => "mul",
            Op::MulCol(..) => "mul_col",
            Op::AddRow(..) => "add_row",
            Op::Scale(..) => "scale",
            Op::Offset(..) => "offset",
            Op::MatMul(..) => "matmul",
            Op::BmmLeft(..) => "bmm_left",
            Op::Unary(_, u) => match u {
                Unary::Tanh => "tanh",
                Unary::Sigmoid => "sigmoid",
                Unary::Softplus => "softplus",
                Unary::Exp => "exp",
                Unary::Ln => "ln",
                Unary::Sqrt => "sqrt",
                Unary::Recip => "recip",
                Unary::Square => "square",
                Unary::Powf(_) => "powf",
            },
            Op::Clamp(..) => "clamp",
            Op::SumAll(..) => "sum",
            Op::MeanAll(..) => "mean",
            Op::SumLast(..) => "sum_last",
            Op::NormLast(..) => "norm_last",
            Op::Gather(..) => "gather",
            Op::ScatterAdd(..) => "scatter_add",
            Op::Concat(..) => "concat",
            Op::Reshape(..) => "reshape",
            Op::Outer(..) => "outer",
            Op::Custom(..) => "custom",
        }
    }
}

struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

/// Records a computation for one backward pass. Single-threaded.
#[derive(Default)]
pub struct Tape {
    nodes: RefCell<Vec<Node>>,
    first_non_finite: RefCell<Option<String>>,
}

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy)]
pub struct Var<'t> {
    tape: &'t Tape,
    id: usize,
}

impl core::fmt::Debug for Var<'_> {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        write!(f, "Var#{}{:?}", self.id, self.shape())
    }
}

pub fn stable_sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + libm::exp(-x))
    } else {
        let e = libm::exp(x);
        e / (1.0 + e)
    }
}

pub fn softplus(x: f64) -> f64 {
    x.max(0.0) + libm::log1p(libm::exp(-libm::fabs(x)))
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

    /// A leaf that receives a gradient.
    pub fn param(&self, value: Tensor) -> Var<'_> {
        self.push(value, Op::Leaf, true)
    }

    /// A leaf treated as a constant.
    pub fn constant(&self, value: Tensor) -> Var<'_> {
        self.push(value, Op::Leaf, false)
    }

    pub fn scalar(&self, value: f64) -> Var<'_> {
        self.constant(Tensor::scalar(value))
    }

    fn push(&self, value: Tensor, op: Op, requires_grad: bool) -> Var<'_> {
        if !value.is_finite() {
            let mut flag = self.first_non_finite.borrow_mut();
            if flag.is_none() {
                *flag = Some(op.name().to_string());
            }
        }
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node { value, op, requires_grad });
        Var { tape: self, id: nodes.len() - 1 }
    }

    fn value_of(&self, id: usize) -> Ref<'_, Tensor> {
        Ref::map(self.nodes.borrow(), |n| &n[id].value)
    }

    fn rg(&self, id: usize) -> bool {
        self.nodes.borrow()[id].requires_grad
    }

    /// Errors if any recorded op produced NaN or infinity.
    pub fn ensure_finite(&self) -> Result<()> {
        match &*self.first_non_finite.borrow() {
            Some(op) => Err(Error::NonFinite { op: op.clone() }),
            None => Ok(()),
        }
    }

    /// Concatenate along axis 0. Trailing extents must agree.
    pub fn concat<'t>(&'t self, parts: &[Var<'t>]) -> Result<Var<'t>> {
        let first = parts.first().ok_or_else(|| Error::arg("concat of nothing"))?;
        let tail: Vec<usize> = first.shape()[1..].to_vec();
        let mut lead = 0;
        let mut data = Vec::new();
        for p in parts {
            let v = p.tape.value_of(p.id);
            if v.rank() == 0 || v.shape()[1..] != tail[..] {
                return Err(Error::shape("concat", format!("{:?} vs tail {tail:?}", v.shape())));
            }
            lead += v.shape()[0];
            data.extend_from_slice(v.data());
        }
        let mut shape = vec![lead];
        shape.extend_from_slice(&tail);
        let rg = parts.iter().any(|p| self.rg(p.id));
        Ok(self.push(Tensor::new(&shape, data)?, Op::Concat(parts.iter().map(|p| p.id).collect()), rg))
    }

    /// Record an op with a hand-written vector-Jacobian product.
    pub fn custom<'t>(&'t self, parents: &[Var<'t>], value: Tensor, vjp: CustomVjp) -> Var<'t> {
        let rg = parents.iter().any(|p| self.rg(p.id));
        self.push(value, Op::Custom(parents.iter().map(|p| p.id).collect(), vjp), rg)
    }

    /// Reverse sweep from a scalar root.
    pub fn backward(&self, root: Var<'_>) -> Result<Gradients> {
        self.ensure_finite()?;
        let nodes = self.nodes.borrow();
        let n_root = nodes[root.id].value.len();
        if n_root != 1 {
            return Err(Error::arg(format!("backward needs a scalar root, got shape {:?}", nodes[root.id].value.shape())));
        }
        let mut grads: Vec<Option<Tensor>> = (0..=root.id).map(|_| None).collect();
        if !nodes[root.id].requires_grad {
            return Ok(Gradients { grads });
        }
        grads[root.id] = Some(Tensor::full(nodes[root.id].value.shape(), 1.0));

        for i in (0..=root.id).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &nodes[i];
            if !node.requires_grad {
                continue;
            }
            let gd = g.data();
            let val = |id: usize| &nodes[id].value;
            let want = |id: usize| nodes[id].requires_grad;
            match &node.op {
                Op::Leaf => {
                    grads[i] = Some(g);
                    continue;
                }
                Op::Add(a, b) => {
                    for &p in [a, b] {
                        if want(p) {
                            slot(&mut grads, p, val(p)).add_assign(&g);
                        }
                    }
                }
                Op::Sub(a, b) => {
                    if want(*a) {
                        slot(&mut grads, *a, val(*a)).add_assign(&g);
                    }
                    if want(*b) {
                        for (o, x) in slot(&mut grads, *b, val(*b)).data_mut().iter_mut().zip(gd) {
                            *o -= x;
                        }
                    }
                }
                Op::Mul(a, b) => {
                    let (va, vb) = (val(*a).data(), val(*b).data());
                    if want(*a) {
                        for ((o, x), y) in slot(&mut grads, *a, val(*a)).data_mut().iter_mut().zip(gd).zip(vb) {
                            *o += x * y;
                        }
                    }
                    if want(*b) {
                        for ((o, x), y) in slot(&mut grads, *b, val(*b)).data_mut().iter_mut().zip(gd).zip(va) {
                            *o += x * y;
                        }
                    }
                }
                Op::MulCol(x, s) => {
                    let (vx, vs) = (val(*x), val(*s));
                    let c = vx.len() / vs.len();
                    if want(*x) {
                        let gx = slot(&mut grads, *x, vx);
                        for (r, (orow, grow)) in gx.data_mut().chunks_exact_mut(c).zip(gd.chunks_exact(c)).enumerate() {
                            let sv = vs.data()[r];
                            for (o, gv) in orow.iter_mut().zip(grow) {
                                *o += gv * sv;
                            }
                        }
                    }
                    if want(*s) {
                        let gs = slot(&mut grads, *s, vs);
                        for (r, (xrow, grow)) in vx.data().chunks_exact(c).zip(gd.chunks_exact(c)).enumerate() {
                            gs.data_mut()[r] += xrow.iter().zip(grow).map(|(a, b)| a * b).sum::<f64>();
                        }
                    }
                }
                Op::AddRow(x, b) => {
                    if want(*x) {
                        slot(&mut grads, *x, val(*x)).add_assign(&g);
                    }
                    if want(*b) {
                        let c = val(*b).len();
                        let gb = slot(&mut grads, *b, val(*b));
                        for row in gd.chunks_exact(c) {
                            for (o, v) in gb.data_mut().iter_mut().zip(row) {
                                *o += v;
                            }
                        }
                    }
                }
                Op::Scale(a, c) => {
                    if want(*a) {
                        for (o, x) in slot(&mut grads, *a, val(*a)).data_mut().iter_mut().zip(gd) {
                            *o += c * x;
                        }
                    }
                }
                Op::Offset(a) | Op::Reshape(a) => {
                    if want(*a) {
                        for (o, x) in slot(&mut grads, *a, val(*a)).data_mut().iter_mut().zip(gd) {
                            *o += x;
                        }
                    }
                }
                Op::MatMul(a, b) => {
                    let (va, vb) = (val(*a), val(*b));
                    let (m, k, n) = (va.shape()[0], va.shape()[1], vb.shape()[1]);
                    if want(*a) {
                        matmul_nt_into(gd, vb.data(), slot(&mut grads, *a, va).data_mut(), m, k, n);
                    }
                    if want(*b) {
                        matmul_tn_into(va.data(), gd, slot(&mut grads, *b, vb).data_mut(), m, k, n);
                    }
                }
                Op::BmmLeft(a, x) => {
                    let (va, vx) = (val(*a), val(*x));
                    let (t, s) = (va.shape()[0], va.shape()[1]);
                    let (b, d) = (vx.shape()[0], vx.shape()[2]);
                    if want(*a) {
                        let ga = slot(&mut grads, *a, va);
                        for bi in 0..b {
                            matmul_nt_into(
                                &gd[bi * t * d..(bi + 1) * t * d],
                                &vx.data()[bi * s * d..(bi + 1) * s * d],
                                ga.data_mut(),
                                t,
                                s,
                                d,
                            );
                        }
                    }
                    if want(*x) {
                        let gx = slot(&mut grads, *x, vx);
                        for bi in 0..b {
                            matmul_tn_into(
                                va.data(),
                                &gd[bi * t * d..(bi + 1) * t * d],
                                &mut gx.data_mut()[bi * s * d..(bi + 1) * s * d],
                                t,
                                s,
                                d,
                            );
                        }
                    }
                }
                Op::Unary(a, u) => {
                    if want(*a) {
                        let (x, y) = (val(*a).data(), node.value.data());
                        let ga = slot(&mut grads, *a, val(*a));
                        for (((o, gv), &xv), &yv) in ga.data_mut().iter_mut().zip(gd).zip(x).zip(y) {
                            let d = match u {
                                Unary::Tanh => 1.0 - yv * yv,
                                Unary::Sigmoid => yv * (1.0 - yv),
                                Unary::Softplus => stable_sigmoid(xv),
                                Unary::Exp => yv,
                                Unary::Ln => 1.0 / xv,
                                Unary::Sqrt => {
                                    if yv > 0.0 {
                                        0.5 / yv
                                    } else {
                                        0.0
                                    }
                                }
                                Unary::Recip => -yv * yv,
                                Unary::Square => 2.0 * xv,
                                Unary::Powf(c) => c * libm::pow(xv, c - 1.0),
                            };
                            *o += gv * d;
                        }
                    }
                }
                Op::Clamp(a, lo, hi) => {
                    if want(*a) {
                        let x = val(*a).data();
                        for ((o, gv), &xv) in slot(&mut grads, *a, val(*a)).data_mut().iter_mut().zip(gd).zip(x) {
                            if xv >= *lo && xv <= *hi {
                                *o += gv;
                            }
                        }
                    }
                }
                Op::SumAll(a) | Op::MeanAll(a) => {
                    if want(*a) {
                        let n = val(*a).len() as f64;
                        let s = if matches!(node.op, Op::MeanAll(_)) { gd[0] / n } else { gd[0] };
                        for o in slot(&mut grads, *a, val(*a)).data_mut() {
                            *o += s;
                        }
                    }
                }
                Op::SumLast(a) => {
                    if want(*a) {
                        let c = *val(*a).shape().last().unwrap();
                        let ga = slot(&mut grads, *a, val(*a));
                        for (row, gv) in ga.data_mut().chunks_exact_mut(c).zip(gd) {
                            for o in row {
                                *o += gv;
                            }
                        }
                    }
                }
                Op::NormLast(a) => {
                    if want(*a) {
                        let va = val(*a);
                        let c = *va.shape().last().unwrap();
                        let y = node.value.data();
                        let ga = slot(&mut grads, *a, va);
                        for (r, (orow, xrow)) in ga.data_mut().chunks_exact_mut(c).zip(va.data().chunks_exact(c)).enumerate() {
                            if y[r] > 0.0 {
                                let s = gd[r] / y[r];
                                for (o, xv) in orow.iter_mut().zip(xrow) {
                                    *o += s * xv;
                                }
                            }
                        }
                    }
                }
                Op::Gather(a, idx) => {
                    if want(*a) {
                        let ga = slot(&mut grads, *a, val(*a)).data_mut();
                        for (k, &src) in idx.iter().enumerate() {
                            ga[src] += gd[k];
                        }
                    }
                }
                Op::ScatterAdd(a, idx) => {
                    if want(*a) {
                        let ga = slot(&mut grads, *a, val(*a)).data_mut();
                        for (k, &dst) in idx.iter().enumerate() {
                            ga[k] += gd[dst];
                        }
                    }
                }
                Op::Concat(parts) => {
                    let mut off = 0;
                    for &p in parts {
                        let n = val(p).len();
                        if want(p) {
                            for (o, x) in slot(&mut grads, p, val(p)).data_mut().iter_mut().zip(&gd[off..off + n]) {
                                *o += x;
                            }
                        }
                        off += n;
                    }
                }
                Op::Outer(a, b) => {
                    let (va, vb) = (val(*a), val(*b));
                    let m = vb.len();
                    if want(*a) {
                        let ga = slot(&mut grads, *a, va);
                        for (i, row) in gd.chunks_exact(m).enumerate() {
                            ga.data_mut()[i] += row.iter().zip(vb.data()).map(|(x, y)| x * y).sum::<f64>();
                        }
                    }
                    if want(*b) {
                        let gb = slot(&mut grads, *b, vb);
                        for (i, row) in gd.chunks_exact(m).enumerate() {
                            let ai = va.data()[i];
                            for (o, x) in gb.data_mut().iter_mut().zip(row) {
                                *o += ai * x;
                            }
                        }
                    }
                }
                Op::Custom(parents, vjp) => {
                    let pv: Vec<&Tensor> = parents.iter().map(|&p| val(p)).collect();
                    let contrib = vjp(&g, &pv, &node.value);
                    for (&p, c) in parents.iter().zip(contrib) {
                        if want(p) {
                            if c.len() != val(p).len() {
                                return Err(Error::shape("custom vjp", format!("{:?} vs {:?}", c.shape(), val(p).shape())));
                            }
                            slot(&mut grads, p, val(p)).add_assign(&c);
                        }
                    }
                }
            }
        }
        Ok(Gradients { grads })
    }
}

fn slot<'g>(grads: &'g mut [Option<Tensor>], id: usize, like: &Tensor) -> &'g mut Tensor {
    grads[id].get_or_insert_with(|| Tensor::zeros(like.shape()))
}

/// Leaf gradients from one backward pass.
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    /// Gradient with respect to `v`; zeros when `v` did not reach the root.
    pub fn wrt(&self, v: Var<'_>) -> Tensor {
        match self.grads.get(v.id).and_then(|g| g.as_ref()) {
            Some(g) => g.clone(),
            None => Tensor::zeros(v.shape().as_slice()),
        }
    }
}

fn same_shape(op: &'static str, a: &Tensor, b: &Tensor) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(Error::shape(op, format!("{:?} vs {:?}", a.shape(), b.shape())));
    }
    Ok(())
}

impl<'t> Var<'t> {
    pub fn tape(&self) -> &'t Tape {
        self.tape
    }

    pub fn value(&self) -> Tensor {
        self.tape.value_of(self.id).clone()
    }

    pub fn shape(&self) -> Vec<usize> {
        self.tape.value_of(self.id).shape().to_vec()
    }

    pub fn len(&self) -> usize {
        self.tape.value_of(self.id).len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn item(&self) -> f64 {
        self.tape.value_of(self.id).item()
    }

    fn rg(&self) -> bool {
        self.tape.rg(self.id)
    }

    fn elementwise(
        self,
        other: Var<'t>,
        op: &'static str,
        f: impl Fn(f64, f64) -> f64,
        mk: fn(usize, usize) -> Op,
    ) -> Result<Var<'t>> {
        let value = {
            let (a, b) = (self.tape.value_of(self.id), self.tape.value_of(other.id));
            same_shape(op, &a, &b)?;
            a.zip_map(&b, f)?
        };
        let rg = self.rg() || other.rg();
        Ok(self.tape.push(value, mk(self.id, other.id), rg))
    }

    pub fn add(self, other: Var<'t>) -> Result<Var<'t>> {
        self.elementwise(other, "add", |a, b| a + b, Op::Add)
    }

    pub fn sub(self, other: Var<'t>) -> Result<Var<'t>> {
        self.elementwise(other, "sub", |a, b| a - b, Op::Sub)
    }

    pub fn mul(self, other: Var<'t>) -> Result<Var<'t>> {
        self.elementwise(other, "mul", |a, b| a * b, Op::Mul)
    }

    /// `x[r, c] * s[r]`, with `s` holding one value per row.
    pub fn mul_col(self, s: Var<'t>) -> Result<Var<'t>> {
        let value = {
            let (x, sv) = (self.tape.value_of(self.id), self.tape.value_of(s.id));
            if x.len() % sv.len() != 0 || x.rank() == 0 || x.len() / sv.len() != *x.shape().last().unwrap() {
                return Err(Error::shape("mul_col", format!("{:?} by {:?}", x.shape(), sv.shape())));
            }
            let c = x.len() / sv.len();
            let mut out = x.clone();
            for (row, &k) in out.data_mut().chunks_exact_mut(c).zip(sv.data()) {
                for v in row {
                    *v *= k;
                }
            }
            out
        };
        let rg = self.rg() || s.rg();
        Ok(self.tape.push(value, Op::MulCol(self.id, s.id), rg))
    }

    /// `x[.., c] + b[c]` broadcast over leading axes.
    pub fn add_row(self, b: Var<'t>) -> Result<Var<'t>> {
        let value = {
            let (x, bv) = (self.tape.value_of(self.id), self.tape.value_of(b.id));
            let c = bv.len();
            if bv.rank() != 1 || x.rank() == 0 || *x.shape().last().unwrap() != c {
                return Err(Error::shape("add_row", format!("{:?} + {:?}", x.shape(), bv.shape())));
            }
            let mut out = x.clone();
            for row in out.data_mut().chunks_exact_mut(c) {
                for (v, bb) in row.iter_mut().zip(bv.data()) {
                    *v += bb;
                }
            }
            out
        };
        let rg = self.rg() || b.rg();
        Ok(self.tape.push(value, Op::AddRow(self.id, b.id), rg))
    }

    pub fn scale(self, c: f64) -> Var<'t> {
        let value = self.tape.value_of(self.id).scale(c);
        self.tape.push(value, Op::Scale(self.id, c), self.rg())
    }

    pub fn neg(self) -> Var<'t> {
        self.scale(-1.0)
    }

    pub fn offset(self, c: f64) -> Var<'t> {
        let value = self.tape.value_of(self.id).map(|v| v + c);
        self.tape.push(value, Op::Offset(self.id), self.rg())
    }

    /// Rank-2 matrix product.
    pub fn matmul(self, other: Var<'t>) -> Result<Var<'t>> {
        let value = self.tape.value_of(self.id).matmul(&self.tape.value_of(other.id))?;
        let rg = self.rg() || other.rg();
        Ok(self.tape.push(value, Op::MatMul(self.id, other.id), rg))
    }

    /// Apply the `[t, s]` matrix `self` to every `[s, d]` slice of `x: [b, s, d]`.
    pub fn bmm_left(self, x: Var<'t>) -> Result<Var<'t>> {
        let value = {
            let (a, xv) = (self.tape.value_of(self.id), self.tape.value_of(x.id));
            if a.rank() != 2 || xv.rank() != 3 || a.shape()[1] != xv.shape()[1] {
                return Err(Error::shape("bmm_left", format!("{:?} x {:?}", a.shape(), xv.shape())));
            }
            let (t, s) = (a.shape()[0], a.shape()[1]);
            let (b, d) = (xv.shape()[0], xv.shape()[2]);
            let mut out = vec![0.0; b * t * d];
            for bi in 0..b {
                matmul_into(a.data(), &xv.data()[bi * s * d..(bi + 1) * s * d], &mut out[bi * t * d..(bi + 1) * t * d], t, s, d);
            }
            Tensor::new(&[b, t, d], out)?
        };
        let rg = self.rg() || x.rg();
        Ok(self.tape.push(value, Op::BmmLeft(self.id, x.id), rg))
    }

    fn unary(self, u: Unary) -> Var<'t> {
        let value = self.tape.value_of(self.id).map(|x| match u {
            Unary::Tanh => libm::tanh(x),
            Unary::Sigmoid => stable_sigmoid(x),
            Unary::Softplus => softplus(x),
            Unary::Exp => libm::exp(x),
            Unary::Ln => libm::log(x),
            Unary::Sqrt => libm::sqrt(x),
            Unary::Recip => 1.0 / x,
            Unary::Square => x * x,
            Unary::Powf(c) => libm::pow(x, c),
        });
        self.tape.push(value, Op::Unary(self.id, u), self.rg())
    }

    pub fn tanh(self) -> Var<'t> {
        self.unary(Unary::Tanh)
    }

    pub fn sigmoid(self) -> Var<'t> {
        self.unary(Unary::Sigmoid)
    }

    pub fn softplus(self) -> Var<'t> {
        self.unary(Unary::Softplus)
    }

    pub fn exp(self) -> Var<'t> {
        self.unary(Unary::Exp)
    }

    pub fn ln(self) -> Var<'t> {
        self.unary(Unary::Ln)
    }

    pub fn sqrt(self) -> Var<'t> {
        self.unary(Unary::Sqrt)
    }

    pub fn recip(self) -> Var<'t> {
        self.unary(Unary::Recip)
    }

    pub fn square(self) -> Var<'t> {
        self.unary(Unary::Square)
    }

    pub fn powf(self, c: f64) -> Var<'t> {
        self.unary(Unary::Powf(c))
    }

    /// Clamp into `[lo, hi]`; the gradient is zero outside the interval.
    pub fn clamp(self, lo: f64, hi: f64) -> Var<'t> {
        let value = self.tape.value_of(self.id).map(|x| x.clamp(lo, hi));
        self.tape.push(value, Op::Clamp(self.id, lo, hi), self.rg())
    }

    pub fn sum(self) -> Var<'t> {
        let value = Tensor::scalar(self.tape.value_of(self.id).sum());
        self.tape.push(value, Op::SumAll(self.id), self.rg())
    }

    pub fn mean(self) -> Var<'t> {
        let v = self.tape.value_of(self.id);
        let value = Tensor::scalar(v.sum() / v.len() as f64);
        drop(v);
        self.tape.push(value, Op::MeanAll(self.id), self.rg())
    }

    fn reduce_last(self, f: impl Fn(&[f64]) -> f64) -> Result<Tensor> {
        let v = self.tape.value_of(self.id);
        if v.rank() == 0 {
            return Err(Error::shape("reduce_last", "scalar input"));
        }
        let out: Vec<f64> = v.rows().map(f).collect();
        let shape = &v.shape()[..v.rank() - 1];
        if shape.is_empty() {
            Ok(Tensor::scalar(out[0]))
        } else {
            Tensor::new(shape, out)
        }
    }

    /// Sum over the last axis.
    pub fn sum_last(self) -> Result<Var<'t>> {
        let value = self.reduce_last(|r| r.iter().sum())?;
        Ok(self.tape.push(value, Op::SumLast(self.id), self.rg()))
    }

    /// Euclidean norm over the last axis. The gradient at a zero row is zero.
    pub fn norm_last(self) -> Result<Var<'t>> {
        let value = self.reduce_last(|r| libm::sqrt(r.iter().map(|x| x * x).sum()))?;
        Ok(self.tape.push(value, Op::NormLast(self.id), self.rg()))
    }

    /// `out.flat[k] = self.flat[index[k]]`, reshaped to `shape`.
    pub fn gather(self, index: Vec<usize>, shape: &[usize]) -> Result<Var<'t>> {
        let value = {
            let v = self.tape.value_of(self.id);
            if let Some(&bad) = index.iter().find(|&&i| i >= v.len()) {
                return Err(Error::shape("gather", format!("index {bad} out of {}", v.len())));
            }
            Tensor::new(shape, index.iter().map(|&i| v.data()[i]).collect())?
        };
        Ok(self.tape.push(value, Op::Gather(self.id, index), self.rg()))
    }

    /// `out.flat[index[k]] += self.flat[k]` into zeros of `shape`.
    pub fn scatter_add(self, index: Vec<usize>, shape: &[usize]) -> Result<Var<'t>> {
        let value = {
            let v = self.tape.value_of(self.id);
            let mut out = Tensor::zeros(shape);
            if index.len() != v.len() || index.iter().any(|&i| i >= out.len()) {
                return Err(Error::shape("scatter_add", format!("{} values into {shape:?}", v.len())));
            }
            for (k, &dst) in index.iter().enumerate() {
                out.data_mut()[dst] += v.data()[k];
            }
            out
        };
        Ok(self.tape.push(value, Op::ScatterAdd(self.id, index), self.rg()))
    }

    pub fn reshape(self, shape: &[usize]) -> Result<Var<'t>> {
        let value = self.tape.value_of(self.id).clone().reshape(shape)?;
        Ok(self.tape.push(value, Op::Reshape(self.id), self.rg()))
    }

    /// Outer product of two vectors.
    pub fn outer(self, other: Var<'t>) -> Result<Var<'t>> {
        let value = {
            let (a, b) = (self.tape.value_of(self.id), self.tape.value_of(other.id));
            if a.rank() != 1 || b.rank() != 1 {
                return Err(Error::shape("outer", format!("{:?} x {:?}", a.shape(), b.shape())));
            }
            let (n, m) = (a.len(), b.len());
            Tensor::from_fn(&[n, m], |k| a.data()[k / m] * b.data()[k % m])
        };
        let rg = self.rg() || other.rg();
        Ok(self.tape.push(value, Op::Outer(self.id, other.id), rg))
    }

    /// Permute axes, `axes[i]` naming the source axis of output axis `i`.
    pub fn permute(self, axes: &[usize]) -> Result<Var<'t>> {
        let shape = self.shape();
        let index = permute_index(&shape, axes)?;
        let out: Vec<usize> = axes.iter().map(|&a| shape[a]).collect();
        self.gather(index, &out)
    }

    /// Rows `start..end` along axis 0.
    pub fn slice0(self, start: usize, end: usize) -> Result<Var<'t>> {
        let shape = self.shape();
        if shape.is_empty() || start >= end || end > shape[0] {
            return Err(Error::shape("slice0", format!("{start}..{end} of {shape:?}")));
        }
        let inner: usize = shape[1..].iter().product();
        let index = (start * inner..end * inner).collect();
        let mut out = shape.clone();
        out[0] = end - start;
        self.gather(index, &out)
    }

    /// Select entries of axis 0 by index.
    pub fn select0(self, rows: &[usize]) -> Result<Var<'t>> {
        let shape = self.shape();
        if shape.is_empty() || rows.is_empty() {
            return Err(Error::shape("select0", format!("{rows:?} of {shape:?}")));
        }
        let inner: usize = shape[1..].iter().product();
        let mut index = Vec::with_capacity(rows.len() * inner);
        for &r in rows {
            if r >= shape[0] {
                return Err(Error::shape("select0", format!("row {r} of {shape:?}")));
            }
            index.extend(r * inner..(r + 1) * inner);
        }
        let mut out = shape.clone();
        out[0] = rows.len();
        self.gather(index, &out)
    }

    /// Repeat the whole tensor `n` times along a new leading axis.
    pub fn repeat0(self, n: usize) -> Result<Var<'t>> {
        let shape = self.shape();
        let len = self.len();
        let index = (0..n * len).map(|k| k % len).collect();
        let mut out = vec![n];
        out.extend_from_slice(&shape);
        self.gather(index, &out)
    }
}

/// Flat gather indices realising an axis permutation.
pub fn permute_index(shape: &[usize], axes: &[usize]) -> Result<Vec<usize>> {
    let r = shape.len();
    let mut seen = vec![false; r];
    if axes.len() != r || axes.iter().any(|&a| a >= r || core::mem::replace(&mut seen[a], true)) {
        return Err(Error::shape("permute", format!("axes {axes:?} for {shape:?}")));
    }
    let mut strides = vec![1usize; r];
    for i in (0..r.saturating_sub(1)).rev() {
        strides[i] = strides[i + 1] * shape[i + 1];
    }
    let out_shape: Vec<usize> = axes.iter().map(|&a| shape[a]).collect();
    let total: usize = shape.iter().product();
    let mut index = Vec::with_capacity(total);
    let mut counter = vec![0usize; r];
    for _ in 0..total {
        index.push(counter.iter().zip(axes).map(|(&c, &a)| c * strides[a]).sum());
        for ax in (0..r).rev() {
            counter[ax] += 1;
            if counter[ax] < out_shape[ax] {
                break;
            }
            counter[ax] = 0;
        }
    }
    Ok(index)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(shape: &[usize], v: &[f64]) -> Tensor {
        Tensor::new(shape, v.to_vec()).unwrap()
    }

    #[test]
    fn quadratic_gradient() {
        let tape = Tape::new();
        let x = tape.param(t(&[2], &[1.0, 2.0]));
        let loss = x.mul(x).unwrap().sum();
        let g = tape.backward(loss).unwrap();
        assert_eq!(g.wrt(x).data(), &[2.0, 4.0]);
    }

    #[test]
    fn disconnected_param_gets_zero() {
        let tape = Tape::new();
        let x = tape.param(t(&[2], &[1.0, 2.0]));
        let y = tape.param(t(&[3], &[1.0, 2.0, 3.0]));
        let loss = x.square().sum();
        let g = tape.backward(loss).unwrap();
        assert_eq!(g.wrt(y).data(), &[0.0, 0.0, 0.0]);
    }

    #[test]
    fn non_scalar_root_rejected() {
        let tape = Tape::new();
        let x = tape.param(t(&[2], &[1.0, 2.0]));
        assert!(matches!(tape.backward(x.square()), Err(Error::Argument(_))));
    }

    #[test]
    fn non_finite_surfaces_as_error() {
        let tape = Tape::new();
        let x = tape.param(t(&[2], &[0.0, 1.0]));
        let loss = x.ln().sum();
        assert_eq!(tape.backward(loss).unwrap_err(), Error::NonFinite { op: "ln".into() });
    }

    #[test]
    fn permute_matches_transpose() {
        let tape = Tape::new();
        let m = Tensor::from_fn(&[3, 4], |i| i as f64);
        let x = tape.constant(m.clone());
        assert_eq!(x.permute(&[1, 0]).unwrap().value(), m.t());
    }

    #[test]
    fn bmm_left_matches_matmul() {
        let tape = Tape::new();
        let a = Tensor::from_fn(&[2, 3], |i| i as f64 - 1.5);
        let x = Tensor::from_fn(&[2, 3, 2], |i| (i * i) as f64 * 0.1);
        let out = tape.constant(a.clone()).bmm_left(tape.constant(x.clone())).unwrap().value();
        for b in 0..2 {
            let xb = Tensor::new(&[3, 2], x.data()[b * 6..(b + 1) * 6].to_vec()).unwrap();
            let want = a.matmul(&xb).unwrap();
            assert_eq!(&out.data()[b * 4..(b + 1) * 4], want.data());
        }
    }
}
