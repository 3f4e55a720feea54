//! Reverse-mode automatic differentiation on a recorded tape.
//!
//! Every operation appends a node holding its computed value. [`Graph::grad`]
//! walks the tape backwards and expresses each adjoint with the same recorded
//! primitives, so with [`GradOptions::create_graph`] the returned gradients are
//! ordinary nodes that can be differentiated again.

use std::cell::{Cell, RefCell};
use std::rc::Rc;

use crate::error::{Error, Result};
use crate::kernels::{self, ConvGeom};
use crate::tensor::{numel, Tensor};

/// Handle to a node on a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn id(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Op {
    Leaf,
    Add,
    Sub,
    Mul,
    Neg,
    Scale(f64),
    AddScalar(f64),
    Exp,
    Log,
    /// `1/x`, defined as 0 at 0.
    Recip,
    /// `√x` whose derivative at 0 is taken as 0.
    Sqrt,
    Tanh,
    Sigmoid,
    Relu,
    LeakyRelu(f64),
    Clamp(f64, f64),
    MatMul,
    Transpose,
    Reshape,
    BroadcastTo,
    SumTo,
    Narrow { axis: usize, start: usize },
    Embed { axis: usize, start: usize },
    Conv(ConvGeom),
    ConvTranspose(ConvGeom),
    ConvWeightGrad(ConvGeom),
}

impl Op {
    pub fn name(&self) -> &'static str {
        match self {
            Op::Leaf => "leaf",
            Op::Add => "add",
            Op::Sub => "sub",
            Op::Mul => "mul",
            Op::Neg => "neg",
            Op::Scale(_) => "scale",
            Op::AddScalar(_) => "add_scalar",
            Op::Exp => "exp",
            Op::Log => "log",
            Op::Recip => "recip",
            Op::Sqrt => "sqrt",
            Op::Tanh => "tanh",
            Op::Sigmoid => "sigmoid",
            Op::Relu => "relu",
            Op::LeakyRelu(_) => "leaky_relu",
            Op::Clamp(..) => "clamp",
            Op::MatMul => "matmul",
            Op::Transpose => "transpose",
            Op::Reshape => "reshape",
            Op::BroadcastTo => "broadcast_to",
            Op::SumTo => "sum_to",
            Op::Narrow { .. } => "narrow",
            Op::Embed { .. } => "embed",
            Op::Conv(_) => "conv",
            Op::ConvTranspose(_) => "conv_transpose",
            Op::ConvWeightGrad(_) => "conv_weight_grad",
        }
    }
}

struct Node {
    op: Op,
    parents: [Option<usize>; 2],
    value: Rc<Tensor>,
    requires_grad: bool,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct GradOptions {
    /// Record the backward pass so the returned gradients are differentiable.
    pub create_graph: bool,
    /// Error when a requested node does not require gradients.
    pub strict: bool,
}

/// A single-threaded tape of recorded operations.
pub struct Graph {
    nodes: RefCell<Vec<Node>>,
    recording: Cell<bool>,
}

impl Default for Graph {
    fn default() -> Self {
        Self::new()
    }
}

impl Graph {
    pub fn new() -> Self {
        Graph {
            nodes: RefCell::new(Vec::new()),
            recording: Cell::new(true),
        }
    }

    /// Number of recorded nodes.
    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn is_recording(&self) -> bool {
        self.recording.get()
    }

    /// Enables or disables gradient tracking for subsequently created nodes.
    /// Returns the previous setting.
    pub fn set_recording(&self, on: bool) -> bool {
        self.recording.replace(on)
    }

    pub fn value(&self, v: Var) -> Rc<Tensor> {
        Rc::clone(&self.nodes.borrow()[v.0].value)
    }

    pub fn shape(&self, v: Var) -> Vec<usize> {
        self.nodes.borrow()[v.0].value.shape().to_vec()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes.borrow()[v.0].requires_grad
    }

    pub fn op(&self, v: Var) -> Op {
        self.nodes.borrow()[v.0].op
    }

    fn push(&self, op: Op, parents: [Option<usize>; 2], value: Tensor) -> Var {
        let mut nodes = self.nodes.borrow_mut();
        let requires_grad = match op {
            Op::Leaf => false,
            _ => {
                self.recording.get()
                    && parents
                        .iter()
                        .flatten()
                        .any(|&p| nodes[p].requires_grad)
            }
        };
        nodes.push(Node {
            op,
            parents,
            value: Rc::new(value),
            requires_grad,
        });
        Var(nodes.len() - 1)
    }

    pub fn leaf(&self, value: Tensor, requires_grad: bool) -> Var {
        let v = self.push(Op::Leaf, [None, None], value);
        self.nodes.borrow_mut()[v.0].requires_grad = requires_grad;
        v
    }

    /// Trainable leaf.
    pub fn param(&self, value: Tensor) -> Var {
        self.leaf(value, true)
    }

    pub fn constant(&self, value: Tensor) -> Var {
        self.leaf(value, false)
    }

    pub fn scalar(&self, x: f64) -> Var {
        self.constant(Tensor::scalar(x))
    }

    /// Copy of `v`'s value with no gradient connection.
    pub fn detach(&self, v: Var) -> Var {
        let t = (*self.value(v)).clone();
        self.constant(t)
    }

    fn unary(&self, op: Op, a: Var, f: impl Fn(f64) -> f64) -> Var {
        let t = self.value(a).map(f);
        self.push(op, [Some(a.0), None], t)
    }

    /// Brings `a` and `b` to a common shape, expanding extents of 1.
    fn align(&self, op: &'static str, a: Var, b: Var) -> Result<(Var, Var)> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa == sb {
            return Ok((a, b));
        }
        if kernels::check_broadcast(op, &sb, &sa).is_ok() {
            return Ok((a, self.broadcast_to(b, &sa)?));
        }
        if kernels::check_broadcast(op, &sa, &sb).is_ok() {
            return Ok((self.broadcast_to(a, &sb)?, b));
        }
        Err(Error::shape(op, &sa, &sb))
    }

    fn binary(&self, op: Op, a: Var, b: Var, f: impl Fn(f64, f64) -> f64) -> Result<Var> {
        let (a, b) = self.align(op.name(), a, b)?;
        let t = self.value(a).zip_map(&self.value(b), op.name(), f)?;
        Ok(self.push(op, [Some(a.0), Some(b.0)], t))
    }

    pub fn add(&self, a: Var, b: Var) -> Result<Var> {
        self.binary(Op::Add, a, b, |x, y| x + y)
    }

    pub fn sub(&self, a: Var, b: Var) -> Result<Var> {
        self.binary(Op::Sub, a, b, |x, y| x - y)
    }

    pub fn mul(&self, a: Var, b: Var) -> Result<Var> {
        self.binary(Op::Mul, a, b, |x, y| x * y)
    }

    pub fn neg(&self, a: Var) -> Var {
        self.unary(Op::Neg, a, |x| -x)
    }

    pub fn scale(&self, a: Var, c: f64) -> Var {
        self.unary(Op::Scale(c), a, |x| x * c)
    }

    pub fn add_scalar(&self, a: Var, c: f64) -> Var {
        self.unary(Op::AddScalar(c), a, |x| x + c)
    }

    pub fn exp(&self, a: Var) -> Var {
        self.unary(Op::Exp, a, f64::exp)
    }

    pub fn log(&self, a: Var) -> Var {
        self.unary(Op::Log, a, f64::ln)
    }

    pub fn recip(&self, a: Var) -> Var {
        self.unary(Op::Recip, a, |x| if x == 0.0 { 0.0 } else { 1.0 / x })
    }

    pub fn sqrt(&self, a: Var) -> Var {
        self.unary(Op::Sqrt, a, f64::sqrt)
    }

    pub fn tanh(&self, a: Var) -> Var {
        self.unary(Op::Tanh, a, f64::tanh)
    }

    pub fn sigmoid(&self, a: Var) -> Var {
        self.unary(Op::Sigmoid, a, sigmoid)
    }

    pub fn relu(&self, a: Var) -> Var {
        self.unary(Op::Relu, a, |x| if x > 0.0 { x } else { 0.0 })
    }

    pub fn leaky_relu(&self, a: Var, alpha: f64) -> Var {
        self.unary(Op::LeakyRelu(alpha), a, move |x| if x > 0.0 { x } else { alpha * x })
    }

    pub fn clamp(&self, a: Var, lo: f64, hi: f64) -> Var {
        self.unary(Op::Clamp(lo, hi), a, move |x| x.clamp(lo, hi))
    }

    pub fn square(&self, a: Var) -> Var {
        self.mul(a, a).expect("equal shapes")
    }

    pub fn matmul(&self, a: Var, b: Var) -> Result<Var> {
        let t = kernels::matmul(&self.value(a), &self.value(b))?;
        Ok(self.push(Op::MatMul, [Some(a.0), Some(b.0)], t))
    }

    pub fn transpose(&self, a: Var) -> Result<Var> {
        let t = kernels::transpose(&self.value(a))?;
        Ok(self.push(Op::Transpose, [Some(a.0), None], t))
    }

    pub fn reshape(&self, a: Var, shape: &[usize]) -> Result<Var> {
        let t = self.value(a).reshape(shape.to_vec())?;
        Ok(self.push(Op::Reshape, [Some(a.0), None], t))
    }

    pub fn broadcast_to(&self, a: Var, shape: &[usize]) -> Result<Var> {
        let t = kernels::broadcast_to(&self.value(a), shape)?;
        Ok(self.push(Op::BroadcastTo, [Some(a.0), None], t))
    }

    pub fn sum_to(&self, a: Var, shape: &[usize]) -> Result<Var> {
        let t = kernels::sum_to(&self.value(a), shape)?;
        Ok(self.push(Op::SumTo, [Some(a.0), None], t))
    }

    pub fn narrow(&self, a: Var, axis: usize, start: usize, len: usize) -> Result<Var> {
        let t = kernels::narrow(&self.value(a), axis, start, len)?;
        Ok(self.push(Op::Narrow { axis, start }, [Some(a.0), None], t))
    }

    pub fn embed(&self, a: Var, axis: usize, start: usize, full: usize) -> Result<Var> {
        let t = kernels::embed(&self.value(a), axis, start, full)?;
        Ok(self.push(Op::Embed { axis, start }, [Some(a.0), None], t))
    }

    pub fn conv(&self, x: Var, w: Var, geom: ConvGeom) -> Result<Var> {
        let t = kernels::conv(&self.value(x), &self.value(w), &geom)?;
        Ok(self.push(Op::Conv(geom), [Some(x.0), Some(w.0)], t))
    }

    /// Transposed convolution producing the given spatial extent.
    pub fn conv_transpose(&self, x: Var, w: Var, geom: ConvGeom, out_spatial: [usize; 3]) -> Result<Var> {
        let t = kernels::conv_transpose(&self.value(x), &self.value(w), &geom, out_spatial)?;
        Ok(self.push(Op::ConvTranspose(geom), [Some(x.0), Some(w.0)], t))
    }

    pub fn conv_weight_grad(&self, x: Var, gy: Var, geom: ConvGeom) -> Result<Var> {
        let t = kernels::conv_weight_grad(&self.value(x), &self.value(gy), &geom)?;
        Ok(self.push(Op::ConvWeightGrad(geom), [Some(x.0), Some(gy.0)], t))
    }

    /// Sum of all elements as a rank-0 tensor.
    pub fn sum(&self, a: Var) -> Var {
        let shape = self.shape(a);
        let ones = vec![1; shape.len()];
        let s = self.sum_to(a, &ones).expect("sum_to ones");
        self.reshape(s, &[]).expect("single element")
    }

    pub fn mean(&self, a: Var) -> Var {
        let n = numel(&self.shape(a)) as f64;
        let s = self.sum(a);
        self.scale(s, 1.0 / n)
    }

    /// Per-sample sum over every axis but the first: `[B, ...] → [B]`.
    pub fn sum_per_sample(&self, a: Var) -> Result<Var> {
        let shape = self.shape(a);
        let mut target = vec![1; shape.len()];
        target[0] = shape[0];
        let s = self.sum_to(a, &target)?;
        self.reshape(s, &[shape[0]])
    }

    /// Gradients of the scalar `output` with respect to each node in `wrt`.
    pub fn grad(&self, output: Var, wrt: &[Var], opts: GradOptions) -> Result<Vec<Var>> {
        let out_shape = self.shape(output);
        if numel(&out_shape) != 1 {
            return Err(Error::Grad(format!(
                "output must be scalar, got shape {out_shape:?}"
            )));
        }
        for &w in wrt {
            if opts.strict && !self.requires_grad(w) {
                return Err(Error::Grad(format!(
                    "node {} ({}) does not require gradients",
                    w.0,
                    self.op(w).name()
                )));
            }
        }
        let prev = self.set_recording(opts.create_graph);
        let result = self.backward(output, wrt);
        self.set_recording(prev);
        result
    }

    /// Convenience wrapper returning gradient values without recording.
    pub fn grad_values(&self, output: Var, wrt: &[Var]) -> Result<Vec<Tensor>> {
        let grads = self.grad(output, wrt, GradOptions::default())?;
        Ok(grads.iter().map(|&g| (*self.value(g)).clone()).collect())
    }

    fn backward(&self, output: Var, wrt: &[Var]) -> Result<Vec<Var>> {
        let lowest = wrt.iter().map(|v| v.0).min().unwrap_or(output.0);
        let mut adj: Vec<Option<Var>> = vec![None; output.0 + 1];
        if self.requires_grad(output) || wrt.contains(&output) {
            let seed = Tensor::ones(self.shape(output));
            adj[output.0] = Some(self.constant(seed));
        }
        for id in (lowest..=output.0).rev() {
            let Some(g) = adj[id] else { continue };
            let (op, parents, needs) = {
                let nodes = self.nodes.borrow();
                let n = &nodes[id];
                if !n.requires_grad || n.op == Op::Leaf {
                    continue;
                }
                let needs = n.parents.map(|p| p.map(|p| nodes[p].requires_grad).unwrap_or(false));
                (n.op, n.parents, needs)
            };
            let contribs = self.vjp(op, Var(id), parents, needs, g)?;
            for (slot, c) in contribs.into_iter().enumerate() {
                let (Some(p), Some(c)) = (parents[slot], c) else { continue };
                if !needs[slot] {
                    continue;
                }
                adj[p] = Some(match adj[p] {
                    None => c,
                    Some(prev) => self.add(prev, c)?,
                });
            }
        }
        wrt.iter()
            .map(|&w| match adj.get(w.0).copied().flatten() {
                Some(g) => Ok(g),
                None => Ok(self.constant(Tensor::zeros(self.shape(w)))),
            })
            .collect()
    }

    /// Vector-Jacobian products for one node, written in recorded primitives.
    fn vjp(
        &self,
        op: Op,
        y: Var,
        parents: [Option<usize>; 2],
        needs: [bool; 2],
        g: Var,
    ) -> Result<[Option<Var>; 2]> {
        let a = parents[0].map(Var);
        let b = parents[1].map(Var);
        let pa = || a.expect("first parent");
        let pb = || b.expect("second parent");
        let mask = |f: &dyn Fn(f64) -> f64| -> Result<Var> {
            let m = self.value(pa()).map(f);
            let m = self.constant(m);
            self.mul(g, m)
        };
        let out = match op {
            Op::Leaf => [None, None],
            Op::Add => [Some(g), Some(g)],
            Op::Sub => [Some(g), needs[1].then(|| self.neg(g))],
            Op::Mul => [
                if needs[0] { Some(self.mul(g, pb())?) } else { None },
                if needs[1] { Some(self.mul(g, pa())?) } else { None },
            ],
            Op::Neg => [Some(self.neg(g)), None],
            Op::Scale(c) => [Some(self.scale(g, c)), None],
            Op::AddScalar(_) => [Some(g), None],
            Op::Exp => [Some(self.mul(g, y)?), None],
            Op::Log => {
                let r = self.recip(pa());
                [Some(self.mul(g, r)?), None]
            }
            Op::Recip => {
                let y2 = self.square(y);
                let t = self.mul(g, y2)?;
                [Some(self.neg(t)), None]
            }
            Op::Sqrt => {
                let r = self.recip(y);
                let r = self.scale(r, 0.5);
                [Some(self.mul(g, r)?), None]
            }
            Op::Tanh => {
                let y2 = self.square(y);
                let d = self.add_scalar(self.neg(y2), 1.0);
                [Some(self.mul(g, d)?), None]
            }
            Op::Sigmoid => {
                let one_minus = self.add_scalar(self.neg(y), 1.0);
                let d = self.mul(y, one_minus)?;
                [Some(self.mul(g, d)?), None]
            }
            Op::Relu => [Some(mask(&|x| if x > 0.0 { 1.0 } else { 0.0 })?), None],
            Op::LeakyRelu(alpha) => [Some(mask(&|x| if x > 0.0 { 1.0 } else { alpha })?), None],
            Op::Clamp(lo, hi) => [
                Some(mask(&|x| if x >= lo && x <= hi { 1.0 } else { 0.0 })?),
                None,
            ],
            Op::MatMul => [
                if needs[0] {
                    let bt = self.transpose(pb())?;
                    Some(self.matmul(g, bt)?)
                } else {
                    None
                },
                if needs[1] {
                    let at = self.transpose(pa())?;
                    Some(self.matmul(at, g)?)
                } else {
                    None
                },
            ],
            Op::Transpose => [Some(self.transpose(g)?), None],
            Op::Reshape => [Some(self.reshape(g, &self.shape(pa()))?), None],
            Op::BroadcastTo => [Some(self.sum_to(g, &self.shape(pa()))?), None],
            Op::SumTo => [Some(self.broadcast_to(g, &self.shape(pa()))?), None],
            Op::Narrow { axis, start } => {
                let full = self.shape(pa())[axis];
                [Some(self.embed(g, axis, start, full)?), None]
            }
            Op::Embed { axis, start } => {
                let len = self.shape(pa())[axis];
                [Some(self.narrow(g, axis, start, len)?), None]
            }
            Op::Conv(geom) => {
                let xs = self.shape(pa());
                [
                    if needs[0] {
                        Some(self.conv_transpose(g, pb(), geom, [xs[2], xs[3], xs[4]])?)
                    } else {
                        None
                    },
                    if needs[1] { Some(self.conv_weight_grad(pa(), g, geom)?) } else { None },
                ]
            }
            Op::ConvTranspose(geom) => [
                if needs[0] { Some(self.conv(g, pb(), geom)?) } else { None },
                if needs[1] { Some(self.conv_weight_grad(g, pa(), geom)?) } else { None },
            ],
            Op::ConvWeightGrad(geom) => {
                // parents: x, gy; adjoint g has the kernel's shape
                let xs = self.shape(pa());
                [
                    if needs[0] {
                        Some(self.conv_transpose(pb(), g, geom, [xs[2], xs[3], xs[4]])?)
                    } else {
                        None
                    },
                    if needs[1] { Some(self.conv(pa(), g, geom)?) } else { None },
                ]
            }
        };
        Ok(out)
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}
