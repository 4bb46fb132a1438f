//! Wengert-list reverse-mode differentiation.
//!
//! Every node stores its value, its parents and the local partial
//! derivatives with respect to those parents. Parents always precede children,
//! so a single reverse sweep accumulates adjoints. The first `n_params` nodes
//! are the parameter leaves; [`Tape::backward`] returns their adjoints.

use super::arith::Arith;
use crate::error::{Error, Result};
use crate::scalar::prelude::*;
use crate::scalar;
use std::cell::RefCell;

/// Handle to a tape node.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(u32);

impl Var {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Op {
    Param,
    Const,
    Add,
    Sub,
    Mul,
    Div,
    Neg,
    Scale,
    AddConst,
    Min,
    Max,
    Relu,
    Abs,
    Sigmoid,
    DSigmoid,
    D2Sigmoid,
    Tanh,
    DTanh,
    Exp,
    Log,
    Square,
    Sqrt,
    Sin,
    Cos,
    Tan,
    Powi,
    Powf,
    Dot,
    LinComb,
    Sum,
}

#[derive(Clone, Debug)]
pub struct Tape<T> {
    values: Vec<T>,
    ops: Vec<Op>,
    offsets: Vec<u32>,
    parents: Vec<u32>,
    partials: Vec<T>,
    n_params: usize,
    poisoned: Option<(usize, Op)>,
    /// Adjoint buffer reused by [`Tape::gradient`].
    scratch: Vec<T>,
}

thread_local! {
    static POOL: RefCell<Option<Tape<f64>>> = const { RefCell::new(None) };
}

/// Runs `f` on a cleared tape holding `params`. The tape's buffers are kept
/// per thread and reused by the next call, which avoids mapping and zeroing
/// fresh pages for every batch.
pub fn with_pooled_tape<R>(params: &[f64], f: impl FnOnce(&mut Tape<f64>) -> R) -> R {
    let mut t = POOL.with(|p| p.borrow_mut().take()).unwrap_or_else(|| Tape::new(&[]));
    t.reset(params);
    let r = f(&mut t);
    POOL.with(|p| *p.borrow_mut() = Some(t));
    r
}

impl<T: Scalar> Tape<T> {
    /// A tape whose leading leaves hold `params`.
    pub fn new(params: &[T]) -> Self {
        Self::with_capacity(params, params.len() * 4, params.len() * 4)
    }

    /// As [`Tape::new`] with room for `nodes` nodes and `edges` partials.
    pub fn with_capacity(params: &[T], nodes: usize, edges: usize) -> Self {
        let mut offsets = Vec::with_capacity(nodes + 1);
        offsets.push(0);
        let mut t = Self {
            values: Vec::with_capacity(nodes),
            ops: Vec::with_capacity(nodes),
            offsets,
            parents: Vec::with_capacity(edges),
            partials: Vec::with_capacity(edges),
            n_params: params.len(),
            poisoned: None,
            scratch: Vec::new(),
        };
        for &p in params {
            t.push(Op::Param, p, &[], &[]);
        }
        t
    }

    /// Clears the tape, keeping its allocations, and records new leaves.
    pub fn reset(&mut self, params: &[T]) {
        self.values.clear();
        self.ops.clear();
        self.offsets.clear();
        self.offsets.push(0);
        self.parents.clear();
        self.partials.clear();
        self.poisoned = None;
        self.n_params = params.len();
        for &p in params {
            self.push(Op::Param, p, &[], &[]);
        }
    }

    pub fn n_params(&self) -> usize {
        self.n_params
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Number of stored local partials, a proxy for memory use.
    pub fn edge_count(&self) -> usize {
        self.partials.len()
    }

    pub fn param(&self, i: usize) -> Var {
        assert!(i < self.n_params, "parameter index out of range");
        Var(i as u32)
    }

    pub fn params(&self) -> Vec<Var> {
        (0..self.n_params).map(|i| Var(i as u32)).collect()
    }

    pub fn op(&self, v: Var) -> Op {
        self.ops[v.index()]
    }

    /// Local partials of `v` with respect to its parents, in parent order.
    pub fn local_partials(&self, v: Var) -> (&[u32], &[T]) {
        let (s, e) = (self.offsets[v.index()] as usize, self.offsets[v.index() + 1] as usize);
        (&self.parents[s..e], &self.partials[s..e])
    }

    /// Fails if any recorded value was NaN or infinite.
    pub fn check_finite(&self) -> Result<()> {
        match self.poisoned {
            None => Ok(()),
            Some((i, op)) => Err(Error::NonFinite(format!("tape node {i} ({op:?})"))),
        }
    }

    #[inline]
    fn push(&mut self, op: Op, value: T, parents: &[Var], partials: &[T]) -> Var {
        let idx = self.values.len();
        if !value.is_finite() && self.poisoned.is_none() {
            self.poisoned = Some((idx, op));
        }
        self.values.push(value);
        self.ops.push(op);
        debug_assert!(parents.iter().all(|p| p.index() < idx));
        self.parents.extend(parents.iter().map(|p| p.0));
        self.partials.extend_from_slice(partials);
        self.offsets.push(self.parents.len() as u32);
        Var(idx as u32)
    }

    #[inline]
    fn val(&self, v: Var) -> T {
        self.values[v.index()]
    }

    /// Records one of the elementary operations on existing nodes.
    pub fn record(&mut self, op: Op, inputs: &[Var]) -> Result<Var> {
        let arity = |k: usize| -> Result<()> {
            if inputs.len() == k {
                Ok(())
            } else {
                Err(Error::DimensionMismatch {
                    expected: k,
                    got: inputs.len(),
                })
            }
        };
        let v = match op {
            Op::Add | Op::Sub | Op::Mul | Op::Div | Op::Min | Op::Max => {
                arity(2)?;
                let (a, b) = (inputs[0], inputs[1]);
                match op {
                    Op::Add => self.add(a, b),
                    Op::Sub => self.sub(a, b),
                    Op::Mul => self.mul(a, b),
                    Op::Div => self.div(a, b),
                    Op::Min => self.min(a, b),
                    _ => self.max(a, b),
                }
            }
            Op::Sum => self.sum(inputs),
            Op::Param | Op::Const | Op::Scale | Op::AddConst | Op::Powi | Op::Powf | Op::Dot | Op::LinComb => {
                return Err(Error::Domain(format!("{op:?} needs extra operands; use its dedicated method")))
            }
            _ => {
                arity(1)?;
                let a = inputs[0];
                match op {
                    Op::Neg => self.neg(a),
                    Op::Relu => self.relu(a),
                    Op::Abs => self.abs(a),
                    Op::Sigmoid => self.sigmoid(a),
                    Op::DSigmoid => self.dsigmoid(a),
                    Op::D2Sigmoid => self.d2sigmoid(a),
                    Op::Tanh => self.tanh(a),
                    Op::DTanh => self.dtanh(a),
                    Op::Exp => self.exp(a),
                    Op::Log => self.log(a),
                    Op::Square => self.square(a),
                    Op::Sqrt => self.sqrt(a),
                    Op::Sin => self.sin(a),
                    Op::Cos => self.cos(a),
                    _ => self.tan(a),
                }
            }
        };
        self.check_finite()?;
        Ok(v)
    }

    /// Adjoints of every node with respect to `root`.
    pub fn adjoints(&self, root: Var) -> Vec<T> {
        let mut adj = vec![T::zero(); root.index() + 1];
        adj[root.index()] = T::one();
        for i in (0..=root.index()).rev() {
            let a = adj[i];
            if a == T::zero() {
                continue;
            }
            let (s, e) = (self.offsets[i] as usize, self.offsets[i + 1] as usize);
            for (&p, &d) in self.parents[s..e].iter().zip(&self.partials[s..e]) {
                adj[p as usize] += a * d;
            }
        }
        adj
    }

    /// Gradient of `root` with respect to the parameter leaves.
    pub fn backward(&self, root: Var) -> Vec<T> {
        let mut adj = self.adjoints(root);
        adj.resize(self.n_params.max(adj.len()), T::zero());
        adj.truncate(self.n_params);
        adj
    }

    /// As [`Tape::backward`], reusing an internal adjoint buffer.
    pub fn gradient(&mut self, root: Var) -> Vec<T> {
        let mut adj = std::mem::take(&mut self.scratch);
        adj.clear();
        adj.resize(root.index() + 1, T::zero());
        adj[root.index()] = T::one();
        for i in (0..=root.index()).rev() {
            let a = adj[i];
            if a == T::zero() {
                continue;
            }
            let (s, e) = (self.offsets[i] as usize, self.offsets[i + 1] as usize);
            for (&p, &d) in self.parents[s..e].iter().zip(&self.partials[s..e]) {
                adj[p as usize] += a * d;
            }
        }
        let mut g = adj[..self.n_params.min(adj.len())].to_vec();
        g.resize(self.n_params, T::zero());
        self.scratch = adj;
        g
    }

    /// Adds the gradient of `root` into `grad` (length `n_params`).
    pub fn backward_into(&self, root: Var, grad: &mut [T]) {
        let adj = self.adjoints(root);
        for (g, a) in grad.iter_mut().zip(adj.iter()) {
            *g += *a;
        }
    }
}

impl<T: Scalar> Arith for Tape<T> {
    type T = T;
    type V = Var;

    #[inline]
    fn constant(&mut self, c: T) -> Var {
        self.push(Op::Const, c, &[], &[])
    }
    #[inline]
    fn value(&self, v: Var) -> T {
        self.val(v)
    }
    #[inline]
    fn add(&mut self, a: Var, b: Var) -> Var {
        let v = self.val(a) + self.val(b);
        self.push(Op::Add, v, &[a, b], &[T::one(), T::one()])
    }
    #[inline]
    fn sub(&mut self, a: Var, b: Var) -> Var {
        let v = self.val(a) - self.val(b);
        self.push(Op::Sub, v, &[a, b], &[T::one(), -T::one()])
    }
    #[inline]
    fn mul(&mut self, a: Var, b: Var) -> Var {
        let (x, y) = (self.val(a), self.val(b));
        self.push(Op::Mul, x * y, &[a, b], &[y, x])
    }
    #[inline]
    fn div(&mut self, a: Var, b: Var) -> Var {
        let (x, y) = (self.val(a), self.val(b));
        let q = x / y;
        self.push(Op::Div, q, &[a, b], &[T::one() / y, -q / y])
    }
    #[inline]
    fn neg(&mut self, a: Var) -> Var {
        let v = -self.val(a);
        self.push(Op::Neg, v, &[a], &[-T::one()])
    }
    #[inline]
    fn scale(&mut self, a: Var, c: T) -> Var {
        let v = self.val(a) * c;
        self.push(Op::Scale, v, &[a], &[c])
    }
    #[inline]
    fn add_const(&mut self, a: Var, c: T) -> Var {
        let v = self.val(a) + c;
        self.push(Op::AddConst, v, &[a], &[T::one()])
    }
    #[inline]
    fn min(&mut self, a: Var, b: Var) -> Var {
        let (x, y) = (self.val(a), self.val(b));
        if y < x {
            self.push(Op::Min, y, &[b], &[T::one()])
        } else {
            self.push(Op::Min, x, &[a], &[T::one()])
        }
    }
    #[inline]
    fn max(&mut self, a: Var, b: Var) -> Var {
        let (x, y) = (self.val(a), self.val(b));
        if y > x {
            self.push(Op::Max, y, &[b], &[T::one()])
        } else {
            self.push(Op::Max, x, &[a], &[T::one()])
        }
    }
    #[inline]
    fn relu(&mut self, a: Var) -> Var {
        let x = self.val(a);
        if x > T::zero() {
            self.push(Op::Relu, x, &[a], &[T::one()])
        } else {
            self.push(Op::Relu, T::zero(), &[a], &[T::zero()])
        }
    }
    #[inline]
    fn abs(&mut self, a: Var) -> Var {
        let x = self.val(a);
        let d = if x > T::zero() {
            T::one()
        } else if x < T::zero() {
            -T::one()
        } else {
            T::zero()
        };
        self.push(Op::Abs, x.abs(), &[a], &[d])
    }
    #[inline]
    fn sigmoid(&mut self, a: Var) -> Var {
        let x = self.val(a);
        self.push(Op::Sigmoid, scalar::sigmoid(x), &[a], &[scalar::dsigmoid(x)])
    }
    #[inline]
    fn dsigmoid(&mut self, a: Var) -> Var {
        let x = self.val(a);
        self.push(Op::DSigmoid, scalar::dsigmoid(x), &[a], &[scalar::d2sigmoid(x)])
    }
    #[inline]
    fn d2sigmoid(&mut self, a: Var) -> Var {
        let x = self.val(a);
        self.push(Op::D2Sigmoid, scalar::d2sigmoid(x), &[a], &[scalar::d3sigmoid(x)])
    }
    #[inline]
    fn tanh(&mut self, a: Var) -> Var {
        let x = self.val(a);
        let t = x.tanh();
        self.push(Op::Tanh, t, &[a], &[T::one() - t * t])
    }
    #[inline]
    fn dtanh(&mut self, a: Var) -> Var {
        let x = self.val(a);
        let t = x.tanh();
        let d = T::one() - t * t;
        self.push(Op::DTanh, d, &[a], &[-T::two() * t * d])
    }
    #[inline]
    fn exp(&mut self, a: Var) -> Var {
        let e = self.val(a).exp();
        self.push(Op::Exp, e, &[a], &[e])
    }
    #[inline]
    fn log(&mut self, a: Var) -> Var {
        let x = self.val(a);
        self.push(Op::Log, x.ln(), &[a], &[T::one() / x])
    }
    #[inline]
    fn square(&mut self, a: Var) -> Var {
        let x = self.val(a);
        self.push(Op::Square, x * x, &[a], &[T::two() * x])
    }
    #[inline]
    fn sqrt(&mut self, a: Var) -> Var {
        let r = self.val(a).sqrt();
        self.push(Op::Sqrt, r, &[a], &[T::half() / r])
    }
    #[inline]
    fn sin(&mut self, a: Var) -> Var {
        let x = self.val(a);
        self.push(Op::Sin, x.sin(), &[a], &[x.cos()])
    }
    #[inline]
    fn cos(&mut self, a: Var) -> Var {
        let x = self.val(a);
        self.push(Op::Cos, x.cos(), &[a], &[-x.sin()])
    }
    #[inline]
    fn tan(&mut self, a: Var) -> Var {
        let x = self.val(a);
        let t = x.tan();
        self.push(Op::Tan, t, &[a], &[T::one() + t * t])
    }
    #[inline]
    fn powi(&mut self, a: Var, n: i32) -> Var {
        let x = self.val(a);
        let d = if n == 0 { T::zero() } else { T::of(n as f64) * x.powi(n - 1) };
        self.push(Op::Powi, x.powi(n), &[a], &[d])
    }
    #[inline]
    fn powf(&mut self, a: Var, p: T) -> Var {
        let x = self.val(a);
        self.push(Op::Powf, x.powf(p), &[a], &[p * x.powf(p - T::one())])
    }
    fn dot(&mut self, a: &[Var], b: &[Var]) -> Var {
        debug_assert_eq!(a.len(), b.len());
        let idx = self.values.len();
        let mut acc = T::zero();
        self.parents.reserve(2 * a.len());
        self.partials.reserve(2 * a.len());
        let values = &self.values;
        for (&x, &y) in a.iter().zip(b) {
            let (xv, yv) = (values[x.index()], values[y.index()]);
            acc += xv * yv;
            self.parents.extend_from_slice(&[x.0, y.0]);
            self.partials.extend_from_slice(&[yv, xv]);
        }
        self.finish_fused(idx, Op::Dot, acc)
    }
    fn lincomb(&mut self, c: &[T], a: &[Var]) -> Var {
        debug_assert_eq!(a.len(), c.len());
        let idx = self.values.len();
        let mut acc = T::zero();
        self.parents.extend(a.iter().map(|x| x.0));
        self.partials.extend_from_slice(c);
        for (&k, &x) in c.iter().zip(a) {
            acc += k * self.values[x.index()];
        }
        self.finish_fused(idx, Op::LinComb, acc)
    }
    fn sum(&mut self, a: &[Var]) -> Var {
        let idx = self.values.len();
        let mut acc = T::zero();
        self.parents.extend(a.iter().map(|x| x.0));
        self.partials.resize(self.parents.len(), T::one());
        for &x in a {
            acc += self.values[x.index()];
        }
        self.finish_fused(idx, Op::Sum, acc)
    }
}

impl<T: Scalar> Tape<T> {
    fn finish_fused(&mut self, idx: usize, op: Op, value: T) -> Var {
        if !value.is_finite() && self.poisoned.is_none() {
            self.poisoned = Some((idx, op));
        }
        self.values.push(value);
        self.ops.push(op);
        self.offsets.push(self.parents.len() as u32);
        Var(idx as u32)
    }
}
