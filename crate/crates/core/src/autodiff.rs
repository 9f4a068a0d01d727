//! Minimal reverse-mode automatic differentiation over scalars.
//!
//! Define-by-run: every operation on a [`Var`] appends a node to its [`Tape`]
//! holding the local partials with respect to its parents. [`backward`] runs
//! one reverse sweep in O(tape length). Tapes are rebuilt per evaluation;
//! graphs here are small (flow conditioners, log densities, ELBO terms).

use std::cell::{Cell, RefCell};
use std::ops::{Add, Div, Mul, Neg, Sub};

use crate::special;
use crate::{Error, Result};

#[derive(Clone, Copy)]
struct Node {
    parents: [(u32, f64); 2],
    n_parents: u8,
}

/// Append-only computation graph. Single-threaded; distinct tapes are
/// independent.
pub struct Tape {
    nodes: RefCell<Vec<Node>>,
    nonfinite: Cell<Option<usize>>,
}

impl Tape {
    pub fn new() -> Self {
        Tape {
            nodes: RefCell::new(Vec::new()),
            nonfinite: Cell::new(None),
        }
    }

    pub fn with_capacity(n: usize) -> Self {
        Tape {
            nodes: RefCell::new(Vec::with_capacity(n)),
            nonfinite: Cell::new(None),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Id of the first node that produced a non-finite value, if any.
    pub fn nonfinite_node(&self) -> Option<usize> {
        self.nonfinite.get()
    }

    fn push(&self, parents: [(u32, f64); 2], n_parents: u8, value: f64) -> Var<'_> {
        let mut nodes = self.nodes.borrow_mut();
        let idx = nodes.len();
        nodes.push(Node { parents, n_parents });
        if !value.is_finite() && self.nonfinite.get().is_none() {
            self.nonfinite.set(Some(idx));
        }
        Var {
            tape: self,
            idx: idx as u32,
            val: value,
        }
    }

    /// New leaf variable (gradient is read back by index).
    pub fn input(&self, value: f64) -> Var<'_> {
        self.push([(0, 0.0), (0, 0.0)], 0, value)
    }

    /// Leaf whose gradient is never read; structurally identical to `input`.
    pub fn constant(&self, value: f64) -> Var<'_> {
        self.input(value)
    }

    /// Node with a caller-supplied local derivative, used to splice
    /// non-tape computations (e.g. implicit reparameterization of a
    /// sampler) into the graph.
    pub fn custom_unary<'t>(&'t self, parent: Var<'t>, value: f64, partial: f64) -> Var<'t> {
        self.push([(parent.idx, partial), (0, 0.0)], 1, value)
    }
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

/// Handle to a tape node; cheap to copy.
#[derive(Clone, Copy)]
pub struct Var<'t> {
    tape: &'t Tape,
    idx: u32,
    val: f64,
}

impl<'t> Var<'t> {
    pub fn value(self) -> f64 {
        self.val
    }

    pub fn index(self) -> usize {
        self.idx as usize
    }

    fn unary(self, value: f64, partial: f64) -> Var<'t> {
        self.tape.push([(self.idx, partial), (0, 0.0)], 1, value)
    }

    fn binary(self, other: Var<'t>, value: f64, pa: f64, pb: f64) -> Var<'t> {
        self.tape
            .push([(self.idx, pa), (other.idx, pb)], 2, value)
    }

    pub fn exp(self) -> Var<'t> {
        let e = self.val.exp();
        self.unary(e, e)
    }

    pub fn ln(self) -> Var<'t> {
        self.unary(self.val.ln(), 1.0 / self.val)
    }

    pub fn tanh(self) -> Var<'t> {
        let t = self.val.tanh();
        self.unary(t, 1.0 - t * t)
    }

    pub fn elu(self) -> Var<'t> {
        if self.val > 0.0 {
            self.unary(self.val, 1.0)
        } else {
            let e = self.val.exp();
            self.unary(e - 1.0, e)
        }
    }

    pub fn softplus(self) -> Var<'t> {
        let s = special::softplus(self.val);
        let sig = 1.0 / (1.0 + (-self.val).exp());
        self.unary(s, sig)
    }

    pub fn lgamma(self) -> Var<'t> {
        self.unary(special::lgamma(self.val), special::digamma(self.val))
    }

    pub fn atan(self) -> Var<'t> {
        self.unary(self.val.atan(), 1.0 / (1.0 + self.val * self.val))
    }

    pub fn sqrt(self) -> Var<'t> {
        let s = self.val.sqrt();
        self.unary(s, 0.5 / s)
    }

    pub fn recip(self) -> Var<'t> {
        self.unary(1.0 / self.val, -1.0 / (self.val * self.val))
    }
}

impl<'t> Add for Var<'t> {
    type Output = Var<'t>;
    fn add(self, rhs: Var<'t>) -> Var<'t> {
        self.binary(rhs, self.val + rhs.val, 1.0, 1.0)
    }
}

impl<'t> Sub for Var<'t> {
    type Output = Var<'t>;
    fn sub(self, rhs: Var<'t>) -> Var<'t> {
        self.binary(rhs, self.val - rhs.val, 1.0, -1.0)
    }
}

impl<'t> Mul for Var<'t> {
    type Output = Var<'t>;
    fn mul(self, rhs: Var<'t>) -> Var<'t> {
        self.binary(rhs, self.val * rhs.val, rhs.val, self.val)
    }
}

impl<'t> Div for Var<'t> {
    type Output = Var<'t>;
    fn div(self, rhs: Var<'t>) -> Var<'t> {
        self.binary(
            rhs,
            self.val / rhs.val,
            1.0 / rhs.val,
            -self.val / (rhs.val * rhs.val),
        )
    }
}

impl<'t> Neg for Var<'t> {
    type Output = Var<'t>;
    fn neg(self) -> Var<'t> {
        self.unary(-self.val, -1.0)
    }
}

impl<'t> Add<f64> for Var<'t> {
    type Output = Var<'t>;
    fn add(self, rhs: f64) -> Var<'t> {
        self.unary(self.val + rhs, 1.0)
    }
}

impl<'t> Sub<f64> for Var<'t> {
    type Output = Var<'t>;
    fn sub(self, rhs: f64) -> Var<'t> {
        self.unary(self.val - rhs, 1.0)
    }
}

impl<'t> Mul<f64> for Var<'t> {
    type Output = Var<'t>;
    fn mul(self, rhs: f64) -> Var<'t> {
        self.unary(self.val * rhs, rhs)
    }
}

impl<'t> Div<f64> for Var<'t> {
    type Output = Var<'t>;
    fn div(self, rhs: f64) -> Var<'t> {
        self.unary(self.val / rhs, 1.0 / rhs)
    }
}

/// Reverse sweep from `output`; returns the adjoint of every node.
///
/// The adjoint of the output node is 1; nodes unreachable from the output
/// keep adjoint 0.
pub fn backward(output: Var<'_>) -> Result<Vec<f64>> {
    let tape = output.tape;
    if let Some(node) = tape.nonfinite_node() {
        return Err(Error::NumericOverflow { node });
    }
    let nodes = tape.nodes.borrow();
    let out = output.idx as usize;
    if out >= nodes.len() {
        return Err(Error::Usage(format!("output id {out} out of range")));
    }
    let mut adj = vec![0.0f64; nodes.len()];
    adj[out] = 1.0;
    for i in (0..=out).rev() {
        let a = adj[i];
        if a == 0.0 {
            continue;
        }
        let node = &nodes[i];
        for p in 0..node.n_parents as usize {
            let (pid, partial) = node.parents[p];
            adj[pid as usize] += a * partial;
        }
    }
    Ok(adj)
}

/// Forward-evaluates `f` at `inputs` on a fresh tape.
pub fn eval<F>(f: F, inputs: &[f64]) -> Result<f64>
where
    F: for<'t> Fn(&'t Tape, &[Var<'t>]) -> Var<'t>,
{
    let tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|&x| tape.input(x)).collect();
    let out = f(&tape, &vars);
    if let Some(node) = tape.nonfinite_node() {
        return Err(Error::NumericOverflow { node });
    }
    Ok(out.value())
}

/// Forward value and gradient of a scalar function of `inputs`.
pub fn gradient<F>(f: F, inputs: &[f64]) -> Result<(f64, Vec<f64>)>
where
    F: for<'t> Fn(&'t Tape, &[Var<'t>]) -> Var<'t>,
{
    let tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|&x| tape.input(x)).collect();
    let out = f(&tape, &vars);
    let adj = backward(out)?;
    let grad = vars.iter().map(|v| adj[v.index()]).collect();
    Ok((out.value(), grad))
}

/// Result of comparing reverse-mode gradients against central differences.
#[derive(Debug, Clone, Copy)]
pub struct GradCheck {
    /// max over components of |ad − fd| / max(1, |ad|, |fd|)
    pub max_rel_err: f64,
    /// number of components where the finite-difference probe was non-finite
    pub non_finite: usize,
}

/// Compares `gradient` against central finite differences component-wise.
pub fn check_gradient<F>(f: F, point: &[f64], step: f64) -> GradCheck
where
    F: for<'t> Fn(&'t Tape, &[Var<'t>]) -> Var<'t>,
{
    let (_, g) = match gradient(&f, point) {
        Ok(r) => r,
        Err(_) => {
            return GradCheck {
                max_rel_err: f64::NAN,
                non_finite: point.len(),
            }
        }
    };
    let mut max_rel = 0.0f64;
    let mut non_finite = 0usize;
    let mut x = point.to_vec();
    for i in 0..point.len() {
        x[i] = point[i] + step;
        let hi = eval(&f, &x);
        x[i] = point[i] - step;
        let lo = eval(&f, &x);
        x[i] = point[i];
        let (hi, lo) = match (hi, lo) {
            (Ok(a), Ok(b)) if a.is_finite() && b.is_finite() => (a, b),
            _ => {
                non_finite += 1;
                continue;
            }
        };
        let fd = (hi - lo) / (2.0 * step);
        let rel = (g[i] - fd).abs() / 1.0f64.max(g[i].abs()).max(fd.abs());
        max_rel = max_rel.max(rel);
    }
    GradCheck {
        max_rel_err: max_rel,
        non_finite,
    }
}

/// Scalar abstraction shared by the plain-f64 fast path and the tape.
///
/// Branch decisions inside generic code read `val()`; that matches the
/// define-by-run semantics (the tape records the branch actually taken).
pub trait Real:
    Copy
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
    + Add<f64, Output = Self>
    + Sub<f64, Output = Self>
    + Mul<f64, Output = Self>
    + Div<f64, Output = Self>
{
    fn val(self) -> f64;
    /// Constant in the same evaluation context as `self`.
    fn lift(self, c: f64) -> Self;
    fn exp(self) -> Self;
    fn ln(self) -> Self;
    fn tanh(self) -> Self;
    fn elu(self) -> Self;
    fn softplus(self) -> Self;
    fn lgamma(self) -> Self;
    fn atan(self) -> Self;
    fn sqrt(self) -> Self;
}

impl Real for f64 {
    fn val(self) -> f64 {
        self
    }
    fn lift(self, c: f64) -> f64 {
        c
    }
    fn exp(self) -> f64 {
        f64::exp(self)
    }
    fn ln(self) -> f64 {
        f64::ln(self)
    }
    fn tanh(self) -> f64 {
        f64::tanh(self)
    }
    fn elu(self) -> f64 {
        if self > 0.0 {
            self
        } else {
            self.exp_m1()
        }
    }
    fn softplus(self) -> f64 {
        special::softplus(self)
    }
    fn lgamma(self) -> f64 {
        special::lgamma(self)
    }
    fn atan(self) -> f64 {
        f64::atan(self)
    }
    fn sqrt(self) -> f64 {
        f64::sqrt(self)
    }
}

impl<'t> Real for Var<'t> {
    fn val(self) -> f64 {
        self.value()
    }
    fn lift(self, c: f64) -> Var<'t> {
        self.tape.constant(c)
    }
    fn exp(self) -> Var<'t> {
        Var::exp(self)
    }
    fn ln(self) -> Var<'t> {
        Var::ln(self)
    }
    fn tanh(self) -> Var<'t> {
        Var::tanh(self)
    }
    fn elu(self) -> Var<'t> {
        Var::elu(self)
    }
    fn softplus(self) -> Var<'t> {
        Var::softplus(self)
    }
    fn lgamma(self) -> Var<'t> {
        Var::lgamma(self)
    }
    fn atan(self) -> Var<'t> {
        Var::atan(self)
    }
    fn sqrt(self) -> Var<'t> {
        Var::sqrt(self)
    }
}
