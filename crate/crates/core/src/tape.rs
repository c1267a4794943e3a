//! Scalar reverse-mode differentiation.
//!
//! A [`Tape`] records every elementary operation performed on [`Var`]s as a
//! node with at most two parents and the local partial derivatives. One
//! backward sweep then yields the adjoint of every recorded node. Tapes are
//! built per evaluation and never shared between threads.
//!
//! Geometry code is written once against the [`Real`] trait and runs either on
//! plain `f64` or on tape variables; both paths perform the same floating-point
//! operations in the same order, so their values agree bit for bit.

use std::cell::RefCell;
use std::ops::{Add, Div, Mul, Neg, Sub};

const NO_PARENT: u32 = u32::MAX;

#[derive(Clone, Copy)]
struct Node {
    a: u32,
    da: f64,
    b: u32,
    db: f64,
}

#[derive(Default)]
pub struct Tape {
    nodes: RefCell<Vec<Node>>,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_capacity(n: usize) -> Self {
        Self {
            nodes: RefCell::new(Vec::with_capacity(n)),
        }
    }

    /// Records an independent variable.
    pub fn var(&self, value: f64) -> Var<'_> {
        self.push(value, NO_PARENT, 0.0, NO_PARENT, 0.0)
    }

    /// Records a constant. Constants are leaves exactly like variables; the
    /// distinction only matters to the caller.
    pub fn constant(&self, value: f64) -> Var<'_> {
        self.var(value)
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn push(&self, value: f64, a: u32, da: f64, b: u32, db: f64) -> Var<'_> {
        let mut nodes = self.nodes.borrow_mut();
        let idx = nodes.len();
        nodes.push(Node { a, da, b, db });
        Var {
            tape: self,
            idx: idx as u32,
            val: value,
        }
    }

    /// Backward sweep seeded with `adjoint` on each listed output.
    pub fn backward(&self, seeds: &[(Var<'_>, f64)]) -> Adjoints {
        let nodes = self.nodes.borrow();
        let mut adj = vec![0.0; nodes.len()];
        for (v, s) in seeds {
            debug_assert!(std::ptr::eq(v.tape, self), "seed recorded on another tape");
            adj[v.idx as usize] += *s;
        }
        for i in (0..nodes.len()).rev() {
            let g = adj[i];
            if g == 0.0 {
                continue;
            }
            let n = nodes[i];
            if n.a != NO_PARENT {
                adj[n.a as usize] += g * n.da;
            }
            if n.b != NO_PARENT {
                adj[n.b as usize] += g * n.db;
            }
        }
        Adjoints { adj }
    }
}

/// Adjoints of every node of a tape after a backward sweep.
pub struct Adjoints {
    adj: Vec<f64>,
}

impl Adjoints {
    pub fn wrt(&self, v: Var<'_>) -> f64 {
        self.adj[v.idx as usize]
    }
}

/// A value recorded on a [`Tape`].
#[derive(Clone, Copy)]
pub struct Var<'t> {
    tape: &'t Tape,
    idx: u32,
    val: f64,
}

impl std::fmt::Debug for Var<'_> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Var#{}({})", self.idx, self.val)
    }
}

impl<'t> Var<'t> {
    pub fn value(self) -> f64 {
        self.val
    }

    fn unary(self, value: f64, d: f64) -> Var<'t> {
        self.tape.push(value, self.idx, d, NO_PARENT, 0.0)
    }

    fn binary(self, other: Var<'t>, value: f64, da: f64, db: f64) -> Var<'t> {
        self.tape.push(value, self.idx, da, other.idx, db)
    }
}

/// Arithmetic shared by `f64` and tape variables.
///
/// `max`/`min` resolve ties to the first argument, which is also the branch
/// whose derivative is propagated.
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
    fn value(self) -> f64;
    /// A constant living in the same context as `self`.
    fn lift(self, c: f64) -> Self;
    fn tanh(self) -> Self;
    fn exp(self) -> Self;
    fn sqrt(self) -> Self;
    fn sin(self) -> Self;
    fn cos(self) -> Self;
    fn abs(self) -> Self;

    fn max(self, other: Self) -> Self {
        if self.value() >= other.value() {
            self
        } else {
            other
        }
    }

    fn min(self, other: Self) -> Self {
        if self.value() <= other.value() {
            self
        } else {
            other
        }
    }

    fn square(self) -> Self {
        self * self
    }
}

impl Real for f64 {
    fn value(self) -> f64 {
        self
    }
    fn lift(self, c: f64) -> Self {
        c
    }
    fn tanh(self) -> Self {
        f64::tanh(self)
    }
    fn exp(self) -> Self {
        f64::exp(self)
    }
    fn sqrt(self) -> Self {
        f64::sqrt(self)
    }
    fn sin(self) -> Self {
        f64::sin(self)
    }
    fn cos(self) -> Self {
        f64::cos(self)
    }
    fn abs(self) -> Self {
        f64::abs(self)
    }
}

impl<'t> Real for Var<'t> {
    fn value(self) -> f64 {
        self.val
    }
    fn lift(self, c: f64) -> Self {
        self.tape.constant(c)
    }
    fn tanh(self) -> Self {
        let t = self.val.tanh();
        self.unary(t, 1.0 - t * t)
    }
    fn exp(self) -> Self {
        let e = self.val.exp();
        self.unary(e, e)
    }
    fn sqrt(self) -> Self {
        let s = self.val.sqrt();
        let d = if s > 0.0 { 0.5 / s } else { 0.0 };
        self.unary(s, d)
    }
    fn sin(self) -> Self {
        self.unary(self.val.sin(), self.val.cos())
    }
    fn cos(self) -> Self {
        self.unary(self.val.cos(), -self.val.sin())
    }
    fn abs(self) -> Self {
        let d = if self.val >= 0.0 { 1.0 } else { -1.0 };
        self.unary(self.val.abs(), d)
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
        let q = self.val / rhs.val;
        self.binary(rhs, q, 1.0 / rhs.val, -q / rhs.val)
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
