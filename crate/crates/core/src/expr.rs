//! Field expressions over a flat parameter vector.
//!
//! [`FieldExpr`] composes the primitives of [`crate::field`] into a tree whose
//! coefficients are either constants or indices into a parameter slice. The
//! same tree evaluates on plain numbers or on a fresh [`Tape`], which gives the
//! value together with its gradient with respect to every parameter.

use crate::error::{Error, Result};
use crate::field::{cylinder_value, mat_vec_generic, rotation_matrix, BoxField, Point3};
use crate::tape::{Real, Tape};

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Coef {
    Const(f64),
    Param(usize),
}

impl Coef {
    fn resolve<T: Real>(self, params: &[T], like: T) -> T {
        match self {
            Coef::Const(c) => like.lift(c),
            Coef::Param(i) => params[i],
        }
    }

    fn param(self) -> Option<usize> {
        match self {
            Coef::Const(_) => None,
            Coef::Param(i) => Some(i),
        }
    }
}

impl From<f64> for Coef {
    fn from(c: f64) -> Self {
        Coef::Const(c)
    }
}

#[derive(Clone, Debug)]
pub enum FieldExpr {
    Box(BoxField),
    Cylinder {
        center: [Coef; 3],
        radius: Coef,
    },
    /// A tool swept through explicit placements: min over the cylinders.
    Sweep {
        points: Vec<[Coef; 2]>,
        depth: Coef,
        radius: Coef,
    },
    /// `inner` evaluated in the rotated frame: `inner(Rot p)`.
    Rotated {
        theta_x: Coef,
        theta_y: Coef,
        inner: Box<FieldExpr>,
    },
    Neg(Box<FieldExpr>),
    Max(Vec<FieldExpr>),
    Min(Vec<FieldExpr>),
    /// `max(a, -b)`.
    Subtract(Box<FieldExpr>, Box<FieldExpr>),
    SmoothSign {
        w: f64,
        inner: Box<FieldExpr>,
    },
}

impl FieldExpr {
    pub fn subtract(a: FieldExpr, b: FieldExpr) -> FieldExpr {
        FieldExpr::Subtract(Box::new(a), Box::new(b))
    }

    pub fn rotated(theta_x: Coef, theta_y: Coef, inner: FieldExpr) -> FieldExpr {
        FieldExpr::Rotated {
            theta_x,
            theta_y,
            inner: Box::new(inner),
        }
    }

    /// Largest parameter index referenced anywhere in the tree.
    pub fn max_param(&self) -> Option<usize> {
        let mut best: Option<usize> = None;
        self.visit_params(&mut |i| best = Some(best.map_or(i, |b| b.max(i))));
        best
    }

    fn visit_params(&self, f: &mut impl FnMut(usize)) {
        let mut take = |c: &Coef| {
            if let Some(i) = c.param() {
                f(i)
            }
        };
        match self {
            FieldExpr::Box(_) => {}
            FieldExpr::Cylinder { center, radius } => {
                center.iter().for_each(&mut take);
                take(radius);
            }
            FieldExpr::Sweep {
                points,
                depth,
                radius,
            } => {
                points.iter().flatten().for_each(&mut take);
                take(depth);
                take(radius);
            }
            FieldExpr::Rotated {
                theta_x,
                theta_y,
                inner,
            } => {
                take(theta_x);
                take(theta_y);
                inner.visit_params(f);
            }
            FieldExpr::Neg(a) | FieldExpr::SmoothSign { inner: a, .. } => a.visit_params(f),
            FieldExpr::Max(v) | FieldExpr::Min(v) => v.iter().for_each(|e| e.visit_params(f)),
            FieldExpr::Subtract(a, b) => {
                a.visit_params(f);
                b.visit_params(f);
            }
        }
    }

    fn check(&self, n_params: usize) -> Result<()> {
        if let Some(i) = self.max_param() {
            if i >= n_params {
                return Err(Error::Contract(format!(
                    "expression references parameter {i} but only {n_params} were supplied"
                )));
            }
        }
        Ok(())
    }

    pub fn eval(&self, p: Point3, params: &[f64]) -> Result<f64> {
        self.check(params.len())?;
        Ok(self.eval_generic([p.x, p.y, p.z], params))
    }

    pub(crate) fn eval_generic<T: Real>(&self, p: [T; 3], params: &[T]) -> T {
        let like = p[0];
        match self {
            FieldExpr::Box(b) => {
                let [l, w, h] = b.half_extents();
                let ax = (p[0] / l).abs();
                let ay = (p[1] / w).abs();
                let az = (p[2] / h).abs();
                ax.max(ay).max(az) - 1.0
            }
            FieldExpr::Cylinder { center, radius } => cylinder_value(
                p[0],
                p[1],
                p[2],
                center[0].resolve(params, like),
                center[1].resolve(params, like),
                center[2].resolve(params, like),
                radius.resolve(params, like),
            ),
            FieldExpr::Sweep {
                points,
                depth,
                radius,
            } => {
                let cz = depth.resolve(params, like);
                let r = radius.resolve(params, like);
                let mut best: Option<T> = None;
                for pt in points {
                    let v = cylinder_value(
                        p[0],
                        p[1],
                        p[2],
                        pt[0].resolve(params, like),
                        pt[1].resolve(params, like),
                        cz,
                        r,
                    );
                    best = Some(match best {
                        None => v,
                        Some(b) => b.min(v),
                    });
                }
                best.unwrap_or_else(|| like.lift(f64::INFINITY))
            }
            FieldExpr::Rotated {
                theta_x,
                theta_y,
                inner,
            } => {
                let m = rotation_matrix(theta_x.resolve(params, like), theta_y.resolve(params, like));
                inner.eval_generic(mat_vec_generic(&m, p), params)
            }
            FieldExpr::Neg(a) => -a.eval_generic(p, params),
            FieldExpr::Max(v) => fold(v, p, params, |a, b| a.max(b)),
            FieldExpr::Min(v) => fold(v, p, params, |a, b| a.min(b)),
            FieldExpr::Subtract(a, b) => {
                let av = a.eval_generic(p, params);
                av.max(-b.eval_generic(p, params))
            }
            FieldExpr::SmoothSign { w, inner } => (inner.eval_generic(p, params) * *w).tanh(),
        }
    }
}

fn fold<T: Real>(v: &[FieldExpr], p: [T; 3], params: &[T], op: impl Fn(T, T) -> T) -> T {
    let mut it = v.iter();
    let first = match it.next() {
        Some(e) => e.eval_generic(p, params),
        None => return p[0].lift(f64::NAN),
    };
    it.fold(first, |acc, e| op(acc, e.eval_generic(p, params)))
}

/// Value and gradient with respect to `params`.
///
/// The gradient has one entry per supplied parameter; parameters the
/// expression never touches get exactly zero. At min/max ties the first
/// attaining argument carries the derivative.
pub fn eval_with_grad(expr: &FieldExpr, p: Point3, params: &[f64]) -> Result<(f64, Vec<f64>)> {
    expr.check(params.len())?;
    let tape = Tape::new();
    let vars: Vec<_> = params.iter().map(|&v| tape.var(v)).collect();
    let q = [
        tape.constant(p.x),
        tape.constant(p.y),
        tape.constant(p.z),
    ];
    let out = expr.eval_generic(q, &vars);
    let adj = tape.backward(&[(out, 1.0)]);
    Ok((out.value(), vars.iter().map(|&v| adj.wrt(v)).collect()))
}
