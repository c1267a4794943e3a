//! Implicit primitives, rotations and the CSG combinator.
//!
//! Every field is negative inside its solid and positive outside. Fields are
//! not distance calibrated; only the sign and the zero level set carry
//! meaning.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tape::Real;

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Point3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Point3 {
    pub const ORIGIN: Point3 = Point3 {
        x: 0.0,
        y: 0.0,
        z: 0.0,
    };

    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    pub fn norm(self) -> f64 {
        (self.x * self.x + self.y * self.y + self.z * self.z).sqrt()
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.x, self.y, self.z]
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }
}

impl From<[f64; 3]> for Point3 {
    fn from(a: [f64; 3]) -> Self {
        Point3::new(a[0], a[1], a[2])
    }
}

/// The stock block: `max(|x/l|, |y/w|, |z/h|) - 1` with half-extents `l, w, h`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoxField {
    half: [f64; 3],
}

impl BoxField {
    pub fn new(l: f64, w: f64, h: f64) -> Result<Self> {
        for (name, v) in [("l", l), ("w", w), ("h", h)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::invalid(format!(
                    "box half-extent {name} must be positive and finite, got {v}"
                )));
            }
        }
        Ok(Self { half: [l, w, h] })
    }

    /// The normalized evaluation box `[-0.5, 0.5]^3`.
    pub fn unit() -> Self {
        Self {
            half: [0.5, 0.5, 0.5],
        }
    }

    pub fn half_extents(&self) -> [f64; 3] {
        self.half
    }

    pub fn eval(&self, p: Point3) -> f64 {
        eval_box(p, self)
    }
}

pub fn eval_box(p: Point3, b: &BoxField) -> f64 {
    let [l, w, h] = b.half;
    let ax = (p.x / l).abs();
    let ay = (p.y / w).abs();
    let az = (p.z / h).abs();
    ax.max(ay).max(az) - 1.0
}

/// A tool: a half-infinite cylinder standing on its base disc at `center`,
/// extending towards `+z`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CylinderField {
    center: Point3,
    radius: f64,
}

impl CylinderField {
    pub fn new(center: Point3, radius: f64) -> Result<Self> {
        if !(radius > 0.0 && radius.is_finite()) {
            return Err(Error::invalid(format!(
                "cylinder radius must be positive and finite, got {radius}"
            )));
        }
        Ok(Self { center, radius })
    }

    pub fn center(&self) -> Point3 {
        self.center
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }
}

pub fn eval_cylinder(p: Point3, t: &CylinderField) -> f64 {
    cylinder_value(p.x, p.y, p.z, t.center.x, t.center.y, t.center.z, t.radius)
}

/// `max((x-cx)^2 + (y-cy)^2 - r^2, cz - z)`, generic over the scalar type.
#[inline]
pub(crate) fn cylinder_value<T: Real>(x: T, y: T, z: T, cx: T, cy: T, cz: T, r: T) -> T {
    let dx = x - cx;
    let dy = y - cy;
    let lateral = (dx * dx + dy * dy) - r * r;
    lateral.max(cz - z)
}

/// Workpiece orientation for one step: counterclockwise about X by `theta_x`,
/// then counterclockwise about Y by `theta_y`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Rotation {
    pub theta_x: f64,
    pub theta_y: f64,
}

pub type Mat3 = [[f64; 3]; 3];

impl Rotation {
    pub const IDENTITY: Rotation = Rotation {
        theta_x: 0.0,
        theta_y: 0.0,
    };

    pub fn new(theta_x: f64, theta_y: f64) -> Self {
        Self { theta_x, theta_y }
    }

    pub fn is_identity(&self) -> bool {
        self.theta_x == 0.0 && self.theta_y == 0.0
    }

    /// `Ry(theta_y) * Rx(theta_x)`.
    pub fn matrix(&self) -> Mat3 {
        rotation_matrix(self.theta_x, self.theta_y)
    }

    /// Partial derivatives of [`Rotation::matrix`] with respect to
    /// `theta_x` and `theta_y`.
    pub fn matrix_derivatives(&self) -> (Mat3, Mat3) {
        let (sa, ca) = self.theta_x.sin_cos();
        let (sb, cb) = self.theta_y.sin_cos();
        let dx = [
            [0.0, sb * ca, -sb * sa],
            [0.0, -sa, -ca],
            [0.0, cb * ca, -cb * sa],
        ];
        let dy = [
            [-sb, cb * sa, cb * ca],
            [0.0, 0.0, 0.0],
            [-cb, -sb * sa, -sb * ca],
        ];
        (dx, dy)
    }
}

pub(crate) fn rotation_matrix<T: Real>(theta_x: T, theta_y: T) -> [[T; 3]; 3] {
    let (sa, ca) = (theta_x.sin(), theta_x.cos());
    let (sb, cb) = (theta_y.sin(), theta_y.cos());
    let zero = theta_x.lift(0.0);
    [
        [cb, sb * sa, sb * ca],
        [zero, ca, -sa],
        [-sb, cb * sa, cb * ca],
    ]
}

#[inline]
pub fn mat_vec(m: &Mat3, p: Point3) -> Point3 {
    Point3::new(
        m[0][0] * p.x + m[0][1] * p.y + m[0][2] * p.z,
        m[1][0] * p.x + m[1][1] * p.y + m[1][2] * p.z,
        m[2][0] * p.x + m[2][1] * p.y + m[2][2] * p.z,
    )
}

#[inline]
pub(crate) fn mat_vec_generic<T: Real>(m: &[[T; 3]; 3], p: [T; 3]) -> [T; 3] {
    [
        m[0][0] * p[0] + m[0][1] * p[1] + m[0][2] * p[2],
        m[1][0] * p[0] + m[1][1] * p[1] + m[1][2] * p[2],
        m[2][0] * p[0] + m[2][1] * p[1] + m[2][2] * p[2],
    ]
}

pub fn rotate_point(p: Point3, rot: Rotation) -> Point3 {
    mat_vec(&rot.matrix(), p)
}

pub fn inverse_rotate(p: Point3, rot: Rotation) -> Point3 {
    let m = rot.matrix();
    Point3::new(
        m[0][0] * p.x + m[1][0] * p.y + m[2][0] * p.z,
        m[0][1] * p.x + m[1][1] * p.y + m[2][1] * p.z,
        m[0][2] * p.x + m[1][2] * p.y + m[2][2] * p.z,
    )
}

/// Beyond this magnitude `tanh` is exactly ±1 in double precision.
const TANH_SATURATION: f64 = 22.0;

/// `tanh(w * x)`.
#[inline]
pub fn smooth_sign(x: f64, w: f64) -> f64 {
    let y = w * x;
    if y.abs() >= TANH_SATURATION {
        y.signum()
    } else {
        y.tanh()
    }
}

/// Subtract solid `b` from solid `a`: `max(a, -b)`.
#[inline]
pub fn csg_subtract_values(a: f64, b: f64) -> f64 {
    a.max(-b)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::{FRAC_PI_2, PI};

    fn unit_box() -> BoxField {
        BoxField::new(0.5, 0.5, 0.5).unwrap()
    }

    #[test]
    fn box_values() {
        let b = unit_box();
        assert_eq!(eval_box(Point3::ORIGIN, &b), -1.0);
        assert_eq!(eval_box(Point3::new(0.5, 0.0, 0.0), &b), 0.0);
        assert_eq!(eval_box(Point3::new(1.0, 0.0, 0.0), &b), 1.0);
    }

    #[test]
    fn box_rejects_bad_extents() {
        assert!(matches!(
            BoxField::new(0.0, 1.0, 1.0),
            Err(Error::InvalidArgument(_))
        ));
        assert!(BoxField::new(1.0, -1.0, 1.0).is_err());
        assert!(BoxField::new(1.0, 1.0, f64::NAN).is_err());
    }

    #[test]
    fn cylinder_values() {
        let t = CylinderField::new(Point3::ORIGIN, 0.5).unwrap();
        assert_eq!(eval_cylinder(Point3::new(0.0, 0.0, 1.0), &t), -0.25);
        assert_eq!(eval_cylinder(Point3::new(0.0, 0.0, -1.0), &t), 1.0);
        assert_eq!(eval_cylinder(Point3::new(0.5, 0.0, 1.0), &t), 0.0);
        assert!(CylinderField::new(Point3::ORIGIN, 0.0).is_err());
    }

    #[test]
    fn rotation_examples() {
        let p = Point3::new(0.3, 0.2, 0.1);
        assert_eq!(rotate_point(p, Rotation::IDENTITY), p);
        let q = rotate_point(Point3::new(0.0, 1.0, 0.0), Rotation::new(FRAC_PI_2, 0.0));
        assert!(q.x.abs() < 1e-15 && q.y.abs() < 1e-15 && (q.z - 1.0).abs() < 1e-15);
        // counterclockwise about Y carries +z onto +x
        let q = rotate_point(Point3::new(0.0, 0.0, 1.0), Rotation::new(0.0, FRAC_PI_2));
        assert!((q.x - 1.0).abs() < 1e-15 && q.z.abs() < 1e-15);
    }

    #[test]
    fn rotation_order_is_x_then_y() {
        let r = Rotation::new(0.7, -1.1);
        let p = Point3::new(0.2, -0.4, 0.3);
        let via_x = rotate_point(p, Rotation::new(0.7, 0.0));
        let both = rotate_point(via_x, Rotation::new(0.0, -1.1));
        let direct = rotate_point(p, r);
        assert!((both.x - direct.x).abs() < 1e-15);
        assert!((both.y - direct.y).abs() < 1e-15);
        assert!((both.z - direct.z).abs() < 1e-15);
    }

    #[test]
    fn matrix_derivatives_match_finite_differences() {
        let r = Rotation::new(0.4, -2.2);
        let (dx, dy) = r.matrix_derivatives();
        let h = 1e-6;
        let mp = Rotation::new(0.4 + h, -2.2).matrix();
        let mm = Rotation::new(0.4 - h, -2.2).matrix();
        let np = Rotation::new(0.4, -2.2 + h).matrix();
        let nm = Rotation::new(0.4, -2.2 - h).matrix();
        for i in 0..3 {
            for j in 0..3 {
                assert!((dx[i][j] - (mp[i][j] - mm[i][j]) / (2.0 * h)).abs() < 1e-8);
                assert!((dy[i][j] - (np[i][j] - nm[i][j]) / (2.0 * h)).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn smooth_sign_examples() {
        assert_eq!(smooth_sign(0.0, 1000.0), 0.0);
        assert!((smooth_sign(0.01, 1000.0) - 1.0).abs() < 1e-8);
        assert_eq!(smooth_sign(-0.3, 4.0), -smooth_sign(0.3, 4.0));
    }

    #[test]
    fn saturation_shortcut_is_bit_identical() {
        let mut y = TANH_SATURATION;
        while y < 800.0 {
            assert_eq!(y.tanh(), 1.0);
            assert_eq!((-y).tanh(), -1.0);
            y = y * 1.013 + 1e-3;
        }
    }

    #[test]
    fn subtract_examples() {
        assert_eq!(csg_subtract_values(-1.0, 1.0), -1.0);
        assert_eq!(csg_subtract_values(-1.0, -1.0), 1.0);
        assert!(csg_subtract_values(1.0, 5.0) >= 1.0);
        assert!(csg_subtract_values(1.0, -5.0) > 0.0);
    }

    proptest! {
        #[test]
        fn inverse_rotation_round_trips(
            x in -1.0..1.0f64, y in -1.0..1.0f64, z in -1.0..1.0f64,
            a in -PI..PI, b in -PI..PI,
        ) {
            let p = Point3::new(x, y, z);
            let r = Rotation::new(a, b);
            let q = inverse_rotate(rotate_point(p, r), r);
            prop_assert!((q.x - x).abs() < 1e-12);
            prop_assert!((q.y - y).abs() < 1e-12);
            prop_assert!((q.z - z).abs() < 1e-12);
            prop_assert!((rotate_point(p, r).norm() - p.norm()).abs() < 1e-12);
        }

        #[test]
        fn smooth_sign_is_odd(x in -0.1..0.1f64, w in 0.1..2000.0f64) {
            prop_assert_eq!(smooth_sign(-x, w), -smooth_sign(x, w));
            prop_assert!(smooth_sign(x, w).abs() <= 1.0);
        }

        #[test]
        fn subtract_is_monotone(a in -2.0..2.0f64, b in -2.0..2.0f64, da in 0.0..1.0f64, db in 0.0..1.0f64) {
            prop_assert!(csg_subtract_values(a + da, b) >= csg_subtract_values(a, b));
            prop_assert!(csg_subtract_values(a, b + db) <= csg_subtract_values(a, b));
            prop_assert_eq!(csg_subtract_values(a, b) < 0.0, a < 0.0 && b > 0.0);
        }
    }
}
