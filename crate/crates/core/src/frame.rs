//! Synchronous-frame vectors and planar rotations.

use std::f64::consts::{PI, TAU};
use std::ops::{Add, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};

/// A two-component quantity in the synchronous (dq) frame.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Dq {
    pub d: f64,
    pub q: f64,
}

impl Dq {
    pub const ZERO: Dq = Dq { d: 0.0, q: 0.0 };

    pub const fn new(d: f64, q: f64) -> Self {
        Self { d, q }
    }

    pub fn norm(self) -> f64 {
        self.d.hypot(self.q)
    }

    pub fn dot(self, other: Dq) -> f64 {
        self.d * other.d + self.q * other.q
    }

    /// z-component of `self × other`.
    pub fn cross(self, other: Dq) -> f64 {
        self.d * other.q - self.q * other.d
    }

    pub fn is_finite(self) -> bool {
        self.d.is_finite() && self.q.is_finite()
    }
}

impl Add for Dq {
    type Output = Dq;
    fn add(self, rhs: Dq) -> Dq {
        Dq::new(self.d + rhs.d, self.q + rhs.q)
    }
}

impl Sub for Dq {
    type Output = Dq;
    fn sub(self, rhs: Dq) -> Dq {
        Dq::new(self.d - rhs.d, self.q - rhs.q)
    }
}

impl Neg for Dq {
    type Output = Dq;
    fn neg(self) -> Dq {
        Dq::new(-self.d, -self.q)
    }
}

impl Mul<f64> for Dq {
    type Output = Dq;
    fn mul(self, k: f64) -> Dq {
        Dq::new(self.d * k, self.q * k)
    }
}

impl From<(f64, f64)> for Dq {
    fn from((d, q): (f64, f64)) -> Self {
        Dq::new(d, q)
    }
}

/// Counter-clockwise rotation `[cos, -sin; sin, cos]` by `angle`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rotation {
    cos: f64,
    sin: f64,
}

impl Rotation {
    pub fn new(angle: f64) -> Self {
        let (sin, cos) = angle.sin_cos();
        Self { cos, sin }
    }

    pub fn apply(self, v: Dq) -> Dq {
        Dq::new(self.cos * v.d - self.sin * v.q, self.sin * v.d + self.cos * v.q)
    }

    /// Applies `[cos, sin; -sin, cos]`, the inverse rotation.
    pub fn apply_transpose(self, v: Dq) -> Dq {
        Dq::new(self.cos * v.d + self.sin * v.q, -self.sin * v.d + self.cos * v.q)
    }

    pub fn cos(self) -> f64 {
        self.cos
    }

    pub fn sin(self) -> f64 {
        self.sin
    }
}

/// Wraps an angle to `[0, 2π)`.
pub fn wrap_2pi(angle: f64) -> f64 {
    let w = angle.rem_euclid(TAU);
    // rem_euclid can round up to exactly TAU for tiny negative inputs
    if w >= TAU {
        0.0
    } else {
        w
    }
}

/// Wraps an angle to `(-π, π]`.
pub fn wrap_pi(angle: f64) -> f64 {
    let w = wrap_2pi(angle);
    if w > PI {
        w - TAU
    } else {
        w
    }
}
