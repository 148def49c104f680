//! Reference-frame transforms between the three-phase (abc), stationary
//! two-phase (alpha/beta) and rotor-aligned (d/q) frames.
//!
//! The Clarke transform uses the amplitude-invariant (2/3 scaled) convention,
//! so a balanced three-phase set of peak amplitude `A` maps to an alpha/beta
//! vector of norm `A`. The torque constant `1.5 * pn * psi_f` used throughout
//! the crate depends on this choice.

use core::f64::consts::{PI, TAU};
use core::ops::{Add, Mul, Neg, Sub};

const SQRT_3: f64 = 1.732_050_807_568_877_2;
const FRAC_SQRT_3_2: f64 = 0.866_025_403_784_438_6;

/// Three phase quantities (current in A or voltage in V). Need not be balanced.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct AbcTriple {
    pub a: f64,
    pub b: f64,
    pub c: f64,
}

/// A quantity in the stationary two-phase frame.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct AlphaBeta {
    pub alpha: f64,
    pub beta: f64,
}

/// A quantity in the rotor frame: `d` along the magnet flux, `q` in quadrature.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct DqPair {
    pub d: f64,
    pub q: f64,
}

impl AbcTriple {
    pub const fn new(a: f64, b: f64, c: f64) -> Self {
        Self { a, b, c }
    }
}

impl AlphaBeta {
    pub const ZERO: Self = Self::new(0.0, 0.0);

    pub const fn new(alpha: f64, beta: f64) -> Self {
        Self { alpha, beta }
    }

    pub fn norm(&self) -> f64 {
        libm::hypot(self.alpha, self.beta)
    }

    pub fn is_finite(&self) -> bool {
        self.alpha.is_finite() && self.beta.is_finite()
    }
}

impl DqPair {
    pub const ZERO: Self = Self::new(0.0, 0.0);

    pub const fn new(d: f64, q: f64) -> Self {
        Self { d, q }
    }

    pub fn norm(&self) -> f64 {
        libm::hypot(self.d, self.q)
    }

    pub fn is_finite(&self) -> bool {
        self.d.is_finite() && self.q.is_finite()
    }
}

macro_rules! impl_vector_ops {
    ($ty:ident, $x:ident, $y:ident) => {
        impl Add for $ty {
            type Output = Self;
            fn add(self, rhs: Self) -> Self {
                Self::new(self.$x + rhs.$x, self.$y + rhs.$y)
            }
        }

        impl Sub for $ty {
            type Output = Self;
            fn sub(self, rhs: Self) -> Self {
                Self::new(self.$x - rhs.$x, self.$y - rhs.$y)
            }
        }

        impl Neg for $ty {
            type Output = Self;
            fn neg(self) -> Self {
                Self::new(-self.$x, -self.$y)
            }
        }

        impl Mul<f64> for $ty {
            type Output = Self;
            fn mul(self, rhs: f64) -> Self {
                Self::new(self.$x * rhs, self.$y * rhs)
            }
        }
    };
}

impl_vector_ops!(AlphaBeta, alpha, beta);
impl_vector_ops!(DqPair, d, q);

/// Amplitude-invariant Clarke transform.
pub fn clarke(abc: AbcTriple) -> AlphaBeta {
    AlphaBeta {
        alpha: (2.0 * abc.a - abc.b - abc.c) / 3.0,
        beta: (abc.b - abc.c) / SQRT_3,
    }
}

/// Inverse of [`clarke`]; the result has no zero-sequence component.
pub fn inverse_clarke(ab: AlphaBeta) -> AbcTriple {
    AbcTriple {
        a: ab.alpha,
        b: -0.5 * ab.alpha + FRAC_SQRT_3_2 * ab.beta,
        c: -0.5 * ab.alpha - FRAC_SQRT_3_2 * ab.beta,
    }
}

/// Rotate a stationary-frame vector into the rotor frame at electrical angle `theta_e`.
pub fn park(ab: AlphaBeta, theta_e: f64) -> DqPair {
    let (sin, cos) = libm::sincos(theta_e);
    DqPair {
        d: ab.alpha * cos + ab.beta * sin,
        q: -ab.alpha * sin + ab.beta * cos,
    }
}

/// Rotate a rotor-frame vector back into the stationary frame.
pub fn inverse_park(dq: DqPair, theta_e: f64) -> AlphaBeta {
    let (sin, cos) = libm::sincos(theta_e);
    AlphaBeta {
        alpha: dq.d * cos - dq.q * sin,
        beta: dq.d * sin + dq.q * cos,
    }
}

/// Wrap an angle into `[-pi, pi)`.
pub fn wrap_angle(theta: f64) -> f64 {
    if (-PI..PI).contains(&theta) {
        return theta;
    }
    let wrapped = theta - TAU * libm::floor((theta + PI) / TAU);
    // floor rounding can land exactly on +pi for inputs just below an odd multiple
    if wrapped >= PI {
        wrapped - TAU
    } else {
        wrapped
    }
}
