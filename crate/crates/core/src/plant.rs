//! Continuous-time surface-mount PMSM model in the rotor frame.
//!
//! State is `(i_d, i_q, omega_m, theta_e)`. The engine integrates
//! [`PlantState::derivative`]; the individual pieces are exposed so they can be
//! checked in isolation.

use crate::error::{ensure, Error, Result};
use crate::frames::{AlphaBeta, DqPair};
use crate::frames::wrap_angle;

/// Physical constants of the machine, all in SI units and per phase.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MotorParams {
    /// Stator phase resistance (ohm).
    pub resistance: f64,
    /// d-axis phase inductance (H).
    pub ld: f64,
    /// q-axis phase inductance (H).
    pub lq: f64,
    /// Permanent-magnet flux linkage (Wb).
    pub flux_linkage: f64,
    /// Rotor inertia (kg m^2).
    pub inertia: f64,
    /// Viscous damping (N m s / rad).
    pub damping: f64,
    pub pole_pairs: u32,
    /// Per-axis inverter voltage limit (V).
    pub u_max: f64,
    /// Nameplate current (A); sets the default current limits.
    pub rated_current: f64,
}

impl MotorParams {
    pub fn validate(&self) -> Result<()> {
        ensure(self.resistance > 0.0, "resistance", "must be > 0")?;
        ensure(self.ld > 0.0, "ld", "must be > 0")?;
        ensure(self.lq > 0.0, "lq", "must be > 0")?;
        ensure(self.flux_linkage > 0.0, "flux_linkage", "must be > 0")?;
        ensure(self.inertia > 0.0, "inertia", "must be > 0")?;
        ensure(self.damping >= 0.0, "damping", "must be >= 0")?;
        ensure(self.pole_pairs >= 1, "pole_pairs", "must be >= 1")?;
        ensure(self.u_max > 0.0, "u_max", "must be > 0")?;
        ensure(self.rated_current > 0.0, "rated_current", "must be > 0")?;
        Ok(())
    }

    pub fn pn(&self) -> f64 {
        f64::from(self.pole_pairs)
    }

    /// Torque per ampere of q-axis current, `1.5 * pn * psi_f`.
    pub fn torque_constant(&self) -> f64 {
        1.5 * self.pn() * self.flux_linkage
    }

    pub fn is_surface_mount(&self) -> bool {
        self.ld == self.lq
    }
}

/// True motor state.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct PlantState {
    pub i_d: f64,
    pub i_q: f64,
    /// Mechanical angular velocity (rad/s).
    pub omega_m: f64,
    /// Electrical rotor angle (rad), kept in `[-pi, pi)`.
    pub theta_e: f64,
}

/// Load torque applied to the shaft (N m).
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct LoadInput {
    pub torque: f64,
}

/// Time derivative of a [`PlantState`].
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct PlantDerivative {
    pub di_d: f64,
    pub di_q: f64,
    pub domega_m: f64,
    pub dtheta_e: f64,
}

impl PlantDerivative {
    /// Same ordering as [`PlantState::to_array`].
    pub fn to_array(&self) -> [f64; 4] {
        [self.di_d, self.di_q, self.domega_m, self.dtheta_e]
    }
}

impl PlantState {
    pub fn omega_e(&self, p: &MotorParams) -> f64 {
        p.pn() * self.omega_m
    }

    pub fn currents(&self) -> DqPair {
        DqPair::new(self.i_d, self.i_q)
    }

    pub fn is_finite(&self) -> bool {
        self.i_d.is_finite()
            && self.i_q.is_finite()
            && self.omega_m.is_finite()
            && self.theta_e.is_finite()
    }

    pub fn to_array(&self) -> [f64; 4] {
        [self.i_d, self.i_q, self.omega_m, self.theta_e]
    }

    /// Rebuild from an integrator vector, wrapping the angle.
    pub fn from_array(y: [f64; 4]) -> Self {
        Self {
            i_d: y[0],
            i_q: y[1],
            omega_m: y[2],
            theta_e: wrap_angle(y[3]),
        }
    }

    /// Full state derivative for rotor-frame voltage `u` and load `load`.
    pub fn derivative(&self, u: DqPair, load: LoadInput, p: &MotorParams) -> PlantDerivative {
        let (di_d, di_q) = electrical_derivatives(self, u, p);
        let te = torque(self, p);
        PlantDerivative {
            di_d,
            di_q,
            domega_m: mechanical_derivative(self, te, load, p),
            dtheta_e: self.omega_e(p),
        }
    }
}

/// Rotor-frame current dynamics. The q row divides by `lq`.
pub fn electrical_derivatives(state: &PlantState, u: DqPair, p: &MotorParams) -> (f64, f64) {
    let omega_e = state.omega_e(p);
    let di_d = (-p.resistance * state.i_d + p.lq * omega_e * state.i_q + u.d) / p.ld;
    let di_q = -(p.resistance * state.i_q + omega_e * (p.ld * state.i_d + p.flux_linkage) - u.q) / p.lq;
    (di_d, di_q)
}

/// Electromagnetic torque including the reluctance term.
pub fn torque(state: &PlantState, p: &MotorParams) -> f64 {
    1.5 * p.pn() * (p.flux_linkage * state.i_q + (p.ld - p.lq) * state.i_d * state.i_q)
}

/// Shaft acceleration `(Te - T_L - xi * omega_m) / J`.
pub fn mechanical_derivative(state: &PlantState, te: f64, load: LoadInput, p: &MotorParams) -> f64 {
    (te - load.torque - p.damping * state.omega_m) / p.inertia
}

/// Stationary-frame back-EMF of a surface-mount machine, used as ground truth
/// for the observer.
pub fn backemf_alphabeta(state: &PlantState, p: &MotorParams) -> Result<AlphaBeta> {
    if !p.is_surface_mount() {
        return Err(Error::SalientMachine);
    }
    let amplitude = state.omega_e(p) * p.flux_linkage;
    let (sin, cos) = libm::sincos(state.theta_e);
    Ok(AlphaBeta::new(-amplitude * sin, amplitude * cos))
}
