//! Cascaded field-oriented control: gain synthesis, the speed-loop PI with
//! active damping, the two current-loop PIs with optional cross-coupling
//! feed-forward, and inverter voltage limiting.

use core::f64::consts::TAU;

use crate::error::{ensure, Result};
use crate::frames::DqPair;
use crate::plant::MotorParams;

/// Speed-loop regulator obtained by pole placement.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpeedLoopDesign {
    /// Desired closed-loop bandwidth (rad/s).
    pub beta: f64,
    /// Active damping coefficient (A s / rad).
    pub xi_a: f64,
    pub kp: f64,
    pub ki: f64,
}

/// How the current loop compensates the speed-dependent d/q cross coupling.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Decoupling {
    /// Plain PI on each axis.
    #[default]
    None,
    /// Add the cross-coupling terms to the PI outputs.
    Feedforward,
}

/// Sign convention of the feed-forward terms.
///
/// `AsPrinted` subtracts both terms:
/// `u_d -= w_e Lq i_q` and `u_q -= w_e (Ld i_d + psi_f)`.
/// `Cancelling` flips the q-axis term so that both terms cancel the plant's
/// cross coupling exactly.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DecouplingSign {
    #[default]
    AsPrinted,
    Cancelling,
}

/// Current-loop regulators obtained from internal model control.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurrentLoopDesign {
    /// Closed-loop bandwidth of each axis (rad/s).
    pub a: f64,
    pub kp_d: f64,
    pub ki_d: f64,
    pub kp_q: f64,
    pub ki_q: f64,
    pub decoupling: Decoupling,
    pub decoupling_sign: DecouplingSign,
}

/// Integrator memory and output bounds of one PI regulator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PiState {
    /// Accumulated integral term, already multiplied by the integral gain.
    pub integral: f64,
    /// Symmetric output bound.
    pub limit: f64,
    pub saturated: bool,
}

impl PiState {
    pub fn new(limit: f64) -> Self {
        Self {
            integral: 0.0,
            limit,
            saturated: false,
        }
    }

    pub fn reset(&mut self) {
        self.integral = 0.0;
        self.saturated = false;
    }

    /// One PI update on `error` plus an additive feed-forward term.
    ///
    /// The integral is advanced with forward Euler unless doing so would push
    /// an already saturated output further into saturation.
    pub fn update(&mut self, kp: f64, ki: f64, error: f64, feedforward: f64, dt: f64) -> f64 {
        let candidate = self.integral + ki * error * dt;
        let unclamped = kp * error + candidate + feedforward;
        let output = unclamped.clamp(-self.limit, self.limit);
        self.saturated = output != unclamped;
        let winding_up = self.saturated && unclamped.signum() == error.signum();
        if !winding_up {
            self.integral = candidate;
            output
        } else {
            (kp * error + self.integral + feedforward).clamp(-self.limit, self.limit)
        }
    }
}

/// Speed-loop gains: `kp = J beta / (1.5 pn psi_f)`, `ki = beta kp`, and the
/// active damping `xi_a = (J beta - xi) / (1.5 pn psi_f)` when requested.
pub fn design_speed_loop(p: &MotorParams, beta: f64, use_active_damping: bool) -> Result<SpeedLoopDesign> {
    p.validate()?;
    ensure(beta > 0.0, "beta", "must be > 0")?;
    let kt = p.torque_constant();
    let kp = p.inertia * beta / kt;
    let xi_a = if use_active_damping {
        ((p.inertia * beta - p.damping) / kt).max(0.0)
    } else {
        0.0
    };
    Ok(SpeedLoopDesign {
        beta,
        xi_a,
        kp,
        ki: beta * kp,
    })
}

/// The default current-loop bandwidth `2 pi R / Ld`.
pub fn default_current_bandwidth(p: &MotorParams) -> f64 {
    TAU * p.resistance / p.ld
}

/// Current-loop gains `kp = a L`, `ki = a R` for each axis. When `a` is
/// `None` the bandwidth defaults to [`default_current_bandwidth`].
pub fn design_current_loop(p: &MotorParams, a: Option<f64>, decoupling: Decoupling) -> Result<CurrentLoopDesign> {
    p.validate()?;
    let a = a.unwrap_or_else(|| default_current_bandwidth(p));
    ensure(a > 0.0, "a", "must be > 0")?;
    Ok(CurrentLoopDesign {
        a,
        kp_d: a * p.ld,
        ki_d: a * p.resistance,
        kp_q: a * p.lq,
        ki_q: a * p.resistance,
        decoupling,
        decoupling_sign: DecouplingSign::default(),
    })
}

/// Speed regulator: PI on the speed error minus the active damping term,
/// clamped to `±state.limit` (the q-axis current limit).
pub fn speed_step(ref_omega_m: f64, meas_omega_m: f64, d: &SpeedLoopDesign, s: &mut PiState, dt: f64) -> f64 {
    let error = ref_omega_m - meas_omega_m;
    s.update(d.kp, d.ki, error, -d.xi_a * meas_omega_m, dt)
}

/// Cross-coupling feed-forward voltages for the given sign convention.
pub fn decoupling_terms(meas: DqPair, omega_e: f64, sign: DecouplingSign, p: &MotorParams) -> DqPair {
    let d_term = -omega_e * p.lq * meas.q;
    let q_back_emf = omega_e * (p.ld * meas.d + p.flux_linkage);
    let q_term = match sign {
        DecouplingSign::AsPrinted => -q_back_emf,
        DecouplingSign::Cancelling => q_back_emf,
    };
    DqPair::new(d_term, q_term)
}

/// Current regulators for both axes. Each output is clamped to its
/// `PiState::limit`, which the caller sets to the inverter limit.
#[allow(clippy::too_many_arguments)]
pub fn current_step(
    reference: DqPair,
    meas: DqPair,
    omega_e: f64,
    d: &CurrentLoopDesign,
    s_d: &mut PiState,
    s_q: &mut PiState,
    p: &MotorParams,
    dt: f64,
) -> DqPair {
    let ff = match d.decoupling {
        Decoupling::None => DqPair::ZERO,
        Decoupling::Feedforward => decoupling_terms(meas, omega_e, d.decoupling_sign, p),
    };
    let err = reference - meas;
    DqPair::new(
        s_d.update(d.kp_d, d.ki_d, err.d, ff.d, dt),
        s_q.update(d.kp_q, d.ki_q, err.q, ff.q, dt),
    )
}

/// Per-axis clamp standing in for an ideal voltage-source inverter.
pub fn limit_voltage(u: DqPair, u_max: f64) -> DqPair {
    DqPair::new(u.d.clamp(-u_max, u_max), u.q.clamp(-u_max, u_max))
}
