//! Sliding-mode observer for back-EMF based rotor position and speed
//! estimation.
//!
//! The observer replicates the stator current dynamics in the stationary
//! frame. A switching injection `v = k * sgn(i_hat - i)` pins the estimated
//! currents onto the measured ones; once sliding, the low-frequency part of
//! `v` equals the back-EMF. A first-order low-pass filter extracts that part,
//! and the rotor angle follows from the filtered EMF vector with a phase
//! correction for the filter lag.

use core::f64::consts::PI;

use crate::error::{ensure, Result};
use crate::frames::{wrap_angle, AlphaBeta};
use crate::ode::rk3_step;
use crate::plant::MotorParams;

/// Below this EMF magnitude (V) the angle is held and flagged invalid.
pub const DEFAULT_EMF_EPSILON: f64 = 5.0;

/// Time constants (s) of the extra smoothing applied to the EMF vector and to
/// its angular rate when inferring the rotation direction.
const DIRECTION_SMOOTHING_TAU: f64 = 2e-4;
const DIRECTION_RATE_TAU: f64 = 1e-3;

/// The direction flips only when the filtered rate opposes the current
/// direction by at least this fraction of the speed magnitude.
const DIRECTION_HYSTERESIS: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum SwitchingFunction {
    /// `sgn(x)` with `sgn(0) = 0`.
    #[default]
    Sign,
    /// Boundary layer: linear inside `|x| < width`, sign outside.
    Saturation { width: f64 },
}

impl SwitchingFunction {
    pub fn apply(&self, x: f64) -> f64 {
        match *self {
            SwitchingFunction::Sign => {
                if x > 0.0 {
                    1.0
                } else if x < 0.0 {
                    -1.0
                } else {
                    0.0
                }
            }
            SwitchingFunction::Saturation { width } => (x / width).clamp(-1.0, 1.0),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SmoParams {
    /// Sliding gain (V).
    pub k: f64,
    /// EMF filter time constant (s).
    pub tau0: f64,
    /// Cutoff used for the phase compensation (rad/s), normally `1 / tau0`.
    pub omega_c: f64,
    pub switching: SwitchingFunction,
    /// Standstill threshold on the EMF magnitude (V).
    pub emf_epsilon: f64,
}

impl SmoParams {
    /// Parameters with `omega_c = 1 / tau0`.
    pub fn new(k: f64, tau0: f64) -> Self {
        Self {
            k,
            tau0,
            omega_c: 1.0 / tau0,
            switching: SwitchingFunction::Sign,
            emf_epsilon: DEFAULT_EMF_EPSILON,
        }
    }

    pub fn validate(&self) -> Result<()> {
        ensure(self.k > 0.0, "k", "must be > 0")?;
        ensure(self.tau0 > 0.0, "tau0", "must be > 0")?;
        ensure(self.omega_c > 0.0, "omega_c", "must be > 0")?;
        ensure(self.emf_epsilon >= 0.0, "emf_epsilon", "must be >= 0")?;
        if let SwitchingFunction::Saturation { width } = self.switching {
            ensure(width > 0.0, "boundary_width", "must be > 0")?;
        }
        Ok(())
    }
}

/// Current estimation error `i_hat - i` on both axes.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct CurrentError {
    pub alpha: f64,
    pub beta: f64,
}

impl CurrentError {
    pub fn norm(&self) -> f64 {
        libm::hypot(self.alpha, self.beta)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ObserverState {
    pub i_hat: AlphaBeta,
    /// Filtered back-EMF estimate (V).
    pub e_hat: AlphaBeta,
    /// Estimated electrical angle (rad), in `[-pi, pi)`.
    pub theta_hat: f64,
    /// Estimated electrical speed (rad/s), signed.
    pub omega_e_hat: f64,
}

/// Estimated current derivative. Cross terms vanish for `Ld = Lq`.
pub fn observer_derivatives(
    i_hat: AlphaBeta,
    u_ab: AlphaBeta,
    v_ab: AlphaBeta,
    omega_e_hat: f64,
    p: &MotorParams,
) -> AlphaBeta {
    let cross = (p.ld - p.lq) * omega_e_hat;
    AlphaBeta::new(
        (-p.resistance * i_hat.alpha - cross * i_hat.beta + u_ab.alpha - v_ab.alpha) / p.ld,
        (cross * i_hat.alpha - p.resistance * i_hat.beta + u_ab.beta - v_ab.beta) / p.ld,
    )
}

/// Switching injection `k * f(err)` per axis.
pub fn sliding_control(err: CurrentError, s: &SmoParams) -> AlphaBeta {
    AlphaBeta::new(s.k * s.switching.apply(err.alpha), s.k * s.switching.apply(err.beta))
}

/// One forward-Euler step of the EMF low-pass filter.
pub fn filter_emf(e_hat: AlphaBeta, v_ab: AlphaBeta, s: &SmoParams, dt: f64) -> AlphaBeta {
    let gain = dt / s.tau0;
    AlphaBeta::new(
        e_hat.alpha + gain * (v_ab.alpha - e_hat.alpha),
        e_hat.beta + gain * (v_ab.beta - e_hat.beta),
    )
}

/// Phase lag of the EMF filter at electrical speed `omega_e`, `atan(omega_e / omega_c)`.
pub fn phase_compensation(omega_e: f64, s: &SmoParams) -> f64 {
    libm::atan(omega_e / s.omega_c)
}

/// Rotor angle from the filtered EMF vector plus filter-lag compensation.
///
/// Returns `None` when the EMF is too small to carry position information.
/// `omega_e_hat` is signed; for reverse rotation the EMF vector points the
/// opposite way, so half a turn is added.
pub fn extract_position(obs: &ObserverState, s: &SmoParams) -> Option<f64> {
    let e = obs.e_hat;
    if e.norm() < s.emf_epsilon {
        return None;
    }
    let mut theta = libm::atan2(-e.alpha, e.beta) + phase_compensation(obs.omega_e_hat, s);
    if obs.omega_e_hat < 0.0 {
        theta += PI;
    }
    Some(wrap_angle(theta))
}

/// Unsigned speed magnitude `|e_hat| / psi_f`.
pub fn extract_speed(obs: &ObserverState, p: &MotorParams) -> f64 {
    obs.e_hat.norm() / p.flux_linkage
}

/// Full observer with its state and auxiliary memory.
#[derive(Debug, Clone)]
pub struct SlidingModeObserver {
    params: SmoParams,
    state: ObserverState,
    valid: bool,
    /// Low-passed angular rate of the EMF vector (rad/s).
    rotation_rate: f64,
    /// Smoothed EMF vector used only for the direction estimate.
    smoothed_emf: Option<AlphaBeta>,
    direction: f64,
    last_error: CurrentError,
    last_injection: AlphaBeta,
}

impl SlidingModeObserver {
    pub fn new(params: SmoParams) -> Result<Self> {
        params.validate()?;
        Ok(Self {
            params,
            state: ObserverState::default(),
            valid: false,
            rotation_rate: 0.0,
            smoothed_emf: None,
            direction: 1.0,
            last_error: CurrentError::default(),
            last_injection: AlphaBeta::ZERO,
        })
    }

    /// Start from a known angle, e.g. the rotor's initial alignment.
    pub fn with_initial_angle(mut self, theta_e: f64) -> Self {
        self.state.theta_hat = wrap_angle(theta_e);
        self
    }

    pub fn params(&self) -> &SmoParams {
        &self.params
    }

    pub fn state(&self) -> &ObserverState {
        &self.state
    }

    /// Whether the last angle came from a usable EMF (not held at standstill).
    pub fn is_valid(&self) -> bool {
        self.valid
    }

    /// Current error at the start of the last update.
    pub fn last_error(&self) -> CurrentError {
        self.last_error
    }

    pub fn last_injection(&self) -> AlphaBeta {
        self.last_injection
    }

    /// Advance one step of length `dt`, given measured stator currents and the
    /// applied stationary-frame voltage held over the step.
    pub fn update(&mut self, i_meas: AlphaBeta, u_ab: AlphaBeta, p: &MotorParams, dt: f64) -> Result<()> {
        let err = CurrentError {
            alpha: self.state.i_hat.alpha - i_meas.alpha,
            beta: self.state.i_hat.beta - i_meas.beta,
        };
        let v = sliding_control(err, &self.params);
        let omega_prev = self.state.omega_e_hat;

        let y = [self.state.i_hat.alpha, self.state.i_hat.beta];
        let next = rk3_step(&y, dt, |y| {
            let d = observer_derivatives(AlphaBeta::new(y[0], y[1]), u_ab, v, omega_prev, p);
            [d.alpha, d.beta]
        })?;
        self.state.i_hat = AlphaBeta::new(next[0], next[1]);

        let e_hat = filter_emf(self.state.e_hat, v, &self.params, dt);
        self.state.e_hat = e_hat;
        let magnitude = extract_speed(&self.state, p);
        self.update_direction(magnitude, dt);
        self.state.omega_e_hat = self.direction * magnitude;
        match extract_position(&self.state, &self.params) {
            Some(theta) => {
                self.state.theta_hat = theta;
                self.valid = true;
            }
            None => self.valid = false,
        }
        self.last_error = err;
        self.last_injection = v;
        Ok(())
    }

    /// Track the rotation direction from the angular rate of the EMF vector.
    ///
    /// The EMF vector turns in the direction of rotation whatever the sign of
    /// the speed, so the sign of its angular rate is what the magnitude
    /// formula lacks. The sliding injection makes the filtered EMF chatter
    /// from step to step, so the vector is smoothed again and its rate is
    /// low-passed before the sign is trusted.
    fn update_direction(&mut self, magnitude: f64, dt: f64) {
        let e = self.state.e_hat;
        if e.norm() < self.params.emf_epsilon {
            self.smoothed_emf = None;
            self.rotation_rate = 0.0;
            return;
        }
        let Some(prev) = self.smoothed_emf else {
            self.smoothed_emf = Some(e);
            return;
        };
        let smoothed = prev + (e - prev) * (dt / DIRECTION_SMOOTHING_TAU).min(1.0);
        let norm_sq = smoothed.alpha * smoothed.alpha + smoothed.beta * smoothed.beta;
        let cross = prev.alpha * smoothed.beta - prev.beta * smoothed.alpha;
        let rate = cross / (norm_sq * dt);
        self.rotation_rate += (dt / DIRECTION_RATE_TAU).min(1.0) * (rate - self.rotation_rate);
        if self.rotation_rate * self.direction < -DIRECTION_HYSTERESIS * magnitude {
            self.direction = -self.direction;
        }
        self.smoothed_emf = Some(smoothed);
    }

    /// Rotation direction currently assumed, `+1` or `-1`.
    pub fn direction(&self) -> f64 {
        self.direction
    }
}
