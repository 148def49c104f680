//! Fixed-step closed-loop simulation.
//!
//! Each step: apply due schedule events, run the controller cascade (when a
//! controller tick is due), record, then advance the plant and the observer
//! over `dt` with the stationary-frame voltage held constant.

use alloc::vec::Vec;
use core::f64::consts::PI;

use crate::control::{self, CurrentLoopDesign, PiState, SpeedLoopDesign};
use crate::error::{ensure, Error, Result};
use crate::frames::{inverse_park, park, wrap_angle, AlphaBeta, DqPair};
use crate::observer::{SlidingModeObserver, SmoParams};
use crate::ode::rk3_step;
use crate::plant::{LoadInput, MotorParams, PlantState};

/// Convert r/min to rad/s.
pub fn rpm_to_rad_s(rpm: f64) -> f64 {
    rpm * PI / 30.0
}

/// Convert rad/s to r/min.
pub fn rad_s_to_rpm(omega: f64) -> f64 {
    omega * 30.0 / PI
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimConfig {
    /// Integration step (s).
    pub dt: f64,
    /// Horizon (s).
    pub t_end: f64,
    /// Controller and observer feedback update interval (s); a multiple of `dt`.
    pub controller_dt: f64,
    /// Keep one record every `log_every` steps.
    pub log_every: usize,
    /// Reserved for measurement-noise studies; the default pipeline ignores it.
    pub seed: Option<u64>,
}

impl SimConfig {
    pub fn new(dt: f64, t_end: f64) -> Self {
        Self {
            dt,
            t_end,
            controller_dt: dt,
            log_every: 1,
            seed: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        ensure(self.dt > 0.0 && self.dt.is_finite(), "dt", "must be > 0")?;
        ensure(self.t_end >= 0.0 && self.t_end.is_finite(), "t_end", "must be >= 0")?;
        ensure(self.controller_dt >= self.dt, "controller_dt", "must be >= dt")?;
        ensure(
            self.t_end == 0.0 || self.controller_dt <= self.t_end,
            "controller_dt",
            "must be <= t_end",
        )?;
        let ratio = self.controller_dt / self.dt;
        ensure(
            (ratio - libm::round(ratio)).abs() < 1e-6,
            "controller_dt",
            "must be an integer multiple of dt",
        )?;
        ensure(self.log_every >= 1, "log_every", "must be >= 1")?;
        Ok(())
    }

    /// Number of integration steps, `floor(t_end / dt)`.
    pub fn steps(&self) -> usize {
        libm::floor(self.t_end / self.dt + 1e-9) as usize
    }

    fn controller_ratio(&self) -> usize {
        libm::round(self.controller_dt / self.dt) as usize
    }
}

/// Where the controller takes its angle and speed feedback from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ControllerVariant {
    /// Angle and speed from the sliding-mode observer.
    #[default]
    SmoSensorless,
    /// Angle and speed from the true rotor state (ideal encoder).
    PiSensored,
    /// No speed loop. A constant current vector is placed on the q axis of a
    /// reference frame that rotates at the commanded speed; the rotor
    /// synchronises to it. The sensor only supplies the starting angle of that
    /// frame, so the current initially lies on the rotor q axis.
    OpenLoop,
}

/// A timed change of a scalar input.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScheduleEntry {
    pub time: f64,
    pub value: f64,
}

impl ScheduleEntry {
    pub const fn new(time: f64, value: f64) -> Self {
        Self { time, value }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Scenario {
    /// Speed setpoints in r/min.
    pub speed_schedule: Vec<ScheduleEntry>,
    /// Load torque in N m.
    pub load_schedule: Vec<ScheduleEntry>,
    pub variant: ControllerVariant,
    pub initial_state: PlantState,
}

impl Scenario {
    pub fn validate(&self, t_end: f64) -> Result<()> {
        for schedule in [&self.speed_schedule, &self.load_schedule] {
            if schedule.windows(2).any(|w| w[1].time < w[0].time) {
                return Err(Error::InvalidSchedule("entries must be sorted by time"));
            }
            if schedule.iter().any(|e| !(0.0..=t_end).contains(&e.time)) {
                return Err(Error::InvalidSchedule("entry time outside [0, t_end]"));
            }
            if schedule.iter().any(|e| !e.value.is_finite()) {
                return Err(Error::InvalidSchedule("entry value must be finite"));
            }
        }
        if !self.initial_state.is_finite() {
            return Err(Error::InvalidParameter {
                name: "initial_state",
                reason: "must be finite",
            });
        }
        Ok(())
    }
}

/// Everything the controller cascade needs besides the motor parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ControlSettings {
    pub speed: SpeedLoopDesign,
    pub current: CurrentLoopDesign,
    /// q-axis current reference limit (A).
    pub iq_max: f64,
    /// Current amplitude (A) used by the open-loop variant.
    pub open_loop_current: f64,
}

impl ControlSettings {
    pub fn validate(&self) -> Result<()> {
        ensure(self.iq_max > 0.0, "iq_max", "must be > 0")?;
        ensure(self.open_loop_current > 0.0, "open_loop_current", "must be > 0")?;
        ensure(self.speed.kp >= 0.0 && self.speed.ki >= 0.0, "speed gains", "must be >= 0")?;
        ensure(self.speed.xi_a >= 0.0, "xi_a", "must be >= 0")?;
        let c = &self.current;
        ensure(
            c.kp_d > 0.0 && c.ki_d > 0.0 && c.kp_q > 0.0 && c.ki_q > 0.0,
            "current gains",
            "must be > 0",
        )?;
        Ok(())
    }
}

/// One logged sample.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Record {
    pub t: f64,
    pub i_d: f64,
    pub i_q: f64,
    pub omega_m: f64,
    pub theta_e: f64,
    pub u_d_ref: f64,
    pub u_q_ref: f64,
    pub theta_hat: f64,
    pub omega_e_hat: f64,
    pub e_alpha_hat: f64,
    pub e_beta_hat: f64,
    pub omega_m_ref: f64,
    pub i_q_ref: f64,
    pub load_torque: f64,
}

impl Record {
    pub const COLUMNS: [&'static str; 14] = [
        "t",
        "i_d",
        "i_q",
        "omega_m",
        "theta_e",
        "u_d_ref",
        "u_q_ref",
        "theta_hat",
        "omega_e_hat",
        "e_alpha_hat",
        "e_beta_hat",
        "omega_m_ref",
        "i_q_ref",
        "load_torque",
    ];

    /// Values in [`Record::COLUMNS`] order.
    pub fn values(&self) -> [f64; 14] {
        [
            self.t,
            self.i_d,
            self.i_q,
            self.omega_m,
            self.theta_e,
            self.u_d_ref,
            self.u_q_ref,
            self.theta_hat,
            self.omega_e_hat,
            self.e_alpha_hat,
            self.e_beta_hat,
            self.omega_m_ref,
            self.i_q_ref,
            self.load_torque,
        ]
    }

    pub fn from_values(v: [f64; 14]) -> Self {
        Self {
            t: v[0],
            i_d: v[1],
            i_q: v[2],
            omega_m: v[3],
            theta_e: v[4],
            u_d_ref: v[5],
            u_q_ref: v[6],
            theta_hat: v[7],
            omega_e_hat: v[8],
            e_alpha_hat: v[9],
            e_beta_hat: v[10],
            omega_m_ref: v[11],
            i_q_ref: v[12],
            load_torque: v[13],
        }
    }
}

/// Time series produced by a run.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct RunLog {
    pub pole_pairs: u32,
    pub records: Vec<Record>,
}

impl RunLog {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Time of the last record, or 0 for an empty log.
    pub fn horizon(&self) -> f64 {
        self.records.last().map_or(0.0, |r| r.t)
    }

    /// Keep every `factor`-th record.
    pub fn decimate(&self, factor: usize) -> RunLog {
        RunLog {
            pole_pairs: self.pole_pairs,
            records: self.records.iter().step_by(factor.max(1)).copied().collect(),
        }
    }
}

/// Closed-loop simulation state. Use [`run`] for a complete run or drive it
/// step by step with [`Simulation::step`].
#[derive(Debug, Clone)]
pub struct Simulation {
    motor: MotorParams,
    control: ControlSettings,
    sim: SimConfig,
    variant: ControllerVariant,
    speed_schedule: Vec<ScheduleEntry>,
    load_schedule: Vec<ScheduleEntry>,
    next_speed: usize,
    next_load: usize,

    step_index: usize,
    plant: PlantState,
    observer: Option<SlidingModeObserver>,
    speed_pi: PiState,
    d_pi: PiState,
    q_pi: PiState,

    omega_m_ref: f64,
    load: LoadInput,
    i_q_ref: f64,
    u_dq_ref: DqPair,
    u_ab: AlphaBeta,
    /// Rotating reference angle of the open-loop variant.
    theta_ref: f64,
}

impl Simulation {
    pub fn new(
        scenario: &Scenario,
        sim: SimConfig,
        motor: MotorParams,
        control: ControlSettings,
        smo: SmoParams,
    ) -> Result<Self> {
        motor.validate()?;
        sim.validate()?;
        control.validate()?;
        scenario.validate(sim.t_end)?;
        let plant = PlantState {
            theta_e: wrap_angle(scenario.initial_state.theta_e),
            ..scenario.initial_state
        };
        let observer = SlidingModeObserver::new(smo)?.with_initial_angle(plant.theta_e);
        Ok(Self {
            motor,
            control,
            sim,
            variant: scenario.variant,
            speed_schedule: scenario.speed_schedule.clone(),
            load_schedule: scenario.load_schedule.clone(),
            next_speed: 0,
            next_load: 0,
            step_index: 0,
            plant,
            observer: Some(observer),
            speed_pi: PiState::new(control.iq_max),
            d_pi: PiState::new(motor.u_max),
            q_pi: PiState::new(motor.u_max),
            omega_m_ref: 0.0,
            load: LoadInput::default(),
            i_q_ref: 0.0,
            u_dq_ref: DqPair::ZERO,
            u_ab: AlphaBeta::ZERO,
            theta_ref: plant.theta_e,
        })
    }

    /// Drop the observer. Only allowed when the controller does not use it.
    pub fn without_observer(mut self) -> Result<Self> {
        if self.variant == ControllerVariant::SmoSensorless {
            return Err(Error::InvalidParameter {
                name: "observer",
                reason: "sensorless control needs the observer",
            });
        }
        self.observer = None;
        Ok(self)
    }

    pub fn time(&self) -> f64 {
        self.step_index as f64 * self.sim.dt
    }

    pub fn plant(&self) -> &PlantState {
        &self.plant
    }

    pub fn observer(&self) -> Option<&SlidingModeObserver> {
        self.observer.as_ref()
    }

    pub fn speed_pi(&self) -> &PiState {
        &self.speed_pi
    }

    pub fn is_finished(&self) -> bool {
        self.step_index >= self.sim.steps()
    }

    /// Stationary-frame voltage applied over the most recent step.
    pub fn applied_voltage(&self) -> AlphaBeta {
        self.u_ab
    }

    /// Stator currents as seen by the phase-current sensors.
    pub fn measured_currents(&self) -> AlphaBeta {
        inverse_park(self.plant.currents(), self.plant.theta_e)
    }

    fn apply_events(&mut self) {
        // events are considered due at the first step whose time reaches them
        let t = self.time() + 1e-9 * self.sim.dt;
        while let Some(e) = self.speed_schedule.get(self.next_speed).filter(|e| e.time <= t) {
            self.omega_m_ref = rpm_to_rad_s(e.value);
            self.next_speed += 1;
        }
        while let Some(e) = self.load_schedule.get(self.next_load).filter(|e| e.time <= t) {
            self.load = LoadInput { torque: e.value };
            self.next_load += 1;
        }
    }

    /// Angle and mechanical speed used by the controller.
    fn feedback(&self) -> (f64, f64) {
        match self.variant {
            ControllerVariant::PiSensored => (self.plant.theta_e, self.plant.omega_m),
            ControllerVariant::SmoSensorless => {
                let obs = self.observer.as_ref().expect("sensorless run always has an observer");
                let s = obs.state();
                (s.theta_hat, s.omega_e_hat / self.motor.pn())
            }
            ControllerVariant::OpenLoop => (self.theta_ref, self.omega_m_ref),
        }
    }

    fn run_controller(&mut self) {
        let ctrl_dt = self.sim.controller_dt;
        let (theta_fb, omega_fb) = self.feedback();
        self.i_q_ref = match self.variant {
            ControllerVariant::OpenLoop => self.control.open_loop_current,
            _ => control::speed_step(self.omega_m_ref, omega_fb, &self.control.speed, &mut self.speed_pi, ctrl_dt),
        };
        let meas = park(self.measured_currents(), theta_fb);
        let omega_e_fb = self.motor.pn() * omega_fb;
        let u = control::current_step(
            DqPair::new(0.0, self.i_q_ref),
            meas,
            omega_e_fb,
            &self.control.current,
            &mut self.d_pi,
            &mut self.q_pi,
            &self.motor,
            ctrl_dt,
        );
        self.u_dq_ref = control::limit_voltage(u, self.motor.u_max);
        self.u_ab = inverse_park(self.u_dq_ref, theta_fb);
    }

    fn record(&self) -> Record {
        let (theta_hat, omega_e_hat, e_hat) = match &self.observer {
            Some(obs) => {
                let s = obs.state();
                (s.theta_hat, s.omega_e_hat, s.e_hat)
            }
            None => (0.0, 0.0, AlphaBeta::ZERO),
        };
        Record {
            t: self.time(),
            i_d: self.plant.i_d,
            i_q: self.plant.i_q,
            omega_m: self.plant.omega_m,
            theta_e: self.plant.theta_e,
            u_d_ref: self.u_dq_ref.d,
            u_q_ref: self.u_dq_ref.q,
            theta_hat,
            omega_e_hat,
            e_alpha_hat: e_hat.alpha,
            e_beta_hat: e_hat.beta,
            omega_m_ref: self.omega_m_ref,
            i_q_ref: self.i_q_ref,
            load_torque: self.load.torque,
        }
    }

    /// Apply events and controller for the current time, then return the
    /// record describing it.
    fn prepare(&mut self) -> Record {
        self.apply_events();
        if self.step_index.is_multiple_of(self.sim.controller_ratio()) {
            self.run_controller();
        }
        self.record()
    }

    fn advance(&mut self) -> Result<()> {
        let dt = self.sim.dt;
        let t = self.time();
        let fault = |e: Error| match e {
            Error::NonFinite { .. } => Error::NonFinite { time: t },
            other => other,
        };
        let i_meas = self.measured_currents();

        let motor = self.motor;
        let u_ab = self.u_ab;
        let load = self.load;
        let y = self.plant.to_array();
        let next = rk3_step(&y, dt, |y| {
            let s = PlantState { i_d: y[0], i_q: y[1], omega_m: y[2], theta_e: y[3] };
            let d = s.derivative(park(u_ab, s.theta_e), load, &motor);
            [d.di_d, d.di_q, d.domega_m, d.dtheta_e]
        })
        .map_err(fault)?;
        self.plant = PlantState::from_array(next);

        if self.variant == ControllerVariant::OpenLoop {
            self.theta_ref = wrap_angle(self.theta_ref + motor.pn() * self.omega_m_ref * dt);
        }
        if let Some(obs) = self.observer.as_mut() {
            obs.update(i_meas, u_ab, &motor, dt).map_err(fault)?;
        }
        self.step_index += 1;
        if !self.plant.is_finite() {
            return Err(Error::NonFinite { time: self.time() });
        }
        Ok(())
    }

    /// Execute one integration step and return the record for the step's
    /// start time.
    pub fn step(&mut self) -> Result<Record> {
        let rec = self.prepare();
        self.advance()?;
        Ok(rec)
    }

    /// Run to the horizon, logging every `log_every`-th step plus the
    /// initial sample.
    pub fn run_to_end(mut self) -> Result<RunLog> {
        let n = self.sim.steps();
        let every = self.sim.log_every;
        let mut records = Vec::with_capacity(n / every + 1);
        loop {
            let rec = self.prepare();
            if self.step_index.is_multiple_of(every) {
                records.push(rec);
            }
            if self.step_index >= n {
                break;
            }
            self.advance()?;
        }
        Ok(RunLog {
            pole_pairs: self.motor.pole_pairs,
            records,
        })
    }
}

/// Simulate `scenario` to `sim.t_end`.
pub fn run(
    scenario: &Scenario,
    sim: SimConfig,
    motor: MotorParams,
    control: ControlSettings,
    smo: SmoParams,
) -> Result<RunLog> {
    Simulation::new(scenario, sim, motor, control, smo)?.run_to_end()
}
