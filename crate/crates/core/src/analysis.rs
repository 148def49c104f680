//! Step-response and tracking metrics over [`RunLog`]s.
//!
//! Speeds are reported in r/min, angles in electrical degrees.

use alloc::string::String;
use alloc::vec::Vec;
use core::f64::consts::PI;

use crate::engine::{rad_s_to_rpm, Record, RunLog, Scenario};
use crate::error::{Error, Result};
use crate::frames::wrap_angle;

/// Half-width of the settling band as a fraction of the step magnitude.
pub const SETTLING_BAND: f64 = 0.05;

/// Minimum post-step data needed by [`step_metrics`] (s).
pub const MIN_POST_STEP: f64 = 0.02;

/// Angle error (electrical degrees) below which the observer counts as converged.
pub const CONVERGED_ANGLE_DEG: f64 = 3.0;

/// Fraction of the window, at its end, used for steady-state statistics.
const STEADY_STATE_FRACTION: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepMetrics {
    /// Initial speed at the step (r/min).
    pub initial_rpm: f64,
    pub setpoint_rpm: f64,
    /// Peak excursion beyond the setpoint, percent of the step magnitude.
    pub overshoot_pct: f64,
    /// Time from the step until the speed stays inside the band, `None` if
    /// it is still outside at the end of the window.
    pub settling_time_s: Option<f64>,
    /// Absolute time at which the speed entered the band for good.
    pub settled_at_s: Option<f64>,
    /// Mean absolute error over the last 10% of the window (r/min).
    pub steady_state_error: f64,
}

impl StepMetrics {
    pub fn is_settled(&self) -> bool {
        self.settling_time_s.is_some()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrackingMetrics {
    /// Largest `|wrap(theta_hat - theta_e)|` outside the excluded windows.
    pub max_angle_error_deg: f64,
    /// Mean relative error of the estimated electrical speed (percent).
    pub mean_speed_error_pct: f64,
    /// Time after which the angle error stays below [`CONVERGED_ANGLE_DEG`].
    pub convergence_time_s: f64,
}

/// Angle estimation error of one record, in `[0, pi]`.
pub fn angle_error(r: &Record) -> f64 {
    let e = wrap_angle(r.theta_hat - r.theta_e).abs();
    // wrap_angle returns -pi for +pi
    e.min(PI)
}

fn rpm(r: &Record) -> f64 {
    rad_s_to_rpm(r.omega_m)
}

/// Last record strictly before `t`, or the first record.
fn value_before(log: &RunLog, t: f64) -> Option<&Record> {
    log.records.iter().take_while(|r| r.t < t).last().or(log.records.first())
}

/// Step metrics for a setpoint change at `step_time`, using the log to its end.
pub fn step_metrics(log: &RunLog, step_time: f64, setpoint_rpm: f64) -> Result<StepMetrics> {
    step_metrics_until(log, step_time, log.horizon(), setpoint_rpm)
}

/// Step metrics restricted to `[step_time, end_time]`, for logs with several
/// consecutive steps.
pub fn step_metrics_until(log: &RunLog, step_time: f64, end_time: f64, setpoint_rpm: f64) -> Result<StepMetrics> {
    if end_time - step_time < MIN_POST_STEP - 1e-12 || log.horizon() < end_time - 1e-12 {
        return Err(Error::InsufficientData("need at least 20 ms of log after the step"));
    }
    let initial_rpm = value_before(log, step_time).map(rpm).ok_or(Error::InsufficientData("empty log"))?;
    let magnitude = setpoint_rpm - initial_rpm;
    if magnitude.abs() < 1e-9 {
        return Err(Error::InsufficientData("step magnitude is zero"));
    }
    let direction = magnitude.signum();
    let band = SETTLING_BAND * magnitude.abs();

    let window: Vec<&Record> = log
        .records
        .iter()
        .filter(|r| r.t >= step_time && r.t <= end_time)
        .collect();

    let peak = window
        .iter()
        .map(|r| (rpm(r) - setpoint_rpm) * direction)
        .fold(f64::NEG_INFINITY, f64::max);
    let overshoot_pct = (peak / magnitude.abs() * 100.0).max(0.0);

    let last_outside = window.iter().rposition(|r| (rpm(r) - setpoint_rpm).abs() > band);
    let settled_at_s = match last_outside {
        None => Some(step_time),
        Some(i) if i + 1 < window.len() => Some(window[i + 1].t),
        Some(_) => None,
    };

    let tail_start = end_time - STEADY_STATE_FRACTION * (end_time - step_time);
    let tail: Vec<f64> = window
        .iter()
        .filter(|r| r.t >= tail_start)
        .map(|r| (rpm(r) - setpoint_rpm).abs())
        .collect();
    let steady_state_error = tail.iter().sum::<f64>() / tail.len().max(1) as f64;

    Ok(StepMetrics {
        initial_rpm,
        setpoint_rpm,
        overshoot_pct,
        settling_time_s: settled_at_s.map(|t| t - step_time),
        settled_at_s,
        steady_state_error,
    })
}

/// Tracking metrics excluding the first `convergence_window` seconds.
pub fn tracking_metrics(log: &RunLog, convergence_window: f64) -> TrackingMetrics {
    let start = log.records.first().map_or(0.0, |r| r.t);
    tracking_metrics_excluding(log, &[(start, start + convergence_window)])
}

/// Tracking metrics over every record not inside one of the `excluded`
/// `[start, end)` windows.
pub fn tracking_metrics_excluding(log: &RunLog, excluded: &[(f64, f64)]) -> TrackingMetrics {
    let pn = f64::from(log.pole_pairs.max(1));
    let included = |r: &&Record| !excluded.iter().any(|&(a, b)| r.t >= a && r.t < b);

    let max_angle_error = log
        .records
        .iter()
        .filter(included)
        .map(angle_error)
        .fold(0.0, f64::max);

    let speed_errors: Vec<f64> = log
        .records
        .iter()
        .filter(included)
        .filter(|r| r.omega_m.abs() > 1.0)
        .map(|r| {
            let omega_e = pn * r.omega_m;
            ((r.omega_e_hat - omega_e) / omega_e).abs() * 100.0
        })
        .collect();
    let mean_speed_error_pct = if speed_errors.is_empty() {
        0.0
    } else {
        speed_errors.iter().sum::<f64>() / speed_errors.len() as f64
    };

    let threshold = CONVERGED_ANGLE_DEG.to_radians();
    let convergence_time_s = match log.records.iter().rposition(|r| angle_error(r) > threshold) {
        None => log.records.first().map_or(0.0, |r| r.t),
        Some(i) => log.records.get(i + 1).map_or(log.horizon(), |r| r.t),
    };

    TrackingMetrics {
        max_angle_error_deg: max_angle_error.to_degrees(),
        mean_speed_error_pct,
        convergence_time_s,
    }
}

/// Standard deviation of speed over the last 10% of the log, as a percent of
/// `setpoint_rpm`.
pub fn ripple_pct(log: &RunLog, setpoint_rpm: f64) -> f64 {
    let horizon = log.horizon();
    let start = log.records.first().map_or(0.0, |r| r.t);
    let tail_start = horizon - STEADY_STATE_FRACTION * (horizon - start);
    let tail: Vec<f64> = log.records.iter().filter(|r| r.t >= tail_start).map(rpm).collect();
    if tail.len() < 2 {
        return 0.0;
    }
    let mean = tail.iter().sum::<f64>() / tail.len() as f64;
    let var = tail.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / tail.len() as f64;
    libm::sqrt(var) / setpoint_rpm.abs() * 100.0
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub label: String,
    pub metrics: StepMetrics,
    pub ripple_pct: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Report {
    pub step_time: f64,
    pub rows: Vec<ReportRow>,
}

/// Step metrics and ripple for several runs of the same horizon. The setpoint
/// of each run is read from its final logged speed reference.
pub fn compare_report(logs: &[(&str, &RunLog)], step_time: f64) -> Result<Report> {
    if logs.len() < 2 {
        return Err(Error::InsufficientData("need at least two logs to compare"));
    }
    let horizon = logs[0].1.horizon();
    let len = logs[0].1.len();
    if logs.iter().any(|(_, l)| l.len() != len || (l.horizon() - horizon).abs() > 1e-12) {
        return Err(Error::LengthMismatch);
    }
    let rows = logs
        .iter()
        .map(|(label, log)| {
            let setpoint = log
                .records
                .last()
                .map(|r| rad_s_to_rpm(r.omega_m_ref))
                .ok_or(Error::InsufficientData("empty log"))?;
            Ok(ReportRow {
                label: String::from(*label),
                metrics: step_metrics(log, step_time, setpoint)?,
                ripple_pct: ripple_pct(log, setpoint),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Report { step_time, rows })
}

/// Metrics of one speed-schedule entry, measured up to the next entry.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpeedStepSummary {
    pub time: f64,
    pub end_time: f64,
    pub setpoint_rpm: f64,
    /// `None` when the window is shorter than [`MIN_POST_STEP`] or the
    /// entry does not change the speed.
    pub metrics: Option<StepMetrics>,
}

/// Speed disturbance and recovery after a load change.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LoadEventSummary {
    pub time: f64,
    pub torque: f64,
    pub setpoint_rpm: f64,
    /// Largest deviation from the setpoint after the event, percent of setpoint.
    pub max_deviation_pct: f64,
    /// Time at which the speed re-entered the ±5% band for good.
    pub recovered_at_s: Option<f64>,
}

impl LoadEventSummary {
    pub fn recovered(&self) -> bool {
        self.recovered_at_s.is_some()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioSummary {
    pub steps: Vec<SpeedStepSummary>,
    pub loads: Vec<LoadEventSummary>,
    /// Tracking excluding `event_window` seconds after every event.
    pub tracking: TrackingMetrics,
}

/// Per-event metrics for a log produced from `scenario`.
pub fn scenario_summary(log: &RunLog, scenario: &Scenario, event_window: f64) -> ScenarioSummary {
    let horizon = log.horizon();
    let speed = &scenario.speed_schedule;
    let steps = speed
        .iter()
        .enumerate()
        .map(|(i, e)| {
            let end_time = speed.get(i + 1).map_or(horizon, |n| n.time).min(horizon);
            SpeedStepSummary {
                time: e.time,
                end_time,
                setpoint_rpm: e.value,
                metrics: step_metrics_until(log, e.time, end_time, e.value).ok(),
            }
        })
        .collect();

    let loads = scenario
        .load_schedule
        .iter()
        .map(|e| {
            let after: Vec<&Record> = log.records.iter().filter(|r| r.t >= e.time).collect();
            let setpoint_rpm = after.first().map_or(0.0, |r| rad_s_to_rpm(r.omega_m_ref));
            let band = SETTLING_BAND * setpoint_rpm.abs();
            let max_dev = after.iter().map(|r| (rpm(r) - setpoint_rpm).abs()).fold(0.0, f64::max);
            let recovered_at_s = match after.iter().rposition(|r| (rpm(r) - setpoint_rpm).abs() > band) {
                None => Some(e.time),
                Some(i) if i + 1 < after.len() => Some(after[i + 1].t),
                Some(_) => None,
            };
            LoadEventSummary {
                time: e.time,
                torque: e.value,
                setpoint_rpm,
                max_deviation_pct: if setpoint_rpm == 0.0 { 0.0 } else { max_dev / setpoint_rpm.abs() * 100.0 },
                recovered_at_s,
            }
        })
        .collect();

    let windows: Vec<(f64, f64)> = speed
        .iter()
        .chain(&scenario.load_schedule)
        .map(|e| (e.time, e.time + event_window))
        .collect();

    ScenarioSummary {
        steps,
        loads,
        tracking: tracking_metrics_excluding(log, &windows),
    }
}
