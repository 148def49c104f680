mod common;

use std::f64::consts::PI;

use common::{control, motor};
use pmsm_smo::control::{
    current_step, design_current_loop, design_speed_loop, speed_step, Decoupling, DecouplingSign, PiState,
};
use pmsm_smo::engine::{rpm_to_rad_s, run, ControllerVariant, Scenario, ScheduleEntry, SimConfig, Simulation};
use pmsm_smo::frames::{clarke, inverse_clarke, inverse_park, park, wrap_angle, AbcTriple, AlphaBeta, DqPair};
use pmsm_smo::observer::{phase_compensation, SlidingModeObserver, SmoParams};
use pmsm_smo::ode::rk3_step;
use pmsm_smo::plant::{backemf_alphabeta, torque, LoadInput, MotorParams, PlantState};
use proptest::prelude::*;

fn smo() -> SmoParams {
    SmoParams::new(145.0, 1.0 / 30000.0)
}

proptest! {
    #[test]
    fn park_round_trip(d in -100.0..100.0f64, q in -100.0..100.0f64, theta in -10.0..10.0f64) {
        let x = DqPair::new(d, q);
        let back = park(inverse_park(x, theta), theta);
        prop_assert!((back.d - d).abs() < 1e-12 && (back.q - q).abs() < 1e-12);
        prop_assert!((inverse_park(x, theta).norm() - x.norm()).abs() < 1e-12);
    }

    #[test]
    fn clarke_round_trip(a in -100.0..100.0f64, b in -100.0..100.0f64) {
        let x = AlphaBeta::new(a, b);
        let back = clarke(inverse_clarke(x));
        prop_assert!((back.alpha - a).abs() < 1e-12 && (back.beta - b).abs() < 1e-12);
        prop_assert!((park(x, b).norm() - x.norm()).abs() < 1e-12);
    }

    #[test]
    fn balanced_sinusoid_keeps_amplitude(amp in 0.0..50.0f64, phi in -PI..PI) {
        let abc = AbcTriple::new(
            amp * phi.cos(),
            amp * (phi - 2.0 * PI / 3.0).cos(),
            amp * (phi + 2.0 * PI / 3.0).cos(),
        );
        prop_assert!((clarke(abc).norm() - amp).abs() < 1e-12);
    }

    #[test]
    fn wrapped_angle_is_half_open(theta in -1e3..1e3f64) {
        let w = wrap_angle(theta);
        prop_assert!((-PI..PI).contains(&w));
        let turns = (theta - w) / (2.0 * PI);
        prop_assert!((turns - turns.round()).abs() < 1e-9);
    }

    #[test]
    fn backemf_norm_identity(omega in -500.0..500.0f64, theta in -PI..PI, id in -3.0..3.0f64, iq in -3.0..3.0f64) {
        let p = motor();
        let s = PlantState { i_d: id, i_q: iq, omega_m: omega, theta_e: theta };
        let e = backemf_alphabeta(&s, &p).unwrap();
        prop_assert!((e.norm() - (p.pn() * omega).abs() * p.flux_linkage).abs() < 1e-12);
    }

    #[test]
    fn torque_is_linear_in_iq(iq in -5.0..5.0f64) {
        let p = motor();
        let s1 = PlantState { i_q: iq, ..Default::default() };
        let s2 = PlantState { i_q: 2.0 * iq, ..Default::default() };
        prop_assert!((torque(&s2, &p) - 2.0 * torque(&s1, &p)).abs() < 1e-12);
    }

    #[test]
    fn phase_compensation_equals_filter_lag(omega in -5e4..5e4f64) {
        // first-order filter 1 / (tau0 s + 1) evaluated at s = j omega
        let s = smo();
        let (re, im) = (1.0, omega * s.tau0);
        let lag = -(-im).atan2(re);
        prop_assert!((phase_compensation(omega, &s) - lag).abs() < 1e-12);
    }
}

#[test]
fn rk3_is_third_order() {
    let err = |n: usize| {
        let dt = 1.0 / n as f64;
        let mut y = [1.0];
        for _ in 0..n {
            y = rk3_step(&y, dt, |y| [-y[0]]).unwrap();
        }
        (y[0] - (-1.0f64).exp()).abs()
    };
    for n in [10, 20, 40] {
        let ratio = err(n) / err(2 * n);
        assert!((6.0..=10.0).contains(&ratio), "dt = 1/{n}: ratio {ratio}");
    }
}

/// Time at which `y` first reaches `frac` of `target`.
fn rise_time(samples: &[(f64, f64)], target: f64, frac: f64) -> f64 {
    samples.iter().find(|(_, y)| *y >= frac * target).expect("response reaches the target").0
}

#[test]
fn speed_loop_places_the_pole_at_beta() {
    for (beta, damping) in [(500.0, 0.0), (500.0, 5e-6), (2000.0, 0.0)] {
        let p = MotorParams { damping, ..motor() };
        let d = design_speed_loop(&p, beta, true).unwrap();
        let mut pi = PiState::new(1e9);
        let (dt, target) = (1e-7, 1.0);
        let mut omega = 0.0;
        let mut samples = Vec::new();
        for i in 0..(5.0 / beta / dt) as usize {
            samples.push((i as f64 * dt, omega));
            let iq = speed_step(target, omega, &d, &mut pi, dt);
            omega += dt * (p.torque_constant() * iq - p.damping * omega) / p.inertia;
        }
        let t63 = rise_time(&samples, target, 1.0 - (-1.0f64).exp());
        assert!((t63 * beta - 1.0).abs() < 0.05, "beta {beta}, xi {damping}: t63 = {t63}");
    }
}

#[test]
fn current_loop_is_first_order_at_a() {
    let p = motor();
    for (a, omega_m) in [(None, 0.0), (None, 80.0), (Some(1000.0), 80.0)] {
        let mut d = design_current_loop(&p, a, Decoupling::Feedforward).unwrap();
        d.decoupling_sign = DecouplingSign::Cancelling;
        let (mut sd, mut sq) = (PiState::new(1e9), PiState::new(1e9));
        let dt = 1e-8;
        let target = 0.1;
        let mut s = PlantState { omega_m, ..Default::default() };
        let mut samples = Vec::new();
        for i in 0..(5.0 / d.a / dt) as usize {
            samples.push((i as f64 * dt, s.i_q));
            let u = current_step(DqPair::new(0.0, target), s.currents(), s.omega_e(&p), &d, &mut sd, &mut sq, &p, dt);
            // speed held constant: only the electrical states evolve
            let y = rk3_step(&[s.i_d, s.i_q], dt, |y| {
                let st = PlantState { i_d: y[0], i_q: y[1], ..s };
                let der = st.derivative(u, LoadInput::default(), &p);
                [der.di_d, der.di_q]
            })
            .unwrap();
            s.i_d = y[0];
            s.i_q = y[1];
        }
        let t63 = rise_time(&samples, target, 1.0 - (-1.0f64).exp());
        assert!((t63 * d.a - 1.0).abs() < 0.05, "a {}: t63 = {t63}", d.a);
    }
}

#[test]
fn anti_windup_never_grows_the_integral_while_clamped() {
    let mut s = PiState::new(1.0);
    let mut last = 0.0f64;
    for _ in 0..10_000 {
        let out = s.update(0.5, 1000.0, 10.0, 0.0, 1e-4);
        assert_eq!(out, 1.0);
        if s.saturated {
            assert!(s.integral.abs() <= last.abs() + 1e-15 || last == 0.0);
        }
        last = s.integral;
    }
    assert!(s.integral.abs() <= 1.0);
}

#[test]
fn gains_are_pure_functions() {
    let p = motor();
    assert_eq!(design_speed_loop(&p, 500.0, true), design_speed_loop(&p, 500.0, true));
    assert_eq!(
        design_current_loop(&p, Some(1234.5), Decoupling::Feedforward),
        design_current_loop(&p, Some(1234.5), Decoupling::Feedforward)
    );
}

fn unforced_trajectory(omega0: f64, horizon: f64) -> Vec<PlantState> {
    let p = motor();
    let dt = 2e-7;
    let mut s = PlantState { omega_m: omega0, theta_e: 0.3, ..Default::default() };
    let mut out = vec![s];
    for _ in 0..(horizon / dt) as usize {
        let y = rk3_step(&s.to_array(), dt, |y| {
            PlantState::from_array(*y).derivative(DqPair::ZERO, LoadInput::default(), &p).to_array()
        })
        .unwrap();
        s = PlantState::from_array(y);
        out.push(s);
    }
    out
}

#[test]
fn unforced_plant_dissipates_energy() {
    // kinetic plus magnetic energy, with the 3/2 factor of amplitude-invariant quantities
    let p = motor();
    let energy = |s: &PlantState| 0.5 * p.inertia * s.omega_m.powi(2) + 0.75 * (p.ld * s.i_d.powi(2) + p.lq * s.i_q.powi(2));
    let traj = unforced_trajectory(100.0, 0.2);
    for w in traj.windows(2) {
        assert!(energy(&w[1]) <= energy(&w[0]) * (1.0 + 1e-12));
        assert!(w[1].is_finite());
    }
    let last = traj.last().unwrap();
    assert!(energy(last) < 1e-6 * energy(&traj[0]));
}

#[test]
fn kinetic_energy_alone_rings() {
    // The unforced electromechanical mode has damping ratio
    // (R/L) / (2 sqrt(1.5 pn^2 psi_f^2 / (J L))) ~ 0.07, so the speed swings
    // through zero and the kinetic energy rises again after each crossing.
    let traj = unforced_trajectory(100.0, 0.01);
    let kinetic: Vec<f64> = traj.iter().map(|s| s.omega_m.powi(2)).collect();
    assert!(kinetic.windows(2).any(|w| w[1] > w[0]));
    assert!(traj.iter().any(|s| s.omega_m < 0.0));
}

#[test]
fn electrical_angle_advances_with_speed() {
    let p = MotorParams { inertia: 1e9, ..motor() };
    let omega = 50.0;
    let mut s = PlantState { omega_m: omega, ..Default::default() };
    let dt = 1e-5;
    let n = 10_000;
    for _ in 0..n {
        let y = rk3_step(&s.to_array(), dt, |y| PlantState::from_array(*y).derivative(DqPair::ZERO, LoadInput::default(), &p).to_array()).unwrap();
        s = PlantState::from_array(y);
    }
    let expected = wrap_angle(p.pn() * omega * n as f64 * dt);
    assert!(wrap_angle(s.theta_e - expected).abs() < 1e-6, "{} vs {expected}", s.theta_e);
}

struct ObserverTrace {
    /// (time since observer start, current error norm, angle error,
    /// speed estimate, true electrical speed)
    samples: Vec<(f64, f64, f64, f64, f64)>,
}

/// Bring the sensored drive to `rpm` from rest, then start a fresh observer
/// on the live current and voltage signals and trace it for `horizon`.
fn fresh_observer_at(rpm: f64, k: f64, horizon: f64) -> ObserverTrace {
    let p = motor();
    let dt = 2e-7;
    let settle = 0.04;
    let scenario = Scenario {
        speed_schedule: vec![ScheduleEntry::new(0.0, rpm)],
        load_schedule: vec![],
        variant: ControllerVariant::PiSensored,
        initial_state: PlantState::default(),
    };
    let mut sim = Simulation::new(&scenario, SimConfig::new(dt, settle + horizon), p, control(&p), smo()).unwrap();
    while sim.time() < settle {
        sim.step().unwrap();
    }
    let mut params = smo();
    params.k = k;
    let mut obs = SlidingModeObserver::new(params).unwrap();
    let mut samples = Vec::new();
    while !sim.is_finished() {
        let i = sim.measured_currents();
        sim.step().unwrap();
        obs.update(i, sim.applied_voltage(), &p, dt).unwrap();
        let s = obs.state();
        samples.push((
            sim.time() - settle,
            obs.last_error().norm(),
            wrap_angle(s.theta_hat - sim.plant().theta_e).abs(),
            s.omega_e_hat,
            p.pn() * sim.plant().omega_m,
        ));
    }
    ObserverTrace { samples }
}

impl ObserverTrace {
    fn last_time_error_at_least(&self, threshold: f64) -> f64 {
        self.samples.iter().filter(|s| s.1 >= threshold).map(|s| s.0).fold(0.0, f64::max)
    }

    fn after(&self, t: f64) -> impl Iterator<Item = &(f64, f64, f64, f64, f64)> {
        self.samples.iter().filter(move |s| s.0 >= t)
    }
}

#[test]
fn observer_converges_within_ten_ms() {
    for rpm in [600.0, 800.0, 900.0] {
        let trace = fresh_observer_at(rpm, 145.0, 0.03);
        let last = trace.last_time_error_at_least(0.05);
        assert!(last < 0.01, "{rpm} r/min: error above 0.05 A at {last} s");
    }
}

#[test]
fn low_gain_observer_does_not_converge() {
    // k = 50 is below the back-EMF amplitude at 600 r/min (about 87 V), so
    // the sliding condition cannot hold
    let trace = fresh_observer_at(600.0, 50.0, 0.03);
    assert!(trace.last_time_error_at_least(0.05) > 0.01);
}

#[test]
fn observer_tracks_position_and_speed_at_constant_speed() {
    for rpm in [600.0, 800.0, -600.0] {
        let trace = fresh_observer_at(rpm, 145.0, 0.03);
        let mut worst = (0.0f64, 0.0f64);
        for &(_, _, angle, omega_hat, omega_e) in trace.after(0.01) {
            worst.0 = worst.0.max(angle.to_degrees());
            worst.1 = worst.1.max(((omega_hat - omega_e) / omega_e).abs());
        }
        assert!(worst.0 <= 3.0, "{rpm} r/min: angle error {} deg", worst.0);
        assert!(worst.1 <= 0.03, "{rpm} r/min: relative speed error {}", worst.1);
    }
}

#[test]
fn speed_estimate_flips_with_rotation() {
    let mean = |rpm: f64| {
        let trace = fresh_observer_at(rpm, 145.0, 0.03);
        let v: Vec<f64> = trace.after(0.01).map(|s| s.3).collect();
        v.iter().sum::<f64>() / v.len() as f64
    };
    let (fwd, rev) = (mean(700.0), mean(-700.0));
    assert!(fwd > 0.0 && rev < 0.0);
    assert!(((fwd + rev) / fwd).abs() < 0.01, "{fwd} vs {rev}");
}

#[test]
fn id_stays_near_zero_at_constant_speed() {
    let p = motor();
    let log = run(&common::cruise(800.0, ControllerVariant::PiSensored), SimConfig::new(2e-7, 0.06), p, control(&p), smo()).unwrap();
    for r in log.records.iter().filter(|r| r.t >= 0.05) {
        assert!(r.i_d.abs() <= 0.02 * p.rated_current, "i_d = {} at {}", r.i_d, r.t);
    }
}

#[test]
fn reruns_are_bit_identical() {
    let p = motor();
    let scenario = Scenario {
        speed_schedule: vec![ScheduleEntry::new(0.0, 1000.0)],
        load_schedule: vec![ScheduleEntry::new(0.01, 0.3)],
        variant: ControllerVariant::SmoSensorless,
        initial_state: PlantState::default(),
    };
    let sim = SimConfig { log_every: 7, ..SimConfig::new(2e-7, 0.02) };
    let a = run(&scenario, sim, p, control(&p), smo()).unwrap();
    let b = run(&scenario, sim, p, control(&p), smo()).unwrap();
    assert_eq!(a.records.len(), b.records.len());
    for (x, y) in a.records.iter().zip(&b.records) {
        assert_eq!(x.values().map(f64::to_bits), y.values().map(f64::to_bits));
    }
}

#[test]
fn sensored_trajectory_ignores_the_observer() {
    let p = motor();
    let scenario = Scenario {
        speed_schedule: vec![ScheduleEntry::new(0.0, 800.0)],
        load_schedule: vec![ScheduleEntry::new(0.005, 0.4)],
        variant: ControllerVariant::PiSensored,
        initial_state: PlantState::default(),
    };
    let sim = SimConfig::new(2e-7, 0.01);
    let with = Simulation::new(&scenario, sim, p, control(&p), smo()).unwrap().run_to_end().unwrap();
    let without = Simulation::new(&scenario, sim, p, control(&p), smo())
        .unwrap()
        .without_observer()
        .unwrap()
        .run_to_end()
        .unwrap();
    for (a, b) in with.records.iter().zip(&without.records) {
        assert_eq!(
            [a.i_d, a.i_q, a.omega_m, a.theta_e, a.u_d_ref, a.u_q_ref],
            [b.i_d, b.i_q, b.omega_m, b.theta_e, b.u_d_ref, b.u_q_ref]
        );
    }
}

#[test]
fn schedule_events_apply_exactly_once() {
    let p = motor();
    let dt = 2e-7;
    let scenario = Scenario {
        speed_schedule: vec![ScheduleEntry::new(0.0, 300.0), ScheduleEntry::new(0.002, 500.0)],
        load_schedule: vec![ScheduleEntry::new(0.001, 0.2), ScheduleEntry::new(0.003, 0.0)],
        variant: ControllerVariant::PiSensored,
        initial_state: PlantState::default(),
    };
    let log = run(&scenario, SimConfig::new(dt, 0.004), p, control(&p), smo()).unwrap();
    for r in &log.records {
        let load = if r.t + 1e-9 * dt >= 0.003 { 0.0 } else if r.t + 1e-9 * dt >= 0.001 { 0.2 } else { 0.0 };
        let speed = if r.t + 1e-9 * dt >= 0.002 { 500.0 } else { 300.0 };
        assert_eq!(r.load_torque, load, "load at {}", r.t);
        assert!((r.omega_m_ref - rpm_to_rad_s(speed)).abs() < 1e-12, "speed ref at {}", r.t);
    }
    // the first record at or after each event carries the new value
    let first = log.records.iter().find(|r| r.t >= 0.001 - 1e-12).unwrap();
    assert_eq!(first.load_torque, 0.2);
}
