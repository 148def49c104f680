#![allow(dead_code)]

use pmsm_smo::control::{design_current_loop, design_speed_loop, Decoupling};
use pmsm_smo::engine::{rpm_to_rad_s, ControlSettings, ControllerVariant, Scenario, ScheduleEntry};
use pmsm_smo::plant::{MotorParams, PlantState};

/// Nameplate motor with the phase values used throughout the tests.
pub fn motor() -> MotorParams {
    MotorParams {
        resistance: 5.8,
        ld: 0.011,
        lq: 0.011,
        flux_linkage: 0.3477,
        inertia: 1.7e-5,
        damping: 0.0,
        pole_pairs: 4,
        u_max: 311.0,
        rated_current: 1.5,
    }
}

pub fn control(p: &MotorParams) -> ControlSettings {
    ControlSettings {
        speed: design_speed_loop(p, 500.0, true).unwrap(),
        current: design_current_loop(p, None, Decoupling::None).unwrap(),
        iq_max: 4.5,
        open_loop_current: 1.5,
    }
}

/// Constant-speed scenario starting at the setpoint.
pub fn cruise(rpm: f64, variant: ControllerVariant) -> Scenario {
    Scenario {
        speed_schedule: vec![ScheduleEntry::new(0.0, rpm)],
        load_schedule: vec![],
        variant,
        initial_state: PlantState {
            omega_m: rpm_to_rad_s(rpm),
            ..Default::default()
        },
    }
}
