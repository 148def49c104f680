//! TOML configuration files.
//!
//! A user file is merged key by key over `presets/default.toml`. When the
//! merged `control.preset` names a preset, that preset sits between the
//! baseline and the user file. Arrays (the schedules) are replaced, not
//! concatenated. Unknown keys are rejected after merging.

use std::path::Path;

use pmsm_smo::control::{
    design_current_loop, design_speed_loop, CurrentLoopDesign, Decoupling, DecouplingSign, SpeedLoopDesign,
};
use pmsm_smo::engine::{run, ControlSettings, ControllerVariant, RunLog, Scenario, ScheduleEntry, SimConfig, Simulation};
use pmsm_smo::observer::{SmoParams, SwitchingFunction};
use pmsm_smo::plant::{MotorParams, PlantState};
use serde::{Deserialize, Serialize};
use toml::Table;

pub const DEFAULT_PRESET: &str = include_str!("../../../presets/default.toml");
pub const PAPER_TUNED_PRESET: &str = include_str!("../../../presets/paper-tuned.toml");

/// Names accepted by `control.preset`.
pub const PRESETS: &[&str] = &["paper-tuned"];

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("parse error: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("unknown preset `{0}` (known: {known})", known = PRESETS.join(", "))]
    UnknownPreset(String),
    #[error("invalid configuration: {0}")]
    Invalid(#[from] pmsm_smo::Error),
    #[error("{0}")]
    Other(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub motor: MotorSection,
    pub sim: SimSection,
    pub control: ControlSection,
    pub smo: SmoSection,
    pub analysis: AnalysisSection,
    pub scenario: ScenarioSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MotorSection {
    pub resistance: f64,
    pub ld: f64,
    pub lq: f64,
    pub flux_linkage: f64,
    pub inertia: f64,
    pub damping: f64,
    pub pole_pairs: u32,
    pub u_max: f64,
    pub rated_current: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimSection {
    pub dt: f64,
    pub t_end: f64,
    pub controller_dt: Option<f64>,
    pub log_every: usize,
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum VariantKind {
    SmoSensorless,
    PiSensored,
    OpenLoop,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DecouplingKind {
    None,
    Feedforward,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DecouplingSignKind {
    AsPrinted,
    Cancelling,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SwitchingKind {
    Sign,
    Saturation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControlSection {
    pub variant: VariantKind,
    pub preset: Option<String>,
    pub beta: f64,
    pub active_damping: bool,
    /// Current-loop bandwidth; `2 pi R / Ld` when absent.
    pub a: Option<f64>,
    pub decoupling: DecouplingKind,
    pub decoupling_sign: DecouplingSignKind,
    pub iq_max: f64,
    pub open_loop_current: f64,
    pub speed_kp: Option<f64>,
    pub speed_ki: Option<f64>,
    pub kp_d: Option<f64>,
    pub ki_d: Option<f64>,
    pub kp_q: Option<f64>,
    pub ki_q: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SmoSection {
    pub k: f64,
    pub tau0: f64,
    /// Phase-compensation cutoff; `1 / tau0` when absent.
    pub omega_c: Option<f64>,
    pub switching: SwitchingKind,
    pub boundary_width: Option<f64>,
    pub emf_epsilon: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalysisSection {
    /// Seconds after each event excluded from the tracking statistics.
    pub event_window: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpeedEntry {
    pub time: f64,
    pub rpm: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LoadEntry {
    pub time: f64,
    pub torque: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSection {
    pub speed: Vec<SpeedEntry>,
    pub load: Vec<LoadEntry>,
}

/// Everything needed to run one simulation, in core types.
#[derive(Debug, Clone, PartialEq)]
pub struct Setup {
    pub motor: MotorParams,
    pub sim: SimConfig,
    pub control: ControlSettings,
    pub smo: SmoParams,
    pub scenario: Scenario,
    pub event_window: f64,
}

impl Setup {
    pub fn run(&self) -> pmsm_smo::Result<RunLog> {
        run(&self.scenario, self.sim, self.motor, self.control, self.smo)
    }
}

/// Overlay `top` on `base`: tables merge recursively, everything else is replaced.
pub fn merge(base: &mut Table, top: Table) {
    for (key, value) in top {
        match (base.get_mut(&key), value) {
            (Some(toml::Value::Table(b)), toml::Value::Table(t)) => merge(b, t),
            (_, value) => {
                base.insert(key, value);
            }
        }
    }
}

fn preset_source(name: &str) -> Result<&'static str, ConfigError> {
    match name {
        "paper-tuned" => Ok(PAPER_TUNED_PRESET),
        other => Err(ConfigError::UnknownPreset(other.to_string())),
    }
}

fn preset_name(t: &Table) -> Option<&str> {
    t.get("control")?.as_table()?.get("preset")?.as_str()
}

impl ConfigFile {
    /// Effective configuration for a user file's contents.
    pub fn from_toml_str(user: &str) -> Result<Self, ConfigError> {
        let user: Table = user.parse()?;
        let mut merged: Table = DEFAULT_PRESET.parse()?;
        if let Some(name) = preset_name(&user).or(preset_name(&merged)).map(str::to_owned) {
            merge(&mut merged, preset_source(&name)?.parse()?);
        }
        merge(&mut merged, user);
        let cfg: ConfigFile = toml::Value::Table(merged).try_into()?;
        cfg.setup()?;
        Ok(cfg)
    }

    pub fn from_path(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_toml_str(&text)
    }

    /// The built-in baseline alone.
    pub fn baseline() -> Self {
        Self::from_toml_str("").expect("bundled baseline is valid")
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string_pretty(self).expect("configuration always serialises")
    }

    pub fn motor_params(&self) -> MotorParams {
        let m = &self.motor;
        MotorParams {
            resistance: m.resistance,
            ld: m.ld,
            lq: m.lq,
            flux_linkage: m.flux_linkage,
            inertia: m.inertia,
            damping: m.damping,
            pole_pairs: m.pole_pairs,
            u_max: m.u_max,
            rated_current: m.rated_current,
        }
    }

    pub fn sim_config(&self) -> SimConfig {
        SimConfig {
            dt: self.sim.dt,
            t_end: self.sim.t_end,
            controller_dt: self.sim.controller_dt.unwrap_or(self.sim.dt),
            log_every: self.sim.log_every,
            seed: self.sim.seed,
        }
    }

    pub fn speed_design(&self) -> Result<SpeedLoopDesign, ConfigError> {
        let c = &self.control;
        let mut d = design_speed_loop(&self.motor_params(), c.beta, c.active_damping)?;
        if let Some(kp) = c.speed_kp {
            d.kp = kp;
        }
        if let Some(ki) = c.speed_ki {
            d.ki = ki;
        }
        Ok(d)
    }

    pub fn current_design(&self) -> Result<CurrentLoopDesign, ConfigError> {
        let c = &self.control;
        let decoupling = match c.decoupling {
            DecouplingKind::None => Decoupling::None,
            DecouplingKind::Feedforward => Decoupling::Feedforward,
        };
        let mut d = design_current_loop(&self.motor_params(), c.a, decoupling)?;
        d.decoupling_sign = match c.decoupling_sign {
            DecouplingSignKind::AsPrinted => DecouplingSign::AsPrinted,
            DecouplingSignKind::Cancelling => DecouplingSign::Cancelling,
        };
        for (value, slot) in [
            (c.kp_d, &mut d.kp_d),
            (c.ki_d, &mut d.ki_d),
            (c.kp_q, &mut d.kp_q),
            (c.ki_q, &mut d.ki_q),
        ] {
            if let Some(v) = value {
                *slot = v;
            }
        }
        Ok(d)
    }

    pub fn control_settings(&self) -> Result<ControlSettings, ConfigError> {
        Ok(ControlSettings {
            speed: self.speed_design()?,
            current: self.current_design()?,
            iq_max: self.control.iq_max,
            open_loop_current: self.control.open_loop_current,
        })
    }

    pub fn smo_params(&self) -> Result<SmoParams, ConfigError> {
        let s = &self.smo;
        let mut p = SmoParams::new(s.k, s.tau0);
        if let Some(wc) = s.omega_c {
            p.omega_c = wc;
        }
        p.emf_epsilon = s.emf_epsilon;
        p.switching = match (s.switching, s.boundary_width) {
            (SwitchingKind::Sign, _) => SwitchingFunction::Sign,
            (SwitchingKind::Saturation, Some(width)) => SwitchingFunction::Saturation { width },
            (SwitchingKind::Saturation, None) => {
                return Err(ConfigError::Other(
                    "smo.switching = \"saturation\" needs smo.boundary_width".into(),
                ))
            }
        };
        Ok(p)
    }

    pub fn scenario(&self) -> Scenario {
        Scenario {
            speed_schedule: self.scenario.speed.iter().map(|e| ScheduleEntry::new(e.time, e.rpm)).collect(),
            load_schedule: self.scenario.load.iter().map(|e| ScheduleEntry::new(e.time, e.torque)).collect(),
            variant: match self.control.variant {
                VariantKind::SmoSensorless => ControllerVariant::SmoSensorless,
                VariantKind::PiSensored => ControllerVariant::PiSensored,
                VariantKind::OpenLoop => ControllerVariant::OpenLoop,
            },
            initial_state: PlantState::default(),
        }
    }

    /// Convert to core types, running every validation the engine performs.
    pub fn setup(&self) -> Result<Setup, ConfigError> {
        if let Some(name) = &self.control.preset {
            preset_source(name)?;
        }
        if self.analysis.event_window.is_nan() || self.analysis.event_window < 0.0 {
            return Err(ConfigError::Other("analysis.event_window must be >= 0".into()));
        }
        let setup = Setup {
            motor: self.motor_params(),
            sim: self.sim_config(),
            control: self.control_settings()?,
            smo: self.smo_params()?,
            scenario: self.scenario(),
            event_window: self.analysis.event_window,
        };
        Simulation::new(&setup.scenario, setup.sim, setup.motor, setup.control, setup.smo)?;
        Ok(setup)
    }
}

/// Parameters accepted by the `sweep` command.
pub const SWEEP_PARAMS: &[&str] = &["speed", "k", "omega_c", "beta", "a"];

impl ConfigFile {
    /// Copy with one sweep parameter replaced.
    ///
    /// `speed` sets the last speed-schedule entry. `a` also drops the preset
    /// and any explicit current-loop gains so that the bandwidth takes effect.
    pub fn with_param(&self, param: &str, value: f64) -> Result<Self, ConfigError> {
        let mut cfg = self.clone();
        match param {
            "speed" => match cfg.scenario.speed.last_mut() {
                Some(e) => e.rpm = value,
                None => return Err(ConfigError::Other("sweep over speed needs a speed schedule".into())),
            },
            "k" => cfg.smo.k = value,
            "omega_c" => cfg.smo.omega_c = Some(value),
            "beta" => cfg.control.beta = value,
            "a" => {
                let c = &mut cfg.control;
                c.a = Some(value);
                c.preset = None;
                c.kp_d = None;
                c.ki_d = None;
                c.kp_q = None;
                c.ki_q = None;
            }
            other => {
                return Err(ConfigError::Other(format!(
                    "unknown sweep parameter `{other}` (expected one of {})",
                    SWEEP_PARAMS.join(", ")
                )))
            }
        }
        cfg.setup()?;
        Ok(cfg)
    }
}
