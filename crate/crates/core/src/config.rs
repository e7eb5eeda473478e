//! TOML run configuration.
//!
//! Every key is optional; an empty file yields the nominal uphill walk.
//! Angles are degrees in the file and radians everywhere else.
//!
//! ```toml
//! [plant]
//! leg_mass = 1.0
//! [controller]
//! kp = 1500.0
//! lambda_assumed_deg = 25.0
//! [sim]
//! lambda_true_deg = 22.0
//! steps = 30
//! [initial]
//! q_deg = [15.0, -15.0, 105.0]
//! dq = [1.168, -1.168, 0.0]
//! ```

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::analysis::{SweepAxis, SweepSpec};
use crate::controller::{self, ControllerGains, ControllerState, ErrorSignal, DEFAULT_DET_FLOOR};
use crate::error::{Error, Result};
use crate::model::{Incline, RobotParams, SwingState};
use crate::ode::Tolerances;
use crate::reduced::GaitTargets;
use crate::sim::SimConfig;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlantSection {
    pub leg_mass: f64,
    pub hip_mass: f64,
    pub torso_mass: f64,
    pub leg_length: f64,
    pub torso_length: f64,
    pub gravity: f64,
}

impl Default for PlantSection {
    fn default() -> Self {
        Self::from(RobotParams::NOMINAL)
    }
}

impl From<RobotParams> for PlantSection {
    fn from(p: RobotParams) -> Self {
        Self {
            leg_mass: p.leg_mass,
            hip_mass: p.hip_mass,
            torso_mass: p.torso_mass,
            leg_length: p.leg_length,
            torso_length: p.torso_length,
            gravity: p.gravity,
        }
    }
}

impl From<PlantSection> for RobotParams {
    fn from(s: PlantSection) -> Self {
        Self {
            leg_mass: s.leg_mass,
            hip_mass: s.hip_mass,
            torso_mass: s.torso_mass,
            leg_length: s.leg_length,
            torso_length: s.torso_length,
            gravity: s.gravity,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ControllerSection {
    pub kp: f64,
    pub kd: f64,
    pub ki: f64,
    pub lambda_assumed_deg: f64,
    pub error_signal: ErrorSignal,
    pub reset_integral_on_impact: bool,
    pub det_floor: f64,
}

impl Default for ControllerSection {
    fn default() -> Self {
        let g = ControllerGains::NOMINAL;
        Self {
            kp: g.kp,
            kd: g.kd,
            ki: g.ki,
            lambda_assumed_deg: 25.0,
            error_signal: ErrorSignal::default(),
            reset_integral_on_impact: false,
            det_floor: DEFAULT_DET_FLOOR,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TargetsSection {
    pub torso_ref_deg: f64,
    pub switch_angle_deg: f64,
}

impl Default for TargetsSection {
    fn default() -> Self {
        Self {
            torso_ref_deg: 105.0,
            switch_angle_deg: 15.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimSection {
    pub lambda_true_deg: f64,
    pub steps: usize,
    pub rtol: f64,
    pub atol: f64,
    pub max_step: f64,
    pub max_step_time: f64,
    pub delta: f64,
    pub scuff_tol: f64,
    pub strict_scuff: bool,
    pub record_trajectory: bool,
}

impl Default for SimSection {
    fn default() -> Self {
        let n = SimConfig::nominal();
        Self {
            lambda_true_deg: 25.0,
            steps: n.n_steps,
            rtol: n.tolerances.rtol,
            atol: n.tolerances.atol,
            max_step: n.tolerances.max_step,
            max_step_time: n.max_step_time,
            delta: n.delta,
            scuff_tol: n.scuff_tol,
            strict_scuff: n.strict_scuff,
            record_trajectory: n.record_trajectory,
        }
    }
}

/// Pre-impact state the run starts from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InitialSection {
    pub q_deg: [f64; 3],
    /// Rates (rad/s).
    pub dq: [f64; 3],
}

impl Default for InitialSection {
    fn default() -> Self {
        Self {
            q_deg: [15.0, -15.0, 105.0],
            dq: [1.168, -1.168, 0.0],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OrbitSection {
    pub tol: f64,
    pub max_iters: usize,
}

impl Default for OrbitSection {
    fn default() -> Self {
        Self {
            tol: 1e-6,
            max_iters: 1000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    pub axis: SweepAxis,
    /// Fractional perturbation for relative axes, degrees for `incline_deg`.
    pub start: f64,
    pub end: f64,
    pub samples: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub plant: PlantSection,
    /// Parameters assumed by the controller; defaults to the plant.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub model: Option<PlantSection>,
    pub controller: ControllerSection,
    pub targets: TargetsSection,
    pub sim: SimSection,
    pub initial: InitialSection,
    pub orbit: OrbitSection,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepSection>,
}

/// A validated configuration in internal units.
#[derive(Debug, Clone, PartialEq)]
pub struct Resolved {
    pub sim: SimConfig,
    pub initial: SwingState,
    pub orbit: OrbitSection,
    pub sweep: Option<SweepSpec>,
    pub warnings: Vec<String>,
}

impl Config {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Parse {
            line: e
                .span()
                .map(|s| text[..s.start.min(text.len())].matches('\n').count() + 1),
            message: e.message().trim().to_string(),
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    /// Canonical TOML with every float written to 17 significant digits.
    pub fn to_toml(&self) -> String {
        let table = toml::Table::try_from(self).expect("config serializes to a table");
        let mut out = String::new();
        for (name, section) in &table {
            let toml::Value::Table(section) = section else {
                continue;
            };
            if !out.is_empty() {
                out.push('\n');
            }
            out.push_str(&format!("[{name}]\n"));
            for (key, value) in section {
                out.push_str(&format!("{key} = {}\n", emit_value(value)));
            }
        }
        out
    }

    /// Checks every key and converts to internal units. Violations are
    /// collected into one [`Error::Validation`].
    pub fn resolve(&self) -> Result<Resolved> {
        let mut bad: Vec<(String, String)> = Vec::new();
        let mut warnings = Vec::new();

        check_plant("plant", &self.plant, &mut bad);
        if let Some(m) = &self.model {
            check_plant("model", m, &mut bad);
        }
        let c = &self.controller;
        for (key, v, strict) in [("kp", c.kp, true), ("kd", c.kd, true), ("ki", c.ki, false)] {
            if !v.is_finite() || v < 0.0 || (strict && v == 0.0) {
                let need = if strict { "positive" } else { "non-negative" };
                bad.push((
                    format!("controller.{key}"),
                    format!("must be finite and {need}, got {v}"),
                ));
            }
        }
        positive("controller.det_floor", c.det_floor, &mut bad);
        let lam_assumed = incline(
            "controller.lambda_assumed_deg",
            c.lambda_assumed_deg,
            &mut bad,
        );
        let lam_true = incline("sim.lambda_true_deg", self.sim.lambda_true_deg, &mut bad);

        let t = &self.targets;
        if !t.torso_ref_deg.is_finite() {
            bad.push(("targets.torso_ref_deg".into(), "must be finite".into()));
        }
        if !(t.switch_angle_deg > 0.0 && t.switch_angle_deg < 90.0) {
            bad.push((
                "targets.switch_angle_deg".into(),
                format!("must lie in (0, 90), got {}", t.switch_angle_deg),
            ));
        }

        let s = &self.sim;
        for (key, v) in [
            ("sim.rtol", s.rtol),
            ("sim.atol", s.atol),
            ("sim.max_step", s.max_step),
            ("sim.max_step_time", s.max_step_time),
            ("sim.delta", s.delta),
            ("sim.scuff_tol", s.scuff_tol),
        ] {
            positive(key, v, &mut bad);
        }
        if s.steps == 0 {
            bad.push(("sim.steps".into(), "must be at least 1".into()));
        }
        if !self
            .initial
            .q_deg
            .iter()
            .chain(&self.initial.dq)
            .all(|v| v.is_finite())
        {
            bad.push(("initial".into(), "state must be finite".into()));
        }
        positive("orbit.tol", self.orbit.tol, &mut bad);
        if self.orbit.max_iters == 0 {
            bad.push(("orbit.max_iters".into(), "must be at least 1".into()));
        }
        if let Some(sw) = &self.sweep {
            check_sweep(sw, &mut bad);
        }

        if !bad.is_empty() {
            let (keys, messages) = bad.into_iter().unzip();
            return Err(Error::Validation { keys, messages });
        }
        let (lam_true, lam_assumed) = (lam_true.expect("checked"), lam_assumed.expect("checked"));

        let plant = RobotParams::from(self.plant);
        let model = self.model.map(RobotParams::from).unwrap_or(plant);
        if let Some(max) = controller::max_static_incline(&plant) {
            if lam_true.radians() > max {
                warnings.push(format!(
                    "sim.lambda_true_deg = {} exceeds the static-stability bound λ_max = {:.2}°; \
                     a gait may still exist but no static posture does",
                    s.lambda_true_deg,
                    max.to_degrees()
                ));
            }
        }

        let targets = GaitTargets {
            torso_ref: t.torso_ref_deg.to_radians(),
            switch_angle: t.switch_angle_deg.to_radians(),
        };
        let mut cs = ControllerState::new(model, lam_assumed, targets);
        cs.gains = ControllerGains {
            kp: c.kp,
            kd: c.kd,
            ki: c.ki,
        };
        cs.error_signal = c.error_signal;
        cs.reset_integral_on_impact = c.reset_integral_on_impact;
        cs.det_floor = c.det_floor;

        let sim = SimConfig {
            plant,
            incline_true: lam_true,
            controller: cs,
            n_steps: s.steps,
            tolerances: Tolerances {
                rtol: s.rtol,
                atol: s.atol,
                max_step: s.max_step,
            },
            max_step_time: s.max_step_time,
            delta: s.delta,
            scuff_tol: s.scuff_tol,
            strict_scuff: s.strict_scuff,
            record_trajectory: s.record_trajectory,
        };
        sim.validate()?;
        let initial = SwingState::from_degrees(self.initial.q_deg, self.initial.dq);
        let sweep = self.sweep.map(|sw| SweepSpec {
            axis: sw.axis,
            start: sw.start,
            end: sw.end,
            samples: sw.samples,
            base: sim,
            initial,
            orbit_tol: self.orbit.tol,
            orbit_max_iters: self.orbit.max_iters,
        });
        Ok(Resolved {
            sim,
            initial,
            orbit: self.orbit,
            sweep,
            warnings,
        })
    }
}

fn emit_value(v: &toml::Value) -> String {
    match v {
        toml::Value::Float(x) => format!("{x:.16e}"),
        toml::Value::Array(items) => {
            let inner: Vec<String> = items.iter().map(emit_value).collect();
            format!("[{}]", inner.join(", "))
        }
        other => other.to_string(),
    }
}

fn positive(key: &str, v: f64, bad: &mut Vec<(String, String)>) {
    if !(v.is_finite() && v > 0.0) {
        bad.push((key.into(), format!("must be finite and positive, got {v}")));
    }
}

fn incline(key: &str, deg: f64, bad: &mut Vec<(String, String)>) -> Option<Incline> {
    match Incline::from_degrees(deg) {
        Ok(l) => Some(l),
        Err(_) => {
            bad.push((key.into(), format!("|λ| must be below 90°, got {deg}")));
            None
        }
    }
}

fn check_plant(section: &str, p: &PlantSection, bad: &mut Vec<(String, String)>) {
    for (key, v) in [
        ("leg_mass", p.leg_mass),
        ("hip_mass", p.hip_mass),
        ("torso_mass", p.torso_mass),
        ("leg_length", p.leg_length),
        ("torso_length", p.torso_length),
        ("gravity", p.gravity),
    ] {
        positive(&format!("{section}.{key}"), v, bad);
    }
}

fn check_sweep(sw: &SweepSection, bad: &mut Vec<(String, String)>) {
    if sw.samples == 0 {
        bad.push(("sweep.samples".into(), "must be at least 1".into()));
    }
    for (key, v) in [("sweep.start", sw.start), ("sweep.end", sw.end)] {
        if !v.is_finite() {
            bad.push((key.into(), "must be finite".into()));
        } else if sw.axis.is_relative() && v <= -1.0 {
            bad.push((
                key.into(),
                format!("relative perturbation {v} makes a parameter non-positive"),
            ));
        } else if !sw.axis.is_relative() && v.abs() >= 90.0 {
            bad.push((key.into(), format!("|λ| must be below 90°, got {v}")));
        }
    }
}
