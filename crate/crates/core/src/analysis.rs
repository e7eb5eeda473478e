//! Stride-map iteration, periodic orbits and robustness sweeps.

use nalgebra::Vector2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Incline, RobotParams, SwingState};
use crate::sim::{self, median_ratio, Abort, GaitSummary, SimConfig};

/// A point on the switching surface together with the integrator state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PoincarePoint {
    pub x: SwingState,
    pub integral: Vector2<f64>,
}

impl PoincarePoint {
    pub fn new(x: SwingState) -> Self {
        Self {
            x,
            integral: Vector2::zeros(),
        }
    }
}

/// One application of the stride map, with the step time.
pub fn stride_map(p: &PoincarePoint, cfg: &SimConfig) -> Result<(PoincarePoint, f64)> {
    let cfg = SimConfig {
        record_trajectory: false,
        ..*cfg
    };
    let rec = sim::step(&p.x, &p.integral, &cfg, 0, 0.0).record;
    match (rec.x_event, rec.integral_at_event, rec.abort) {
        (Some(x), Some(integral), None) => Ok((PoincarePoint { x, integral }, rec.step_time)),
        (_, _, abort) => Err(gait_abort(abort)),
    }
}

fn gait_abort(abort: Option<Abort>) -> Error {
    let a = abort.unwrap_or(Abort {
        kind: "unknown".into(),
        message: "step produced no event".into(),
    });
    Error::GaitAbort {
        kind: a.kind,
        message: a.message,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeriodicOrbit {
    pub fixed_point: PoincarePoint,
    pub step_time: f64,
    pub iterations: usize,
    /// `‖P(x_k) − x_k‖` per iteration.
    pub distances: Vec<f64>,
    /// Median of consecutive distance ratios; below one for a contracting map.
    pub contraction: Option<f64>,
}

/// Iterates the stride map until consecutive pre-impact states are closer
/// than `tol`.
pub fn find_periodic_orbit(
    guess: &PoincarePoint,
    cfg: &SimConfig,
    tol: f64,
    max_iters: usize,
) -> Result<PeriodicOrbit> {
    let mut p = *guess;
    let mut distances = Vec::new();
    for k in 1..=max_iters {
        let (next, step_time) = stride_map(&p, cfg)?;
        let d = next.x.distance(&p.x);
        distances.push(d);
        p = next;
        if d < tol {
            return Ok(PeriodicOrbit {
                fixed_point: p,
                step_time,
                iterations: k,
                contraction: median_ratio(&distances),
                distances,
            });
        }
    }
    Err(Error::NoConvergence {
        iterations: max_iters,
        last_distance: distances.last().copied().unwrap_or(f64::NAN),
    })
}

/// Continues a completed walk with the stride map until it settles on a
/// periodic orbit. A walk whose step times keep drifting fails here even
/// when every step so far was completed.
pub fn continue_to_orbit(
    g: &GaitSummary,
    cfg: &SimConfig,
    tol: f64,
    max_iters: usize,
) -> Result<PeriodicOrbit> {
    let last = g.steps.last().filter(|s| s.completed()).ok_or_else(|| {
        gait_abort(g.aborted.clone().or(Some(Abort {
            kind: "empty".into(),
            message: "walk has no completed step".into(),
        })))
    })?;
    let start = PoincarePoint {
        x: last.x_event.expect("completed step has an event"),
        integral: last.integral_at_event.expect("completed step has an event"),
    };
    find_periodic_orbit(&start, cfg, tol, max_iters)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    LegMass,
    HipMass,
    TorsoMass,
    /// All three masses scaled together.
    AllMasses,
    LegLength,
    TorsoLength,
    /// True incline in degrees; the controller keeps its assumed value.
    InclineDeg,
}

impl SweepAxis {
    pub fn as_str(self) -> &'static str {
        match self {
            SweepAxis::LegMass => "leg_mass",
            SweepAxis::HipMass => "hip_mass",
            SweepAxis::TorsoMass => "torso_mass",
            SweepAxis::AllMasses => "all_masses",
            SweepAxis::LegLength => "leg_length",
            SweepAxis::TorsoLength => "torso_length",
            SweepAxis::InclineDeg => "incline_deg",
        }
    }

    pub fn is_relative(self) -> bool {
        self != SweepAxis::InclineDeg
    }

    /// Plant and true incline for one sample. Relative axes take a fractional
    /// perturbation (0.5 is +50 %).
    pub fn apply(self, base: &SimConfig, value: f64) -> Result<(RobotParams, Incline)> {
        let mut p = base.plant;
        let scale = 1.0 + value;
        match self {
            SweepAxis::LegMass => p.leg_mass *= scale,
            SweepAxis::HipMass => p.hip_mass *= scale,
            SweepAxis::TorsoMass => p.torso_mass *= scale,
            SweepAxis::AllMasses => {
                p.leg_mass *= scale;
                p.hip_mass *= scale;
                p.torso_mass *= scale;
            }
            SweepAxis::LegLength => p.leg_length *= scale,
            SweepAxis::TorsoLength => p.torso_length *= scale,
            SweepAxis::InclineDeg => return Ok((p, Incline::from_degrees(value)?)),
        }
        p.validate()?;
        Ok((p, base.incline_true))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    pub axis: SweepAxis,
    pub start: f64,
    pub end: f64,
    pub samples: usize,
    pub base: SimConfig,
    pub initial: SwingState,
    /// Tolerance and iteration cap for continuing each walk to its orbit.
    pub orbit_tol: f64,
    pub orbit_max_iters: usize,
}

impl SweepSpec {
    pub fn values(&self) -> Vec<f64> {
        match self.samples {
            0 => vec![],
            1 => vec![self.start],
            n => (0..n)
                .map(|k| self.start + (self.end - self.start) * k as f64 / (n - 1) as f64)
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub index: usize,
    pub value: f64,
    pub completed_steps: usize,
    pub stable: bool,
    /// The walk settled on a periodic orbit when continued with the stride map.
    pub orbit_found: bool,
    pub orbit_step_time: Option<f64>,
    pub orbit_contraction: Option<f64>,
    pub step_time: Option<f64>,
    pub step_time_spread_last5: Option<f64>,
    pub contraction: Option<f64>,
    /// Largest Z_δ distance after the first step.
    pub worst_z_delta: Option<f64>,
    pub abort: Option<Abort>,
}

/// Runs every sample independently; rows come back in sample order.
pub fn run_sweep(spec: &SweepSpec) -> Vec<SweepRow> {
    spec.values()
        .into_par_iter()
        .enumerate()
        .map(|(index, value)| sweep_sample(spec, index, value))
        .collect()
}

fn sweep_sample(spec: &SweepSpec, index: usize, value: f64) -> SweepRow {
    let (plant, incline_true) = match spec.axis.apply(&spec.base, value) {
        Ok(v) => v,
        Err(e) => {
            return SweepRow {
                index,
                value,
                completed_steps: 0,
                stable: false,
                orbit_found: false,
                orbit_step_time: None,
                orbit_contraction: None,
                step_time: None,
                step_time_spread_last5: None,
                contraction: None,
                worst_z_delta: None,
                abort: Some(Abort::from(&e)),
            }
        }
    };
    let cfg = SimConfig {
        plant,
        incline_true,
        record_trajectory: false,
        ..spec.base
    };
    let g = sim::run_gait(&spec.initial, &cfg);
    let orbit = (g.completed_steps() == cfg.n_steps)
        .then(|| continue_to_orbit(&g, &cfg, spec.orbit_tol, spec.orbit_max_iters).ok())
        .flatten();
    row_from_summary(index, value, &g, cfg.n_steps, orbit.as_ref())
}

pub fn row_from_summary(
    index: usize,
    value: f64,
    g: &GaitSummary,
    n_steps: usize,
    orbit: Option<&PeriodicOrbit>,
) -> SweepRow {
    let completed = g.completed_steps();
    SweepRow {
        index,
        value,
        completed_steps: completed,
        stable: completed == n_steps && g.contraction.is_some_and(|r| r < 1.0),
        orbit_found: orbit.is_some(),
        orbit_step_time: orbit.map(|o| o.step_time),
        orbit_contraction: orbit.and_then(|o| o.contraction),
        step_time: g.step_times.last().copied(),
        step_time_spread_last5: g.step_time_spread(5),
        contraction: g.contraction,
        worst_z_delta: g.worst_z_delta_from(1),
        abort: g.aborted.clone(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sweep_values() {
        let spec = SweepSpec {
            axis: SweepAxis::AllMasses,
            start: -0.5,
            end: 0.5,
            samples: 5,
            base: SimConfig::nominal(),
            initial: SwingState::from_degrees([15.0, -15.0, 105.0], [1.168, -1.168, 0.0]),
            orbit_tol: 1e-6,
            orbit_max_iters: 100,
        };
        assert_eq!(spec.values(), vec![-0.5, -0.25, 0.0, 0.25, 0.5]);
        assert_eq!(
            SweepSpec {
                samples: 1,
                ..spec.clone()
            }
            .values(),
            vec![-0.5]
        );
    }

    #[test]
    fn axis_application() {
        let base = SimConfig::nominal();
        let (p, lam) = SweepAxis::AllMasses.apply(&base, 0.5).unwrap();
        assert_eq!((p.leg_mass, p.hip_mass, p.torso_mass), (1.5, 1.5, 4.5));
        assert_eq!(lam, base.incline_true);
        let (p, lam) = SweepAxis::InclineDeg.apply(&base, 20.0).unwrap();
        assert_eq!(p, base.plant);
        assert!((lam.degrees() - 20.0).abs() < 1e-12);
        assert!(SweepAxis::LegMass.apply(&base, -1.5).is_err());
    }

    #[test]
    fn infinite_tolerance_returns_after_one_iterate() {
        let cfg = SimConfig::nominal();
        let x = SwingState::from_degrees([15.0, -15.0, 105.0], [1.168, -1.168, 0.0]);
        let orbit = find_periodic_orbit(&PoincarePoint::new(x), &cfg, f64::INFINITY, 10).unwrap();
        assert_eq!(orbit.iterations, 1);
        assert_eq!(orbit.distances.len(), 1);
    }

    #[test]
    fn stride_map_is_deterministic() {
        let cfg = SimConfig::nominal();
        let p = PoincarePoint::new(SwingState::from_degrees(
            [15.0, -15.0, 105.0],
            [1.168, -1.168, 0.0],
        ));
        assert_eq!(stride_map(&p, &cfg).unwrap(), stride_map(&p, &cfg).unwrap());
    }
}
