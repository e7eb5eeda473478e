//! Event-driven integration of the closed-loop hybrid system.
//!
//! A step starts at a pre-impact state: the reset map is applied, then the
//! swing phase is integrated until the stance angle rises through the
//! switching angle. The integrated state is `(q, q̇, ω_I)`.

use std::f64::consts::FRAC_PI_2;

use nalgebra::{SVector, Vector2, Vector3};
use serde::{Deserialize, Serialize};

use crate::controller::ControllerState;
use crate::dynamics;
use crate::error::{Error, Result};
use crate::impact;
use crate::model::{Incline, RobotParams, SwingState};
use crate::ode::{DenseStep, Dopri5, Tolerances};
use crate::reduced::GaitTargets;

pub type HybridVector = SVector<f64, 8>;

/// Event residual required after polishing (rad).
pub const EVENT_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimConfig {
    pub plant: RobotParams,
    pub incline_true: Incline,
    pub controller: ControllerState,
    pub n_steps: usize,
    pub tolerances: Tolerances,
    /// Longest admissible swing phase (s).
    pub max_step_time: f64,
    /// Radius of the zero-dynamics neighbourhood.
    pub delta: f64,
    /// Swing-foot penetration tolerated in strict mode (m).
    pub scuff_tol: f64,
    pub strict_scuff: bool,
    pub record_trajectory: bool,
}

impl SimConfig {
    /// Nominal uphill walk: λ = 25°, q3_ref = 105°, q1_ref = 15°, 20 steps.
    pub fn nominal() -> Self {
        let incline = Incline::from_degrees(25.0).expect("valid incline");
        let plant = RobotParams::NOMINAL;
        Self {
            plant,
            incline_true: incline,
            controller: ControllerState::new(plant, incline, GaitTargets::nominal()),
            n_steps: 20,
            tolerances: Tolerances::default(),
            max_step_time: 5.0,
            delta: 1.5e-3,
            scuff_tol: 1e-2,
            strict_scuff: false,
            record_trajectory: true,
        }
    }

    pub fn targets(&self) -> &GaitTargets {
        &self.controller.targets
    }

    pub fn validate(&self) -> Result<()> {
        self.plant.validate()?;
        self.controller.model.validate()?;
        self.controller.gains.validate()?;
        let positive = [
            ("rtol", self.tolerances.rtol),
            ("atol", self.tolerances.atol),
            ("max_step", self.tolerances.max_step),
            ("max_step_time", self.max_step_time),
            ("delta", self.delta),
            ("scuff_tol", self.scuff_tol),
            ("det_floor", self.controller.det_floor),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidParameter {
                    name,
                    reason: format!("must be finite and positive, got {v}"),
                });
            }
        }
        if self.n_steps == 0 {
            return Err(Error::InvalidParameter {
                name: "n_steps",
                reason: "must be at least 1".into(),
            });
        }
        Ok(())
    }
}

/// Why a step was abandoned.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Abort {
    pub kind: String,
    pub message: String,
}

impl From<&Error> for Abort {
    fn from(e: &Error) -> Self {
        Abort {
            kind: e.kind().into(),
            message: e.to_string(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub t: f64,
    pub x: SwingState,
    pub u: Vector2<f64>,
    pub eta: Vector2<f64>,
    pub integral: Vector2<f64>,
    pub z_delta: f64,
    pub step: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub samples: Vec<Sample>,
}

impl Trajectory {
    fn push(&mut self, s: Sample) {
        if self.samples.last().is_none_or(|last| s.t > last.t) {
            self.samples.push(s);
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step_index: usize,
    pub t_start: f64,
    pub t_end: f64,
    pub step_time: f64,
    /// State at which this step's impact occurred.
    pub x_pre_impact: SwingState,
    pub x_post_impact: SwingState,
    pub impulse: Vector2<f64>,
    /// Next pre-impact state; absent when the step aborted.
    pub x_event: Option<SwingState>,
    pub integral_at_event: Option<Vector2<f64>>,
    pub z_delta_at_impact: Option<f64>,
    pub z_delta_hit: bool,
    /// Swing-foot height at the event (m), a diagnostic for the switching rule.
    pub foot_height_at_event: Option<f64>,
    pub min_foot_clearance: f64,
    pub min_abs_det_b_e: f64,
    pub abort: Option<Abort>,
}

impl StepRecord {
    pub fn completed(&self) -> bool {
        self.abort.is_none()
    }
}

/// Result of one swing phase, times relative to its start.
#[derive(Debug, Clone, PartialEq)]
pub struct SwingArc {
    pub event: SwingState,
    pub integral: Vector2<f64>,
    pub duration: f64,
    pub min_foot_clearance: f64,
    pub min_abs_det_b_e: f64,
    pub trajectory: Trajectory,
}

pub(crate) fn pack(x: &SwingState, integral: &Vector2<f64>) -> HybridVector {
    let mut y = HybridVector::zeros();
    y.fixed_rows_mut::<3>(0).copy_from(&x.q);
    y.fixed_rows_mut::<3>(3).copy_from(&x.dq);
    y.fixed_rows_mut::<2>(6).copy_from(integral);
    y
}

pub(crate) fn unpack(y: &HybridVector) -> (SwingState, Vector2<f64>) {
    (
        SwingState::new(
            Vector3::new(y[0], y[1], y[2]),
            Vector3::new(y[3], y[4], y[5]),
        ),
        Vector2::new(y[6], y[7]),
    )
}

/// Closed-loop vector field.
pub fn closed_loop_rhs(cfg: &SimConfig, y: &HybridVector) -> Result<HybridVector> {
    let (x, integral) = unpack(y);
    let out = cfg.controller.control(&x, &integral)?;
    let ddq = dynamics::swing_accel(&x, &out.u, &cfg.plant, cfg.incline_true)?;
    let mut dy = HybridVector::zeros();
    dy.fixed_rows_mut::<3>(0).copy_from(&x.dq);
    dy.fixed_rows_mut::<3>(3).copy_from(&ddq);
    dy.fixed_rows_mut::<2>(6).copy_from(&out.integral_rate);
    Ok(dy)
}

fn sample(cfg: &SimConfig, t: f64, y: &HybridVector, step: usize) -> Result<(Sample, f64)> {
    let (x, integral) = unpack(y);
    let out = cfg.controller.control(&x, &integral)?;
    Ok((
        Sample {
            t,
            x,
            u: out.u,
            eta: out.eta,
            integral,
            z_delta: out.z_delta,
            step,
        },
        out.det_b_e.abs(),
    ))
}

/// Integrates one swing phase from `x0` until `q1` rises through `q1_ref`.
pub fn integrate_swing(
    x0: &SwingState,
    integral0: &Vector2<f64>,
    cfg: &SimConfig,
) -> Result<SwingArc> {
    integrate_swing_indexed(x0, integral0, cfg, 0)
}

fn integrate_swing_indexed(
    x0: &SwingState,
    integral0: &Vector2<f64>,
    cfg: &SimConfig,
    step_index: usize,
) -> Result<SwingArc> {
    if !x0.is_finite() || !integral0.iter().all(|v| v.is_finite()) {
        return Err(Error::NonFiniteState {
            context: "swing initial state",
        });
    }
    let q1_ref = cfg.targets().switch_angle;
    let event = |y: &HybridVector| y[0] - q1_ref;
    let rhs = |_t: f64, y: &HybridVector| closed_loop_rhs(cfg, y);
    let y0 = pack(x0, integral0);

    let mut trajectory = Trajectory::default();
    let (s0, det0) = sample(cfg, 0.0, &y0, step_index)?;
    if cfg.record_trajectory {
        trajectory.push(s0);
    }
    let mut min_det = det0;
    let mut min_clear = f64::INFINITY;

    // already on or past the switching surface and moving forward
    if event(&y0) >= 0.0 && y0[3] > 0.0 {
        return Ok(SwingArc {
            event: *x0,
            integral: *integral0,
            duration: 0.0,
            min_foot_clearance: impact::swing_foot_height(&x0.q, &cfg.plant),
            min_abs_det_b_e: min_det,
            trajectory,
        });
    }

    let mut solver = Dopri5::new(rhs, 0.0, y0, cfg.tolerances)?;
    loop {
        let st = solver.step()?;
        if !st.y1.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFiniteState {
                context: "swing integration",
            });
        }

        if event(&st.y0) < 0.0 && event(&st.y1) >= 0.0 {
            if let Some((t_ev, y_ev)) = locate_event(&st, cfg, q1_ref)? {
                let mut trajectory = trajectory;
                for k in 1..=4 {
                    let t = st.t0 + (t_ev - st.t0) * k as f64 / 4.0;
                    min_clear = min_clear.min(clearance(cfg, &st.interpolate(t)));
                }
                min_clear = min_clear.min(clearance(cfg, &y_ev));
                check_scuff(cfg, min_clear)?;
                let (s, det) = sample(cfg, t_ev, &y_ev, step_index)?;
                min_det = min_det.min(det);
                if cfg.record_trajectory {
                    trajectory.push(s);
                }
                let (event, integral) = unpack(&y_ev);
                return Ok(SwingArc {
                    event,
                    integral,
                    duration: t_ev,
                    min_foot_clearance: min_clear,
                    min_abs_det_b_e: min_det,
                    trajectory,
                });
            }
        }

        for k in 1..=4 {
            let t = st.t0 + st.h() * k as f64 / 4.0;
            min_clear = min_clear.min(clearance(cfg, &st.interpolate(t)));
        }
        check_scuff(cfg, min_clear)?;
        let (s, det) = sample(cfg, st.t1, &st.y1, step_index)?;
        min_det = min_det.min(det);
        if cfg.record_trajectory {
            trajectory.push(s);
        }

        let (q1, q2) = (st.y1[0], st.y1[1]);
        if q1.abs() > FRAC_PI_2 || q2.abs() > FRAC_PI_2 {
            return Err(Error::FellOver { q1, q2 });
        }
        if st.t1 > cfg.max_step_time {
            return Err(Error::StepTimeout {
                limit: cfg.max_step_time,
            });
        }
    }
}

fn clearance(cfg: &SimConfig, y: &HybridVector) -> f64 {
    impact::swing_foot_height(&Vector3::new(y[0], y[1], y[2]), &cfg.plant)
}

fn check_scuff(cfg: &SimConfig, min_clear: f64) -> Result<()> {
    if cfg.strict_scuff && min_clear < -cfg.scuff_tol {
        return Err(Error::Scuffing {
            depth: -min_clear,
            tol: cfg.scuff_tol,
        });
    }
    Ok(())
}

/// Root of `q1 − q1_ref` inside an accepted step: bracketing on the dense
/// output, then Newton iterations on freshly integrated single steps from
/// the step start. `None` if the polished crossing is not rising.
fn locate_event(
    st: &DenseStep<8>,
    cfg: &SimConfig,
    q1_ref: f64,
) -> Result<Option<(f64, HybridVector)>> {
    let g = |t: f64| st.interpolate(t)[0] - q1_ref;
    let (mut a, mut b) = (st.t0, st.t1);
    let (mut ga, mut gb) = (g(a), g(b));
    // Illinois variant of regula falsi
    let mut side = 0i8;
    for _ in 0..200 {
        if (b - a).abs() <= 4.0 * f64::EPSILON * b.abs().max(1.0) {
            break;
        }
        let c = (a * gb - b * ga) / (gb - ga);
        let gc = g(c);
        if gc == 0.0 {
            a = c;
            b = c;
            break;
        }
        if (gc < 0.0) == (ga < 0.0) {
            a = c;
            ga = gc;
            if side == -1 {
                gb *= 0.5;
            }
            side = -1;
        } else {
            b = c;
            gb = gc;
            if side == 1 {
                ga *= 0.5;
            }
            side = 1;
        }
        if gc.abs() < 1e-15 {
            break;
        }
    }
    let mut t_ev = if ga.abs() < gb.abs() { a } else { b };

    let rhs = |_t: f64, y: &HybridVector| closed_loop_rhs(cfg, y);
    let mut restart = Dopri5::new(rhs, st.t0, st.y0, cfg.tolerances)?;
    let mut y_ev = restart.probe(t_ev - st.t0)?;
    for _ in 0..20 {
        let e = y_ev[0] - q1_ref;
        if e.abs() <= 1e-13 {
            break;
        }
        if y_ev[3] <= 0.0 {
            break;
        }
        t_ev -= e / y_ev[3];
        y_ev = restart.probe(t_ev - st.t0)?;
    }
    if y_ev[3] <= 0.0 {
        return Ok(None);
    }
    if (y_ev[0] - q1_ref).abs() > EVENT_TOL {
        return Err(Error::NoConvergence {
            iterations: 20,
            last_distance: (y_ev[0] - q1_ref).abs(),
        });
    }
    Ok(Some((t_ev, y_ev)))
}

/// Output of [`step`]: the record plus the swing samples on the global clock.
#[derive(Debug, Clone, PartialEq)]
pub struct StepResult {
    pub record: StepRecord,
    pub trajectory: Trajectory,
}

/// Impact at `x_pre`, then one swing phase.
pub fn step(
    x_pre: &SwingState,
    integral: &Vector2<f64>,
    cfg: &SimConfig,
    step_index: usize,
    t_start: f64,
) -> StepResult {
    let mut record = StepRecord {
        step_index,
        t_start,
        t_end: t_start,
        step_time: 0.0,
        x_pre_impact: *x_pre,
        x_post_impact: *x_pre,
        impulse: Vector2::zeros(),
        x_event: None,
        integral_at_event: None,
        z_delta_at_impact: None,
        z_delta_hit: false,
        foot_height_at_event: None,
        min_foot_clearance: f64::NAN,
        min_abs_det_b_e: f64::NAN,
        abort: None,
    };
    let imp = match impact::reset_map(x_pre, &cfg.plant) {
        Ok(imp) => imp,
        Err(e) => {
            record.abort = Some(Abort::from(&e));
            return StepResult {
                record,
                trajectory: Trajectory::default(),
            };
        }
    };
    record.x_post_impact = imp.x_plus;
    record.impulse = imp.impulse;
    let integral = cfg.controller.integral_after_impact(integral);

    match integrate_swing_indexed(&imp.x_plus, &integral, cfg, step_index) {
        Ok(arc) => {
            let z = cfg
                .controller
                .control(&arc.event, &arc.integral)
                .map(|o| o.z_delta)
                .unwrap_or(f64::NAN);
            record.t_end = t_start + arc.duration;
            record.step_time = arc.duration;
            record.x_event = Some(arc.event);
            record.integral_at_event = Some(arc.integral);
            record.z_delta_at_impact = Some(z);
            record.z_delta_hit = z <= cfg.delta;
            record.foot_height_at_event = Some(impact::swing_foot_height(&arc.event.q, &cfg.plant));
            record.min_foot_clearance = arc.min_foot_clearance;
            record.min_abs_det_b_e = arc.min_abs_det_b_e;
            let mut trajectory = arc.trajectory;
            for s in &mut trajectory.samples {
                s.t += t_start;
            }
            StepResult { record, trajectory }
        }
        Err(e) => {
            record.abort = Some(Abort::from(&e));
            StepResult {
                record,
                trajectory: Trajectory::default(),
            }
        }
    }
}

/// Outcome of a multi-step walk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaitSummary {
    pub steps: Vec<StepRecord>,
    pub step_times: Vec<f64>,
    /// Pre-impact states `x_k⁻`, starting with the initial condition.
    pub pre_impact: Vec<SwingState>,
    /// `‖x_{k+1}⁻ − x_k⁻‖` for consecutive pre-impact states.
    pub distances: Vec<f64>,
    /// Median ratio of consecutive distances.
    pub contraction: Option<f64>,
    pub orbit: Option<SwingState>,
    pub aborted: Option<Abort>,
    #[serde(skip)]
    pub trajectory: Trajectory,
}

impl GaitSummary {
    pub fn from_steps(x0: SwingState, steps: Vec<StepRecord>, trajectory: Trajectory) -> Self {
        let mut pre_impact = vec![x0];
        pre_impact.extend(steps.iter().filter_map(|s| s.x_event));
        let step_times = steps
            .iter()
            .filter(|s| s.completed())
            .map(|s| s.step_time)
            .collect();
        let distances: Vec<f64> = pre_impact
            .windows(2)
            .map(|w| w[1].distance(&w[0]))
            .collect();
        let aborted = steps.iter().find_map(|s| s.abort.clone());
        Self {
            contraction: median_ratio(&distances),
            steps,
            step_times,
            pre_impact,
            distances,
            orbit: None,
            aborted,
            trajectory,
        }
    }

    pub fn completed_steps(&self) -> usize {
        self.steps.iter().filter(|s| s.completed()).count()
    }

    /// Largest Z_δ distance over completed steps from index `from` on.
    pub fn worst_z_delta_from(&self, from: usize) -> Option<f64> {
        self.steps
            .iter()
            .skip(from)
            .filter_map(|s| s.z_delta_at_impact)
            .fold(None, |acc, z| Some(acc.map_or(z, |a: f64| a.max(z))))
    }

    /// Range of the last `n` step times.
    pub fn step_time_spread(&self, n: usize) -> Option<f64> {
        spread(self.step_times.iter().rev().take(n))
    }
}

fn spread<'a>(it: impl Iterator<Item = &'a f64>) -> Option<f64> {
    let v: Vec<f64> = it.copied().collect();
    if v.is_empty() {
        return None;
    }
    let max = v.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
    let min = v.iter().fold(f64::INFINITY, |a, &b| a.min(b));
    Some(max - min)
}

pub(crate) fn median_ratio(distances: &[f64]) -> Option<f64> {
    let mut ratios: Vec<f64> = distances
        .windows(2)
        .filter(|w| w[0] > 0.0)
        .map(|w| w[1] / w[0])
        .collect();
    if ratios.is_empty() {
        return None;
    }
    ratios.sort_by(f64::total_cmp);
    let n = ratios.len();
    Some(if n % 2 == 1 {
        ratios[n / 2]
    } else {
        0.5 * (ratios[n / 2 - 1] + ratios[n / 2])
    })
}

/// Walks `cfg.n_steps` steps from the pre-impact state `x_pre0`, stopping at
/// the first abort.
pub fn run_gait(x_pre0: &SwingState, cfg: &SimConfig) -> GaitSummary {
    let mut steps = Vec::with_capacity(cfg.n_steps);
    let mut trajectory = Trajectory::default();
    let mut x = *x_pre0;
    let mut integral = cfg.controller.integral;
    let mut t = 0.0;
    for k in 0..cfg.n_steps {
        let res = step(&x, &integral, cfg, k, t);
        for s in res.trajectory.samples {
            trajectory.push(s);
        }
        let rec = res.record;
        let next = rec.x_event.zip(rec.integral_at_event);
        t = rec.t_end;
        steps.push(rec);
        match next {
            Some((xe, ie)) => {
                x = xe;
                integral = ie;
            }
            None => break,
        }
    }
    GaitSummary::from_steps(*x_pre0, steps, trajectory)
}
