//! Feedback regularization plus geometric PID on the output space.
//!
//! The regularizing control
//!
//! ```text
//! τ_u^e = τ̃ + τ_e + τ_g^e − I_e Γ_e ω_e
//! ```
//!
//! turns the output equation into `I_e (ω̇_e + Γ_e ω_e) = τ̃ + τ_d`, a simple
//! mechanical system on the error torus. `τ̃` is the PID term and the integral
//! state obeys `ω̇_I = e − Γ_e ω_I`, i.e. it is parallel-transported by the
//! metric connection of `I_e`.
//!
//! Every function here reads only the controller's own model and assumed
//! incline, never the plant.

use nalgebra::{Matrix2, Vector2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Incline, RobotParams, SwingState};
use crate::reduced::{self, GaitTargets, ReducedState};

pub const DEFAULT_DET_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ControllerGains {
    pub kp: f64,
    pub kd: f64,
    pub ki: f64,
}

impl ControllerGains {
    pub const NOMINAL: ControllerGains = ControllerGains {
        kp: 1500.0,
        kd: 1250.0,
        ki: 120.0,
    };

    pub fn validate(&self) -> Result<()> {
        let bad = |name, reason: &str| Error::InvalidParameter {
            name,
            reason: reason.into(),
        };
        if !(self.kp.is_finite() && self.kp > 0.0) {
            return Err(bad("kp", "must be finite and positive"));
        }
        if !(self.kd.is_finite() && self.kd > 0.0) {
            return Err(bad("kd", "must be finite and positive"));
        }
        if !(self.ki.is_finite() && self.ki >= 0.0) {
            return Err(bad("ki", "must be finite and non-negative"));
        }
        Ok(())
    }
}

impl Default for ControllerGains {
    fn default() -> Self {
        Self::NOMINAL
    }
}

/// Error signal `e` driving the proportional and integral terms.
///
/// `Gradient` uses `e = η_e = I_e⁻¹ sin(q_e)`, so `I_e e = sin(q_e)` and the
/// proportional torque is `−k_p sin(q_e)`. `Sine` uses `e = sin(q_e)` and a
/// proportional torque `−k_p I_e sin(q_e)`, which scales the stiffness with
/// the output inertia like the derivative term.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ErrorSignal {
    Gradient,
    #[default]
    Sine,
}

impl ErrorSignal {
    pub fn as_str(self) -> &'static str {
        match self {
            ErrorSignal::Gradient => "gradient",
            ErrorSignal::Sine => "sine",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ControllerState {
    /// Covariant integrator state `ω_I`.
    pub integral: Vector2<f64>,
    pub gains: ControllerGains,
    /// Parameters the controller believes the robot has.
    pub model: RobotParams,
    pub incline_assumed: Incline,
    pub targets: GaitTargets,
    pub error_signal: ErrorSignal,
    /// Zero `ω_I` at every impact instead of carrying it over.
    pub reset_integral_on_impact: bool,
    pub det_floor: f64,
}

impl ControllerState {
    pub fn new(model: RobotParams, incline_assumed: Incline, targets: GaitTargets) -> Self {
        Self {
            integral: Vector2::zeros(),
            gains: ControllerGains::NOMINAL,
            model,
            incline_assumed,
            targets,
            error_signal: ErrorSignal::default(),
            reset_integral_on_impact: false,
            det_floor: DEFAULT_DET_FLOOR,
        }
    }

    /// Full control law at plant state `x` with integrator state `integral`.
    pub fn control(&self, x: &SwingState, integral: &Vector2<f64>) -> Result<ControlOutput> {
        let rs = reduced::to_reduced(x, &self.targets);
        let eta = error_potential_gradient(&rs, &self.model);
        let signal = self.error_value(&rs);
        let (ie, _) = reduced::reduced_inertias(&rs, &self.model);
        let g = &self.gains;
        let tau_tilde =
            -(ie * (g.kd * rs.omega_e + g.ki * integral)) - g.kp * self.proportional(&rs);
        let tau_u_e = regularize(&rs, &self.model, self.incline_assumed, &tau_tilde);
        let (u, det_b_e) = allocate_checked(&tau_u_e, &rs, &self.model, self.det_floor)?;
        let gamma = connection_matrix_e(&rs, &self.model);
        Ok(ControlOutput {
            u,
            eta,
            tau_tilde,
            tau_u_e,
            integral_rate: signal - gamma * integral,
            det_b_e,
            z_delta: z_delta(&rs, &self.model),
        })
    }

    fn error_value(&self, rs: &ReducedState) -> Vector2<f64> {
        match self.error_signal {
            ErrorSignal::Gradient => error_potential_gradient(rs, &self.model),
            ErrorSignal::Sine => rs.q_e.map(f64::sin),
        }
    }

    /// `I_e e`, the proportional direction before the gain.
    fn proportional(&self, rs: &ReducedState) -> Vector2<f64> {
        match self.error_signal {
            ErrorSignal::Gradient => rs.q_e.map(f64::sin),
            ErrorSignal::Sine => {
                let (ie, _) = reduced::reduced_inertias(rs, &self.model);
                ie * rs.q_e.map(f64::sin)
            }
        }
    }

    /// Applies the impact policy to the integrator.
    pub fn integral_after_impact(&self, integral: &Vector2<f64>) -> Vector2<f64> {
        if self.reset_integral_on_impact {
            Vector2::zeros()
        } else {
            *integral
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ControlOutput {
    pub u: Vector2<f64>,
    pub eta: Vector2<f64>,
    pub tau_tilde: Vector2<f64>,
    pub tau_u_e: Vector2<f64>,
    pub integral_rate: Vector2<f64>,
    pub det_b_e: f64,
    pub z_delta: f64,
}

/// `η_e = I_e⁻¹ (sin(q3 − q3_ref), sin(q1 + q2))`.
pub fn error_potential_gradient(rs: &ReducedState, model: &RobotParams) -> Vector2<f64> {
    let (ie, _) = reduced::reduced_inertias(rs, model);
    let s = rs.q_e.map(f64::sin);
    Vector2::new(s[0] / ie[(0, 0)], s[1] / ie[(1, 1)])
}

/// Distance `√(‖η_e‖² + ‖q̇_e‖²)` from the zero-dynamics manifold.
pub fn z_delta(rs: &ReducedState, model: &RobotParams) -> f64 {
    let eta = error_potential_gradient(rs, model);
    (eta.norm_squared() + rs.omega_e.norm_squared()).sqrt()
}

/// Connection matrix `Γ_e(q_s, ω_s)` of the output inertia.
pub fn connection_matrix_e(rs: &ReducedState, model: &RobotParams) -> Matrix2<f64> {
    let (ie, _) = reduced::reduced_inertias(rs, model);
    let m = model.leg_mass;
    let mt = model.torso_mass;
    let r2 = model.leg_length * model.leg_length;
    let l2 = model.torso_length * model.torso_length;
    let (sa, sb) = (rs.alpha.sin(), rs.beta.sin());
    let (da, db) = (rs.omega_s[0], rs.omega_s[1]);
    let bracket = Matrix2::new(
        mt * l2 * sa * da + m * l2 * sb * db,
        m * l2 * sb * da - mt * r2 * sa * db,
        -m * l2 * sb * da + mt * r2 * sa * db,
        mt * r2 * sa * da + m * r2 * sb * db,
    );
    Matrix2::new(
        bracket[(0, 0)] / ie[(0, 0)],
        bracket[(0, 1)] / ie[(0, 0)],
        bracket[(1, 0)] / ie[(1, 1)],
        bracket[(1, 1)] / ie[(1, 1)],
    )
}

/// Regularizing control `τ_u^e = τ̃ + τ_e + τ_g^e − I_e Γ_e ω_e`.
pub fn regularize(
    rs: &ReducedState,
    model: &RobotParams,
    incline_assumed: Incline,
    tau_tilde: &Vector2<f64>,
) -> Vector2<f64> {
    let f = reduced::reduced_forces(rs, model, incline_assumed);
    let (ie, _) = reduced::reduced_inertias(rs, model);
    let gamma = connection_matrix_e(rs, model);
    tau_tilde + f.tau_e + f.tau_g_e - ie * gamma * rs.omega_e
}

/// PID term `τ̃` with the integral state held in `cs`.
pub fn pid_torque(rs: &ReducedState, cs: &ControllerState) -> Vector2<f64> {
    let (ie, _) = reduced::reduced_inertias(rs, &cs.model);
    let g = &cs.gains;
    -(ie * (g.kd * rs.omega_e + g.ki * cs.integral)) - g.kp * cs.proportional(rs)
}

/// `ω̇_I = e − Γ_e ω_I` with the integral state held in `cs`.
pub fn integrator_rate(rs: &ReducedState, cs: &ControllerState) -> Vector2<f64> {
    cs.error_value(rs) - connection_matrix_e(rs, &cs.model) * cs.integral
}

/// `u = B_e⁻¹ τ_u^e`.
pub fn allocate(
    tau_u_e: &Vector2<f64>,
    rs: &ReducedState,
    model: &RobotParams,
    det_floor: f64,
) -> Result<Vector2<f64>> {
    allocate_checked(tau_u_e, rs, model, det_floor).map(|(u, _)| u)
}

fn allocate_checked(
    tau_u_e: &Vector2<f64>,
    rs: &ReducedState,
    model: &RobotParams,
    det_floor: f64,
) -> Result<(Vector2<f64>, f64)> {
    let (be, _) = reduced::input_matrix_e(rs, model);
    let det = be.determinant();
    if det.is_nan() || det.abs() <= det_floor {
        return Err(Error::ActuationSingularity {
            det,
            floor: det_floor,
        });
    }
    let u = Vector2::new(
        be[(1, 1)] * tau_u_e[0] - be[(0, 1)] * tau_u_e[1],
        -be[(1, 0)] * tau_u_e[0] + be[(0, 0)] * tau_u_e[1],
    ) / det;
    Ok((u, det))
}

/// `sin(q3_ref − λ)/sin λ − (M_T + M_H + m) r / (M_T l)`; non-negative when a
/// static posture exists. `+∞` on flat ground.
pub fn static_stability(p: &RobotParams, incline: Incline, torso_ref: f64) -> f64 {
    let lam = incline.radians();
    if lam == 0.0 {
        return f64::INFINITY;
    }
    (torso_ref - lam).sin() / lam.sin()
        - (p.torso_mass + p.hip_mass + p.leg_mass) * p.leg_length / (p.torso_mass * p.torso_length)
}

/// Steepest incline admitting a static posture, `asin(M_T l / ((M_T + M_H + m) r))`.
/// `None` when the ratio exceeds one.
pub fn max_static_incline(p: &RobotParams) -> Option<f64> {
    let ratio =
        p.torso_mass * p.torso_length / ((p.torso_mass + p.hip_mass + p.leg_mass) * p.leg_length);
    (ratio <= 1.0).then(|| ratio.asin())
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::Vector3;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    const P: RobotParams = RobotParams::NOMINAL;

    fn rs_at(q: [f64; 3], dq: [f64; 3]) -> ReducedState {
        reduced::to_reduced(
            &SwingState::new(Vector3::from(q), Vector3::from(dq)),
            &GaitTargets::nominal(),
        )
    }

    fn state(lam_deg: f64) -> ControllerState {
        ControllerState::new(
            P,
            Incline::from_degrees(lam_deg).unwrap(),
            GaitTargets::nominal(),
        )
    }

    #[test]
    fn gradient_at_zero_shape() {
        let t = GaitTargets::nominal();
        // α = β = 0 with q_e = (0.1, 0.1): q1 = q2 = q3 = 0.05, q3_ref shifted
        let t = GaitTargets {
            torso_ref: 0.05 - 0.1,
            ..t
        };
        let x = SwingState::new(Vector3::new(0.05, 0.05, 0.05), Vector3::zeros());
        let rs = reduced::to_reduced(&x, &t);
        assert!((rs.q_e - Vector2::new(0.1, 0.1)).norm() < 1e-15);
        let eta = error_potential_gradient(&rs, &P);
        assert!((eta[0] - 0.1f64.sin() / 2.8125).abs() < 1e-15);
        assert!((eta[1] - 0.1f64.sin() / 5.0).abs() < 1e-15);
        assert!((eta[0] - 0.0355).abs() < 1e-4 && (eta[1] - 0.0200).abs() < 1e-4);
    }

    #[test]
    fn gradient_vanishes_on_targets() {
        let t = GaitTargets::nominal();
        let rs = rs_at([0.3, -0.3, t.torso_ref], [1.0, 2.0, 3.0]);
        assert_eq!(error_potential_gradient(&rs, &P), Vector2::zeros());
    }

    #[test]
    fn connection_is_linear_in_shape_rate() {
        let rs0 = rs_at([0.2, -0.1, 1.7], [0.0, 0.0, 0.0]);
        assert_eq!(connection_matrix_e(&rs0, &P), Matrix2::zeros());
        let a = rs_at([0.2, -0.1, 1.7], [1.0, -0.5, 0.3]);
        let b = rs_at([0.2, -0.1, 1.7], [2.0, -1.0, 0.6]);
        assert!((connection_matrix_e(&b, &P) - 2.0 * connection_matrix_e(&a, &P)).amax() < 1e-14);
    }

    #[test]
    fn connection_bracket_pattern() {
        let rs = rs_at([0.2, -0.1, 1.7], [1.0, -0.5, 0.3]);
        let (ie, _) = reduced::reduced_inertias(&rs, &P);
        let b = ie * connection_matrix_e(&rs, &P);
        let (l2, r2) = (0.5625, 1.0);
        let (sa, sb) = (rs.alpha.sin(), rs.beta.sin());
        let (da, db) = (rs.omega_s[0], rs.omega_s[1]);
        // off-diagonals: m l² sinβ α̇ − M_T r² sinα β̇ and its negative in l², r² swapped roles
        assert!((b[(0, 1)] - (l2 * sb * da - 3.0 * r2 * sa * db)).abs() < 1e-12);
        assert!((b[(1, 0)] - (-l2 * sb * da + 3.0 * r2 * sa * db)).abs() < 1e-12);
        assert!((b[(0, 1)] + b[(1, 0)]).abs() < 1e-12);
    }

    #[test]
    fn metric_compatibility() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let h = 1e-6;
        for _ in 0..200 {
            let q: [f64; 3] = std::array::from_fn(|_| rng.random_range(-1.5..1.5));
            let dq: [f64; 3] = std::array::from_fn(|_| rng.random_range(-3.0..3.0));
            let rs = rs_at(q, dq);
            let ie_at = |s: f64| {
                reduced::shape_inertias(
                    rs.alpha + s * rs.omega_s[0],
                    rs.beta + s * rs.omega_s[1],
                    &P,
                )
                .0
            };
            let ie_dot = (ie_at(h) - ie_at(-h)) / (2.0 * h);
            let (ie, _) = reduced::reduced_inertias(&rs, &P);
            let w = ie * connection_matrix_e(&rs, &P);
            assert!((ie_dot - w - w.transpose()).amax() < 1e-6);
            let v = Vector2::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
            let skew = v.dot(&((ie_dot - 2.0 * w) * v));
            assert!(skew.abs() <= 1e-6 * v.norm_squared());
        }
    }

    #[test]
    fn regularize_reduces_to_gravity_at_rest() {
        let rs = rs_at([0.2, -0.1, 1.7], [0.0; 3]);
        let lam = Incline::from_degrees(25.0).unwrap();
        let tau = regularize(&rs, &P, lam, &Vector2::zeros());
        let f = reduced::reduced_forces(&rs, &P, lam);
        assert_eq!(tau, f.tau_g_e);
    }

    #[test]
    fn pid_cancels_inertia_in_proportional_term() {
        let mut cs = state(25.0);
        cs.error_signal = ErrorSignal::Gradient;
        cs.gains.ki = 0.0;
        let rs = rs_at([0.3, -0.1, 1.7], [0.0; 3]);
        let tau = pid_torque(&rs, &cs);
        let expected = -1500.0 * rs.q_e.map(f64::sin);
        assert!((tau - expected).norm() < 1e-10);
        let rs0 = rs_at([0.3, -0.3, GaitTargets::nominal().torso_ref], [0.0; 3]);
        assert_eq!(pid_torque(&rs0, &state(25.0)), Vector2::zeros());
    }

    #[test]
    fn sine_signal_scales_stiffness_by_output_inertia() {
        let mut cs = state(25.0);
        cs.gains.ki = 0.0;
        let rs = rs_at([0.3, -0.1, 1.7], [0.0; 3]);
        let (ie, _) = reduced::reduced_inertias(&rs, &P);
        let expected = -1500.0 * (ie * rs.q_e.map(f64::sin));
        assert!((pid_torque(&rs, &cs) - expected).norm() < 1e-9);
    }

    #[test]
    fn integrator_rate_cases() {
        let mut cs = state(25.0);
        cs.error_signal = ErrorSignal::Gradient;
        let rs = rs_at(
            [0.3, -0.3, GaitTargets::nominal().torso_ref],
            [1.0, -1.0, 0.0],
        );
        assert_eq!(integrator_rate(&rs, &cs), Vector2::zeros());
        let rs = rs_at([0.3, -0.1, 1.7], [0.5, 0.5, 0.5]);
        cs.integral = Vector2::new(0.3, -0.2);
        // ω_s = 0 when all rates are equal
        assert_eq!(integrator_rate(&rs, &cs), error_potential_gradient(&rs, &P));
        cs.error_signal = ErrorSignal::Sine;
        assert_eq!(integrator_rate(&rs, &cs), rs.q_e.map(f64::sin));
    }

    #[test]
    fn allocation_inverts_input_matrix() {
        let rs = rs_at([0.26, -0.26, 1.83], [1.1, -1.1, 0.0]);
        assert_eq!(
            allocate(&Vector2::zeros(), &rs, &P, DEFAULT_DET_FLOOR).unwrap(),
            Vector2::zeros()
        );
        let tau = Vector2::new(12.0, -40.0);
        let u = allocate(&tau, &rs, &P, DEFAULT_DET_FLOOR).unwrap();
        let (be, _) = reduced::input_matrix_e(&rs, &P);
        assert!((be * u - tau).norm() < 1e-10);
        assert!(matches!(
            allocate(&tau, &rs, &P, 1e12),
            Err(Error::ActuationSingularity { .. })
        ));
    }

    #[test]
    fn hold_torque_is_gravity_compensation() {
        let cs = state(25.0);
        let t = cs.targets;
        let x = SwingState::new(Vector3::new(0.2, -0.2, t.torso_ref), Vector3::zeros());
        let out = cs.control(&x, &Vector2::zeros()).unwrap();
        let rs = reduced::to_reduced(&x, &t);
        let f = reduced::reduced_forces(&rs, &P, cs.incline_assumed);
        let (be, _) = reduced::input_matrix_e(&rs, &P);
        assert!((be * out.u - f.tau_g_e).norm() < 1e-10);
    }

    #[test]
    fn static_stability_values() {
        let lam = Incline::from_degrees(25.0).unwrap();
        let rhs = 5.0 / (3.0 * 0.75);
        let margin = static_stability(&P, lam, 105f64.to_radians());
        let lhs = 80f64.to_radians().sin() / 25f64.to_radians().sin();
        assert!((margin - (lhs - rhs)).abs() < 1e-12);
        assert!(margin >= 0.0);
        assert_eq!(static_stability(&P, Incline::FLAT, 1.0), f64::INFINITY);
        let lmax = max_static_incline(&P).unwrap().to_degrees();
        assert!((lmax - 0.45f64.asin().to_degrees()).abs() < 1e-12);
        assert!((lmax - 26.7).abs() < 0.1);
    }

    #[test]
    fn gains_validation() {
        assert!(ControllerGains::NOMINAL.validate().is_ok());
        let pd = ControllerGains {
            ki: 0.0,
            ..ControllerGains::NOMINAL
        };
        assert!(pd.validate().is_ok());
        let bad = ControllerGains {
            kd: 0.0,
            ..ControllerGains::NOMINAL
        };
        assert!(bad.validate().is_err());
    }
}
