//! Output, shape and zero coordinates and the decoupled model
//!
//! ```text
//! I_e ω̇_e + τ_e + τ_g^e = B_e u
//! I_z ω̇_1 + τ_z + τ_g^z = b_z u
//! ```
//!
//! Outputs are ordered `q_e = (q3 − q3_ref, q1 + q2)`; shape angles are
//! `α = 2(q1 − q3)` and `β = 2(q1 − q2)`. The decoupled model is the full
//! model premultiplied by `diag(I_e, I_z) T⁻¹ I(q)⁻¹`, where `T` maps
//! `(ω_e, ω_1)` to `q̇`.
//!
//! The velocity and gravity terms below are the forms certified by
//! [`consistency_check`]; the [`printed`] module keeps a literal
//! transcription of the published expressions for comparison.

use nalgebra::{Matrix2, Matrix3, RowVector2, Vector2, Vector3};
use serde::{Deserialize, Serialize};

use crate::dynamics;
use crate::model::{Incline, RobotParams, SwingState};

/// Virtual-constraint targets.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaitTargets {
    /// Desired torso angle `q3_ref` (rad).
    pub torso_ref: f64,
    /// Stance angle `q1_ref` that triggers the impact (rad).
    pub switch_angle: f64,
}

impl GaitTargets {
    /// q3_ref = 105°, q1_ref = 15°.
    pub fn nominal() -> Self {
        Self {
            torso_ref: 105f64.to_radians(),
            switch_angle: 15f64.to_radians(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReducedState {
    pub q_e: Vector2<f64>,
    pub omega_e: Vector2<f64>,
    pub q1: f64,
    pub omega1: f64,
    pub alpha: f64,
    pub beta: f64,
    /// `(α̇, β̇)`.
    pub omega_s: Vector2<f64>,
}

pub fn to_reduced(x: &SwingState, t: &GaitTargets) -> ReducedState {
    let (q, dq) = (&x.q, &x.dq);
    ReducedState {
        q_e: Vector2::new(q[2] - t.torso_ref, q[0] + q[1]),
        omega_e: Vector2::new(dq[2], dq[0] + dq[1]),
        q1: q[0],
        omega1: dq[0],
        alpha: 2.0 * (q[0] - q[2]),
        beta: 2.0 * (q[0] - q[1]),
        omega_s: Vector2::new(2.0 * (dq[0] - dq[2]), 2.0 * (dq[0] - dq[1])),
    }
}

pub fn from_reduced(rs: &ReducedState, t: &GaitTargets) -> SwingState {
    SwingState::new(
        Vector3::new(rs.q1, rs.q_e[1] - rs.q1, rs.q_e[0] + t.torso_ref),
        Vector3::new(rs.omega1, rs.omega_e[1] - rs.omega1, rs.omega_e[0]),
    )
}

/// `T`: columns map `(ω_e1, ω_e2, ω_1)` to `q̇`.
pub fn velocity_map() -> Matrix3<f64> {
    Matrix3::new(
        0.0, 0.0, 1.0, //
        0.0, 1.0, -1.0, //
        1.0, 0.0, 0.0,
    )
}

/// `T⁻¹`: maps `q̇` to `(ω_e1, ω_e2, ω_1)`.
pub fn velocity_map_inverse() -> Matrix3<f64> {
    Matrix3::new(
        0.0, 0.0, 1.0, //
        1.0, 1.0, 0.0, //
        1.0, 0.0, 0.0,
    )
}

/// Common shape factor `4M_H + 2M_T(1 − cos α) + m(3 − 2cos β)`.
pub fn shape_factor(alpha: f64, beta: f64, p: &RobotParams) -> f64 {
    4.0 * p.hip_mass
        + 2.0 * p.torso_mass * (1.0 - alpha.cos())
        + p.leg_mass * (3.0 - 2.0 * beta.cos())
}

/// `(I_e, I_z)` at the given shape.
pub fn shape_inertias(alpha: f64, beta: f64, p: &RobotParams) -> (Matrix2<f64>, f64) {
    let k = shape_factor(alpha, beta, p);
    let r2 = p.leg_length * p.leg_length;
    let l2 = p.torso_length * p.torso_length;
    (
        Matrix2::from_diagonal(&Vector2::new(l2 * k, r2 * k)),
        r2 * k / 4.0,
    )
}

pub fn reduced_inertias(rs: &ReducedState, p: &RobotParams) -> (Matrix2<f64>, f64) {
    shape_inertias(rs.alpha, rs.beta, p)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReducedForces {
    pub tau_e: Vector2<f64>,
    pub tau_z: f64,
    pub tau_g_e: Vector2<f64>,
    pub tau_g_z: f64,
}

pub fn reduced_forces(rs: &ReducedState, p: &RobotParams, incline: Incline) -> ReducedForces {
    let (tau_e, tau_z) = velocity_forces(rs, p);
    let (tau_g_e, tau_g_z) = gravity_forces(rs, p, incline);
    ReducedForces {
        tau_e,
        tau_z,
        tau_g_e,
        tau_g_z,
    }
}

fn velocity_forces(rs: &ReducedState, p: &RobotParams) -> (Vector2<f64>, f64) {
    let RobotParams {
        leg_mass: m,
        hip_mass: mh,
        torso_mass: mt,
        leg_length: r,
        torso_length: l,
        ..
    } = *p;
    let (a, b) = (rs.alpha, rs.beta);
    let (e1, e2, w1) = (rs.omega_e[0], rs.omega_e[1], rs.omega1);
    let s = f64::sin;
    let (sa2, sb2) = (s(a / 2.0), s(b / 2.0));
    let (samb, sapb) = (s((a - b) / 2.0), s((a + b) / 2.0));

    let t1 = -2.0 * mt * l * l * e1 * e1 * s(a)
        + w1 * w1
            * l
            * r
            * (-(4.0 * mh + 4.0 * mt + 3.0 * m) * sa2 + 2.0 * m * s(a / 2.0 - b) - m * samb
                + m * sapb)
        + 2.0 * l * m * r * w1 * e2 * (samb - sapb)
        + l * m * r * e2 * e2 * (sapb - samb);

    let t2 = w1
        * w1
        * r
        * r
        * (8.0 * mh * sb2
            + 2.0 * mt * s(a)
            + 4.0 * mt * sb2
            + 4.0 * mt * s(a - b / 2.0)
            + 8.0 * m * sb2)
        + 4.0 * m * r * r * w1 * e2 * (sb2 + s(b))
        + 4.0 * mt * l * r * e1 * e1 * (sa2 + samb + sapb)
        - 2.0 * m * r * r * e2 * e2 * (sb2 + s(b));

    let tz = mt * l * r * e1 * e1 * sa2 + m * r * r * w1 * e2 * sb2
        - m * r * r / 2.0 * e2 * e2 * sb2
        + w1 * w1 * r * r / 2.0 * (mt * s(a) - m * sb2 + m * s(b));

    (Vector2::new(t1, t2), tz)
}

fn gravity_forces(rs: &ReducedState, p: &RobotParams, incline: Incline) -> (Vector2<f64>, f64) {
    let RobotParams {
        leg_mass: m,
        hip_mass: mh,
        torso_mass: mt,
        leg_length: r,
        torso_length: l,
        gravity: g,
    } = *p;
    let (a, b) = (rs.alpha, rs.beta);
    let s = f64::sin;
    // angles relative to the slope normal
    let x = rs.q1 - incline.radians();

    let ge1 = g
        * l
        * (2.0 * (mh + mt + m) * s(a / 2.0 + x) + (2.0 * mh + 2.0 * mt + m) * s(a / 2.0 - x)
            - m * s(a / 2.0 - b + x)
            - m * s(a / 2.0 - b - x));

    let ge2 = g
        * r
        * (-(4.0 * mh + 2.0 * mt + 4.0 * m) * s(x)
            - 2.0 * mt * s(a - x)
            - (4.0 * mh + 2.0 * mt + 6.0 * m) * s(b / 2.0 + x)
            - (4.0 * mh + 2.0 * mt + 4.0 * m) * s(b / 2.0 - x)
            - 2.0 * mt * s(a - b / 2.0 + x)
            - 2.0 * mt * s(a - b / 2.0 - x)
            - 2.0 * m * s(b - x));

    let gz = -g * r / 2.0 * ((2.0 * mh + mt + 2.0 * m) * s(x) + mt * s(a - x) + m * s(b - x));

    (Vector2::new(ge1, ge2), gz)
}

/// `(B_e, b_z)` such that `τ_u^e = B_e u` and `τ_u^z = b_z u`.
pub fn input_matrix_e(rs: &ReducedState, p: &RobotParams) -> (Matrix2<f64>, RowVector2<f64>) {
    shape_input_matrix(rs.alpha, rs.beta, p)
}

pub fn shape_input_matrix(
    alpha: f64,
    beta: f64,
    p: &RobotParams,
) -> (Matrix2<f64>, RowVector2<f64>) {
    let RobotParams {
        leg_mass: m,
        hip_mass: mh,
        torso_mass: mt,
        leg_length: r,
        torso_length: l,
        ..
    } = *p;
    let c = f64::cos;
    let (ca2, cb2) = (c(alpha / 2.0), c(beta / 2.0));
    let (camb, capb) = (c((alpha - beta) / 2.0), c((alpha + beta) / 2.0));
    let lead = (4.0 * mh + 3.0 * m - 2.0 * m * c(beta)) / mt;
    let b11 = lead + 4.0 * (r + l * ca2) / r;
    let b12 = lead + 4.0 * (r + l * camb + l * capb) / r;
    let b21 = -4.0 * (l + r * ca2) * (2.0 * cb2 + 1.0) / l;
    let b22 = -4.0 * (4.0 * mh + 2.0 * mt + 5.0 * m - 2.0 * mt * c(alpha) + 2.0 * m * cb2) / m
        - 4.0 * (r * ca2 + r * camb + r * capb) / l;
    let bz = RowVector2::new(-r / l * ca2 - 1.0, -2.0 * cb2 - r / l * ca2);
    (Matrix2::new(b11, b12, b21, b22), bz)
}

/// Residual of the decoupled model against the full model.
///
/// Integrates nothing: evaluates `q̈` from the full equations, maps it to
/// `(ω̇_e, ω̇_1)` and returns the largest absolute residual of the two
/// decoupled equations, each divided by `max(1, |τ_u|)`.
pub fn consistency_check(
    x: &SwingState,
    u: &Vector2<f64>,
    p: &RobotParams,
    incline: Incline,
    t: &GaitTargets,
) -> f64 {
    let Ok(ddq) = dynamics::swing_accel(x, u, p, incline) else {
        return f64::INFINITY;
    };
    residual_with_forces(x, &ddq, u, p, incline, t, |rs| {
        reduced_forces(rs, p, incline)
    })
}

pub(crate) fn residual_with_forces(
    x: &SwingState,
    ddq: &Vector3<f64>,
    u: &Vector2<f64>,
    p: &RobotParams,
    _incline: Incline,
    t: &GaitTargets,
    forces: impl Fn(&ReducedState) -> ReducedForces,
) -> f64 {
    let rs = to_reduced(x, t);
    let acc = velocity_map_inverse() * ddq;
    let (ie, iz) = reduced_inertias(&rs, p);
    let (be, bz) = input_matrix_e(&rs, p);
    let f = forces(&rs);
    let tue = be * u;
    let tuz = (bz * u)[0];
    let re = ie * Vector2::new(acc[0], acc[1]) + f.tau_e + f.tau_g_e - tue;
    let rz = iz * acc[2] + f.tau_z + f.tau_g_z - tuz;
    let scale = 1.0f64.max(tue.amax()).max(tuz.abs());
    re.amax().max(rz.abs()) / scale
}

/// Literal transcription of the published velocity and gravity terms.
///
/// Kept only for the transcription report; the simulator never uses it.
pub mod printed {
    use super::*;

    pub fn reduced_forces(rs: &ReducedState, p: &RobotParams, incline: Incline) -> ReducedForces {
        let RobotParams {
            leg_mass: m,
            hip_mass: mh,
            torso_mass: mt,
            leg_length: r,
            torso_length: l,
            gravity: g,
        } = *p;
        let (a, b, q1, lam) = (rs.alpha, rs.beta, rs.q1, incline.radians());
        let (e1, e2, w1) = (rs.omega_e[0], rs.omega_e[1], rs.omega1);
        let s = f64::sin;

        let te1 = -l
            * ((4.0 * mh * w1 * w1 * r + m * e2 * e2 * r + 3.0 * m * w1 * w1 * r) * s(a / 2.0)
                + 2.0 * m * w1 * w1 * r * s(b - a / 2.0)
                + (m * w1 * w1 * r - 2.0 * m * e2 * w1 * r) * s((a - b) / 2.0)
                + 2.0 * mt * l * e1 * e1 * s(a)
                + (2.0 * m * e2 * w1 * r - m * e2 * e2 * r - m * w1 * w1 * r) * s((a + b) / 2.0));
        let te2 = 4.0 * mt * l * r * (s(a / 2.0) + s((a - b) / 2.0) + s((a + b) / 2.0)) * e1 * e1
            + r * r
                * ((8.0 * mh * w1 * w1 + 4.0 * mt * w1 * w1 - 2.0 * m * e2 * e2
                    + 8.0 * m * w1 * w1
                    + 4.0 * m * e2 * w1)
                    * s(b / 2.0)
                    + (4.0 * m * e2 * w1 - 2.0 * m * e2 * e2) * s(b)
                    + 2.0 * mt * w1 * w1 * s(a)
                    + 4.0 * mt * w1 * w1 * s(a - b / 2.0));
        let tz = mt * l * r * s(a / 2.0) * e1 * e1
            + r * r / 2.0
                * (-(m * e2 * e2 - m * w1 * w1 + 2.0 * m * e2 * w1) * s(b / 2.0)
                    + m * w1 * w1 * s(b)
                    + mt * w1 * w1 * s(a));
        let tge1 = g
            * l
            * (2.0 * (mh + mt + m) * s(q1 + a / 2.0 - lam) - m * s(q1 + a / 2.0 - b - lam)
                + m * s(q1 - a / 2.0 + b - lam)
                - (2.0 * mh + 2.0 * mt + m) * s(q1 - a / 2.0 - lam));
        let tge2 = -2.0
            * g
            * r
            * ((mt + mt) * s(a - q1 - lam)
                + m * s(b - q1 - lam)
                + (2.0 * mh + mt + 3.0 * m) * s(q1 + b / 2.0 - lam)
                + (2.0 * mh + mt + 2.0 * m) * s(q1 - lam)
                - 2.0 * (mh + mt + m) * s(q1 - b / 2.0 - lam)
                + mt * s(q1 + a - b / 2.0 - lam));
        let tgz = -g * r / 2.0
            * ((2.0 * mh + mt + 2.0 * m) * s(q1 - lam)
                + mt * s(a - q1 - lam)
                + m * s(b - q1 - lam));
        ReducedForces {
            tau_e: Vector2::new(te1, te2),
            tau_z: tz,
            tau_g_e: Vector2::new(tge1, tge2),
            tau_g_z: tgz,
        }
    }
}

/// One row of the transcription report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TermComparison {
    pub term: String,
    /// Largest absolute difference between published and certified forms.
    pub max_abs_diff: f64,
    pub matches: bool,
}

/// Compares each published term with the certified form over the given states.
pub fn transcription_report(
    states: &[SwingState],
    p: &RobotParams,
    incline: Incline,
    t: &GaitTargets,
    tol: f64,
) -> Vec<TermComparison> {
    let mut diff = [0.0f64; 6];
    for x in states {
        let rs = to_reduced(x, t);
        let a = reduced_forces(&rs, p, incline);
        let b = printed::reduced_forces(&rs, p, incline);
        let pairs = [
            (a.tau_e[0], b.tau_e[0]),
            (a.tau_e[1], b.tau_e[1]),
            (a.tau_z, b.tau_z),
            (a.tau_g_e[0], b.tau_g_e[0]),
            (a.tau_g_e[1], b.tau_g_e[1]),
            (a.tau_g_z, b.tau_g_z),
        ];
        for (d, (u, v)) in diff.iter_mut().zip(pairs) {
            *d = d.max((u - v).abs());
        }
    }
    [
        "tau_e1", "tau_e2", "tau_z", "tau_g_e1", "tau_g_e2", "tau_g_z",
    ]
    .iter()
    .zip(diff)
    .map(|(name, d)| TermComparison {
        term: name.to_string(),
        max_abs_diff: d,
        matches: d <= tol,
    })
    .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    const P: RobotParams = RobotParams::NOMINAL;

    fn random_state(rng: &mut ChaCha8Rng) -> SwingState {
        let mut v = [0.0; 6];
        for (k, x) in v.iter_mut().enumerate() {
            *x = if k < 3 {
                rng.random_range(-1.5..1.5)
            } else {
                rng.random_range(-3.0..3.0)
            };
        }
        SwingState::new(
            Vector3::new(v[0], v[1], v[2]),
            Vector3::new(v[3], v[4], v[5]),
        )
    }

    #[test]
    fn zero_dynamics_section() {
        let t = GaitTargets::nominal();
        let x = SwingState::new(
            Vector3::new(t.switch_angle, -t.switch_angle, t.torso_ref),
            Vector3::zeros(),
        );
        let rs = to_reduced(&x, &t);
        assert!(rs.q_e.norm() < 1e-15);
        let x = SwingState::new(Vector3::new(0.3, 0.3, 0.3), Vector3::zeros());
        let rs = to_reduced(&x, &t);
        assert_eq!((rs.alpha, rs.beta), (0.0, 0.0));
    }

    #[test]
    fn round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let t = GaitTargets::nominal();
        for _ in 0..1000 {
            let x = random_state(&mut rng);
            let y = from_reduced(&to_reduced(&x, &t), &t);
            assert!(x.distance(&y) < 1e-12);
        }
    }

    #[test]
    fn velocity_maps_are_inverse() {
        assert_eq!(velocity_map() * velocity_map_inverse(), Matrix3::identity());
    }

    #[test]
    fn inertias_at_zero_shape() {
        let (ie, iz) = shape_inertias(0.0, 0.0, &P);
        assert!((iz - 1.25).abs() < 1e-12);
        assert!((ie[(0, 0)] - 2.8125).abs() < 1e-12);
        assert!((ie[(1, 1)] - 5.0).abs() < 1e-12);
        assert_eq!(ie[(0, 1)], 0.0);
    }

    #[test]
    fn inertias_positive_on_grid() {
        for i in -180..=180 {
            for j in -180..=180 {
                let (ie, iz) = shape_inertias((i as f64).to_radians(), (j as f64).to_radians(), &P);
                assert!(iz > 0.0 && ie[(0, 0)] > 0.0 && ie[(1, 1)] > 0.0);
            }
        }
    }

    #[test]
    fn zero_inertia_is_scaled_determinant() {
        // I_z = 4 det(I) / (m M_T l² r²)
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..50 {
            let x = random_state(&mut rng);
            let rs = to_reduced(&x, &GaitTargets::nominal());
            let (_, iz) = reduced_inertias(&rs, &P);
            let det = dynamics::inertia_tensor(&x.q, &P).determinant();
            assert!((iz - 4.0 * det / (3.0 * 0.5625)).abs() < 1e-10);
        }
    }

    #[test]
    fn input_matrix_at_zero_shape() {
        let (be, bz) = shape_input_matrix(0.0, 0.0, &P);
        assert!((be[(0, 0)] - (5.0 / 3.0 + 7.0)).abs() < 1e-12);
        assert!((bz[0] + 7.0 / 3.0).abs() < 1e-12);
        assert!((bz[1] + 10.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn velocity_forces_vanish_at_rest() {
        let t = GaitTargets::nominal();
        let x = SwingState::new(Vector3::new(0.2, -0.4, 1.9), Vector3::zeros());
        let f = reduced_forces(&to_reduced(&x, &t), &P, Incline::FLAT);
        assert_eq!(f.tau_e, Vector2::zeros());
        assert_eq!(f.tau_z, 0.0);
    }

    #[test]
    fn decoupled_model_matches_full_model() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let t = GaitTargets::nominal();
        for _ in 0..1000 {
            let x = random_state(&mut rng);
            let u = Vector2::new(rng.random_range(-50.0..50.0), rng.random_range(-50.0..50.0));
            let lam = Incline::from_radians(rng.random_range(-0.5..0.5)).unwrap();
            let res = consistency_check(&x, &u, &P, lam, &t);
            assert!(res <= 1e-9, "residual {res:e} at {x:?}");
        }
    }

    #[test]
    fn input_terms_scale_linearly() {
        let t = GaitTargets::nominal();
        let x = SwingState::new(Vector3::new(0.2, -0.2, 1.8), Vector3::new(1.0, -1.0, 0.1));
        let (be, bz) = input_matrix_e(&to_reduced(&x, &t), &P);
        let u = Vector2::new(3.0, -7.0);
        assert_eq!(be * (2.0 * u), 2.0 * (be * u));
        assert_eq!(bz * (2.0 * u), 2.0 * (bz * u));
    }

    #[test]
    fn published_terms_partly_disagree() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let states: Vec<_> = (0..200).map(|_| random_state(&mut rng)).collect();
        let lam = Incline::from_degrees(25.0).unwrap();
        let report = transcription_report(&states, &P, lam, &GaitTargets::nominal(), 1e-9);
        let ok: Vec<_> = report
            .iter()
            .map(|c| (c.term.as_str(), c.matches))
            .collect();
        assert_eq!(
            ok,
            vec![
                ("tau_e1", false),
                ("tau_e2", true),
                ("tau_z", false),
                ("tau_g_e1", true),
                ("tau_g_e2", false),
                ("tau_g_z", false),
            ]
        );
    }
}
