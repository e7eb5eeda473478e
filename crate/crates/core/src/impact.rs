//! Instantaneous double-stance impact and leg relabelling.
//!
//! The impact is solved in the unpinned chain with coordinates
//! `q_ds = (q1, q2, q3, hip_x, hip_y)`. The swing foot lands without
//! rebound or slip, so its post-impact velocity is zeroed by the contact
//! impulse; the old stance foot leaves the ground.

use nalgebra::{
    Matrix2, Matrix2x3, Matrix3, Matrix5, Matrix5x3, SMatrix, Vector2, Vector3, Vector5,
};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{direction, direction_derivative, JointConfig, RobotParams, SwingState};

pub type Matrix2x5 = SMatrix<f64, 2, 5>;

const CONTACT_DET_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExtendedConfig {
    pub q: JointConfig,
    /// Hip position in the slope frame (m).
    pub hip: Vector2<f64>,
}

impl ExtendedConfig {
    /// Extended coordinates of a single-stance configuration with the stance
    /// foot at the origin.
    pub fn from_stance(q: &JointConfig, p: &RobotParams) -> Self {
        Self {
            q: *q,
            hip: hip_position(q, p),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ImpactResult {
    pub x_plus: SwingState,
    /// Contact impulse at the landing foot (N·s), slope frame.
    pub impulse: Vector2<f64>,
    /// Landing-foot velocity after the impact; zero up to round-off.
    pub post_contact_velocity: Vector2<f64>,
}

/// Leg relabelling `R`: swaps stance and swing angles, keeps the torso.
pub fn relabel() -> Matrix3<f64> {
    Matrix3::new(
        0.0, 1.0, 0.0, //
        1.0, 0.0, 0.0, //
        0.0, 0.0, 1.0,
    )
}

/// Hip position `γ(q) = r e(q1)` with the stance foot at the origin.
pub fn hip_position(q: &JointConfig, p: &RobotParams) -> Vector2<f64> {
    p.leg_length * direction(q[0])
}

/// `∂γ/∂q`.
pub fn hip_jacobian(q: &JointConfig, p: &RobotParams) -> Matrix2x3<f64> {
    let mut j = Matrix2x3::zeros();
    j.set_column(0, &(p.leg_length * direction_derivative(q[0])));
    j
}

/// Swing-foot position `p2(q_ds) = hip − r e(q2)`.
pub fn swing_foot_position(q_ds: &ExtendedConfig, p: &RobotParams) -> Vector2<f64> {
    q_ds.hip - p.leg_length * direction(q_ds.q[1])
}

/// `E2 = ∂p2/∂q_ds`.
pub fn swing_foot_jacobian(q_ds: &ExtendedConfig, p: &RobotParams) -> Matrix2x5 {
    let mut e2 = Matrix2x5::zeros();
    e2.set_column(1, &(-p.leg_length * direction_derivative(q_ds.q[1])));
    e2[(0, 3)] = 1.0;
    e2[(1, 4)] = 1.0;
    e2
}

/// Height of the swing foot above the walking surface, stance foot at the origin.
pub fn swing_foot_height(q: &JointConfig, p: &RobotParams) -> f64 {
    swing_foot_position(&ExtendedConfig::from_stance(q, p), p)[1]
}

/// Mass matrix `D_ds` of the unpinned chain with the hip as free base.
pub fn double_stance_mass_matrix(q_ds: &ExtendedConfig, p: &RobotParams) -> Matrix5<f64> {
    let RobotParams {
        leg_mass: m,
        torso_mass: mt,
        leg_length: r,
        torso_length: l,
        ..
    } = *p;
    let (s1, c1) = q_ds.q[0].sin_cos();
    let (s2, c2) = q_ds.q[1].sin_cos();
    let (s3, c3) = q_ds.q[2].sin_cos();
    let mut d = Matrix5::zeros();
    d[(0, 0)] = m * r * r / 4.0;
    d[(1, 1)] = m * r * r / 4.0;
    d[(2, 2)] = mt * l * l;
    d[(3, 3)] = p.total_mass();
    d[(4, 4)] = p.total_mass();
    // leg midpoints sit at hip - (r/2) e(q), the torso tip at hip + l e(q3)
    let cross = [
        (0, -m * r / 2.0 * c1, m * r / 2.0 * s1),
        (1, -m * r / 2.0 * c2, m * r / 2.0 * s2),
        (2, mt * l * c3, -mt * l * s3),
    ];
    for (i, dx, dy) in cross {
        d[(i, 3)] = dx;
        d[(3, i)] = dx;
        d[(i, 4)] = dy;
        d[(4, i)] = dy;
    }
    d
}

/// Reset map `x⁺ = Δ(x⁻)`.
pub fn reset_map(x_minus: &SwingState, p: &RobotParams) -> Result<ImpactResult> {
    if !x_minus.is_finite() {
        return Err(Error::NonFiniteState {
            context: "reset_map",
        });
    }
    let q_ds = ExtendedConfig::from_stance(&x_minus.q, p);
    let d = double_stance_mass_matrix(&q_ds, p);
    let e2 = swing_foot_jacobian(&q_ds, p);

    // [I; ∂γ/∂q] lifts pinned velocities to the extended coordinates
    let mut lift = Matrix5x3::zeros();
    lift.fixed_view_mut::<3, 3>(0, 0)
        .copy_from(&Matrix3::identity());
    lift.fixed_view_mut::<2, 3>(3, 0)
        .copy_from(&hip_jacobian(&x_minus.q, p));

    let d_chol = d.cholesky().ok_or(Error::NonFiniteState {
        context: "reset_map: D_ds not positive definite",
    })?;
    let d_inv_e2t = d_chol.solve(&e2.transpose());
    let contact: Matrix2<f64> = e2 * d_inv_e2t;
    let det = contact.determinant();
    if det.is_nan() || det.abs() <= CONTACT_DET_FLOOR {
        return Err(Error::DegenerateContact { det });
    }
    let contact_inv = contact
        .try_inverse()
        .ok_or(Error::DegenerateContact { det })?;

    let impulse_map = -contact_inv * e2 * lift; // Δ_F2
    let velocity_map = d_inv_e2t * impulse_map + lift; // Δ̄_q̇ds

    let dq_ds: Vector5<f64> = velocity_map * x_minus.dq;
    let impulse = impulse_map * x_minus.dq;
    let post_contact_velocity = e2 * dq_ds;

    let r = relabel();
    let dq_plus = r * Vector3::new(dq_ds[0], dq_ds[1], dq_ds[2]);
    let x_plus = SwingState::new(r * x_minus.q, dq_plus);
    if !x_plus.is_finite() {
        return Err(Error::NonFiniteState {
            context: "reset_map output",
        });
    }
    Ok(ImpactResult {
        x_plus,
        impulse,
        post_contact_velocity,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const P: RobotParams = RobotParams::NOMINAL;

    #[test]
    fn relabel_swaps_legs() {
        let q = Vector3::new(0.1, -0.2, 1.7);
        assert_eq!(relabel() * q, Vector3::new(-0.2, 0.1, 1.7));
        assert_eq!(relabel() * relabel(), Matrix3::identity());
    }

    #[test]
    fn hip_on_circle() {
        assert_eq!(hip_position(&Vector3::zeros(), &P), Vector2::new(0.0, 1.0));
        for k in 0..20 {
            let q = Vector3::new(-1.5 + 0.15 * k as f64, 0.0, 0.0);
            assert!((hip_position(&q, &P).norm() - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn jacobians_match_finite_differences() {
        let q = Vector3::new(0.23, -0.31, 1.84);
        let h = 1e-6;
        let j = hip_jacobian(&q, &P);
        for k in 0..3 {
            let mut qp = q;
            let mut qm = q;
            qp[k] += h;
            qm[k] -= h;
            let fd = (hip_position(&qp, &P) - hip_position(&qm, &P)) / (2.0 * h);
            assert!((fd - j.column(k)).norm() < 1e-6);
        }
        let q_ds = ExtendedConfig {
            q,
            hip: Vector2::new(0.3, 0.9),
        };
        let e2 = swing_foot_jacobian(&q_ds, &P);
        for k in 0..5 {
            let mut plus = q_ds;
            let mut minus = q_ds;
            if k < 3 {
                plus.q[k] += h;
                minus.q[k] -= h;
            } else {
                plus.hip[k - 3] += h;
                minus.hip[k - 3] -= h;
            }
            let fd = (swing_foot_position(&plus, &P) - swing_foot_position(&minus, &P)) / (2.0 * h);
            assert!((fd - e2.column(k)).norm() < 1e-6, "column {k}");
        }
    }

    #[test]
    fn swing_foot_geometry() {
        let q = Vector3::new(0.2, 0.2, 1.0);
        let foot = swing_foot_position(&ExtendedConfig::from_stance(&q, &P), &P);
        assert!(foot.norm() < 1e-15);
        let q = Vector3::new(0.26, -0.26, 1.0);
        assert!(swing_foot_height(&q, &P).abs() < 1e-15);
        let foot = swing_foot_position(&ExtendedConfig::from_stance(&q, &P), &P);
        assert!((foot[0] - 2.0 * 0.26f64.sin()).abs() < 1e-15);
    }

    #[test]
    fn double_stance_base_block_is_total_mass() {
        let q_ds = ExtendedConfig {
            q: Vector3::new(0.4, -0.1, 2.0),
            hip: Vector2::new(1.0, 2.0),
        };
        let d = double_stance_mass_matrix(&q_ds, &P);
        assert_eq!(
            d.fixed_view::<2, 2>(3, 3).into_owned(),
            Matrix2::identity() * 6.0
        );
        assert_eq!(d, d.transpose());
        assert!(d.cholesky().is_some());
    }

    #[test]
    fn pinned_reduction_recovers_inertia() {
        for k in 0..10 {
            let t = k as f64;
            let q = Vector3::new(0.3 * t.sin(), -0.5 * (1.3 * t).cos(), 1.5 + 0.2 * t);
            let d = double_stance_mass_matrix(&ExtendedConfig::from_stance(&q, &P), &P);
            let mut lift = Matrix5x3::zeros();
            lift.fixed_view_mut::<3, 3>(0, 0)
                .copy_from(&Matrix3::identity());
            lift.fixed_view_mut::<2, 3>(3, 0)
                .copy_from(&hip_jacobian(&q, &P));
            let reduced = lift.transpose() * d * lift;
            let i = crate::dynamics::inertia_tensor(&q, &P);
            assert!((reduced - i).amax() < 1e-12);
        }
    }

    #[test]
    fn zero_velocity_gives_zero_impact() {
        let x = SwingState::new(Vector3::new(0.26, -0.26, 1.83), Vector3::zeros());
        let res = reset_map(&x, &P).unwrap();
        assert_eq!(res.x_plus.dq, Vector3::zeros());
        assert_eq!(res.impulse, Vector2::zeros());
        assert_eq!(res.x_plus.q, Vector3::new(-0.26, 0.26, 1.83));
    }

    #[test]
    fn landing_foot_stops() {
        let x = SwingState::new(
            Vector3::new(0.2618, -0.2618, 1.8326),
            Vector3::new(1.168, -1.168, 0.0),
        );
        let res = reset_map(&x, &P).unwrap();
        assert!(res.post_contact_velocity.norm() < 1e-12);
        // the ground pushes the landing foot up
        assert!(res.impulse[1] > 0.0);
    }

    #[test]
    fn contact_matrix_well_conditioned() {
        // E2 always carries the identity on the hip columns, so the contact
        // matrix stays invertible; only broken parameters can break it
        for k in 0..50 {
            let t = k as f64 * 0.37;
            let q = Vector3::new(t.sin(), (1.7 * t).cos(), 2.0 * t);
            let q_ds = ExtendedConfig::from_stance(&q, &P);
            let d = double_stance_mass_matrix(&q_ds, &P);
            let e2 = swing_foot_jacobian(&q_ds, &P);
            let c = e2 * d.try_inverse().unwrap() * e2.transpose();
            assert!(c.determinant() > 1e-3);
        }
        let p = RobotParams {
            leg_mass: f64::INFINITY,
            ..P
        };
        let x = SwingState::new(Vector3::new(0.2, -0.2, 1.8), Vector3::new(1.0, -1.0, 0.0));
        assert!(matches!(
            reset_map(&x, &p),
            Err(Error::DegenerateContact { .. }) | Err(Error::NonFiniteState { .. })
        ));
    }

    #[test]
    fn non_finite_rejected() {
        let x = SwingState::new(Vector3::new(0.2, f64::INFINITY, 1.8), Vector3::zeros());
        assert!(matches!(
            reset_map(&x, &P),
            Err(Error::NonFiniteState { .. })
        ));
    }
}
