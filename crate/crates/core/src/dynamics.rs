//! Swing-phase equations of motion `I(q) q̈ + Γ(q, q̇) q̇ = G(q, λ) + B u`.
//!
//! All terms are hand-coded closed forms; `certify` checks them against an
//! independent automatic-differentiation Lagrangian.

use nalgebra::{Matrix3, Matrix3x2, Vector2, Vector3};

use crate::error::{Error, Result};
use crate::model::{Incline, JointConfig, RobotParams, SwingState};

/// Mass-inertia tensor `I(q)`.
pub fn inertia_tensor(q: &JointConfig, p: &RobotParams) -> Matrix3<f64> {
    let RobotParams {
        leg_mass: m,
        hip_mass: mh,
        torso_mass: mt,
        leg_length: r,
        torso_length: l,
        ..
    } = *p;
    let i11 = r * r * (4.0 * mh + 4.0 * mt + 5.0 * m) / 4.0;
    let i12 = -m * r * r * (q[0] - q[1]).cos() / 2.0;
    let i13 = mt * l * r * (q[0] - q[2]).cos();
    let i22 = m * r * r / 4.0;
    let i33 = mt * l * l;
    Matrix3::new(
        i11, i12, i13, //
        i12, i22, 0.0, //
        i13, 0.0, i33,
    )
}

/// Gravity generalized force `G(q, λ) = -∂V/∂q`.
pub fn gravity_torque(q: &JointConfig, p: &RobotParams, incline: Incline) -> Vector3<f64> {
    let lam = incline.radians();
    let RobotParams {
        leg_mass: m,
        hip_mass: mh,
        torso_mass: mt,
        leg_length: r,
        torso_length: l,
        gravity: g,
    } = *p;
    Vector3::new(
        g * r * (2.0 * mh + 2.0 * mt + 3.0 * m) * (q[0] - lam).sin() / 2.0,
        -g * m * r * (q[1] - lam).sin() / 2.0,
        mt * g * l * (q[2] - lam).sin(),
    )
}

/// Hip torques act as `-u1` on the stance leg, `-u2` on the swing leg and
/// `u1 + u2` on the torso.
pub fn input_matrix() -> Matrix3x2<f64> {
    Matrix3x2::new(
        -1.0, 0.0, //
        0.0, -1.0, //
        1.0, 1.0,
    )
}

/// Connection matrix `Γ(q, q̇)`, whose product with `q̇` gives the quadratic
/// velocity forces. Only four entries are non-zero.
pub fn connection_matrix(q: &JointConfig, dq: &Vector3<f64>, p: &RobotParams) -> Matrix3<f64> {
    let m = p.leg_mass;
    let mt = p.torso_mass;
    let r = p.leg_length;
    let l = p.torso_length;
    let s12 = (q[0] - q[1]).sin();
    let s13 = (q[0] - q[2]).sin();
    let mut gamma = Matrix3::zeros();
    gamma[(0, 1)] = -m * r * r * s12 * dq[1] / 2.0;
    gamma[(0, 2)] = mt * l * r * s13 * dq[2];
    gamma[(1, 0)] = m * r * r * s12 * dq[0] / 2.0;
    gamma[(2, 0)] = -mt * l * r * s13 * dq[0];
    gamma
}

/// `Γ(q, q̇) q̇`.
pub fn connection_forces(q: &JointConfig, dq: &Vector3<f64>, p: &RobotParams) -> Vector3<f64> {
    connection_matrix(q, dq, p) * dq
}

/// Joint accelerations `q̈ = I⁻¹ (G + B u − Γ q̇)`.
pub fn swing_accel(
    x: &SwingState,
    u: &Vector2<f64>,
    p: &RobotParams,
    incline: Incline,
) -> Result<Vector3<f64>> {
    if !x.is_finite() || !u.iter().all(|v| v.is_finite()) {
        return Err(Error::NonFiniteState {
            context: "swing_accel",
        });
    }
    let rhs =
        gravity_torque(&x.q, p, incline) + input_matrix() * u - connection_forces(&x.q, &x.dq, p);
    inertia_tensor(&x.q, p)
        .cholesky()
        .map(|c| c.solve(&rhs))
        .ok_or(Error::NonFiniteState {
            context: "swing_accel: inertia not positive definite",
        })
}

/// Potential energy with the stance foot as reference.
pub fn potential_energy(q: &JointConfig, p: &RobotParams, incline: Incline) -> f64 {
    let lam = incline.radians();
    let RobotParams {
        leg_mass: m,
        hip_mass: mh,
        torso_mass: mt,
        leg_length: r,
        torso_length: l,
        gravity: g,
    } = *p;
    g * (r * (1.5 * m + mh + mt) * (q[0] - lam).cos() - m * r / 2.0 * (q[1] - lam).cos()
        + mt * l * (q[2] - lam).cos())
}

pub fn kinetic_energy(x: &SwingState, p: &RobotParams) -> f64 {
    0.5 * x.dq.dot(&(inertia_tensor(&x.q, p) * x.dq))
}

pub fn total_energy(x: &SwingState, p: &RobotParams, incline: Incline) -> f64 {
    kinetic_energy(x, p) + potential_energy(&x.q, p, incline)
}
