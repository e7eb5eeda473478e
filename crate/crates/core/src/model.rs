//! Parameter and state types.
//!
//! Kinematic convention (fixed so that the closed forms in [`crate::dynamics`]
//! are reproduced exactly by a Lagrangian derivation):
//!
//! * Positions live in a slope-aligned frame: `x` runs up the slope, `y` is
//!   the outward surface normal. The stance foot is pinned at the origin.
//! * Every angle is measured from the surface normal, positive towards `+x`,
//!   with unit direction `e(θ) = (sin θ, cos θ)`.
//! * hip = `r e(q1)`, swing foot = hip − `r e(q2)`, torso tip = hip + `l e(q3)`.
//!   Leg point masses sit at the leg midpoints.
//! * Gravity points along `-(sin λ, cos λ)`, so `q = λ` is world-vertical and
//!   `λ > 0` is uphill.
//!
//! With this map `q2 = -q1` places the swing foot on the surface and the leg
//! relabelling at impact is the plain swap `q1 <-> q2`.

use nalgebra::{Vector2, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Absolute link angles `(q1, q2, q3)` = (stance leg, swing leg, torso), radians.
/// Stored unwrapped.
pub type JointConfig = Vector3<f64>;

pub const STANDARD_GRAVITY: f64 = 9.81;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RobotParams {
    /// Mass of each leg, lumped at the leg midpoint (kg).
    pub leg_mass: f64,
    /// Mass at the hip end of the torso (kg).
    pub hip_mass: f64,
    /// Mass at the free end of the torso (kg).
    pub torso_mass: f64,
    /// Leg length `r` (m).
    pub leg_length: f64,
    /// Torso length `l` (m).
    pub torso_length: f64,
    /// Gravitational acceleration (m/s²).
    pub gravity: f64,
}

impl RobotParams {
    /// Nominal parameters: m = 1, M_H = 1, M_T = 3 kg, r = 1, l = 0.75 m.
    pub const NOMINAL: RobotParams = RobotParams {
        leg_mass: 1.0,
        hip_mass: 1.0,
        torso_mass: 3.0,
        leg_length: 1.0,
        torso_length: 0.75,
        gravity: STANDARD_GRAVITY,
    };

    pub fn total_mass(&self) -> f64 {
        2.0 * self.leg_mass + self.hip_mass + self.torso_mass
    }

    /// Names of every field that is not finite and strictly positive.
    pub fn invalid_fields(&self) -> Vec<&'static str> {
        [
            ("leg_mass", self.leg_mass),
            ("hip_mass", self.hip_mass),
            ("torso_mass", self.torso_mass),
            ("leg_length", self.leg_length),
            ("torso_length", self.torso_length),
            ("gravity", self.gravity),
        ]
        .into_iter()
        .filter(|(_, v)| !(v.is_finite() && *v > 0.0))
        .map(|(n, _)| n)
        .collect()
    }

    pub fn validate(&self) -> Result<()> {
        match self.invalid_fields().first() {
            None => Ok(()),
            Some(name) => Err(Error::InvalidParameter {
                name,
                reason: "must be finite and strictly positive".into(),
            }),
        }
    }
}

impl Default for RobotParams {
    fn default() -> Self {
        Self::NOMINAL
    }
}

/// Inclination of the walking surface (radians, positive uphill).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Incline(f64);

impl Incline {
    pub const FLAT: Incline = Incline(0.0);

    pub fn from_radians(lambda: f64) -> Result<Self> {
        if !lambda.is_finite() || lambda.abs() >= std::f64::consts::FRAC_PI_2 {
            return Err(Error::InvalidParameter {
                name: "lambda",
                reason: format!("|lambda| must be below 90 deg, got {} rad", lambda),
            });
        }
        Ok(Incline(lambda))
    }

    pub fn from_degrees(deg: f64) -> Result<Self> {
        Self::from_radians(deg.to_radians())
    }

    pub fn radians(self) -> f64 {
        self.0
    }

    pub fn degrees(self) -> f64 {
        self.0.to_degrees()
    }
}

/// Continuous-phase state `x = (q, q̇)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SwingState {
    pub q: JointConfig,
    pub dq: Vector3<f64>,
}

impl SwingState {
    pub fn new(q: JointConfig, dq: Vector3<f64>) -> Self {
        Self { q, dq }
    }

    /// Builds a state from angles in degrees and rates in rad/s.
    pub fn from_degrees(q_deg: [f64; 3], dq: [f64; 3]) -> Self {
        Self {
            q: Vector3::new(
                q_deg[0].to_radians(),
                q_deg[1].to_radians(),
                q_deg[2].to_radians(),
            ),
            dq: Vector3::from(dq),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.q.iter().chain(self.dq.iter()).all(|v| v.is_finite())
    }

    /// Euclidean distance with unit weights on rad and rad/s.
    pub fn distance(&self, other: &SwingState) -> f64 {
        let dq = self.q - other.q;
        let dv = self.dq - other.dq;
        (dq.norm_squared() + dv.norm_squared()).sqrt()
    }

    pub fn as_array(&self) -> [f64; 6] {
        [
            self.q[0], self.q[1], self.q[2], self.dq[0], self.dq[1], self.dq[2],
        ]
    }
}

/// Unit direction `e(θ) = (sin θ, cos θ)` in the slope frame.
#[inline]
pub(crate) fn direction(theta: f64) -> Vector2<f64> {
    let (s, c) = theta.sin_cos();
    Vector2::new(s, c)
}

/// `de/dθ = (cos θ, -sin θ)`.
#[inline]
pub(crate) fn direction_derivative(theta: f64) -> Vector2<f64> {
    let (s, c) = theta.sin_cos();
    Vector2::new(c, -s)
}
