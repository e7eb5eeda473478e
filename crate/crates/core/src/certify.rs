//! Independent Lagrangian oracle and the model certification suite.
//!
//! The oracle knows only where the point masses sit. Mass matrices come from
//! forward-mode dual-number Jacobians of those positions, the velocity forces
//! from nested duals of the mass matrix, and gravity from the gradient of the
//! potential. Nothing here calls the closed forms it is used to check, except
//! where a check compares against them.

use std::ops::{Add, Mul, Neg, Sub};

use nalgebra::{DMatrix, DVector, Matrix2, Vector2, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::controller::{self, ControllerState};
use crate::dynamics;
use crate::impact;
use crate::model::{Incline, RobotParams, SwingState};
use crate::ode::{Dopri5, Tolerances};
use crate::reduced::{self, GaitTargets, ReducedState, TermComparison};

pub trait Scalar:
    Copy + Add<Output = Self> + Sub<Output = Self> + Mul<Output = Self> + Neg<Output = Self>
{
    fn from_f64(v: f64) -> Self;
    fn sin(self) -> Self;
    fn cos(self) -> Self;
}

impl Scalar for f64 {
    fn from_f64(v: f64) -> Self {
        v
    }
    fn sin(self) -> Self {
        f64::sin(self)
    }
    fn cos(self) -> Self {
        f64::cos(self)
    }
}

/// Forward-mode dual number `re + eps·ε` with `ε² = 0`. Nests for higher
/// derivatives.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Dual<S> {
    pub re: S,
    pub eps: S,
}

impl<S: Scalar> Dual<S> {
    pub fn new(re: S, eps: S) -> Self {
        Self { re, eps }
    }
}

impl<S: Scalar> Add for Dual<S> {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        Self::new(self.re + o.re, self.eps + o.eps)
    }
}

impl<S: Scalar> Sub for Dual<S> {
    type Output = Self;
    fn sub(self, o: Self) -> Self {
        Self::new(self.re - o.re, self.eps - o.eps)
    }
}

impl<S: Scalar> Mul for Dual<S> {
    type Output = Self;
    fn mul(self, o: Self) -> Self {
        Self::new(self.re * o.re, self.re * o.eps + self.eps * o.re)
    }
}

impl<S: Scalar> Neg for Dual<S> {
    type Output = Self;
    fn neg(self) -> Self {
        Self::new(-self.re, -self.eps)
    }
}

impl<S: Scalar> Scalar for Dual<S> {
    fn from_f64(v: f64) -> Self {
        Self::new(S::from_f64(v), S::from_f64(0.0))
    }
    fn sin(self) -> Self {
        Self::new(self.re.sin(), self.re.cos() * self.eps)
    }
    fn cos(self) -> Self {
        Self::new(self.re.cos(), -(self.re.sin() * self.eps))
    }
}

type Point<S> = [S; 2];

fn dir<S: Scalar>(th: S) -> Point<S> {
    [th.sin(), th.cos()]
}

fn axpy<S: Scalar>(base: Point<S>, k: f64, v: Point<S>) -> Point<S> {
    let k = S::from_f64(k);
    [base[0] + k * v[0], base[1] + k * v[1]]
}

/// A planar chain of point masses parameterised by generalized coordinates.
pub trait Chain {
    fn dof(&self) -> usize;
    fn params(&self) -> &RobotParams;
    /// `(mass, position)` of every point mass.
    fn points<S: Scalar>(&self, q: &[S]) -> Vec<(f64, Point<S>)>;
}

/// Single stance: stance foot pinned at the origin, `q = (q1, q2, q3)`.
#[derive(Debug, Clone, Copy)]
pub struct PinnedChain(pub RobotParams);

/// Unpinned chain with the hip as base, `q = (q1, q2, q3, hip_x, hip_y)`.
#[derive(Debug, Clone, Copy)]
pub struct FreeChain(pub RobotParams);

fn masses_about_hip<S: Scalar>(p: &RobotParams, q: &[S], hip: Point<S>) -> Vec<(f64, Point<S>)> {
    let r = p.leg_length;
    vec![
        (p.leg_mass, axpy(hip, -r / 2.0, dir(q[0]))),
        (p.hip_mass, hip),
        (p.leg_mass, axpy(hip, -r / 2.0, dir(q[1]))),
        (p.torso_mass, axpy(hip, p.torso_length, dir(q[2]))),
    ]
}

impl Chain for PinnedChain {
    fn dof(&self) -> usize {
        3
    }
    fn params(&self) -> &RobotParams {
        &self.0
    }
    fn points<S: Scalar>(&self, q: &[S]) -> Vec<(f64, Point<S>)> {
        let zero = [S::from_f64(0.0); 2];
        let hip = axpy(zero, self.0.leg_length, dir(q[0]));
        masses_about_hip(&self.0, q, hip)
    }
}

impl Chain for FreeChain {
    fn dof(&self) -> usize {
        5
    }
    fn params(&self) -> &RobotParams {
        &self.0
    }
    fn points<S: Scalar>(&self, q: &[S]) -> Vec<(f64, Point<S>)> {
        masses_about_hip(&self.0, q, [q[3], q[4]])
    }
}

fn seeded<S: Scalar>(q: &[S], v: &[S]) -> Vec<Dual<S>> {
    q.iter().zip(v).map(|(&a, &b)| Dual::new(a, b)).collect()
}

fn unit<S: Scalar>(n: usize, j: usize) -> Vec<S> {
    (0..n)
        .map(|i| S::from_f64(if i == j { 1.0 } else { 0.0 }))
        .collect()
}

/// Row-major mass matrix `Σ m_k J_kᵀ J_k`.
fn mass_matrix_generic<C: Chain, S: Scalar>(chain: &C, q: &[S]) -> Vec<S> {
    let n = chain.dof();
    let cols: Vec<Vec<(f64, Point<S>)>> = (0..n)
        .map(|j| {
            chain
                .points(&seeded(q, &unit(n, j)))
                .into_iter()
                .map(|(m, p)| (m, [p[0].eps, p[1].eps]))
                .collect()
        })
        .collect();
    let mut out = vec![S::from_f64(0.0); n * n];
    for i in 0..n {
        for j in 0..n {
            let mut acc = S::from_f64(0.0);
            for (a, b) in cols[i].iter().zip(&cols[j]) {
                acc = acc + S::from_f64(a.0) * (a.1[0] * b.1[0] + a.1[1] * b.1[1]);
            }
            out[i * n + j] = acc;
        }
    }
    out
}

pub fn mass_matrix<C: Chain>(chain: &C, q: &[f64]) -> DMatrix<f64> {
    let n = chain.dof();
    DMatrix::from_row_slice(n, n, &mass_matrix_generic(chain, q))
}

/// Derivative of the mass matrix along direction `v`.
fn mass_matrix_derivative<C: Chain>(chain: &C, q: &[f64], v: &[f64]) -> DMatrix<f64> {
    let n = chain.dof();
    let m = mass_matrix_generic(chain, &seeded(q, v));
    DMatrix::from_iterator(n, n, m.iter().map(|d| d.eps)).transpose()
}

/// `İ = dI/dt` along `q̇`.
pub fn mass_matrix_rate<C: Chain>(chain: &C, q: &[f64], dq: &[f64]) -> DMatrix<f64> {
    mass_matrix_derivative(chain, q, dq)
}

/// Velocity forces `h = İ q̇ − ½ ∂_q (q̇ᵀ I q̇)`.
pub fn velocity_forces<C: Chain>(chain: &C, q: &[f64], dq: &[f64]) -> DVector<f64> {
    let n = chain.dof();
    let v = DVector::from_column_slice(dq);
    let mut h = mass_matrix_rate(chain, q, dq) * &v;
    for i in 0..n {
        let di = mass_matrix_derivative(chain, q, &unit::<f64>(n, i));
        h[i] -= 0.5 * v.dot(&(di * &v));
    }
    h
}

fn potential_generic<C: Chain, S: Scalar>(chain: &C, q: &[S], incline: Incline) -> S {
    let (s, c) = incline.radians().sin_cos();
    let g = chain.params().gravity;
    chain
        .points(q)
        .into_iter()
        .fold(S::from_f64(0.0), |acc, (m, p)| {
            acc + S::from_f64(m * g) * (S::from_f64(s) * p[0] + S::from_f64(c) * p[1])
        })
}

pub fn potential<C: Chain>(chain: &C, q: &[f64], incline: Incline) -> f64 {
    potential_generic(chain, q, incline)
}

/// `G = −∂V/∂q`.
pub fn gravity<C: Chain>(chain: &C, q: &[f64], incline: Incline) -> DVector<f64> {
    let n = chain.dof();
    DVector::from_iterator(
        n,
        (0..n).map(|i| -potential_generic(chain, &seeded(q, &unit(n, i)), incline).eps),
    )
}

pub fn kinetic<C: Chain>(chain: &C, q: &[f64], dq: &[f64]) -> f64 {
    let v = DVector::from_column_slice(dq);
    0.5 * v.dot(&(mass_matrix(chain, q) * &v))
}

/// Generalized forces of the hip torques from the virtual work of the
/// relative angles `q3 − q1` and `q3 − q2`.
pub fn input_matrix(q: &[f64]) -> DMatrix<f64> {
    let rel = |q: &[Dual<f64>]| [q[2] - q[0], q[2] - q[1]];
    let mut b = DMatrix::zeros(3, 2);
    for i in 0..3 {
        let d = rel(&seeded(q, &unit(3, i)));
        b[(i, 0)] = d[0].eps;
        b[(i, 1)] = d[1].eps;
    }
    b
}

/// Pinned-chain accelerations from the oracle terms.
pub fn acceleration(
    p: &RobotParams,
    x: &SwingState,
    u: &Vector2<f64>,
    incline: Incline,
) -> Option<Vector3<f64>> {
    let chain = PinnedChain(*p);
    let (q, dq) = (x.q.as_slice(), x.dq.as_slice());
    let rhs = gravity(&chain, q, incline)
        + input_matrix(q) * DVector::from_column_slice(u.as_slice())
        - velocity_forces(&chain, q, dq);
    let sol = mass_matrix(&chain, q).cholesky()?.solve(&rhs);
    Some(Vector3::new(sol[0], sol[1], sol[2]))
}

/// Angular momentum about `about`, slope frame.
pub fn angular_momentum<C: Chain>(chain: &C, q: &[f64], dq: &[f64], about: Vector2<f64>) -> f64 {
    chain
        .points(&seeded(q, dq))
        .into_iter()
        .map(|(m, p)| {
            let (rx, ry) = (p[0].re - about[0], p[1].re - about[1]);
            m * (rx * p[1].eps - ry * p[0].eps)
        })
        .sum()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub tolerance: f64,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    fn new(name: &str, value: f64, tolerance: f64, detail: String) -> Self {
        Self {
            name: name.to_string(),
            value,
            tolerance,
            passed: value <= tolerance,
            detail,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CertifyOptions {
    pub samples: usize,
    pub seed: u64,
    pub params: RobotParams,
}

impl Default for CertifyOptions {
    fn default() -> Self {
        Self {
            samples: 1000,
            seed: 0,
            params: RobotParams::NOMINAL,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Certificate {
    pub checks: Vec<Check>,
    /// Published reduced terms against the certified ones; informational.
    pub transcription: Vec<TermComparison>,
}

impl Certificate {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn check(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }
}

fn random_state(rng: &mut ChaCha8Rng) -> SwingState {
    SwingState::new(
        Vector3::new(
            rng.random_range(-1.2..1.2),
            rng.random_range(-1.2..1.2),
            rng.random_range(-0.5..2.5),
        ),
        Vector3::new(
            rng.random_range(-3.0..3.0),
            rng.random_range(-3.0..3.0),
            rng.random_range(-3.0..3.0),
        ),
    )
}

/// States near a walking gait, where `B_e` is well conditioned.
fn random_gait_state(rng: &mut ChaCha8Rng) -> SwingState {
    SwingState::new(
        Vector3::new(
            rng.random_range(-0.4..0.4),
            rng.random_range(-0.4..0.4),
            rng.random_range(1.5..2.1),
        ),
        Vector3::new(
            rng.random_range(-2.0..2.0),
            rng.random_range(-2.0..2.0),
            rng.random_range(-1.0..1.0),
        ),
    )
}

fn random_incline(rng: &mut ChaCha8Rng) -> Incline {
    Incline::from_degrees(rng.random_range(-30.0..30.0)).expect("incline in range")
}

fn rel_diff(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).amax() / 1f64.max(b.amax())
}

fn to_dmatrix3(m: &nalgebra::Matrix3<f64>) -> DMatrix<f64> {
    DMatrix::from_column_slice(3, 3, m.as_slice())
}

fn col(v: DVector<f64>) -> DMatrix<f64> {
    let n = v.len();
    DMatrix::from_column_slice(n, 1, v.as_slice())
}

fn to_dvector3(v: &Vector3<f64>) -> DMatrix<f64> {
    DMatrix::from_column_slice(3, 1, v.as_slice())
}

/// Runs every check with `opts.samples` random states each.
pub fn certify(opts: &CertifyOptions) -> Certificate {
    let p = opts.params;
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let states: Vec<(SwingState, Incline)> = (0..opts.samples)
        .map(|_| (random_state(&mut rng), random_incline(&mut rng)))
        .collect();

    let mut checks = oracle_checks(&p, &states);
    checks.push(energy_check(&p, &mut rng));
    checks.push(consistency_check(&p, &states, &mut rng));
    checks.extend(impact_checks(&p, opts.samples, &mut rng));
    checks.push(regularized_loop_check(&p, opts.samples, &mut rng));
    checks.push(covariant_norm_check(&p, &mut rng));
    checks.extend(skew_checks(&p, &states));

    let xs: Vec<SwingState> = states.iter().map(|(x, _)| *x).collect();
    let transcription = reduced::transcription_report(
        &xs,
        &p,
        Incline::from_degrees(25.0).expect("valid"),
        &GaitTargets::nominal(),
        1e-8,
    );
    Certificate {
        checks,
        transcription,
    }
}

fn oracle_checks(p: &RobotParams, states: &[(SwingState, Incline)]) -> Vec<Check> {
    let pinned = PinnedChain(*p);
    let free = FreeChain(*p);
    let mut worst = [0.0f64; 5];
    for (x, lam) in states {
        let (q, dq) = (x.q.as_slice(), x.dq.as_slice());
        let ds = impact::ExtendedConfig::from_stance(&x.q, p);
        let q5 = [x.q[0], x.q[1], x.q[2], ds.hip[0], ds.hip[1]];
        let d_hand = impact::double_stance_mass_matrix(&ds, p);
        let errs = [
            rel_diff(
                &to_dmatrix3(&dynamics::inertia_tensor(&x.q, p)),
                &mass_matrix(&pinned, q),
            ),
            rel_diff(
                &to_dvector3(&dynamics::gravity_torque(&x.q, p, *lam)),
                &col(gravity(&pinned, q, *lam)),
            ),
            rel_diff(
                &to_dvector3(&dynamics::connection_forces(&x.q, &x.dq, p)),
                &col(velocity_forces(&pinned, q, dq)),
            ),
            rel_diff(
                &DMatrix::from_column_slice(3, 2, dynamics::input_matrix().as_slice()),
                &input_matrix(q),
            ),
            rel_diff(
                &DMatrix::from_column_slice(5, 5, d_hand.as_slice()),
                &mass_matrix(&free, &q5),
            ),
        ];
        for (w, e) in worst.iter_mut().zip(errs) {
            *w = w.max(e);
        }
    }
    let n = states.len();
    [
        "oracle_inertia",
        "oracle_gravity",
        "oracle_connection",
        "oracle_input",
        "oracle_double_stance_mass",
    ]
    .iter()
    .zip(worst)
    .map(|(name, w)| {
        Check::new(
            name,
            w,
            1e-8,
            format!("max relative difference over {n} states"),
        )
    })
    .collect()
}

fn energy_check(p: &RobotParams, rng: &mut ChaCha8Rng) -> Check {
    let tol = Tolerances {
        rtol: 1e-11,
        atol: 1e-13,
        max_step: 0.01,
    };
    let horizon = 2.0;
    let mut worst = 0.0f64;
    for _ in 0..5 {
        let x0 = random_gait_state(rng);
        let lam = random_incline(rng);
        let energy = |y: &nalgebra::SVector<f64, 6>| {
            let x = SwingState::new(y.fixed_rows::<3>(0).into(), y.fixed_rows::<3>(3).into());
            dynamics::total_energy(&x, p, lam)
        };
        let f = |_t: f64, y: &nalgebra::SVector<f64, 6>| {
            let x = SwingState::new(y.fixed_rows::<3>(0).into(), y.fixed_rows::<3>(3).into());
            let a = dynamics::swing_accel(&x, &Vector2::zeros(), p, lam)?;
            let mut d = nalgebra::SVector::<f64, 6>::zeros();
            d.fixed_rows_mut::<3>(0).copy_from(&x.dq);
            d.fixed_rows_mut::<3>(3).copy_from(&a);
            Ok(d)
        };
        let y0 = nalgebra::SVector::<f64, 6>::from_iterator(x0.as_array());
        let e0 = energy(&y0);
        let scale = 1f64.max(e0.abs()).max(dynamics::kinetic_energy(&x0, p));
        let Ok(mut solver) = Dopri5::new(f, 0.0, y0, tol) else {
            return Check::new(
                "energy_conservation",
                f64::INFINITY,
                1e-8,
                "solver failed".into(),
            );
        };
        while solver.t() < horizon {
            if solver.step().is_err() {
                return Check::new(
                    "energy_conservation",
                    f64::INFINITY,
                    1e-8,
                    "solver failed".into(),
                );
            }
            worst = worst.max((energy(solver.y()) - e0).abs() / scale);
        }
    }
    Check::new(
        "energy_conservation",
        worst,
        1e-8,
        format!(
            "relative energy drift of unforced swing over {horizon} s, rtol {:e}",
            tol.rtol
        ),
    )
}

fn consistency_check(
    p: &RobotParams,
    states: &[(SwingState, Incline)],
    rng: &mut ChaCha8Rng,
) -> Check {
    let t = GaitTargets::nominal();
    let worst = states
        .iter()
        .map(|(x, lam)| {
            let u = Vector2::new(rng.random_range(-50.0..50.0), rng.random_range(-50.0..50.0));
            reduced::consistency_check(x, &u, p, *lam, &t)
        })
        .fold(0.0, f64::max);
    Check::new(
        "reduced_consistency",
        worst,
        1e-6,
        format!(
            "scaled residual of the decoupled model over {} states",
            states.len()
        ),
    )
}

fn impact_checks(p: &RobotParams, samples: usize, rng: &mut ChaCha8Rng) -> Vec<Check> {
    let chain = PinnedChain(*p);
    let (mut contact, mut momentum) = (0.0f64, 0.0f64);
    let mut failures = 0;
    for _ in 0..samples {
        let q1 = rng.random_range(0.05..0.5);
        let x = SwingState::new(
            Vector3::new(q1, -q1, rng.random_range(1.0..2.2)),
            Vector3::new(
                rng.random_range(0.2..3.0),
                rng.random_range(-3.0..0.0),
                rng.random_range(-1.0..1.0),
            ),
        );
        let Ok(res) = impact::reset_map(&x, p) else {
            failures += 1;
            continue;
        };
        contact = contact.max(res.post_contact_velocity.amax());
        let foot = impact::swing_foot_position(&impact::ExtendedConfig::from_stance(&x.q, p), p);
        let before = angular_momentum(&chain, x.q.as_slice(), x.dq.as_slice(), foot);
        let after = angular_momentum(
            &chain,
            res.x_plus.q.as_slice(),
            res.x_plus.dq.as_slice(),
            Vector2::zeros(),
        );
        momentum = momentum.max((after - before).abs() / before.abs().max(1e-3));
    }
    if failures > 0 {
        contact = f64::INFINITY;
        momentum = f64::INFINITY;
    }
    vec![
        Check::new(
            "impact_contact_velocity",
            contact,
            1e-8,
            format!("landing-foot speed after impact over {samples} states, {failures} failures"),
        ),
        Check::new(
            "impact_angular_momentum",
            momentum,
            1e-6,
            format!(
                "relative change of angular momentum about the landing foot over {samples} states"
            ),
        ),
    ]
}

/// With a matched model the loop reduces to `I_e (ω̇_e + Γ_e ω_e) = τ̃`.
fn regularized_loop_check(p: &RobotParams, samples: usize, rng: &mut ChaCha8Rng) -> Check {
    let mut worst = 0.0f64;
    let mut skipped = 0;
    for _ in 0..samples {
        let x = random_gait_state(rng);
        let lam = random_incline(rng);
        let mut cs = ControllerState::new(*p, lam, GaitTargets::nominal());
        let integral = Vector2::new(rng.random_range(-0.1..0.1), rng.random_range(-0.1..0.1));
        cs.integral = integral;
        let Ok(out) = cs.control(&x, &integral) else {
            skipped += 1;
            continue;
        };
        let Some(ddq) = acceleration(p, &x, &out.u, lam) else {
            skipped += 1;
            continue;
        };
        let rs = reduced::to_reduced(&x, &cs.targets);
        let acc = reduced::velocity_map_inverse() * ddq;
        let (ie, _) = reduced::reduced_inertias(&rs, p);
        let gamma = controller::connection_matrix_e(&rs, p);
        let lhs = ie * (Vector2::new(acc[0], acc[1]) + gamma * rs.omega_e);
        worst = worst.max((lhs - out.tau_tilde).amax() / 1f64.max(out.tau_tilde.amax()));
    }
    Check::new(
        "regularized_closed_loop",
        worst,
        1e-6,
        format!("scaled residual against oracle accelerations, {skipped} singular states skipped"),
    )
}

/// Transports `ω_I` with zero forcing along a prescribed shape path and
/// tracks `ω_Iᵀ I_e ω_I`.
fn covariant_norm_check(p: &RobotParams, rng: &mut ChaCha8Rng) -> Check {
    let tol = Tolerances {
        rtol: 1e-11,
        atol: 1e-13,
        max_step: 0.01,
    };
    let mut worst = 0.0f64;
    for _ in 0..5 {
        let a0 = rng.random_range(-1.5..-0.5);
        let b0 = rng.random_range(-0.8..0.8);
        let (wa, wb) = (rng.random_range(0.5..3.0), rng.random_range(0.5..3.0));
        let shape = move |t: f64| ReducedState {
            q_e: Vector2::zeros(),
            omega_e: Vector2::zeros(),
            q1: 0.0,
            omega1: 0.0,
            alpha: a0 + 0.4 * (wa * t).sin(),
            beta: b0 + 0.5 * (wb * t).sin(),
            omega_s: Vector2::new(0.4 * wa * (wa * t).cos(), 0.5 * wb * (wb * t).cos()),
        };
        let f = |t: f64, y: &Vector2<f64>| Ok(-(controller::connection_matrix_e(&shape(t), p) * y));
        let norm =
            |t: f64, y: &Vector2<f64>| y.dot(&(reduced::reduced_inertias(&shape(t), p).0 * y));
        let y0 = Vector2::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
        let n0 = norm(0.0, &y0);
        let Ok(mut solver) = Dopri5::new(f, 0.0, y0, tol) else {
            return Check::new(
                "covariant_integrator_norm",
                f64::INFINITY,
                1e-6,
                "solver failed".into(),
            );
        };
        while solver.t() < 3.0 {
            if solver.step().is_err() {
                return Check::new(
                    "covariant_integrator_norm",
                    f64::INFINITY,
                    1e-6,
                    "solver failed".into(),
                );
            }
            worst = worst.max((norm(solver.t(), solver.y()) - n0).abs() / n0);
        }
    }
    Check::new(
        "covariant_integrator_norm",
        worst,
        1e-6,
        "relative drift of the I_e norm of the integral state under zero forcing".into(),
    )
}

fn skew_checks(p: &RobotParams, states: &[(SwingState, Incline)]) -> Vec<Check> {
    let chain = PinnedChain(*p);
    let t = GaitTargets::nominal();
    let (mut full, mut error) = (0.0f64, 0.0f64);
    for (x, _) in states {
        let idot = mass_matrix_rate(&chain, x.q.as_slice(), x.dq.as_slice());
        let gamma = to_dmatrix3(&dynamics::connection_matrix(&x.q, &x.dq, p));
        let n = &idot - 2.0 * gamma;
        full = full.max((&n + n.transpose()).amax() / 1f64.max(idot.amax()));

        let rs = reduced::to_reduced(x, &t);
        let ie_dot = shape_inertia_rate(&rs, p);
        let (ie, _) = reduced::reduced_inertias(&rs, p);
        let ne = ie_dot - 2.0 * ie * controller::connection_matrix_e(&rs, p);
        error = error.max((ne + ne.transpose()).amax() / 1f64.max(ie_dot.amax()));
    }
    vec![
        Check::new(
            "full_connection_skew",
            full,
            1e-8,
            "symmetric part of İ − 2Γ, İ from the oracle".into(),
        ),
        Check::new(
            "error_connection_skew",
            error,
            1e-6,
            "symmetric part of İ_e − 2 I_e Γ_e, İ_e by central differences".into(),
        ),
    ]
}

/// `İ_e` along the shape velocity by fourth-order central differences.
fn shape_inertia_rate(rs: &ReducedState, p: &RobotParams) -> Matrix2<f64> {
    let h = 1e-4;
    let at = |s: f64| {
        reduced::shape_inertias(rs.alpha + s * rs.omega_s[0], rs.beta + s * rs.omega_s[1], p).0
    };
    (at(-2.0 * h) - 8.0 * at(-h) + 8.0 * at(h) - at(2.0 * h)) / (12.0 * h)
}
