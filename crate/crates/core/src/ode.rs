//! Dormand–Prince 5(4) with FSAL and fourth-order dense output.

use nalgebra::SVector;

use crate::error::{Error, Result};

const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;

const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;

const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

const D1: f64 = -12715105075.0 / 11282082432.0;
const D3: f64 = 87487479700.0 / 32700410799.0;
const D4: f64 = -10690763975.0 / 1880347072.0;
const D5: f64 = 701980252875.0 / 199316789632.0;
const D6: f64 = -1453857185.0 / 822651844.0;
const D7: f64 = 69997945.0 / 29380423.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerances {
    pub rtol: f64,
    pub atol: f64,
    /// Largest permitted step (s).
    pub max_step: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            rtol: 1e-9,
            atol: 1e-11,
            max_step: 0.02,
        }
    }
}

/// An accepted step with its continuous extension.
#[derive(Debug, Clone, Copy)]
pub struct DenseStep<const N: usize> {
    pub t0: f64,
    pub t1: f64,
    pub y0: SVector<f64, N>,
    pub y1: SVector<f64, N>,
    rcont: [SVector<f64, N>; 5],
}

impl<const N: usize> DenseStep<N> {
    pub fn h(&self) -> f64 {
        self.t1 - self.t0
    }

    pub fn interpolate(&self, t: f64) -> SVector<f64, N> {
        let theta = (t - self.t0) / self.h();
        let theta1 = 1.0 - theta;
        let [r1, r2, r3, r4, r5] = &self.rcont;
        r1 + (r2 + (r3 + (r4 + r5 * theta1) * theta) * theta1) * theta
    }
}

/// Adaptive integrator bound to a right-hand side `f(t, y)`.
pub struct Dopri5<const N: usize, F> {
    f: F,
    tol: Tolerances,
    t: f64,
    y: SVector<f64, N>,
    k1: SVector<f64, N>,
    h: f64,
    rejected_last: bool,
}

impl<const N: usize, F> Dopri5<N, F>
where
    F: FnMut(f64, &SVector<f64, N>) -> Result<SVector<f64, N>>,
{
    pub fn new(mut f: F, t0: f64, y0: SVector<f64, N>, tol: Tolerances) -> Result<Self> {
        let k1 = f(t0, &y0)?;
        let h = initial_step(&y0, &k1, &tol);
        Ok(Self {
            f,
            tol,
            t: t0,
            y: y0,
            k1,
            h,
            rejected_last: false,
        })
    }

    pub fn t(&self) -> f64 {
        self.t
    }

    pub fn y(&self) -> &SVector<f64, N> {
        &self.y
    }

    /// Derivative at the current point.
    pub fn dy(&self) -> &SVector<f64, N> {
        &self.k1
    }

    /// Takes one accepted step, shrinking on rejection.
    pub fn step(&mut self) -> Result<DenseStep<N>> {
        loop {
            let h = self.h.min(self.tol.max_step);
            if h < 1e-14 * self.t.abs().max(1.0) {
                return Err(Error::StepSizeUnderflow { t: self.t });
            }
            let (y1, k7, err, rcont5) = self.attempt(h)?;
            let err_norm = self.error_norm(&self.y, &y1, &err);
            if err_norm.is_finite() && err_norm <= 1.0 {
                let mut fac = if err_norm == 0.0 {
                    5.0
                } else {
                    (0.9 * err_norm.powf(-0.2)).clamp(0.2, 5.0)
                };
                if self.rejected_last {
                    fac = fac.min(1.0);
                }
                self.rejected_last = false;
                let y0 = self.y;
                let r2 = y1 - y0;
                let r3 = h * self.k1 - r2;
                let r4 = r2 - h * k7 - r3;
                let step = DenseStep {
                    t0: self.t,
                    t1: self.t + h,
                    y0,
                    y1,
                    rcont: [y0, r2, r3, r4, rcont5],
                };
                self.t += h;
                self.y = y1;
                self.k1 = k7;
                self.h = h * fac;
                return Ok(step);
            }
            self.rejected_last = true;
            let fac = if err_norm.is_finite() {
                (0.9 * err_norm.powf(-0.2)).clamp(0.1, 0.9)
            } else {
                0.1
            };
            self.h = h * fac;
        }
    }

    /// Single step of exactly `h` from the current point without advancing.
    pub fn probe(&mut self, h: f64) -> Result<SVector<f64, N>> {
        if h == 0.0 {
            return Ok(self.y);
        }
        self.attempt(h).map(|(y1, ..)| y1)
    }

    #[allow(clippy::type_complexity)]
    fn attempt(
        &mut self,
        h: f64,
    ) -> Result<(
        SVector<f64, N>,
        SVector<f64, N>,
        SVector<f64, N>,
        SVector<f64, N>,
    )> {
        let (t, y, k1) = (self.t, self.y, self.k1);
        let f = &mut self.f;
        let k2 = f(t + C2 * h, &(y + h * A21 * k1))?;
        let k3 = f(t + C3 * h, &(y + h * (A31 * k1 + A32 * k2)))?;
        let k4 = f(t + C4 * h, &(y + h * (A41 * k1 + A42 * k2 + A43 * k3)))?;
        let k5 = f(
            t + C5 * h,
            &(y + h * (A51 * k1 + A52 * k2 + A53 * k3 + A54 * k4)),
        )?;
        let k6 = f(
            t + h,
            &(y + h * (A61 * k1 + A62 * k2 + A63 * k3 + A64 * k4 + A65 * k5)),
        )?;
        let y1 = y + h * (A71 * k1 + A73 * k3 + A74 * k4 + A75 * k5 + A76 * k6);
        let k7 = f(t + h, &y1)?;
        let err = h * (E1 * k1 + E3 * k3 + E4 * k4 + E5 * k5 + E6 * k6 + E7 * k7);
        let rcont5 = h * (D1 * k1 + D3 * k3 + D4 * k4 + D5 * k5 + D6 * k6 + D7 * k7);
        Ok((y1, k7, err, rcont5))
    }

    fn error_norm(&self, y0: &SVector<f64, N>, y1: &SVector<f64, N>, err: &SVector<f64, N>) -> f64 {
        let mut acc = 0.0;
        for i in 0..N {
            let sc = self.tol.atol + self.tol.rtol * y0[i].abs().max(y1[i].abs());
            acc += (err[i] / sc).powi(2);
        }
        (acc / N as f64).sqrt()
    }
}

fn initial_step<const N: usize>(
    y0: &SVector<f64, N>,
    f0: &SVector<f64, N>,
    tol: &Tolerances,
) -> f64 {
    let mut d0 = 0.0;
    let mut d1 = 0.0;
    for i in 0..N {
        let sc = tol.atol + tol.rtol * y0[i].abs();
        d0 += (y0[i] / sc).powi(2);
        d1 += (f0[i] / sc).powi(2);
    }
    let (d0, d1) = ((d0 / N as f64).sqrt(), (d1 / N as f64).sqrt());
    let h = if d0 < 1e-5 || d1 < 1e-5 {
        1e-6
    } else {
        0.01 * d0 / d1
    };
    h.min(tol.max_step)
}
