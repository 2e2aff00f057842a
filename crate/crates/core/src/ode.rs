//! Adaptive explicit Runge-Kutta integration of order 8(5,3).
//!
//! The integrator works on fixed-size real state arrays. Right-hand sides
//! with jump discontinuities are handled by the caller splitting the interval
//! at the breakpoints; each call to [`Dop853::integrate`] lands exactly on its
//! end point.

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OdeError {
    #[error("step size underflow at x = {x}")]
    StepUnderflow { x: f64 },
    #[error("step budget of {max_steps} exhausted at x = {x}")]
    TooManySteps { x: f64, max_steps: usize },
    #[error("non-finite state at x = {x}")]
    NonFinite { x: f64 },
}

/// Right-hand side of `y' = f(x, y)`.
pub trait OdeSystem<const N: usize> {
    fn rhs(&self, x: f64, y: &[f64; N]) -> [f64; N];
}

impl<F, const N: usize> OdeSystem<N> for F
where
    F: Fn(f64, &[f64; N]) -> [f64; N],
{
    fn rhs(&self, x: f64, y: &[f64; N]) -> [f64; N] {
        self(x, y)
    }
}

const C: [f64; 12] = [
    0.0,
    5.260_015_195_876_773E-2,
    7.890_022_793_815_16E-2,
    1.183_503_419_072_274E-1,
    2.816_496_580_927_726E-1,
    3.333_333_333_333_333E-1,
    0.25,
    3.076_923_076_923_077E-1,
    6.512_820_512_820_513E-1,
    0.6,
    8.571_428_571_428_571E-1,
    1.0,
];

const A: [[f64; 11]; 12] = [
    [0.0; 11],
    [5.260_015_195_876_773E-2, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [1.972_505_698_453_79E-2, 5.917_517_095_361_37E-2, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [2.958_758_547_680_685E-2, 0.0, 8.876_275_643_042_054E-2, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [
        2.413_651_341_592_667E-1,
        0.0,
        -8.845_494_793_282_861E-1,
        9.248_340_032_617_92E-1,
        0.0,
        0.0,
        0.0,
        0.0,
        0.0,
        0.0,
        0.0,
    ],
    [
        3.703_703_703_703_703_5E-2,
        0.0,
        0.0,
        1.708_286_087_294_738_6E-1,
        1.254_676_875_668_224_2E-1,
        0.0,
        0.0,
        0.0,
        0.0,
        0.0,
        0.0,
    ],
    [
        3.710_937_5E-2,
        0.0,
        0.0,
        1.702_522_110_195_440_5E-1,
        6.021_653_898_045_596E-2,
        -1.757_812_5E-2,
        0.0,
        0.0,
        0.0,
        0.0,
        0.0,
    ],
    [
        3.709_200_011_850_479E-2,
        0.0,
        0.0,
        1.703_839_257_122_399_8E-1,
        1.072_620_304_463_732_8E-1,
        -1.531_943_774_862_440_2E-2,
        8.273_789_163_814_023E-3,
        0.0,
        0.0,
        0.0,
        0.0,
    ],
    [
        6.241_109_587_160_757E-1,
        0.0,
        0.0,
        -3.360_892_629_446_941_4,
        -8.682_193_468_417_26E-1,
        2.759_209_969_944_671E1,
        2.015_406_755_047_789_4E1,
        -4.348_988_418_106_996E1,
        0.0,
        0.0,
        0.0,
    ],
    [
        4.776_625_364_382_643_4E-1,
        0.0,
        0.0,
        -2.488_114_619_971_667_7,
        -5.902_908_268_368_43E-1,
        2.123_005_144_818_119_3E1,
        1.527_923_363_288_242_3E1,
        -3.328_821_096_898_486E1,
        -2.033_120_170_850_862_7E-2,
        0.0,
        0.0,
    ],
    [
        -9.371_424_300_859_873E-1,
        0.0,
        0.0,
        5.186_372_428_844_064,
        1.091_437_348_996_729_5,
        -8.149_787_010_746_927,
        -1.852_006_565_999_696E1,
        2.273_948_709_935_050_5E1,
        2.493_605_552_679_652_3,
        -3.046_764_471_898_219_6,
        0.0,
    ],
    [
        2.273_310_147_516_538,
        0.0,
        0.0,
        -1.053_449_546_673_725E1,
        -2.000_872_058_224_862_5,
        -1.795_893_186_311_88E1,
        2.794_888_452_941_996E1,
        -2.858_998_277_135_023_5,
        -8.872_856_933_530_63,
        1.236_056_717_579_430_3E1,
        6.433_927_460_157_636E-1,
    ],
];

const B: [f64; 12] = [
    5.429_373_411_656_876_5E-2,
    0.0,
    0.0,
    0.0,
    0.0,
    4.450_312_892_752_409,
    1.891_517_899_314_500_3,
    -5.801_203_960_010_585,
    3.111_643_669_578_199E-1,
    -1.521_609_496_625_161E-1,
    2.013_654_008_040_303_4E-1,
    4.471_061_572_777_259E-2,
];

// Fifth-order error weights.
const ER: [f64; 12] = [
    1.312_004_499_419_488E-2,
    0.0,
    0.0,
    0.0,
    0.0,
    -1.225_156_446_376_204_4,
    -4.957_589_496_572_502E-1,
    1.664_377_182_454_986_4,
    -3.503_288_487_499_736_6E-1,
    3.341_791_187_130_175E-1,
    8.192_320_648_511_571E-2,
    -2.235_530_786_388_629_4E-2,
];

// Third-order embedded weights on stages 1, 9 and 12.
const BHH: [f64; 3] = [0.244_094_488_188_976, 0.733_846_688_281_611, 0.022_058_823_529_411_8];

/// A few ulps toward the interior of the step, so that right-hand sides with
/// a jump exactly at a step end are sampled on the correct side.
fn nudge(x: f64, dir: f64) -> f64 {
    (x.abs() * 4.0 * f64::EPSILON + f64::MIN_POSITIVE).copysign(dir)
}

/// Integrator settings plus the step size carried between calls.
#[derive(Debug, Clone)]
pub struct Dop853 {
    pub rtol: f64,
    pub atol: f64,
    pub h_max: f64,
    pub max_steps: usize,
    h: f64,
    /// Accepted steps since construction.
    pub accepted: usize,
}

impl Default for Dop853 {
    fn default() -> Self {
        Self::new(1e-10, 1e-12)
    }
}

impl Dop853 {
    pub fn new(rtol: f64, atol: f64) -> Self {
        Self { rtol, atol, h_max: f64::INFINITY, max_steps: 50_000_000, h: 0.0, accepted: 0 }
    }

    pub fn with_h_max(mut self, h_max: f64) -> Self {
        self.h_max = h_max;
        self
    }

    /// Forget the carried step size.
    pub fn reset(&mut self) {
        self.h = 0.0;
    }

    fn stages<S: OdeSystem<N>, const N: usize>(
        sys: &S,
        x: f64,
        y: &[f64; N],
        f0: &[f64; N],
        h: f64,
    ) -> ([[f64; N]; 12], [f64; N]) {
        let mut k = [[0.0; N]; 12];
        k[0] = *f0;
        let x_end = x + h - nudge(x + h, h);
        for s in 1..12 {
            let mut ys = *y;
            for (j, kj) in k.iter().enumerate().take(s) {
                let a = A[s][j];
                if a != 0.0 {
                    for i in 0..N {
                        ys[i] += h * a * kj[i];
                    }
                }
            }
            let xs = if s == 11 { x_end } else { x + C[s] * h };
            k[s] = sys.rhs(xs, &ys);
        }
        let mut inc = [0.0; N];
        for (s, ks) in k.iter().enumerate() {
            if B[s] != 0.0 {
                for i in 0..N {
                    inc[i] += B[s] * ks[i];
                }
            }
        }
        (k, inc)
    }

    fn initial_step<S: OdeSystem<N>, const N: usize>(
        &self,
        sys: &S,
        x: f64,
        y: &[f64; N],
        f0: &[f64; N],
        dir: f64,
        span: f64,
    ) -> f64 {
        let mut dnf = 0.0;
        let mut dny = 0.0;
        for i in 0..N {
            let sk = self.atol + self.rtol * y[i].abs();
            dnf += (f0[i] / sk).powi(2);
            dny += (y[i] / sk).powi(2);
        }
        let mut h = if dnf <= 1e-10 || dny <= 1e-10 { 1e-6 } else { (dny / dnf).sqrt() * 0.01 };
        h = h.min(self.h_max).min(span);
        let mut y1 = *y;
        for i in 0..N {
            y1[i] += dir * h * f0[i];
        }
        let f1 = sys.rhs(x + dir * h, &y1);
        let mut der2 = 0.0;
        for i in 0..N {
            let sk = self.atol + self.rtol * y[i].abs();
            der2 += ((f1[i] - f0[i]) / sk).powi(2);
        }
        let der2 = der2.sqrt() / h;
        let der12 = der2.max(dnf.sqrt());
        let h1 = if der12 <= 1e-15 { (h * 1e-3).max(1e-6) } else { (0.01 / der12).powf(1.0 / 8.0) };
        (100.0 * h).min(h1).min(self.h_max).min(span)
    }

    /// Advance `y` from `x0` to `x1` (either direction).
    pub fn integrate<S: OdeSystem<N>, const N: usize>(
        &mut self,
        sys: &S,
        x0: f64,
        y0: [f64; N],
        x1: f64,
    ) -> Result<[f64; N], OdeError> {
        let mut y = y0;
        if x1 == x0 {
            return Ok(y);
        }
        let dir = (x1 - x0).signum();
        let mut x = x0;
        let mut f0 = sys.rhs(x + nudge(x, x1 - x0), &y);
        let mut h = if self.h > 0.0 {
            self.h.min(self.h_max)
        } else {
            self.initial_step(sys, x, &y, &f0, dir, (x1 - x0).abs())
        };
        let mut steps = 0usize;
        let mut last_rejected = false;
        loop {
            let remaining = (x1 - x).abs();
            let last = h >= remaining * (1.0 - 1e-12);
            let h_try = if last { remaining } else { h };
            if h_try < 1e-14 * x.abs().max(1.0) && !last {
                return Err(OdeError::StepUnderflow { x });
            }
            steps += 1;
            if steps > self.max_steps {
                return Err(OdeError::TooManySteps { x, max_steps: self.max_steps });
            }
            let hs = dir * h_try;
            let (k, inc) = Self::stages(sys, x, &y, &f0, hs);
            let mut y_new = y;
            for i in 0..N {
                y_new[i] += hs * inc[i];
            }
            let mut err = 0.0;
            let mut err2 = 0.0;
            for i in 0..N {
                let sk = self.atol + self.rtol * y[i].abs().max(y_new[i].abs());
                let e3 = inc[i] - BHH[0] * k[0][i] - BHH[1] * k[8][i] - BHH[2] * k[11][i];
                err2 += (e3 / sk).powi(2);
                let mut e5 = 0.0;
                for s in 0..12 {
                    e5 += ER[s] * k[s][i];
                }
                err += (e5 / sk).powi(2);
            }
            let mut deno = err + 0.01 * err2;
            if deno <= 0.0 {
                deno = 1.0;
            }
            let err = h_try * err * (1.0 / (N as f64 * deno)).sqrt();
            if !err.is_finite() {
                if h_try < 1e-14 * x.abs().max(1.0) {
                    return Err(OdeError::NonFinite { x });
                }
                h = h_try * 0.1;
                last_rejected = true;
                continue;
            }
            let fac11 = err.powf(0.125);
            if err <= 1.0 {
                self.accepted += 1;
                let mut fac = fac11 / 0.9;
                fac = fac.clamp(1.0 / 6.0, 3.0);
                let mut h_new = h_try / fac;
                if last_rejected {
                    h_new = h_new.min(h_try);
                }
                h_new = h_new.min(self.h_max);
                if last {
                    // keep the step the controller wanted, not the truncated one
                    self.h = if h_try < h { h } else { h_new };
                    return Ok(y_new);
                }
                x += hs;
                y = y_new;
                if y.iter().any(|v| !v.is_finite()) {
                    return Err(OdeError::NonFinite { x });
                }
                f0 = sys.rhs(x + nudge(x, hs), &y);
                h = h_new;
                last_rejected = false;
            } else {
                h = h_try / (fac11 / 0.9).min(3.0);
                last_rejected = true;
            }
        }
    }

    /// Integrate across sorted interior breakpoints, stopping exactly at each.
    pub fn integrate_piecewise<S: OdeSystem<N>, const N: usize>(
        &mut self,
        sys: &S,
        x0: f64,
        y0: [f64; N],
        x1: f64,
        breaks: &[f64],
    ) -> Result<[f64; N], OdeError> {
        let mut y = y0;
        let mut x = x0;
        for &b in breaks {
            if b > x && b < x1 {
                y = self.integrate(sys, x, y, b)?;
                x = b;
            }
        }
        self.integrate(sys, x, y, x1)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn harmonic_oscillator_one_period() {
        let sys = |_x: f64, y: &[f64; 2]| [y[1], -y[0]];
        let mut ode = Dop853::new(1e-12, 1e-14);
        let y = ode.integrate(&sys, 0.0, [0.0, 1.0], 2.0 * std::f64::consts::PI).unwrap();
        assert!(y[0].abs() < 1e-11, "{y:?}");
        assert!((y[1] - 1.0).abs() < 1e-11);
    }

    #[test]
    fn exponential_growth_and_reverse() {
        let sys = |_x: f64, y: &[f64; 1]| [y[0]];
        let mut ode = Dop853::new(1e-12, 0.0);
        let y = ode.integrate(&sys, 0.0, [1.0], 3.0).unwrap();
        assert!((y[0] / 3f64.exp() - 1.0).abs() < 1e-11);
        let back = ode.integrate(&sys, 3.0, y, 0.0).unwrap();
        assert!((back[0] - 1.0).abs() < 1e-11);
    }

    #[test]
    fn piecewise_constant_forcing() {
        let sys = |x: f64, _y: &[f64; 1]| [if x < 0.3 { 1.0 } else { -2.0 }];
        let mut ode = Dop853::default();
        let y = ode.integrate_piecewise(&sys, 0.0, [0.0], 1.0, &[0.3]).unwrap();
        assert!((y[0] - (0.3 - 1.4)).abs() < 1e-12);
    }

    #[test]
    fn many_short_calls_land_on_endpoints() {
        let sys = |_x: f64, y: &[f64; 2]| [y[1], -4.0 * y[0]];
        let mut ode = Dop853::new(1e-11, 1e-13);
        let mut y = [1.0, 0.0];
        let n = 1000;
        for i in 0..n {
            y = ode.integrate(&sys, i as f64 * 0.01, y, (i + 1) as f64 * 0.01).unwrap();
        }
        assert!((y[0] - (20.0f64).cos()).abs() < 1e-9);
    }
}
