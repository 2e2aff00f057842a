//! Resonance points `ν_{j,±}` inside the bands and their exponent coefficients.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use serde::Serialize;

use crate::error::{domain, Error, Result};
use crate::floquet::{bloch_data, discriminant, illinois, k_from_delta, BandStructure, BlochData, DEFAULT_L_MAX};
use crate::linalg::C64;
use crate::model_system::{reduce_to_model, theta_functional};
use crate::potentials::{PeriodicPotential, ProblemConfig, WvnTerm};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum Sign {
    #[serde(rename = "+")]
    Plus,
    #[serde(rename = "-")]
    Minus,
}

impl Sign {
    pub fn is_plus(self) -> bool {
        self == Sign::Plus
    }
}

impl fmt::Display for Sign {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(if self.is_plus() { "+" } else { "-" })
    }
}

impl FromStr for Sign {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "+" | "plus" => Ok(Sign::Plus),
            "-" | "minus" => Ok(Sign::Minus),
            _ => Err(Error::Parse(format!("sign must be plus or minus, got {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ResonancePoint {
    pub band_index: usize,
    pub sign: Sign,
    pub nu: f64,
    pub k_target: f64,
    pub beta: f64,
    pub alpha_cr: Option<f64>,
}

/// Fractional part of `aω/π`.
pub fn frequency_fraction(a: f64, omega: f64) -> f64 {
    let r = a * omega / PI;
    r - r.floor()
}

/// Quasi-momentum targets `(k₊, k₋)` on band `j`.
pub fn k_targets(a: f64, omega: f64, j: usize) -> (f64, f64) {
    let fr = frequency_fraction(a, omega);
    (PI * (j as f64 + 1.0 - fr), PI * (j as f64 + fr))
}

/// Solve `k(λ) = target` inside band `j`.
pub fn solve_quasimomentum(q: &PeriodicPotential, bands: &BandStructure, j: usize, target: f64) -> Result<f64> {
    let band = bands.band(j)?;
    let lo_k = PI * j as f64;
    if !(target > lo_k && target < lo_k + PI) {
        return Err(domain(format!("target k = {target} is not inside band {j}")));
    }
    let f = |l: f64| discriminant(q, l).map(|d| k_from_delta(d, j) - target);
    illinois(f, band.low, band.high, lo_k - target, lo_k + PI - target)
}

/// `β = |c ∫₀^a ψ±² e^{2iωt} dt| / (2a|W|)` at the Bloch data of a resonance point.
pub fn beta_coefficient(wvn: &WvnTerm, bloch: &BlochData, sign: Sign) -> Result<f64> {
    if wvn.c == 0.0 {
        return Ok(0.0);
    }
    let integral = bloch.resonant_integral(sign.is_plus(), wvn.omega)?;
    Ok(wvn.c.abs() * integral.norm() / (2.0 * bloch.period * bloch.wronskian.norm()))
}

/// Both resonance points of band `j` with their exponent coefficients.
pub fn resonance_points(
    q: &PeriodicPotential,
    bands: &BandStructure,
    wvn: &WvnTerm,
    j: usize,
) -> Result<(ResonancePoint, ResonancePoint)> {
    let a = q.period();
    wvn.check_non_resonant(a)?;
    let (kp, km) = k_targets(a, wvn.omega, j);
    let point = |sign: Sign, k_target: f64| -> Result<ResonancePoint> {
        let nu = solve_quasimomentum(q, bands, j, k_target)?;
        let bloch = bloch_data(q, bands, nu, j, DEFAULT_L_MAX)?;
        let beta = beta_coefficient(wvn, &bloch, sign)?;
        Ok(ResonancePoint { band_index: j, sign, nu, k_target, beta, alpha_cr: None })
    };
    Ok((point(Sign::Plus, kp)?, point(Sign::Minus, km)?))
}

/// Resonance points of every computed band, in band order, `+` before `−`.
pub fn all_resonance_points(q: &PeriodicPotential, bands: &BandStructure, wvn: &WvnTerm) -> Result<Vec<ResonancePoint>> {
    use rayon::prelude::*;
    let pairs: Vec<Result<(ResonancePoint, ResonancePoint)>> = (0..bands.bands.len())
        .into_par_iter()
        .map(|j| resonance_points(q, bands, wvn, j))
        .collect();
    let mut out = Vec::with_capacity(2 * pairs.len());
    for p in pairs {
        let (a, b) = p?;
        out.push(a);
        out.push(b);
    }
    Ok(out)
}

/// Periods used for `Θ` when locating `α_cr`.
pub const CRITICAL_ALPHA_PERIODS: u64 = 1 << 14;

/// Relative size of the imaginary part or the rank defect that is still
/// accepted as a zero of the `Θ` functional.
const ALPHA_DEFECT_TOL: f64 = 1e-3;

/// Zero in `[0, π)` of `α ↦ ℓ_D sin α + ℓ_N cos α`, by bisection on the angle.
///
/// The functional is real up to rounding; `Err` if it is not or if it has
/// no sign change.
pub fn functional_zero(ld: C64, ln: C64) -> Result<f64> {
    let scale = ld.norm().max(ln.norm());
    if scale == 0.0 || !scale.is_finite() {
        return Err(Error::Unconverged(format!("degenerate functional ({ld}, {ln})")));
    }
    let imag = ld.im.abs().max(ln.im.abs()) / scale;
    if imag > ALPHA_DEFECT_TOL {
        return Err(Error::Unconverged(format!("functional is not real: relative imaginary part {imag:e}")));
    }
    let g = |a: f64| ld.re * a.sin() + ln.re * a.cos();
    if g(0.0) == 0.0 {
        return Ok(0.0);
    }
    // g(π) = −g(0), so a bracket exists on a coarse scan.
    let steps = 64;
    let h = PI / steps as f64;
    let mut lo = 0.0;
    let mut glo = g(lo);
    for i in 1..=steps {
        let hi = if i == steps { PI } else { i as f64 * h };
        let ghi = g(hi);
        if ghi == 0.0 {
            return Ok(if i == steps { 0.0 } else { hi });
        }
        if glo.signum() != ghi.signum() {
            let (mut a, mut b, mut fa) = (lo, hi, glo);
            while b - a > 1e-15 {
                let m = 0.5 * (a + b);
                let fm = g(m);
                if fm.signum() == fa.signum() {
                    a = m;
                    fa = fm;
                } else {
                    b = m;
                }
            }
            let root = 0.5 * (a + b);
            return Ok(if root >= PI { 0.0 } else { root });
        }
        lo = hi;
        glo = ghi;
    }
    Err(Error::Unconverged("no sign change of the Θ functional".into()))
}

/// Boundary angle whose solution is subordinate at `ν`.
pub fn critical_alpha(cfg: &ProblemConfig, bands: &BandStructure, rp: &ResonancePoint) -> Result<f64> {
    critical_alpha_with(cfg, bands, rp, CRITICAL_ALPHA_PERIODS)
}

/// [`critical_alpha`] with `Θ` built from `n_end` periods.
pub fn critical_alpha_with(cfg: &ProblemConfig, bands: &BandStructure, rp: &ResonancePoint, n_end: u64) -> Result<f64> {
    if !(rp.beta > 0.0) {
        return Err(domain(format!("α_cr needs β > 0 at ν = {}", rp.nu)));
    }
    let red = reduce_to_model(cfg, bands, rp, rp.nu)?;
    let (ld, ln, th) = theta_functional(&red, n_end)?;
    let (s1, s2) = th.sigma;
    let attach = |e: Error| Error::Unconverged(format!("{e}; Θ singular values ({s1:e}, {s2:e})"));
    functional_zero(ld, ln).map_err(attach)
}
