//! The acceptance suite: nine end-to-end checks with fixed tolerances,
//! shared by the `verify` subcommand and the `acceptance` test target.

use std::f64::consts::PI;
use std::time::{Duration, Instant};

use rayon::prelude::*;
use serde::Serialize;

use crate::error::Result;
use crate::floquet::{band_edges, BandStructure};
use crate::linalg::{vnorm, vsub, Vec2, C64};
use crate::model_system::{
    horizon_for, interchange_check, limit_ode_solve, model_density, run_product, theta_map, InterchangeOptions,
    ModelDensityOptions, ModelParams, StepSource,
};
use crate::potentials::{PeriodicPotential, ProblemConfig, SummablePerturbation, WvnTerm};
use crate::resonance::{all_resonance_points, resonance_points, ResonancePoint, Sign};
use crate::spectral::{exponent_fit, grid_sum, spectral_density, DensitySample, Side, SpectralOptions};

pub const CRITERIA: [u8; 9] = [1, 2, 3, 4, 5, 6, 7, 8, 9];

#[derive(Debug, Clone, Serialize)]
pub struct CriterionReport {
    pub id: u8,
    pub name: &'static str,
    pub passed: bool,
    /// Measured quantities against their tolerances.
    pub detail: String,
    pub seconds: f64,
    /// Wall-clock budget, when the criterion states one.
    pub budget_seconds: Option<f64>,
}

impl CriterionReport {
    pub fn line(&self) -> String {
        let budget = self.budget_seconds.map_or(String::new(), |b| format!(" / {b:.0}s"));
        format!(
            "criterion {} [{}] {}: {} ({:.1}s{})",
            self.id,
            if self.passed { "PASS" } else { "FAIL" },
            self.name,
            self.detail,
            self.seconds,
            budget
        )
    }
}

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: String) -> Result<Outcome> {
    Ok(Outcome { passed, detail })
}

fn name_of(id: u8) -> &'static str {
    match id {
        1 => "free band edges",
        2 => "free resonance point",
        3 => "power-law zero",
        4 => "rank-one limit map",
        5 => "limit interchange",
        6 => "uniform a priori bound",
        7 => "cross-channel density",
        8 => "unperturbed density",
        9 => "finite grid sum",
        _ => "unknown",
    }
}

fn budget_of(id: u8) -> Option<f64> {
    match id {
        1 => Some(5.0),
        2 | 4 | 8 => Some(10.0),
        5 | 6 => Some(60.0),
        _ => None,
    }
}

/// Run one criterion by number (1..=9).
pub fn run_criterion(id: u8) -> CriterionReport {
    let start = Instant::now();
    let res = match id {
        1 => free_band_edges(),
        2 => free_resonance(),
        3 => power_law_zero(),
        4 => rank_one_theta(),
        5 => limit_interchange(),
        6 => a_priori_bound(),
        7 => cross_channel(),
        8 => unperturbed_density(),
        9 => finite_grid_sum(),
        _ => outcome(false, format!("no criterion {id}")),
    };
    let elapsed = start.elapsed();
    let budget = budget_of(id);
    let (passed, detail) = match res {
        Ok(o) => (o.passed, o.detail),
        Err(e) => (false, format!("error: {e}")),
    };
    let in_time = budget.map_or(true, |b| elapsed <= Duration::from_secs_f64(b));
    CriterionReport {
        id,
        name: name_of(id),
        passed: passed && in_time,
        detail: if in_time { detail } else { format!("{detail}; over the time budget") },
        seconds: elapsed.as_secs_f64(),
        budget_seconds: budget,
    }
}

pub fn run_all() -> Vec<CriterionReport> {
    CRITERIA.iter().map(|&id| run_criterion(id)).collect()
}

fn free_setup(c: f64, omega: f64, lambda_max: f64) -> Result<(ProblemConfig, BandStructure)> {
    let cfg = ProblemConfig::free(1.0, c, omega, 0.0, 0.0)?;
    let bands = band_edges(&cfg.periodic, lambda_max)?;
    Ok((cfg, bands))
}

fn free_minus_point(cfg: &ProblemConfig, bands: &BandStructure) -> Result<ResonancePoint> {
    Ok(resonance_points(&cfg.periodic, bands, &cfg.wvn, 0)?.1)
}

fn free_band_edges() -> Result<Outcome> {
    let q = PeriodicPotential::zero(1.0)?;
    let bands = band_edges(&q, 20.0 * PI * PI)?;
    let mut worst: f64 = 0.0;
    for j in 0..=3 {
        let b = bands.band(j)?;
        let (lo, hi) = ((PI * j as f64).powi(2), (PI * (j + 1) as f64).powi(2));
        worst = worst.max((b.low - lo).abs()).max((b.high - hi).abs());
    }
    outcome(worst < 1e-8, format!("max |edge − (πj)²| = {worst:.3e} (tol 1e-8)"))
}

fn free_resonance() -> Result<Outcome> {
    let (cfg, bands) = free_setup(1.0, 1.0, 50.0)?;
    let pts = all_resonance_points(&cfg.periodic, &bands, &cfg.wvn)?;
    let positive: Vec<&ResonancePoint> = pts.iter().filter(|p| p.beta > 1e-10).collect();
    let plus_max = pts.iter().filter(|p| p.sign == Sign::Plus).map(|p| p.beta).fold(0.0, f64::max);
    let (dnu, dbeta) = match positive.as_slice() {
        [p] => ((p.nu - 1.0).abs(), (p.beta - 0.25).abs()),
        _ => (f64::INFINITY, f64::INFINITY),
    };
    let ok = positive.len() == 1 && positive[0].sign == Sign::Minus && dnu < 1e-9 && dbeta < 1e-9 && plus_max < 1e-10;
    outcome(
        ok,
        format!(
            "{} point(s) with β > 0; |ν − 1| = {dnu:.2e}, |β − 1/4| = {dbeta:.2e} (tol 1e-9); max β₊ = {plus_max:.2e} (tol 1e-10)",
            positive.len()
        ),
    )
}

/// Mathieu `q = 2cos x` with `c` chosen so that `β = 1/4` at the band-0 point `ν₋`.
pub fn mathieu_quarter() -> Result<(ProblemConfig, BandStructure, ResonancePoint)> {
    let q = PeriodicPotential::fourier(2.0 * PI, vec![0.0, 2.0], vec![])?;
    let bands = band_edges(&q, 2.0)?;
    let omega = 0.3;
    let (_, unit) = resonance_points(&q, &bands, &WvnTerm::new(1.0, omega, 0.0)?, 0)?;
    let cfg = ProblemConfig::new(q, WvnTerm::new(0.25 / unit.beta, omega, 0.0)?, SummablePerturbation::Zero, 0.0)?;
    let (_, m) = resonance_points(&cfg.periodic, &bands, &cfg.wvn, 0)?;
    Ok((cfg, bands, m))
}

/// Largest grid offset of the Mathieu fit, as a fraction of the band width.
pub const MATHIEU_FIT_SPAN: f64 = 0.01;
/// Below `1e-3` of the band width the density needs more than `2^21` periods.
pub const MATHIEU_FIT_DECADES: f64 = 1.0;

fn power_law_zero() -> Result<Outcome> {
    let (cfg, bands) = free_setup(1.0, 1.0, 50.0)?;
    let m = free_minus_point(&cfg, &bands)?;
    let opts = SpectralOptions::default();
    let mut ok = true;
    let mut parts = Vec::new();
    for side in [Side::Left, Side::Right] {
        let f = exponent_fit(&cfg, &bands, &m, side, 9, 0.1, 2.0, &opts)?;
        let good = (f.fitted_exponent - 0.5).abs() <= 0.025
            && f.r_squared > 0.999
            && f.fitted_c > 0.0
            && f.fitted_c.is_finite();
        ok &= good;
        parts.push(format!(
            "free {side:?}: p = {:.4}, r² = {:.5}, C = {:.4}",
            f.fitted_exponent, f.r_squared, f.fitted_c
        ));
    }
    let (mcfg, mbands, mm) = mathieu_quarter()?;
    let width = mbands.band(0)?.width();
    for side in [Side::Left, Side::Right] {
        let f = exponent_fit(&mcfg, &mbands, &mm, side, 9, MATHIEU_FIT_SPAN * width, MATHIEU_FIT_DECADES, &opts)?;
        let rel = (f.fitted_exponent / f.predicted_exponent - 1.0).abs();
        ok &= rel <= 0.1;
        parts.push(format!("Mathieu {side:?}: p = {:.4} vs 2β = {:.4}", f.fitted_exponent, f.predicted_exponent));
    }
    outcome(ok, parts.join("; "))
}

fn rank_one_theta() -> Result<Outcome> {
    let mut ok = true;
    let mut parts = Vec::new();
    for beta in [0.25, 0.5, 1.0] {
        let mut p = ModelParams::unperturbed(beta, 0.0)?;
        let th = theta_map(&mut p, 1_000_000)?;
        let ratio = th.sigma.1 / th.sigma.0;
        let want = 1.0 / statrs::function::gamma::gamma(1.0 + beta);
        let d = (th.theta.0[0][0].re - want).abs();
        ok &= ratio < 1e-4 && d < 1e-4;
        parts.push(format!("β={beta}: σ₂/σ₁ = {ratio:.2e}, |Θ₁₁ − 1/Γ(1+β)| = {d:.1e}"));
    }
    outcome(ok, format!("{} (tol 1e-4 each)", parts.join("; ")))
}

/// `ε = 0.1·2^{−m}` down to about `1e-4`.
fn epsilon_grid() -> Vec<f64> {
    (0..=10).map(|m| 0.1 * 2f64.powi(-m)).collect()
}

fn unperturbed_source(beta: f64) -> impl Fn(f64) -> Result<Box<dyn StepSource + Send>> + Sync {
    move |eps| Ok(Box::new(ModelParams::unperturbed(beta, eps)?) as Box<dyn StepSource + Send>)
}

fn limit_interchange() -> Result<Outcome> {
    let beta = 0.25;
    let f: Vec2 = [C64::new(1.0, 0.0), C64::new(0.0, 0.0)];
    let opts = InterchangeOptions::default();
    let rep = interchange_check(unperturbed_source(beta), f, &epsilon_grid(), &opts)?;
    let y0 = 1.0;
    let ode = limit_ode_solve(beta, 1.0, rep.slow.at(y0), y0, opts.y_volterra)?;
    let channels = vnorm(&vsub(&rep.slow.limit, &ode.limit));
    outcome(
        rep.deviation < 1e-3 && channels < 1e-6,
        format!(
            "|ε→0 limit − Volterra limit| = {:.2e} (tol 1e-3); |Volterra − limit ODE| at y = {} is {channels:.2e} (tol 1e-6)",
            rep.deviation, opts.y_volterra
        ),
    )
}

fn a_priori_bound() -> Result<Outcome> {
    let beta = 0.25;
    let y_run = InterchangeOptions::default().y_run;
    let mut grid = vec![0.0];
    grid.extend(epsilon_grid());
    let norms: Vec<Result<f64>> = grid
        .par_iter()
        .map(|&eps| {
            let mut p = ModelParams::unperturbed(beta, eps)?;
            let n = if eps == 0.0 { 1_000_000 } else { horizon_for(eps, y_run, p.n_start) };
            Ok(run_product(&mut p, n, &[])?.max_norm)
        })
        .collect();
    let norms: Vec<f64> = norms.into_iter().collect::<Result<_>>()?;
    let hi = norms.iter().cloned().fold(0.0, f64::max);
    let lo = norms.iter().cloned().fold(f64::INFINITY, f64::min);
    outcome(
        hi / lo < 2.0,
        format!("max_n ‖∏B‖ in [{lo:.4}, {hi:.4}] over ε ∈ {{0}} ∪ [1e-4, 0.1]; ratio {:.3} (tol 2)", hi / lo),
    )
}

fn cross_channel() -> Result<Outcome> {
    let (cfg, bands) = free_setup(1.0, 1.0, 50.0)?;
    let m = free_minus_point(&cfg, &bands)?;
    let lambdas: Vec<f64> = (0..10).map(|i| 1.05 + 0.05 * i as f64).collect();
    let rows: Vec<Result<(DensitySample, DensitySample)>> = lambdas
        .par_iter()
        .map(|&l| {
            let s = spectral_density(&cfg, &bands, l, &SpectralOptions::default())?;
            let d = model_density(&cfg, &bands, &m, l, &ModelDensityOptions::default())?;
            Ok((s, d))
        })
        .collect();
    let mut worst: f64 = 0.0;
    let mut ok = true;
    for r in rows {
        let (s, d) = r?;
        let allowed = 3.0 * (s.rho_error + d.rho_error);
        let diff = (s.rho_prime - d.rho_prime).abs();
        ok &= diff <= allowed;
        worst = worst.max(diff / allowed);
    }
    outcome(ok, format!("max |Δρ'| / (3·Σ error) = {worst:.3} over 10 λ in [1.05, 1.5] (tol 1)"))
}

fn unperturbed_density() -> Result<Outcome> {
    let (cfg, bands) = free_setup(0.0, 1.0, 50.0)?;
    let mut worst: f64 = 0.0;
    for l in [1.0, 4.0, 9.0] {
        let s = spectral_density(&cfg, &bands, l, &SpectralOptions::default())?;
        worst = worst.max((s.rho_prime - l.sqrt() / PI).abs());
    }
    outcome(worst < 1e-6, format!("max |ρ' − √λ/π| = {worst:.2e} at λ ∈ {{1, 4, 9}} (tol 1e-6)"))
}

/// Geometric grid with ratio `2^{1/4}` from `d_max` down to `d_min`.
fn quarter_octave_grid(d_max: f64, d_min: f64) -> Vec<f64> {
    let n = (4.0 * (d_max / d_min).log2()).round() as i32;
    (0..=n).map(|i| d_max * 2f64.powf(-i as f64 / 4.0)).collect()
}

fn finite_grid_sum() -> Result<Outcome> {
    let (cfg, bands) = free_setup(5.0, 1.0, 50.0)?;
    let m = free_minus_point(&cfg, &bands)?;
    let d_max = 0.1;
    let opts = SpectralOptions::default();
    let mut ok = 2.0 * m.beta > 1.0;
    let mut parts = vec![format!("2β = {:.3}", 2.0 * m.beta)];
    for side in [Side::Right, Side::Left] {
        let s = if side == Side::Right { 1.0 } else { -1.0 };
        let ds = quarter_octave_grid(d_max, 2.5e-4);
        let samples: Vec<Result<DensitySample>> =
            ds.par_iter().map(|d| spectral_density(&cfg, &bands, m.nu + s * d, &opts)).collect();
        let samples: Vec<DensitySample> = samples.into_iter().collect::<Result<_>>()?;
        let sum_at = |d_min: f64| {
            let sel: Vec<DensitySample> = samples.iter().filter(|x| (x.lambda - m.nu).abs() >= d_min * (1.0 - 1e-9)).copied().collect();
            grid_sum(&sel, m.nu)
        };
        let sums = [sum_at(1e-3), sum_at(5e-4), sum_at(2.5e-4)];
        let change = sums.iter().map(|v| (v / sums[0] - 1.0).abs()).fold(0.0, f64::max);
        ok &= change < 0.05;
        let loose = samples.iter().filter(|x| !x.converged).count();
        parts.push(format!(
            "{side:?}: sums {:.6e}, {:.6e}, {:.6e}, max change {:.2e} ({loose} of {} samples above rel_tol)",
            sums[0],
            sums[1],
            sums[2],
            change,
            samples.len()
        ));
    }
    outcome(ok, format!("{} (tol 5%)", parts.join("; ")))
}
