//! The spectral channel: integrate `lφ = λφ` from the boundary, project onto
//! the Bloch basis, read off `A_α(λ)` and form `ρ' = 1/(2π|W||A|²)`.

use std::f64::consts::PI;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{domain, Error, Result};
use crate::floquet::{bloch_data, BandStructure, BlochData};
use crate::linalg::{Vec2, C64, ZERO};
use crate::ode::Dop853;
use crate::potentials::ProblemConfig;
use crate::resonance::ResonancePoint;

/// Fourier order used for Bloch data in this channel (only ψ₊ and W are needed).
const SPECTRAL_L_MAX: usize = 8;

#[derive(Debug, Clone, Copy, Serialize)]
pub struct DensitySample {
    pub lambda: f64,
    /// `A_α(λ)` in the normalization of the Bloch data used.
    pub a_coef: C64,
    pub rho_prime: f64,
    pub x_used: f64,
    /// Error estimate for `A`.
    pub est_error: f64,
    /// Error estimate for `ρ'`, `2ρ'·est_error/|A|`.
    pub rho_error: f64,
    /// Standard deviation of the projection over the final averaging window.
    pub window_std: f64,
    pub converged: bool,
}

/// `(φ, φ')` at the points of `grid` (sorted, within `[0, x_max]`).
pub fn solve_cauchy(cfg: &ProblemConfig, lambda: f64, grid: &[f64]) -> Result<Vec<(f64, [f64; 2])>> {
    solve_cauchy_tol(cfg, lambda, grid, 1e-10, 1e-12)
}

pub fn solve_cauchy_tol(cfg: &ProblemConfig, lambda: f64, grid: &[f64], rtol: f64, atol: f64) -> Result<Vec<(f64, [f64; 2])>> {
    if grid.windows(2).any(|w| w[1] < w[0]) || grid.first().is_some_and(|x| *x < 0.0) {
        return Err(domain("output grid must be sorted and nonnegative"));
    }
    let sys = |x: f64, y: &[f64; 2]| [y[1], (cfg.evaluate_total(x) - lambda) * y[0]];
    let mut ode = Dop853::new(rtol, atol);
    let mut y = [cfg.alpha.sin(), cfg.alpha.cos()];
    let mut x = 0.0;
    let mut out = Vec::with_capacity(grid.len());
    for &g in grid {
        if g > x {
            let breaks = cfg.breakpoints_between(x, g);
            y = ode.integrate_piecewise(&sys, x, y, g, &breaks)?;
            x = g;
        }
        out.push((g, y));
    }
    Ok(out)
}

/// `η(x) = [[ψ₋, ψ₊], [ψ₋', ψ₊']]⁻¹(φ, φ')` with the Bloch values `psi = (ψ₊(x), ψ₊'(x))`.
pub fn eta_projection(psi: &[C64; 2], phi: C64, dphi: C64) -> Result<Vec2> {
    let p = BlochData::bloch_matrix(psi);
    let inv = p.inverse().ok_or_else(|| domain("Bloch matrix is singular"))?;
    let cond = p.frobenius() * inv.frobenius();
    if cond > 1e12 {
        return Err(domain(format!("Bloch matrix condition number {cond:e} exceeds 1e12")));
    }
    Ok(inv.apply(&[phi, dphi]))
}

#[derive(Debug, Clone, Copy)]
pub struct SpectralOptions {
    /// Horizon in slow units: `X = a·y_horizon/ξ_min` periods' worth.
    pub y_horizon: f64,
    pub min_periods: u64,
    pub max_periods: u64,
    pub rel_tol: f64,
    /// Length of the averaging window in slowest periods.
    pub windows: f64,
    pub rtol: f64,
    pub atol: f64,
}

impl Default for SpectralOptions {
    fn default() -> Self {
        Self {
            y_horizon: 100.0,
            min_periods: 256,
            max_periods: 1 << 22,
            rel_tol: 1e-4,
            windows: 2.0,
            rtol: 1e-12,
            atol: 1e-14,
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct AsymptoticCoefficient {
    pub a: C64,
    pub est_error: f64,
    pub window_std: f64,
    pub x_used: f64,
    pub converged: bool,
}

/// Smallest folded per-period frequency among `2aω`, `2(k ± aω)` (mod 2π).
pub fn slowest_frequency(a: f64, omega: f64, k: f64) -> f64 {
    let fold = |x: f64| {
        let r = x.rem_euclid(2.0 * PI);
        r.min(2.0 * PI - r)
    };
    [2.0 * a * omega, 2.0 * (k + a * omega), 2.0 * (k - a * omega)].into_iter().map(fold).fold(f64::INFINITY, f64::min)
}

/// Hann-weighted mean and standard deviation of `v[m0..=m1]`.
fn hann_mean(v: &[C64], m0: usize, m1: usize) -> (C64, f64) {
    let len = (m1 - m0) as f64;
    let (mut s, mut ws) = (ZERO, 0.0);
    for (i, z) in v[m0..=m1].iter().enumerate() {
        let w = (PI * i as f64 / len).sin().powi(2);
        s += z * w;
        ws += w;
    }
    let mean = s / ws;
    let var = v[m0..=m1]
        .iter()
        .enumerate()
        .map(|(i, z)| (PI * i as f64 / len).sin().powi(2) * (z - mean).norm_sqr())
        .sum::<f64>()
        / ws;
    (mean, var.sqrt())
}

/// `A_α(λ)`: windowed means of `η₁(ma)` at horizons `M, 2M, 4M`, combined by
/// one Richardson step in `1/M`; the horizon is doubled until converged.
pub fn asymptotic_coefficient(cfg: &ProblemConfig, bloch: &BlochData, opts: &SpectralOptions) -> Result<AsymptoticCoefficient> {
    let a = cfg.period();
    let lambda = bloch.lambda;
    // without the oscillating term only the summable part is left to settle
    let xi = if cfg.wvn.c == 0.0 { PI } else { slowest_frequency(a, cfg.wvn.omega, bloch.k) };
    if xi < 1e-12 {
        return Err(domain(format!("λ = {lambda} is a resonance point")));
    }
    let window = ((opts.windows * 2.0 * PI / xi).ceil() as u64).max(8);
    let mut m0 = ((opts.y_horizon / xi).ceil() as u64).max(opts.min_periods).max(2 * window);
    let sys = |x: f64, y: &[f64; 2]| [y[1], (cfg.evaluate_total(x) - lambda) * y[0]];
    let mut ode = Dop853::new(opts.rtol, opts.atol);
    let psi0 = bloch.psi_plus_init;
    let w = bloch.wronskian;
    let mu = bloch.multiplier();
    let mut state = [cfg.alpha.sin(), cfg.alpha.cos()];
    let mut phase = C64::from(1.0);
    // η₁(ma) = (ψ₊'φ − ψ₊φ')/(−W) at ψ₊(ma) = e^{ikm}ψ₊(0)
    let eta1 = |ph: C64, y: &[f64; 2]| (psi0[1] * ph * y[0] - psi0[0] * ph * y[1]) / (-w);
    let mut samples = vec![eta1(phase, &state)];
    loop {
        let target = 4 * m0;
        if target > opts.max_periods {
            break;
        }
        while (samples.len() as u64) <= target {
            let m = samples.len() as u64 - 1;
            let (x0, x1) = (a * m as f64, a * (m + 1) as f64);
            let breaks = cfg.breakpoints_between(x0, x1);
            state = ode.integrate_piecewise(&sys, x0, state, x1, &breaks)?;
            phase *= mu;
            if m % 1024 == 0 {
                phase = C64::from_polar(1.0, bloch.k * (m + 1) as f64);
            }
            samples.push(eta1(phase, &state));
        }
        let wl = window.min(m0 / 2) as usize;
        let level = |m: u64| hann_mean(&samples, m as usize - wl, m as usize);
        let (a0, _) = level(m0);
        let (a1, _) = level(2 * m0);
        let (a2, std) = level(4 * m0);
        let r1 = a1 * 2.0 - a0;
        let r2 = a2 * 2.0 - a1;
        let est = (r2 - r1).norm().max(1e-13 * r2.norm());
        let converged = est <= opts.rel_tol * r2.norm();
        if converged || 8 * m0 > opts.max_periods {
            return Ok(AsymptoticCoefficient {
                a: r2,
                est_error: est,
                window_std: std,
                x_used: a * target as f64,
                converged,
            });
        }
        m0 *= 2;
    }
    Err(Error::Unconverged(format!("horizon cap of {} periods is below the minimum for λ = {lambda}", opts.max_periods)))
}

/// `ρ'_α(λ) = 1/(2π|W||A_α(λ)|²)`.
pub fn spectral_density(cfg: &ProblemConfig, bands: &BandStructure, lambda: f64, opts: &SpectralOptions) -> Result<DensitySample> {
    let j = bands.band_of(lambda).ok_or_else(|| domain(format!("λ = {lambda} is not inside a computed band")))?;
    let bloch = bloch_data(&cfg.periodic, bands, lambda, j, SPECTRAL_L_MAX)?;
    density_from_bloch(cfg, &bloch, opts)
}

pub fn density_from_bloch(cfg: &ProblemConfig, bloch: &BlochData, opts: &SpectralOptions) -> Result<DensitySample> {
    let ac = asymptotic_coefficient(cfg, bloch, opts)?;
    let na = ac.a.norm();
    if !(na > 0.0) {
        return Err(domain(format!("A vanishes at λ = {}", bloch.lambda)));
    }
    let rho = 1.0 / (2.0 * PI * bloch.wronskian.norm() * na * na);
    Ok(DensitySample {
        lambda: bloch.lambda,
        a_coef: ac.a,
        rho_prime: rho,
        x_used: ac.x_used,
        est_error: ac.est_error,
        rho_error: 2.0 * rho * ac.est_error / na,
        window_std: ac.window_std,
        converged: ac.converged,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Left,
    Right,
}

impl std::str::FromStr for Side {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "left" => Ok(Side::Left),
            "right" => Ok(Side::Right),
            _ => Err(Error::Parse(format!("side must be left or right, got {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ExponentFit {
    pub nu: f64,
    pub side: Side,
    pub fitted_exponent: f64,
    pub fitted_c: f64,
    pub predicted_exponent: f64,
    pub r_squared: f64,
    pub lambda_grid: Vec<f64>,
    pub samples: Vec<DensitySample>,
}

/// Least-squares line `y = c₀ + p x`: returns `(p, c₀, r²)`.
pub fn fit_line(x: &[f64], y: &[f64]) -> (f64, f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let syy: f64 = y.iter().map(|v| (v - my).powi(2)).sum();
    let p = sxy / sxx;
    let c0 = my - p * mx;
    let r2 = if syy == 0.0 { 1.0 } else { (sxy * sxy / (sxx * syy)).clamp(0.0, 1.0) };
    (p, c0, r2)
}

/// Geometric grid `|λ − ν| = d_max·10^{−decades·i/(n−1)}` on one side of `ν`.
pub fn exponent_grid(nu: f64, side: Side, d_max: f64, decades: f64, n_points: usize) -> Vec<f64> {
    let s = if side == Side::Right { 1.0 } else { -1.0 };
    (0..n_points)
        .map(|i| {
            let t = if n_points > 1 { i as f64 / (n_points - 1) as f64 } else { 0.0 };
            nu + s * d_max * 10f64.powf(-decades * t)
        })
        .collect()
}

/// Sample `ρ'` on a one-sided geometric grid toward `ν` and fit `log ρ'` against `log|λ − ν|`.
pub fn exponent_fit(
    cfg: &ProblemConfig,
    bands: &BandStructure,
    rp: &ResonancePoint,
    side: Side,
    n_points: usize,
    d_max: f64,
    decades: f64,
    opts: &SpectralOptions,
) -> Result<ExponentFit> {
    if n_points < 3 {
        return Err(domain("need at least three grid points"));
    }
    if let Some(acr) = rp.alpha_cr {
        let d = (cfg.alpha - acr).abs();
        if d.min(PI - d) < 1e-3 {
            return Err(domain(format!("α = {} is within 1e-3 of α_cr = {acr}", cfg.alpha)));
        }
    }
    let band = bands.band(rp.band_index)?;
    let grid = exponent_grid(rp.nu, side, d_max, decades, n_points);
    if grid.iter().any(|l| !(*l > band.low && *l < band.high)) {
        return Err(domain(format!("grid leaves band {} [{}, {}]", rp.band_index, band.low, band.high)));
    }
    let results: Vec<Result<DensitySample>> = grid.par_iter().map(|&l| spectral_density(cfg, bands, l, opts)).collect();
    let mut samples = Vec::with_capacity(n_points);
    let mut failing = Vec::new();
    for (l, r) in grid.iter().zip(results) {
        match r {
            Ok(s) if s.converged => samples.push(s),
            Ok(_) => failing.push(format!("{l} (unconverged)")),
            Err(e) => failing.push(format!("{l} ({e})")),
        }
    }
    if !failing.is_empty() {
        return Err(Error::Unconverged(format!("density failed at λ = {}", failing.join(", "))));
    }
    let x: Vec<f64> = samples.iter().map(|s| (s.lambda - rp.nu).abs().ln()).collect();
    let y: Vec<f64> = samples.iter().map(|s| s.rho_prime.ln()).collect();
    let (p, c0, r2) = fit_line(&x, &y);
    Ok(ExponentFit {
        nu: rp.nu,
        side,
        fitted_exponent: p,
        fitted_c: c0.exp(),
        predicted_exponent: 2.0 * rp.beta,
        r_squared: r2,
        lambda_grid: grid,
        samples,
    })
}

/// `Σ ρ'(λ_i)Δλ_i/(λ_i − ν)²` over a geometric grid on one side of `ν`.
pub fn grid_sum(samples: &[DensitySample], nu: f64) -> f64 {
    let mut v: Vec<&DensitySample> = samples.iter().collect();
    v.sort_by(|a, b| (a.lambda - nu).abs().total_cmp(&(b.lambda - nu).abs()));
    let d: Vec<f64> = v.iter().map(|s| (s.lambda - nu).abs()).collect();
    (0..v.len())
        .map(|i| {
            let lo = if i == 0 { d[0] } else { 0.5 * (d[i - 1] + d[i]) };
            let hi = if i + 1 == v.len() { d[i] } else { 0.5 * (d[i] + d[i + 1]) };
            v[i].rho_prime * (hi - lo).max(0.0) / (d[i] * d[i])
        })
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::floquet::band_edges;
    use crate::resonance::resonance_points;
    use crate::testutil::rk4;
    use std::f64::consts::FRAC_PI_2;

    fn free(c: f64, alpha: f64) -> (ProblemConfig, BandStructure) {
        let cfg = ProblemConfig::free(1.0, c, 1.0, 0.0, alpha).unwrap();
        let bands = band_edges(&cfg.periodic, 50.0).unwrap();
        (cfg, bands)
    }

    #[test]
    fn free_sine_and_cosine() {
        let (cfg, _) = free(0.0, 0.0);
        let s = solve_cauchy(&cfg, 1.0, &[FRAC_PI_2]).unwrap();
        assert!((s[0].1[0] - 1.0).abs() < 1e-9);
        let (cfg, _) = free(0.0, FRAC_PI_2);
        let c = solve_cauchy(&cfg, 1.0, &[1.0, PI]).unwrap();
        assert!((c[1].1[0] + 1.0).abs() < 1e-9);
        assert!(solve_cauchy(&cfg, 1.0, &[2.0, 1.0]).is_err());
    }

    #[test]
    fn cauchy_solution_vs_rk4() {
        let (cfg, _) = free(1.0, 0.0);
        let lambda = 2.0;
        let grid: Vec<f64> = (1..=10).map(|i| 10.0 * i as f64).collect();
        let sol = solve_cauchy(&cfg, lambda, &grid).unwrap();
        let f = |x: f64, y: &[f64; 2]| [y[1], (cfg.evaluate_total(x) - lambda) * y[0]];
        let mut y = [0.0, 1.0];
        let mut x = 0.0;
        let mut worst: f64 = 0.0;
        for (g, v) in &sol {
            y = rk4(f, x, y, *g, ((g - x) / 1e-5).round() as usize);
            x = *g;
            worst = worst.max((y[0] - v[0]).abs()).max((y[1] - v[1]).abs());
        }
        assert!(worst < 1e-6, "{worst}");
    }

    #[test]
    fn eta_of_bloch_solutions_is_a_basis_vector() {
        let (cfg, bands) = free(0.0, 0.0);
        let bloch = bloch_data(&cfg.periodic, &bands, 2.5, 0, SPECTRAL_L_MAX).unwrap();
        for x in [0.0, 0.3, 7.9] {
            let p = bloch.psi_plus(x).unwrap();
            let e = eta_projection(&p, p[0], p[1]).unwrap();
            assert!((e[0]).norm() < 1e-12 && (e[1] - 1.0).norm() < 1e-12);
            let e = eta_projection(&p, p[0].conj(), p[1].conj()).unwrap();
            assert!((e[0] - 1.0).norm() < 1e-12 && e[1].norm() < 1e-12);
        }
        let degenerate = [C64::new(1.0, 0.0), C64::new(1.0, 0.0)];
        assert!(eta_projection(&degenerate, ZERO, ZERO).is_err());
    }

    #[test]
    fn eta_of_free_sine_is_constant() {
        let (cfg, bands) = free(0.0, 0.0);
        let bloch = bloch_data(&cfg.periodic, &bands, 1.0, 0, SPECTRAL_L_MAX).unwrap();
        let first = {
            let p = bloch.psi_plus(0.0).unwrap();
            eta_projection(&p, ZERO, C64::new(1.0, 0.0)).unwrap()
        };
        // real φ has conjugate coordinates
        assert!((first[0] - first[1].conj()).norm() < 1e-12);
        for i in 1..=50 {
            let x = i as f64;
            let p = bloch.psi_plus(x).unwrap();
            let e = eta_projection(&p, C64::new(x.sin(), 0.0), C64::new(x.cos(), 0.0)).unwrap();
            assert!((e[0] - first[0]).norm() < 1e-9, "x={x}");
        }
    }

    #[test]
    fn unperturbed_density_is_free_formula() {
        let (cfg, bands) = free(0.0, 0.0);
        for l in [1.0, 4.0, 9.0] {
            let s = spectral_density(&cfg, &bands, l, &SpectralOptions::default()).unwrap();
            assert!((s.rho_prime - l.sqrt() / PI).abs() < 1e-6, "λ={l}: {}", s.rho_prime);
            assert!(s.converged);
        }
    }

    #[test]
    fn density_far_from_resonance_is_close_to_free() {
        let (cfg, bands) = free(1.0, 0.0);
        let s = spectral_density(&cfg, &bands, 9.0, &SpectralOptions::default()).unwrap();
        assert!((s.rho_prime / (3.0 / PI) - 1.0).abs() < 0.02, "{}", s.rho_prime);
    }

    #[test]
    fn coefficient_stable_under_horizon_change() {
        let (cfg, bands) = free(1.0, 0.0);
        let bloch = bloch_data(&cfg.periodic, &bands, 1.21, 0, SPECTRAL_L_MAX).unwrap();
        let at = |x: f64| {
            let m = (x / 4.0) as u64;
            let opts = SpectralOptions { y_horizon: 1.0, min_periods: m, max_periods: 4 * m, rel_tol: 0.0, ..Default::default() };
            asymptotic_coefficient(&cfg, &bloch, &opts).unwrap()
        };
        let (a, b) = (at(1e4), at(4e4));
        assert!((a.a - b.a).norm() < 1e-3 * b.a.norm(), "{} vs {}", a.a, b.a);
        assert_eq!(b.x_used, 4e4);
    }

    #[test]
    fn density_is_invariant_under_bloch_rescaling() {
        let (cfg, bands) = free(1.0, 0.4);
        let bloch = bloch_data(&cfg.periodic, &bands, 1.3, 0, SPECTRAL_L_MAX).unwrap();
        let opts = SpectralOptions::default();
        let base = density_from_bloch(&cfg, &bloch, &opts).unwrap();
        for c in [C64::new(2.0, 0.0), C64::from_polar(0.3, 1.1), C64::new(-0.7, 5.0)] {
            let s = density_from_bloch(&cfg, &bloch.rescaled(c), &opts).unwrap();
            assert!((s.rho_prime / base.rho_prime - 1.0).abs() < 1e-8, "c={c}");
        }
        assert!(base.rho_prime > 0.0);
    }

    #[test]
    fn resonance_point_is_rejected() {
        let (cfg, bands) = free(1.0, 0.0);
        assert!(spectral_density(&cfg, &bands, 1.0, &SpectralOptions::default()).is_err());
        assert!(spectral_density(&cfg, &bands, -1.0, &SpectralOptions::default()).is_err());
    }

    #[test]
    fn line_fit_and_grid() {
        let x = [0.0, 1.0, 2.0, 3.0];
        let y: Vec<f64> = x.iter().map(|v| 0.5 * v - 2.0).collect();
        let (p, c0, r2) = fit_line(&x, &y);
        assert!((p - 0.5).abs() < 1e-14 && (c0 + 2.0).abs() < 1e-14 && (r2 - 1.0).abs() < 1e-14);
        let g = exponent_grid(1.0, Side::Left, 0.1, 2.0, 5);
        assert!((g[0] - 0.9).abs() < 1e-15 && (g[4] - 0.999).abs() < 1e-12);
        let r: Vec<f64> = g.windows(2).map(|w| (w[0] - 1.0) / (w[1] - 1.0)).collect();
        assert!(r.iter().all(|q| (q - 10f64.sqrt()).abs() < 1e-9));
        assert_eq!("right".parse::<Side>().unwrap(), Side::Right);
        assert!("up".parse::<Side>().is_err());
    }

    #[test]
    fn exponent_fit_guards() {
        let (cfg, bands) = free(1.0, 0.0);
        let (_, mut m) = resonance_points(&cfg.periodic, &bands, &cfg.wvn, 0).unwrap();
        let opts = SpectralOptions::default();
        assert!(exponent_fit(&cfg, &bands, &m, Side::Left, 5, 2.0, 1.0, &opts).is_err());
        assert!(exponent_fit(&cfg, &bands, &m, Side::Left, 2, 0.1, 1.0, &opts).is_err());
        m.alpha_cr = Some(0.0005);
        assert!(exponent_fit(&cfg, &bands, &m, Side::Right, 5, 0.1, 1.0, &opts).is_err());
    }

    #[test]
    fn unperturbed_fit_is_flat() {
        let (cfg, bands) = free(0.0, 0.0);
        let (_, m) = resonance_points(&cfg.periodic, &bands, &cfg.wvn, 0).unwrap();
        let fit = exponent_fit(&cfg, &bands, &m, Side::Right, 9, 0.1, 2.0, &SpectralOptions::default()).unwrap();
        assert!(fit.fitted_exponent.abs() < 0.05, "{}", fit.fitted_exponent);
        assert_eq!(fit.predicted_exponent, 0.0);
    }

    #[test]
    fn grid_sum_of_power_law() {
        // ρ' = d² gives Σ Δλ = d_max − d_min
        let samples: Vec<DensitySample> = exponent_grid(0.0, Side::Right, 1.0, 3.0, 301)
            .into_iter()
            .map(|l| DensitySample {
                lambda: l,
                a_coef: ZERO,
                rho_prime: l * l,
                x_used: 0.0,
                est_error: 0.0,
                rho_error: 0.0,
                window_std: 0.0,
                converged: true,
            })
            .collect();
        assert!((grid_sum(&samples, 0.0) - 0.999).abs() < 1e-12);
    }
}
