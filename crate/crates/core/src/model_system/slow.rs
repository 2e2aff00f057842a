//! Slow-scale objects: the Volterra equation for `h_±(y)`, the limit ODE,
//! and the comparison of `lim_{ε→±0} lim_n u_n(ε, f)` with `lim_y h_±(y, f)`.

use std::f64::consts::FRAC_PI_2;

use rayon::prelude::*;
use serde::Serialize;

use super::{horizon_for, limit_estimate, run_recursion, theta_map, StepSource};
use crate::error::{domain, Error, Result};
use crate::linalg::{vnorm, vsub, Mat2, Vec2, C64, ZERO};
use crate::ode::Dop853;
use crate::special::{ci, cin, si};

fn sinc(t: f64) -> f64 {
    if t.abs() < 1e-8 {
        1.0 - t * t / 6.0
    } else {
        t.sin() / t
    }
}

/// `y_{i+1}^q − y_i^q` without cancellation.
fn power_increment(y0: f64, h: f64, q: f64) -> f64 {
    if y0 == 0.0 {
        h.powf(q)
    } else {
        y0.powf(q) * (q * (h / y0).ln_1p()).exp_m1()
    }
}

/// One trapezoid solve on the grid `y_i = i·h`, sampled every `stride` nodes.
fn volterra_grid(beta: f64, s: f64, h0: Vec2, y_max: f64, h: f64, stride: usize) -> Vec<(f64, Vec2)> {
    let n = (y_max / h).round() as usize;
    let p = 2.0 * beta;
    let node = |i: usize| {
        let y = i as f64 * h;
        let c = cin(y);
        (y, beta * sinc(y), (-p * c).exp(), (p * c).exp())
    };
    let mut out = Vec::with_capacity(n / stride + 2);
    out.push((0.0, h0));
    let (mut y_i, mut bs_i, mut em_i, _) = node(0);
    let mut cur = h0;
    let (mut i1, mut i2) = (ZERO, ZERO);
    for i in 0..n {
        let (y_n, bs_n, em_n, ep_n) = node(i + 1);
        let m0 = power_increment(y_i, h, p + 1.0) / (p + 1.0);
        let m1 = power_increment(y_i, h, p + 2.0) / (p + 2.0);
        // weights of the linear interpolant of g against t^{2β}
        let w_l = (y_n * m0 - m1) / h;
        let w_r = (m1 - y_i * m0) / h;
        let pre = if y_n > 0.0 { y_n.powf(-p) * ep_n } else { 1.0 };
        let g_i = em_i * bs_i * cur[0];
        let a1 = h0[0] + s * (i1 + 0.5 * h * bs_i * cur[1]);
        let a = 0.5 * h * bs_n;
        let a2 = h0[1] + s * pre * (i2 + w_l * g_i);
        let b = pre * w_r * em_n * bs_n;
        let h1 = (a1 + s * a * a2) / (1.0 - a * b);
        let h2 = a2 + s * b * h1;
        i1 += 0.5 * h * (bs_i * cur[1] + bs_n * h2);
        i2 += w_l * g_i + w_r * em_n * bs_n * h1;
        cur = [h1, h2];
        y_i = y_n;
        bs_i = bs_n;
        em_i = em_n;
        if (i + 1) % stride == 0 || i + 1 == n {
            out.push((y_n, cur));
        }
    }
    out
}

#[derive(Debug, Clone, Serialize)]
pub struct SlowTrajectory {
    pub beta: f64,
    pub sign: f64,
    pub samples: Vec<(f64, Vec2)>,
    /// Tail-corrected, extrapolated `lim_{y→∞} h(y)`.
    pub limit: Vec2,
    /// Convergence estimate of `limit`.
    pub limit_err: f64,
    /// Richardson defect between step and step/2 (Volterra), or the
    /// oscillation of the limit estimate over the last decade (ODE).
    pub defect: f64,
}

impl SlowTrajectory {
    pub fn end(&self) -> (f64, Vec2) {
        *self.samples.last().expect("nonempty trajectory")
    }

    /// Sample nearest to `y`.
    pub fn at(&self, y: f64) -> Vec2 {
        let i = self.samples.partition_point(|s| s.0 < y);
        let i = if i == self.samples.len() || (i > 0 && (y - self.samples[i - 1].0) < (self.samples[i].0 - y)) {
            i.saturating_sub(1).min(self.samples.len() - 1)
        } else {
            i
        };
        self.samples[i].1
    }
}

/// `C(y) = I + ∫_y^∞ (β/s)[[0, ±sin s], [±sin s, −2cos s]] ds`.
pub fn tail_matrix(beta: f64, sign: f64, y: f64) -> Mat2 {
    let off = sign * beta * (FRAC_PI_2 - si(y));
    Mat2::real(1.0, off, off, 1.0 + 2.0 * beta * ci(y))
}

/// Limit from two samples at `y/2` and `y`: tail correction, then one Richardson step.
fn tail_limit(beta: f64, sign: f64, y_half: f64, h_half: &Vec2, y: f64, h: &Vec2) -> Vec2 {
    let l1 = tail_matrix(beta, sign, y).apply(h);
    let l0 = tail_matrix(beta, sign, y_half).apply(h_half);
    let r = y / y_half;
    [(l1[0] * r - l0[0]) / (r - 1.0), (l1[1] * r - l0[1]) / (r - 1.0)]
}

fn limit_from_samples(beta: f64, sign: f64, samples: &[(f64, Vec2)]) -> (Vec2, f64) {
    let (y, h) = *samples.last().expect("samples");
    let near = |t: f64| {
        let i = samples.partition_point(|s| s.0 < t).min(samples.len() - 1);
        samples[i]
    };
    let (yh, hh) = near(0.5 * y);
    let (yq, hq) = near(0.25 * y);
    if yq <= 0.0 || yh <= yq {
        return (h, f64::INFINITY);
    }
    let l = tail_limit(beta, sign, yh, &hh, y, &h);
    let l_prev = tail_limit(beta, sign, yq, &hq, yh, &hh);
    (l, vnorm(&vsub(&l, &l_prev)))
}

/// Solve `h(y) = h0 ± ∫₀^y K₀(y,t) (β sin t/t) h(t) dt` with
/// `K₀(y,t) = [[0, 1], [exp(−2β∫_t^y cos s/s ds), 0]]`.
///
/// Product-integration trapezoid with the factor `t^{2β}` integrated exactly,
/// run at `step` and `step/2` and combined by Richardson.
pub fn volterra_solve(beta: f64, sign: f64, h0: Vec2, y_max: f64, step: f64) -> Result<SlowTrajectory> {
    if !(y_max > 0.0 && step > 0.0 && step <= y_max) {
        return Err(domain("need 0 < step ≤ y_max"));
    }
    let s = sign.signum();
    let n = (y_max / step).round().max(1.0) as usize;
    let stride = (n / 2000).max(1);
    let coarse = volterra_grid(beta, s, h0, y_max, step, stride);
    let fine = volterra_grid(beta, s, h0, y_max, 0.5 * step, 2 * stride);
    let mut defect: f64 = 0.0;
    let samples: Vec<(f64, Vec2)> = coarse
        .iter()
        .zip(&fine)
        .map(|((y, c), (_, f))| {
            defect = defect.max(vnorm(&vsub(f, c)));
            (*y, [(f[0] * 4.0 - c[0]) / 3.0, (f[1] * 4.0 - c[1]) / 3.0])
        })
        .collect();
    let (limit, limit_err) = limit_from_samples(beta, s, &samples);
    Ok(SlowTrajectory { beta, sign: s, samples, limit, limit_err, defect })
}

/// Integrate `h' = (β/y)[[0, ±sin y], [±sin y, −2cos y]] h` from `y0` to `y_max`.
pub fn limit_ode_solve(beta: f64, sign: f64, h_y0: Vec2, y0: f64, y_max: f64) -> Result<SlowTrajectory> {
    if !(y0 > 0.0 && y_max > y0) {
        return Err(domain("need 0 < y0 < y_max"));
    }
    let s = sign.signum();
    let sys = |y: f64, v: &[f64; 4]| {
        let (sn, cs) = y.sin_cos();
        let k = beta / y;
        let off = s * k * sn;
        let dg = -2.0 * k * cs;
        [off * v[2], off * v[3], off * v[0] + dg * v[2], off * v[1] + dg * v[3]]
    };
    let mut ode = Dop853::new(1e-13, 1e-15);
    let mut state = [h_y0[0].re, h_y0[0].im, h_y0[1].re, h_y0[1].im];
    let to_vec = |v: &[f64; 4]| [C64::new(v[0], v[1]), C64::new(v[2], v[3])];
    let mut samples = vec![(y0, h_y0)];
    let seg = ((y_max - y0) / 4000.0).max(0.25);
    let mut y = y0;
    while y < y_max {
        let y1 = (y + seg).min(y_max);
        state = ode.integrate(&sys, y, state, y1).map_err(Error::from)?;
        y = y1;
        samples.push((y, to_vec(&state)));
    }
    let (limit, limit_err) = limit_from_samples(beta, s, &samples);
    // oscillation of the tail-corrected value over the last decade
    let last = samples.last().expect("samples").1;
    let l_end = tail_matrix(beta, s, y_max).apply(&last);
    let defect = samples
        .iter()
        .filter(|(t, _)| *t >= 0.1 * y_max)
        .map(|(t, h)| vnorm(&vsub(&tail_matrix(beta, s, *t).apply(h), &l_end)))
        .fold(0.0, f64::max);
    Ok(SlowTrajectory { beta, sign: s, samples, limit, limit_err, defect })
}

#[derive(Debug, Clone, Serialize)]
pub struct InterchangeRow {
    pub epsilon: f64,
    pub n_end: u64,
    pub limit: Vec2,
    pub limit_err: f64,
    /// `max_n ‖B_{n−1}⋯B_{n_start}‖`.
    pub max_norm: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct InterchangeReport {
    pub beta: f64,
    pub f: Vec2,
    pub rows: Vec<InterchangeRow>,
    /// `|L(ε_m) − L(ε_{m+1})|` along the grid.
    pub cauchy: Vec<f64>,
    /// Extrapolation to `ε = 0` from the three smallest `|ε|`.
    pub extrapolated: Vec2,
    pub extrapolation_err: f64,
    /// `Θf`, the initial value of the slow problem.
    pub h0: Vec2,
    pub theta_max_norm: f64,
    pub slow: SlowTrajectory,
    pub deviation: f64,
}

pub struct InterchangeOptions {
    /// Slow horizon `N|ε|` of each discrete run.
    pub y_run: f64,
    /// Horizon and step of the Volterra solve.
    pub y_volterra: f64,
    pub step: f64,
    /// Iterations for Θ.
    pub n_theta: u64,
}

impl Default for InterchangeOptions {
    fn default() -> Self {
        Self { y_run: 400.0, y_volterra: 500.0, step: 1e-3, n_theta: 1 << 20 }
    }
}

/// Richardson step on the smallest `|ε|`, with the order estimated from the
/// last two Cauchy differences (clamped to `[0.5, 4]`).
fn extrapolate_to_zero(rows: &[InterchangeRow]) -> (Vec2, f64) {
    let m = rows.len();
    let (small, big) = (&rows[m - 1], &rows[m - 2]);
    let d1 = vsub(&small.limit, &big.limit);
    let r = big.epsilon / small.epsilon;
    let order = if m >= 3 {
        let d0 = vnorm(&vsub(&big.limit, &rows[m - 3].limit));
        let rr = rows[m - 3].epsilon / big.epsilon;
        if vnorm(&d1) > 0.0 && d0 > 0.0 {
            ((d0 / vnorm(&d1)).ln() / rr.ln()).clamp(0.5, 4.0)
        } else {
            1.0
        }
    } else {
        1.0
    };
    let k = 1.0 / (r.powf(order) - 1.0);
    let ex = [small.limit[0] + d1[0] * k, small.limit[1] + d1[1] * k];
    (ex, vnorm(&d1) * k + small.limit_err + big.limit_err)
}

/// Compare `lim_{ε→±0} lim_n u_n(ε, f)` with `lim_y h_±(y, Θf)`.
///
/// `make(ε)` builds the model at parameter `ε`; the grid must be one-sided.
pub fn interchange_check<F>(make: F, f: Vec2, eps_grid: &[f64], opts: &InterchangeOptions) -> Result<InterchangeReport>
where
    F: Fn(f64) -> Result<Box<dyn StepSource + Send>> + Sync,
{
    if eps_grid.len() < 2 {
        return Err(domain("need at least two ε values"));
    }
    let sign = eps_grid[0].signum();
    if eps_grid.iter().any(|e| *e == 0.0 || e.signum() != sign) {
        return Err(domain("ε grid must be one-sided and exclude 0"));
    }
    let mut grid = eps_grid.to_vec();
    grid.sort_by(|a, b| b.abs().total_cmp(&a.abs()));
    let rows: Vec<Result<InterchangeRow>> = grid
        .par_iter()
        .map(|&eps| {
            let mut src = make(eps)?;
            let n_end = horizon_for(eps, opts.y_run, src.n_start());
            let run = run_recursion(src.as_mut(), f, n_end)?;
            let (limit, limit_err) = limit_estimate(&run);
            Ok(InterchangeRow { epsilon: eps, n_end, limit, limit_err, max_norm: run.c3 })
        })
        .collect();
    let rows: Vec<InterchangeRow> = rows.into_iter().collect::<Result<_>>()?;
    let mut src0 = make(0.0)?;
    let beta = src0.beta();
    let theta = theta_map(src0.as_mut(), opts.n_theta)?;
    let tf = theta.theta.apply(&f);
    // Θ has rank one with range along the first axis
    let h0 = [tf[0], ZERO];
    let slow = volterra_solve(beta, sign, h0, opts.y_volterra, opts.step)?;
    let cauchy = rows.windows(2).map(|w| vnorm(&vsub(&w[0].limit, &w[1].limit))).collect();
    let (extrapolated, extrapolation_err) = extrapolate_to_zero(&rows);
    let deviation = vnorm(&vsub(&extrapolated, &slow.limit));
    Ok(InterchangeReport {
        beta,
        f,
        rows,
        cauchy,
        extrapolated,
        extrapolation_err,
        h0,
        theta_max_norm: theta.max_norm,
        slow,
        deviation,
    })
}
