//! The discrete two-scale model `u_{n+1} = B_n(ε) u_n` and its limits.
//!
//! `B_n(ε) = exp(−β∫ₙ^{n+1} cos(εr)/r dr)·[I + (β/n)S(εn) + R_n(ε)]` with
//! `S(φ) = [[cos φ, sin φ], [sin φ, −cos φ]]`.

mod operator;
mod slow;

pub use operator::*;
pub use slow::*;

use std::f64::consts::PI;

use serde::Serialize;

use crate::error::{domain, invalid, Error, Result};
use crate::linalg::{vnorm, Mat2, Vec2, ONE, ZERO};
use crate::special::{cos_over_r, exp_tail_sum};

/// Relative Cauchy tolerance for declaring a limit.
pub const LIMIT_TOL: f64 = 1e-8;
/// Product norms beyond this are reported as an invariant violation.
const OVERFLOW_GUARD: f64 = 1e12;

pub fn s_matrix(phi: f64) -> Mat2 {
    let (s, c) = phi.sin_cos();
    Mat2::real(c, s, s, -c)
}

/// Summable remainder sequences with explicit ε-dependence.
#[derive(Debug, Clone, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Remainder {
    Zero,
    /// `R_n(ε) = amplitude·n^{−p}·cos(εn)·pattern`.
    Synthetic { amplitude: f64, p: f64, pattern: [[f64; 2]; 2] },
    /// Finitely many nonzero terms, independent of ε.
    Sparse { terms: Vec<(u64, [[f64; 2]; 2])> },
}

impl Remainder {
    pub fn synthetic(amplitude: f64, p: f64, pattern: [[f64; 2]; 2]) -> Result<Self> {
        if !(p > 1.0) {
            return Err(invalid("remainder.p", "decay exponent must exceed 1"));
        }
        Ok(Remainder::Synthetic { amplitude, p, pattern })
    }

    pub fn at(&self, n: u64, eps: f64) -> Mat2 {
        match self {
            Remainder::Zero => Mat2::ZERO,
            Remainder::Synthetic { amplitude, p, pattern } => {
                let s = amplitude * (n as f64).powf(-p) * (eps * n as f64).cos();
                real_mat(pattern).scale(s.into())
            }
            Remainder::Sparse { terms } => {
                terms.iter().filter(|(k, _)| *k == n).fold(Mat2::ZERO, |acc, (_, m)| acc + real_mat(m))
            }
        }
    }

    /// Bound on `Σ_{n≥n_start} sup_ε ‖R_n(ε)‖`.
    pub fn l1_bound(&self, n_start: u64) -> f64 {
        match self {
            Remainder::Zero => 0.0,
            Remainder::Synthetic { amplitude, p, pattern } => {
                let n0 = n_start as f64;
                amplitude.abs() * real_mat(pattern).norm2() * (n0.powf(-p) + n0.powf(1.0 - p) / (p - 1.0))
            }
            Remainder::Sparse { terms } => {
                terms.iter().filter(|(k, _)| *k >= n_start).map(|(_, m)| real_mat(m).norm2()).sum()
            }
        }
    }

    pub fn is_zero(&self) -> bool {
        matches!(self, Remainder::Zero)
    }
}

fn real_mat(m: &[[f64; 2]; 2]) -> Mat2 {
    Mat2::real(m[0][0], m[0][1], m[1][0], m[1][1])
}

#[derive(Debug, Clone, Serialize)]
pub struct ModelParams {
    pub beta: f64,
    pub epsilon: f64,
    pub remainder: Remainder,
    pub n_start: u64,
}

/// Smallest integer above β, so that `1 − β/n ≠ 0` from the start.
pub fn default_n_start(beta: f64) -> u64 {
    beta.floor() as u64 + 1
}

impl ModelParams {
    pub fn new(beta: f64, epsilon: f64, remainder: Remainder, n_start: u64) -> Result<Self> {
        if !(beta >= 0.0 && beta.is_finite()) {
            return Err(invalid("beta", "must be finite and nonnegative"));
        }
        if !(epsilon.abs() < 2.0 * PI) {
            return Err(invalid("epsilon", "must lie in (−2π, 2π)"));
        }
        if n_start == 0 || (n_start as f64) <= beta {
            return Err(invalid("n_start", format!("must exceed β = {beta}")));
        }
        Ok(Self { beta, epsilon, remainder, n_start })
    }

    /// Zero remainder and the default start index.
    pub fn unperturbed(beta: f64, epsilon: f64) -> Result<Self> {
        Self::new(beta, epsilon, Remainder::Zero, default_n_start(beta))
    }

    pub fn with_epsilon(&self, epsilon: f64) -> Result<Self> {
        Self::new(self.beta, epsilon, self.remainder.clone(), self.n_start)
    }
}

/// `B_n(ε)` for analytic remainders.
pub fn b_matrix(params: &ModelParams, n: u64, eps: f64) -> Mat2 {
    let nf = n as f64;
    let bracket = Mat2::IDENTITY + s_matrix(eps * nf).scale((params.beta / nf).into()) + params.remainder.at(n, eps);
    bracket.scale((-params.beta * cos_over_r(eps, nf, nf + 1.0)).exp().into())
}

/// Something that yields `I + (β/n)S(εn) + R_n` for consecutive `n`.
pub trait StepSource {
    fn beta(&self) -> f64;
    fn epsilon(&self) -> f64;
    fn n_start(&self) -> u64;
    fn bracket(&mut self, n: u64) -> Result<Mat2>;
}

impl StepSource for ModelParams {
    fn beta(&self) -> f64 {
        self.beta
    }
    fn epsilon(&self) -> f64 {
        self.epsilon
    }
    fn n_start(&self) -> u64 {
        self.n_start
    }
    fn bracket(&mut self, n: u64) -> Result<Mat2> {
        let nf = n as f64;
        Ok(Mat2::IDENTITY + s_matrix(self.epsilon * nf).scale((self.beta / nf).into()) + self.remainder.at(n, self.epsilon))
    }
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct Checkpoint {
    /// Index of the iterate: the product maps `u_{n_start}` to `u_n`.
    pub n: u64,
    #[serde(skip)]
    pub product: Mat2,
    pub log_abs_det: f64,
}

#[derive(Debug, Clone)]
pub struct ProductRun {
    pub n_start: u64,
    pub n_end: u64,
    pub product: Mat2,
    pub log_abs_det: f64,
    /// `max_n ‖B_{n−1}⋯B_{n_start}‖` over the run.
    pub max_norm: f64,
    pub checkpoints: Vec<Checkpoint>,
}

impl ProductRun {
    pub fn checkpoint(&self, n: u64) -> Option<&Checkpoint> {
        self.checkpoints.iter().find(|c| c.n == n)
    }
}

/// Accumulate `B_{n_end−1}⋯B_{n_start}`, recording the partial products at `record`.
pub fn run_product<S: StepSource + ?Sized>(src: &mut S, n_end: u64, record: &[u64]) -> Result<ProductRun> {
    let n0 = src.n_start();
    if n_end < n0 {
        return Err(domain(format!("N = {n_end} is below n_start = {n0}")));
    }
    let (beta, eps) = (src.beta(), src.epsilon());
    let mut record: Vec<u64> = record.iter().copied().filter(|&n| n >= n0 && n <= n_end).collect();
    record.sort_unstable();
    record.dedup();
    let mut next = record.iter().peekable();
    let mut p = Mat2::IDENTITY;
    let mut log_det = 0.0;
    let mut max_norm: f64 = 1.0;
    let mut checkpoints = Vec::with_capacity(record.len());
    if next.peek() == Some(&&n0) {
        checkpoints.push(Checkpoint { n: n0, product: p, log_abs_det: 0.0 });
        next.next();
    }
    for n in n0..n_end {
        let nf = n as f64;
        let scale = (-beta * cos_over_r(eps, nf, nf + 1.0)).exp();
        let bracket = src.bracket(n)?;
        let b = bracket.scale(scale.into());
        p = b * p;
        let det = b.det().norm();
        if det == 0.0 {
            return Err(domain(format!("B_{n} is singular")));
        }
        log_det += det.ln();
        let norm = p.norm2();
        if !(norm <= OVERFLOW_GUARD) {
            return Err(Error::Unconverged(format!("invariant violation: product norm {norm:e} at n = {}", n + 1)));
        }
        max_norm = max_norm.max(norm);
        if next.peek() == Some(&&(n + 1)) {
            checkpoints.push(Checkpoint { n: n + 1, product: p, log_abs_det: log_det });
            next.next();
        }
    }
    Ok(ProductRun { n_start: n0, n_end, product: p, log_abs_det: log_det, max_norm, checkpoints })
}

/// Powers of two between `n0` and `n1`, plus `n1/4`, `n1/2` and `n1`.
pub fn geometric_checkpoints(n0: u64, n1: u64) -> Vec<u64> {
    let mut v = vec![n0];
    let mut m = 1u64;
    while m <= n1 {
        if m >= n0 {
            v.push(m);
        }
        m *= 2;
    }
    v.extend([n1 / 4, n1 / 2, n1]);
    v.retain(|&n| n >= n0);
    v.sort_unstable();
    v.dedup();
    v
}

/// First-order tail `Σ_{k≥n} V_k` of the model for `ε ≠ 0`, where
/// `V_k = (β/k)(S(εk) − C_k I)` and `C_k = ∫_k^{k+1} cos(εr) dr`.
pub fn first_order_tail(beta: f64, eps: f64, n: u64) -> Mat2 {
    let t = exp_tail_sum(eps, n);
    let (tc, ts) = (t.re, t.im);
    let c1 = (eps.cos() - 1.0) / eps;
    let c2 = eps.sin() / eps;
    let shift = c1 * ts + c2 * tc;
    Mat2::real(tc - shift, ts, ts, -tc - shift).scale(beta.into())
}

/// Limit estimate from `u_n`: the first-order tail for `ε ≠ 0`, the identity otherwise.
fn tail_corrected(beta: f64, eps: f64, n: u64, u: &Vec2) -> Vec2 {
    if eps == 0.0 || beta == 0.0 {
        *u
    } else {
        (Mat2::IDENTITY + first_order_tail(beta, eps, n)).apply(u)
    }
}

/// Per-component Richardson step `(2^p x_n − x_{n/2})/(2^p − 1)`.
fn richardson(fine: &Vec2, coarse: &Vec2, powers: [f64; 2]) -> Vec2 {
    let mut out = [ZERO; 2];
    for i in 0..2 {
        let r = 2f64.powf(powers[i]);
        out[i] = (fine[i] * r - coarse[i]) / (r - 1.0);
    }
    out
}

/// Richardson exponents: `1/n` corrections, and `n^{−2β}` decay of the
/// second component when `ε = 0`.
fn limit_powers(beta: f64, eps: f64) -> [f64; 2] {
    if eps == 0.0 && beta > 0.0 {
        [1.0, (2.0 * beta).min(1.0)]
    } else {
        [1.0, 1.0]
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ModelRun {
    pub beta: f64,
    pub epsilon: f64,
    pub n_start: u64,
    pub n_end: u64,
    pub f: Vec2,
    pub checkpoints: Vec<(u64, Vec2)>,
    pub u_end: Vec2,
    pub limit_u: Option<Vec2>,
    /// Difference between the extrapolated limits at `N` and `N/2`.
    pub limit_err: f64,
    /// Empirical `max_n ‖u_n‖/‖f‖`.
    pub c3: f64,
    /// `(y = n|ε|, u_n)` on an even grid in `y` (empty for `ε = 0`).
    pub slow_samples: Vec<(f64, Vec2)>,
}

const SLOW_SAMPLES: u64 = 400;

/// Iterate the model from `u_{n_start} = f` to `u_N`.
pub fn run_recursion<S: StepSource + ?Sized>(src: &mut S, f: Vec2, n_end: u64) -> Result<ModelRun> {
    let (beta, eps, n0) = (src.beta(), src.epsilon(), src.n_start());
    if n_end < 4 * n0.max(1) {
        return Err(domain(format!("N = {n_end} is too small for extrapolation from n_start = {n0}")));
    }
    let mut record = geometric_checkpoints(n0, n_end);
    let mut slow_ns = Vec::new();
    if eps != 0.0 {
        let stride = (n_end / SLOW_SAMPLES).max(1);
        slow_ns = (1..=n_end / stride).map(|i| i * stride).filter(|&n| n >= n0).collect();
        record.extend(&slow_ns);
    }
    let run = run_product(src, n_end, &record)?;
    let u_at = |n: u64| run.checkpoint(n).map(|c| c.product.apply(&f)).expect("recorded checkpoint");
    let checkpoints: Vec<(u64, Vec2)> = geometric_checkpoints(n0, n_end).into_iter().map(|n| (n, u_at(n))).collect();
    let slow_samples = slow_ns.iter().map(|&n| (n as f64 * eps.abs(), u_at(n))).collect();
    let fnorm = vnorm(&f);
    let worst = checkpoints.iter().map(|(_, u)| vnorm(u)).fold(0.0, f64::max);
    let c3 = if fnorm > 0.0 { run.max_norm.max(worst / fnorm) } else { 0.0 };
    let mut out = ModelRun {
        beta,
        epsilon: eps,
        n_start: n0,
        n_end,
        f,
        checkpoints,
        u_end: u_at(n_end),
        limit_u: None,
        limit_err: f64::INFINITY,
        c3,
        slow_samples,
    };
    let (l, err) = limit_estimate(&out);
    out.limit_err = err;
    if err <= LIMIT_TOL * vnorm(&l).max(fnorm) {
        out.limit_u = Some(l);
    }
    Ok(out)
}

/// Extrapolated limit of a run regardless of the tolerance, with its error estimate.
pub fn limit_estimate(run: &ModelRun) -> (Vec2, f64) {
    let beta = run.beta;
    let eps = run.epsilon;
    let powers = limit_powers(beta, eps);
    let get = |n: u64| run.checkpoints.iter().find(|c| c.0 == n).map(|c| c.1).expect("checkpoint");
    let est = |n: u64| {
        let fine = tail_corrected(beta, eps, n, &get(n));
        let coarse = tail_corrected(beta, eps, n / 2, &get(n / 2));
        richardson(&fine, &coarse, powers)
    };
    let l1 = est(run.n_end);
    let l0 = est(run.n_end / 2);
    (l1, vnorm(&crate::linalg::vsub(&l1, &l0)))
}

#[derive(Debug, Clone, Serialize)]
pub struct ThetaResult {
    #[serde(skip)]
    pub theta: Mat2,
    #[serde(skip)]
    pub partial: Mat2,
    pub n_end: u64,
    /// Singular values of the partial product at `N`.
    pub sigma: (f64, f64),
    /// `(n, σ₁, σ₂)` along the geometric checkpoints.
    pub history: Vec<(u64, f64, f64)>,
    pub err: f64,
    pub max_norm: f64,
}

/// `Θ = ∏_{n≥n_start} B_n(0)`, extrapolated from partial products up to `N`.
pub fn theta_map<S: StepSource + ?Sized>(src: &mut S, n_end: u64) -> Result<ThetaResult> {
    if src.epsilon() != 0.0 {
        return Err(domain("Θ is defined at ε = 0"));
    }
    let n0 = src.n_start();
    if n_end < 4 * n0 {
        return Err(domain(format!("N = {n_end} is too small")));
    }
    let beta = src.beta();
    let record = geometric_checkpoints(n0, n_end);
    let run = run_product(src, n_end, &record)?;
    let powers = limit_powers(beta, 0.0);
    let at = |n: u64| run.checkpoint(n).expect("checkpoint").product;
    let extrapolate = |n: u64| {
        let (fine, coarse) = (at(n), at(n / 2));
        let mut out = Mat2::ZERO;
        for col in 0..2 {
            let f = [fine.0[0][col], fine.0[1][col]];
            let c = [coarse.0[0][col], coarse.0[1][col]];
            let r = richardson(&f, &c, powers);
            out.0[0][col] = r[0];
            out.0[1][col] = r[1];
        }
        out
    };
    let theta = extrapolate(n_end);
    let err = theta.max_abs_diff(&extrapolate(n_end / 2));
    let history = run
        .checkpoints
        .iter()
        .map(|c| {
            let (s1, s2) = c.product.singular_values_with_det(c.log_abs_det.exp());
            (c.n, s1, s2)
        })
        .collect();
    Ok(ThetaResult {
        theta,
        partial: run.product,
        n_end,
        sigma: run.product.singular_values_with_det(run.log_abs_det.exp()),
        history,
        err,
        max_norm: run.max_norm,
    })
}

/// `P₁[f + Σ_k R⁽⁷⁾_k(0) u_k]` with `R⁽⁷⁾_k(0) = B_k(0) − diag(1, ((k+1)/k)^{−2β})`,
/// the partial sums extrapolated in `1/N`.
pub fn levinson_limit(params: &ModelParams, f: Vec2, n_end: u64) -> Result<Vec2> {
    if params.epsilon != 0.0 {
        return Err(domain("the Levinson-type limit is taken at ε = 0"));
    }
    let n0 = params.n_start;
    let half = n_end / 2;
    let mut u = f;
    let mut sum = f[0];
    let mut sum_half = None;
    for k in n0..n_end {
        if k == half {
            sum_half = Some(sum);
        }
        let kf = k as f64;
        let b = b_matrix(params, k, 0.0);
        let d2 = (-2.0 * params.beta * ((1.0 / kf).ln_1p())).exp();
        let r7 = b - Mat2::diag(ONE, d2.into());
        sum += r7.apply(&u)[0];
        if !sum.is_finite() {
            return Err(Error::Unconverged("Levinson sum diverged".into()));
        }
        u = b.apply(&u);
    }
    let sum_half = sum_half.ok_or_else(|| domain("N too small"))?;
    Ok([sum * 2.0 - sum_half, ZERO])
}

/// Power-of-two iteration count reaching the slow time `y_max = N|ε|`.
pub fn horizon_for(eps: f64, y_max: f64, n_start: u64) -> u64 {
    let n = if eps == 0.0 { 1u64 << 20 } else { (y_max / eps.abs()).ceil() as u64 };
    n.max(64 * n_start).next_power_of_two()
}
