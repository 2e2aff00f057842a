//! Reduction of the spectral problem near a resonance point to the model.
//!
//! With `φ = η₁ψ₋ + η₂ψ₊` the coefficients obey `η' = Lη`,
//! `L = (V/W)[[ψ₊ψ₋, ψ₊²], [−ψ₋², −ψ₊ψ₋]]`, `V` the decaying part of the
//! potential. Over period `n` this gives `M_n = I + N_n/n + O(n⁻²)` with
//! `N_n = [[β⁽ᵈ⁾_n, β⁽ᵃᵈ⁾_n], [conj β⁽ᵃᵈ⁾_n, −β⁽ᵈ⁾_n]]`.

use std::f64::consts::PI;

use serde::Serialize;

use super::{horizon_for, limit_estimate, run_recursion, theta_map, StepSource};
use crate::error::{domain, Error, Result};
use crate::floquet::{bloch_data, discriminant, k_from_delta, BandStructure, BlochData, DEFAULT_L_MAX};
use crate::linalg::{vnorm, Mat2, Vec2, C64, I, ONE, ZERO};
use crate::ode::Dop853;
use crate::potentials::{ProblemConfig, WvnTerm};
use crate::quad;
use crate::resonance::{ResonancePoint, Sign};
use crate::special::{ci, exp_tail_sum};
use crate::spectral::DensitySample;

/// `sin(x)/(πl + x)`, written as `(−1)^l sinc(πl + x)` to survive `πl + x → 0`.
fn shifted_sinc(l: i64, x: f64) -> f64 {
    let t = PI * l as f64 + x;
    if t.abs() < 1e-8 {
        let sign = if l.rem_euclid(2) == 0 { 1.0 } else { -1.0 };
        sign * (1.0 - t * t / 6.0)
    } else {
        x.sin() / t
    }
}

/// The coefficients `β₀`, `β₊`, `β₋` of the first-order monodromy term.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct BetaSeries {
    pub beta0: C64,
    pub beta_plus: C64,
    pub beta_minus: C64,
    /// Bound on the neglected `|l| > l_max` terms, from `|b_l| = O(l⁻²)`.
    pub tail_bound: f64,
}

impl BetaSeries {
    pub fn zero() -> Self {
        Self { beta0: ZERO, beta_plus: ZERO, beta_minus: ZERO, tail_bound: 0.0 }
    }

    pub fn get(&self, sign: Sign) -> C64 {
        match sign {
            Sign::Plus => self.beta_plus,
            Sign::Minus => self.beta_minus,
        }
    }

    /// `β⁽ᵈ⁾_n = β₀e^{2iaωn} − conj(β₀)e^{−2iaωn}`.
    pub fn diagonal(&self, a: f64, omega: f64, n: u64) -> C64 {
        let z = C64::from_polar(1.0, 2.0 * a * omega * n as f64);
        self.beta0 * z - self.beta0.conj() * z.conj()
    }

    /// `β⁽ᵃᵈ⁾_n = β₊e^{2i(k+aω)n} + β₋e^{2i(k−aω)n}`.
    pub fn antidiagonal(&self, a: f64, omega: f64, k: f64, n: u64) -> C64 {
        let nf = n as f64;
        self.beta_plus * C64::from_polar(1.0, 2.0 * (k + a * omega) * nf)
            + self.beta_minus * C64::from_polar(1.0, 2.0 * (k - a * omega) * nf)
    }

    /// `I + N_n/n`.
    pub fn first_order(&self, a: f64, omega: f64, k: f64, n: u64) -> Mat2 {
        let d = self.diagonal(a, omega, n);
        let ad = self.antidiagonal(a, omega, k, n);
        Mat2::IDENTITY + Mat2::new(d, ad, ad.conj(), -d).scale((1.0 / n as f64).into())
    }
}

/// The three sums over the Fourier coefficients of the Bloch products.
pub fn beta_series(bloch: &BlochData, wvn: &WvnTerm) -> BetaSeries {
    if wvn.c == 0.0 {
        return BetaSeries::zero();
    }
    let (a, k, w) = (bloch.period, bloch.k, bloch.wronskian);
    let aw = a * wvn.omega;
    let lm = bloch.l_max as i64;
    let (mut s0, mut sp, mut sm) = (ZERO, ZERO, ZERO);
    for l in -lm..=lm {
        s0 += bloch.b(l) * shifted_sinc(l, aw);
        sp += bloch.b_plus(l) * shifted_sinc(l, k + aw);
        sm += bloch.b_plus(l) * shifted_sinc(l, k - aw);
    }
    let pre = C64::from(wvn.c) / (2.0 * I * w);
    let d = wvn.delta;
    // fitted decay constant of the outer half of the coefficients
    let c_fit = ((lm / 2).max(1)..=lm)
        .map(|l| {
            let lf = l as f64;
            (bloch.b_plus(l).norm().max(bloch.b_plus(-l).norm()).max(bloch.b(l).norm())) * lf * lf
        })
        .fold(0.0, f64::max);
    let lf = lm as f64 + 1.0;
    let tail_bound = pre.norm() * 2.0 * c_fit / (lf * lf * (PI * lf - (k + aw).abs()).max(1.0));
    BetaSeries {
        beta0: pre * C64::from_polar(1.0, d - aw) * s0,
        beta_plus: pre * C64::from_polar(1.0, d - (k + aw)) * sp,
        beta_minus: -pre * C64::from_polar(1.0, -(d + k - aw)) * sm,
        tail_bound,
    }
}

/// The same coefficients from period integrals of the Bloch solution.
pub fn beta_integrals(bloch: &BlochData, wvn: &WvnTerm) -> Result<BetaSeries> {
    if wvn.c == 0.0 {
        return Ok(BetaSeries::zero());
    }
    let (a, k, w, om) = (bloch.period, bloch.k, bloch.wronskian, wvn.omega);
    let aw = a * om;
    let mut err = None;
    let mut integrand = |t: f64, which: u8| match bloch.psi_plus(t) {
        Ok(p) => {
            let e = C64::from_polar(1.0, 2.0 * om * t);
            match which {
                0 => p[0].norm_sqr() * e,
                1 => p[0] * p[0] * e,
                _ => p[0] * p[0] * e.conj(),
            }
        }
        Err(e) => {
            err = Some(e);
            ZERO
        }
    };
    let i0 = quad::integrate(|t| integrand(t, 0), 0.0, a, 1e-15, 1e-13)?;
    let ip = quad::integrate(|t| integrand(t, 1), 0.0, a, 1e-15, 1e-13)?;
    let im = quad::integrate(|t| integrand(t, 2), 0.0, a, 1e-15, 1e-13)?;
    if let Some(e) = err {
        return Err(e);
    }
    let pre = C64::from(wvn.c) / (2.0 * I * w * a);
    let d = wvn.delta;
    Ok(BetaSeries {
        beta0: pre * C64::from_polar(1.0, d - 2.0 * aw) * i0,
        beta_plus: pre * C64::from_polar(1.0, d - 2.0 * (k + aw)) * ip,
        beta_minus: -pre * C64::from_polar(1.0, -d - 2.0 * (k - aw)) * im,
        tail_bound: 0.0,
    })
}

const MONODROMY_RTOL: f64 = 1e-12;
const MONODROMY_ATOL: f64 = 1e-14;

/// `M_n = Φ(a(n−1), an)` for the η-system, integrated together with ψ₊.
pub fn discrete_monodromy(cfg: &ProblemConfig, bloch: &BlochData, n: u64) -> Result<Mat2> {
    let mut ode = Dop853::new(MONODROMY_RTOL, MONODROMY_ATOL);
    monodromy_with(&mut ode, cfg, bloch, n)
}

fn monodromy_with(ode: &mut Dop853, cfg: &ProblemConfig, bloch: &BlochData, n: u64) -> Result<Mat2> {
    if n == 0 {
        return Err(domain("periods are numbered from 1"));
    }
    if cfg.wvn.c == 0.0 && cfg.q1.is_zero() {
        return Ok(Mat2::IDENTITY);
    }
    let a = bloch.period;
    let lambda = bloch.lambda;
    let w = bloch.wronskian;
    let winv = ONE / w;
    let (x0, x1) = (a * (n - 1) as f64, a * n as f64);
    let p0 = bloch.psi_plus_at_period(n - 1);
    let mut y = [0.0; 12];
    y[0] = p0[0].re;
    y[1] = p0[0].im;
    y[2] = p0[1].re;
    y[3] = p0[1].im;
    // Φ = I, stored row-major as (re, im) pairs
    y[4] = 1.0;
    y[10] = 1.0;
    let sys = |x: f64, s: &[f64; 12]| {
        let qv = cfg.periodic.eval(x) - lambda;
        let v = cfg.perturbation(x);
        let psi = C64::new(s[0], s[1]);
        let pp = psi * psi * winv * v;
        let pm = psi.norm_sqr() * winv * v;
        let m = [[pm, pp], [pp.conj(), -pm]];
        let phi = [[C64::new(s[4], s[5]), C64::new(s[6], s[7])], [C64::new(s[8], s[9]), C64::new(s[10], s[11])]];
        let mut out = [0.0; 12];
        out[0] = s[2];
        out[1] = s[3];
        out[2] = qv * s[0];
        out[3] = qv * s[1];
        for r in 0..2 {
            for c in 0..2 {
                let z = m[r][0] * phi[0][c] + m[r][1] * phi[1][c];
                out[4 + 4 * r + 2 * c] = z.re;
                out[5 + 4 * r + 2 * c] = z.im;
            }
        }
        out
    };
    let breaks = cfg.breakpoints_between(x0, x1);
    let s = ode.integrate_piecewise(&sys, x0, y, x1, &breaks)?;
    Ok(Mat2::new(C64::new(s[4], s[5]), C64::new(s[6], s[7]), C64::new(s[8], s[9]), C64::new(s[10], s[11])))
}

/// `I + (1/an)∫_{a(n−1)}^{an} (c sin(2ωx+δ)/W)[[ψ₊ψ₋, ψ₊²], [−ψ₋², −ψ₊ψ₋]] dx` by quadrature.
pub fn lemma_form(wvn: &WvnTerm, bloch: &BlochData, n: u64) -> Result<Mat2> {
    let a = bloch.period;
    let (x0, x1) = (a * (n - 1) as f64, a * n as f64);
    let mut err = None;
    let mut entry = |diag: bool| {
        quad::integrate(
            |x| match bloch.psi_plus(x) {
                Ok(p) => {
                    let s = wvn.c * (2.0 * wvn.omega * x + wvn.delta).sin();
                    if diag {
                        s * p[0].norm_sqr() * C64::from(1.0)
                    } else {
                        s * p[0] * p[0]
                    }
                }
                Err(e) => {
                    err = Some(e);
                    ZERO
                }
            },
            x0,
            x1,
            1e-15,
            1e-12,
        )
    };
    let d = entry(true)?;
    let o = entry(false)?;
    if let Some(e) = err {
        return Err(e);
    }
    let s = ONE / (bloch.wronskian * a * n as f64);
    let (d, o) = (d * s, o * s);
    Ok(Mat2::IDENTITY + Mat2::new(d, o, o.conj(), -d))
}

/// The Harris-Lutz transform `Q_n = −Σ_{m≥n} Ñ_m/m`, where `Ñ_m` is `N_m`
/// without its resonant part `β_r(ν)e^{iξ_r m}`.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct HarrisLutz {
    pub coeffs: BetaSeries,
    pub resonant: Sign,
    /// The resonant coefficient at the resonance point.
    pub beta_nu: C64,
    pub k: f64,
    pub a_omega: f64,
}

impl HarrisLutz {
    /// Terms `(coefficient, frequency)` of the off-diagonal entry of `Ñ_m`.
    fn off_terms(&self) -> [(C64, f64); 2] {
        let (xp, xm) = (2.0 * (self.k + self.a_omega), 2.0 * (self.k - self.a_omega));
        match self.resonant {
            Sign::Plus => [(self.coeffs.beta_plus - self.beta_nu, xp), (self.coeffs.beta_minus, xm)],
            Sign::Minus => [(self.coeffs.beta_plus, xp), (self.coeffs.beta_minus - self.beta_nu, xm)],
        }
    }

    fn tail(coef: C64, xi: f64, n: u64) -> C64 {
        if coef == ZERO {
            return ZERO;
        }
        let r = xi.rem_euclid(2.0 * PI);
        if r == 0.0 || r == 2.0 * PI {
            // ε = 0 exactly: the coefficient difference vanishes as well
            return ZERO;
        }
        coef * exp_tail_sum(xi, n)
    }

    pub fn q(&self, n: u64) -> Mat2 {
        let q11 = Self::tail(self.coeffs.beta0, 2.0 * self.a_omega, n);
        let q11 = q11 - q11.conj();
        let q12 = self.off_terms().iter().map(|&(c, xi)| Self::tail(c, xi, n)).sum::<C64>();
        Mat2::new(-q11, -q12, -q12.conj(), q11)
    }

    /// `Ñ_n/n`, which equals `Q_{n+1} − Q_n`.
    pub fn bracket(&self, n: u64) -> Mat2 {
        let nf = n as f64;
        let d = self.coeffs.beta0 * C64::from_polar(1.0, 2.0 * self.a_omega * nf);
        let d = d - d.conj();
        let o = self.off_terms().iter().map(|&(c, xi)| c * C64::from_polar(1.0, xi * nf)).sum::<C64>();
        Mat2::new(d, o, o.conj(), -d).scale((1.0 / nf).into())
    }

    /// `Σ |coef|/(n|sin(ξ/2)|)` over the four exponentials.
    pub fn magnitude_bound(&self, n: u64) -> f64 {
        let nf = n as f64;
        let term = |c: C64, xi: f64| {
            let s = (0.5 * xi).sin().abs();
            if c == ZERO {
                0.0
            } else {
                c.norm() / (nf * s)
            }
        };
        let b0 = 2.0 * term(self.coeffs.beta0, 2.0 * self.a_omega);
        b0 + self.off_terms().iter().map(|&(c, xi)| term(c, xi)).sum::<f64>()
    }
}

/// `harris_lutz_Q1` for the reduction at `λ`.
pub fn harris_lutz_q1(hl: &HarrisLutz, n: u64) -> (Mat2, f64) {
    (hl.q(n), hl.magnitude_bound(n))
}

/// `T` with `T⁻¹[[0, e^{i(θ+φ)}], [e^{−i(θ+φ)}, 0]]T = S(φ)`.
pub fn diagonalizer(theta: f64) -> (Mat2, Mat2) {
    let h = C64::from_polar(1.0, 0.5 * theta);
    let t = Mat2::new(h, I * h, h.conj(), -I * h.conj());
    let tinv = Mat2::new(h.conj(), h, -I * h.conj(), I * h).scale(0.5.into());
    (t, tinv)
}

/// Everything needed to run the operator-derived model at `λ`.
#[derive(Debug, Clone)]
pub struct Reduction {
    pub cfg: ProblemConfig,
    pub nu: f64,
    pub lambda: f64,
    pub sign: Sign,
    pub epsilon: f64,
    pub beta: f64,
    pub theta: f64,
    pub bloch: BlochData,
    pub hl: HarrisLutz,
    pub t: Mat2,
    pub tinv: Mat2,
}

/// Fraction of the quasi-momentum range of a band admitted around `ν`.
const U_CR_HALF_WIDTH: f64 = 0.3;

/// Check `λ ∈ U_cr`: same band as `ν`, `|k(λ) − k(ν)| < 0.3π`, and closer to `ν`
/// than to the sibling resonance point in quasi-momentum.
pub fn in_critical_window(cfg: &ProblemConfig, bands: &BandStructure, rp: &ResonancePoint, lambda: f64) -> Result<f64> {
    let j = rp.band_index;
    let band = bands.band(j)?;
    if !(lambda > band.low && lambda < band.high) {
        return Err(domain(format!("λ = {lambda} is not inside band {j}")));
    }
    let k = k_from_delta(discriminant(&cfg.periodic, lambda)?, j);
    let dk = k - rp.k_target;
    let (kp, km) = crate::resonance::k_targets(cfg.period(), cfg.wvn.omega, j);
    let sibling = if rp.sign.is_plus() { km } else { kp };
    if dk.abs() >= U_CR_HALF_WIDTH * PI || (k - sibling).abs() <= dk.abs() {
        return Err(domain(format!("λ = {lambda} is outside the critical window of ν = {}", rp.nu)));
    }
    Ok(k)
}

pub fn reduce_to_model(cfg: &ProblemConfig, bands: &BandStructure, rp: &ResonancePoint, lambda: f64) -> Result<Reduction> {
    let j = rp.band_index;
    let k = in_critical_window(cfg, bands, rp, lambda)?;
    let bloch_nu = bloch_data(&cfg.periodic, bands, rp.nu, j, DEFAULT_L_MAX)?;
    let bloch = if lambda == rp.nu { bloch_nu.clone() } else { bloch_data(&cfg.periodic, bands, lambda, j, DEFAULT_L_MAX)? };
    let coeffs = beta_series(&bloch, &cfg.wvn);
    let beta_nu = beta_series(&bloch_nu, &cfg.wvn).get(rp.sign);
    let theta = beta_nu.arg();
    let (t, tinv) = diagonalizer(theta);
    let hl = HarrisLutz { coeffs, resonant: rp.sign, beta_nu, k, a_omega: cfg.period() * cfg.wvn.omega };
    Ok(Reduction {
        cfg: cfg.clone(),
        nu: rp.nu,
        lambda,
        sign: rp.sign,
        epsilon: if lambda == rp.nu { 0.0 } else { 2.0 * (k - rp.k_target) },
        beta: beta_nu.norm(),
        theta,
        bloch,
        hl,
        t,
        tinv,
    })
}

impl Reduction {
    /// `v_{α,1} = T⁻¹e^{−Q₁}η(0)` with `η(0)` the Bloch coordinates of `(sin α, cos α)`.
    pub fn v1(&self, alpha: f64) -> Result<Vec2> {
        let p = BlochData::bloch_matrix(&self.bloch.psi_plus_init);
        let pinv = p.inverse().ok_or_else(|| domain("degenerate Bloch matrix"))?;
        let eta = pinv.apply(&[alpha.sin().into(), alpha.cos().into()]);
        Ok((self.tinv * self.hl.q(1).scale((-1.0).into()).exp_traceless()).apply(&eta))
    }

    pub fn source(&self) -> OperatorSource<'_> {
        OperatorSource {
            red: self,
            ode: Dop853::new(MONODROMY_RTOL, MONODROMY_ATOL),
            exp_q_n: None,
            remainder_l1: 0.0,
        }
    }

    /// `I + (β/n)S(εn)` as produced by the reduction.
    pub fn model_bracket(&self, n: u64) -> Mat2 {
        let nf = n as f64;
        Mat2::IDENTITY + super::s_matrix(self.epsilon * nf).scale((self.beta / nf).into())
    }
}

/// Sequential source of `T⁻¹e^{−Q_{n+1}}M_n e^{Q_n}T`.
pub struct OperatorSource<'a> {
    red: &'a Reduction,
    ode: Dop853,
    exp_q_n: Option<(u64, Mat2)>,
    /// Running `Σ‖R_n‖` over the brackets produced so far.
    pub remainder_l1: f64,
}

impl StepSource for OperatorSource<'_> {
    fn beta(&self) -> f64 {
        self.red.beta
    }
    fn epsilon(&self) -> f64 {
        self.red.epsilon
    }
    fn n_start(&self) -> u64 {
        1
    }
    fn bracket(&mut self, n: u64) -> Result<Mat2> {
        let red = self.red;
        let e_qn = match self.exp_q_n {
            Some((m, e)) if m == n => e,
            _ => red.hl.q(n).exp_traceless(),
        };
        let q_next = red.hl.q(n + 1);
        let e_qnext = q_next.exp_traceless();
        let e_mqnext = q_next.scale((-1.0).into()).exp_traceless();
        let m = monodromy_with(&mut self.ode, &red.cfg, &red.bloch, n)?;
        let b = red.tinv * e_mqnext * m * e_qn * red.t;
        if b.det().norm() < 1e-300 {
            return Err(domain(format!("reduced matrix is singular at n = {n}")));
        }
        self.remainder_l1 += (b - red.model_bracket(n)).norm2();
        self.exp_q_n = Some((n + 1, e_qnext));
        Ok(b)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct ModelDensityOptions {
    /// Slow horizon `N|ε|`.
    pub y_run: f64,
    pub max_periods: u64,
}

impl Default for ModelDensityOptions {
    fn default() -> Self {
        Self { y_run: 200.0, max_periods: 1 << 22 }
    }
}

/// Spectral density through the model: `ρ' = 1/(2π|W|‖lim v‖²)`,
/// `lim v = e^{−βCi(|ε|)} lim u`.
pub fn model_density(
    cfg: &ProblemConfig,
    bands: &BandStructure,
    rp: &ResonancePoint,
    lambda: f64,
    opts: &ModelDensityOptions,
) -> Result<DensitySample> {
    if lambda == rp.nu {
        return Err(domain("the model density is not defined at the resonance point"));
    }
    let red = reduce_to_model(cfg, bands, rp, lambda)?;
    let v1 = red.v1(cfg.alpha)?;
    let mut src = red.source();
    let n_end = horizon_for(red.epsilon, opts.y_run, 1).min(opts.max_periods);
    let run = run_recursion(&mut src, v1, n_end)?;
    let (lim_u, err_u) = limit_estimate(&run);
    let scale = if red.beta == 0.0 { 1.0 } else { (-red.beta * ci(red.epsilon.abs())).exp() };
    let lim_v = [lim_u[0] * scale, lim_u[1] * scale];
    let nv = vnorm(&lim_v);
    if !(nv > 0.0 && nv.is_finite()) {
        return Err(Error::Unconverged(format!("model limit at λ = {lambda} is {nv}")));
    }
    let eta = red.t.apply(&lim_v);
    let rel = err_u / vnorm(&lim_u);
    let w = red.bloch.wronskian.norm();
    let rho = 1.0 / (2.0 * PI * w * nv * nv);
    Ok(DensitySample {
        lambda,
        a_coef: eta[0],
        rho_prime: rho,
        x_used: n_end as f64 * cfg.period(),
        est_error: err_u * scale,
        rho_error: 2.0 * rel * rho,
        window_std: 0.0,
        converged: rel < 1e-4,
    })
}

/// First-row functionals `(ℓ(g_D), ℓ(g_N))` of `Θ` applied to `v_{α,1}(0)`
/// for `α = 0` and `α = π/2`, so that `ℓ(α) = ℓ_D sin α + ℓ_N cos α`.
pub fn theta_functional(red: &Reduction, n_end: u64) -> Result<(C64, C64, super::ThetaResult)> {
    if red.epsilon != 0.0 {
        return Err(domain("Θ needs λ = ν"));
    }
    let mut src = red.source();
    let th = theta_map(&mut src, n_end)?;
    let row = |v: Vec2| th.theta.0[0][0] * v[0] + th.theta.0[0][1] * v[1];
    let ld = row(red.v1(PI / 2.0)?);
    let ln = row(red.v1(0.0)?);
    Ok((ld, ln, th))
}
