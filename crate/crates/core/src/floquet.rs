//! Floquet data of the periodic equation `−ψ'' + qψ = λψ`.

use std::f64::consts::PI;
use std::sync::Arc;

use serde::Serialize;

use crate::error::{domain, Error, Result};
use crate::linalg::{Mat2, C64, ZERO};
use crate::ode::Dop853;
use crate::potentials::PeriodicPotential;
use crate::quad;

const RTOL: f64 = 1e-13;
const ATOL: f64 = 1e-15;

/// Bloch data is refused when `2 − |Δ|` is below this.
pub const EDGE_MARGIN: f64 = 1e-6;
/// An extremum of Δ this close to ±2 is a closed gap (double edge).
const TOUCH_TOL: f64 = 1e-9;
pub const DEFAULT_L_MAX: usize = 64;

fn integrator() -> Dop853 {
    Dop853::new(RTOL, ATOL)
}

/// Fundamental solutions `(u₁, u₁', u₂, u₂')` with `u₁(0)=1, u₂'(0)=1`.
pub type Fundamental = [f64; 4];

fn propagate(q: &PeriodicPotential, lambda: f64, x0: f64, y0: Fundamental, x1: f64) -> Result<Fundamental> {
    let sys = |x: f64, y: &[f64; 4]| {
        let v = q.eval(x) - lambda;
        [y[1], v * y[0], y[3], v * y[2]]
    };
    let breaks = q.breakpoints_between(x0, x1);
    Ok(integrator().integrate_piecewise(&sys, x0, y0, x1, &breaks)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TransferMatrix {
    pub entries: [[f64; 2]; 2],
    pub lambda: f64,
}

impl TransferMatrix {
    pub fn det(&self) -> f64 {
        let m = &self.entries;
        m[0][0] * m[1][1] - m[0][1] * m[1][0]
    }

    pub fn trace(&self) -> f64 {
        self.entries[0][0] + self.entries[1][1]
    }
}

/// Map `(ψ(0), ψ'(0)) ↦ (ψ(a), ψ'(a))`.
pub fn transfer_matrix(q: &PeriodicPotential, lambda: f64) -> Result<TransferMatrix> {
    let y = propagate(q, lambda, 0.0, [1.0, 0.0, 0.0, 1.0], q.period())?;
    Ok(TransferMatrix { entries: [[y[0], y[2]], [y[1], y[3]]], lambda })
}

pub fn discriminant(q: &PeriodicPotential, lambda: f64) -> Result<f64> {
    Ok(transfer_matrix(q, lambda)?.trace())
}

/// `(Δ(λ), Δ'(λ))`, the derivative from the variational equation.
pub fn discriminant_with_derivative(q: &PeriodicPotential, lambda: f64) -> Result<(f64, f64)> {
    let sys = |x: f64, y: &[f64; 8]| {
        let v = q.eval(x) - lambda;
        [y[1], v * y[0], y[3], v * y[2], y[5], v * y[4] - y[0], y[7], v * y[6] - y[2]]
    };
    let a = q.period();
    let breaks = q.breakpoints_between(0.0, a);
    let y = integrator().integrate_piecewise(&sys, 0.0, [1.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0], a, &breaks)?;
    Ok((y[0] + y[3], y[4] + y[7]))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum EdgeKind {
    /// Δ = +2
    Periodic,
    /// Δ = −2
    Antiperiodic,
}

impl EdgeKind {
    fn target(self) -> f64 {
        match self {
            EdgeKind::Periodic => 2.0,
            EdgeKind::Antiperiodic => -2.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Band {
    pub index: usize,
    pub low: f64,
    pub high: f64,
    pub low_kind: EdgeKind,
    pub high_kind: EdgeKind,
}

impl Band {
    pub fn width(&self) -> f64 {
        self.high - self.low
    }

    pub fn contains(&self, lambda: f64) -> bool {
        lambda >= self.low && lambda <= self.high
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BandStructure {
    pub bands: Vec<Band>,
    pub search_ceiling: f64,
}

impl BandStructure {
    pub fn band(&self, j: usize) -> Result<&Band> {
        self.bands.get(j).ok_or_else(|| {
            domain(format!("band {j} not computed (search ceiling {})", self.search_ceiling))
        })
    }

    pub fn band_of(&self, lambda: f64) -> Option<usize> {
        self.bands.iter().position(|b| b.low < lambda && lambda < b.high)
    }
}

/// Illinois regula falsi on a sign-changing bracket.
pub(crate) fn illinois<F: FnMut(f64) -> Result<f64>>(mut f: F, mut a: f64, mut b: f64, mut fa: f64, mut fb: f64) -> Result<f64> {
    let tol = |x: f64| 1e-14 * x.abs().max(1.0);
    let mut side = 0;
    for _ in 0..200 {
        if (b - a).abs() <= tol(a) {
            break;
        }
        let mut c = (a * fb - b * fa) / (fb - fa);
        if !(c > a.min(b) && c < a.max(b)) {
            c = 0.5 * (a + b);
        }
        let fc = f(c)?;
        if fc == 0.0 {
            return Ok(c);
        }
        if (fc < 0.0) == (fb < 0.0) {
            b = c;
            fb = fc;
            if side == -1 {
                fa *= 0.5;
            }
            side = -1;
        } else {
            a = c;
            fa = fc;
            if side == 1 {
                fb *= 0.5;
            }
            side = 1;
        }
        // fall back to a plain halving when regula falsi stalls
        let (m, fm) = {
            let m = 0.5 * (a + b);
            (m, f(m)?)
        };
        if (fm < 0.0) == (fa < 0.0) {
            a = m;
            fa = fm;
        } else {
            b = m;
            fb = fm;
        }
    }
    Ok(0.5 * (a + b))
}

/// Edges with `λ ≤ lambda_max`, assembled into bands `[e₂ⱼ, e₂ⱼ₊₁]`.
pub fn band_edges(q: &PeriodicPotential, lambda_max: f64) -> Result<BandStructure> {
    let a = q.period();
    let start = q.lower_bound() - 1.0;
    if lambda_max <= start {
        return Err(domain("lambda_max lies below the spectrum"));
    }
    let h = 0.1 / (a * a);
    let n = ((lambda_max - start) / h).ceil() as usize + 2;
    let grid: Vec<f64> = (0..=n).map(|i| start + i as f64 * h).collect();
    use rayon::prelude::*;
    let vals: Vec<(f64, f64)> =
        grid.par_iter().map(|&l| discriminant_with_derivative(q, l)).collect::<Result<Vec<_>>>()?;

    let delta = |l: f64| discriminant(q, l);
    let ddelta = |l: f64| discriminant_with_derivative(q, l).map(|v| v.1);

    // (λ, kind, multiplicity)
    let mut events: Vec<(f64, EdgeKind, u8)> = Vec::new();
    let mut doubles: Vec<(f64, EdgeKind, f64)> = Vec::new();
    for i in 0..n {
        let (l0, l1) = (grid[i], grid[i + 1]);
        let ((f0, d0), (f1, d1)) = (vals[i], vals[i + 1]);
        let mut found = [0usize; 2];
        for (slot, kind) in [EdgeKind::Periodic, EdgeKind::Antiperiodic].into_iter().enumerate() {
            let t = kind.target();
            let (g0, g1) = (f0 - t, f1 - t);
            if (g0 < 0.0) != (g1 < 0.0) {
                let r = illinois(|l| delta(l).map(|d| d - t), l0, l1, g0, g1)?;
                events.push((r, kind, 1));
                found[slot] += 1;
            }
        }
        if (d0 < 0.0) != (d1 < 0.0) {
            let ls = illinois(ddelta, l0, l1, d0, d1)?;
            let ds = delta(ls)?;
            let kind = if ds > 0.0 { EdgeKind::Periodic } else { EdgeKind::Antiperiodic };
            let slot = if ds > 0.0 { 0 } else { 1 };
            let gap = ds.abs() - 2.0;
            if gap.abs() < TOUCH_TOL {
                let eta = 1e-4 * h;
                let curv = (ddelta(ls + eta)? - ddelta(ls - eta)?).abs() / (2.0 * eta);
                let radius = 4.0 * (2.0 * TOUCH_TOL / curv.max(1e-300)).sqrt();
                doubles.push((ls, kind, radius));
            } else if gap > 0.0
                && found[slot] == 0
                && (f0 - kind.target() < 0.0) == (f1 - kind.target() < 0.0)
                && (f0 - kind.target() < 0.0) != (ds - kind.target() < 0.0)
            {
                // a narrow gap entirely inside this grid cell
                let t = kind.target();
                let gs = ds - t;
                let r0 = illinois(|l| delta(l).map(|d| d - t), l0, ls, f0 - t, gs)?;
                let r1 = illinois(|l| delta(l).map(|d| d - t), ls, l1, gs, f1 - t)?;
                events.push((r0, kind, 1));
                events.push((r1, kind, 1));
            }
        }
    }
    // simple roots generated by rounding near a closed gap collapse into it
    events.retain(|(r, kind, _)| !doubles.iter().any(|(ls, k, rad)| k == kind && (r - ls).abs() < *rad));
    events.extend(doubles.iter().map(|(ls, k, _)| (*ls, *k, 2)));
    events.sort_by(|x, y| x.0.total_cmp(&y.0));

    let mut edges: Vec<(f64, EdgeKind)> = Vec::new();
    for (l, k, m) in events {
        if l <= lambda_max {
            for _ in 0..m {
                edges.push((l, k));
            }
        }
    }
    let bands = edges
        .chunks_exact(2)
        .enumerate()
        .map(|(index, e)| Band { index, low: e[0].0, high: e[1].0, low_kind: e[0].1, high_kind: e[1].1 })
        .collect::<Vec<_>>();
    for b in &bands {
        let (lk, hk) = if b.index % 2 == 0 {
            (EdgeKind::Periodic, EdgeKind::Antiperiodic)
        } else {
            (EdgeKind::Antiperiodic, EdgeKind::Periodic)
        };
        if b.low_kind != lk || b.high_kind != hk {
            return Err(domain(format!("inconsistent edge pattern at band {}; grid too coarse", b.index)));
        }
    }
    Ok(BandStructure { bands, search_ceiling: lambda_max })
}

/// Branch of `acos(Δ/2)` mapping band `j` onto `[πj, π(j+1)]`.
pub fn k_from_delta(delta: f64, j: usize) -> f64 {
    let theta = (0.5 * delta).clamp(-1.0, 1.0).acos();
    if j % 2 == 0 {
        PI * j as f64 + theta
    } else {
        PI * j as f64 + PI - theta
    }
}

/// Quasi-momentum on band `j`, increasing from `πj` to `π(j+1)`.
pub fn quasimomentum(q: &PeriodicPotential, bands: &BandStructure, lambda: f64, j: usize) -> Result<f64> {
    let band = bands.band(j)?;
    let slack = 1e-12 * lambda.abs().max(1.0);
    if lambda < band.low - slack || lambda > band.high + slack {
        return Err(domain(format!("λ = {lambda} is outside band {j} [{}, {}]", band.low, band.high)));
    }
    let d = discriminant(q, lambda)?;
    if d.abs() > 2.0 + 1e-9 {
        return Err(domain(format!("|Δ({lambda})| = {} exceeds 2", d.abs())));
    }
    Ok(k_from_delta(d, j))
}

/// Fundamental solutions sampled on a uniform grid over one period.
#[derive(Debug)]
struct BlochProfile {
    q: PeriodicPotential,
    lambda: f64,
    step: f64,
    nodes: Vec<Fundamental>,
}

impl BlochProfile {
    fn build(q: &PeriodicPotential, lambda: f64, n: usize) -> Result<Self> {
        let a = q.period();
        let step = a / n as f64;
        let mut nodes = Vec::with_capacity(n + 1);
        let mut y = [1.0, 0.0, 0.0, 1.0];
        nodes.push(y);
        let sys = |x: f64, y: &[f64; 4]| {
            let v = q.eval(x) - lambda;
            [y[1], v * y[0], y[3], v * y[2]]
        };
        let mut ode = integrator();
        for s in 0..n {
            let x0 = s as f64 * step;
            let x1 = if s + 1 == n { a } else { (s + 1) as f64 * step };
            let breaks = q.breakpoints_between(x0, x1);
            y = ode.integrate_piecewise(&sys, x0, y, x1, &breaks)?;
            nodes.push(y);
        }
        Ok(Self { q: q.clone(), lambda, step, nodes })
    }

    fn at(&self, t: f64) -> Result<Fundamental> {
        let n = self.nodes.len() - 1;
        let s = ((t / self.step).floor().max(0.0) as usize).min(n);
        let x0 = s as f64 * self.step;
        if (t - x0).abs() < 1e-15 * self.step {
            return Ok(self.nodes[s]);
        }
        propagate(&self.q, self.lambda, x0, self.nodes[s], t)
    }
}

/// Per-λ Floquet data with the normalization
/// `|ψ₊(0)|² + |ψ₊'(0)|² = 1`, `ψ₊(0) ≥ 0` (or `ψ₊'(0) > 0` if `ψ₊(0) = 0`).
#[derive(Debug, Clone)]
pub struct BlochData {
    pub lambda: f64,
    pub k: f64,
    pub band_index: usize,
    pub period: f64,
    pub psi_plus_init: [C64; 2],
    pub wronskian: C64,
    pub l_max: usize,
    /// `b_l` for `l = −l_max..=l_max`.
    pub fourier_b: Vec<C64>,
    /// `b⁺_l` for `l = −l_max..=l_max`.
    pub fourier_b_plus: Vec<C64>,
    pub transfer: TransferMatrix,
    profile: Arc<BlochProfile>,
}

fn wronskian_of(v: &[C64; 2]) -> C64 {
    v[0] * v[1].conj() - v[1] * v[0].conj()
}

pub fn bloch_data(
    q: &PeriodicPotential,
    bands: &BandStructure,
    lambda: f64,
    j: usize,
    l_max: usize,
) -> Result<BlochData> {
    let band = bands.band(j)?;
    if !(lambda > band.low && lambda < band.high) {
        return Err(domain(format!("λ = {lambda} is not inside band {j}")));
    }
    let n = (16 * (l_max + 1)).max(512).next_power_of_two();
    let profile = BlochProfile::build(q, lambda, n)?;
    let end = profile.nodes[n];
    let transfer = TransferMatrix { entries: [[end[0], end[2]], [end[1], end[3]]], lambda };
    let delta = transfer.trace();
    if 2.0 - delta.abs() < EDGE_MARGIN {
        return Err(domain(format!("λ = {lambda} is within the edge margin (Δ = {delta})")));
    }
    let k = k_from_delta(delta, j);
    let mu = C64::from_polar(1.0, k);
    let m = &transfer.entries;
    let c1 = [C64::from(m[0][1]), mu - m[0][0]];
    let c2 = [mu - m[1][1], C64::from(m[1][0])];
    let nrm = |v: &[C64; 2]| (v[0].norm_sqr() + v[1].norm_sqr()).sqrt();
    let mut v = if nrm(&c1) >= nrm(&c2) { c1 } else { c2 };
    let s = nrm(&v);
    v = [v[0] / s, v[1] / s];
    let phase = if v[0].norm() > 1e-14 { v[0].conj() / v[0].norm() } else { v[1].conj() / v[1].norm() };
    v = [v[0] * phase, v[1] * phase];

    let mut fourier_b = vec![ZERO; 2 * l_max + 1];
    let mut fourier_b_plus = vec![ZERO; 2 * l_max + 1];
    let samples: Vec<C64> = profile.nodes[..n].iter().map(|f| v[0] * f[0] + v[1] * f[2]).collect();
    for (idx, l) in (-(l_max as i64)..=l_max as i64).enumerate() {
        let mut bp = ZERO;
        let mut b = ZERO;
        for (s, p) in samples.iter().enumerate() {
            let x = s as f64 / n as f64; // x/a
            bp += p * p * C64::from_polar(1.0, -2.0 * (PI * l as f64 + k) * x);
            b += p.norm_sqr() * C64::from_polar(1.0, -2.0 * PI * l as f64 * x);
        }
        fourier_b_plus[idx] = bp / n as f64;
        fourier_b[idx] = b / n as f64;
    }
    Ok(BlochData {
        lambda,
        k,
        band_index: j,
        period: q.period(),
        psi_plus_init: v,
        wronskian: wronskian_of(&v),
        l_max,
        fourier_b,
        fourier_b_plus,
        transfer,
        profile: Arc::new(profile),
    })
}

impl BlochData {
    /// Floquet multiplier `e^{ik}` of ψ₊.
    pub fn multiplier(&self) -> C64 {
        C64::from_polar(1.0, self.k)
    }

    /// `(ψ₊(x), ψ₊'(x))` for `x ≥ 0`.
    pub fn psi_plus(&self, x: f64) -> Result<[C64; 2]> {
        let a = self.period;
        let m = (x / a).floor();
        let t = (x - m * a).clamp(0.0, a);
        let f = self.profile.at(t)?;
        let v = &self.psi_plus_init;
        let ph = C64::from_polar(1.0, self.k * m);
        Ok([(v[0] * f[0] + v[1] * f[2]) * ph, (v[0] * f[1] + v[1] * f[3]) * ph])
    }

    /// ψ₊ at a period boundary `x = m·a`, without integration.
    pub fn psi_plus_at_period(&self, m: u64) -> [C64; 2] {
        let ph = C64::from_polar(1.0, self.k * m as f64);
        [self.psi_plus_init[0] * ph, self.psi_plus_init[1] * ph]
    }

    /// `[[ψ₋, ψ₊], [ψ₋', ψ₊']]` from ψ₊ data.
    pub fn bloch_matrix(p: &[C64; 2]) -> Mat2 {
        Mat2::new(p[0].conj(), p[0], p[1].conj(), p[1])
    }

    pub fn b(&self, l: i64) -> C64 {
        self.coef(&self.fourier_b, l)
    }

    pub fn b_plus(&self, l: i64) -> C64 {
        self.coef(&self.fourier_b_plus, l)
    }

    /// `b⁻_l = conj(b⁺_{−l})`.
    pub fn b_minus(&self, l: i64) -> C64 {
        self.b_plus(-l).conj()
    }

    fn coef(&self, v: &[C64], l: i64) -> C64 {
        let idx = l + self.l_max as i64;
        if idx < 0 || idx as usize >= v.len() {
            ZERO
        } else {
            v[idx as usize]
        }
    }

    /// Same Floquet data with ψ₊ replaced by `c·ψ₊`.
    pub fn rescaled(&self, c: C64) -> BlochData {
        let mut out = self.clone();
        out.psi_plus_init = [c * self.psi_plus_init[0], c * self.psi_plus_init[1]];
        out.wronskian = wronskian_of(&out.psi_plus_init);
        let c2 = c * c;
        let n2 = c.norm_sqr();
        out.fourier_b_plus.iter_mut().for_each(|z| *z *= c2);
        out.fourier_b.iter_mut().for_each(|z| *z *= n2);
        out
    }

    /// `∫₀^a ψ₊(t)^2 e^{2iωt} dt` (sign +) or the same with ψ₋.
    pub fn resonant_integral(&self, plus: bool, omega: f64) -> Result<C64> {
        let mut err = None;
        let r = quad::integrate(
            |t| match self.psi_plus(t) {
                Ok(p) => {
                    let psi = if plus { p[0] } else { p[0].conj() };
                    psi * psi * C64::from_polar(1.0, 2.0 * omega * t)
                }
                Err(e) => {
                    err = Some(e);
                    ZERO
                }
            },
            0.0,
            self.period,
            1e-15,
            1e-13,
        );
        if let Some(e) = err {
            return Err(e);
        }
        Ok(r?)
    }

    /// `|Σ|b⁺_l|² − (1/a)∫₀^a |ψ₊|⁴|`.
    pub fn parseval_defect(&self) -> Result<f64> {
        let mut err: Option<Error> = None;
        let integral = quad::integrate_real(
            |t| match self.psi_plus(t) {
                Ok(p) => p[0].norm_sqr().powi(2),
                Err(e) => {
                    err = Some(e);
                    0.0
                }
            },
            0.0,
            self.period,
            1e-15,
            1e-13,
        );
        if let Some(e) = err {
            return Err(e);
        }
        let lhs: f64 = self.fourier_b_plus.iter().map(|z| z.norm_sqr()).sum();
        Ok((lhs - integral? / self.period).abs())
    }

    /// Wronskian recomputed from the ψ₊ data at `x`.
    pub fn wronskian_at(&self, x: f64) -> Result<C64> {
        Ok(wronskian_of(&self.psi_plus(x)?))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testutil::rk4;

    fn free(a: f64) -> PeriodicPotential {
        PeriodicPotential::zero(a).unwrap()
    }

    fn mathieu() -> PeriodicPotential {
        PeriodicPotential::fourier(2.0 * PI, vec![0.0, 2.0], vec![]).unwrap()
    }

    fn rk4_transfer(lambda: f64, h: f64) -> [[f64; 2]; 2] {
        let f = |x: f64, y: &[f64; 4]| {
            let v = 2.0 * x.cos() - lambda;
            [y[1], v * y[0], y[3], v * y[2]]
        };
        let a = 2.0 * PI;
        let y = rk4(f, 0.0, [1.0, 0.0, 0.0, 1.0], a, (a / h).round() as usize);
        [[y[0], y[2]], [y[1], y[3]]]
    }

    #[test]
    fn transfer_matrix_free_examples() {
        let t = transfer_matrix(&free(PI), 1.0).unwrap();
        let want = [[-1.0, 0.0], [0.0, -1.0]];
        for i in 0..2 {
            for j in 0..2 {
                assert!((t.entries[i][j] - want[i][j]).abs() < 1e-12);
            }
        }
        let t = transfer_matrix(&free(1.0), 0.0).unwrap();
        let want = [[1.0, 1.0], [0.0, 1.0]];
        for i in 0..2 {
            for j in 0..2 {
                assert!((t.entries[i][j] - want[i][j]).abs() < 1e-13);
            }
        }
    }

    #[test]
    fn transfer_matrix_mathieu_vs_rk4() {
        let t = transfer_matrix(&mathieu(), 1.0).unwrap();
        let o = rk4_transfer(1.0, 1e-5);
        for i in 0..2 {
            for j in 0..2 {
                assert!((t.entries[i][j] - o[i][j]).abs() < 1e-7, "{:?} vs {:?}", t.entries, o);
            }
        }
        let d = discriminant(&mathieu(), 0.5).unwrap();
        let o = rk4_transfer(0.5, 1e-5);
        assert!((d - (o[0][0] + o[1][1])).abs() < 1e-7);
    }

    #[test]
    fn discriminant_free_values() {
        assert!((discriminant(&free(1.0), PI * PI).unwrap() + 2.0).abs() < 1e-11);
        assert!(discriminant(&free(1.0), PI * PI / 4.0).unwrap().abs() < 1e-11);
    }

    #[test]
    fn derivative_matches_finite_difference() {
        let q = mathieu();
        for l in [-0.3, 0.4, 1.7] {
            let (_, d) = discriminant_with_derivative(&q, l).unwrap();
            let h = 1e-5;
            let fd = (discriminant(&q, l + h).unwrap() - discriminant(&q, l - h).unwrap()) / (2.0 * h);
            assert!((d - fd).abs() < 1e-6 * d.abs().max(1.0));
        }
    }

    #[test]
    fn free_band_edges_touch() {
        let b = band_edges(&free(1.0), 50.0).unwrap();
        assert_eq!(b.bands.len(), 2, "{b:?}");
        let want = [(0.0, PI * PI), (PI * PI, 4.0 * PI * PI)];
        for (band, w) in b.bands.iter().zip(want) {
            assert!((band.low - w.0).abs() < 1e-8 && (band.high - w.1).abs() < 1e-8, "{band:?}");
        }
        let b = band_edges(&free(2.0), 13.0).unwrap();
        for (j, band) in b.bands.iter().enumerate() {
            assert!((band.low - (PI * j as f64 / 2.0).powi(2)).abs() < 1e-8);
            assert!((band.high - (PI * (j + 1) as f64 / 2.0).powi(2)).abs() < 1e-8);
        }
    }

    #[test]
    fn mathieu_first_gap_vs_brute_scan() {
        let q = mathieu();
        let b = band_edges(&q, 2.0).unwrap();
        // brute scan of Δ at step 1e-4 over the first gap region
        let mut crossings = Vec::new();
        let mut prev = discriminant(&q, -1.5).unwrap();
        let mut l = -1.5;
        while l < 2.0 {
            let nl = l + 1e-4;
            let d = discriminant(&q, nl).unwrap();
            for t in [2.0, -2.0] {
                if (prev - t < 0.0) != (d - t < 0.0) {
                    crossings.push(nl);
                }
            }
            prev = d;
            l = nl;
        }
        let edges: Vec<f64> = b.bands.iter().flat_map(|b| [b.low, b.high]).collect();
        assert!(crossings.len() >= 3);
        for (c, e) in crossings.iter().zip(&edges) {
            assert!((c - e).abs() <= 1e-4, "{crossings:?} vs {edges:?}");
        }
        for e in &edges {
            let d = discriminant(&q, *e).unwrap();
            assert!((d.abs() - 2.0).abs() < 1e-9);
        }
    }

    #[test]
    fn quasimomentum_free_and_monotone() {
        let q = free(1.0);
        let b = band_edges(&q, 50.0).unwrap();
        let k = quasimomentum(&q, &b, PI * PI / 4.0, 0).unwrap();
        assert!((k - PI / 2.0).abs() < 1e-10);
        let k = quasimomentum(&q, &b, PI * PI * (1.0 - 1e-12), 0).unwrap();
        assert!((k - PI).abs() < 1e-5);
        assert!(quasimomentum(&q, &b, 12.0, 0).is_err());

        let m = mathieu();
        let bm = band_edges(&m, 3.0).unwrap();
        for band in &bm.bands {
            let mut last = f64::NEG_INFINITY;
            for i in 1..20 {
                let l = band.low + band.width() * i as f64 / 20.0;
                let k = quasimomentum(&m, &bm, l, band.index).unwrap();
                assert!(k > last);
                last = k;
            }
            let lo = quasimomentum(&m, &bm, band.low, band.index).unwrap();
            let hi = quasimomentum(&m, &bm, band.high, band.index).unwrap();
            assert!((lo - PI * band.index as f64).abs() < 1e-4);
            assert!((hi - PI * (band.index + 1) as f64).abs() < 1e-4);
        }
        let l = 0.5 * (bm.bands[1].low + bm.bands[1].high);
        let d = discriminant(&m, l).unwrap();
        let j = bm.band_of(l).unwrap();
        let k = quasimomentum(&m, &bm, l, j).unwrap();
        assert!(((k - PI * j as f64).cos().abs() - (0.5 * d).abs()).abs() < 1e-12);
    }

    #[test]
    fn free_bloch_solution() {
        let q = free(1.0);
        let b = band_edges(&q, 50.0).unwrap();
        let lam = PI * PI / 4.0;
        let bd = bloch_data(&q, &b, lam, 0, 16).unwrap();
        // ψ₊ = n₀ e^{ikx}: (ψ, ψ') = n₀(1, ik)
        let n0 = bd.psi_plus_init[0];
        assert!((bd.psi_plus_init[1] - n0 * C64::new(0.0, PI / 2.0)).norm() < 1e-10);
        assert!((bd.b_plus(0) - n0 * n0).norm() < 1e-10);
        assert!((bd.b(0) - n0.norm_sqr()).norm() < 1e-10);
        assert!((n0.norm_sqr() * (1.0 + lam) - 1.0).abs() < 1e-10);
        for l in 1..=16 {
            assert!(bd.b_plus(l).norm() < 1e-10 && bd.b_plus(-l).norm() < 1e-10);
            assert!(bd.b(l).norm() < 1e-10);
            assert!((bd.b(l) - bd.b(-l).conj()).norm() < 1e-14);
        }
        let w = bd.wronskian;
        assert!(w.re.abs() < 1e-14);
        assert!((w - C64::new(0.0, -2.0 * lam.sqrt() * n0.norm_sqr())).norm() < 1e-10);
    }

    #[test]
    fn mathieu_bloch_parseval_and_wronskian() {
        let q = mathieu();
        let b = band_edges(&q, 2.0).unwrap();
        let band = b.bands[0];
        let lam = 0.5 * (band.low + band.high);
        let bd = bloch_data(&q, &b, lam, 0, 32).unwrap();
        assert!(bd.parseval_defect().unwrap() < 1e-8);
        for x in [PI, 2.0 * PI, 7.3] {
            assert!((bd.wronskian_at(x).unwrap() - bd.wronskian).norm() < 1e-9);
        }
        assert!(bd.psi_plus_init[0].im == 0.0 && bd.psi_plus_init[0].re >= 0.0);
        let p = bd.psi_plus(2.0 * PI).unwrap();
        assert!((p[0] - bd.multiplier() * bd.psi_plus_init[0]).norm() < 1e-10);
        let det = bd.transfer.det();
        assert!((det - 1.0).abs() < 1e-10);
    }

    #[test]
    fn fourier_decay_stable_under_doubling() {
        let q = mathieu();
        let b = band_edges(&q, 2.0).unwrap();
        let lam = 0.5 * (b.bands[0].low + b.bands[0].high);
        let fit = |lm: usize| {
            let bd = bloch_data(&q, &b, lam, 0, lm).unwrap();
            (1..=lm as i64).map(|l| (l * l) as f64 * bd.b_plus(l).norm().max(bd.b_plus(-l).norm())).fold(0.0, f64::max)
        };
        let (c1, c2) = (fit(16), fit(32));
        assert!((c1 - c2).abs() <= 1e-6 * c1.max(1e-12), "{c1} {c2}");
    }

    #[test]
    fn rescaling_covariance() {
        let q = mathieu();
        let b = band_edges(&q, 2.0).unwrap();
        let lam = 0.5 * (b.bands[0].low + b.bands[0].high);
        let bd = bloch_data(&q, &b, lam, 0, 8).unwrap();
        let c = C64::new(0.7, -1.9);
        let r = bd.rescaled(c);
        assert!((r.wronskian - bd.wronskian * c.norm_sqr()).norm() < 1e-12);
        assert!((r.b_plus(1) - bd.b_plus(1) * c * c).norm() < 1e-12);
    }

    #[test]
    fn edge_margin_refusal() {
        let q = free(1.0);
        let b = band_edges(&q, 50.0).unwrap();
        assert!(bloch_data(&q, &b, PI * PI - 1e-9, 0, 8).is_err());
    }
}
