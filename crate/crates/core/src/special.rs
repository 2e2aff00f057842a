//! Sine and cosine integrals.
//!
//! `Cin(x) = ∫₀ˣ (1 − cos t)/t dt` is entire and is the numerically safe
//! companion of `Ci(x) = γ + ln x − Cin(x)` near the origin.

use num_complex::Complex64;
use std::f64::consts::{FRAC_PI_2, PI};

pub const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

const SERIES_MAX: f64 = 2.0;

fn series_si_cin(x: f64) -> (f64, f64) {
    let x2 = x * x;
    // Si: Σ (−1)^k x^{2k+1} / ((2k+1)(2k+1)!)
    let mut term = x; // x^{2k+1}/(2k+1)!
    let mut si = x;
    let mut k = 0u32;
    loop {
        k += 1;
        let m = (2 * k) as f64;
        term *= -x2 / (m * (m + 1.0));
        let add = term / (m + 1.0);
        si += add;
        if add.abs() < 1e-17 * si.abs().max(1e-300) || k > 60 {
            break;
        }
    }
    // Cin: Σ_{k≥1} (−1)^{k+1} x^{2k} / (2k (2k)!)
    let mut t = 1.0; // x^{2k}/(2k)!
    let mut cin = 0.0;
    let mut k = 0u32;
    loop {
        k += 1;
        let m = (2 * k) as f64;
        t *= -x2 / ((m - 1.0) * m);
        let add = -t / m;
        cin += add;
        if add.abs() < 1e-17 * cin.abs().max(1e-300) || k > 60 {
            break;
        }
    }
    (si, cin)
}

/// `(Si(x), Ci(x))` for `x > 2` via the continued fraction of `E₁(ix)`.
fn continued_fraction(x: f64) -> (f64, f64) {
    const TINY: f64 = 1e-300;
    let (mut br, bi) = (1.0, x);
    let (mut cr, mut ci) = (1.0 / TINY, 0.0);
    let (mut dr, mut di) = cdiv(1.0, 0.0, br, bi);
    let (mut hr, mut hi) = (dr, di);
    for i in 2..10_000 {
        let a = -((i - 1) as f64).powi(2);
        br += 2.0;
        // d = 1/(a d + b)
        let (tr, ti) = (a * dr + br, a * di + bi);
        let (nd_r, nd_i) = cdiv(1.0, 0.0, tr, ti);
        dr = nd_r;
        di = nd_i;
        // c = b + a/c
        let (qr, qi) = cdiv(a, 0.0, cr, ci);
        cr = br + qr;
        ci = bi + qi;
        let (delr, deli) = (cr * dr - ci * di, cr * di + ci * dr);
        let (nhr, nhi) = (hr * delr - hi * deli, hr * deli + hi * delr);
        hr = nhr;
        hi = nhi;
        if (delr - 1.0).abs() + deli.abs() < 1e-16 {
            break;
        }
    }
    let (c, s) = (x.cos(), -x.sin());
    let (fr, fi) = (hr * c - hi * s, hr * s + hi * c);
    (FRAC_PI_2 + fi, -fr)
}

fn cdiv(ar: f64, ai: f64, br: f64, bi: f64) -> (f64, f64) {
    let d = br * br + bi * bi;
    ((ar * br + ai * bi) / d, (ai * br - ar * bi) / d)
}

/// Sine integral, odd in `x`.
pub fn si(x: f64) -> f64 {
    let ax = x.abs();
    let v = if ax <= SERIES_MAX { series_si_cin(ax).0 } else { continued_fraction(ax).0 };
    v.copysign(x)
}

/// Entire cosine integral, even in `x`.
pub fn cin(x: f64) -> f64 {
    let ax = x.abs();
    if ax <= SERIES_MAX {
        series_si_cin(ax).1
    } else {
        EULER_GAMMA + ax.ln() - continued_fraction(ax).1
    }
}

/// Cosine integral for `x > 0`.
pub fn ci(x: f64) -> f64 {
    assert!(x > 0.0, "Ci needs a positive argument");
    if x <= SERIES_MAX {
        EULER_GAMMA + x.ln() - series_si_cin(x).1
    } else {
        continued_fraction(x).1
    }
}

/// `∫_{r0}^{r1} cos(ε r)/r dr` for `0 < r0 ≤ r1`.
pub fn cos_over_r(eps: f64, r0: f64, r1: f64) -> f64 {
    let e = eps.abs();
    let log_part = if r1 - r0 < r0 { ((r1 - r0) / r0).ln_1p() } else { (r1 / r0).ln() };
    if e == 0.0 {
        return log_part;
    }
    if e * r1 <= SERIES_MAX {
        log_part - (cin(e * r1) - cin(e * r0))
    } else {
        ci(e * r1) - ci(e * r0)
    }
}

/// `B_{2p}` for `p = 1..=15`.
const BERNOULLI: [f64; 15] = [
    1.0 / 6.0,
    -1.0 / 30.0,
    1.0 / 42.0,
    -1.0 / 30.0,
    5.0 / 66.0,
    -691.0 / 2730.0,
    7.0 / 6.0,
    -3617.0 / 510.0,
    43867.0 / 798.0,
    -174611.0 / 330.0,
    854513.0 / 138.0,
    -236364091.0 / 2730.0,
    8553103.0 / 6.0,
    -23749461029.0 / 870.0,
    8615841276005.0 / 14322.0,
];

/// `Σ_{m≥n} e^{imξ}/m` for `n ≥ 1` and `ξ ∉ 2πℤ`.
///
/// Small `n` subtract a partial sum from `−ln(1 − e^{iξ})`; larger `n` use
/// Euler-Maclaurin on `e^{iξx}/x` after reducing `ξ` to `(−π, π]`.
pub fn exp_tail_sum(xi: f64, n: u64) -> Complex64 {
    assert!(n >= 1, "tail sums start at m = 1");
    let two_pi = 2.0 * PI;
    let mut x = xi.rem_euclid(two_pi);
    if x > PI {
        x -= two_pi;
    }
    assert!(x != 0.0, "ξ is a multiple of 2π");
    if n < 30 {
        let z = Complex64::from_polar(1.0, x);
        let mut s = -(Complex64::new(1.0, 0.0) - z).ln();
        for m in 1..n {
            s -= Complex64::from_polar(1.0 / m as f64, x * m as f64);
        }
        return s;
    }
    let nf = n as f64;
    let ax = x.abs();
    let integral = Complex64::new(-ci(ax * nf), (FRAC_PI_2 - si(ax * nf)) * x.signum());
    let phase = Complex64::from_polar(1.0, x * nf);
    let mut sum = integral + phase / (2.0 * nf);
    let ix = Complex64::new(0.0, x);
    let mut prev = f64::INFINITY;
    for (p, b) in BERNOULLI.iter().enumerate() {
        let m = 2 * p + 1;
        // f^{(m)}(n)/m! with f = e^{iξx}/x
        let mut acc = Complex64::new(0.0, 0.0);
        let mut fact = 1.0; // (m−j)!
        let mut pow_ix = Complex64::new(1.0, 0.0); // (iξ)^{m−j}
        for j in (0..=m).rev() {
            let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
            acc += pow_ix * (sign / (fact * nf.powi(j as i32 + 1)));
            pow_ix *= ix;
            fact *= (m - j + 1) as f64;
        }
        let term = phase * acc * (b / (m + 1) as f64);
        let t = term.norm();
        if t > prev {
            break;
        }
        sum -= term;
        prev = t;
        if t < 1e-18 * sum.norm() {
            break;
        }
    }
    sum
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quad::integrate_real;

    #[test]
    fn tabulated_values() {
        let table = [
            (0.5, 0.493_107_418_043_066_7, -0.177_784_078_806_612_6),
            (1.0, 0.946_083_070_367_183, 0.337_403_922_900_968_1),
            (5.0, 1.549_931_244_944_674, -0.190_029_749_656_644_3),
            (10.0, 1.658_347_594_218_874, -0.045_456_433_004_455_4),
        ];
        for (x, s, c) in table {
            assert!((si(x) - s).abs() < 1e-14, "Si({x})");
            assert!((ci(x) - c).abs() < 1e-14, "Ci({x})");
        }
    }

    #[test]
    fn continuous_across_branch_switch() {
        let lo = 2.0 - 1e-12;
        let hi = 2.0 + 1e-12;
        // derivatives at 2 are sin 2/2, cos 2/2 and (1 − cos 2)/2
        let d = hi - lo;
        assert!((si(hi) - si(lo) - d * 2f64.sin() / 2.0).abs() < 1e-14);
        assert!((ci(hi) - ci(lo) - d * 2f64.cos() / 2.0).abs() < 1e-14);
        assert!((cin(hi) - cin(lo) - d * (1.0 - 2f64.cos()) / 2.0).abs() < 1e-14);
    }

    #[test]
    fn large_argument_asymptotics() {
        let x = 1e6;
        assert!((si(x) - (FRAC_PI_2 - x.cos() / x)).abs() < 1e-11);
        assert!((ci(x) - x.sin() / x).abs() < 1e-11);
    }

    #[test]
    fn cos_over_r_matches_quadrature() {
        for &(eps, n) in &[(0.1, 50.0), (1e-4, 3.0), (1e-4, 1e5), (0.7, 1.0), (0.0, 2.0)] {
            let q = integrate_real(|r: f64| (eps * r).cos() / r, n, n + 1.0, 1e-16, 1e-15).unwrap();
            let v = cos_over_r(eps, n, n + 1.0);
            assert!((q - v).abs() < 1e-13 * q.abs().max(1e-3), "eps={eps} n={n}: {q} vs {v}");
        }
    }

    #[test]
    fn exp_tail_sum_matches_direct_summation() {
        for &xi in &[1.0, -0.3, 1e-3, 3.0, -3.1, 2.0 * PI - 0.2, 7.5] {
            for &n in &[1u64, 7, 29, 30, 31, 100, 2000] {
                let big = 4_000_000u64;
                let mut s = Complex64::new(0.0, 0.0);
                for m in n..big {
                    s += Complex64::from_polar(1.0 / m as f64, xi * m as f64);
                }
                // remaining tail ≈ z^M/(M(1 − z)) − z^{M+1}/(M²(1 − z)²)
                let z = Complex64::from_polar(1.0, xi);
                let zm = Complex64::from_polar(1.0, xi * big as f64);
                let mf = big as f64;
                s += zm / (mf * (1.0 - z)) - zm * z / (mf * mf * (1.0 - z) * (1.0 - z));
                let v = exp_tail_sum(xi, n);
                let tol = 1e-10 / (xi.sin().abs() + 1e-3);
                assert!((v - s).norm() < tol, "ξ={xi} n={n}: {v} vs {s}");
            }
        }
    }

    #[test]
    fn exp_tail_sum_bound() {
        let v = exp_tail_sum(1.0, 10);
        assert!(v.norm() <= 1.0 / (10.0 * 0.5f64.sin()));
    }
}
