//! Independent oracles for unit tests.

/// Classical fixed-step RK4 over `[x0, x1]` with `n` steps.
pub fn rk4<const N: usize>(f: impl Fn(f64, &[f64; N]) -> [f64; N], x0: f64, y0: [f64; N], x1: f64, n: usize) -> [f64; N] {
    let h = (x1 - x0) / n as f64;
    let mut y = y0;
    let add = |y: &[f64; N], k: &[f64; N], s: f64| {
        let mut o = *y;
        for i in 0..N {
            o[i] += s * k[i];
        }
        o
    };
    for i in 0..n {
        let x = x0 + i as f64 * h;
        let k1 = f(x, &y);
        let k2 = f(x + 0.5 * h, &add(&y, &k1, 0.5 * h));
        let k3 = f(x + 0.5 * h, &add(&y, &k2, 0.5 * h));
        let k4 = f(x + h, &add(&y, &k3, h));
        for j in 0..N {
            y[j] += h / 6.0 * (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j]);
        }
    }
    y
}

/// Boundary angle whose solution at `λ` has the least energy
/// `∫(φ² + φ'²/λ)` over `[X/2, X]`, from the Gram matrix of the two
/// solutions with data `(1, 0)` and `(0, 1)`.
pub fn gram_subordinate_angle(cfg: &crate::potentials::ProblemConfig, lambda: f64, x: f64) -> f64 {
    use std::f64::consts::{FRAC_PI_2, PI};
    let m = 20_000;
    let grid: Vec<f64> = (0..=m).map(|i| 0.5 * x * (1.0 + i as f64 / m as f64)).collect();
    let sol = |alpha: f64| crate::spectral::solve_cauchy(&cfg.with_alpha(alpha).unwrap(), lambda, &grid).unwrap();
    let (d, n) = (sol(FRAC_PI_2), sol(0.0));
    let (mut g11, mut g12, mut g22) = (0.0, 0.0, 0.0);
    for ((_, u), (_, v)) in d.iter().zip(&n) {
        g11 += u[0] * u[0] + u[1] * u[1] / lambda;
        g12 += u[0] * v[0] + u[1] * v[1] / lambda;
        g22 += v[0] * v[0] + v[1] * v[1] / lambda;
    }
    let half_tr = 0.5 * (g11 + g22);
    let lmin = half_tr - (half_tr * half_tr - (g11 * g22 - g12 * g12)).sqrt();
    // eigenvector (sin α, cos α) ∝ (g12, λmin − g11)
    g12.atan2(lmin - g11).rem_euclid(PI)
}
