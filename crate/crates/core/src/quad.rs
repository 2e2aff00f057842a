//! Adaptive Gauss-Kronrod (7/15) quadrature for complex integrands.

use num_complex::Complex64;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
#[error("quadrature did not converge on [{a}, {b}]: estimate error {err:e} after {intervals} intervals")]
pub struct QuadError {
    pub a: f64,
    pub b: f64,
    pub err: f64,
    pub intervals: usize,
}

const XGK: [f64; 8] = [
    0.991_455_371_120_812_639_206_854_697_526_329,
    0.949_107_912_342_758_524_526_189_684_047_851,
    0.864_864_423_359_769_072_789_712_788_640_926,
    0.741_531_185_599_394_439_863_864_773_280_788,
    0.586_087_235_467_691_130_294_144_845_693_013,
    0.405_845_151_377_397_166_906_606_412_076_961,
    0.207_784_955_007_898_467_600_689_403_773_245,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_224_963_732_008_058_970,
    0.063_092_092_629_978_553_290_700_663_189_204,
    0.104_790_010_322_250_183_839_876_322_541_518,
    0.140_653_259_715_525_918_745_189_590_510_238,
    0.169_004_726_639_267_902_826_583_426_598_550,
    0.190_350_578_064_785_409_913_256_402_421_014,
    0.204_432_940_075_298_892_414_161_999_234_649,
    0.209_482_141_084_727_828_012_999_174_891_714,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_693_270_611_432_679_082,
    0.279_705_391_489_276_667_901_467_771_423_780,
    0.381_830_050_505_118_944_950_369_775_488_975,
    0.417_959_183_673_469_387_755_102_040_816_327,
];

fn kronrod<F: FnMut(f64) -> Complex64>(f: &mut F, a: f64, b: f64) -> (Complex64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut rk = fc * WGK[7];
    let mut rg = fc * WG[3];
    for j in 0..7 {
        let dx = h * XGK[j];
        let s = f(c - dx) + f(c + dx);
        rk += s * WGK[j];
        if j % 2 == 1 {
            rg += s * WG[j / 2];
        }
    }
    let rk = rk * h;
    let rg = rg * h;
    (rk, (rk - rg).norm())
}

/// Integrate `f` over `[a, b]` until the global error estimate drops below
/// `max(abs_tol, rel_tol * |I|)`.
pub fn integrate<F: FnMut(f64) -> Complex64>(
    mut f: F,
    a: f64,
    b: f64,
    abs_tol: f64,
    rel_tol: f64,
) -> Result<Complex64, QuadError> {
    integrate_with_limit(&mut f, a, b, abs_tol, rel_tol, 2000)
}

pub fn integrate_with_limit<F: FnMut(f64) -> Complex64>(
    f: &mut F,
    a: f64,
    b: f64,
    abs_tol: f64,
    rel_tol: f64,
    max_intervals: usize,
) -> Result<Complex64, QuadError> {
    let (r, e) = kronrod(f, a, b);
    let mut pieces = vec![(a, b, r, e)];
    loop {
        let total: Complex64 = pieces.iter().map(|p| p.2).sum();
        let err: f64 = pieces.iter().map(|p| p.3).sum();
        if err <= abs_tol.max(rel_tol * total.norm()) {
            return Ok(total);
        }
        if pieces.len() >= max_intervals {
            return Err(QuadError { a, b, err, intervals: pieces.len() });
        }
        let (idx, _) = pieces
            .iter()
            .enumerate()
            .max_by(|x, y| x.1 .3.total_cmp(&y.1 .3))
            .expect("non-empty");
        let (lo, hi, _, _) = pieces.swap_remove(idx);
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            return Err(QuadError { a, b, err, intervals: pieces.len() });
        }
        let (r1, e1) = kronrod(f, lo, mid);
        let (r2, e2) = kronrod(f, mid, hi);
        pieces.push((lo, mid, r1, e1));
        pieces.push((mid, hi, r2, e2));
    }
}

/// Real-valued convenience wrapper.
pub fn integrate_real<F: FnMut(f64) -> f64>(
    mut f: F,
    a: f64,
    b: f64,
    abs_tol: f64,
    rel_tol: f64,
) -> Result<f64, QuadError> {
    integrate(|x| Complex64::new(f(x), 0.0), a, b, abs_tol, rel_tol).map(|z| z.re)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn polynomial_exact() {
        let r = integrate_real(|x| x.powi(5) - 3.0 * x * x, -1.0, 2.0, 1e-14, 0.0).unwrap();
        assert!((r - (64.0 - 1.0) / 6.0 + 9.0).abs() < 1e-12);
    }

    #[test]
    fn oscillatory_complex() {
        let w = 37.0;
        let r = integrate(|x| Complex64::new(0.0, w * x).exp(), 0.0, 1.0, 1e-14, 0.0).unwrap();
        let exact = (Complex64::new(0.0, w).exp() - 1.0) / Complex64::new(0.0, w);
        assert!((r - exact).norm() < 1e-13);
    }

    #[test]
    fn sqrt_singularity() {
        let r = integrate_real(f64::sqrt, 0.0, 1.0, 1e-12, 0.0).unwrap();
        assert!((r - 2.0 / 3.0).abs() < 1e-11);
    }
}
