//! Small complex 2×2 matrices and 2-vectors.

use num_complex::Complex64;
use std::ops::{Add, Mul, Sub};

pub type C64 = Complex64;
pub type Vec2 = [C64; 2];

pub const ZERO: C64 = C64::new(0.0, 0.0);
pub const ONE: C64 = C64::new(1.0, 0.0);
pub const I: C64 = C64::new(0.0, 1.0);

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Mat2(pub [[C64; 2]; 2]);

impl Mat2 {
    pub const IDENTITY: Mat2 = Mat2([[ONE, ZERO], [ZERO, ONE]]);
    pub const ZERO: Mat2 = Mat2([[ZERO, ZERO], [ZERO, ZERO]]);

    pub fn new(a: C64, b: C64, c: C64, d: C64) -> Self {
        Mat2([[a, b], [c, d]])
    }

    pub fn real(a: f64, b: f64, c: f64, d: f64) -> Self {
        Self::new(a.into(), b.into(), c.into(), d.into())
    }

    pub fn diag(a: C64, d: C64) -> Self {
        Self::new(a, ZERO, ZERO, d)
    }

    pub fn det(&self) -> C64 {
        let m = &self.0;
        m[0][0] * m[1][1] - m[0][1] * m[1][0]
    }

    pub fn trace(&self) -> C64 {
        self.0[0][0] + self.0[1][1]
    }

    pub fn scale(&self, s: C64) -> Self {
        let m = &self.0;
        Self::new(m[0][0] * s, m[0][1] * s, m[1][0] * s, m[1][1] * s)
    }

    pub fn inverse(&self) -> Option<Self> {
        let d = self.det();
        if d == ZERO || !d.is_finite() {
            return None;
        }
        let m = &self.0;
        Some(Self::new(m[1][1] / d, -m[0][1] / d, -m[1][0] / d, m[0][0] / d))
    }

    pub fn apply(&self, v: &Vec2) -> Vec2 {
        let m = &self.0;
        [m[0][0] * v[0] + m[0][1] * v[1], m[1][0] * v[0] + m[1][1] * v[1]]
    }

    pub fn frobenius(&self) -> f64 {
        self.0.iter().flatten().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    /// Largest singular value.
    pub fn norm2(&self) -> f64 {
        self.singular_values_with_det(self.det().norm()).0
    }

    /// Singular values `(σ₁, σ₂)` given an independently known `|det|`.
    ///
    /// σ₂ is recovered as `|det|/σ₁`, which keeps it accurate when the matrix
    /// is close to rank one and the determinant is tracked separately.
    pub fn singular_values_with_det(&self, abs_det: f64) -> (f64, f64) {
        let f2 = self.frobenius().powi(2);
        let disc = (f2 * f2 - 4.0 * abs_det * abs_det).max(0.0).sqrt();
        let s1 = ((f2 + disc) * 0.5).sqrt();
        let s2 = if s1 > 0.0 { abs_det / s1 } else { 0.0 };
        (s1, s2)
    }

    pub fn singular_values(&self) -> (f64, f64) {
        self.singular_values_with_det(self.det().norm())
    }

    /// `exp(Q)` for traceless `Q`.
    pub fn exp_traceless(&self) -> Self {
        let m = &self.0;
        let d = 0.5 * (m[0][0] - m[1][1]);
        let s2 = d * d + m[0][1] * m[1][0];
        let s = s2.sqrt();
        let (ch, sh_over_s) = if s.norm() < 1e-4 {
            (ONE + s2 / 2.0 + s2 * s2 / 24.0, ONE + s2 / 6.0 + s2 * s2 / 120.0)
        } else {
            (s.cosh(), s.sinh() / s)
        };
        let q = Self::new(d, m[0][1], m[1][0], -d);
        Self::IDENTITY.scale(ch) + q.scale(sh_over_s)
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        (*self - *other).0.iter().flatten().map(|z| z.norm()).fold(0.0, f64::max)
    }
}

impl Add for Mat2 {
    type Output = Mat2;
    fn add(self, o: Mat2) -> Mat2 {
        let (a, b) = (&self.0, &o.0);
        Mat2::new(a[0][0] + b[0][0], a[0][1] + b[0][1], a[1][0] + b[1][0], a[1][1] + b[1][1])
    }
}

impl Sub for Mat2 {
    type Output = Mat2;
    fn sub(self, o: Mat2) -> Mat2 {
        let (a, b) = (&self.0, &o.0);
        Mat2::new(a[0][0] - b[0][0], a[0][1] - b[0][1], a[1][0] - b[1][0], a[1][1] - b[1][1])
    }
}

impl Mul for Mat2 {
    type Output = Mat2;
    fn mul(self, o: Mat2) -> Mat2 {
        let (a, b) = (&self.0, &o.0);
        Mat2::new(
            a[0][0] * b[0][0] + a[0][1] * b[1][0],
            a[0][0] * b[0][1] + a[0][1] * b[1][1],
            a[1][0] * b[0][0] + a[1][1] * b[1][0],
            a[1][0] * b[0][1] + a[1][1] * b[1][1],
        )
    }
}

pub fn vnorm(v: &Vec2) -> f64 {
    (v[0].norm_sqr() + v[1].norm_sqr()).sqrt()
}

pub fn vsub(a: &Vec2, b: &Vec2) -> Vec2 {
    [a[0] - b[0], a[1] - b[1]]
}

pub fn vaxpy(s: C64, a: &Vec2, b: &Vec2) -> Vec2 {
    [s * a[0] + b[0], s * a[1] + b[1]]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exp_of_nilpotent_and_diagonal() {
        let n = Mat2::real(0.0, 2.0, 0.0, 0.0);
        assert!(n.exp_traceless().max_abs_diff(&Mat2::real(1.0, 2.0, 0.0, 1.0)) < 1e-15);
        let d = Mat2::real(0.3, 0.0, 0.0, -0.3);
        let e = d.exp_traceless();
        assert!((e.0[0][0].re - 0.3f64.exp()).abs() < 1e-15);
        assert!((e.0[1][1].re - (-0.3f64).exp()).abs() < 1e-15);
    }

    #[test]
    fn exp_has_unit_determinant() {
        let q = Mat2::new(C64::new(0.1, 0.2), C64::new(-0.3, 0.5), C64::new(0.7, 0.1), C64::new(-0.1, -0.2));
        assert!((q.exp_traceless().det() - ONE).norm() < 1e-14);
    }

    #[test]
    fn singular_values_of_rank_one_plus_tiny() {
        let m = Mat2::real(1.0, 2.0, 2.0, 4.0 + 1e-9);
        let (s1, s2) = m.singular_values();
        assert!((s1 - 5.0).abs() < 1e-8);
        assert!((s2 - 1e-9 / 5.0).abs() < 1e-15);
    }
}
