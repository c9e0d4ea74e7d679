//! Planar vectors and 2×2 matrices, plus the real eigendecomposition used by
//! the closed-form mode flows.

use std::ops::{Add, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A point or direction in the plane.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(from = "[f64; 2]", into = "[f64; 2]")]
pub struct Vec2 {
    pub x1: f64,
    pub x2: f64,
}

impl Vec2 {
    pub const ZERO: Vec2 = Vec2 { x1: 0.0, x2: 0.0 };

    pub const fn new(x1: f64, x2: f64) -> Self {
        Self { x1, x2 }
    }

    pub fn dot(self, other: Vec2) -> f64 {
        self.x1 * other.x1 + self.x2 * other.x2
    }

    pub fn norm(self) -> f64 {
        self.x1.hypot(self.x2)
    }

    pub fn norm_sq(self) -> f64 {
        self.dot(self)
    }

    pub fn distance(self, other: Vec2) -> f64 {
        (self - other).norm()
    }

    pub fn is_finite(self) -> bool {
        self.x1.is_finite() && self.x2.is_finite()
    }

    pub fn midpoint(self, other: Vec2) -> Vec2 {
        Vec2::new(0.5 * (self.x1 + other.x1), 0.5 * (self.x2 + other.x2))
    }

    /// Counter-clockwise rotation by `angle` radians.
    pub fn rotated(self, angle: f64) -> Vec2 {
        let (s, c) = angle.sin_cos();
        Vec2::new(c * self.x1 - s * self.x2, s * self.x1 + c * self.x2)
    }
}

impl From<[f64; 2]> for Vec2 {
    fn from(v: [f64; 2]) -> Self {
        Vec2::new(v[0], v[1])
    }
}

impl From<Vec2> for [f64; 2] {
    fn from(v: Vec2) -> Self {
        [v.x1, v.x2]
    }
}

impl Add for Vec2 {
    type Output = Vec2;
    fn add(self, rhs: Vec2) -> Vec2 {
        Vec2::new(self.x1 + rhs.x1, self.x2 + rhs.x2)
    }
}

impl Sub for Vec2 {
    type Output = Vec2;
    fn sub(self, rhs: Vec2) -> Vec2 {
        Vec2::new(self.x1 - rhs.x1, self.x2 - rhs.x2)
    }
}

impl Neg for Vec2 {
    type Output = Vec2;
    fn neg(self) -> Vec2 {
        Vec2::new(-self.x1, -self.x2)
    }
}

impl Mul<f64> for Vec2 {
    type Output = Vec2;
    fn mul(self, k: f64) -> Vec2 {
        Vec2::new(self.x1 * k, self.x2 * k)
    }
}

impl Mul<Vec2> for f64 {
    type Output = Vec2;
    fn mul(self, v: Vec2) -> Vec2 {
        v * self
    }
}

/// Row-major 2×2 matrix.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(from = "[[f64; 2]; 2]", into = "[[f64; 2]; 2]")]
pub struct Mat2 {
    pub a11: f64,
    pub a12: f64,
    pub a21: f64,
    pub a22: f64,
}

impl Mat2 {
    pub const IDENTITY: Mat2 = Mat2::new(1.0, 0.0, 0.0, 1.0);
    pub const ZERO: Mat2 = Mat2::new(0.0, 0.0, 0.0, 0.0);

    pub const fn new(a11: f64, a12: f64, a21: f64, a22: f64) -> Self {
        Self { a11, a12, a21, a22 }
    }

    pub const fn diag(d1: f64, d2: f64) -> Self {
        Self::new(d1, 0.0, 0.0, d2)
    }

    /// Matrix whose columns are `c1` and `c2`.
    pub fn from_columns(c1: Vec2, c2: Vec2) -> Self {
        Self::new(c1.x1, c2.x1, c1.x2, c2.x2)
    }

    pub fn col(&self, j: usize) -> Vec2 {
        match j {
            0 => Vec2::new(self.a11, self.a21),
            1 => Vec2::new(self.a12, self.a22),
            _ => panic!("column index {j} out of range"),
        }
    }

    pub fn trace(&self) -> f64 {
        self.a11 + self.a22
    }

    pub fn det(&self) -> f64 {
        self.a11 * self.a22 - self.a12 * self.a21
    }

    /// Frobenius norm.
    pub fn norm(&self) -> f64 {
        (self.a11 * self.a11 + self.a12 * self.a12 + self.a21 * self.a21 + self.a22 * self.a22).sqrt()
    }

    pub fn transpose(&self) -> Mat2 {
        Mat2::new(self.a11, self.a21, self.a12, self.a22)
    }

    pub fn is_finite(&self) -> bool {
        self.a11.is_finite() && self.a12.is_finite() && self.a21.is_finite() && self.a22.is_finite()
    }

    pub fn mul_vec(&self, v: Vec2) -> Vec2 {
        Vec2::new(self.a11 * v.x1 + self.a12 * v.x2, self.a21 * v.x1 + self.a22 * v.x2)
    }

    pub fn mul_mat(&self, m: &Mat2) -> Mat2 {
        Mat2::new(
            self.a11 * m.a11 + self.a12 * m.a21,
            self.a11 * m.a12 + self.a12 * m.a22,
            self.a21 * m.a11 + self.a22 * m.a21,
            self.a21 * m.a12 + self.a22 * m.a22,
        )
    }

    pub fn scale(&self, k: f64) -> Mat2 {
        Mat2::new(self.a11 * k, self.a12 * k, self.a21 * k, self.a22 * k)
    }

    /// Inverse, or `None` when the determinant is exactly zero.
    pub fn inverse(&self) -> Option<Mat2> {
        let det = self.det();
        if det == 0.0 || !det.is_finite() {
            return None;
        }
        let inv = 1.0 / det;
        Some(Mat2::new(
            self.a22 * inv,
            -self.a12 * inv,
            -self.a21 * inv,
            self.a11 * inv,
        ))
    }

    /// Solves `self · x = rhs` by Cramer's rule.
    pub fn solve(&self, rhs: Vec2) -> Option<Vec2> {
        let det = self.det();
        if det == 0.0 || !det.is_finite() {
            return None;
        }
        Some(Vec2::new(
            (rhs.x1 * self.a22 - self.a12 * rhs.x2) / det,
            (self.a11 * rhs.x2 - self.a21 * rhs.x1) / det,
        ))
    }

    /// Rotation by `angle` radians.
    pub fn rotation(angle: f64) -> Mat2 {
        let (s, c) = angle.sin_cos();
        Mat2::new(c, -s, s, c)
    }

    pub fn to_rows(&self) -> [[f64; 2]; 2] {
        [[self.a11, self.a12], [self.a21, self.a22]]
    }
}

impl From<[[f64; 2]; 2]> for Mat2 {
    fn from(m: [[f64; 2]; 2]) -> Self {
        Mat2::new(m[0][0], m[0][1], m[1][0], m[1][1])
    }
}

impl From<Mat2> for [[f64; 2]; 2] {
    fn from(m: Mat2) -> Self {
        m.to_rows()
    }
}

impl Add for Mat2 {
    type Output = Mat2;
    fn add(self, rhs: Mat2) -> Mat2 {
        Mat2::new(
            self.a11 + rhs.a11,
            self.a12 + rhs.a12,
            self.a21 + rhs.a21,
            self.a22 + rhs.a22,
        )
    }
}

impl Sub for Mat2 {
    type Output = Mat2;
    fn sub(self, rhs: Mat2) -> Mat2 {
        Mat2::new(
            self.a11 - rhs.a11,
            self.a12 - rhs.a12,
            self.a21 - rhs.a21,
            self.a22 - rhs.a22,
        )
    }
}

/// Real diagonalisation `A = W · diag(λ1, λ2) · W⁻¹` with `λ1 < λ2`.
///
/// Columns of `w` are unit eigenvectors whose first nonzero component is
/// positive, so the decomposition of a given matrix is reproducible.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EigenDecomp {
    pub lambda1: f64,
    pub lambda2: f64,
    pub w: Mat2,
    pub w_inv: Mat2,
}

impl EigenDecomp {
    pub fn lambdas(&self) -> [f64; 2] {
        [self.lambda1, self.lambda2]
    }

    /// Largest eigenvalue magnitude.
    pub fn spectral_radius(&self) -> f64 {
        self.lambda1.abs().max(self.lambda2.abs())
    }

    pub fn is_hurwitz(&self) -> bool {
        self.lambda2 < 0.0
    }

    /// `W · diag(λ) · W⁻¹`.
    pub fn reconstruct(&self) -> Mat2 {
        self.w
            .mul_mat(&Mat2::diag(self.lambda1, self.lambda2))
            .mul_mat(&self.w_inv)
    }
}

/// Relative threshold on the characteristic discriminant below which the two
/// eigenvalues are treated as repeated.
pub const REPEATED_EIGEN_TOL: f64 = 1e-12;

/// Threshold on `|det W|` (unit columns) below which eigenvectors are parallel.
pub const PARALLEL_EIGENVECTOR_TOL: f64 = 1e-12;

/// Eigendecomposition of a matrix with two distinct real eigenvalues.
///
/// Eigenvalues come from the roots of `λ² − tr·λ + det = 0`; callers decide
/// whether they need them to be negative.
pub fn eigen_real_distinct(a: &Mat2) -> Result<EigenDecomp> {
    if !a.is_finite() {
        return Err(Error::NonFiniteInput("matrix entries must be finite".into()));
    }
    let tr = a.trace();
    let det = a.det();
    let disc = tr * tr - 4.0 * det;
    if disc.abs() < REPEATED_EIGEN_TOL * (tr * tr).max(1.0) {
        return Err(Error::RepeatedEigenvalue { discriminant: disc });
    }
    if disc < 0.0 {
        return Err(Error::ComplexEigenvalues { discriminant: disc });
    }
    let sq = disc.sqrt();
    // Avoid cancellation: compute the larger-magnitude root first.
    let sgn = if tr >= 0.0 { 1.0 } else { -1.0 };
    // q ≠ 0 here since tr = 0 and disc = 0 was rejected above
    let q = 0.5 * (tr + sgn * sq);
    let (r1, r2) = (q, det / q);
    let (lambda1, lambda2) = if r1 < r2 { (r1, r2) } else { (r2, r1) };

    let v1 = eigenvector(a, lambda1);
    let v2 = eigenvector(a, lambda2);
    let w = Mat2::from_columns(v1, v2);
    let det_w = w.det();
    if det_w.abs() < PARALLEL_EIGENVECTOR_TOL {
        return Err(Error::SingularEigenvectorMatrix { det: det_w });
    }
    let w_inv = w.inverse().ok_or(Error::SingularEigenvectorMatrix { det: det_w })?;
    Ok(EigenDecomp {
        lambda1,
        lambda2,
        w,
        w_inv,
    })
}

/// Unit null vector of `A − λI`, taken from whichever row of the shifted
/// matrix is better conditioned.
fn eigenvector(a: &Mat2, lambda: f64) -> Vec2 {
    // Rows of A − λI are (a11−λ, a12) and (a21, a22−λ); a null vector is
    // orthogonal to each nonzero row.
    let from_row1 = Vec2::new(a.a12, lambda - a.a11);
    let from_row2 = Vec2::new(lambda - a.a22, a.a21);
    let v = if from_row1.norm_sq() >= from_row2.norm_sq() {
        from_row1
    } else {
        from_row2
    };
    let n = v.norm();
    if n == 0.0 {
        // A = λI; any direction works, callers reject this as repeated.
        return Vec2::new(1.0, 0.0);
    }
    let v = v * (1.0 / n);
    if v.x1 < 0.0 || (v.x1 == 0.0 && v.x2 < 0.0) {
        -v
    } else {
        v
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn eigen_of_design_mode_one() {
        // roots of λ² + 5λ + 3 = 0
        let a = Mat2::new(-3.0, 1.0, 3.0, -2.0);
        let e = eigen_real_distinct(&a).unwrap();
        let r = 13f64.sqrt();
        assert!(close(e.lambda1, (-5.0 - r) / 2.0, 1e-14));
        assert!(close(e.lambda2, (-5.0 + r) / 2.0, 1e-14));
        assert!(close(e.lambda1, -4.3028, 1e-4));
        assert!(close(e.lambda2, -0.6972, 1e-4));
    }

    #[test]
    fn diagonal_matrix_gives_identity_eigenvectors() {
        let e = eigen_real_distinct(&Mat2::diag(-2.0, -1.0)).unwrap();
        assert_eq!(e.lambdas(), [-2.0, -1.0]);
        assert_eq!(e.w, Mat2::IDENTITY);
        assert_eq!(e.w_inv, Mat2::IDENTITY);
    }

    #[test]
    fn rotation_has_complex_eigenvalues() {
        let err = eigen_real_distinct(&Mat2::new(0.0, -1.0, 1.0, 0.0)).unwrap_err();
        assert!(matches!(err, Error::ComplexEigenvalues { .. }));
    }

    #[test]
    fn jordan_block_is_repeated() {
        let err = eigen_real_distinct(&Mat2::new(-1.0, 1.0, 0.0, -1.0)).unwrap_err();
        assert!(matches!(err, Error::RepeatedEigenvalue { .. }));
    }

    #[test]
    fn eigenvectors_are_unit_with_positive_lead() {
        let a = Mat2::new(-4.0, 1.0, -3.0, 0.25);
        let e = eigen_real_distinct(&a).unwrap();
        for j in 0..2 {
            let v = e.w.col(j);
            assert!(close(v.norm(), 1.0, 1e-15));
            assert!(v.x1 > 0.0 || (v.x1 == 0.0 && v.x2 > 0.0));
        }
        let id = e.w.mul_mat(&e.w_inv);
        assert!((id - Mat2::IDENTITY).norm() < 1e-12);
    }

    #[test]
    fn av_equals_wd() {
        let a = Mat2::new(-4.0, 1.0, -3.0, 0.25);
        let e = eigen_real_distinct(&a).unwrap();
        let lhs = a.mul_mat(&e.w);
        let rhs = e.w.mul_mat(&Mat2::diag(e.lambda1, e.lambda2));
        assert!((lhs - rhs).norm() <= 1e-12 * a.norm());
    }

    #[test]
    fn zero_trace_distinct_roots() {
        let e = eigen_real_distinct(&Mat2::new(0.0, 1.0, 1.0, 0.0)).unwrap();
        assert!(close(e.lambda1, -1.0, 1e-15) && close(e.lambda2, 1.0, 1e-15));
    }

    #[test]
    fn solve_and_inverse_agree() {
        let a = Mat2::new(-3.0, 1.0, 3.0, -2.0);
        let rhs = Vec2::new(-3.0, 3.0);
        let x = a.solve(rhs).unwrap();
        let y = a.inverse().unwrap().mul_vec(rhs);
        assert!(x.distance(y) < 1e-15);
        assert!(x.distance(Vec2::new(1.0, 0.0)) < 1e-15);
    }
}
