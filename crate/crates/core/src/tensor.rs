//! Small dense vectors, matrices and third-order arrays for N ∈ {1, 2}.
//!
//! Everything here is `Copy` and stack allocated. The dimension travels with
//! the value so 1D and 2D data can share code paths.

use std::ops::{Add, AddAssign, Mul, Neg, Sub, SubAssign};

use serde::{Deserialize, Serialize};

/// Largest supported spatial dimension.
pub const MAX_DIM: usize = 2;

/// Number of independent entries of a symmetric `dim × dim` matrix.
pub fn sym_len(dim: usize) -> usize {
    dim * (dim + 1) / 2
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Vector {
    dim: usize,
    c: [f64; MAX_DIM],
}

impl Vector {
    pub fn zeros(dim: usize) -> Self {
        assert!((1..=MAX_DIM).contains(&dim), "dimension {dim} unsupported");
        Self { dim, c: [0.0; MAX_DIM] }
    }

    pub fn from_slice(s: &[f64]) -> Self {
        let mut v = Self::zeros(s.len());
        v.c[..s.len()].copy_from_slice(s);
        v
    }

    pub fn scalar(x: f64) -> Self {
        Self::from_slice(&[x])
    }

    pub fn new2(x: f64, y: f64) -> Self {
        Self::from_slice(&[x, y])
    }

    pub fn unit(dim: usize, i: usize) -> Self {
        let mut v = Self::zeros(dim);
        v.c[i] = 1.0;
        v
    }

    pub fn filled(dim: usize, x: f64) -> Self {
        let mut v = Self::zeros(dim);
        for i in 0..dim {
            v.c[i] = x;
        }
        v
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.c[..self.dim]
    }

    pub fn get(&self, i: usize) -> f64 {
        debug_assert!(i < self.dim);
        self.c[i]
    }

    pub fn set(&mut self, i: usize, x: f64) {
        debug_assert!(i < self.dim);
        self.c[i] = x;
    }

    pub fn dot(&self, o: &Vector) -> f64 {
        debug_assert_eq!(self.dim, o.dim);
        (0..self.dim).map(|i| self.c[i] * o.c[i]).sum()
    }

    pub fn norm(&self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn scale(&self, s: f64) -> Vector {
        let mut v = *self;
        for i in 0..self.dim {
            v.c[i] *= s;
        }
        v
    }

    pub fn is_finite(&self) -> bool {
        self.as_slice().iter().all(|x| x.is_finite())
    }

    /// Maximum absolute entry.
    pub fn max_abs(&self) -> f64 {
        self.as_slice().iter().fold(0.0, |m, x| m.max(x.abs()))
    }
}

impl Add for Vector {
    type Output = Vector;
    fn add(mut self, o: Vector) -> Vector {
        debug_assert_eq!(self.dim, o.dim);
        for i in 0..self.dim {
            self.c[i] += o.c[i];
        }
        self
    }
}

impl Sub for Vector {
    type Output = Vector;
    fn sub(mut self, o: Vector) -> Vector {
        debug_assert_eq!(self.dim, o.dim);
        for i in 0..self.dim {
            self.c[i] -= o.c[i];
        }
        self
    }
}

impl AddAssign for Vector {
    fn add_assign(&mut self, o: Vector) {
        *self = *self + o;
    }
}

impl SubAssign for Vector {
    fn sub_assign(&mut self, o: Vector) {
        *self = *self - o;
    }
}

impl Neg for Vector {
    type Output = Vector;
    fn neg(self) -> Vector {
        self.scale(-1.0)
    }
}

impl Mul<Vector> for f64 {
    type Output = Vector;
    fn mul(self, v: Vector) -> Vector {
        v.scale(self)
    }
}

/// Square matrix of size `dim × dim`, stored row-major.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Mat {
    dim: usize,
    m: [[f64; MAX_DIM]; MAX_DIM],
}

impl Mat {
    pub fn zeros(dim: usize) -> Self {
        assert!((1..=MAX_DIM).contains(&dim), "dimension {dim} unsupported");
        Self { dim, m: [[0.0; MAX_DIM]; MAX_DIM] }
    }

    pub fn identity(dim: usize) -> Self {
        let mut a = Self::zeros(dim);
        for i in 0..dim {
            a.m[i][i] = 1.0;
        }
        a
    }

    pub fn scalar(x: f64) -> Self {
        let mut a = Self::zeros(1);
        a.m[0][0] = x;
        a
    }

    pub fn new2(a11: f64, a12: f64, a21: f64, a22: f64) -> Self {
        Self { dim: 2, m: [[a11, a12], [a21, a22]] }
    }

    pub fn from_fn(dim: usize, f: impl Fn(usize, usize) -> f64) -> Self {
        let mut a = Self::zeros(dim);
        for i in 0..dim {
            for j in 0..dim {
                a.m[i][j] = f(i, j);
            }
        }
        a
    }

    /// Row-major entries, `dim²` of them.
    pub fn from_flat(dim: usize, flat: &[f64]) -> Self {
        assert_eq!(flat.len(), dim * dim);
        Self::from_fn(dim, |i, j| flat[i * dim + j])
    }

    pub fn flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.dim * self.dim);
        for i in 0..self.dim {
            for j in 0..self.dim {
                out.push(self.m[i][j]);
            }
        }
        out
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        (0..self.dim).map(|i| self.m[i][..self.dim].to_vec()).collect()
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Option<Self> {
        let dim = rows.len();
        if !(1..=MAX_DIM).contains(&dim) || rows.iter().any(|r| r.len() != dim) {
            return None;
        }
        Some(Self::from_fn(dim, |i, j| rows[i][j]))
    }

    /// Symmetric matrix with the given diagonal and off-diagonal entry (2D) or scalar (1D).
    pub fn sym2(a11: f64, a22: f64, a12: f64) -> Self {
        Self::new2(a11, a12, a12, a22)
    }

    pub fn rotation(theta: f64) -> Self {
        let (s, c) = theta.sin_cos();
        Self::new2(c, -s, s, c)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        debug_assert!(i < self.dim && j < self.dim);
        self.m[i][j]
    }

    pub fn set(&mut self, i: usize, j: usize, x: f64) {
        debug_assert!(i < self.dim && j < self.dim);
        self.m[i][j] = x;
    }

    pub fn transpose(&self) -> Mat {
        Mat::from_fn(self.dim, |i, j| self.m[j][i])
    }

    pub fn sym(&self) -> Mat {
        Mat::from_fn(self.dim, |i, j| 0.5 * (self.m[i][j] + self.m[j][i]))
    }

    pub fn skew(&self) -> Mat {
        Mat::from_fn(self.dim, |i, j| 0.5 * (self.m[i][j] - self.m[j][i]))
    }

    pub fn trace(&self) -> f64 {
        (0..self.dim).map(|i| self.m[i][i]).sum()
    }

    pub fn det(&self) -> f64 {
        match self.dim {
            1 => self.m[0][0],
            _ => self.m[0][0] * self.m[1][1] - self.m[0][1] * self.m[1][0],
        }
    }

    pub fn frob_dot(&self, o: &Mat) -> f64 {
        debug_assert_eq!(self.dim, o.dim);
        let mut s = 0.0;
        for i in 0..self.dim {
            for j in 0..self.dim {
                s += self.m[i][j] * o.m[i][j];
            }
        }
        s
    }

    /// Frobenius norm.
    pub fn norm(&self) -> f64 {
        self.frob_dot(self).sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.flat().iter().fold(0.0, |m, x| m.max(x.abs()))
    }

    pub fn scale(&self, s: f64) -> Mat {
        Mat::from_fn(self.dim, |i, j| s * self.m[i][j])
    }

    pub fn mul_vec(&self, v: &Vector) -> Vector {
        debug_assert_eq!(self.dim, v.dim());
        let mut out = Vector::zeros(self.dim);
        for i in 0..self.dim {
            out.set(i, (0..self.dim).map(|j| self.m[i][j] * v.get(j)).sum());
        }
        out
    }

    pub fn matmul(&self, o: &Mat) -> Mat {
        debug_assert_eq!(self.dim, o.dim);
        Mat::from_fn(self.dim, |i, j| (0..self.dim).map(|k| self.m[i][k] * o.m[k][j]).sum())
    }

    pub fn outer(a: &Vector, b: &Vector) -> Mat {
        debug_assert_eq!(a.dim(), b.dim());
        Mat::from_fn(a.dim(), |i, j| a.get(i) * b.get(j))
    }

    /// Symmetrized tensor product `a ⊙ b = (a⊗b + b⊗a)/2`.
    pub fn sym_outer(a: &Vector, b: &Vector) -> Mat {
        Mat::outer(a, b).sym()
    }

    pub fn is_finite(&self) -> bool {
        self.flat().iter().all(|x| x.is_finite())
    }

    pub fn is_symmetric(&self, tol: f64) -> bool {
        self.skew().max_abs() <= tol
    }

    /// Coordinates of the symmetric part in an orthonormal basis of the
    /// symmetric matrices, so that the Euclidean norm of the result equals the
    /// Frobenius norm of `sym(self)`.
    pub fn sym_coords(&self) -> Vec<f64> {
        match self.dim {
            1 => vec![self.m[0][0]],
            _ => vec![self.m[0][0], self.m[1][1], std::f64::consts::FRAC_1_SQRT_2 * (self.m[0][1] + self.m[1][0])],
        }
    }

    pub fn from_sym_coords(dim: usize, s: &[f64]) -> Mat {
        assert_eq!(s.len(), sym_len(dim));
        match dim {
            1 => Mat::scalar(s[0]),
            _ => {
                let off = std::f64::consts::FRAC_1_SQRT_2 * s[2];
                Mat::sym2(s[0], s[1], off)
            }
        }
    }

    /// Rotation `R ∈ SO(dim)` minimizing `|self − R|`; `None` when the
    /// minimizer is not unique.
    pub fn nearest_rotation(&self) -> Option<Mat> {
        match self.dim {
            1 => Some(Mat::identity(1)),
            _ => {
                let p = self.m[0][0] + self.m[1][1];
                let q = self.m[1][0] - self.m[0][1];
                let r = p.hypot(q);
                if r <= 1e-300 {
                    return None;
                }
                Some(Mat::new2(p / r, -q / r, q / r, p / r))
            }
        }
    }

    /// Squared distance to `SO(dim)`.
    pub fn dist2_rotations(&self) -> f64 {
        match self.dim {
            1 => (self.m[0][0] - 1.0).powi(2),
            _ => {
                let p = self.m[0][0] + self.m[1][1];
                let q = self.m[1][0] - self.m[0][1];
                (self.frob_dot(self) + 2.0 - 2.0 * p.hypot(q)).max(0.0)
            }
        }
    }
}

impl Add for Mat {
    type Output = Mat;
    fn add(self, o: Mat) -> Mat {
        debug_assert_eq!(self.dim, o.dim);
        Mat::from_fn(self.dim, |i, j| self.m[i][j] + o.m[i][j])
    }
}

impl Sub for Mat {
    type Output = Mat;
    fn sub(self, o: Mat) -> Mat {
        debug_assert_eq!(self.dim, o.dim);
        Mat::from_fn(self.dim, |i, j| self.m[i][j] - o.m[i][j])
    }
}

impl AddAssign for Mat {
    fn add_assign(&mut self, o: Mat) {
        *self = *self + o;
    }
}

impl SubAssign for Mat {
    fn sub_assign(&mut self, o: Mat) {
        *self = *self - o;
    }
}

impl Neg for Mat {
    type Output = Mat;
    fn neg(self) -> Mat {
        self.scale(-1.0)
    }
}

impl Mul<Mat> for f64 {
    type Output = Mat;
    fn mul(self, a: Mat) -> Mat {
        a.scale(self)
    }
}

/// Third-order array `H_ijk`, symmetric in `(j, k)`; the per-cell second
/// gradient of a vector field.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Hess {
    dim: usize,
    h: [f64; 8],
}

impl Hess {
    pub fn zeros(dim: usize) -> Self {
        assert!((1..=MAX_DIM).contains(&dim));
        Self { dim, h: [0.0; 8] }
    }

    fn idx(i: usize, j: usize, k: usize) -> usize {
        i * 4 + j * 2 + k
    }

    pub fn scalar(x: f64) -> Self {
        let mut h = Self::zeros(1);
        h.set(0, 0, 0, x);
        h
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn get(&self, i: usize, j: usize, k: usize) -> f64 {
        self.h[Self::idx(i, j, k)]
    }

    pub fn set(&mut self, i: usize, j: usize, k: usize, x: f64) {
        self.h[Self::idx(i, j, k)] = x;
    }

    /// Nested `[i][j][k]` representation used in JSON.
    pub fn to_nested(&self) -> Vec<Vec<Vec<f64>>> {
        let n = self.dim;
        (0..n).map(|i| (0..n).map(|j| (0..n).map(|k| self.get(i, j, k)).collect()).collect()).collect()
    }

    pub fn from_nested(v: &[Vec<Vec<f64>>]) -> Option<Self> {
        let n = v.len();
        if !(1..=MAX_DIM).contains(&n) {
            return None;
        }
        let mut h = Self::zeros(n);
        for i in 0..n {
            if v[i].len() != n {
                return None;
            }
            for j in 0..n {
                if v[i][j].len() != n {
                    return None;
                }
                for k in 0..n {
                    h.set(i, j, k, v[i][j][k]);
                }
            }
        }
        Some(h)
    }

    /// `(H d)_ij = Σ_k H_ijk d_k`: the gradient increment at offset `d`.
    pub fn contract(&self, d: &Vector) -> Mat {
        Mat::from_fn(self.dim, |i, j| (0..self.dim).map(|k| self.get(i, j, k) * d.get(k)).sum())
    }

    /// `½ H_ijk d_j d_k`: the value increment at offset `d`.
    pub fn quad(&self, d: &Vector) -> Vector {
        let g = self.contract(d);
        g.mul_vec(d).scale(0.5)
    }

    pub fn norm_sq(&self) -> f64 {
        let n = self.dim;
        let mut s = 0.0;
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    s += self.get(i, j, k).powi(2);
                }
            }
        }
        s
    }

    /// `(Q H)_ijk = Σ_l Q_il H_ljk`.
    pub fn left_mul(&self, q: &Mat) -> Hess {
        let n = self.dim;
        let mut out = Hess::zeros(n);
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    out.set(i, j, k, (0..n).map(|l| q.get(i, l) * self.get(l, j, k)).sum());
                }
            }
        }
        out
    }

    pub fn scale(&self, s: f64) -> Hess {
        let mut out = *self;
        for x in out.h.iter_mut() {
            *x *= s;
        }
        out
    }

    pub fn is_finite(&self) -> bool {
        self.h.iter().all(|x| x.is_finite())
    }

    pub fn is_symmetric(&self, tol: f64) -> bool {
        let n = self.dim;
        (0..n).all(|i| (0..n).all(|j| (0..n).all(|k| (self.get(i, j, k) - self.get(i, k, j)).abs() <= tol)))
    }
}

impl Add for Hess {
    type Output = Hess;
    fn add(mut self, o: Hess) -> Hess {
        for (a, b) in self.h.iter_mut().zip(o.h.iter()) {
            *a += b;
        }
        self
    }
}

/// Serializable symmetric-matrix literal used in configs and reports.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MatLiteral {
    Scalar(f64),
    Rows(Vec<Vec<f64>>),
}

impl MatLiteral {
    pub fn to_mat(&self) -> Option<Mat> {
        match self {
            MatLiteral::Scalar(x) => Some(Mat::scalar(*x)),
            MatLiteral::Rows(r) => Mat::from_rows(r),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sym_coords_preserve_norm() {
        let a = Mat::new2(1.0, 2.0, -0.5, 3.0);
        let s = a.sym_coords();
        let n: f64 = s.iter().map(|x| x * x).sum::<f64>().sqrt();
        assert!((n - a.sym().norm()).abs() < 1e-14);
        let back = Mat::from_sym_coords(2, &s);
        assert!((back - a.sym()).max_abs() < 1e-14);
    }

    #[test]
    fn nearest_rotation_recovers_rotation() {
        let r = Mat::rotation(0.3);
        let s = Mat::sym2(2.0, 0.5, 0.1);
        let a = r.matmul(&s);
        let got = a.nearest_rotation().unwrap();
        assert!((got - r).max_abs() < 1e-12);
        assert!(r.dist2_rotations() < 1e-14);
    }

    #[test]
    fn dist2_matches_brute_force() {
        let a = Mat::new2(0.7, -1.2, 0.4, 1.9);
        let mut best = f64::INFINITY;
        for k in 0..200_000 {
            let th = k as f64 * std::f64::consts::TAU / 200_000.0;
            best = best.min((a - Mat::rotation(th)).norm().powi(2));
        }
        assert!((a.dist2_rotations() - best).abs() < 1e-8);
    }

    #[test]
    fn hess_contract_and_quad() {
        let h = Hess::scalar(2.0);
        let d = Vector::scalar(0.5);
        assert_eq!(h.contract(&d).get(0, 0), 1.0);
        assert_eq!(h.quad(&d).get(0), 0.25);
    }
}
