//! Pointwise matrix algebra for symmetric 2-tensors and metrics.
//!
//! A [`SymMat`] stores the upper triangle of an `n x n` symmetric matrix.
//! Products such as `h g^-1 k` are generally not symmetric, so they are
//! returned as a full [`Mat`]; callers symmetrize only where the governing
//! equation guarantees a symmetric result, via [`Mat::symmetrize_checked`].
//!
//! An [`SpdMat`] is a symmetric matrix certified positive definite by
//! [`spd_guard`], carrying its inverse, determinant and `sqrt(det)`.

use std::ops::{Add, AddAssign, Mul, Neg, Sub, SubAssign};

use smallvec::{smallvec, SmallVec};

use crate::error::{Degeneracy, Error, Result};

pub const DEFAULT_DIM: usize = 3;

/// Smallest eigenvalue accepted by [`spd_guard`] unless told otherwise.
pub const DEFAULT_SPD_FLOOR: f64 = 1e-12;

/// Relative antisymmetric residual tolerated when symmetrizing a product.
pub const SYMMETRY_TOLERANCE: f64 = 1e-10;

type Upper = SmallVec<[f64; 10]>;
type Dense = SmallVec<[f64; 16]>;

#[inline]
fn upper_index(n: usize, i: usize, j: usize) -> usize {
    let (i, j) = if i <= j { (i, j) } else { (j, i) };
    i * n - i * (i + 1) / 2 + j
}

/// Number of independent components of an `n x n` symmetric matrix.
pub const fn sym_len(n: usize) -> usize {
    n * (n + 1) / 2
}

/// Inverse of [`sym_len`], if `len` is a triangular number.
pub fn dim_from_sym_len(len: usize) -> Option<usize> {
    (1..=len).take_while(|n| sym_len(*n) <= len).find(|n| sym_len(*n) == len)
}

#[derive(Clone, Debug, PartialEq)]
pub struct SymMat {
    dim: usize,
    upper: Upper,
}

impl SymMat {
    pub fn zeros(dim: usize) -> Self {
        assert!(dim > 0, "matrix dimension must be positive");
        Self {
            dim,
            upper: smallvec![0.0; sym_len(dim)],
        }
    }

    pub fn identity(dim: usize) -> Self {
        Self::scaled_identity(dim, 1.0)
    }

    pub fn scaled_identity(dim: usize, c: f64) -> Self {
        let mut m = Self::zeros(dim);
        for i in 0..dim {
            m.set(i, i, c);
        }
        m
    }

    pub fn diag(d: &[f64]) -> Self {
        let mut m = Self::zeros(d.len());
        for (i, &v) in d.iter().enumerate() {
            m.set(i, i, v);
        }
        m
    }

    /// Builds a matrix from `f(i, j)` evaluated on the upper triangle.
    pub fn from_fn(dim: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut m = Self::zeros(dim);
        for i in 0..dim {
            for j in i..dim {
                m.set(i, j, f(i, j));
            }
        }
        m
    }

    /// Row-major upper-triangle components: `(0,0), (0,1), .., (0,n-1), (1,1), ..`.
    pub fn from_upper(dim: usize, upper: &[f64]) -> Result<Self> {
        if dim == 0 {
            return Err(Error::contract("matrix dimension must be positive"));
        }
        Error::check_dim(sym_len(dim), upper.len())?;
        Ok(Self {
            dim,
            upper: upper.iter().copied().collect(),
        })
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.upper[upper_index(self.dim, i, j)]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        let k = upper_index(self.dim, i, j);
        self.upper[k] = v;
    }

    pub fn to_mat(&self) -> Mat {
        let n = self.dim;
        let mut data: Dense = smallvec![0.0; n * n];
        for i in 0..n {
            for j in i..n {
                let v = self.get(i, j);
                data[i * n + j] = v;
                data[j * n + i] = v;
            }
        }
        Mat { dim: n, data }
    }

    /// Plain (Euclidean) trace.
    pub fn trace(&self) -> f64 {
        (0..self.dim).map(|i| self.get(i, i)).sum()
    }

    pub fn scale(&self, c: f64) -> Self {
        Self {
            dim: self.dim,
            upper: self.upper.iter().map(|v| v * c).collect(),
        }
    }

    /// `self += c * other`.
    pub fn axpy(&mut self, c: f64, other: &SymMat) {
        debug_assert_eq!(self.dim, other.dim);
        for (a, b) in self.upper.iter_mut().zip(&other.upper) {
            *a += c * b;
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.upper.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Frobenius norm of the full matrix.
    pub fn norm(&self) -> f64 {
        let mut s = 0.0;
        for i in 0..self.dim {
            for j in i..self.dim {
                let v = self.get(i, j);
                s += if i == j { v * v } else { 2.0 * v * v };
            }
        }
        s.sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.upper.iter().all(|v| v.is_finite())
    }

    pub fn is_zero(&self) -> bool {
        self.upper.iter().all(|v| *v == 0.0)
    }
}

impl Add<&SymMat> for &SymMat {
    type Output = SymMat;
    fn add(self, rhs: &SymMat) -> SymMat {
        let mut out = self.clone();
        out += rhs;
        out
    }
}

impl Sub<&SymMat> for &SymMat {
    type Output = SymMat;
    fn sub(self, rhs: &SymMat) -> SymMat {
        let mut out = self.clone();
        out -= rhs;
        out
    }
}

impl AddAssign<&SymMat> for SymMat {
    fn add_assign(&mut self, rhs: &SymMat) {
        self.axpy(1.0, rhs);
    }
}

impl SubAssign<&SymMat> for SymMat {
    fn sub_assign(&mut self, rhs: &SymMat) {
        self.axpy(-1.0, rhs);
    }
}

impl Mul<f64> for &SymMat {
    type Output = SymMat;
    fn mul(self, c: f64) -> SymMat {
        self.scale(c)
    }
}

impl Neg for &SymMat {
    type Output = SymMat;
    fn neg(self) -> SymMat {
        self.scale(-1.0)
    }
}

/// Dense square matrix, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct Mat {
    dim: usize,
    data: Dense,
}

impl Mat {
    pub fn zeros(dim: usize) -> Self {
        Self {
            dim,
            data: smallvec![0.0; dim * dim],
        }
    }

    pub fn identity(dim: usize) -> Self {
        let mut m = Self::zeros(dim);
        for i in 0..dim {
            m.data[i * dim + i] = 1.0;
        }
        m
    }

    pub fn from_rows(dim: usize, rows: &[f64]) -> Result<Self> {
        Error::check_dim(dim * dim, rows.len())?;
        Ok(Self {
            dim,
            data: rows.iter().copied().collect(),
        })
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.dim + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.dim + j] = v;
    }

    pub fn trace(&self) -> f64 {
        (0..self.dim).map(|i| self.get(i, i)).sum()
    }

    pub fn transpose(&self) -> Mat {
        let n = self.dim;
        let mut out = Mat::zeros(n);
        for i in 0..n {
            for j in 0..n {
                out.data[j * n + i] = self.data[i * n + j];
            }
        }
        out
    }

    pub fn scale(&self, c: f64) -> Mat {
        Mat {
            dim: self.dim,
            data: self.data.iter().map(|v| v * c).collect(),
        }
    }

    pub fn axpy(&mut self, c: f64, other: &Mat) {
        debug_assert_eq!(self.dim, other.dim);
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += c * b;
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// `tr(self * other)` without forming the product.
    #[inline]
    pub fn trace_product(&self, other: &Mat) -> f64 {
        let n = self.dim;
        let mut s = 0.0;
        for i in 0..n {
            for k in 0..n {
                s += self.data[i * n + k] * other.data[k * n + i];
            }
        }
        s
    }

    /// Largest entry of `(self - self^T) / 2` in absolute value.
    pub fn antisymmetric_residual(&self) -> f64 {
        let n = self.dim;
        let mut r: f64 = 0.0;
        for i in 0..n {
            for j in (i + 1)..n {
                r = r.max(0.5 * (self.get(i, j) - self.get(j, i)).abs());
            }
        }
        r
    }

    /// `(X + X^T) / 2` with no residual check.
    pub fn symmetrize(&self) -> SymMat {
        SymMat::from_fn(self.dim, |i, j| 0.5 * (self.get(i, j) + self.get(j, i)))
    }

    /// Symmetrizes a matrix that an identity guarantees to be symmetric,
    /// failing if the antisymmetric residual exceeds [`SYMMETRY_TOLERANCE`]
    /// relative to the matrix scale.
    pub fn symmetrize_checked(&self, what: &str) -> Result<SymMat> {
        let residual = self.antisymmetric_residual();
        let scale = self.max_abs().max(1.0);
        if residual > SYMMETRY_TOLERANCE * scale {
            return Err(Error::contract(format!(
                "{what}: antisymmetric residual {residual:e} exceeds tolerance"
            )));
        }
        Ok(self.symmetrize())
    }
}

impl Mul<&Mat> for &Mat {
    type Output = Mat;
    #[inline]
    fn mul(self, rhs: &Mat) -> Mat {
        debug_assert_eq!(self.dim, rhs.dim);
        let n = self.dim;
        let mut out = Mat::zeros(n);
        for i in 0..n {
            for k in 0..n {
                let a = self.data[i * n + k];
                if a == 0.0 {
                    continue;
                }
                for j in 0..n {
                    out.data[i * n + j] += a * rhs.data[k * n + j];
                }
            }
        }
        out
    }
}

impl Add<&Mat> for &Mat {
    type Output = Mat;
    fn add(self, rhs: &Mat) -> Mat {
        let mut out = self.clone();
        out.axpy(1.0, rhs);
        out
    }
}

impl Sub<&Mat> for &Mat {
    type Output = Mat;
    fn sub(self, rhs: &Mat) -> Mat {
        let mut out = self.clone();
        out.axpy(-1.0, rhs);
        out
    }
}

/// A symmetric positive-definite matrix with cached inverse and determinant.
#[derive(Clone, Debug, PartialEq)]
pub struct SpdMat {
    base: SymMat,
    base_full: Mat,
    inverse: Mat,
    det: f64,
    sqrt_det: f64,
}

impl SpdMat {
    #[inline]
    pub fn dim(&self) -> usize {
        self.base.dim
    }

    #[inline]
    pub fn base(&self) -> &SymMat {
        &self.base
    }

    /// The metric as a dense matrix.
    #[inline]
    pub fn full(&self) -> &Mat {
        &self.base_full
    }

    #[inline]
    pub fn inverse(&self) -> &Mat {
        &self.inverse
    }

    #[inline]
    pub fn det(&self) -> f64 {
        self.det
    }

    #[inline]
    pub fn sqrt_det(&self) -> f64 {
        self.sqrt_det
    }

    /// `tr_g(h) = tr(g^-1 h)`.
    #[inline]
    pub fn tr(&self, h: &Mat) -> f64 {
        self.inverse.trace_product(h)
    }

    /// `g^-1 h`.
    #[inline]
    pub fn raise(&self, h: &Mat) -> Mat {
        &self.inverse * h
    }
}

/// Smallest eigenvalue of a symmetric matrix.
pub fn min_eigenvalue(m: &SymMat) -> f64 {
    let n = m.dim;
    match n {
        1 => m.get(0, 0),
        2 => {
            let (a, b, c) = (m.get(0, 0), m.get(0, 1), m.get(1, 1));
            let mean = 0.5 * (a + c);
            let half_gap = (0.25 * (a - c) * (a - c) + b * b).sqrt();
            mean - half_gap
        }
        _ => {
            let full = nalgebra::DMatrix::from_fn(n, n, |i, j| m.get(i, j));
            nalgebra::SymmetricEigen::new(full)
                .eigenvalues
                .iter()
                .copied()
                .fold(f64::INFINITY, f64::min)
        }
    }
}

fn degenerate(m: &SymMat) -> Error {
    Error::DegenerateMetric(Degeneracy {
        min_eigenvalue: min_eigenvalue(m),
        time: None,
        point: None,
    })
}

/// Determinant and adjugate-based inverse for `n <= 3`.
fn small_inverse(m: &SymMat) -> (f64, Mat) {
    let n = m.dim;
    let mut inv = Mat::zeros(n);
    match n {
        1 => {
            let d = m.get(0, 0);
            inv.set(0, 0, 1.0 / d);
            (d, inv)
        }
        2 => {
            let (a, b, c) = (m.get(0, 0), m.get(0, 1), m.get(1, 1));
            let d = a * c - b * b;
            inv.set(0, 0, c / d);
            inv.set(0, 1, -b / d);
            inv.set(1, 0, -b / d);
            inv.set(1, 1, a / d);
            (d, inv)
        }
        3 => {
            let (a, b, c) = (m.get(0, 0), m.get(0, 1), m.get(0, 2));
            let (e, f, i) = (m.get(1, 1), m.get(1, 2), m.get(2, 2));
            let c00 = e * i - f * f;
            let c01 = c * f - b * i;
            let c02 = b * f - c * e;
            let c11 = a * i - c * c;
            let c12 = b * c - a * f;
            let c22 = a * e - b * b;
            let d = a * c00 + b * c01 + c * c02;
            let r = 1.0 / d;
            let cof = [[c00, c01, c02], [c01, c11, c12], [c02, c12, c22]];
            for (row, vals) in cof.iter().enumerate() {
                for (col, v) in vals.iter().enumerate() {
                    inv.set(row, col, v * r);
                }
            }
            (d, inv)
        }
        _ => unreachable!("small_inverse called with n > 3"),
    }
}

/// Cholesky factor `L` (row-major, lower) or `None` if not positive definite.
fn cholesky(m: &SymMat) -> Option<Mat> {
    let n = m.dim;
    let mut l = Mat::zeros(n);
    for j in 0..n {
        let mut d = m.get(j, j);
        for k in 0..j {
            d -= l.get(j, k) * l.get(j, k);
        }
        if !(d > 0.0) {
            return None;
        }
        let ljj = d.sqrt();
        l.set(j, j, ljj);
        for i in (j + 1)..n {
            let mut s = m.get(i, j);
            for k in 0..j {
                s -= l.get(i, k) * l.get(j, k);
            }
            l.set(i, j, s / ljj);
        }
    }
    Some(l)
}

fn cholesky_inverse(l: &Mat) -> Mat {
    let n = l.dim;
    // Solve L Y = I column by column, then L^T X = Y.
    let mut inv = Mat::zeros(n);
    let mut y = vec![0.0; n];
    for col in 0..n {
        for i in 0..n {
            let mut s = if i == col { 1.0 } else { 0.0 };
            for k in 0..i {
                s -= l.get(i, k) * y[k];
            }
            y[i] = s / l.get(i, i);
        }
        for i in (0..n).rev() {
            let mut s = y[i];
            for k in (i + 1)..n {
                s -= l.get(k, i) * inv.get(k, col);
            }
            inv.set(i, col, s / l.get(i, i));
        }
    }
    // Exact symmetry of the stored inverse.
    let sym = inv.symmetrize();
    sym.to_mat()
}

/// Certifies `m` as positive definite with every eigenvalue above `floor`.
pub fn spd_guard(m: &SymMat, floor: f64) -> Result<SpdMat> {
    if !m.is_finite() {
        return Err(Error::NonFinite("spd_guard input"));
    }
    let n = m.dim;
    let (det, inverse) = if n <= 3 {
        let leading_ok = match n {
            1 => m.get(0, 0) > 0.0,
            2 => m.get(0, 0) > 0.0,
            _ => m.get(0, 0) > 0.0 && m.get(0, 0) * m.get(1, 1) - m.get(0, 1).powi(2) > 0.0,
        };
        let (det, inverse) = small_inverse(m);
        if !leading_ok || !(det > 0.0) {
            return Err(degenerate(m));
        }
        (det, inverse)
    } else {
        let l = cholesky(m).ok_or_else(|| degenerate(m))?;
        let det = (0..n).map(|i| l.get(i, i) * l.get(i, i)).product::<f64>();
        (det, cholesky_inverse(&l))
    };

    // lambda_min = 1 / lambda_max(g^-1) >= 1 / |g^-1|_F
    let inv_norm = inverse.data.iter().map(|v| v * v).sum::<f64>().sqrt();
    if !inv_norm.is_finite() || 1.0 / inv_norm <= floor {
        let lambda = min_eigenvalue(m);
        if !(lambda > floor) {
            return Err(Error::DegenerateMetric(Degeneracy {
                min_eigenvalue: lambda,
                time: None,
                point: None,
            }));
        }
    }
    Ok(SpdMat {
        base_full: m.to_mat(),
        base: m.clone(),
        inverse,
        det,
        sqrt_det: det.sqrt(),
    })
}

/// `h x k = h g^-1 k`, generally non-symmetric.
pub fn times(g: &SpdMat, h: &SymMat, k: &SymMat) -> Result<Mat> {
    Error::check_dim(g.dim(), h.dim)?;
    Error::check_dim(g.dim(), k.dim)?;
    Ok(&(&h.to_mat() * g.inverse()) * &k.to_mat())
}

/// `tr(g^-1 h_1 g^-1 h_2 ... g^-1 h_m)`.
pub fn trace_chain(g: &SpdMat, hs: &[SymMat]) -> Result<f64> {
    let (last, init) = hs
        .split_last()
        .ok_or_else(|| Error::contract("trace_chain needs at least one tensor"))?;
    for h in hs {
        Error::check_dim(g.dim(), h.dim)?;
    }
    let mut acc = Mat::identity(g.dim());
    for h in init {
        acc = &(&acc * g.inverse()) * &h.to_mat();
    }
    let acc = &acc * g.inverse();
    Ok(acc.trace_product(&last.to_mat()))
}

/// `tr_g(h) = tr(g^-1 h)`.
pub fn tr_g(g: &SpdMat, h: &SymMat) -> Result<f64> {
    Error::check_dim(g.dim(), h.dim)?;
    Ok(g.tr(&h.to_mat()))
}

/// `h - (1/n) tr_g(h) g`.
pub fn traceless_part(g: &SpdMat, h: &SymMat) -> Result<SymMat> {
    let f = tr_g(g, h)? / g.dim() as f64;
    let mut out = h.clone();
    out.axpy(-f, g.base());
    Ok(out)
}

/// Derivative of `g -> tr_g(h)` along the constant direction `a`,
/// i.e. `-tr(g^-1 a g^-1 h)`.
pub fn dir_deriv_trace(g: &SpdMat, h: &SymMat, a: &SymMat) -> Result<f64> {
    Ok(-trace_chain(g, &[a.clone(), h.clone()])?)
}
