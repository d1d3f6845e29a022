//! Small complex matrices, matrix Lie algebras and their exponentials.
//!
//! Matrices are stored inline (no heap) with `n ≤ 4`, which covers `su(2)`,
//! `so(3)`, `so(4)` and `u(n)` for `n ≤ 4`. The Frobenius inner product is
//! `(A, B) ↦ tr(A B*)`; the algebra splitting `ℂ^{n×n} = 𝔤 ⊕ 𝔤⊥` uses its
//! real part, i.e. `ℂ^{n×n}` is viewed as a real inner-product space.

use std::ops::{Add, Mul, Neg, Sub};

use num_complex::Complex;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::scalar::Real;

pub const MAX_DIM: usize = 4;
const STRIDE: usize = MAX_DIM;

/// Square complex matrix of size `n ≤ 4`, stored inline.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CMat<T> {
    n: usize,
    data: [Complex<T>; MAX_DIM * MAX_DIM],
}

impl<T: Real> CMat<T> {
    pub fn zeros(n: usize) -> Self {
        assert!(n >= 1 && n <= MAX_DIM, "matrix size {n} unsupported");
        Self {
            n,
            data: [Complex::new(T::zero(), T::zero()); MAX_DIM * MAX_DIM],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n);
        for i in 0..n {
            m.data[i * STRIDE + i] = Complex::new(T::one(), T::zero());
        }
        m
    }

    /// Builds from row-major entries.
    pub fn from_rows(n: usize, entries: &[Complex<T>]) -> Self {
        assert_eq!(entries.len(), n * n);
        let mut m = Self::zeros(n);
        for i in 0..n {
            for j in 0..n {
                m.data[i * STRIDE + j] = entries[i * n + j];
            }
        }
        m
    }

    pub fn from_real_rows(n: usize, entries: &[T]) -> Self {
        let c: Vec<Complex<T>> = entries.iter().map(|&x| Complex::new(x, T::zero())).collect();
        Self::from_rows(n, &c)
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> Complex<T> {
        self.data[i * STRIDE + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: Complex<T>) {
        self.data[i * STRIDE + j] = v;
    }

    /// Row-major entries.
    pub fn entries(&self) -> Vec<Complex<T>> {
        let mut out = Vec::with_capacity(self.n * self.n);
        for i in 0..self.n {
            for j in 0..self.n {
                out.push(self.get(i, j));
            }
        }
        out
    }

    pub fn scale(&self, s: T) -> Self {
        let mut m = *self;
        for i in 0..self.n {
            for j in 0..self.n {
                m.data[i * STRIDE + j] = m.data[i * STRIDE + j] * s;
            }
        }
        m
    }

    pub fn scale_c(&self, s: Complex<T>) -> Self {
        let mut m = *self;
        for i in 0..self.n {
            for j in 0..self.n {
                m.data[i * STRIDE + j] = m.data[i * STRIDE + j] * s;
            }
        }
        m
    }

    /// `self + s·other`.
    #[inline]
    pub fn axpy(&self, s: T, other: &Self) -> Self {
        let mut m = *self;
        for i in 0..self.n {
            for j in 0..self.n {
                let k = i * STRIDE + j;
                m.data[k] = m.data[k] + other.data[k] * s;
            }
        }
        m
    }

    /// Conjugate transpose.
    pub fn adjoint(&self) -> Self {
        let mut m = Self::zeros(self.n);
        for i in 0..self.n {
            for j in 0..self.n {
                m.data[j * STRIDE + i] = self.data[i * STRIDE + j].conj();
            }
        }
        m
    }

    pub fn trace(&self) -> Complex<T> {
        (0..self.n).fold(Complex::new(T::zero(), T::zero()), |acc, i| {
            acc + self.get(i, i)
        })
    }

    /// Hermitian Frobenius product `tr(A B*) = Σ a_ij conj(b_ij)`.
    pub fn frob_inner(&self, other: &Self) -> Complex<T> {
        let mut acc = Complex::new(T::zero(), T::zero());
        for i in 0..self.n {
            for j in 0..self.n {
                let k = i * STRIDE + j;
                acc = acc + self.data[k] * other.data[k].conj();
            }
        }
        acc
    }

    /// Real part of the Frobenius product.
    #[inline]
    pub fn frob_dot(&self, other: &Self) -> T {
        let mut acc = T::zero();
        for i in 0..self.n {
            for j in 0..self.n {
                let k = i * STRIDE + j;
                acc = acc + self.data[k].re * other.data[k].re + self.data[k].im * other.data[k].im;
            }
        }
        acc
    }

    pub fn frob_norm_sq(&self) -> T {
        self.frob_dot(self)
    }

    pub fn frob_norm(&self) -> T {
        self.frob_norm_sq().sqrt()
    }

    /// Maximum absolute row sum.
    pub fn norm_inf(&self) -> T {
        (0..self.n)
            .map(|i| (0..self.n).map(|j| self.get(i, j).norm()).sum::<T>())
            .fold(T::zero(), T::max)
    }

    pub fn is_finite(&self) -> bool {
        self.entries().iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }

    /// `‖A A* - I‖_F`: distance of the matrix from the unitary group.
    pub fn unitarity_defect(&self) -> T {
        (*self * self.adjoint() - Self::identity(self.n)).frob_norm()
    }

    /// Determinant (Laplace expansion; `n ≤ 4`).
    pub fn det(&self) -> Complex<T> {
        fn minor_det<T: Real>(m: &CMat<T>, rows: &[usize], cols: &[usize]) -> Complex<T> {
            if rows.len() == 1 {
                return m.get(rows[0], cols[0]);
            }
            let mut acc = Complex::new(T::zero(), T::zero());
            for (c_idx, &c) in cols.iter().enumerate() {
                let sub_cols: Vec<usize> = cols.iter().copied().filter(|&x| x != c).collect();
                let term = m.get(rows[0], c) * minor_det(m, &rows[1..], &sub_cols);
                acc = if c_idx % 2 == 0 { acc + term } else { acc - term };
            }
            acc
        }
        let idx: Vec<usize> = (0..self.n).collect();
        minor_det(self, &idx, &idx)
    }

    /// Commutator `[A, B] = AB - BA`.
    pub fn commutator(&self, other: &Self) -> Self {
        *self * *other - *other * *self
    }

    /// Serializes as row-major `[re, im]` pairs.
    pub fn to_pairs(&self) -> Vec<[f64; 2]> {
        self.entries()
            .iter()
            .map(|z| [z.re.as_f64(), z.im.as_f64()])
            .collect()
    }

    pub fn from_pairs(n: usize, pairs: &[[f64; 2]]) -> Result<Self> {
        if pairs.len() != n * n {
            return invalid(format!("expected {} entries, got {}", n * n, pairs.len()));
        }
        let entries: Vec<Complex<T>> = pairs
            .iter()
            .map(|p| Complex::new(T::lit(p[0]), T::lit(p[1])))
            .collect();
        Ok(Self::from_rows(n, &entries))
    }
}

impl<T: Real> Add for CMat<T> {
    type Output = Self;
    #[inline]
    fn add(self, rhs: Self) -> Self {
        let mut m = self;
        for i in 0..self.n {
            for j in 0..self.n {
                let k = i * STRIDE + j;
                m.data[k] = m.data[k] + rhs.data[k];
            }
        }
        m
    }
}

impl<T: Real> Sub for CMat<T> {
    type Output = Self;
    #[inline]
    fn sub(self, rhs: Self) -> Self {
        let mut m = self;
        for i in 0..self.n {
            for j in 0..self.n {
                let k = i * STRIDE + j;
                m.data[k] = m.data[k] - rhs.data[k];
            }
        }
        m
    }
}

impl<T: Real> Neg for CMat<T> {
    type Output = Self;
    fn neg(self) -> Self {
        self.scale(-T::one())
    }
}

impl<T: Real> Mul for CMat<T> {
    type Output = Self;
    #[inline]
    fn mul(self, rhs: Self) -> Self {
        debug_assert_eq!(self.n, rhs.n);
        let n = self.n;
        let mut m = Self::zeros(n);
        for i in 0..n {
            for k in 0..n {
                let a = self.data[i * STRIDE + k];
                for j in 0..n {
                    m.data[i * STRIDE + j] = m.data[i * STRIDE + j] + a * rhs.data[k * STRIDE + j];
                }
            }
        }
        m
    }
}

/// Matrix exponential by scaling and squaring of the Taylor series.
pub fn expm_series<T: Real>(a: &CMat<T>) -> CMat<T> {
    let n = a.n();
    let norm = a.norm_inf();
    let mut squarings = 0u32;
    let half = T::lit(0.5);
    let mut scaled_norm = norm;
    while scaled_norm > half {
        scaled_norm = scaled_norm * half;
        squarings += 1;
    }
    let a_scaled = a.scale(T::lit(0.5f64.powi(squarings as i32)));
    // ‖A‖ ≤ 1/2: 20 terms put the truncation far below f64 epsilon
    let mut term = CMat::identity(n);
    let mut sum = CMat::identity(n);
    for k in 1..=20 {
        term = (term * a_scaled).scale(T::one() / T::from_count(k));
        sum = sum + term;
    }
    for _ in 0..squarings {
        sum = sum * sum;
    }
    sum
}

/// Closed form for a traceless skew-hermitian 2×2 matrix:
/// `A² = -θ² I` with `θ² = ‖A‖²_F / 2`, so `exp A = cos θ·I + (sin θ/θ)·A`.
pub fn expm_su2<T: Real>(a: &CMat<T>) -> CMat<T> {
    debug_assert_eq!(a.n(), 2);
    let theta = (a.frob_norm_sq() * T::lit(0.5)).sqrt();
    let sinc = if theta < T::lit(1e-4) {
        let t2 = theta * theta;
        T::one() - t2 / T::lit(6.0) + t2 * t2 / T::lit(120.0)
    } else {
        theta.sin() / theta
    };
    CMat::identity(2).scale(theta.cos()).axpy(sinc, a)
}

/// Rodrigues formula for a real skew-symmetric 3×3 matrix.
pub fn expm_so3<T: Real>(a: &CMat<T>) -> CMat<T> {
    debug_assert_eq!(a.n(), 3);
    let theta = (a.frob_norm_sq() * T::lit(0.5)).sqrt();
    let (s1, s2) = if theta < T::lit(1e-4) {
        let t2 = theta * theta;
        (
            T::one() - t2 / T::lit(6.0) + t2 * t2 / T::lit(120.0),
            T::lit(0.5) - t2 / T::lit(24.0) + t2 * t2 / T::lit(720.0),
        )
    } else {
        (theta.sin() / theta, (T::one() - theta.cos()) / (theta * theta))
    };
    let a2 = *a * *a;
    CMat::identity(3).axpy(s1, a).axpy(s2, &a2)
}

/// A compact matrix Lie algebra with a Frobenius-orthonormal real basis.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "n", rename_all = "lowercase")]
pub enum Algebra {
    /// `su(2)` with basis `iσ_j/√2`.
    Su2,
    /// Real skew-symmetric matrices.
    So(usize),
    /// All skew-hermitian matrices.
    U(usize),
}

impl Algebra {
    pub fn matrix_size(&self) -> usize {
        match *self {
            Algebra::Su2 => 2,
            Algebra::So(n) | Algebra::U(n) => n,
        }
    }

    pub fn dim(&self) -> usize {
        match *self {
            Algebra::Su2 => 3,
            Algebra::So(n) => n * (n - 1) / 2,
            Algebra::U(n) => n * n,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.matrix_size();
        if n == 0 || n > MAX_DIM {
            return invalid(format!("matrix size {n} not in 1..={MAX_DIM}"));
        }
        if matches!(self, Algebra::So(1)) {
            return invalid("so(1) is trivial");
        }
        Ok(())
    }

    /// True when every element is a real matrix.
    pub fn is_real(&self) -> bool {
        matches!(self, Algebra::So(_))
    }

    /// Frobenius-orthonormal basis.
    pub fn basis<T: Real>(&self) -> Vec<CMat<T>> {
        let n = self.matrix_size();
        let z = T::zero();
        let o = T::one();
        let c = |re: T, im: T| Complex::new(re, im);
        match *self {
            Algebra::Su2 => {
                let s = T::one() / T::lit(2.0).sqrt();
                // iσ1, iσ2, iσ3 scaled to unit norm
                vec![
                    CMat::from_rows(2, &[c(z, z), c(z, s), c(z, s), c(z, z)]),
                    CMat::from_rows(2, &[c(z, z), c(s, z), c(-s, z), c(z, z)]),
                    CMat::from_rows(2, &[c(z, s), c(z, z), c(z, z), c(z, -s)]),
                ]
            }
            Algebra::So(_) => {
                let s = o / T::lit(2.0).sqrt();
                let mut out = Vec::new();
                for i in 0..n {
                    for j in (i + 1)..n {
                        let mut m = CMat::zeros(n);
                        m.set(i, j, c(-s, z));
                        m.set(j, i, c(s, z));
                        out.push(m);
                    }
                }
                out
            }
            Algebra::U(_) => {
                let s = o / T::lit(2.0).sqrt();
                let mut out = Vec::new();
                for i in 0..n {
                    let mut m = CMat::zeros(n);
                    m.set(i, i, c(z, o));
                    out.push(m);
                }
                for i in 0..n {
                    for j in (i + 1)..n {
                        let mut m = CMat::zeros(n);
                        m.set(i, j, c(-s, z));
                        m.set(j, i, c(s, z));
                        out.push(m);
                        let mut m = CMat::zeros(n);
                        m.set(i, j, c(z, s));
                        m.set(j, i, c(z, s));
                        out.push(m);
                    }
                }
                out
            }
        }
    }

    /// `Σ c_j B_j`.
    pub fn compose<T: Real>(&self, basis: &[CMat<T>], coeffs: &[T]) -> CMat<T> {
        debug_assert_eq!(coeffs.len(), basis.len());
        let mut m = CMat::zeros(self.matrix_size());
        for (b, &c) in basis.iter().zip(coeffs) {
            m = m.axpy(c, b);
        }
        m
    }

    /// Coordinates of the 𝔤-projection of `m`.
    pub fn coefficients<T: Real>(&self, basis: &[CMat<T>], m: &CMat<T>) -> Vec<T> {
        basis.iter().map(|b| m.frob_dot(b)).collect()
    }

    /// Group exponential of an algebra element, closed form where available.
    pub fn exp<T: Real>(&self, a: &CMat<T>) -> CMat<T> {
        match *self {
            Algebra::Su2 => expm_su2(a),
            Algebra::So(3) => expm_so3(a),
            _ => expm_series(a),
        }
    }
}

/// Which summand of `ℂ^{n×n} = 𝔤 ⊕ 𝔤⊥` to project on.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Part {
    Algebra,
    Complement,
}

/// Frobenius-orthogonal projection of `m` onto `𝔤` or `𝔤⊥`.
pub fn project_algebra<T: Real>(algebra: Algebra, m: &CMat<T>, part: Part) -> CMat<T> {
    let basis = algebra.basis::<T>();
    let coeffs = algebra.coefficients(&basis, m);
    let proj = algebra.compose(&basis, &coeffs);
    match part {
        Part::Algebra => proj,
        Part::Complement => *m - proj,
    }
}

/// Frobenius-orthonormal real basis of all of `ℂ^{n×n}` (dimension `2n²`):
/// the algebra basis first, followed by an orthonormal basis of `𝔤⊥`.
pub fn full_matrix_basis<T: Real>(algebra: Algebra) -> Vec<CMat<T>> {
    let n = algebra.matrix_size();
    let mut basis = algebra.basis::<T>();
    let k = basis.len();
    for i in 0..n {
        for j in 0..n {
            for imag in [false, true] {
                let mut m = CMat::zeros(n);
                let v = if imag {
                    Complex::new(T::zero(), T::one())
                } else {
                    Complex::new(T::one(), T::zero())
                };
                m.set(i, j, v);
                // Gram-Schmidt against what we have so far
                for b in &basis {
                    let c = m.frob_dot(b);
                    m = m.axpy(-c, b);
                }
                let nm = m.frob_norm();
                if nm > T::lit(1e-8) {
                    basis.push(m.scale(T::one() / nm));
                }
            }
        }
    }
    debug_assert_eq!(basis.len(), 2 * n * n);
    debug_assert!(basis.len() > k);
    basis
}

/// Matrix of `X ↦ g⁻¹ X g` in a real orthonormal basis: entry `(i, j)` is
/// `⟨g⁻¹ B_j g, B_i⟩`. `g` must be unitary.
pub fn adjoint_action_matrix<T: Real>(g: &CMat<T>, basis: &[CMat<T>], out: &mut [T]) {
    let k = basis.len();
    debug_assert_eq!(out.len(), k * k);
    let ginv = g.adjoint();
    for j in 0..k {
        let conj = ginv * basis[j] * *g;
        for i in 0..k {
            out[i * k + j] = conj.frob_dot(&basis[i]);
        }
    }
}
