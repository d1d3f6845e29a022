//! Dense and banded Cholesky factorizations and preconditioned conjugate
//! gradients.

use crate::error::{invalid, Error, Result};
use crate::scalar::Real;

/// Dense row-major square matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct DenseMatrix<T> {
    n: usize,
    data: Vec<T>,
}

impl<T: Real> DenseMatrix<T> {
    pub fn zeros(n: usize) -> Self {
        Self {
            n,
            data: vec![T::zero(); n * n],
        }
    }

    pub fn from_fn(n: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut m = Self::zeros(n);
        for i in 0..n {
            for j in 0..n {
                m.data[i * n + j] = f(i, j);
            }
        }
        m
    }

    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> T {
        self.data[i * self.n + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: T) {
        self.data[i * self.n + j] = v;
    }

    #[inline]
    pub fn add(&mut self, i: usize, j: usize, v: T) {
        self.data[i * self.n + j] = self.data[i * self.n + j] + v;
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.n..(i + 1) * self.n]
    }

    pub fn matvec(&self, x: &[T], y: &mut [T]) {
        for (i, yi) in y.iter_mut().enumerate() {
            *yi = dot(self.row(i), x);
        }
    }

    /// Copies the upper triangle onto the lower one.
    pub fn symmetrize_from_upper(&mut self) {
        for i in 0..self.n {
            for j in 0..i {
                self.data[i * self.n + j] = self.data[j * self.n + i];
            }
        }
    }

    pub fn max_asymmetry(&self) -> T {
        let mut worst = T::zero();
        for i in 0..self.n {
            for j in 0..i {
                worst = worst.max((self.get(i, j) - self.get(j, i)).abs());
            }
        }
        worst
    }
}

/// Dot product with four independent accumulators.
#[inline]
fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    let n = a.len().min(b.len());
    let (a, b) = (&a[..n], &b[..n]);
    let mut acc = [T::zero(); 4];
    let mut ca = a.chunks_exact(4);
    let mut cb = b.chunks_exact(4);
    for (x, y) in (&mut ca).zip(&mut cb) {
        for k in 0..4 {
            acc[k] = acc[k] + x[k] * y[k];
        }
    }
    let mut s = (acc[0] + acc[1]) + (acc[2] + acc[3]);
    for (x, y) in ca.remainder().iter().zip(cb.remainder()) {
        s = s + *x * *y;
    }
    s
}

/// Lower Cholesky factor `L` with `A + jitter·I = L Lᵀ`.
#[derive(Clone, Debug)]
pub struct Cholesky<T> {
    l: DenseMatrix<T>,
    pub jitter: T,
}

impl<T: Real> Cholesky<T> {
    /// Factorizes `a + jitter·I`, multiplying the jitter by 10 on failure
    /// until it exceeds `max_jitter`.
    pub fn factor_with_jitter(a: &DenseMatrix<T>, jitter: T, max_jitter: T) -> Result<Self> {
        let mut jitter = jitter;
        loop {
            match Self::try_factor(a, jitter) {
                Ok(l) => return Ok(Self { l, jitter }),
                Err(pivot) => {
                    let next = if jitter > T::zero() {
                        jitter * T::lit(10.0)
                    } else {
                        T::lit(1e-12)
                    };
                    if next > max_jitter * T::lit(1.0 + 1e-9) {
                        return Err(Error::Cholesky {
                            pivot,
                            jitter: jitter.as_f64(),
                        });
                    }
                    log::debug!("cholesky failed at pivot {pivot}; jitter -> {next}");
                    jitter = next;
                }
            }
        }
    }

    pub fn factor(a: &DenseMatrix<T>) -> Result<Self> {
        Self::factor_with_jitter(a, T::zero(), T::zero())
    }

    fn try_factor(a: &DenseMatrix<T>, jitter: T) -> std::result::Result<DenseMatrix<T>, usize> {
        let n = a.n;
        let mut l = DenseMatrix::zeros(n);
        for j in 0..n {
            let lj = &l.data[j * n..j * n + j];
            let d = a.get(j, j) + jitter - lj.iter().map(|v| *v * *v).sum::<T>();
            if !(d > T::zero()) {
                return Err(j);
            }
            let d = d.sqrt();
            l.data[j * n + j] = d;
            for i in (j + 1)..n {
                let (head, tail) = l.data.split_at_mut(i * n);
                let lj = &head[j * n..j * n + j];
                let li = &tail[..j];
                let s: T = li.iter().zip(lj).map(|(x, y)| *x * *y).sum();
                tail[j] = (a.get(i, j) - s) / d;
            }
        }
        Ok(l)
    }

    pub fn n(&self) -> usize {
        self.l.n
    }

    pub fn factor_matrix(&self) -> &DenseMatrix<T> {
        &self.l
    }

    pub fn min_pivot(&self) -> T {
        (0..self.l.n)
            .map(|i| self.l.get(i, i))
            .fold(T::infinity(), T::min)
    }

    /// `y = L z`.
    pub fn mul_lower(&self, z: &[T]) -> Vec<T> {
        let n = self.l.n;
        (0..n).map(|i| dot(&self.l.data[i * n..i * n + i + 1], z)).collect()
    }

    /// `L z_k` for several vectors in one pass over `L`.
    pub fn mul_lower_many(&self, zs: &[Vec<T>]) -> Vec<Vec<T>> {
        let n = self.l.n;
        let mut out = vec![vec![T::zero(); n]; zs.len()];
        for i in 0..n {
            let row = &self.l.data[i * n..i * n + i + 1];
            for (o, z) in out.iter_mut().zip(zs) {
                o[i] = dot(row, z);
            }
        }
        out
    }

    /// Solves `L y = b`.
    pub fn solve_lower(&self, b: &[T]) -> Vec<T> {
        let n = self.l.n;
        let mut y = b.to_vec();
        for i in 0..n {
            let s: T = self.l.data[i * n..i * n + i]
                .iter()
                .zip(&y[..i])
                .map(|(a, b)| *a * *b)
                .sum();
            y[i] = (y[i] - s) / self.l.get(i, i);
        }
        y
    }

    /// Solves `(A + jitter·I) x = b`.
    pub fn solve(&self, b: &[T]) -> Vec<T> {
        let n = self.l.n;
        let mut x = self.solve_lower(b);
        for i in (0..n).rev() {
            let mut s = x[i];
            for k in (i + 1)..n {
                s = s - self.l.get(k, i) * x[k];
            }
            x[i] = s / self.l.get(i, i);
        }
        x
    }
}

/// Symmetric positive-definite band matrix stored by rows of the lower band.
#[derive(Clone, Debug)]
pub struct BandedSpd<T> {
    n: usize,
    bw: usize,
    // row i holds A[i, i-bw..=i]
    band: Vec<T>,
    factored: bool,
}

impl<T: Real> BandedSpd<T> {
    pub fn zeros(n: usize, bandwidth: usize) -> Self {
        Self {
            n,
            bw: bandwidth,
            band: vec![T::zero(); n * (bandwidth + 1)],
            factored: false,
        }
    }

    #[inline]
    fn idx(&self, i: usize, j: usize) -> usize {
        i * (self.bw + 1) + (self.bw + j - i)
    }

    /// Adds `v` to `A[i, j]` for `j ≤ i` within the band.
    pub fn add_lower(&mut self, i: usize, j: usize, v: T) {
        debug_assert!(j <= i && i - j <= self.bw);
        let k = self.idx(i, j);
        self.band[k] = self.band[k] + v;
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// In-place band Cholesky.
    pub fn factor(&mut self) -> Result<()> {
        let (n, bw) = (self.n, self.bw);
        for i in 0..n {
            let j0 = i.saturating_sub(bw);
            for j in j0..=i {
                let k0 = j0.max(j.saturating_sub(bw));
                let mut s = self.band[self.idx(i, j)];
                for k in k0..j {
                    s = s - self.band[self.idx(i, k)] * self.band[self.idx(j, k)];
                }
                if i == j {
                    if !(s > T::zero()) {
                        return Err(Error::Cholesky { pivot: i, jitter: 0.0 });
                    }
                    let k = self.idx(i, i);
                    self.band[k] = s.sqrt();
                } else {
                    let k = self.idx(i, j);
                    self.band[k] = s / self.band[self.idx(j, j)];
                }
            }
        }
        self.factored = true;
        Ok(())
    }

    pub fn solve(&self, b: &[T]) -> Result<Vec<T>> {
        if !self.factored {
            return invalid("band matrix not factored");
        }
        let (n, bw) = (self.n, self.bw);
        let mut y = b.to_vec();
        for i in 0..n {
            let mut s = y[i];
            for k in i.saturating_sub(bw)..i {
                s = s - self.band[self.idx(i, k)] * y[k];
            }
            y[i] = s / self.band[self.idx(i, i)];
        }
        for i in (0..n).rev() {
            let mut s = y[i];
            for k in (i + 1)..(i + bw + 1).min(n) {
                s = s - self.band[self.idx(k, i)] * y[k];
            }
            y[i] = s / self.band[self.idx(i, i)];
        }
        Ok(y)
    }
}

/// A symmetric linear operator on `T^dim`.
pub trait LinearOperator<T> {
    fn dim(&self) -> usize;
    fn apply(&self, x: &[T], y: &mut [T]);
}

impl<T: Real> LinearOperator<T> for DenseMatrix<T> {
    fn dim(&self) -> usize {
        self.n
    }
    fn apply(&self, x: &[T], y: &mut [T]) {
        self.matvec(x, y)
    }
}

#[derive(Clone, Copy, Debug)]
pub struct PcgOptions {
    /// Relative residual target `‖b − Ax‖ / ‖b‖`.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for PcgOptions {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            max_iter: 200,
        }
    }
}

#[derive(Clone, Debug)]
pub struct PcgOutcome<T> {
    pub solution: Vec<T>,
    pub iterations: usize,
    /// Relative residual after each iteration, starting with the initial one.
    pub residual_history: Vec<f64>,
}

fn dotv<T: Real>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).map(|(x, y)| *x * *y).sum()
}

/// Preconditioned conjugate gradients for symmetric positive-definite `a`.
/// `precond(r, z)` applies an SPD approximation of `a⁻¹`.
pub fn pcg<T: Real>(
    a: &dyn LinearOperator<T>,
    precond: &dyn Fn(&[T], &mut [T]),
    b: &[T],
    opts: &PcgOptions,
) -> Result<PcgOutcome<T>> {
    let n = a.dim();
    if b.len() != n {
        return invalid(format!("right-hand side has length {}, expected {n}", b.len()));
    }
    let bnorm = dotv(b, b).sqrt().as_f64();
    let mut x = vec![T::zero(); n];
    if bnorm == 0.0 {
        return Ok(PcgOutcome {
            solution: x,
            iterations: 0,
            residual_history: vec![0.0],
        });
    }
    let mut r = b.to_vec();
    let mut z = vec![T::zero(); n];
    precond(&r, &mut z);
    let mut p = z.clone();
    let mut rz = dotv(&r, &z);
    let mut ap = vec![T::zero(); n];
    let mut history = vec![1.0];
    for it in 1..=opts.max_iter {
        a.apply(&p, &mut ap);
        let pap = dotv(&p, &ap);
        if !(pap > T::zero()) {
            return Err(Error::NonConvergence {
                iterations: it,
                residual: *history.last().unwrap(),
                history,
            });
        }
        let alpha = rz / pap;
        for i in 0..n {
            x[i] = x[i] + alpha * p[i];
            r[i] = r[i] - alpha * ap[i];
        }
        let rel = dotv(&r, &r).sqrt().as_f64() / bnorm;
        history.push(rel);
        if rel < opts.tol {
            return Ok(PcgOutcome {
                solution: x,
                iterations: it,
                residual_history: history,
            });
        }
        precond(&r, &mut z);
        let rz_new = dotv(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    Err(Error::NonConvergence {
        iterations: opts.max_iter,
        residual: *history.last().unwrap(),
        history,
    })
}
