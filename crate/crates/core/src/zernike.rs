//! Real Zernike polynomials on the unit disk, the degenerate elliptic
//! operator `𝓛` they diagonalize, and disk quadrature.
//!
//! `Ẑ_{n,k}` has degree `n` and azimuthal order `m = 2k − n`; the angular
//! factor is `cos(mω)` for `m ≥ 0` and `sin(|m|ω)` for `m < 0`. Functions
//! are normalized in `L²(disk)`. Linear index: `n(n+1)/2 + k`.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::field::ScalarField;
use crate::scalar::Real;

/// Highest degree supported by the exact-integer polynomial path.
pub const MAX_POLY_DEGREE: usize = 30;

pub fn n_terms(max_degree: usize) -> usize {
    (max_degree + 1) * (max_degree + 2) / 2
}

#[inline]
pub fn index(n: usize, k: usize) -> usize {
    n * (n + 1) / 2 + k
}

/// Inverse of [`index`].
pub fn degree_order(j: usize) -> (usize, usize) {
    let mut n = 0;
    while index(n + 1, 0) <= j {
        n += 1;
    }
    (n, j - index(n, 0))
}

#[inline]
pub fn azimuthal_order(n: usize, k: usize) -> i64 {
    2 * k as i64 - n as i64
}

/// `c` with `Ẑ_{n,k} = c · R_n^{|m|}(ρ) · cos/sin(|m|ω)`.
pub fn norm_factor(n: usize, m: i64) -> f64 {
    let base = ((n + 1) as f64 / PI).sqrt();
    if m == 0 {
        base
    } else {
        base * 2f64.sqrt()
    }
}

/// `(4π)⁻²(n+1)²`, the eigenvalue of `𝓛` on degree-`n` polynomials.
pub fn l_eigenvalue(n: usize) -> f64 {
    ((n + 1) as f64).powi(2) / (16.0 * PI * PI)
}

fn check_nk(n: usize, k: usize) -> Result<()> {
    if k > n {
        return invalid(format!("Zernike index k = {k} exceeds degree n = {n}"));
    }
    Ok(())
}

/// Evaluates every `Ẑ_{n,k}` with `n ≤ max_degree` at a point.
#[derive(Clone, Copy, Debug)]
pub struct ZernikeBasis {
    pub max_degree: usize,
}

impl ZernikeBasis {
    pub fn new(max_degree: usize) -> Self {
        Self { max_degree }
    }

    pub fn len(&self) -> usize {
        n_terms(self.max_degree)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Fills `out[index(n,k)] = Ẑ_{n,k}(x)`. Uses `R_n^m = ρ^m Q(ρ²)` with
    /// `ρ^m cos(mω) = Re (x+iy)^m` and the three-term Kintner recurrence.
    pub fn eval_all<T: Real>(&self, x: [T; 2], out: &mut [T]) {
        let big_m = self.max_degree;
        debug_assert!(out.len() >= n_terms(big_m));
        let t = x[0] * x[0] + x[1] * x[1];
        let (mut re, mut im) = (T::one(), T::zero());
        let inv_sqrt_pi = T::one() / T::PI().sqrt();
        let sqrt2 = T::lit(2.0).sqrt();
        for m in 0..=big_m {
            let mf = T::from_count(m);
            let mut q_prev2 = T::zero();
            let mut q_prev = T::one();
            let mut n = m;
            while n <= big_m {
                let q = if n == m {
                    T::one()
                } else if n == m + 2 {
                    (mf + T::lit(2.0)) * t - (mf + T::one())
                } else {
                    let nf = T::from_count(n);
                    let two = T::lit(2.0);
                    let k1 = (nf + mf) * (nf - mf) * (nf - two) / two;
                    let k2 = two * nf * (nf - T::one()) * (nf - two);
                    let k3 = -mf * mf * (nf - T::one()) - nf * (nf - T::one()) * (nf - two);
                    let k4 = -nf * (nf + mf - two) * (nf - mf - two) / two;
                    ((k2 * t + k3) * q_prev + k4 * q_prev2) / k1
                };
                if n > m {
                    q_prev2 = q_prev;
                }
                q_prev = q;
                let c = (T::from_count(n + 1)).sqrt() * inv_sqrt_pi;
                if m == 0 {
                    out[index(n, n / 2)] = c * q;
                } else {
                    let c = c * sqrt2 * q;
                    out[index(n, (n + m) / 2)] = c * re;
                    out[index(n, (n - m) / 2)] = c * im;
                }
                n += 2;
            }
            // (x + iy)^{m+1}
            let nre = re * x[0] - im * x[1];
            let nim = re * x[1] + im * x[0];
            re = nre;
            im = nim;
        }
    }
}

/// `Ẑ_{n,k}(x)`.
pub fn zernike_eval<T: Real>(n: usize, k: usize, x: [T; 2]) -> Result<T> {
    check_nk(n, k)?;
    if x[0] * x[0] + x[1] * x[1] > T::one() + T::tiny() {
        return Err(crate::error::Error::OutsideDisk([x[0].as_f64(), x[1].as_f64()]));
    }
    let basis = ZernikeBasis::new(n);
    let mut out = vec![T::zero(); basis.len()];
    basis.eval_all(x, &mut out);
    Ok(out[index(n, k)])
}

fn multinomial(total: usize, parts: [usize; 3]) -> u128 {
    // total! / (a! b! c!) with a + b + c = total, built as a product of binomials
    let binom = |n: usize, k: usize| -> u128 {
        let mut r: u128 = 1;
        for i in 0..k {
            r = r * (n - i) as u128 / (i + 1) as u128;
        }
        r
    };
    binom(total, parts[0]) * binom(total - parts[0], parts[1])
}

/// Integer coefficients of `R_n^m(ρ)` in powers of `ρ` (index = power).
pub fn radial_coeffs(n: usize, m: usize) -> Result<Vec<f64>> {
    if m > n || (n - m) % 2 != 0 {
        return invalid(format!("no radial polynomial R_{n}^{m}"));
    }
    if n > MAX_POLY_DEGREE {
        return invalid(format!("polynomial path supports degree <= {MAX_POLY_DEGREE}"));
    }
    let mut c = vec![0.0; n + 1];
    for s in 0..=(n - m) / 2 {
        let a = (n + m) / 2 - s;
        let b = (n - m) / 2 - s;
        let v = multinomial(n - s, [s, a, b]) as f64;
        c[n - 2 * s] = if s % 2 == 0 { v } else { -v };
    }
    Ok(c)
}

/// Coefficients with respect to `Ẑ_{n,k}`, `n ≤ max_degree`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ZernikeExpansion<T> {
    pub max_degree: usize,
    /// Flat storage in [`index`] order.
    pub coeffs: Vec<T>,
}

impl<T: Real> ZernikeExpansion<T> {
    pub fn zeros(max_degree: usize) -> Self {
        Self {
            max_degree,
            coeffs: vec![T::zero(); n_terms(max_degree)],
        }
    }

    pub fn from_coeffs(max_degree: usize, coeffs: Vec<T>) -> Result<Self> {
        if coeffs.len() != n_terms(max_degree) {
            return invalid(format!(
                "{} coefficients for degree {max_degree} (expected {})",
                coeffs.len(),
                n_terms(max_degree)
            ));
        }
        Ok(Self { max_degree, coeffs })
    }

    pub fn unit(max_degree: usize, n: usize, k: usize) -> Result<Self> {
        check_nk(n, k)?;
        if n > max_degree {
            return invalid("unit index above cutoff");
        }
        let mut e = Self::zeros(max_degree);
        e.coeffs[index(n, k)] = T::one();
        Ok(e)
    }

    pub fn get(&self, n: usize, k: usize) -> T {
        self.coeffs[index(n, k)]
    }

    pub fn set(&mut self, n: usize, k: usize, v: T) {
        self.coeffs[index(n, k)] = v;
    }

    pub fn eval(&self, x: [T; 2]) -> T {
        let basis = ZernikeBasis::new(self.max_degree);
        let mut z = vec![T::zero(); basis.len()];
        basis.eval_all(x, &mut z);
        z.iter().zip(&self.coeffs).map(|(a, b)| *a * *b).sum()
    }

    /// `‖f‖²_{L²}` by Parseval.
    pub fn l2_norm_sq(&self) -> T {
        self.coeffs.iter().map(|c| *c * *c).sum()
    }

    /// `Σ (n+1)^{2s} c²_{n,k}`.
    pub fn sobolev_norm_sq(&self, s: f64) -> T {
        self.coeffs
            .iter()
            .enumerate()
            .map(|(j, c)| {
                let (n, _) = degree_order(j);
                T::lit(((n + 1) as f64).powf(2.0 * s)) * *c * *c
            })
            .sum()
    }

    /// Multiplies each degree-`n` block by `g(n)`.
    pub fn map_degree(&self, g: impl Fn(usize) -> T) -> Self {
        let mut out = self.clone();
        for n in 0..=self.max_degree {
            let s = g(n);
            for k in 0..=n {
                out.coeffs[index(n, k)] = out.coeffs[index(n, k)] * s;
            }
        }
        out
    }

    /// `𝓛 f` by symbolic differentiation of the radial polynomials: for
    /// `R = Σ c_p ρ^p` with angular order `m`,
    /// `16π² 𝓛 R = Σ c_p [(p+1)² ρ^p − (p² − m²) ρ^{p−2}]`, and the result is
    /// expanded back in the `R_{n'}^m` by back substitution from the top
    /// degree. All intermediate coefficients are integers.
    pub fn apply_l(&self) -> Result<Self> {
        let big_m = self.max_degree;
        if big_m > MAX_POLY_DEGREE {
            return invalid(format!("polynomial path supports degree <= {MAX_POLY_DEGREE}"));
        }
        let mut out = Self::zeros(big_m);
        let scale = 1.0 / (16.0 * PI * PI);
        for n in 0..=big_m {
            for k in 0..=n {
                let c = self.coeffs[index(n, k)];
                if c == T::zero() {
                    continue;
                }
                let m = azimuthal_order(n, k);
                let ma = m.unsigned_abs() as usize;
                let r = radial_coeffs(n, ma)?;
                let mut lr = vec![0.0; n + 1];
                for p in ma..=n {
                    let cp = r[p];
                    if cp == 0.0 {
                        continue;
                    }
                    lr[p] += ((p + 1) * (p + 1)) as f64 * cp;
                    if p >= 2 {
                        lr[p - 2] -= (p as f64 * p as f64 - (ma * ma) as f64) * cp;
                    }
                }
                // back substitution in R_{n'}^m, n' = n, n-2, ..., m
                let mut np = n;
                loop {
                    let rn = radial_coeffs(np, ma)?;
                    let d = lr[np] / rn[np];
                    if d != 0.0 {
                        for p in 0..=np {
                            lr[p] -= d * rn[p];
                        }
                        let kp = if m >= 0 { (np + ma) / 2 } else { (np - ma) / 2 };
                        let ratio = norm_factor(n, m) / norm_factor(np, m);
                        let j = index(np, kp);
                        out.coeffs[j] = out.coeffs[j] + c * T::lit(d * ratio * scale);
                    }
                    if np < ma + 2 {
                        break;
                    }
                    np -= 2;
                }
            }
        }
        Ok(out)
    }
}

/// A Zernike expansion viewed as a scalar field.
#[derive(Clone, Debug)]
pub struct ZernikeField<T>(pub ZernikeExpansion<T>);

impl<T: Real> ScalarField<T> for ZernikeField<T> {
    fn value(&self, p: [T; 2]) -> T {
        self.0.eval(p)
    }
}

/// Gauss–Legendre nodes and weights on `[-1, 1]` (Newton on `P_n`).
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut z = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, z);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * z * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            if n == 1 {
                p0 = 1.0;
                p1 = z;
            }
            dp = n as f64 * (z * p1 - p0) / (z * z - 1.0);
            let dz = p1 / dp;
            z -= dz;
            if dz.abs() < 1e-15 {
                break;
            }
        }
        x[i] = -z;
        x[n - 1 - i] = z;
        w[i] = 2.0 / ((1.0 - z * z) * dp * dp);
        w[n - 1 - i] = w[i];
    }
    (x, w)
}

/// Tensor quadrature on the disk: Gauss–Legendre in `ρ²` times the
/// trapezoid rule in `ω`. Exact for `Ẑ_a Ẑ_b` when `n_t ≥ M/2 + 1` and
/// `n_w ≥ 2M + 1`. Weights sum to `π`.
#[derive(Clone, Debug)]
pub struct DiskQuadrature<T> {
    pub points: Vec<[T; 2]>,
    pub weights: Vec<T>,
}

impl<T: Real> DiskQuadrature<T> {
    pub fn new(n_t: usize, n_w: usize) -> Result<Self> {
        if n_t == 0 || n_w == 0 {
            return invalid("disk quadrature needs positive sizes");
        }
        let (xs, ws) = gauss_legendre(n_t);
        let mut points = Vec::with_capacity(n_t * n_w);
        let mut weights = Vec::with_capacity(n_t * n_w);
        for (xi, wi) in xs.iter().zip(&ws) {
            let t = 0.5 * (xi + 1.0);
            let rho = t.sqrt();
            for j in 0..n_w {
                let w = 2.0 * PI * j as f64 / n_w as f64;
                points.push([T::lit(rho * w.cos()), T::lit(rho * w.sin())]);
                // ∫ f dx = ½ ∫∫ f dt dω, dt = dx_GL / 2
                weights.push(T::lit(0.25 * wi * 2.0 * PI / n_w as f64));
            }
        }
        Ok(Self { points, weights })
    }

    /// Exact for products of degree-`max_degree` polynomials, with margin.
    pub fn for_degree(max_degree: usize) -> Self {
        Self::new(max_degree + 4, 2 * max_degree + 8).expect("positive sizes")
    }

    pub fn integrate(&self, f: impl Fn([T; 2]) -> T) -> T {
        self.points
            .iter()
            .zip(&self.weights)
            .map(|(p, w)| *w * f(*p))
            .sum()
    }
}

/// Zernike coefficients of `f` by quadrature.
pub fn analyze<T: Real>(
    f: impl Fn([T; 2]) -> T,
    max_degree: usize,
    quad: &DiskQuadrature<T>,
) -> ZernikeExpansion<T> {
    let basis = ZernikeBasis::new(max_degree);
    let mut z = vec![T::zero(); basis.len()];
    let mut out = ZernikeExpansion::zeros(max_degree);
    for (p, w) in quad.points.iter().zip(&quad.weights) {
        let v = f(*p) * *w;
        basis.eval_all(*p, &mut z);
        for (c, zj) in out.coeffs.iter_mut().zip(&z) {
            *c = *c + v * *zj;
        }
    }
    out
}

/// Values of `expansion` at the given points.
pub fn synthesize<T: Real>(expansion: &ZernikeExpansion<T>, points: &[[T; 2]]) -> Vec<T> {
    let basis = ZernikeBasis::new(expansion.max_degree);
    let mut z = vec![T::zero(); basis.len()];
    points
        .iter()
        .map(|p| {
            basis.eval_all(*p, &mut z);
            z.iter().zip(&expansion.coeffs).map(|(a, b)| *a * *b).sum()
        })
        .collect()
}

/// Nodal values on the cell-centred polar grid `ρ_i = (i+½)/n_r`,
/// `ω_j = 2πj/n_w`.
#[derive(Clone, Debug, PartialEq)]
pub struct PolarNodal<T> {
    pub n_r: usize,
    pub n_w: usize,
    pub values: Vec<T>,
}

impl<T: Real> PolarNodal<T> {
    pub fn rho(&self, i: usize) -> T {
        (T::from_count(i) + T::lit(0.5)) / T::from_count(self.n_r)
    }

    pub fn omega(&self, j: usize) -> T {
        T::lit(2.0) * T::PI() * T::from_count(j) / T::from_count(self.n_w)
    }

    pub fn point(&self, i: usize, j: usize) -> [T; 2] {
        let (r, w) = (self.rho(i), self.omega(j));
        [r * w.cos(), r * w.sin()]
    }

    pub fn sample(n_r: usize, n_w: usize, f: impl Fn([T; 2]) -> T) -> Result<Self> {
        if n_r < 4 || n_w < 4 {
            return invalid("polar grid needs n_r >= 4 and n_w >= 4");
        }
        let mut g = Self {
            n_r,
            n_w,
            values: vec![T::zero(); n_r * n_w],
        };
        for i in 0..n_r {
            for j in 0..n_w {
                g.values[i * n_w + j] = f(g.point(i, j));
            }
        }
        Ok(g)
    }

    #[inline]
    pub fn at(&self, i: usize, j: usize) -> T {
        self.values[i * self.n_w + j]
    }

    /// `𝓛 f` by second-order finite differences. The ghost ring inside the
    /// pole is the first ring rotated by `π`, so `n_w` must be even; the
    /// outer ring uses one-sided differences.
    pub fn apply_l(&self) -> Result<Self> {
        let (n_r, n_w) = (self.n_r, self.n_w);
        if n_w % 2 != 0 {
            return invalid("pole treatment needs an even number of angles");
        }
        let h = T::one() / T::from_count(n_r);
        let hw = T::lit(2.0) * T::PI() / T::from_count(n_w);
        let two = T::lit(2.0);
        let scale = T::one() / (T::lit(16.0) * T::PI() * T::PI());
        let mut out = self.clone();
        for i in 0..n_r {
            let r = self.rho(i);
            for j in 0..n_w {
                let f0 = self.at(i, j);
                let (fr, frr) = if i + 1 < n_r {
                    let fp = self.at(i + 1, j);
                    let fm = if i == 0 {
                        self.at(0, (j + n_w / 2) % n_w)
                    } else {
                        self.at(i - 1, j)
                    };
                    ((fp - fm) / (two * h), (fp - two * f0 + fm) / (h * h))
                } else {
                    let (f1, f2, f3) = (self.at(i - 1, j), self.at(i - 2, j), self.at(i - 3, j));
                    (
                        (T::lit(3.0) * f0 - T::lit(4.0) * f1 + f2) / (two * h),
                        (two * f0 - T::lit(5.0) * f1 + T::lit(4.0) * f2 - f3) / (h * h),
                    )
                };
                let fwp = self.at(i, (j + 1) % n_w);
                let fwm = self.at(i, (j + n_w - 1) % n_w);
                let fww = (fwp - two * f0 + fwm) / (hw * hw);
                let lf = -((T::one() - r * r) * frr
                    + (T::one() / r - T::lit(3.0) * r) * fr
                    + fww / (r * r))
                    + f0;
                out.values[i * n_w + j] = scale * lf;
            }
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn explicit(n: usize, k: usize, x: [f64; 2]) -> f64 {
        let m = azimuthal_order(n, k);
        let ma = m.unsigned_abs() as usize;
        let rho = x[0].hypot(x[1]);
        let w = x[1].atan2(x[0]);
        let r: f64 = radial_coeffs(n, ma)
            .unwrap()
            .iter()
            .enumerate()
            .map(|(p, c)| c * rho.powi(p as i32))
            .sum();
        let ang = if m >= 0 { (ma as f64 * w).cos() } else { (ma as f64 * w).sin() };
        norm_factor(n, m) * r * ang
    }

    #[test]
    fn constant_term() {
        let z = zernike_eval(0, 0, [0.3, 0.2]).unwrap();
        assert!((z - 1.0 / PI.sqrt()).abs() < 1e-15);
        assert!(zernike_eval(2, 3, [0.0, 0.0]).is_err());
        assert!(zernike_eval(1, 0, [1.0, 1.0]).is_err());
    }

    #[test]
    fn recurrence_matches_explicit_formula() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let basis = ZernikeBasis::new(16);
        let mut out = vec![0.0; basis.len()];
        for _ in 0..20 {
            let r = rng.random::<f64>().sqrt();
            let w = rng.random::<f64>() * 6.28;
            let x = [r * w.cos(), r * w.sin()];
            basis.eval_all(x, &mut out);
            for n in 0..=16 {
                for k in 0..=n {
                    let e = explicit(n, k, x);
                    assert!((out[index(n, k)] - e).abs() < 1e-9 * (1.0 + e.abs()), "({n},{k})");
                }
            }
        }
    }

    #[test]
    fn orthonormal_under_quadrature() {
        let m = 12;
        let quad = DiskQuadrature::<f64>::for_degree(m);
        let basis = ZernikeBasis::new(m);
        let mut gram = vec![0.0; basis.len() * basis.len()];
        let mut z = vec![0.0; basis.len()];
        for (p, w) in quad.points.iter().zip(&quad.weights) {
            basis.eval_all(*p, &mut z);
            for a in 0..z.len() {
                for b in 0..z.len() {
                    gram[a * z.len() + b] += w * z[a] * z[b];
                }
            }
        }
        for a in 0..z.len() {
            for b in 0..z.len() {
                let d = if a == b { 1.0 } else { 0.0 };
                assert!((gram[a * z.len() + b] - d).abs() < 1e-10);
            }
        }
        assert!((quad.weights.iter().sum::<f64>() - PI).abs() < 1e-13);
    }

    #[test]
    fn boundary_restriction_is_degree_n_trig_polynomial() {
        // On the circle Ẑ_{n,k} is a trig polynomial of degree |m| ≤ n.
        let n = 7;
        for k in 0..=n {
            let vals: Vec<f64> = (0..64)
                .map(|j| {
                    let w = 2.0 * PI * j as f64 / 64.0;
                    zernike_eval(n, k, [w.cos(), w.sin()]).unwrap()
                })
                .collect();
            for freq in (n + 1)..32 {
                let c: f64 = vals
                    .iter()
                    .enumerate()
                    .map(|(j, v)| v * (2.0 * PI * (freq * j) as f64 / 64.0).cos())
                    .sum();
                assert!(c.abs() < 1e-10);
            }
        }
    }

    #[test]
    fn l_eigen_relation_is_exact() {
        let big_m = 20;
        for n in 0..=big_m {
            for k in 0..=n {
                let e = ZernikeExpansion::<f64>::unit(big_m, n, k).unwrap();
                let le = e.apply_l().unwrap();
                for (j, c) in le.coeffs.iter().enumerate() {
                    let expect = if j == index(n, k) { l_eigenvalue(n) } else { 0.0 };
                    assert!((c - expect).abs() < 1e-10, "({n},{k}) at {j}: {c}");
                }
            }
        }
        let c = ZernikeExpansion::<f64>::unit(4, 0, 0).unwrap().apply_l().unwrap();
        assert!((c.get(0, 0) - 1.0 / (16.0 * PI * PI)).abs() < 1e-15);
    }

    #[test]
    fn l_of_general_polynomial_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut e = ZernikeExpansion::<f64>::zeros(6);
        for c in e.coeffs.iter_mut() {
            *c = rng.random::<f64>() - 0.5;
        }
        let le = e.apply_l().unwrap();
        let mut errs = Vec::new();
        for n_r in [40, 80] {
            let g = PolarNodal::sample(n_r, 2 * n_r, |p| e.eval(p)).unwrap();
            let lg = g.apply_l().unwrap();
            // area-weighted L² error away from the degenerate rim
            let mut err: f64 = 0.0;
            for i in 0..n_r {
                if g.rho(i) > 0.9 {
                    continue;
                }
                for j in 0..g.n_w {
                    err += g.rho(i) * (lg.at(i, j) - le.eval(g.point(i, j))).powi(2);
                }
            }
            errs.push((err / (n_r * g.n_w) as f64).sqrt());
        }
        let order = (errs[0] / errs[1]).log2();
        assert!((order - 2.0).abs() < 0.3, "order {order}, errors {errs:?}");
        assert!(PolarNodal::sample(8, 9, |_| 0.0).unwrap().apply_l().is_err());
    }

    #[test]
    fn analyze_synthesize_round_trip() {
        let e = analyze(|p: [f64; 2]| zernike_eval(3, 1, p).unwrap(), 8, &DiskQuadrature::for_degree(8));
        for (j, c) in e.coeffs.iter().enumerate() {
            let expect = if j == index(3, 1) { 1.0 } else { 0.0 };
            assert!((c - expect).abs() < 1e-10);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut r = ZernikeExpansion::<f64>::zeros(8);
        for c in r.coeffs.iter_mut() {
            *c = rng.random::<f64>() - 0.5;
        }
        let quad = DiskQuadrature::for_degree(8);
        let back = analyze(|p| r.eval(p), 8, &quad);
        let pts = &quad.points;
        let a = synthesize(&r, pts);
        let b = synthesize(&back, pts);
        assert!(a.iter().zip(&b).all(|(x, y)| (x - y).abs() < 1e-9));
        // Parseval
        let l2 = quad.integrate(|p| r.eval(p).powi(2));
        assert!((l2 - r.l2_norm_sq()).abs() < 1e-10);
    }

    #[test]
    fn gauss_legendre_integrates_polynomials() {
        let (x, w) = gauss_legendre(7);
        let s: f64 = x.iter().zip(&w).map(|(a, b)| b * a.powi(12)).sum();
        assert!((s - 2.0 / 13.0).abs() < 1e-14);
        let (x, w) = gauss_legendre(1);
        assert_eq!((x[0], w[0]), (0.0, 2.0));
    }

    proptest! {
        #[test]
        fn index_round_trip(j in 0usize..2000) {
            let (n, k) = degree_order(j);
            prop_assert!(k <= n);
            prop_assert_eq!(index(n, k), j);
        }
    }
}
