//! Steady-state Schrödinger problem `½Δu − fu = 0`, `u = g` on the boundary,
//! on the unit square with the five-point Laplacian.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::linalg::{pcg, BandedSpd, LinearOperator, PcgOptions};

/// Above this many unknowns the solver switches to Jacobi-preconditioned CG.
pub const DIRECT_SOLVE_LIMIT: usize = 100_000;

/// Uniform `(n+1) × (n+1)` node grid on `[0, 1]²`, spacing `h = 1/n`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridDomain {
    pub n: usize,
}

impl GridDomain {
    pub fn new(n: usize) -> Result<Self> {
        if n < 2 {
            return invalid("grid needs at least two intervals per side");
        }
        Ok(Self { n })
    }

    pub fn h(&self) -> f64 {
        1.0 / self.n as f64
    }

    pub fn refined(&self) -> Self {
        Self { n: 2 * self.n }
    }

    pub fn n_nodes(&self) -> usize {
        (self.n + 1) * (self.n + 1)
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize) -> usize {
        j * (self.n + 1) + i
    }

    pub fn point(&self, i: usize, j: usize) -> [f64; 2] {
        [i as f64 * self.h(), j as f64 * self.h()]
    }

    pub fn is_boundary(&self, i: usize, j: usize) -> bool {
        i == 0 || j == 0 || i == self.n || j == self.n
    }

    pub fn boundary_nodes(&self) -> Vec<usize> {
        self.filter_nodes(|i, j| self.is_boundary(i, j))
    }

    pub fn interior_nodes(&self) -> Vec<usize> {
        self.filter_nodes(|i, j| !self.is_boundary(i, j))
    }

    fn filter_nodes(&self, keep: impl Fn(usize, usize) -> bool) -> Vec<usize> {
        let mut out = Vec::new();
        for j in 0..=self.n {
            for i in 0..=self.n {
                if keep(i, j) {
                    out.push(self.index(i, j));
                }
            }
        }
        out
    }

    pub fn sample(&self, f: impl Fn([f64; 2]) -> f64) -> Vec<f64> {
        let mut v = vec![0.0; self.n_nodes()];
        for j in 0..=self.n {
            for i in 0..=self.n {
                v[self.index(i, j)] = f(self.point(i, j));
            }
        }
        v
    }

    /// Bilinear interpolation; points are clamped to the square.
    pub fn interpolate(&self, values: &[f64], p: [f64; 2]) -> f64 {
        let s = |x: f64| {
            let t = x.clamp(0.0, 1.0) * self.n as f64;
            let k = (t.floor() as usize).min(self.n - 1);
            (k, t - k as f64)
        };
        let (i, a) = s(p[0]);
        let (j, b) = s(p[1]);
        let v = |di, dj| values[self.index(i + di, j + dj)];
        (1.0 - a) * (1.0 - b) * v(0, 0) + a * (1.0 - b) * v(1, 0) + (1.0 - a) * b * v(0, 1) + a * b * v(1, 1)
    }

    /// `L²` inner product with normalized Lebesgue weight `h²` on interior nodes.
    pub fn inner(&self, a: &[f64], b: &[f64]) -> f64 {
        let h2 = self.h() * self.h();
        self.interior_nodes().iter().map(|&k| a[k] * b[k]).sum::<f64>() * h2
    }

    fn check_len(&self, v: &[f64]) -> Result<()> {
        if v.len() != self.n_nodes() {
            return invalid("nodal field does not match the grid");
        }
        if v.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("nodal field has non-finite values".into()));
        }
        Ok(())
    }

    pub fn write_csv(&self, path: &Path, values: &[f64]) -> Result<()> {
        self.check_len(values)?;
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["i", "j", "value"])?;
        for j in 0..=self.n {
            for i in 0..=self.n {
                w.write_record([i.to_string(), j.to_string(), values[self.index(i, j)].to_string()])?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

/// Link `f = φ(θ)` with `φ(0) = 1` and `φ' > 0`.
pub trait Link: Send + Sync {
    fn phi(&self, t: f64) -> f64;
    fn phi_prime(&self, t: f64) -> f64;
}

/// `φ = exp`, with `f_min = 0`.
#[derive(Clone, Copy, Debug, Default)]
pub struct ExpLink;

impl Link for ExpLink {
    fn phi(&self, t: f64) -> f64 {
        t.exp()
    }
    fn phi_prime(&self, t: f64) -> f64 {
        t.exp()
    }
}

pub fn link_phi(t: f64) -> f64 {
    ExpLink.phi(t)
}

pub fn link_phi_prime(t: f64) -> f64 {
    ExpLink.phi_prime(t)
}

enum Solver {
    Direct(BandedSpd<f64>),
    Iterative,
}

/// Factorized `A = −(½Δ_h − f)` on interior nodes for a fixed potential.
pub struct SchrodingerOperator {
    pub domain: GridDomain,
    f: Vec<f64>,
    interior: Vec<usize>,
    solver: Solver,
}

impl SchrodingerOperator {
    pub fn new(domain: GridDomain, f: &[f64]) -> Result<Self> {
        domain.check_len(f)?;
        if f.iter().any(|v| *v < 0.0) {
            return invalid("potential must be nonnegative");
        }
        let m = domain.n - 1;
        let interior = domain.interior_nodes();
        let solver = if m * m > DIRECT_SOLVE_LIMIT {
            Solver::Iterative
        } else {
            let h2 = domain.h() * domain.h();
            let mut a = BandedSpd::zeros(m * m, m);
            for jj in 0..m {
                for ii in 0..m {
                    let r = jj * m + ii;
                    let k = domain.index(ii + 1, jj + 1);
                    a.add_lower(r, r, 2.0 / h2 + f[k]);
                    if ii > 0 {
                        a.add_lower(r, r - 1, -0.5 / h2);
                    }
                    if jj > 0 {
                        a.add_lower(r, r - m, -0.5 / h2);
                    }
                }
            }
            a.factor()?;
            Solver::Direct(a)
        };
        Ok(Self {
            domain,
            f: f.to_vec(),
            interior,
            solver,
        })
    }

    pub fn potential(&self) -> &[f64] {
        &self.f
    }

    /// `(½Δ_h − f) w` at interior nodes, zero on the boundary.
    pub fn apply_s(&self, w: &[f64]) -> Vec<f64> {
        let d = &self.domain;
        let h2 = d.h() * d.h();
        let mut out = vec![0.0; d.n_nodes()];
        for j in 1..d.n {
            for i in 1..d.n {
                let k = d.index(i, j);
                let lap = w[d.index(i + 1, j)] + w[d.index(i - 1, j)] + w[d.index(i, j + 1)]
                    + w[d.index(i, j - 1)]
                    - 4.0 * w[k];
                out[k] = 0.5 * lap / h2 - self.f[k] * w[k];
            }
        }
        out
    }

    /// Solves `A x = b` on interior unknowns.
    fn solve_interior(&self, b: &[f64]) -> Result<Vec<f64>> {
        match &self.solver {
            Solver::Direct(a) => a.solve(b),
            Solver::Iterative => {
                let diag: Vec<f64> = self
                    .interior
                    .iter()
                    .map(|&k| 2.0 / (self.domain.h() * self.domain.h()) + self.f[k])
                    .collect();
                let pre = |r: &[f64], z: &mut [f64]| {
                    for i in 0..r.len() {
                        z[i] = r[i] / diag[i];
                    }
                };
                let opts = PcgOptions {
                    tol: 1e-12,
                    max_iter: 20 * self.domain.n * 4,
                };
                Ok(pcg(self, &pre, b, &opts)?.solution)
            }
        }
    }

    /// Solution with boundary values `g` (read from the boundary nodes of `g`).
    pub fn solve_dirichlet(&self, g: &[f64]) -> Result<Vec<f64>> {
        let d = &self.domain;
        d.check_len(g)?;
        let m = d.n - 1;
        let h2 = d.h() * d.h();
        let mut b = vec![0.0; m * m];
        for jj in 0..m {
            for ii in 0..m {
                let (i, j) = (ii + 1, jj + 1);
                let mut s = 0.0;
                for (a, c) in [(i - 1, j), (i + 1, j), (i, j - 1), (i, j + 1)] {
                    if d.is_boundary(a, c) {
                        s += g[d.index(a, c)];
                    }
                }
                b[jj * m + ii] = 0.5 * s / h2;
            }
        }
        let x = self.solve_interior(&b)?;
        let mut u = vec![0.0; d.n_nodes()];
        for k in d.boundary_nodes() {
            u[k] = g[k];
        }
        for (r, &k) in self.interior.iter().enumerate() {
            u[k] = x[r];
        }
        Ok(u)
    }

    /// `𝕍_f ψ`: the zero-boundary solution of `(½Δ_h − f) w = ψ`.
    pub fn apply_v(&self, psi: &[f64]) -> Result<Vec<f64>> {
        self.domain.check_len(psi)?;
        let b: Vec<f64> = self.interior.iter().map(|&k| -psi[k]).collect();
        let x = self.solve_interior(&b)?;
        let mut w = vec![0.0; self.domain.n_nodes()];
        for (r, &k) in self.interior.iter().enumerate() {
            w[k] = x[r];
        }
        Ok(w)
    }
}

impl LinearOperator<f64> for SchrodingerOperator {
    fn dim(&self) -> usize {
        self.interior.len()
    }
    fn apply(&self, x: &[f64], y: &mut [f64]) {
        let mut w = vec![0.0; self.domain.n_nodes()];
        for (r, &k) in self.interior.iter().enumerate() {
            w[k] = x[r];
        }
        let s = self.apply_s(&w);
        for (r, &k) in self.interior.iter().enumerate() {
            y[r] = -s[k];
        }
    }
}

fn check_boundary_data(g: &[f64], domain: &GridDomain) -> Result<()> {
    domain.check_len(g)?;
    if domain.boundary_nodes().iter().any(|&k| !(g[k] > 0.0)) {
        return invalid("boundary data must be positive");
    }
    Ok(())
}

pub fn solve_dirichlet(domain: GridDomain, f: &[f64], g: &[f64]) -> Result<Vec<f64>> {
    check_boundary_data(g, &domain)?;
    SchrodingerOperator::new(domain, f)?.solve_dirichlet(g)
}

pub fn apply_vf(domain: GridDomain, f: &[f64], psi: &[f64]) -> Result<Vec<f64>> {
    SchrodingerOperator::new(domain, f)?.apply_v(psi)
}

pub fn apply_sf(domain: GridDomain, f: &[f64], w: &[f64]) -> Result<Vec<f64>> {
    Ok(SchrodingerOperator::new(domain, f)?.apply_s(w))
}

pub fn potential(theta: &[f64], link: &dyn Link) -> Vec<f64> {
    theta.iter().map(|t| link.phi(*t)).collect()
}

/// `u_{φ∘θ}` interpolated at the design points.
pub fn schrodinger_forward(
    domain: GridDomain,
    theta: &[f64],
    g: &[f64],
    points: &[[f64; 2]],
    link: &dyn Link,
) -> Result<Vec<f64>> {
    let u = solve_dirichlet(domain, &potential(theta, link), g)?;
    Ok(points.iter().map(|p| domain.interpolate(&u, *p)).collect())
}

/// Background quantities at `θ₀` shared by the variance and the
/// information operator.
pub struct Linearization {
    pub op: SchrodingerOperator,
    pub u: Vec<f64>,
    /// `u_{f₀} φ'(θ₀)`.
    pub weight: Vec<f64>,
}

impl Linearization {
    pub fn new(domain: GridDomain, theta0: &[f64], g: &[f64], link: &dyn Link) -> Result<Self> {
        check_boundary_data(g, &domain)?;
        let op = SchrodingerOperator::new(domain, &potential(theta0, link))?;
        let u = op.solve_dirichlet(g)?;
        let weight: Vec<f64> = u.iter().zip(theta0).map(|(u, t)| u * link.phi_prime(*t)).collect();
        let min = weight.iter().cloned().fold(f64::INFINITY, f64::min);
        if !(min > 1e-8) {
            return Err(Error::InvalidArgument(format!(
                "u·φ'(θ₀) has minimum {min:e}, too small to divide by"
            )));
        }
        Ok(Self { op, u, weight })
    }

    fn quotient(&self, psi: &[f64]) -> Vec<f64> {
        psi.iter().zip(&self.weight).map(|(p, w)| p / w).collect()
    }

    /// `𝕀₀ h = 𝕍_{f₀}[u φ' h]`.
    pub fn information(&self, h: &[f64]) -> Result<Vec<f64>> {
        let wh: Vec<f64> = h.iter().zip(&self.weight).map(|(a, b)| a * b).collect();
        self.op.apply_v(&wh)
    }

    /// `𝕀₀* w = u φ' 𝕍_{f₀}[w]`.
    pub fn information_adjoint(&self, w: &[f64]) -> Result<Vec<f64>> {
        let v = self.op.apply_v(w)?;
        Ok(v.iter().zip(&self.weight).map(|(a, b)| a * b).collect())
    }

    /// `‖𝕊_{f₀}[ψ/(u φ')]‖²` with weight `h²`.
    pub fn variance(&self, psi: &[f64]) -> Result<f64> {
        self.op.domain.check_len(psi)?;
        warn_boundary(&self.op.domain, psi);
        let s = self.op.apply_s(&self.quotient(psi));
        Ok(self.op.domain.inner(&s, &s))
    }

    /// `ψ̃ = 𝕊𝕊[ψ/(u φ')]/(u φ')`.
    pub fn invert_info(&self, psi: &[f64]) -> Result<Vec<f64>> {
        self.op.domain.check_len(psi)?;
        warn_boundary(&self.op.domain, psi);
        let s = self.op.apply_s(&self.quotient(psi));
        let ss = self.op.apply_s(&s);
        Ok(self.quotient(&ss))
    }
}

pub fn variance_schrodinger(domain: GridDomain, theta0: &[f64], psi: &[f64], g: &[f64]) -> Result<f64> {
    Linearization::new(domain, theta0, g, &ExpLink)?.variance(psi)
}

pub fn invert_info(domain: GridDomain, theta0: &[f64], psi: &[f64], g: &[f64]) -> Result<Vec<f64>> {
    Linearization::new(domain, theta0, g, &ExpLink)?.invert_info(psi)
}

/// Largest of `|ψ|`, `|∂ψ|` and `|∂²ψ|` (one-sided differences, normal
/// direction) over the boundary, relative to `max |ψ|`.
pub fn boundary_defect(domain: &GridDomain, psi: &[f64]) -> f64 {
    let n = domain.n;
    let h = domain.h();
    let scale = psi.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(f64::MIN_POSITIVE);
    let mut worst: f64 = 0.0;
    for t in 0..=n {
        let lines: [[usize; 3]; 4] = [
            [domain.index(0, t), domain.index(1, t), domain.index(2, t)],
            [domain.index(n, t), domain.index(n - 1, t), domain.index(n - 2, t)],
            [domain.index(t, 0), domain.index(t, 1), domain.index(t, 2)],
            [domain.index(t, n), domain.index(t, n - 1), domain.index(t, n - 2)],
        ];
        for [a, b, c] in lines {
            let d0 = psi[a].abs();
            let d1 = (psi[b] - psi[a]).abs() / h;
            let d2 = (psi[c] - 2.0 * psi[b] + psi[a]).abs() / (h * h);
            worst = worst.max(d0).max(d1 * h).max(d2 * h * h);
        }
    }
    worst / scale
}

fn warn_boundary(domain: &GridDomain, psi: &[f64]) {
    let d = boundary_defect(domain, psi);
    if d > 1e-6 {
        log::warn!("test function does not vanish to second order at the boundary (defect {d:.2e})");
    }
}

/// `θ ↦ u_{φ∘θ}(X_i)` for nodal `θ` on a fixed grid and fixed design points.
pub struct SchrodingerModel {
    pub domain: GridDomain,
    pub boundary: Vec<f64>,
    pub points: Vec<[f64; 2]>,
    link: Box<dyn Link>,
}

impl SchrodingerModel {
    pub fn new(domain: GridDomain, boundary: Vec<f64>, points: Vec<[f64; 2]>) -> Result<Self> {
        check_boundary_data(&boundary, &domain)?;
        if points.is_empty() {
            return invalid("no design points");
        }
        Ok(Self {
            domain,
            boundary,
            points,
            link: Box::new(ExpLink),
        })
    }

    pub fn with_link(mut self, link: Box<dyn Link>) -> Self {
        self.link = link;
        self
    }
}

impl crate::mcmc::ForwardModel for SchrodingerModel {
    fn n_params(&self) -> usize {
        self.domain.n_nodes()
    }

    fn evaluate(&self, theta: &[f64]) -> Result<Vec<f64>> {
        schrodinger_forward(self.domain, theta, &self.boundary, &self.points, self.link.as_ref())
    }
}
