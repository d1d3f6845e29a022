//! Matérn Gaussian process priors on nodal point sets.

use std::path::Path;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::gamma;

use crate::error::{invalid, Result};
use crate::linalg::{Cholesky, DenseMatrix};

const MAX_JITTER: f64 = 1e-6;

/// Matérn covariance parameters. `nu` is the smoothness of the kernel; the
/// Sobolev-type regularity used by the rescaling is `alpha = nu + d/2`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MaternConfig {
    pub nu: f64,
    pub length_scale: f64,
    pub amplitude: f64,
    pub jitter: f64,
}

impl Default for MaternConfig {
    fn default() -> Self {
        Self {
            nu: 3.0,
            length_scale: 0.2,
            amplitude: 1.0,
            jitter: 1e-10,
        }
    }
}

impl MaternConfig {
    pub fn new(nu: f64, length_scale: f64) -> Result<Self> {
        let c = Self {
            nu,
            length_scale,
            ..Self::default()
        };
        c.validate()?;
        Ok(c)
    }

    /// Config with smoothness `nu = alpha − d/2`.
    pub fn from_alpha(alpha: f64, dim: usize, length_scale: f64) -> Result<Self> {
        Self::new(alpha - dim as f64 / 2.0, length_scale)
    }

    pub fn alpha(&self, dim: usize) -> f64 {
        self.nu + dim as f64 / 2.0
    }

    pub fn validate(&self) -> Result<()> {
        let ok = [self.nu, self.length_scale, self.amplitude, self.jitter]
            .iter()
            .all(|v| v.is_finite() && *v > 0.0);
        if !ok {
            return invalid("Matérn parameters must be positive and finite");
        }
        Ok(())
    }
}

/// `K_ν(z)` from `∫₀^∞ exp(−z cosh t) cosh(νt) dt` by the trapezoidal rule,
/// which converges geometrically for this integrand.
pub fn bessel_k(nu: f64, z: f64) -> f64 {
    if z <= 0.0 {
        return f64::INFINITY;
    }
    let h = 0.05;
    let log_term = |t: f64| -z * t.cosh() + (nu * t).cosh().ln();
    let mut sum = 0.5 * log_term(0.0).exp();
    let mut k = 1;
    loop {
        let t = k as f64 * h;
        let lt = log_term(t);
        sum += lt.exp();
        let decreasing = z * t.sinh() > nu * (nu * t).tanh();
        if decreasing && (sum == 0.0 || lt < sum.ln() - 40.0) {
            break;
        }
        k += 1;
    }
    sum * h
}

/// `amplitude² · 2^{1−ν}/Γ(ν) · z^ν K_ν(z)` with `z = √(2ν) r / ℓ`.
pub fn matern_kernel(r: f64, cfg: &MaternConfig) -> f64 {
    let a2 = cfg.amplitude * cfg.amplitude;
    let z = (2.0 * cfg.nu).sqrt() * r.abs() / cfg.length_scale;
    if z < 1e-12 {
        return a2;
    }
    if z > 700.0 {
        return 0.0;
    }
    let nu = cfg.nu;
    let log_c = (1.0 - nu) * std::f64::consts::LN_2 - gamma(nu).ln() + nu * z.ln();
    a2 * (log_c + bessel_k(nu, z).ln()).exp()
}

pub fn covariance_matrix(nodes: &[[f64; 2]], cfg: &MaternConfig) -> DenseMatrix<f64> {
    let n = nodes.len();
    let mut k = DenseMatrix::zeros(n);
    for i in 0..n {
        k.set(i, i, matern_kernel(0.0, cfg));
        for j in 0..i {
            let r = (nodes[i][0] - nodes[j][0]).hypot(nodes[i][1] - nodes[j][1]);
            let v = matern_kernel(r, cfg);
            k.set(i, j, v);
            k.set(j, i, v);
        }
    }
    k
}

/// Factorized Matérn covariance on a fixed node set.
#[derive(Clone, Debug)]
pub struct MaternPrior {
    pub cfg: MaternConfig,
    nodes: Vec<[f64; 2]>,
    chol: Cholesky<f64>,
}

impl MaternPrior {
    /// Dense covariance plus Cholesky; the nugget grows ×10 up to `1e−6`.
    pub fn new(nodes: &[[f64; 2]], cfg: &MaternConfig) -> Result<Self> {
        cfg.validate()?;
        if nodes.is_empty() {
            return invalid("prior needs at least one node");
        }
        let k = covariance_matrix(nodes, cfg);
        let chol = Cholesky::factor_with_jitter(&k, cfg.jitter, MAX_JITTER.max(cfg.jitter))?;
        Ok(Self {
            cfg: *cfg,
            nodes: nodes.to_vec(),
            chol,
        })
    }

    pub fn n(&self) -> usize {
        self.nodes.len()
    }

    pub fn nodes(&self) -> &[[f64; 2]] {
        &self.nodes
    }

    pub fn jitter(&self) -> f64 {
        self.chol.jitter
    }

    pub fn min_pivot(&self) -> f64 {
        self.chol.min_pivot()
    }

    /// `L ξ` for a standard normal `ξ`.
    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let xi: Vec<f64> = (0..self.n()).map(|_| rng.sample(StandardNormal)).collect();
        self.chol.mul_lower(&xi)
    }

    /// `k` independent draws sharing one pass over the factor.
    pub fn draw_many<R: Rng + ?Sized>(&self, k: usize, rng: &mut R) -> Vec<Vec<f64>> {
        let xis: Vec<Vec<f64>> = (0..k)
            .map(|_| (0..self.n()).map(|_| rng.sample(StandardNormal)).collect())
            .collect();
        self.chol.mul_lower_many(&xis)
    }

    /// `θᵀ K⁻¹ θ` on the node set; a discrete surrogate of the RKHS norm.
    pub fn rkhs_norm_sq(&self, field: &[f64]) -> Result<f64> {
        if field.len() != self.n() {
            return invalid("field length does not match the prior nodes");
        }
        Ok(self.chol.solve_lower(field).iter().map(|v| v * v).sum())
    }

    /// Independent draws for `n_components` basis directions.
    pub fn sample<R: Rng + ?Sized>(&self, n_components: usize, rng: &mut R) -> PriorSample {
        PriorSample {
            components: self.draw_many(n_components, rng),
            scale_factor: 1.0,
        }
    }
}

/// One nodal field per Lie-algebra basis component.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PriorSample {
    pub components: Vec<Vec<f64>>,
    pub scale_factor: f64,
}

impl PriorSample {
    pub fn rescaled(mut self, n: usize, alpha: f64, problem: Problem) -> Self {
        let f = rescale_factor(n, alpha, problem);
        for c in &mut self.components {
            c.iter_mut().for_each(|v| *v *= f);
        }
        self.scale_factor *= f;
        self
    }
}

/// `sample_field` with its own seeded generator.
pub fn sample_field(nodes: &[[f64; 2]], cfg: &MaternConfig, seed: u64) -> Result<Vec<f64>> {
    let prior = MaternPrior::new(nodes, cfg)?;
    Ok(prior.draw(&mut ChaCha20Rng::seed_from_u64(seed)))
}

pub fn rkhs_norm_sq(field: &[f64], cfg: &MaternConfig, nodes: &[[f64; 2]]) -> Result<f64> {
    MaternPrior::new(nodes, cfg)?.rkhs_norm_sq(field)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Problem {
    Xray,
    /// Schrödinger problem on a `d`-dimensional domain.
    Schrodinger { dim: usize },
}

/// `N^{−1/(2α+2)}` for the X-ray problem, `N^{−d/(4α+2d)}` for Schrödinger.
pub fn rescale_factor(n: usize, alpha: f64, problem: Problem) -> f64 {
    let n = n.max(1) as f64;
    let exponent = match problem {
        Problem::Xray => 1.0 / (2.0 * alpha + 2.0),
        Problem::Schrodinger { dim } => {
            let d = dim as f64;
            d / (4.0 * alpha + 2.0 * d)
        }
    };
    n.powf(-exponent)
}

pub fn write_nodal_csv(path: &Path, nodes: &[[f64; 2]], values: &[f64]) -> Result<()> {
    if nodes.len() != values.len() {
        return invalid("node and value counts differ");
    }
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["x", "y", "value"])?;
    for (p, v) in nodes.iter().zip(values) {
        w.write_record([p[0].to_string(), p[1].to_string(), v.to_string()])?;
    }
    w.flush()?;
    Ok(())
}
