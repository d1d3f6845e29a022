//! Galerkin discretization of the normal operator `N_Φ` on the Zernike
//! basis, calibration of the `N₀` spectrum, preconditioned inversion of
//! `N_Φ` and the asymptotic variance `‖𝕀(𝕀*𝕀)⁻¹ψ‖²_{L²(λ)}`.
//!
//! Unknowns are indexed `zernike_index · d + j` where `j` runs over the
//! real orthonormal basis of `𝔤` (or of all of `ℂ^{n×n}`). The Gram matrix
//! `G = π² Σ_b λ_b J_bᵀ J_b` with `J_b[i, (z, j)] = ∫ Ẑ_z(γ_b) ⟨u⁻¹B_j u, B_i⟩ dt`
//! represents `N_Φ` under the `(μ/τ) dΣ` pairing.

use std::f64::consts::PI;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::field::{MatrixField, ScalarField};
use crate::geometry::BeamSample;
use crate::lie::{adjoint_action_matrix, full_matrix_basis, Algebra, CMat};
use crate::linalg::{pcg, DenseMatrix, LinearOperator, PcgOptions};
use crate::linear::{linearized_forward, BoundaryGrid};
use crate::transport::{integrating_factor_path, uniform_times, Scheme, StepControl};
use crate::zernike::{
    analyze, degree_order, index, l_eigenvalue, DiskQuadrature, ZernikeBasis,
    ZernikeExpansion, ZernikeField,
};

/// Resolution of the Galerkin discretization.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SpectralConfig {
    pub max_degree: usize,
    pub grid: BoundaryGrid,
    /// Step bound along chords; Simpson's rule on an even number of steps.
    pub h_max: f64,
    pub scheme: Scheme,
}

impl Default for SpectralConfig {
    fn default() -> Self {
        Self {
            max_degree: 16,
            grid: BoundaryGrid {
                n_phi: 96,
                n_vphi: 48,
            },
            h_max: 0.02,
            scheme: Scheme::Cf4,
        }
    }
}

impl SpectralConfig {
    /// Doubles the boundary grid and halves the chord step.
    pub fn refined(&self) -> Self {
        Self {
            grid: self.grid.refined(),
            h_max: self.h_max / 2.0,
            ..*self
        }
    }

    fn validate(&self) -> Result<()> {
        if self.grid.is_empty() || !(self.h_max > 0.0) {
            return invalid("spectral config needs a nonempty grid and positive h_max");
        }
        if self.max_degree > crate::zernike::MAX_POLY_DEGREE {
            return invalid("max_degree too large");
        }
        Ok(())
    }
}

/// Nodes, Simpson weights and adjoint-action matrices along one chord.
struct ChordSamples {
    points: Vec<[f64; 2]>,
    weights: Vec<f64>,
    ad: Vec<f64>,
}

fn simpson_weights(n: usize, h: f64) -> Vec<f64> {
    (0..=n)
        .map(|k| {
            let c = if k == 0 || k == n {
                1.0
            } else if k % 2 == 1 {
                4.0
            } else {
                2.0
            };
            c * h / 3.0
        })
        .collect()
}

fn chord_samples(
    phi0: &MatrixField<f64>,
    beam: &BeamSample<f64>,
    basis: &[CMat<f64>],
    cfg: &SpectralConfig,
) -> Result<ChordSamples> {
    let half = ((beam.exit_time / (2.0 * cfg.h_max)).ceil() as usize).max(1);
    let n = 2 * half;
    let times = uniform_times(beam.exit_time, n);
    let u = integrating_factor_path(phi0, beam, &times, cfg.scheme)?;
    let d = basis.len();
    let mut ad = vec![0.0; (n + 1) * d * d];
    for (k, uk) in u.iter().enumerate() {
        adjoint_action_matrix(uk, basis, &mut ad[k * d * d..(k + 1) * d * d]);
    }
    Ok(ChordSamples {
        points: times.iter().map(|&t| beam.point_unchecked(t)).collect(),
        weights: simpson_weights(n, beam.exit_time / n as f64),
        ad,
    })
}

/// Assembled Galerkin matrix of `N_{Φ0}`.
#[derive(Clone, Debug)]
pub struct GalerkinNormal {
    pub cfg: SpectralConfig,
    pub algebra: Algebra,
    /// True when unknowns span all of `ℂ^{n×n}` rather than `𝔤`.
    pub full_space: bool,
    basis: Vec<CMat<f64>>,
    n_zernike: usize,
    gram: DenseMatrix<f64>,
}

impl GalerkinNormal {
    pub fn assemble(phi0: &MatrixField<f64>, cfg: &SpectralConfig, full_space: bool) -> Result<Self> {
        cfg.validate()?;
        let algebra = phi0.algebra();
        let basis = if full_space {
            full_matrix_basis(algebra)
        } else {
            algebra.basis()
        };
        let d = basis.len();
        let zb = ZernikeBasis::new(cfg.max_degree);
        let nz = zb.len();
        let l = nz * d;
        let mut gram = DenseMatrix::zeros(l);
        let scale = PI * PI * cfg.grid.weight::<f64>();
        let mut z = vec![0.0; nz];
        let mut j_rows = vec![0.0; d * l];
        for beam in cfg.grid.beams::<f64>() {
            let cs = chord_samples(phi0, &beam, &basis, cfg)?;
            j_rows.iter_mut().for_each(|v| *v = 0.0);
            for (s, p) in cs.points.iter().enumerate() {
                zb.eval_all(*p, &mut z);
                let ad = &cs.ad[s * d * d..(s + 1) * d * d];
                let w = cs.weights[s];
                for (zi, zv) in z.iter().enumerate() {
                    let zw = w * zv;
                    for i in 0..d {
                        let row = &mut j_rows[i * l + zi * d..i * l + zi * d + d];
                        for (j, r) in row.iter_mut().enumerate() {
                            *r += zw * ad[i * d + j];
                        }
                    }
                }
            }
            let g = gram.as_mut_slice();
            for i in 0..d {
                let r = &j_rows[i * l..(i + 1) * l];
                for a in 0..l {
                    let ra = r[a] * scale;
                    if ra == 0.0 {
                        continue;
                    }
                    let ga = &mut g[a * l + a..(a + 1) * l];
                    for (gv, rb) in ga.iter_mut().zip(&r[a..]) {
                        *gv += ra * rb;
                    }
                }
            }
        }
        gram.symmetrize_from_upper();
        Ok(Self {
            cfg: *cfg,
            algebra,
            full_space,
            basis,
            n_zernike: nz,
            gram,
        })
    }

    /// Number of matrix basis elements per Zernike function.
    pub fn components(&self) -> usize {
        self.basis.len()
    }

    pub fn dim(&self) -> usize {
        self.gram.n()
    }

    pub fn gram(&self) -> &DenseMatrix<f64> {
        &self.gram
    }

    pub fn matrix_basis(&self) -> &[CMat<f64>] {
        &self.basis
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; x.len()];
        self.gram.matvec(x, &mut y);
        y
    }

    /// `L²` projection of `ψ` onto the discrete space.
    pub fn project(&self, psi: &MatrixField<f64>) -> Result<Vec<f64>> {
        let psi = if self.full_space { psi.to_full_space() } else { psi.clone() };
        let d = self.components();
        if psi.n_components() != d || psi.algebra() != self.algebra {
            return invalid("field does not match the Galerkin basis");
        }
        let m = self.cfg.max_degree;
        let quad = DiskQuadrature::new(2 * m + 16, 4 * m + 32)?;
        let mut out = vec![0.0; self.dim()];
        for j in 0..d {
            let comp = psi.component(j).clone();
            let r = psi.support_radius();
            let e = analyze(
                |p: [f64; 2]| {
                    if r.is_some_and(|r| p[0] * p[0] + p[1] * p[1] > r * r) {
                        0.0
                    } else {
                        comp.value(p)
                    }
                },
                m,
                &quad,
            );
            for (zi, c) in e.coeffs.iter().enumerate() {
                out[zi * d + j] = *c;
            }
        }
        Ok(out)
    }

    /// Matrix field with the given Galerkin coefficients.
    pub fn field_from_coeffs(&self, coeffs: &[f64]) -> Result<MatrixField<f64>> {
        let d = self.components();
        let comps = (0..d)
            .map(|j| {
                let c: Vec<f64> = (0..self.n_zernike).map(|zi| coeffs[zi * d + j]).collect();
                ZernikeExpansion::from_coeffs(self.cfg.max_degree, c)
                    .map(|e| Arc::new(ZernikeField(e)) as Arc<dyn ScalarField<f64>>)
            })
            .collect::<Result<Vec<_>>>()?;
        if self.full_space {
            MatrixField::in_full_space(self.algebra, comps)
        } else {
            MatrixField::in_algebra(self.algebra, comps)
        }
    }

    /// Norm of the coefficients belonging to `𝔤⊥` (zero unless `full_space`).
    pub fn complement_norm(&self, coeffs: &[f64]) -> f64 {
        let d = self.components();
        let k = self.algebra.dim();
        coeffs
            .iter()
            .enumerate()
            .filter(|(i, _)| i % d >= k)
            .map(|(_, v)| v * v)
            .sum::<f64>()
            .sqrt()
    }

    /// Solves `G ψ̃ = Pψ` by conjugate gradients preconditioned with the
    /// inverse of the calibrated `N₀` spectrum.
    pub fn invert(
        &self,
        psi: &MatrixField<f64>,
        calibration: &SpectralCalibration,
        opts: &PcgOptions,
    ) -> Result<Inversion> {
        let rhs = self.project(psi)?;
        self.invert_coeffs(rhs, calibration, opts)
    }

    pub fn invert_coeffs(
        &self,
        rhs: Vec<f64>,
        calibration: &SpectralCalibration,
        opts: &PcgOptions,
    ) -> Result<Inversion> {
        if calibration.c_hat.len() <= self.cfg.max_degree {
            return invalid("calibration does not cover the spectral cutoff");
        }
        let d = self.components();
        let inv_diag: Vec<f64> = (0..self.dim())
            .map(|i| 1.0 / calibration.c_hat[degree_order(i / d).0])
            .collect();
        let pre = |r: &[f64], z: &mut [f64]| {
            for i in 0..r.len() {
                z[i] = r[i] * inv_diag[i];
            }
        };
        let out = pcg(self, &pre, &rhs, opts)?;
        let psi_tilde = self.field_from_coeffs(&out.solution)?;
        Ok(Inversion {
            residual: *out.residual_history.last().unwrap_or(&0.0),
            iterations: out.iterations,
            residual_history: out.residual_history,
            coeffs: out.solution,
            rhs,
            psi_tilde,
        })
    }

    /// `π² ψ̃ᵀ G ψ̃ = ‖𝕀 ψ̃_λ‖²_λ` for `ψ̃_λ = π² ψ̃`.
    pub fn quadratic_variance(&self, coeffs: &[f64]) -> f64 {
        let g = self.apply(coeffs);
        PI * PI * g.iter().zip(coeffs).map(|(a, b)| a * b).sum::<f64>()
    }
}

impl LinearOperator<f64> for GalerkinNormal {
    fn dim(&self) -> usize {
        self.gram.n()
    }
    fn apply(&self, x: &[f64], y: &mut [f64]) {
        self.gram.matvec(x, y)
    }
}

/// Result of [`GalerkinNormal::invert`].
#[derive(Clone, Debug)]
pub struct Inversion {
    pub psi_tilde: MatrixField<f64>,
    pub coeffs: Vec<f64>,
    /// Projected right-hand side `Pψ`.
    pub rhs: Vec<f64>,
    pub iterations: usize,
    pub residual: f64,
    pub residual_history: Vec<f64>,
}

impl Inversion {
    /// `⟨ψ, ψ̃⟩_{L²}` in coefficient space.
    pub fn pairing(&self) -> f64 {
        self.rhs.iter().zip(&self.coeffs).map(|(a, b)| a * b).sum()
    }
}

/// Degrees on which the `N₀` calibration is checked.
pub const CALIBRATION_DEGREE: usize = 12;

/// Measured spectrum of `N₀` on the Zernike basis.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectralCalibration {
    pub max_degree: usize,
    /// `c_hat[n]`: eigenvalue of `N₀` on degree-`n` Zernike functions.
    pub c_hat: Vec<f64>,
    /// Largest relative off-diagonal column norm of the `N₀` Gram matrix
    /// over degrees `n ≤ 12`.
    pub leakage: f64,
    /// Same over all degrees up to `max_degree`.
    pub leakage_all: f64,
    /// `max_{n≤12} |c_hat(n)(n+1)/c_hat(0) − 1|`.
    pub spread: f64,
    /// `κ` in `𝓛N₀² = κ·id`, averaged over `n ≤ 10`.
    pub convention_constant: f64,
    /// `max_{n≤10} |λ_n c_hat(n)² / κ − 1|`.
    pub convention_spread: f64,
}

/// Assembles `N₀` for a scalar field and reads off its spectrum. Fails with
/// [`Error::Calibration`] if the leakage or the `1/(n+1)` spread exceed 1%
/// on degrees `n ≤ 12`.
pub fn calibrate_n0(cfg: &SpectralConfig) -> Result<SpectralCalibration> {
    let zero = MatrixField::<f64>::zero(Algebra::U(1));
    let g = GalerkinNormal::assemble(&zero, cfg, false)?;
    let gram = g.gram();
    let nz = g.dim();
    let m = cfg.max_degree;
    let mut c_hat = vec![0.0; m + 1];
    let mut leakage: f64 = 0.0;
    let mut leakage_all: f64 = 0.0;
    for n in 0..=m {
        let mut s = 0.0;
        for k in 0..=n {
            let i = index(n, k);
            s += gram.get(i, i);
            let off: f64 = (0..nz)
                .filter(|&j| j != i)
                .map(|j| gram.get(j, i).powi(2))
                .sum::<f64>()
                .sqrt();
            let rel = off / gram.get(i, i);
            leakage_all = leakage_all.max(rel);
            if n <= CALIBRATION_DEGREE {
                leakage = leakage.max(rel);
            }
        }
        c_hat[n] = s / (n + 1) as f64;
    }
    let spread = (0..=m.min(CALIBRATION_DEGREE))
        .map(|n| (c_hat[n] * (n + 1) as f64 / c_hat[0] - 1.0).abs())
        .fold(0.0, f64::max);
    let top = m.min(10);
    let kappas: Vec<f64> = (0..=top).map(|n| l_eigenvalue(n) * c_hat[n].powi(2)).collect();
    let kappa = kappas.iter().sum::<f64>() / kappas.len() as f64;
    let convention_spread = kappas.iter().map(|k| (k / kappa - 1.0).abs()).fold(0.0, f64::max);
    let cal = SpectralCalibration {
        max_degree: m,
        c_hat,
        leakage,
        leakage_all,
        spread,
        convention_constant: kappa,
        convention_spread,
    };
    if leakage > 0.01 || spread > 0.01 {
        return Err(Error::Calibration(format!(
            "N0 is not diagonal in the Zernike basis: leakage {leakage:.3e}, spread {spread:.3e}"
        )));
    }
    Ok(cal)
}

/// `N_{Φ0} ψ̃ = ψ` solved on the Zernike space of `cfg`.
pub fn invert_normal(
    phi0: &MatrixField<f64>,
    psi: &MatrixField<f64>,
    tol: f64,
    cfg: &SpectralConfig,
) -> Result<Inversion> {
    let cal = calibrate_n0(cfg)?;
    let g = GalerkinNormal::assemble(phi0, cfg, false)?;
    g.invert(psi, &cal, &PcgOptions { tol, max_iter: 200 })
}

/// `σ²_ψ = Σ_b λ_b ‖𝕀_{Φ0}(π² ψ̃)(b)‖²_F` evaluated by transport on a
/// boundary grid, independently of the Galerkin matrix.
pub fn asymptotic_variance(
    phi0: &MatrixField<f64>,
    psi_tilde: &MatrixField<f64>,
    grid: &BoundaryGrid,
    ctrl: &StepControl,
) -> Result<f64> {
    let beams = grid.beams::<f64>();
    let lin = linearized_forward(phi0, psi_tilde, &beams, ctrl)?;
    let w: f64 = grid.weight();
    Ok(PI.powi(4) * w * lin.iter().map(|m| m.frob_norm_sq()).sum::<f64>())
}

/// `⟨ψ, π²ψ̃⟩_{L²(M)}` by disk quadrature; equals `σ²_ψ` by duality.
pub fn variance_by_duality(psi: &MatrixField<f64>, psi_tilde: &MatrixField<f64>, quad: &DiskQuadrature<f64>) -> f64 {
    PI * PI * quad.integrate(|p| psi.eval(p).frob_dot(&psi_tilde.eval(p)))
}
