//! Non-Abelian X-ray forward map for parameters given as P1 nodal values on
//! a disk mesh, with interpolation stencils precomputed per beam.

use std::sync::Arc;

use crate::error::{invalid, Result};
use crate::field::MatrixField;
use crate::geometry::BeamSample;
use crate::lie::{Algebra, CMat};
use crate::mcmc::{ForwardModel, Functional};
use crate::mesh::{Stencil, TriMesh};
use crate::transport::StepControl;

struct BeamPlan {
    h: f64,
    stencils: Vec<Stencil<f64>>,
}

/// Midpoint-rule scattering data of the field `Σ_j θ_j B_j`, where `θ_j` is
/// the `j`-th block of `n_nodes` entries of the parameter vector.
pub struct XrayModel {
    algebra: Algebra,
    basis: Vec<CMat<f64>>,
    mesh: Arc<TriMesh<f64>>,
    plans: Vec<BeamPlan>,
}

impl XrayModel {
    pub fn new(
        algebra: Algebra,
        mesh: Arc<TriMesh<f64>>,
        beams: &[BeamSample<f64>],
        ctrl: &StepControl,
    ) -> Result<Self> {
        algebra.validate()?;
        if beams.is_empty() {
            return invalid("forward model needs at least one beam");
        }
        let plans = beams
            .iter()
            .map(|b| {
                let n = ctrl.steps_for(b.exit_time);
                let h = b.exit_time / n as f64;
                let stencils = (0..n)
                    .map(|k| mesh.stencil(b.point_unchecked((k as f64 + 0.5) * h)))
                    .collect();
                BeamPlan { h, stencils }
            })
            .collect();
        Ok(Self {
            algebra,
            basis: algebra.basis(),
            mesh,
            plans,
        })
    }

    pub fn algebra(&self) -> Algebra {
        self.algebra
    }

    pub fn mesh(&self) -> &Arc<TriMesh<f64>> {
        &self.mesh
    }

    pub fn n_beams(&self) -> usize {
        self.plans.len()
    }

    /// Scattering matrices, one per beam.
    pub fn scattering(&self, theta: &[f64]) -> Result<Vec<CMat<f64>>> {
        let d = self.basis.len();
        let nn = self.mesh.n_nodes();
        if theta.len() != d * nn {
            return invalid("parameter vector has the wrong length");
        }
        let blocks: Vec<&[f64]> = theta.chunks(nn).collect();
        let out = self
            .plans
            .iter()
            .map(|plan| match self.algebra {
                Algebra::Su2 => su2_to_matrix(su2_product(plan, &blocks)),
                _ => {
                    let mut u = CMat::identity(self.algebra.matrix_size());
                    let mut c = vec![0.0; d];
                    for s in plan.stencils.iter().rev() {
                        for (cj, b) in c.iter_mut().zip(&blocks) {
                            *cj = s.apply(b) * plan.h;
                        }
                        u = self.algebra.exp(&self.algebra.compose(&self.basis, &c)) * u;
                    }
                    u
                }
            })
            .collect();
        Ok(out)
    }

    /// Nodal parameter vector of a field.
    pub fn parameters_of(&self, field: &MatrixField<f64>) -> Result<Vec<f64>> {
        mesh_parameters(&self.mesh, field)
    }

    pub fn functional(&self, name: &str, psi: &MatrixField<f64>) -> Result<Functional> {
        mesh_functional(&self.mesh, name, psi)
    }
}

/// `(w, v)` stands for `w·I + i v·σ`.
type Quat = (f64, [f64; 3]);

fn su2_product(plan: &BeamPlan, blocks: &[&[f64]]) -> Quat {
    let s = std::f64::consts::FRAC_1_SQRT_2 * plan.h;
    let mut u: Quat = (1.0, [0.0; 3]);
    for st in plan.stencils.iter().rev() {
        let v = [st.apply(blocks[0]) * s, st.apply(blocks[1]) * s, st.apply(blocks[2]) * s];
        let r = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
        let (c, k) = if r < 1e-8 {
            (1.0 - r * r / 2.0, 1.0 - r * r / 6.0)
        } else {
            let (sn, cs) = r.sin_cos();
            (cs, sn / r)
        };
        u = quat_mul((c, [k * v[0], k * v[1], k * v[2]]), u);
    }
    u
}

#[inline]
fn quat_mul(a: Quat, b: Quat) -> Quat {
    let (w1, v1) = a;
    let (w2, v2) = b;
    let dot = v1[0] * v2[0] + v1[1] * v2[1] + v1[2] * v2[2];
    let cross = [
        v1[1] * v2[2] - v1[2] * v2[1],
        v1[2] * v2[0] - v1[0] * v2[2],
        v1[0] * v2[1] - v1[1] * v2[0],
    ];
    (
        w1 * w2 - dot,
        [
            w1 * v2[0] + w2 * v1[0] - cross[0],
            w1 * v2[1] + w2 * v1[1] - cross[1],
            w1 * v2[2] + w2 * v1[2] - cross[2],
        ],
    )
}

fn su2_to_matrix((w, v): Quat) -> CMat<f64> {
    use num_complex::Complex;
    CMat::from_rows(
        2,
        &[
            Complex::new(w, v[2]),
            Complex::new(v[1], v[0]),
            Complex::new(-v[1], v[0]),
            Complex::new(w, -v[2]),
        ],
    )
}

/// Real and imaginary parts of all entries, row-major.
pub fn flatten_matrices(ms: &[CMat<f64>]) -> Vec<f64> {
    let mut out = Vec::new();
    for m in ms {
        for p in m.to_pairs() {
            out.extend_from_slice(&p);
        }
    }
    out
}

impl ForwardModel for XrayModel {
    fn n_params(&self) -> usize {
        self.basis.len() * self.mesh.n_nodes()
    }

    fn evaluate(&self, theta: &[f64]) -> Result<Vec<f64>> {
        Ok(flatten_matrices(&self.scattering(theta)?))
    }
}

/// Basis coefficients of `field` at the mesh nodes, component-major.
pub fn mesh_parameters(mesh: &TriMesh<f64>, field: &MatrixField<f64>) -> Result<Vec<f64>> {
    if !field.is_algebra_valued() {
        return invalid("parameter fields must take values in the Lie algebra");
    }
    let d = field.n_components();
    let nn = mesh.n_nodes();
    let mut out = vec![0.0; d * nn];
    for (k, p) in mesh.nodes().iter().enumerate() {
        for (j, c) in field.coeffs(*p).into_iter().enumerate() {
            out[j * nn + k] = c;
        }
    }
    Ok(out)
}

/// `θ ↦ ⟨Φ_θ, ψ⟩_{L²}` with the lumped mass matrix.
pub fn mesh_functional(mesh: &TriMesh<f64>, name: &str, psi: &MatrixField<f64>) -> Result<Functional> {
    let mass = mesh.lumped_mass();
    let mut weights = mesh_parameters(mesh, psi)?;
    let nn = mesh.n_nodes();
    for (i, w) in weights.iter_mut().enumerate() {
        *w *= mass[i % nn];
    }
    Ok(Functional {
        name: name.to_string(),
        weights,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::FnField;
    use crate::geometry::sample_beams;
    use crate::transport::{scattering_datum, Scheme};

    fn random_params(n: usize, seed: u64) -> Vec<f64> {
        use rand::Rng;
        use rand_chacha::rand_core::SeedableRng;
        let mut rng = rand_chacha::ChaCha20Rng::seed_from_u64(seed);
        (0..n).map(|_| rng.random_range(-2.0..2.0)).collect()
    }

    fn check_against_generic(algebra: Algebra) {
        let mesh = Arc::new(TriMesh::<f64>::disk(6).unwrap());
        let beams = sample_beams::<f64>(20, 5).unwrap();
        let ctrl = StepControl::new(0.05, Scheme::Midpoint).unwrap();
        let model = XrayModel::new(algebra, mesh.clone(), &beams, &ctrl).unwrap();
        let theta = random_params(model.n_params(), 1);
        let blocks: Vec<Vec<f64>> = theta.chunks(mesh.n_nodes()).map(|c| c.to_vec()).collect();
        let field = MatrixField::from_mesh(algebra, mesh.clone(), &blocks).unwrap();
        let fast = model.scattering(&theta).unwrap();
        for (b, c) in beams.iter().zip(&fast) {
            let reference = scattering_datum(&field, b, ctrl.steps_for(b.exit_time), Scheme::Midpoint).unwrap();
            assert!((*c - reference).frob_norm() < 1e-12, "{:?}", algebra);
            assert!(c.unitarity_defect() < 1e-12);
        }
        assert_eq!(model.evaluate(&theta).unwrap().len(), 2 * algebra.matrix_size().pow(2) * beams.len());
    }

    #[test]
    fn su2_fast_path_matches_generic_transport() {
        check_against_generic(Algebra::Su2);
    }

    #[test]
    fn generic_path_matches_transport() {
        check_against_generic(Algebra::So(3));
        check_against_generic(Algebra::U(2));
    }

    #[test]
    fn functional_matches_quadrature() {
        let mesh = TriMesh::<f64>::disk(12).unwrap();
        let f = MatrixField::in_algebra(
            Algebra::Su2,
            vec![
                Arc::new(FnField::new(|p: [f64; 2]| 1.0 - p[0] * p[0] - p[1] * p[1])),
                Arc::new(FnField::new(|_p: [f64; 2]| 0.0)),
                Arc::new(FnField::new(|p: [f64; 2]| p[0])),
            ],
        )
        .unwrap();
        let theta = mesh_parameters(&mesh, &f).unwrap();
        let ones = MatrixField::in_algebra(
            Algebra::Su2,
            vec![
                Arc::new(FnField::new(|_p: [f64; 2]| 1.0)),
                Arc::new(FnField::new(|_p: [f64; 2]| 0.0)),
                Arc::new(FnField::new(|_p: [f64; 2]| 0.0)),
            ],
        )
        .unwrap();
        let fun = mesh_functional(&mesh, "one", &ones).unwrap();
        // ∫ (1 − r²) = π/2
        assert!((fun.value(&theta) - std::f64::consts::FRAC_PI_2).abs() < 0.02);
    }
}
