//! Linearized forward map `𝕀_Φ h = I_{Θ(Φ,Φ)}(h) C_Φ`, its adjoint with
//! respect to the `(μ/τ) dΣ` measure on the influx boundary, the normal
//! operator `N_Φ = I*I` and the linearization remainder.
//!
//! On the unit disk `(μ/τ) dΣ = ½ dφ dϕ = π² λ`; inner products against
//! `λ` are therefore `1/π²` times those against `(μ/τ) dΣ`.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::field::MatrixField;
use crate::geometry::{chord_through, BeamSample};
use crate::lie::CMat;
use crate::scalar::Real;
use crate::transport::{
    attenuated_from_factors, forward_map, integrating_factor, integrating_factor_path, split_grid,
    trapezoid_weights, StepControl,
};

/// Tensor grid on `[0, 2π) × [−π/2, π/2]`: trapezoid nodes `φ_i = 2πi/n_φ`
/// and midpoint nodes `ϕ_j = −π/2 + (j+½)π/n_ϕ`, each with `λ`-weight
/// `1/(n_φ n_ϕ)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BoundaryGrid {
    pub n_phi: usize,
    pub n_vphi: usize,
}

impl Default for BoundaryGrid {
    fn default() -> Self {
        Self {
            n_phi: 128,
            n_vphi: 64,
        }
    }
}

impl BoundaryGrid {
    pub fn new(n_phi: usize, n_vphi: usize) -> Result<Self> {
        if n_phi == 0 || n_vphi == 0 {
            return invalid("boundary grid needs positive sizes");
        }
        Ok(Self { n_phi, n_vphi })
    }

    pub fn len(&self) -> usize {
        self.n_phi * self.n_vphi
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn refined(&self) -> Self {
        Self {
            n_phi: 2 * self.n_phi,
            n_vphi: 2 * self.n_vphi,
        }
    }

    pub fn weight<T: Real>(&self) -> T {
        T::one() / T::from_count(self.len())
    }

    pub fn angles<T: Real>(&self, idx: usize) -> (T, T) {
        let (i, j) = (idx / self.n_vphi, idx % self.n_vphi);
        let phi = T::lit(2.0) * T::PI() * T::from_count(i) / T::from_count(self.n_phi);
        let vphi = -T::FRAC_PI_2() + T::PI() * (T::from_count(j) + T::lit(0.5)) / T::from_count(self.n_vphi);
        (phi, vphi)
    }

    /// Beams in `φ`-major order.
    pub fn beams<T: Real>(&self) -> Vec<BeamSample<T>> {
        (0..self.len())
            .map(|k| {
                let (a, b) = self.angles(k);
                BeamSample::new(a, b).expect("grid angles in range")
            })
            .collect()
    }
}

/// A matrix-valued function on the influx boundary.
pub trait BoundaryFunction<T: Real>: Send + Sync {
    fn matrix_size(&self) -> usize;
    fn eval(&self, beam: &BeamSample<T>) -> CMat<T>;
}

/// Closure-backed boundary function of `(φ, ϕ)`.
pub struct FnBoundary<T, F> {
    n: usize,
    f: F,
    _t: std::marker::PhantomData<T>,
}

impl<T: Real, F: Fn(T, T) -> CMat<T> + Send + Sync> FnBoundary<T, F> {
    pub fn new(n: usize, f: F) -> Self {
        Self {
            n,
            f,
            _t: std::marker::PhantomData,
        }
    }
}

impl<T: Real, F: Fn(T, T) -> CMat<T> + Send + Sync> BoundaryFunction<T> for FnBoundary<T, F> {
    fn matrix_size(&self) -> usize {
        self.n
    }
    fn eval(&self, beam: &BeamSample<T>) -> CMat<T> {
        (self.f)(beam.boundary_angle, beam.direction_angle)
    }
}

/// Values on a [`BoundaryGrid`], bilinearly interpolated (periodic in `φ`,
/// clamped beyond the outermost `ϕ` nodes).
#[derive(Clone, Debug, PartialEq)]
pub struct BoundaryMatrixFunction<T> {
    pub grid: BoundaryGrid,
    pub n: usize,
    pub values: Vec<CMat<T>>,
}

#[derive(Serialize, Deserialize)]
struct BoundaryJson {
    grid: BoundaryGrid,
    n: usize,
    values: Vec<Vec<[f64; 2]>>,
}

impl<T: Real> BoundaryMatrixFunction<T> {
    pub fn new(grid: BoundaryGrid, n: usize, values: Vec<CMat<T>>) -> Result<Self> {
        if values.len() != grid.len() {
            return invalid(format!("{} values for a grid of {}", values.len(), grid.len()));
        }
        Ok(Self { grid, n, values })
    }

    pub fn from_fn(grid: BoundaryGrid, n: usize, f: impl Fn(&BeamSample<T>) -> CMat<T>) -> Self {
        let values = grid.beams().iter().map(f).collect();
        Self { grid, n, values }
    }

    /// `∫ Re tr(A B*) dλ` on the grid.
    pub fn inner_lambda(&self, other: &Self) -> T {
        let w: T = self.grid.weight();
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| a.frob_dot(b))
            .sum::<T>()
            * w
    }

    pub fn norm_sq_lambda(&self) -> T {
        self.inner_lambda(self)
    }

    pub fn to_json_string(&self) -> Result<String> {
        let j = BoundaryJson {
            grid: self.grid,
            n: self.n,
            values: self.values.iter().map(|m| m.to_pairs()).collect(),
        };
        Ok(serde_json::to_string(&j)?)
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        let j: BoundaryJson = serde_json::from_str(s)?;
        let values = j
            .values
            .iter()
            .map(|p| CMat::<f64>::from_pairs(j.n, p).map(|m| cast_mat(&m)))
            .collect::<Result<Vec<_>>>()?;
        Self::new(j.grid, j.n, values)
    }
}

fn cast_mat<T: Real>(m: &CMat<f64>) -> CMat<T> {
    let e: Vec<num_complex::Complex<T>> = m
        .entries()
        .iter()
        .map(|z| num_complex::Complex::new(T::lit(z.re), T::lit(z.im)))
        .collect();
    CMat::from_rows(m.n(), &e)
}

impl<T: Real> BoundaryFunction<T> for BoundaryMatrixFunction<T> {
    fn matrix_size(&self) -> usize {
        self.n
    }

    fn eval(&self, beam: &BeamSample<T>) -> CMat<T> {
        let g = self.grid;
        let two_pi = T::lit(2.0) * T::PI();
        let mut phi = beam.boundary_angle % two_pi;
        if phi < T::zero() {
            phi = phi + two_pi;
        }
        let fi = (phi / two_pi * T::from_count(g.n_phi)).as_f64();
        let i0 = (fi.floor() as usize) % g.n_phi;
        let ti = T::lit(fi - fi.floor());
        let i1 = (i0 + 1) % g.n_phi;
        let fj = ((beam.direction_angle + T::FRAC_PI_2()) / T::PI() * T::from_count(g.n_vphi)).as_f64() - 0.5;
        let fj = fj.clamp(0.0, (g.n_vphi - 1) as f64);
        let j0 = (fj.floor() as usize).min(g.n_vphi.saturating_sub(2));
        let j1 = (j0 + 1).min(g.n_vphi - 1);
        let tj = T::lit(fj - j0 as f64);
        let v = |i: usize, j: usize| self.values[i * g.n_vphi + j];
        let lo = v(i0, j0).scale(T::one() - ti).axpy(ti, &v(i1, j0));
        let hi = v(i0, j1).scale(T::one() - ti).axpy(ti, &v(i1, j1));
        lo.scale(T::one() - tj).axpy(tj, &hi)
    }
}

/// `𝕀_{Φ0}(h)` on each beam.
pub fn linearized_forward<T: Real>(
    phi0: &MatrixField<T>,
    h: &MatrixField<T>,
    beams: &[BeamSample<T>],
    ctrl: &StepControl,
) -> Result<Vec<CMat<T>>> {
    beams
        .iter()
        .map(|b| {
            let n = ctrl.steps_for(b.exit_time);
            let f = integrating_factor(phi0, phi0, b, n, ctrl.scheme)?;
            let c = f.left[n].adjoint();
            Ok(attenuated_from_factors(&f, h, b)? * c)
        })
        .collect()
}

/// `I_{Θ(Φ0,Φ0)}(h)` on each beam (without the trailing `C_Φ`).
pub fn attenuated_transform<T: Real>(
    phi0: &MatrixField<T>,
    h: &MatrixField<T>,
    beams: &[BeamSample<T>],
    ctrl: &StepControl,
) -> Result<Vec<CMat<T>>> {
    beams
        .iter()
        .map(|b| {
            let n = ctrl.steps_for(b.exit_time);
            let f = integrating_factor(phi0, phi0, b, n, ctrl.scheme)?;
            attenuated_from_factors(&f, h, b)
        })
        .collect()
}

/// Angular quadrature and step policy for pointwise adjoint and normal
/// operator evaluation.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct InteriorQuadrature {
    pub n_dirs: usize,
    pub step: StepControl,
    /// Points farther from the origin are rejected.
    pub max_radius: f64,
}

impl Default for InteriorQuadrature {
    fn default() -> Self {
        Self {
            n_dirs: 256,
            step: StepControl::default(),
            max_radius: 1.0 - 1e-3,
        }
    }
}

impl InteriorQuadrature {
    fn check(&self, x: [f64; 2]) -> Result<()> {
        if self.n_dirs < 8 {
            return invalid(format!("n_dirs = {} below 8", self.n_dirs));
        }
        if x[0].hypot(x[1]) > self.max_radius {
            return Err(Error::OutsideDisk(x));
        }
        Ok(())
    }

    fn direction<T: Real>(&self, j: usize) -> [T; 2] {
        let a = T::lit(2.0) * T::PI() * T::from_count(j) / T::from_count(self.n_dirs);
        [a.cos(), a.sin()]
    }
}

/// `I*_Θ h(x) = ∫_{S_x} u(x,v) [(h/τ)∘ψ(x,v)] u(x,v)⁻¹ dv` for `Θ = Θ(Φ0,Φ0)`,
/// the adjoint with respect to `(μ/τ) dΣ` and `L²(M)`.
pub fn adjoint_apply<T: Real>(
    phi0: &MatrixField<T>,
    h: &dyn BoundaryFunction<T>,
    x: [T; 2],
    quad: &InteriorQuadrature,
) -> Result<CMat<T>> {
    quad.check([x[0].as_f64(), x[1].as_f64()])?;
    let dv = T::lit(2.0) * T::PI() / T::from_count(quad.n_dirs);
    let mut acc = CMat::zeros(phi0.matrix_size());
    for j in 0..quad.n_dirs {
        let v = quad.direction(j);
        let chord = chord_through(x, v)?;
        let foot = chord.footpoint;
        let s = chord.backward_time;
        let n1 = ((s.as_f64() / quad.step.h_max).ceil() as usize).max(1);
        let times = crate::transport::uniform_times(s, n1);
        let u = *integrating_factor_path(phi0, &foot, &times, quad.step.scheme)?
            .last()
            .expect("nonempty path");
        let hv = h.eval(&foot).scale(T::one() / foot.exit_time);
        acc = acc.axpy(dv, &(u * hv * u.adjoint()));
    }
    Ok(acc)
}

/// `N_{Φ0} f` at each point: for every direction through `x`, the attenuated
/// transform along the full chord divided by its length, conjugated back to
/// `x`.
pub fn normal_apply<T: Real>(
    phi0: &MatrixField<T>,
    f: &MatrixField<T>,
    points: &[[T; 2]],
    quad: &InteriorQuadrature,
) -> Result<Vec<CMat<T>>> {
    points
        .iter()
        .map(|&x| normal_apply_at(phi0, f, x, quad))
        .collect()
}

fn normal_apply_at<T: Real>(
    phi0: &MatrixField<T>,
    f: &MatrixField<T>,
    x: [T; 2],
    quad: &InteriorQuadrature,
) -> Result<CMat<T>> {
    quad.check([x[0].as_f64(), x[1].as_f64()])?;
    let dv = T::lit(2.0) * T::PI() / T::from_count(quad.n_dirs);
    let mut acc = CMat::zeros(phi0.matrix_size());
    for j in 0..quad.n_dirs {
        let v = quad.direction(j);
        let chord = chord_through(x, v)?;
        let foot = chord.footpoint;
        let times = split_grid(chord.backward_time, foot.exit_time, quad.step.h_max);
        let n1 = ((chord.backward_time.as_f64() / quad.step.h_max).ceil() as usize).max(1);
        let u = integrating_factor_path(phi0, &foot, &times, quad.step.scheme)?;
        let w = trapezoid_weights(&times);
        let mut line = CMat::zeros(phi0.matrix_size());
        for k in 0..times.len() {
            let fk = f.eval(foot.point_unchecked(times[k]));
            line = line.axpy(w[k], &(u[k].adjoint() * fk * u[k]));
        }
        let ux = u[n1];
        let val = ux * line * ux.adjoint();
        acc = acc.axpy(dv / foot.exit_time, &val);
    }
    Ok(acc)
}

/// `(mean_b ‖C_{Φ0+h} − C_{Φ0} − 𝕀_{Φ0}(h)‖²_F)^{1/2}` over the beams, a
/// Monte Carlo estimate of the `L²(λ)` norm when the beams are λ-distributed.
pub fn remainder_norm<T: Real>(
    phi0: &MatrixField<T>,
    h: &MatrixField<T>,
    beams: &[BeamSample<T>],
    ctrl: &StepControl,
) -> Result<T> {
    if beams.is_empty() {
        return invalid("remainder_norm needs beams");
    }
    let sum = phi0.lin_comb(T::one(), h, T::one())?;
    let c1 = forward_map(&sum, beams, ctrl)?;
    let c0 = forward_map(phi0, beams, ctrl)?;
    let lin = linearized_forward(phi0, h, beams, ctrl)?;
    let total: T = c1
        .iter()
        .zip(&c0)
        .zip(&lin)
        .map(|((a, b), l)| (*a - *b - *l).frob_norm_sq())
        .sum();
    Ok((total / T::from_count(beams.len())).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{FnField, ScalarField};
    use crate::geometry::sample_beams;
    use crate::lie::Algebra;
    use crate::transport::Scheme;
    use crate::zernike::DiskQuadrature;
    use std::f64::consts::PI;
    use std::sync::Arc;

    fn poly_bump(cx: f64, cy: f64, r: f64, amp: f64) -> impl Fn([f64; 2]) -> f64 + Send + Sync + 'static {
        move |p: [f64; 2]| {
            let s = 1.0 - ((p[0] - cx).powi(2) + (p[1] - cy).powi(2)) / (r * r);
            if s > 0.0 {
                amp * s.powi(4)
            } else {
                0.0
            }
        }
    }

    fn field(parts: [(f64, f64, f64, f64); 3]) -> MatrixField<f64> {
        MatrixField::in_algebra(
            Algebra::Su2,
            parts
                .iter()
                .map(|&(a, b, c, d)| Arc::new(FnField::new(poly_bump(a, b, c, d))) as Arc<dyn ScalarField<f64>>)
                .collect(),
        )
        .unwrap()
    }

    fn phi0() -> MatrixField<f64> {
        field([(0.2, 0.1, 0.6, 1.5), (-0.2, 0.2, 0.5, -1.2), (0.0, -0.3, 0.5, 1.0)])
    }

    fn coarse(n_dirs: usize, h: f64) -> InteriorQuadrature {
        InteriorQuadrature {
            n_dirs,
            step: StepControl::new(h, Scheme::Midpoint).unwrap(),
            max_radius: 0.999,
        }
    }

    #[test]
    fn grid_weights_sum_to_one() {
        let g = BoundaryGrid::new(16, 8).unwrap();
        let s: f64 = (0..g.len()).map(|_| g.weight::<f64>()).sum();
        assert!((s - 1.0).abs() < 1e-14);
        assert_eq!(g.beams::<f64>().len(), 128);
    }

    #[test]
    fn zero_background_gives_plain_xray_and_linearity() {
        let zero = MatrixField::<f64>::zero(Algebra::Su2);
        let h = phi0();
        let beams = sample_beams::<f64>(10, 1).unwrap();
        let ctrl = StepControl::default();
        let lin = linearized_forward(&zero, &h, &beams, &ctrl).unwrap();
        let plain = attenuated_transform(&zero, &h, &beams, &ctrl).unwrap();
        for (a, b) in lin.iter().zip(&plain) {
            assert!((*a - *b).frob_norm() < 1e-14);
        }
        let g = field([(0.0, 0.0, 0.7, 1.0), (0.3, 0.0, 0.4, 0.5), (0.0, 0.3, 0.4, -0.5)]);
        let combo = h.lin_comb(0.7, &g, -1.3).unwrap();
        let p0 = phi0();
        let l1 = linearized_forward(&p0, &h, &beams, &ctrl).unwrap();
        let l2 = linearized_forward(&p0, &g, &beams, &ctrl).unwrap();
        let l3 = linearized_forward(&p0, &combo, &beams, &ctrl).unwrap();
        for k in 0..beams.len() {
            let expect = l1[k].scale(0.7).axpy(-1.3, &l2[k]);
            assert!((l3[k] - expect).frob_norm() < 1e-10);
        }
    }

    #[test]
    fn adjoint_of_constant_at_center() {
        let zero = MatrixField::<f64>::zero(Algebra::U(1));
        let c = 0.7;
        let h = FnBoundary::new(1, move |_: f64, _: f64| CMat::from_real_rows(1, &[c]));
        let v = adjoint_apply(&zero, &h, [0.0, 0.0], &coarse(64, 0.05)).unwrap();
        assert!((v.get(0, 0).re - PI * c).abs() < 1e-12);
        assert!(adjoint_apply(&zero, &h, [1.0, 0.0], &coarse(64, 0.05)).is_err());
        assert!(adjoint_apply(&zero, &h, [0.0, 0.0], &coarse(4, 0.05)).is_err());
    }

    #[test]
    fn adjoint_output_stays_in_algebra() {
        let p0 = phi0();
        let basis = Algebra::Su2.basis::<f64>();
        let b2 = basis.clone();
        let h = FnBoundary::new(2, move |a: f64, b: f64| {
            b2[0].scale(a.cos() * b.cos()).axpy((2.0 * a).sin(), &b2[1]).axpy(b, &b2[2])
        });
        let v = adjoint_apply(&p0, &h, [0.2, -0.3], &coarse(64, 0.02)).unwrap();
        let perp = crate::lie::project_algebra(Algebra::Su2, &v, crate::lie::Part::Complement);
        assert!(perp.frob_norm() < 1e-12 * v.frob_norm().max(1.0));
    }

    #[test]
    fn adjoint_identity_on_small_grid() {
        let p0 = phi0();
        let f = field([(0.1, 0.0, 0.7, 1.0), (0.0, 0.2, 0.5, 0.8), (-0.2, -0.1, 0.6, -0.6)]);
        let basis = Algebra::Su2.basis::<f64>();
        let b2 = basis.clone();
        let h = FnBoundary::new(2, move |a: f64, b: f64| {
            b2[0].scale((a + b).cos()).axpy(b.sin() * a.sin(), &b2[1]).axpy(0.5, &b2[2])
        });
        let grid = BoundaryGrid::new(64, 48).unwrap();
        let ctrl = StepControl::new(0.02, Scheme::Midpoint).unwrap();
        let beams = grid.beams::<f64>();
        let if_ = attenuated_transform(&p0, &f, &beams, &ctrl).unwrap();
        let lhs: f64 = beams
            .iter()
            .zip(&if_)
            .map(|(b, v)| v.frob_dot(&h.eval(b)))
            .sum::<f64>()
            * grid.weight::<f64>()
            * PI
            * PI;
        let quad = DiskQuadrature::<f64>::new(14, 32).unwrap();
        let iq = coarse(48, 0.02);
        let mut rhs = 0.0;
        for (p, w) in quad.points.iter().zip(&quad.weights) {
            let fx = f.eval(*p);
            if fx.frob_norm() == 0.0 {
                continue;
            }
            rhs += w * fx.frob_dot(&adjoint_apply(&p0, &h, *p, &iq).unwrap());
        }
        let rel = (lhs - rhs).abs() / lhs.abs();
        assert!(rel < 1e-2, "lhs {lhs} rhs {rhs} rel {rel}");
    }

    #[test]
    fn normal_of_constant_at_center_is_two_pi() {
        let zero = MatrixField::<f64>::zero(Algebra::U(1));
        let one = MatrixField::<f64>::constant(Algebra::U(1), &[1.0]).unwrap();
        let v = normal_apply(&zero, &one, &[[0.0, 0.0], [0.5, 0.3]], &coarse(64, 0.05)).unwrap();
        let i = one.eval([0.0, 0.0]).get(0, 0);
        for m in v {
            assert!((m.get(0, 0) - i.scale(2.0 * PI)).norm() < 1e-10);
        }
    }

    #[test]
    fn remainder_is_quadratic() {
        let p0 = phi0();
        let h0 = field([(0.0, 0.0, 0.8, 1.0), (0.2, -0.2, 0.5, 1.0), (-0.3, 0.1, 0.5, 1.0)]);
        let beams = sample_beams::<f64>(40, 4).unwrap();
        let ctrl = StepControl::new(0.02, Scheme::Midpoint).unwrap();
        let r1 = remainder_norm(&p0, &h0.scaled(0.02), &beams, &ctrl).unwrap();
        let r2 = remainder_norm(&p0, &h0.scaled(0.01), &beams, &ctrl).unwrap();
        assert!((r1 / r2 - 4.0).abs() < 0.5, "{}", r1 / r2);
        let r0 = remainder_norm(&p0, &h0.scaled(0.0), &beams, &ctrl).unwrap();
        assert!(r0 < 1e-14);
    }

    #[test]
    fn boundary_function_json_and_interpolation() {
        let grid = BoundaryGrid::new(32, 16).unwrap();
        let basis = Algebra::Su2.basis::<f64>();
        let f = BoundaryMatrixFunction::from_fn(grid, 2, |b: &BeamSample<f64>| {
            basis[0].scale(b.boundary_angle.cos()).axpy(b.direction_angle, &basis[2])
        });
        let back = BoundaryMatrixFunction::<f64>::from_json_str(&f.to_json_string().unwrap()).unwrap();
        assert_eq!(back, f);
        let beam = BeamSample::new(0.77, 0.31).unwrap();
        let exact = basis[0].scale(0.77f64.cos()).axpy(0.31, &basis[2]);
        assert!((f.eval(&beam) - exact).frob_norm() < 5e-3);
    }
}
