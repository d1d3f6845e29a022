//! Scattering data of matrix fields: the transport ODE `U̇ + Φ(γ(t)) U = 0`,
//! `U(τ) = Id` along each chord, integrating factors, attenuated X-ray
//! transforms and noisy dataset generation.

use std::io::{Read, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::field::MatrixField;
use crate::geometry::{BeamMeasure, BeamSample, MIN_EXIT_TIME};
use crate::lie::{expm_series, Algebra, CMat};
use crate::scalar::Real;

/// Time-stepping scheme for the transport ODE.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scheme {
    /// Exponential midpoint, second order.
    #[default]
    Midpoint,
    /// Two-exponential commutator-free scheme, fourth order.
    Cf4,
}

/// Step-size policy: `ceil(τ / h_max)` uniform steps per chord.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StepControl {
    pub h_max: f64,
    pub scheme: Scheme,
}

impl Default for StepControl {
    fn default() -> Self {
        Self {
            h_max: 0.01,
            scheme: Scheme::Midpoint,
        }
    }
}

impl StepControl {
    pub fn new(h_max: f64, scheme: Scheme) -> Result<Self> {
        if !(h_max > 0.0 && h_max.is_finite()) {
            return invalid(format!("h_max = {h_max} must be positive"));
        }
        Ok(Self { h_max, scheme })
    }

    pub fn steps_for<T: Real>(&self, tau: T) -> usize {
        ((tau.as_f64() / self.h_max).ceil() as usize).max(1)
    }
}

fn eval_checked<T: Real>(field: &MatrixField<T>, p: [T; 2]) -> Result<CMat<T>> {
    let m = field.eval(p);
    if m.is_finite() {
        Ok(m)
    } else {
        Err(Error::NonFinite(format!(
            "field evaluation at ({}, {})",
            p[0], p[1]
        )))
    }
}

#[inline]
fn group_exp<T: Real>(field: &MatrixField<T>, a: &CMat<T>) -> CMat<T> {
    if field.is_algebra_valued() {
        field.algebra().exp(a)
    } else {
        expm_series(a)
    }
}

/// Propagator `E` over `[t0, t1]` with `U(t0) = E·U(t1)`.
pub fn step_propagator<T: Real>(
    field: &MatrixField<T>,
    beam: &BeamSample<T>,
    t0: T,
    t1: T,
    scheme: Scheme,
) -> Result<CMat<T>> {
    let h = t1 - t0;
    match scheme {
        Scheme::Midpoint => {
            let a = eval_checked(field, beam.point_unchecked(t0 + h * T::lit(0.5)))?;
            Ok(group_exp(field, &a.scale(h)))
        }
        Scheme::Cf4 => {
            // in the reversed variable s = τ - t the nodes sit at t1 - c h
            let r3 = T::lit(3.0).sqrt();
            let c1 = T::lit(0.5) - r3 / T::lit(6.0);
            let c2 = T::lit(0.5) + r3 / T::lit(6.0);
            let a1 = (T::lit(3.0) - T::lit(2.0) * r3) / T::lit(12.0);
            let a2 = (T::lit(3.0) + T::lit(2.0) * r3) / T::lit(12.0);
            let f1 = eval_checked(field, beam.point_unchecked(t1 - c1 * h))?;
            let f2 = eval_checked(field, beam.point_unchecked(t1 - c2 * h))?;
            let first = group_exp(field, &f1.scale(a2 * h).axpy(a1 * h, &f2));
            let second = group_exp(field, &f1.scale(a1 * h).axpy(a2 * h, &f2));
            Ok(second * first)
        }
    }
}

/// `C_Φ(beam) = U(0)` with `n_steps` uniform steps.
pub fn scattering_datum<T: Real>(
    field: &MatrixField<T>,
    beam: &BeamSample<T>,
    n_steps: usize,
    scheme: Scheme,
) -> Result<CMat<T>> {
    if n_steps == 0 {
        return invalid("n_steps must be at least 1");
    }
    let h = beam.exit_time / T::from_count(n_steps);
    let mut u = CMat::identity(field.matrix_size());
    for k in (0..n_steps).rev() {
        let t0 = T::from_count(k) * h;
        u = step_propagator(field, beam, t0, t0 + h, scheme)? * u;
    }
    Ok(u)
}

/// `k·τ/n` for `k = 0..=n`.
pub fn uniform_times<T: Real>(tau: T, n_steps: usize) -> Vec<T> {
    let h = tau / T::from_count(n_steps);
    (0..=n_steps).map(|k| T::from_count(k) * h).collect()
}

fn check_times<T: Real>(beam: &BeamSample<T>, times: &[T]) -> Result<()> {
    if times.len() < 2 {
        return invalid("time grid needs at least two points");
    }
    let slack = T::lit(1e-12) * (T::one() + beam.exit_time);
    if times[0].abs() > slack || (times[times.len() - 1] - beam.exit_time).abs() > slack {
        return invalid("time grid must span [0, τ]");
    }
    if times.windows(2).any(|w| !(w[1] >= w[0])) {
        return invalid("time grid must be nondecreasing");
    }
    Ok(())
}

/// Solution `U(t_k)` of the transport ODE on a grid spanning `[0, τ]`.
pub fn transport_path<T: Real>(
    field: &MatrixField<T>,
    beam: &BeamSample<T>,
    times: &[T],
    scheme: Scheme,
) -> Result<Vec<CMat<T>>> {
    check_times(beam, times)?;
    let n = times.len();
    let mut path = vec![CMat::identity(field.matrix_size()); n];
    for k in (0..n - 1).rev() {
        let e = step_propagator(field, beam, times[k], times[k + 1], scheme)?;
        path[k] = e * path[k + 1];
    }
    Ok(path)
}

/// Integrating factor `u(t_k) = U(t_k) U(0)⁻¹`: `u̇ + Φu = 0`, `u(0) = Id`,
/// and `u(τ) = C_Φ⁻¹`. Stepped forward from the influx point with the
/// inverses of the transport propagators, so on a grid spanning `[0, τ]` it
/// agrees with the backward transport solution. The grid only needs to
/// start at `0`. The field must be skew-hermitian.
pub fn integrating_factor_path<T: Real>(
    field: &MatrixField<T>,
    beam: &BeamSample<T>,
    times: &[T],
    scheme: Scheme,
) -> Result<Vec<CMat<T>>> {
    if times.is_empty() || times[0].abs() > T::lit(1e-12) {
        return invalid("integrating factor grid must start at 0");
    }
    let mut path = Vec::with_capacity(times.len());
    path.push(CMat::identity(field.matrix_size()));
    for k in 0..times.len() - 1 {
        let e = step_propagator(field, beam, times[k], times[k + 1], scheme)?;
        let next = e.adjoint() * path[k];
        path.push(next);
    }
    Ok(path)
}

/// Grid on `[0, τ]` with `s` as a node: uniform pieces on `[0, s]` and
/// `[s, τ]` with steps at most `h_max`.
pub fn split_grid<T: Real>(s: T, tau: T, h_max: f64) -> Vec<T> {
    let n1 = ((s.as_f64() / h_max).ceil() as usize).max(1);
    let n2 = (((tau - s).as_f64() / h_max).ceil() as usize).max(1);
    let mut times = uniform_times(s, n1);
    let h2 = (tau - s) / T::from_count(n2);
    times.extend((1..=n2).map(|k| s + T::from_count(k) * h2));
    let last = times.len() - 1;
    times[last] = tau;
    times
}

/// Integrating factors of a pair of fields on a shared grid.
#[derive(Clone, Debug)]
pub struct IntegratingFactors<T> {
    pub times: Vec<T>,
    pub left: Vec<CMat<T>>,
    pub right: Vec<CMat<T>>,
}

pub fn integrating_factor<T: Real>(
    field_left: &MatrixField<T>,
    field_right: &MatrixField<T>,
    beam: &BeamSample<T>,
    n_steps: usize,
    scheme: Scheme,
) -> Result<IntegratingFactors<T>> {
    if n_steps == 0 {
        return invalid("n_steps must be at least 1");
    }
    let times = uniform_times(beam.exit_time, n_steps);
    check_times(beam, &times)?;
    let left = integrating_factor_path(field_left, beam, &times, scheme)?;
    let right = if std::ptr::eq(field_left, field_right) {
        left.clone()
    } else {
        integrating_factor_path(field_right, beam, &times, scheme)?
    };
    Ok(IntegratingFactors { times, left, right })
}

/// Trapezoid weights on a nondecreasing grid.
pub fn trapezoid_weights<T: Real>(times: &[T]) -> Vec<T> {
    let n = times.len();
    let mut w = vec![T::zero(); n];
    for k in 0..n - 1 {
        let half = (times[k + 1] - times[k]) * T::lit(0.5);
        w[k] = w[k] + half;
        w[k + 1] = w[k + 1] + half;
    }
    w
}

/// `∫₀^τ u_Φ⁻¹ h u_Ψ dt` by the trapezoid rule on the ODE grid.
pub fn attenuated_xray<T: Real>(
    phi: &MatrixField<T>,
    psi: &MatrixField<T>,
    h: &MatrixField<T>,
    beam: &BeamSample<T>,
    n_steps: usize,
    scheme: Scheme,
) -> Result<CMat<T>> {
    let f = integrating_factor(phi, psi, beam, n_steps, scheme)?;
    attenuated_from_factors(&f, h, beam)
}

/// Attenuated transform from precomputed integrating factors.
pub fn attenuated_from_factors<T: Real>(
    f: &IntegratingFactors<T>,
    h: &MatrixField<T>,
    beam: &BeamSample<T>,
) -> Result<CMat<T>> {
    let w = trapezoid_weights(&f.times);
    let mut acc = CMat::zeros(h.matrix_size());
    for k in 0..f.times.len() {
        let hk = eval_checked(h, beam.point_unchecked(f.times[k]))?;
        acc = acc.axpy(w[k], &(f.left[k].adjoint() * hk * f.right[k]));
    }
    Ok(acc)
}

/// Scattering data for each beam with `ceil(τ/h_max)` steps.
pub fn forward_map<T: Real>(
    field: &MatrixField<T>,
    beams: &[BeamSample<T>],
    ctrl: &StepControl,
) -> Result<Vec<CMat<T>>> {
    beams
        .iter()
        .map(|b| scattering_datum(field, b, ctrl.steps_for(b.exit_time), ctrl.scheme))
        .collect()
}

/// `N` beams with noisy scattering data `Y_i = C_Φ(X_i) + σ E_i`.
#[derive(Clone, Debug, PartialEq)]
pub struct ScatteringDataset {
    pub algebra: Algebra,
    pub beams: Vec<BeamSample<f64>>,
    pub measurements: Vec<CMat<f64>>,
    pub noise_sigma: f64,
    pub truth_tag: Option<String>,
}

#[derive(Serialize, Deserialize)]
struct BeamJson {
    boundary_angle: f64,
    direction_angle: f64,
}

#[derive(Serialize, Deserialize)]
struct DatasetJson {
    algebra: Algebra,
    sigma: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    truth_tag: Option<String>,
    beams: Vec<BeamJson>,
    measurements: Vec<Vec<[f64; 2]>>,
}

/// Adds `σ·N(0,1)` to every real degree of freedom of the matrix space:
/// real and imaginary parts for complex algebras, real parts for `so(n)`.
pub fn add_noise<R: Rng + ?Sized>(algebra: Algebra, m: &CMat<f64>, sigma: f64, rng: &mut R) -> CMat<f64> {
    let n = m.n();
    let mut out = *m;
    for i in 0..n {
        for j in 0..n {
            let mut z = out.get(i, j);
            z.re += sigma * rng.sample::<f64, _>(StandardNormal);
            if !algebra.is_real() {
                z.im += sigma * rng.sample::<f64, _>(StandardNormal);
            }
            out.set(i, j, z);
        }
    }
    out
}

/// Draws `n` beams from `λ` (resampling near-tangent ones), evaluates the
/// forward map and adds Gaussian noise. Deterministic in `seed`.
pub fn generate_dataset(
    field: &MatrixField<f64>,
    n: usize,
    sigma: f64,
    seed: u64,
    ctrl: &StepControl,
) -> Result<ScatteringDataset> {
    if n == 0 {
        return invalid("dataset needs at least one beam");
    }
    if !(sigma > 0.0 && sigma.is_finite()) {
        return invalid(format!("noise sigma {sigma} must be positive"));
    }
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let beams: Vec<BeamSample<f64>> = (0..n)
        .map(|_| loop {
            let b: BeamSample<f64> = BeamMeasure.sample(&mut rng);
            if b.exit_time >= MIN_EXIT_TIME {
                break b;
            }
        })
        .collect();
    let clean = forward_map(field, &beams, ctrl)?;
    let measurements = clean
        .iter()
        .map(|c| add_noise(field.algebra(), c, sigma, &mut rng))
        .collect();
    Ok(ScatteringDataset {
        algebra: field.algebra(),
        beams,
        measurements,
        noise_sigma: sigma,
        truth_tag: None,
    })
}

impl ScatteringDataset {
    pub fn new(
        algebra: Algebra,
        beams: Vec<BeamSample<f64>>,
        measurements: Vec<CMat<f64>>,
        noise_sigma: f64,
    ) -> Result<Self> {
        let ds = Self {
            algebra,
            beams,
            measurements,
            noise_sigma,
            truth_tag: None,
        };
        ds.validate()?;
        Ok(ds)
    }

    pub fn with_truth_tag(mut self, tag: impl Into<String>) -> Self {
        self.truth_tag = Some(tag.into());
        self
    }

    pub fn len(&self) -> usize {
        self.beams.len()
    }

    pub fn is_empty(&self) -> bool {
        self.beams.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        self.algebra.validate()?;
        if self.beams.len() != self.measurements.len() {
            return invalid(format!(
                "{} beams but {} measurements",
                self.beams.len(),
                self.measurements.len()
            ));
        }
        if !(self.noise_sigma > 0.0 && self.noise_sigma.is_finite()) {
            return invalid("noise sigma must be positive");
        }
        let n = self.algebra.matrix_size();
        if let Some(m) = self.measurements.iter().find(|m| m.n() != n || !m.is_finite()) {
            return Err(Error::NonFinite(format!(
                "measurement of size {} (expected {n}) or with non-finite entries",
                m.n()
            )));
        }
        Ok(())
    }

    /// Keeps the first `n` records.
    pub fn truncated(&self, n: usize) -> Self {
        let n = n.min(self.len());
        Self {
            algebra: self.algebra,
            beams: self.beams[..n].to_vec(),
            measurements: self.measurements[..n].to_vec(),
            noise_sigma: self.noise_sigma,
            truth_tag: self.truth_tag.clone(),
        }
    }

    pub fn to_json_string(&self) -> Result<String> {
        let j = DatasetJson {
            algebra: self.algebra,
            sigma: self.noise_sigma,
            truth_tag: self.truth_tag.clone(),
            beams: self
                .beams
                .iter()
                .map(|b| BeamJson {
                    boundary_angle: b.boundary_angle,
                    direction_angle: b.direction_angle,
                })
                .collect(),
            measurements: self.measurements.iter().map(|m| m.to_pairs()).collect(),
        };
        Ok(serde_json::to_string_pretty(&j)?)
    }

    pub fn write_json<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(self.to_json_string()?.as_bytes())?;
        Ok(())
    }

    pub fn read_json<R: Read>(r: R) -> Result<Self> {
        let j: DatasetJson = serde_json::from_reader(r)?;
        let n = j.algebra.matrix_size();
        let beams = j
            .beams
            .iter()
            .map(|b| BeamSample::new(b.boundary_angle, b.direction_angle))
            .collect::<Result<Vec<_>>>()?;
        let measurements = j
            .measurements
            .iter()
            .map(|p| CMat::from_pairs(n, p))
            .collect::<Result<Vec<_>>>()?;
        let ds = Self::new(j.algebra, beams, measurements, j.sigma)?;
        Ok(match j.truth_tag {
            Some(t) => ds.with_truth_tag(t),
            None => ds,
        })
    }

    /// Flat CSV: one row per matrix entry.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(["index", "boundary_angle", "direction_angle", "row", "col", "re", "im"])?;
        for (i, (b, m)) in self.beams.iter().zip(&self.measurements).enumerate() {
            for r in 0..m.n() {
                for c in 0..m.n() {
                    let z = m.get(r, c);
                    wr.write_record(&[
                        i.to_string(),
                        b.boundary_angle.to_string(),
                        b.direction_angle.to_string(),
                        r.to_string(),
                        c.to_string(),
                        z.re.to_string(),
                        z.im.to_string(),
                    ])?;
                }
            }
        }
        wr.flush()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{FnField, ScalarField};
    use crate::geometry::{make_beam, sample_beams};
    use num_complex::Complex;
    use std::sync::Arc;

    fn bump(cx: f64, cy: f64, amp: f64) -> impl Fn([f64; 2]) -> f64 + Send + Sync + 'static {
        move |p: [f64; 2]| {
            let r2 = (p[0] - cx).powi(2) + (p[1] - cy).powi(2);
            amp * (-4.0 * r2).exp() * (1.0 - p[0] * p[0] - p[1] * p[1])
        }
    }

    fn smooth_su2() -> MatrixField<f64> {
        MatrixField::in_algebra(
            Algebra::Su2,
            vec![
                Arc::new(FnField::new(bump(0.2, 0.1, 2.0))) as Arc<dyn ScalarField<f64>>,
                Arc::new(FnField::new(bump(-0.3, 0.2, 1.5))),
                Arc::new(FnField::new(bump(0.0, -0.4, -1.8))),
            ],
        )
        .unwrap()
    }

    #[test]
    fn zero_field_gives_identity() {
        let f = MatrixField::<f64>::zero(Algebra::Su2);
        let b = make_beam(0.3, 0.2).unwrap();
        let c = scattering_datum(&f, &b, 17, Scheme::Midpoint).unwrap();
        assert!((c - CMat::identity(2)).frob_norm() < 1e-15);
        assert!(scattering_datum(&f, &b, 0, Scheme::Midpoint).is_err());
    }

    #[test]
    fn constant_field_is_exact() {
        let coeffs = [0.7, -1.1, 0.4];
        let f = MatrixField::<f64>::constant(Algebra::Su2, &coeffs).unwrap();
        let a = Algebra::Su2.compose(&Algebra::Su2.basis(), &coeffs);
        let b = make_beam(1.0, -0.5).unwrap();
        let exact = expm_series(&a.scale(b.exit_time));
        for scheme in [Scheme::Midpoint, Scheme::Cf4] {
            let c = scattering_datum(&f, &b, 13, scheme).unwrap();
            assert!((c - exact).frob_norm() < 1e-13);
        }
    }

    #[test]
    fn scalar_case_is_classical_xray() {
        // Φ = i f: C = exp(i ∫ f dt) with sign fixed by U̇ = -ΦU, U(τ) = 1
        let f = MatrixField::<f64>::from_fns(Algebra::U(1), vec![bump(0.1, 0.2, 1.3)]).unwrap();
        let b = make_beam(0.4, 0.3).unwrap();
        let c = scattering_datum(&f, &b, 4000, Scheme::Cf4).unwrap();
        let g = bump(0.1, 0.2, 1.3);
        let n = 20000;
        let h = b.exit_time / n as f64;
        let integral: f64 = (0..n)
            .map(|k| g(b.point_unchecked((k as f64 + 0.5) * h)) * h)
            .sum();
        let z = c.get(0, 0);
        assert!((z.arg() - integral).abs() < 1e-8, "{} vs {}", z.arg(), integral);
    }

    #[test]
    fn group_constraint_and_orders() {
        let f = smooth_su2();
        let beams = sample_beams::<f64>(5, 3).unwrap();
        for b in &beams {
            let reference = scattering_datum(&f, b, 4000, Scheme::Cf4).unwrap();
            let e1 = (scattering_datum(&f, b, 40, Scheme::Midpoint).unwrap() - reference).frob_norm();
            let e2 = (scattering_datum(&f, b, 80, Scheme::Midpoint).unwrap() - reference).frob_norm();
            let c1 = (scattering_datum(&f, b, 20, Scheme::Cf4).unwrap() - reference).frob_norm();
            let c2 = (scattering_datum(&f, b, 40, Scheme::Cf4).unwrap() - reference).frob_norm();
            if e1 > 1e-9 {
                assert!(((e1 / e2).log2() - 2.0).abs() < 0.2, "midpoint ratio {}", e1 / e2);
            }
            if c1 > 1e-11 {
                assert!(((c1 / c2).log2() - 4.0).abs() < 0.4, "cf4 ratio {}", c1 / c2);
            }
            assert!(reference.unitarity_defect() < 1e-12);
        }
    }

    #[test]
    fn integrating_factor_boundary_values() {
        let f = smooth_su2();
        let b = make_beam(2.0, 0.1).unwrap();
        let fac = integrating_factor(&f, &f, &b, 100, Scheme::Midpoint).unwrap();
        assert!((fac.left[0] - CMat::identity(2)).frob_norm() < 1e-15);
        let c = scattering_datum(&f, &b, 100, Scheme::Midpoint).unwrap();
        assert!((fac.left[100] * c - CMat::identity(2)).frob_norm() < 1e-13);
        assert!(fac.left.iter().all(|u| u.unitarity_defect() < 1e-12));
        // u̇ = -Φu checked by central differences
        let k = 50;
        let h = fac.times[1] - fac.times[0];
        let du = (fac.left[k + 1] - fac.left[k - 1]).scale(0.5 / h);
        let rhs = -(f.eval(b.point_unchecked(fac.times[k])) * fac.left[k]);
        assert!((du - rhs).frob_norm() < 1e-3 * (1.0 + rhs.frob_norm()), "{}", (du - rhs).frob_norm());
    }

    #[test]
    fn attenuated_constant_and_pseudo_linearization() {
        let zero = MatrixField::<f64>::zero(Algebra::Su2);
        let coeffs = [0.2, 0.5, -0.1];
        let h = MatrixField::<f64>::constant(Algebra::Su2, &coeffs).unwrap();
        let b = make_beam(0.0, 0.6).unwrap();
        let v = attenuated_xray(&zero, &zero, &h, &b, 10, Scheme::Midpoint).unwrap();
        let a = Algebra::Su2.compose(&Algebra::Su2.basis(), &coeffs);
        assert!((v - a.scale(b.exit_time)).frob_norm() < 1e-14);

        let phi = smooth_su2();
        let psi = phi.scaled(0.5);
        let diff = phi.lin_comb(1.0, &psi, -1.0).unwrap();
        for n in [200, 400] {
            let cp = scattering_datum(&phi, &b, n, Scheme::Midpoint).unwrap();
            let cq = scattering_datum(&psi, &b, n, Scheme::Midpoint).unwrap();
            let i = attenuated_xray(&phi, &psi, &diff, &b, n, Scheme::Midpoint).unwrap();
            let res = (cp - cq - i * cq).frob_norm();
            assert!(res < 5e-4, "n = {n}: {res}");
        }
    }

    #[test]
    fn dataset_noise_and_round_trip() {
        let f = smooth_su2();
        let ctrl = StepControl::new(0.05, Scheme::Midpoint).unwrap();
        let ds = generate_dataset(&f, 2000, 0.1, 9, &ctrl).unwrap();
        let clean = forward_map(&f, &ds.beams, &ctrl).unwrap();
        let mut s = 0.0;
        let mut cnt = 0.0;
        for (y, c) in ds.measurements.iter().zip(&clean) {
            for z in (*y - *c).entries() {
                s += z.re * z.re + z.im * z.im;
                cnt += 2.0;
            }
        }
        assert!((s / cnt / 0.01 - 1.0).abs() < 0.05);
        let again = generate_dataset(&f, 2000, 0.1, 9, &ctrl).unwrap();
        assert_eq!(ds, again);
        let text = ds.to_json_string().unwrap();
        let back = ScatteringDataset::read_json(text.as_bytes()).unwrap();
        assert_eq!(back.len(), ds.len());
        for (a, b) in back.measurements.iter().zip(&ds.measurements) {
            assert_eq!(a, b);
        }
        let mut buf = Vec::new();
        ds.truncated(3).write_csv(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap().lines().count(), 1 + 3 * 4);
        assert!(generate_dataset(&f, 0, 0.1, 1, &ctrl).is_err());
        assert!(generate_dataset(&f, 1, 0.0, 1, &ctrl).is_err());
    }

    #[test]
    fn so3_noise_is_real() {
        let f = MatrixField::<f64>::zero(Algebra::So(3));
        let ctrl = StepControl::default();
        let ds = generate_dataset(&f, 5, 0.1, 1, &ctrl).unwrap();
        assert!(ds.measurements.iter().all(|m| m.entries().iter().all(|z| z.im == 0.0)));
        let _ = Complex::new(0.0, 0.0);
    }

    #[test]
    fn nan_field_is_reported() {
        let f = MatrixField::<f64>::from_fns(Algebra::U(1), vec![|_p: [f64; 2]| f64::NAN]).unwrap();
        let b = make_beam(0.0, 0.0).unwrap();
        assert!(matches!(
            scattering_datum(&f, &b, 4, Scheme::Midpoint),
            Err(Error::NonFinite(_))
        ));
    }
}
