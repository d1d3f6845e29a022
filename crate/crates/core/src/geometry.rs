//! Fan-beam parametrization of lines through the unit disk.
//!
//! A line entering the disk is described by the boundary angle `φ` of its
//! entry point and the angle `ϕ ∈ [-π/2, π/2]` between its direction and the
//! inward normal. The direction is `cos ϕ·(-x) + sin ϕ·(-x)⊥` with
//! `(a, b)⊥ = (-b, a)`, which simplifies to `-(cos(φ+ϕ), sin(φ+ϕ))` and gives
//! the exit time `τ = -2 x·v = 2 cos ϕ`.

use std::io::{Read, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::scalar::Real;

/// Beams shorter than this are treated as tangent and resampled when data
/// are generated.
pub const MIN_EXIT_TIME: f64 = 1e-9;

#[inline]
pub(crate) fn dot<T: Real>(a: [T; 2], b: [T; 2]) -> T {
    a[0] * b[0] + a[1] * b[1]
}

#[inline]
pub(crate) fn norm<T: Real>(a: [T; 2]) -> T {
    a[0].hypot(a[1])
}

/// One influx-boundary point `(x, v) ∈ ∂₊SM` in fan-beam coordinates.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BeamSample<T> {
    pub boundary_angle: T,
    pub direction_angle: T,
    pub entry_point: [T; 2],
    pub direction: [T; 2],
    pub exit_time: T,
}

impl<T: Real> BeamSample<T> {
    /// Builds a beam from its fan-beam angles.
    pub fn new(boundary_angle: T, direction_angle: T) -> Result<Self> {
        let half_pi = T::FRAC_PI_2();
        // allow a few ulps of slack so that angles recovered from footpoints pass
        let slack = T::tiny();
        if !(direction_angle >= -half_pi - slack && direction_angle <= half_pi + slack) {
            return invalid(format!(
                "direction angle {direction_angle} outside [-π/2, π/2]"
            ));
        }
        let direction_angle = direction_angle.max(-half_pi).min(half_pi);
        let (s, c) = boundary_angle.sin_cos();
        let (sd, cd) = (boundary_angle + direction_angle).sin_cos();
        Ok(Self {
            boundary_angle,
            direction_angle,
            entry_point: [c, s],
            direction: [-cd, -sd],
            exit_time: T::lit(2.0) * direction_angle.cos(),
        })
    }

    /// `γ(t) = x + t v` for `t ∈ [0, τ]`.
    pub fn point_along(&self, t: T) -> Result<[T; 2]> {
        let slack = T::tiny() * (T::one() + self.exit_time);
        if !(t >= -slack && t <= self.exit_time + slack) {
            return invalid(format!("t = {t} outside [0, {}]", self.exit_time));
        }
        Ok(self.point_unchecked(t))
    }

    #[inline]
    pub(crate) fn point_unchecked(&self, t: T) -> [T; 2] {
        [
            self.entry_point[0] + t * self.direction[0],
            self.entry_point[1] + t * self.direction[1],
        ]
    }

    pub fn to_f64(&self) -> BeamSample<f64> {
        BeamSample::new(self.boundary_angle.as_f64(), self.direction_angle.as_f64())
            .expect("valid beam stays valid")
    }
}

/// Free-function form of [`BeamSample::new`].
pub fn make_beam<T: Real>(boundary_angle: T, direction_angle: T) -> Result<BeamSample<T>> {
    BeamSample::new(boundary_angle, direction_angle)
}

/// Free-function form of [`BeamSample::point_along`].
pub fn point_along<T: Real>(beam: &BeamSample<T>, t: T) -> Result<[T; 2]> {
    beam.point_along(t)
}

/// The probability measure `λ = dφ dϕ / (2π²)` on `[0, 2π) × [-π/2, π/2]`.
#[derive(Clone, Copy, Debug, Default)]
pub struct BeamMeasure;

impl BeamMeasure {
    pub fn density<T: Real>(&self) -> T {
        T::one() / (T::lit(2.0) * T::PI() * T::PI())
    }

    pub fn total_mass<T: Real>(&self) -> T {
        self.density::<T>() * T::lit(2.0) * T::PI() * T::PI()
    }

    /// Ratio between the `(μ/τ) dΣ` measure used by the adjoint and `λ`.
    /// On the unit disk `μ/τ = 1/2`, so `(μ/τ) dΣ = π² λ`.
    pub fn mu_over_tau_mass<T: Real>(&self) -> T {
        T::PI() * T::PI()
    }

    pub fn sample<T: Real, R: Rng + ?Sized>(&self, rng: &mut R) -> BeamSample<T> {
        let phi: f64 = rng.random::<f64>() * std::f64::consts::TAU;
        let vphi: f64 = (rng.random::<f64>() - 0.5) * std::f64::consts::PI;
        BeamSample::new(T::lit(phi), T::lit(vphi)).expect("sampled angles in range")
    }
}

/// Draws `n` i.i.d. beams from `λ` using the supplied generator.
pub fn sample_beams_with<T: Real, R: Rng + ?Sized>(rng: &mut R, n: usize) -> Vec<BeamSample<T>> {
    (0..n).map(|_| BeamMeasure.sample(rng)).collect()
}

/// Draws `n` i.i.d. beams from `λ`; deterministic in `seed`.
pub fn sample_beams<T: Real>(n: usize, seed: u64) -> Result<Vec<BeamSample<T>>> {
    if n == 0 {
        return invalid("sample_beams needs n >= 1");
    }
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    Ok(sample_beams_with(&mut rng, n))
}

/// The full chord through an interior phase-space point.
#[derive(Clone, Copy, Debug)]
pub struct Chord<T> {
    /// `τ(x, -v)`: time from the footpoint to `x`.
    pub backward_time: T,
    /// `τ(x, v)`: time from `x` to the exit point.
    pub forward_time: T,
    /// The influx-boundary parametrization `ψ(x, v)` of the chord.
    pub footpoint: BeamSample<T>,
}

impl<T: Real> Chord<T> {
    pub fn length(&self) -> T {
        self.backward_time + self.forward_time
    }
}

/// Footpoint map and exit times for `(x, v)` with `|x| < 1`, `|v| = 1`.
pub fn chord_through<T: Real>(x: [T; 2], v: [T; 2]) -> Result<Chord<T>> {
    let r2 = dot(x, x);
    if !(r2 < T::one()) {
        return Err(Error::OutsideDisk([x[0].as_f64(), x[1].as_f64()]));
    }
    let nv = norm(v);
    if (nv - T::one()).abs() > T::lit(1e-8).max(T::tiny()) {
        return invalid(format!("direction has norm {nv}, expected 1"));
    }
    let v = [v[0] / nv, v[1] / nv];
    let xv = dot(x, v);
    let disc = (xv * xv + T::one() - r2).sqrt();
    let forward_time = -xv + disc;
    let backward_time = xv + disc;
    let foot = [x[0] - backward_time * v[0], x[1] - backward_time * v[1]];
    let boundary_angle = foot[1].atan2(foot[0]);
    let mut direction_angle = (-v[1]).atan2(-v[0]) - boundary_angle;
    let two_pi = T::lit(2.0) * T::PI();
    while direction_angle > T::PI() {
        direction_angle = direction_angle - two_pi;
    }
    while direction_angle < -T::PI() {
        direction_angle = direction_angle + two_pi;
    }
    let footpoint = BeamSample::new(boundary_angle, direction_angle)?;
    Ok(Chord {
        backward_time,
        forward_time,
        footpoint,
    })
}

#[derive(Serialize, Deserialize)]
struct BeamRow {
    boundary_angle: f64,
    direction_angle: f64,
}

/// Writes beams as CSV with columns `boundary_angle,direction_angle`.
pub fn write_beams_csv<T: Real, W: Write>(beams: &[BeamSample<T>], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for b in beams {
        w.serialize(BeamRow {
            boundary_angle: b.boundary_angle.as_f64(),
            direction_angle: b.direction_angle.as_f64(),
        })?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_beams_csv<T: Real, R: Read>(reader: R) -> Result<Vec<BeamSample<T>>> {
    let mut r = csv::Reader::from_reader(reader);
    r.deserialize::<BeamRow>()
        .map(|row| {
            let row = row?;
            BeamSample::new(T::lit(row.boundary_angle), T::lit(row.direction_angle))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::{FRAC_PI_2, PI};

    #[test]
    fn diametral_and_tangent_beams() {
        let b = make_beam(0.0f64, 0.0).unwrap();
        assert!((b.entry_point[0] - 1.0).abs() < 1e-15 && b.entry_point[1].abs() < 1e-15);
        assert!((b.direction[0] + 1.0).abs() < 1e-15 && b.direction[1].abs() < 1e-15);
        assert!((b.exit_time - 2.0).abs() < 1e-15);
        let t = make_beam(0.0, FRAC_PI_2).unwrap();
        assert!(t.exit_time.abs() < 1e-15);
        assert!(make_beam(0.0, 1.7).is_err());
    }

    #[test]
    fn exit_time_matches_bisection_on_circle() {
        let b = make_beam(1.1, 0.4).unwrap();
        // |x + t v| - 1 is negative inside and crosses zero at the exit
        let f = |t: f64| norm(b.point_unchecked(t)) - 1.0;
        let (mut lo, mut hi) = (0.5, 3.0);
        assert!(f(lo) < 0.0 && f(hi) > 0.0);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if f(mid) < 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        assert!((b.exit_time - 0.5 * (lo + hi)).abs() < 1e-12);
        assert!((b.exit_time - 2.0 * 0.4f64.cos()).abs() < 1e-15);
    }

    #[test]
    fn point_along_endpoints() {
        let d = make_beam(0.0, 0.0).unwrap();
        let c = d.point_along(1.0).unwrap();
        assert!(norm(c) < 1e-15);
        let b = make_beam(2.3f64, -0.7).unwrap();
        assert_eq!(b.point_along(0.0).unwrap(), b.entry_point);
        assert!((norm(b.point_along(b.exit_time).unwrap()) - 1.0).abs() < 1e-12);
        assert!(b.point_along(b.exit_time + 1e-3).is_err());
        assert!(b.point_along(-1e-3).is_err());
    }

    #[test]
    fn sampled_exit_time_mean_is_four_over_pi() {
        let beams = sample_beams::<f64>(100_000, 7).unwrap();
        let mean = beams.iter().map(|b| b.exit_time).sum::<f64>() / beams.len() as f64;
        assert!((mean - 4.0 / PI).abs() < 0.01, "mean {mean}");
        assert!(beams
            .iter()
            .all(|b| dot(b.entry_point, b.direction) <= 0.0));
    }

    #[test]
    fn sampling_is_deterministic() {
        let a = sample_beams::<f64>(1, 99).unwrap();
        let b = sample_beams::<f64>(1, 99).unwrap();
        assert_eq!(a, b);
        assert!(sample_beams::<f64>(0, 1).is_err());
    }

    #[test]
    fn boundary_angle_marginal_is_uniform() {
        let beams = sample_beams::<f64>(100_000, 2024).unwrap();
        let mut u: Vec<f64> = beams
            .iter()
            .map(|b| b.boundary_angle / (2.0 * PI))
            .collect();
        let ks = crate::stats::ks_uniform(&mut u);
        assert!(ks.p_value > 0.01, "KS p-value {}", ks.p_value);
    }

    #[test]
    fn chord_lengths() {
        let c = chord_through([0.0f64, 0.0], [0.6, 0.8]).unwrap();
        assert!((c.length() - 2.0).abs() < 1e-15);
        let c = chord_through([0.5, 0.0], [0.0, 1.0]).unwrap();
        assert!((c.length() - (1.0f64 - 0.25).sqrt() * 2.0).abs() < 1e-14);
        assert!((c.length() - 3f64.sqrt()).abs() < 1e-14);
        assert!(chord_through([1.0, 0.0], [0.0, 1.0]).is_err());
    }

    #[test]
    fn csv_round_trip() {
        let beams = sample_beams::<f64>(5, 3).unwrap();
        let mut buf = Vec::new();
        write_beams_csv(&beams, &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("boundary_angle,direction_angle"));
        let back: Vec<BeamSample<f64>> = read_beams_csv(buf.as_slice()).unwrap();
        for (a, b) in beams.iter().zip(&back) {
            assert_eq!(a.boundary_angle, b.boundary_angle);
            assert_eq!(a.direction_angle, b.direction_angle);
        }
    }

    #[test]
    fn single_precision_beam() {
        let b = make_beam(0.3f32, 0.2f32).unwrap();
        assert!((b.exit_time + 2.0 * dot(b.entry_point, b.direction)).abs() < 1e-6);
    }

    proptest! {
        #[test]
        fn beam_invariants(phi in 0.0..(2.0 * PI), vphi in -FRAC_PI_2..FRAC_PI_2) {
            let b = make_beam(phi, vphi).unwrap();
            prop_assert!((norm(b.entry_point) - 1.0).abs() < 1e-14);
            prop_assert!((norm(b.direction) - 1.0).abs() < 1e-14);
            prop_assert!(dot(b.entry_point, b.direction) <= 1e-15);
            prop_assert!((b.exit_time + 2.0 * dot(b.entry_point, b.direction)).abs() < 1e-14);
        }

        #[test]
        fn footpoint_round_trip(phi in 0.0..(2.0 * PI), vphi in -1.5f64..1.5, s in 0.05f64..0.95) {
            let b = make_beam(phi, vphi).unwrap();
            let t = s * b.exit_time;
            let x = b.point_along(t).unwrap();
            let c = chord_through(x, b.direction).unwrap();
            prop_assert!((c.length() - 2.0 * c.footpoint.direction_angle.cos()).abs() < 1e-10);
            prop_assert!((c.backward_time - t).abs() < 1e-10);
            let y = c.footpoint.point_along(c.backward_time).unwrap();
            prop_assert!((y[0] - x[0]).abs() < 1e-10 && (y[1] - x[1]).abs() < 1e-10);
        }
    }
}
