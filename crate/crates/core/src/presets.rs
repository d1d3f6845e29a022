//! Preset truth and test fields for the X-ray experiment. They are smooth
//! compactly supported stand-ins built from polynomial bumps
//! `β(x; c, r) = (1 − |x − c|²/r²)⁴₊`:
//!
//! | name | formula |
//! |------|---------|
//! | `a`  | `1.2 β(x; (−0.25, 0.30), 0.55)` |
//! | `b`  | `−1.0 β(x; (0.30, 0.10), 0.50)` |
//! | `c`  | `0.8 β(x; (0.00, −0.35), 0.50) + 0.5 β(x; (0.35, 0.40), 0.30)` |
//! | `d`  | `β(x; (0.20, 0.20), 0.60)` |
//! | `e`  | `β(x; (−0.30, −0.10), 0.50)` |
//! | `f`  | `β(x; (0.10, −0.40), 0.45)` |
//!
//! The truth is `Φ = a B₁ + b B₂ + c B₃` in the orthonormal `su(2)` basis
//! `B_j = iσ_j/√2`; the test fields are `Ψ₁ = Φ`, `Ψ₂ = (d, e, f)` and
//! `Ψ₃ = (e, f, d)`.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::field::{FnField, MatrixField, ScalarField};
use crate::lie::Algebra;

/// Largest radius at which any preset is nonzero.
pub const SUPPORT_RADIUS: f64 = 0.95;

pub fn bump(center: [f64; 2], radius: f64, amplitude: f64) -> impl Fn([f64; 2]) -> f64 + Copy + Send + Sync {
    move |p: [f64; 2]| {
        let s = 1.0 - ((p[0] - center[0]).powi(2) + (p[1] - center[1]).powi(2)) / (radius * radius);
        if s > 0.0 {
            amplitude * s.powi(4)
        } else {
            0.0
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Preset {
    A,
    B,
    C,
    D,
    E,
    F,
}

impl Preset {
    pub fn eval(self, p: [f64; 2]) -> f64 {
        match self {
            Preset::A => bump([-0.25, 0.3], 0.55, 1.2)(p),
            Preset::B => bump([0.3, 0.1], 0.5, -1.0)(p),
            Preset::C => bump([0.0, -0.35], 0.5, 0.8)(p) + bump([0.35, 0.4], 0.3, 0.5)(p),
            Preset::D => bump([0.2, 0.2], 0.6, 1.0)(p),
            Preset::E => bump([-0.3, -0.1], 0.5, 1.0)(p),
            Preset::F => bump([0.1, -0.4], 0.45, 1.0)(p),
        }
    }

    pub fn field(self) -> Arc<dyn ScalarField<f64>> {
        Arc::new(FnField::new(move |p: [f64; 2]| self.eval(p)))
    }
}

/// `su(2)` field with the given presets as basis coefficients.
pub fn su2_field(components: [Preset; 3]) -> Result<MatrixField<f64>> {
    Ok(MatrixField::in_algebra(Algebra::Su2, components.iter().map(|c| c.field()).collect())?
        .with_support_radius(SUPPORT_RADIUS))
}

pub fn truth() -> MatrixField<f64> {
    su2_field([Preset::A, Preset::B, Preset::C]).expect("presets form a valid su(2) field")
}

pub fn test_fields() -> Vec<MatrixField<f64>> {
    vec![
        truth(),
        su2_field([Preset::D, Preset::E, Preset::F]).expect("valid su(2) field"),
        su2_field([Preset::E, Preset::F, Preset::D]).expect("valid su(2) field"),
    ]
}

/// Log-potential `θ₀ = 0.5 β(x; (0.45, 0.55), 0.35)` for the Schrödinger
/// problem on the unit square.
pub fn schrodinger_theta0(p: [f64; 2]) -> f64 {
    bump([0.45, 0.55], 0.35, 0.5)(p)
}

/// Boundary data `g = 1 + 0.2 x`.
pub fn schrodinger_boundary(p: [f64; 2]) -> f64 {
    1.0 + 0.2 * p[0]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_vanish_outside_support() {
        for k in 0..360 {
            let t = k as f64 * std::f64::consts::TAU / 360.0;
            for r in [SUPPORT_RADIUS, 0.95, 1.0] {
                let p = [r * t.cos(), r * t.sin()];
                for pr in [Preset::A, Preset::B, Preset::C, Preset::D, Preset::E, Preset::F] {
                    assert_eq!(pr.eval(p), 0.0);
                }
            }
        }
        assert!((Preset::A.eval([-0.25, 0.3]) - 1.2).abs() < 1e-15);
        assert_eq!(test_fields().len(), 3);
    }
}
