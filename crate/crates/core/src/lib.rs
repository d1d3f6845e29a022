//! Bayesian uncertainty quantification for two non-linear inverse problems on
//! planar domains: the non-Abelian X-ray transform on the unit disk and a
//! steady-state Schrödinger boundary-value problem.

pub mod error;
pub mod experiment;
pub mod field;
pub mod geometry;
pub mod gp;
pub mod lie;
pub mod linalg;
pub mod linear;
pub mod mcmc;
pub mod mesh;
pub mod presets;
pub mod scalar;
pub mod schrodinger;
pub mod spectral;
pub mod stats;
pub mod transport;
pub mod xray_model;
pub mod zernike;

pub use error::{Error, Result};
pub use scalar::Real;

/// Complex square matrix in double precision.
pub type Matrix = lie::CMat<f64>;
/// Matrix field on the unit disk in double precision.
pub type Field = field::MatrixField<f64>;
pub type Beam = geometry::BeamSample<f64>;
pub type Mesh = mesh::TriMesh<f64>;
pub type Zernike = zernike::ZernikeExpansion<f64>;
pub type Quadrature = zernike::DiskQuadrature<f64>;
pub type Dense = linalg::DenseMatrix<f64>;
