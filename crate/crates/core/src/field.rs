//! Scalar and matrix-valued fields on the closed unit disk.

use std::fmt;
use std::sync::Arc;

use crate::error::{invalid, Result};
use crate::lie::{full_matrix_basis, Algebra, CMat};
use crate::mesh::TriMesh;
use crate::scalar::Real;

/// A real scalar field on the disk.
pub trait ScalarField<T: Real>: Send + Sync {
    fn value(&self, p: [T; 2]) -> T;
}

/// Closure-backed field.
pub struct FnField<T>(Arc<dyn Fn([T; 2]) -> T + Send + Sync>);

impl<T: Real> FnField<T> {
    pub fn new(f: impl Fn([T; 2]) -> T + Send + Sync + 'static) -> Self {
        Self(Arc::new(f))
    }
}

impl<T: Real> ScalarField<T> for FnField<T> {
    #[inline]
    fn value(&self, p: [T; 2]) -> T {
        (self.0)(p)
    }
}

pub struct ConstField<T>(pub T);

impl<T: Real> ScalarField<T> for ConstField<T> {
    #[inline]
    fn value(&self, _p: [T; 2]) -> T {
        self.0
    }
}

/// Piecewise-linear field given by its vertex values on a triangular mesh.
#[derive(Clone)]
pub struct MeshField<T> {
    pub mesh: Arc<TriMesh<T>>,
    pub values: Vec<T>,
}

impl<T: Real> MeshField<T> {
    pub fn new(mesh: Arc<TriMesh<T>>, values: Vec<T>) -> Result<Self> {
        if values.len() != mesh.n_nodes() {
            return invalid(format!(
                "{} values for a mesh with {} nodes",
                values.len(),
                mesh.n_nodes()
            ));
        }
        Ok(Self { mesh, values })
    }
}

impl<T: Real> ScalarField<T> for MeshField<T> {
    fn value(&self, p: [T; 2]) -> T {
        self.mesh.interpolate(&self.values, p)
    }
}

/// Tensor polar grid `ρ_i = i/(n_r - 1)`, `ω_j = 2π j/n_ω` with bilinear
/// interpolation in `(ρ, ω)`. Values at `ρ = 0` are averaged into one pole.
#[derive(Clone, Debug)]
pub struct PolarGridField<T> {
    n_r: usize,
    n_w: usize,
    values: Vec<T>,
}

impl<T: Real> PolarGridField<T> {
    pub fn sample(n_r: usize, n_w: usize, f: impl Fn([T; 2]) -> T) -> Result<Self> {
        if n_r < 2 || n_w < 3 {
            return invalid("polar grid needs n_r >= 2 and n_w >= 3");
        }
        let mut values = Vec::with_capacity(n_r * n_w);
        for i in 0..n_r {
            let r = T::from_count(i) / T::from_count(n_r - 1);
            for j in 0..n_w {
                let w = T::lit(2.0) * T::PI() * T::from_count(j) / T::from_count(n_w);
                values.push(f([r * w.cos(), r * w.sin()]));
            }
        }
        let pole = values[..n_w].iter().copied().sum::<T>() / T::from_count(n_w);
        values[..n_w].iter_mut().for_each(|v| *v = pole);
        Ok(Self { n_r, n_w, values })
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.n_r, self.n_w)
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }
}

impl<T: Real> ScalarField<T> for PolarGridField<T> {
    fn value(&self, p: [T; 2]) -> T {
        let r = p[0].hypot(p[1]).min(T::one());
        let mut w = p[1].atan2(p[0]);
        if w < T::zero() {
            w = w + T::lit(2.0) * T::PI();
        }
        let fr = (r * T::from_count(self.n_r - 1)).as_f64();
        let i0 = (fr.floor() as usize).min(self.n_r - 2);
        let tr = T::lit(fr - i0 as f64);
        let fw = (w / (T::lit(2.0) * T::PI()) * T::from_count(self.n_w)).as_f64();
        let j0 = (fw.floor() as usize) % self.n_w;
        let tw = T::lit(fw - fw.floor());
        let j1 = (j0 + 1) % self.n_w;
        let at = |i: usize, j: usize| self.values[i * self.n_w + j];
        let lo = at(i0, j0) * (T::one() - tw) + at(i0, j1) * tw;
        let hi = at(i0 + 1, j0) * (T::one() - tw) + at(i0 + 1, j1) * tw;
        lo * (T::one() - tr) + hi * tr
    }
}

/// `Σ c_k f_k`.
pub struct Combination<T> {
    terms: Vec<(T, Arc<dyn ScalarField<T>>)>,
}

impl<T: Real> ScalarField<T> for Combination<T> {
    fn value(&self, p: [T; 2]) -> T {
        self.terms
            .iter()
            .fold(T::zero(), |acc, (c, f)| acc + *c * f.value(p))
    }
}

/// Matrix field `Φ(x) = Σ_j φ_j(x) B_j` over a real orthonormal family `B_j`
/// (the algebra basis, or a basis of all of `ℂ^{n×n}`).
#[derive(Clone)]
pub struct MatrixField<T: Real> {
    algebra: Algebra,
    basis: Arc<Vec<CMat<T>>>,
    components: Vec<Arc<dyn ScalarField<T>>>,
    support_radius: Option<T>,
}

impl<T: Real> fmt::Debug for MatrixField<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("MatrixField")
            .field("algebra", &self.algebra)
            .field("components", &self.components.len())
            .field("support_radius", &self.support_radius)
            .finish()
    }
}

impl<T: Real> MatrixField<T> {
    /// 𝔤-valued field from one scalar field per algebra basis element.
    pub fn in_algebra(algebra: Algebra, components: Vec<Arc<dyn ScalarField<T>>>) -> Result<Self> {
        algebra.validate()?;
        if components.len() != algebra.dim() {
            return invalid(format!(
                "{} components for an algebra of dimension {}",
                components.len(),
                algebra.dim()
            ));
        }
        Ok(Self {
            algebra,
            basis: Arc::new(algebra.basis()),
            components,
            support_radius: None,
        })
    }

    /// `ℂ^{n×n}`-valued field in the basis of [`full_matrix_basis`].
    pub fn in_full_space(algebra: Algebra, components: Vec<Arc<dyn ScalarField<T>>>) -> Result<Self> {
        algebra.validate()?;
        let basis = full_matrix_basis(algebra);
        if components.len() != basis.len() {
            return invalid(format!(
                "{} components for a space of dimension {}",
                components.len(),
                basis.len()
            ));
        }
        Ok(Self {
            algebra,
            basis: Arc::new(basis),
            components,
            support_radius: None,
        })
    }

    pub fn from_fns<F>(algebra: Algebra, fns: Vec<F>) -> Result<Self>
    where
        F: Fn([T; 2]) -> T + Send + Sync + 'static,
    {
        let comps = fns
            .into_iter()
            .map(|f| Arc::new(FnField::new(f)) as Arc<dyn ScalarField<T>>)
            .collect();
        Self::in_algebra(algebra, comps)
    }

    pub fn zero(algebra: Algebra) -> Self {
        let comps = (0..algebra.dim())
            .map(|_| Arc::new(ConstField(T::zero())) as Arc<dyn ScalarField<T>>)
            .collect();
        Self::in_algebra(algebra, comps).expect("valid algebra")
    }

    pub fn constant(algebra: Algebra, coeffs: &[T]) -> Result<Self> {
        let comps = coeffs
            .iter()
            .map(|&c| Arc::new(ConstField(c)) as Arc<dyn ScalarField<T>>)
            .collect();
        Self::in_algebra(algebra, comps)
    }

    /// 𝔤-valued piecewise-linear field from per-component vertex values.
    pub fn from_mesh(algebra: Algebra, mesh: Arc<TriMesh<T>>, values: &[Vec<T>]) -> Result<Self> {
        let comps = values
            .iter()
            .map(|v| {
                MeshField::new(mesh.clone(), v.clone())
                    .map(|f| Arc::new(f) as Arc<dyn ScalarField<T>>)
            })
            .collect::<Result<Vec<_>>>()?;
        Self::in_algebra(algebra, comps)
    }

    pub fn with_support_radius(mut self, r: T) -> Self {
        self.support_radius = Some(r);
        self
    }

    pub fn support_radius(&self) -> Option<T> {
        self.support_radius
    }

    pub fn algebra(&self) -> Algebra {
        self.algebra
    }

    pub fn basis(&self) -> &[CMat<T>] {
        &self.basis
    }

    pub fn n_components(&self) -> usize {
        self.components.len()
    }

    pub fn component(&self, j: usize) -> &Arc<dyn ScalarField<T>> {
        &self.components[j]
    }

    pub fn matrix_size(&self) -> usize {
        self.algebra.matrix_size()
    }

    /// True when the values lie in the algebra (not the full matrix space).
    pub fn is_algebra_valued(&self) -> bool {
        self.basis.len() == self.algebra.dim()
    }

    #[inline]
    fn outside_support(&self, p: [T; 2]) -> bool {
        self.support_radius
            .is_some_and(|r| p[0] * p[0] + p[1] * p[1] > r * r)
    }

    /// Component values at `p`.
    pub fn coeffs(&self, p: [T; 2]) -> Vec<T> {
        if self.outside_support(p) {
            return vec![T::zero(); self.components.len()];
        }
        self.components.iter().map(|c| c.value(p)).collect()
    }

    /// Matrix value at `p`.
    pub fn eval(&self, p: [T; 2]) -> CMat<T> {
        let mut m = CMat::zeros(self.matrix_size());
        if self.outside_support(p) {
            return m;
        }
        for (b, c) in self.basis.iter().zip(&self.components) {
            m = m.axpy(c.value(p), b);
        }
        m
    }

    /// `a·self + b·other`; both fields must share the same basis.
    pub fn lin_comb(&self, a: T, other: &Self, b: T) -> Result<Self> {
        if self.algebra != other.algebra || self.basis.len() != other.basis.len() {
            return invalid("linear combination of fields with different bases");
        }
        let components = self
            .components
            .iter()
            .zip(&other.components)
            .map(|(f, g)| {
                Arc::new(Combination {
                    terms: vec![(a, self.masked(f)), (b, other.masked(g))],
                }) as Arc<dyn ScalarField<T>>
            })
            .collect();
        let support_radius = match (self.support_radius, other.support_radius) {
            (Some(r), Some(s)) => Some(r.max(s)),
            _ => None,
        };
        Ok(Self {
            algebra: self.algebra,
            basis: self.basis.clone(),
            components,
            support_radius,
        })
    }

    fn masked(&self, f: &Arc<dyn ScalarField<T>>) -> Arc<dyn ScalarField<T>> {
        match self.support_radius {
            None => f.clone(),
            Some(r) => {
                let f = f.clone();
                Arc::new(FnField::new(move |p: [T; 2]| {
                    if p[0] * p[0] + p[1] * p[1] > r * r {
                        T::zero()
                    } else {
                        f.value(p)
                    }
                }))
            }
        }
    }

    pub fn scaled(&self, s: T) -> Self {
        self.lin_comb(s, &Self::zero_like(self), T::zero())
            .expect("same basis")
    }

    fn zero_like(other: &Self) -> Self {
        Self {
            algebra: other.algebra,
            basis: other.basis.clone(),
            components: (0..other.components.len())
                .map(|_| Arc::new(ConstField(T::zero())) as Arc<dyn ScalarField<T>>)
                .collect(),
            support_radius: None,
        }
    }

    /// Re-expresses an algebra-valued field in the full matrix basis.
    pub fn to_full_space(&self) -> Self {
        if !self.is_algebra_valued() {
            return self.clone();
        }
        let full = full_matrix_basis::<T>(self.algebra);
        let dim = self.components.len();
        let mut components: Vec<Arc<dyn ScalarField<T>>> = Vec::with_capacity(full.len());
        for j in 0..full.len() {
            if j < dim {
                components.push(self.masked(&self.components[j]));
            } else {
                components.push(Arc::new(ConstField(T::zero())));
            }
        }
        Self {
            algebra: self.algebra,
            basis: Arc::new(full),
            components,
            support_radius: self.support_radius,
        }
    }
}
