//! Unstructured triangular meshes of the unit disk with P1 interpolation.

use std::f64::consts::TAU;

use crate::error::{invalid, Result};
use crate::scalar::Real;

/// Barycentric interpolation stencil: value = Σ w_k · u[idx_k].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Stencil<T> {
    pub idx: [u32; 3],
    pub w: [T; 3],
}

impl<T: Real> Stencil<T> {
    #[inline]
    pub fn apply(&self, values: &[T]) -> T {
        self.w[0] * values[self.idx[0] as usize]
            + self.w[1] * values[self.idx[1] as usize]
            + self.w[2] * values[self.idx[2] as usize]
    }
}

#[derive(Clone, Debug)]
pub struct TriMesh<T> {
    nodes: Vec<[T; 2]>,
    triangles: Vec<[usize; 3]>,
    grid: usize,
    buckets: Vec<Vec<u32>>,
}

impl<T: Real> TriMesh<T> {
    pub fn new(nodes: Vec<[T; 2]>, triangles: Vec<[usize; 3]>) -> Result<Self> {
        if triangles.is_empty() {
            return invalid("mesh has no triangles");
        }
        if triangles.iter().flatten().any(|&i| i >= nodes.len()) {
            return invalid("triangle references a missing node");
        }
        let grid = ((triangles.len() as f64).sqrt() as usize / 2).max(4);
        let mut mesh = Self {
            nodes,
            triangles,
            grid,
            buckets: vec![Vec::new(); grid * grid],
        };
        mesh.build_buckets();
        Ok(mesh)
    }

    /// Concentric-ring mesh: node `0` at the origin and `6k` equispaced nodes
    /// on the circle of radius `k/rings`, `k = 1..=rings`; consecutive rings
    /// are stitched by an angular sweep. `rings = 17` gives 919 vertices.
    pub fn disk(rings: usize) -> Result<Self> {
        if rings == 0 {
            return invalid("disk mesh needs at least one ring");
        }
        let mut nodes = vec![[T::zero(), T::zero()]];
        let mut ring_start = vec![0usize];
        let mut ring_len = vec![1usize];
        for k in 1..=rings {
            let r = k as f64 / rings as f64;
            let m = 6 * k;
            // stagger alternate rings slightly to avoid aligned slivers
            let offset = if k % 2 == 0 { 0.5 * TAU / m as f64 } else { 0.0 };
            ring_start.push(nodes.len());
            ring_len.push(m);
            for j in 0..m {
                let a = offset + TAU * j as f64 / m as f64;
                nodes.push([T::lit(r * a.cos()), T::lit(r * a.sin())]);
            }
        }
        let angle = |p: [T; 2]| {
            let a = p[1].as_f64().atan2(p[0].as_f64());
            if a < 0.0 {
                a + TAU
            } else {
                a
            }
        };
        let mut triangles = Vec::new();
        for k in 1..=rings {
            let (os, on) = (ring_start[k], ring_len[k]);
            if k == 1 {
                for j in 0..on {
                    triangles.push([0, os + j, os + (j + 1) % on]);
                }
                continue;
            }
            let (is, inn) = (ring_start[k - 1], ring_len[k - 1]);
            // unwrapped angles starting from each ring's own first node
            let ia: Vec<f64> = (0..=inn)
                .map(|i| angle(nodes[is + i % inn]) + if i == inn { TAU } else { 0.0 })
                .collect();
            let oa: Vec<f64> = (0..=on)
                .map(|j| angle(nodes[os + j % on]) + if j == on { TAU } else { 0.0 })
                .collect();
            let (mut i, mut j) = (0usize, 0usize);
            while i < inn || j < on {
                let advance_inner = if i == inn {
                    false
                } else if j == on {
                    true
                } else {
                    ia[i + 1] < oa[j + 1]
                };
                if advance_inner {
                    triangles.push([is + i % inn, is + (i + 1) % inn, os + j % on]);
                    i += 1;
                } else {
                    triangles.push([is + i % inn, os + (j + 1) % on, os + j % on]);
                    j += 1;
                }
            }
        }
        Self::new(nodes, triangles)
    }

    pub fn nodes(&self) -> &[[T; 2]] {
        &self.nodes
    }

    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }

    fn tri_area(&self, t: &[usize; 3]) -> T {
        let [a, b, c] = [self.nodes[t[0]], self.nodes[t[1]], self.nodes[t[2]]];
        ((b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1])).abs() * T::lit(0.5)
    }

    /// Lumped mass matrix: each vertex receives a third of the area of every
    /// adjacent triangle.
    pub fn lumped_mass(&self) -> Vec<T> {
        let mut m = vec![T::zero(); self.nodes.len()];
        let third = T::one() / T::lit(3.0);
        for t in &self.triangles {
            let a = self.tri_area(t) * third;
            for &i in t {
                m[i] = m[i] + a;
            }
        }
        m
    }

    fn bucket_of(&self, p: [T; 2]) -> (usize, usize) {
        let g = self.grid as f64;
        let to = |x: T| (((x.as_f64() + 1.0) * 0.5 * g).floor().max(0.0) as usize).min(self.grid - 1);
        (to(p[0]), to(p[1]))
    }

    fn build_buckets(&mut self) {
        let grid = self.grid;
        for (ti, t) in self.triangles.iter().enumerate() {
            let xs = t.map(|i| self.nodes[i]);
            let lo = [
                xs.iter().map(|p| p[0]).fold(T::infinity(), T::min),
                xs.iter().map(|p| p[1]).fold(T::infinity(), T::min),
            ];
            let hi = [
                xs.iter().map(|p| p[0]).fold(T::neg_infinity(), T::max),
                xs.iter().map(|p| p[1]).fold(T::neg_infinity(), T::max),
            ];
            let (x0, y0) = self.bucket_of(lo);
            let (x1, y1) = self.bucket_of(hi);
            for by in y0..=y1 {
                for bx in x0..=x1 {
                    self.buckets[by * grid + bx].push(ti as u32);
                }
            }
        }
    }

    fn barycentric(&self, t: &[usize; 3], p: [T; 2]) -> [T; 3] {
        let [a, b, c] = [self.nodes[t[0]], self.nodes[t[1]], self.nodes[t[2]]];
        let det = (b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]);
        let l1 = ((p[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (p[1] - a[1])) / det;
        let l2 = ((b[0] - a[0]) * (p[1] - a[1]) - (p[0] - a[0]) * (b[1] - a[1])) / det;
        [T::one() - l1 - l2, l1, l2]
    }

    /// Locates `p` and returns its P1 stencil. Points in the thin sliver
    /// between the boundary polygon and the unit circle use the nearest
    /// triangle's linear extension.
    pub fn stencil(&self, p: [T; 2]) -> Stencil<T> {
        let (bx, by) = self.bucket_of(p);
        let mut best: Option<(T, usize, [T; 3])> = None;
        let mut radius = 0usize;
        loop {
            let mut visited_any = false;
            let xlo = bx.saturating_sub(radius);
            let ylo = by.saturating_sub(radius);
            let xhi = (bx + radius).min(self.grid - 1);
            let yhi = (by + radius).min(self.grid - 1);
            for yy in ylo..=yhi {
                for xx in xlo..=xhi {
                    if radius > 0 && xx != xlo && xx != xhi && yy != ylo && yy != yhi {
                        continue;
                    }
                    for &ti in &self.buckets[yy * self.grid + xx] {
                        visited_any = true;
                        let t = &self.triangles[ti as usize];
                        let l = self.barycentric(t, p);
                        let worst = l[0].min(l[1]).min(l[2]);
                        if worst >= -T::tiny() {
                            return Stencil {
                                idx: t.map(|i| i as u32),
                                w: l,
                            };
                        }
                        if best.map_or(true, |(b, _, _)| worst > b) {
                            best = Some((worst, ti as usize, l));
                        }
                    }
                }
            }
            if (visited_any && best.is_some() && radius >= 1) || radius > self.grid {
                break;
            }
            radius += 1;
        }
        let (_, ti, l) = best.expect("mesh has triangles");
        Stencil {
            idx: self.triangles[ti].map(|i| i as u32),
            w: l,
        }
    }

    pub fn interpolate(&self, values: &[T], p: [T; 2]) -> T {
        self.stencil(p).apply(values)
    }

    /// Samples a function at the mesh vertices.
    pub fn sample<F: Fn([T; 2]) -> T>(&self, f: F) -> Vec<T> {
        self.nodes.iter().map(|&p| f(p)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ring_mesh_counts_and_area() {
        let m = TriMesh::<f64>::disk(17).unwrap();
        assert_eq!(m.n_nodes(), 919);
        let area: f64 = m.lumped_mass().iter().sum();
        // inscribed polygon with 102 sides
        let poly = 0.5 * 102.0 * (TAU / 102.0).sin();
        assert!((area - poly).abs() < 1e-10, "area {area} vs {poly}");
        // Euler characteristic of a disk: V - E + F = 1
        let mut edges = std::collections::HashSet::new();
        for t in m.triangles() {
            for (a, b) in [(t[0], t[1]), (t[1], t[2]), (t[2], t[0])] {
                edges.insert((a.min(b), a.max(b)));
            }
        }
        assert_eq!(m.n_nodes() as i64 - edges.len() as i64 + m.triangles().len() as i64, 1);
    }

    #[test]
    fn p1_reproduces_linear_functions() {
        let m = TriMesh::<f64>::disk(6).unwrap();
        let f = |p: [f64; 2]| 0.3 + 1.5 * p[0] - 0.7 * p[1];
        let vals = m.sample(f);
        for &(x, y) in &[(0.1, 0.2), (-0.5, 0.3), (0.0, -0.99), (0.7071, 0.7071), (0.99999, 0.0)] {
            let v = m.interpolate(&vals, [x, y]);
            assert!((v - f([x, y])).abs() < 1e-12, "at ({x},{y}): {v}");
        }
    }

    #[test]
    fn stencil_weights_sum_to_one() {
        let m = TriMesh::<f64>::disk(10).unwrap();
        for k in 0..500 {
            let a = k as f64 * 0.7;
            let r = (k as f64 / 500.0).sqrt();
            let s = m.stencil([r * a.cos(), r * a.sin()]);
            assert!((s.w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            assert!(s.w.iter().all(|&w| w > -1e-3));
        }
    }
}
