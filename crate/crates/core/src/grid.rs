//! Structured tensor-product grids and the discrete calculus used by every
//! energy in the crate.
//!
//! Integrals of nodal quantities use the tensor trapezoidal rule. Integrals of
//! gradient quantities use *orthant gradients*: at every node and for every
//! orthant `s ∈ {+,-}^N` whose neighbours exist, the one-sided difference
//! vector along the edges leaving the node in that orthant. Each such corner
//! carries the weight `cell_volume / 2^N`, so summing `|g|^2` over corners
//! reproduces the standard `2N+1`-point Laplacian energy while keeping the
//! gradient a local linear map with an exact adjoint ([`Mesh::corner_adjoint`]).

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::par;

/// Largest supported spatial dimension.
pub const MAX_DIM: usize = 6;

/// Per-corner vector of partial derivatives; only the first `N` entries are used.
pub type CornerVec = [f64; MAX_DIM];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DomainKind {
    Interval,
    Box,
    /// `ω × (-L, L)^M`; the trailing `M` axes are the truncated unbounded factor.
    Strip,
    /// A box containing the origin with a ball of `puncture_radius` removed.
    PuncturedBox,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Domain {
    pub kind: DomainKind,
    pub bounds: Vec<(f64, f64)>,
    /// Axes that model an unbounded factor truncated at `±truncation`.
    pub unbounded_axes: Vec<usize>,
    pub truncation: f64,
    pub puncture_radius: f64,
    /// Coordinates entering the distance to the singular set (origin, `y = 0`
    /// or `z = 0` depending on the potential in use).
    pub singular_axes: Vec<usize>,
}

impl Domain {
    pub fn interval(lo: f64, hi: f64) -> Result<Self> {
        let d = Domain {
            kind: DomainKind::Interval,
            bounds: vec![(lo, hi)],
            unbounded_axes: vec![],
            truncation: 0.0,
            puncture_radius: 0.0,
            singular_axes: vec![0],
        };
        d.validate()?;
        Ok(d)
    }

    pub fn boxed(bounds: Vec<(f64, f64)>) -> Result<Self> {
        let n = bounds.len();
        let d = Domain {
            kind: DomainKind::Box,
            bounds,
            unbounded_axes: vec![],
            truncation: 0.0,
            puncture_radius: 0.0,
            singular_axes: (0..n).collect(),
        };
        d.validate()?;
        Ok(d)
    }

    /// `omega × (-l, l)^m`. The singular set is `z = 0`.
    pub fn strip(omega: &[(f64, f64)], m: usize, l: f64) -> Result<Self> {
        let k = omega.len();
        let mut bounds = omega.to_vec();
        bounds.extend(std::iter::repeat_n((-l, l), m));
        let d = Domain {
            kind: DomainKind::Strip,
            bounds,
            unbounded_axes: (k..k + m).collect(),
            truncation: l,
            puncture_radius: 0.0,
            singular_axes: (k..k + m).collect(),
        };
        d.validate()?;
        Ok(d)
    }

    pub fn punctured_box(bounds: Vec<(f64, f64)>, radius: f64) -> Result<Self> {
        let n = bounds.len();
        let d = Domain {
            kind: DomainKind::PuncturedBox,
            bounds,
            unbounded_axes: vec![],
            truncation: 0.0,
            puncture_radius: radius,
            singular_axes: (0..n).collect(),
        };
        d.validate()?;
        Ok(d)
    }

    pub fn with_singular_axes(mut self, axes: Vec<usize>) -> Result<Self> {
        self.singular_axes = axes;
        self.validate()?;
        Ok(self)
    }

    pub fn dims(&self) -> usize {
        self.bounds.len()
    }

    pub fn extent(&self, axis: usize) -> f64 {
        self.bounds[axis].1 - self.bounds[axis].0
    }

    pub fn volume(&self) -> f64 {
        (0..self.dims()).map(|d| self.extent(d)).product()
    }

    /// Number of leading (bounded) axes of a strip, i.e. `dim ω`.
    pub fn omega_dims(&self) -> usize {
        self.dims() - self.unbounded_axes.len()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.dims();
        if n == 0 || n > MAX_DIM {
            return Err(Error::Domain(format!(
                "dimension {n} outside 1..={MAX_DIM}"
            )));
        }
        if self.kind == DomainKind::Interval && n != 1 {
            return Err(Error::Domain("an interval has exactly one axis".into()));
        }
        for (d, &(lo, hi)) in self.bounds.iter().enumerate() {
            if !(lo.is_finite() && hi.is_finite()) || lo >= hi {
                return Err(Error::Domain(format!(
                    "axis {d}: need lo < hi, got ({lo}, {hi})"
                )));
            }
        }
        for &a in self.unbounded_axes.iter().chain(&self.singular_axes) {
            if a >= n {
                return Err(Error::Domain(format!("axis index {a} out of range")));
            }
        }
        if !self.unbounded_axes.is_empty() {
            if !(self.truncation > 0.0) {
                return Err(Error::Domain(format!(
                    "truncation length must be positive, got {}",
                    self.truncation
                )));
            }
            for &a in &self.unbounded_axes {
                if self.bounds[a] != (-self.truncation, self.truncation) {
                    return Err(Error::Domain(format!(
                        "truncated axis {a} must span (-L, L)"
                    )));
                }
            }
        }
        if self.kind == DomainKind::Strip && self.unbounded_axes.is_empty() {
            return Err(Error::Domain("a strip needs at least one unbounded axis".into()));
        }
        if !(self.puncture_radius >= 0.0) {
            return Err(Error::Domain("puncture radius must be nonnegative".into()));
        }
        if self.kind == DomainKind::PuncturedBox {
            let dist = self
                .bounds
                .iter()
                .map(|&(lo, hi)| if lo < 0.0 && hi > 0.0 { (-lo).min(hi) } else { -1.0 })
                .fold(f64::INFINITY, f64::min);
            if dist <= 0.0 {
                return Err(Error::Domain("punctured box must contain the origin".into()));
            }
            if self.puncture_radius >= dist {
                return Err(Error::Domain(format!(
                    "puncture radius {} reaches the boundary (distance {dist})",
                    self.puncture_radius
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug)]
pub struct Mesh {
    domain: Domain,
    shape: Vec<usize>,
    strides: Vec<usize>,
    spacing: Vec<f64>,
    exclusion_radius: f64,
    boundary: Vec<bool>,
    excluded: Vec<bool>,
    weights: Vec<f64>,
    // Bit d set when the neighbour at +e_d (resp. -e_d) exists.
    fwd: Vec<u8>,
    bwd: Vec<u8>,
}

impl Mesh {
    /// Builds the grid. Nodes within `singular_cap_radius` (or the puncture
    /// radius, whichever is larger) of the singular set are excluded from all
    /// integrals and pinned to zero.
    pub fn build(
        domain: Domain,
        nodes_per_axis: &[usize],
        singular_cap_radius: f64,
    ) -> Result<Arc<Mesh>> {
        domain.validate()?;
        let n = domain.dims();
        if nodes_per_axis.len() != n {
            return Err(Error::Mesh(format!(
                "expected {n} node counts, got {}",
                nodes_per_axis.len()
            )));
        }
        if let Some(&k) = nodes_per_axis.iter().find(|&&k| k < 3) {
            return Err(Error::Mesh(format!("need at least 3 nodes per axis, got {k}")));
        }
        if !(singular_cap_radius >= 0.0) {
            return Err(Error::Mesh("cap radius must be nonnegative".into()));
        }
        let min_extent = (0..n).map(|d| domain.extent(d)).fold(f64::INFINITY, f64::min);
        if singular_cap_radius >= 0.5 * min_extent {
            return Err(Error::Mesh(format!(
                "cap radius {singular_cap_radius} must be below half the smallest extent ({})",
                0.5 * min_extent
            )));
        }

        let shape = nodes_per_axis.to_vec();
        let mut strides = vec![1; n];
        for d in (0..n.saturating_sub(1)).rev() {
            strides[d] = strides[d + 1] * shape[d + 1];
        }
        let spacing: Vec<f64> = (0..n)
            .map(|d| domain.extent(d) / (shape[d] - 1) as f64)
            .collect();
        let total: usize = shape.iter().product();
        let radius = singular_cap_radius.max(domain.puncture_radius);

        let mut mesh = Mesh {
            domain,
            shape,
            strides,
            spacing,
            exclusion_radius: radius,
            boundary: vec![false; total],
            excluded: vec![false; total],
            weights: vec![0.0; total],
            fwd: vec![0; total],
            bwd: vec![0; total],
        };
        for node in 0..total {
            let idx = mesh.multi_index(node);
            let mut w = 1.0;
            let mut on_boundary = false;
            let (mut f, mut b) = (0u8, 0u8);
            for d in 0..n {
                let last = mesh.shape[d] - 1;
                let end = idx[d] == 0 || idx[d] == last;
                on_boundary |= end;
                w *= if end { 0.5 } else { 1.0 } * mesh.spacing[d];
                if idx[d] < last {
                    f |= 1 << d;
                }
                if idx[d] > 0 {
                    b |= 1 << d;
                }
            }
            mesh.boundary[node] = on_boundary;
            mesh.weights[node] = w;
            mesh.fwd[node] = f;
            mesh.bwd[node] = b;
            if radius > 0.0 && mesh.singular_distance(node) <= radius {
                mesh.excluded[node] = true;
            }
        }
        Ok(Arc::new(mesh))
    }

    pub fn domain(&self) -> &Domain {
        &self.domain
    }

    pub fn dims(&self) -> usize {
        self.shape.len()
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn strides(&self) -> &[usize] {
        &self.strides
    }

    pub fn spacing(&self) -> &[f64] {
        &self.spacing
    }

    pub fn exclusion_radius(&self) -> f64 {
        self.exclusion_radius
    }

    pub fn cell_volume(&self) -> f64 {
        self.spacing.iter().product()
    }

    pub fn orthants(&self) -> usize {
        1 << self.dims()
    }

    /// Quadrature weight carried by one (node, orthant) corner.
    pub fn corner_weight(&self) -> f64 {
        self.cell_volume() / self.orthants() as f64
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn boundary_mask(&self) -> &[bool] {
        &self.boundary
    }

    pub fn excluded_mask(&self) -> &[bool] {
        &self.excluded
    }

    pub fn is_boundary(&self, node: usize) -> bool {
        self.boundary[node]
    }

    pub fn is_excluded(&self, node: usize) -> bool {
        self.excluded[node]
    }

    /// Boundary or excluded: the value is pinned to zero.
    pub fn is_constrained(&self, node: usize) -> bool {
        self.boundary[node] || self.excluded[node]
    }

    pub fn free_count(&self) -> usize {
        (0..self.len()).filter(|&i| !self.is_constrained(i)).count()
    }

    pub fn multi_index(&self, node: usize) -> [usize; MAX_DIM] {
        let mut idx = [0; MAX_DIM];
        let mut rest = node;
        for d in 0..self.dims() {
            idx[d] = rest / self.strides[d];
            rest %= self.strides[d];
        }
        idx
    }

    pub fn node_at(&self, idx: &[usize]) -> usize {
        idx.iter().zip(&self.strides).map(|(i, s)| i * s).sum()
    }

    pub fn coords(&self, node: usize) -> [f64; MAX_DIM] {
        let idx = self.multi_index(node);
        let mut x = [0.0; MAX_DIM];
        for d in 0..self.dims() {
            x[d] = self.domain.bounds[d].0 + idx[d] as f64 * self.spacing[d];
        }
        x
    }

    /// Euclidean norm of the node's coordinates restricted to `axes`.
    pub fn partial_norm(&self, node: usize, axes: &[usize]) -> f64 {
        let x = self.coords(node);
        axes.iter().map(|&a| x[a] * x[a]).sum::<f64>().sqrt()
    }

    pub fn singular_distance(&self, node: usize) -> f64 {
        self.partial_norm(node, &self.domain.singular_axes)
    }

    #[inline]
    pub fn orthant_valid(&self, node: usize, s: usize) -> bool {
        let full = (self.orthants() - 1) as u8;
        let s = s as u8;
        (s & !self.bwd[node]) == 0 && (!s & full & !self.fwd[node]) == 0
    }

    /// One-sided gradient at `node` in orthant `s` (bit `d` set = backward along axis `d`).
    #[inline]
    pub fn corner_gradient(&self, u: &[f64], node: usize, s: usize) -> CornerVec {
        let mut g = [0.0; MAX_DIM];
        for d in 0..self.dims() {
            let st = self.strides[d];
            g[d] = if s & (1 << d) != 0 {
                (u[node] - u[node - st]) / self.spacing[d]
            } else {
                (u[node + st] - u[node]) / self.spacing[d]
            };
        }
        g
    }

    /// `Σ_{valid corners} f(node, orthant)` (unweighted; multiply by
    /// [`Mesh::corner_weight`] for an integral).
    pub fn sum_corners<F>(&self, f: F) -> f64
    where
        F: Fn(usize, usize) -> f64 + Sync,
    {
        let k = self.orthants();
        par::sum(self.len(), |node| {
            let mut acc = 0.0;
            for s in 0..k {
                if self.orthant_valid(node, s) {
                    acc += f(node, s);
                }
            }
            acc
        })
    }

    /// Materializes a per-corner vector field; `f(node, s, out)` writes the
    /// `N` components for a valid corner. Invalid corners stay zero.
    pub fn corner_fluxes<F>(&self, f: F) -> Vec<f64>
    where
        F: Fn(usize, usize, &mut [f64]) + Sync + Send,
    {
        let n = self.dims();
        let k = self.orthants();
        let mut out = vec![0.0; self.len() * k * n];
        par::fill_blocks(&mut out, k * n, |node, block| {
            for s in 0..k {
                if self.orthant_valid(node, s) {
                    f(node, s, &mut block[s * n..(s + 1) * n]);
                }
            }
        });
        out
    }

    /// Adjoint of the corner gradient: returns the covector
    /// `c_i = Σ_corners flux · ∂g/∂u_i`, zeroed at constrained nodes.
    pub fn corner_adjoint(&self, flux: &[f64]) -> Vec<f64> {
        let n = self.dims();
        let k = self.orthants();
        debug_assert_eq!(flux.len(), self.len() * k * n);
        let at = |node: usize, s: usize, d: usize| flux[(node * k + s) * n + d];
        let mut out = vec![0.0; self.len()];
        par::fill(&mut out, |i| {
            if self.is_constrained(i) {
                return 0.0;
            }
            let mut acc = 0.0;
            for s in 0..k {
                if !self.orthant_valid(i, s) {
                    continue;
                }
                for d in 0..n {
                    let inv_h = 1.0 / self.spacing[d];
                    acc += if s & (1 << d) != 0 { inv_h } else { -inv_h } * at(i, s, d);
                }
            }
            for d in 0..n {
                let st = self.strides[d];
                let inv_h = 1.0 / self.spacing[d];
                if self.bwd[i] & (1 << d) != 0 {
                    let j = i - st;
                    for s in 0..k {
                        if s & (1 << d) == 0 && self.orthant_valid(j, s) {
                            acc += inv_h * at(j, s, d);
                        }
                    }
                }
                if self.fwd[i] & (1 << d) != 0 {
                    let j = i + st;
                    for s in 0..k {
                        if s & (1 << d) != 0 && self.orthant_valid(j, s) {
                            acc -= inv_h * at(j, s, d);
                        }
                    }
                }
            }
            acc
        });
        out
    }

    /// Nodal gradient: centered differences where both neighbours are usable,
    /// second-order one-sided stencils at boundary nodes and next to excluded
    /// nodes. Returned flat, `N` components per node.
    pub fn gradient(&self, u: &[f64]) -> Vec<f64> {
        let n = self.dims();
        let mut out = vec![0.0; self.len() * n];
        par::fill_blocks(&mut out, n, |node, g| {
            let idx = self.multi_index(node);
            for d in 0..n {
                let st = self.strides[d];
                let h = self.spacing[d];
                let last = self.shape[d] - 1;
                let usable = |j: usize| !self.excluded[j];
                let has_b = idx[d] > 0 && usable(node - st);
                let has_f = idx[d] < last && usable(node + st);
                g[d] = if has_b && has_f {
                    (u[node + st] - u[node - st]) / (2.0 * h)
                } else if has_f {
                    if idx[d] + 1 < last && usable(node + 2 * st) {
                        (-3.0 * u[node] + 4.0 * u[node + st] - u[node + 2 * st]) / (2.0 * h)
                    } else {
                        (u[node + st] - u[node]) / h
                    }
                } else if has_b {
                    if idx[d] > 1 && usable(node - 2 * st) {
                        (3.0 * u[node] - 4.0 * u[node - st] + u[node - 2 * st]) / (2.0 * h)
                    } else {
                        (u[node] - u[node - st]) / h
                    }
                } else {
                    0.0
                };
            }
        });
        out
    }

    /// Trapezoidal integral over non-excluded nodes.
    pub fn integrate(&self, field: &[f64]) -> f64 {
        debug_assert_eq!(field.len(), self.len());
        par::sum(self.len(), |i| {
            if self.excluded[i] {
                0.0
            } else {
                self.weights[i] * field[i]
            }
        })
    }

    /// Trapezoidal integral of `f(node)` over non-excluded nodes.
    pub fn integrate_with<F>(&self, f: F) -> f64
    where
        F: Fn(usize) -> f64 + Sync,
    {
        par::sum(self.len(), |i| {
            if self.excluded[i] {
                0.0
            } else {
                self.weights[i] * f(i)
            }
        })
    }

    /// Axis along which the interior (free-node candidate) block has `m_d = n_d - 2` nodes.
    pub fn interior_shape(&self) -> Vec<usize> {
        self.shape.iter().map(|&k| k - 2).collect()
    }
}

/// Nodal scalar field on a mesh, pinned to zero at constrained nodes.
#[derive(Clone, Debug)]
pub struct DiscreteFunction {
    mesh: Arc<Mesh>,
    values: Vec<f64>,
}

impl DiscreteFunction {
    pub fn zeros(mesh: &Arc<Mesh>) -> Self {
        DiscreteFunction {
            mesh: Arc::clone(mesh),
            values: vec![0.0; mesh.len()],
        }
    }

    /// Strict constructor: rejects wrong length, non-finite values, or nonzero
    /// values at constrained nodes.
    pub fn from_values(mesh: &Arc<Mesh>, values: Vec<f64>) -> Result<Self> {
        if values.len() != mesh.len() {
            return Err(Error::Shape(format!(
                "{} values for {} nodes",
                values.len(),
                mesh.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Shape(format!("non-finite value at node {i}")));
        }
        if let Some(i) = (0..mesh.len()).find(|&i| mesh.is_constrained(i) && values[i] != 0.0) {
            return Err(Error::Shape(format!("nonzero value at constrained node {i}")));
        }
        Ok(DiscreteFunction {
            mesh: Arc::clone(mesh),
            values,
        })
    }

    /// Zeros the constrained nodes of `values`.
    pub fn project(mesh: &Arc<Mesh>, mut values: Vec<f64>) -> Self {
        assert_eq!(values.len(), mesh.len(), "field length must match mesh");
        for (i, v) in values.iter_mut().enumerate() {
            if mesh.is_constrained(i) || !v.is_finite() {
                *v = 0.0;
            }
        }
        DiscreteFunction {
            mesh: Arc::clone(mesh),
            values,
        }
    }

    /// Samples `f` at node coordinates and projects.
    pub fn from_fn<F>(mesh: &Arc<Mesh>, f: F) -> Self
    where
        F: Fn(&[f64]) -> f64 + Sync + Send,
    {
        let n = mesh.dims();
        let mut values = vec![0.0; mesh.len()];
        par::fill(&mut values, |i| {
            if mesh.is_constrained(i) {
                0.0
            } else {
                f(&mesh.coords(i)[..n])
            }
        });
        Self::project(mesh, values)
    }

    pub fn mesh(&self) -> &Arc<Mesh> {
        &self.mesh
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn scaled(&self, t: f64) -> Self {
        Self::project(&self.mesh, self.values.iter().map(|v| t * v).collect())
    }

    /// `self + t * other`.
    pub fn axpy(&self, t: f64, other: &DiscreteFunction) -> Self {
        assert!(self.same_mesh(other), "functions live on different meshes");
        Self::project(
            &self.mesh,
            self.values
                .iter()
                .zip(&other.values)
                .map(|(a, b)| a + t * b)
                .collect(),
        )
    }

    pub fn same_mesh(&self, other: &DiscreteFunction) -> bool {
        Arc::ptr_eq(&self.mesh, &other.mesh)
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn is_zero(&self) -> bool {
        self.values.iter().all(|&v| v == 0.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn unit_interval(n: usize) -> Arc<Mesh> {
        Mesh::build(Domain::interval(0.0, 1.0).unwrap(), &[n], 0.0).unwrap()
    }

    #[test]
    fn interval_spacing_and_weights() {
        let m = unit_interval(11);
        assert!((m.spacing()[0] - 0.1).abs() < 1e-15);
        assert_eq!(m.boundary_mask().iter().filter(|&&b| b).count(), 2);
        assert!((m.weights().iter().sum::<f64>() - 1.0).abs() < 0.02);
    }

    #[test]
    fn box_counts() {
        let m = Mesh::build(Domain::boxed(vec![(0.0, 1.0); 2]).unwrap(), &[5, 5], 0.0).unwrap();
        assert_eq!(m.boundary_mask().iter().filter(|&&b| b).count(), 16);
        assert_eq!(m.free_count(), 9);
    }

    #[test]
    fn strip_volume() {
        let d = Domain::strip(&[(0.0, 1.0)], 1, 4.0).unwrap();
        let m = Mesh::build(d, &[11, 81], 0.0).unwrap();
        assert!((m.weights().iter().sum::<f64>() - 8.0).abs() <= 0.16);
        assert_eq!(m.domain().unbounded_axes, vec![1]);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(Domain::interval(1.0, 1.0).is_err());
        assert!(Domain::strip(&[(0.0, 1.0)], 1, 0.0).is_err());
        assert!(Domain::punctured_box(vec![(-1.0, 1.0); 2], 1.0).is_err());
        assert!(Domain::punctured_box(vec![(0.5, 1.0); 2], 0.1).is_err());
        let d = Domain::interval(0.0, 1.0).unwrap();
        assert!(Mesh::build(d.clone(), &[2], 0.0).is_err());
        assert!(Mesh::build(d.clone(), &[11], 0.5).is_err());
        assert!(Mesh::build(d.clone(), &[11, 11], 0.0).is_err());
        assert!(Mesh::build(d, &[11], -0.1).is_err());
    }

    #[test]
    fn punctured_box_excludes_cap() {
        let d = Domain::punctured_box(vec![(-1.0, 1.0); 3], 0.0).unwrap();
        let m = Mesh::build(d, &[21, 21, 21], 0.15).unwrap();
        // origin, six axis neighbours at 0.1 and twelve face diagonals at 0.141
        assert_eq!(m.excluded_mask().iter().filter(|&&e| e).count(), 19);
        let origin = m.node_at(&[10, 10, 10]);
        assert!(m.is_excluded(origin));
        let ones = vec![1.0; m.len()];
        let cell = m.cell_volume();
        let expect = 8.0 - 19.0 * cell;
        assert!((m.integrate(&ones) - expect).abs() <= cell);
    }

    #[test]
    fn strip_cap_is_a_slab_in_z() {
        let d = Domain::strip(&[(0.0, 1.0)], 1, 2.0).unwrap();
        let m = Mesh::build(d, &[5, 9], 0.3).unwrap();
        for node in 0..m.len() {
            let x = m.coords(node);
            if !m.is_boundary(node) {
                assert_eq!(m.is_excluded(node), x[1].abs() <= 0.3);
            }
        }
    }

    #[test]
    fn gradient_constant_and_affine() {
        let m = Mesh::build(Domain::boxed(vec![(0.0, 1.0); 2]).unwrap(), &[7, 9], 0.0).unwrap();
        let c = vec![3.0; m.len()];
        assert!(m.gradient(&c).iter().all(|g| g.abs() < 1e-12));
        let lin: Vec<f64> = (0..m.len()).map(|i| m.coords(i)[0]).collect();
        let g = m.gradient(&lin);
        for node in 0..m.len() {
            assert!((g[2 * node] - 1.0).abs() < 1e-12);
            assert!(g[2 * node + 1].abs() < 1e-12);
        }
    }

    #[test]
    fn gradient_of_sine() {
        let m = unit_interval(101);
        let u: Vec<f64> = (0..m.len()).map(|i| (PI * m.coords(i)[0]).sin()).collect();
        let g = m.gradient(&u);
        let err = (0..m.len())
            .filter(|&i| !m.is_boundary(i))
            .map(|i| (g[i] - PI * (PI * m.coords(i)[0]).cos()).abs())
            .fold(0.0, f64::max);
        assert!(err <= 1e-3, "err = {err}");
    }

    #[test]
    fn integrate_examples() {
        let m = unit_interval(101);
        assert!((m.integrate(&vec![1.0; m.len()]) - 1.0).abs() < 1e-12);
        let s: Vec<f64> = (0..m.len())
            .map(|i| (PI * m.coords(i)[0]).sin().powi(2))
            .collect();
        assert!((m.integrate(&s) - 0.5).abs() < 1e-3);
    }

    #[test]
    fn refinement_reduces_errors() {
        let err = |n: usize| {
            let m = unit_interval(n);
            let u: Vec<f64> = (0..m.len()).map(|i| (PI * m.coords(i)[0]).sin()).collect();
            let g = m.gradient(&u);
            let gerr = (0..m.len())
                .filter(|&i| !m.is_boundary(i))
                .map(|i| (g[i] - PI * (PI * m.coords(i)[0]).cos()).abs())
                .fold(0.0, f64::max);
            let sq: Vec<f64> = (0..m.len()).map(|i| m.coords(i)[0].powi(2)).collect();
            let ierr = (m.integrate(&sq) - 1.0 / 3.0).abs();
            (gerr, ierr)
        };
        let (g1, i1) = err(21);
        let (g2, i2) = err(41);
        assert!(g2 < g1);
        assert!(i2 < i1);
    }

    #[test]
    fn corner_adjoint_matches_directional_derivative() {
        // E(u) = ½ Σ cw |g|², so <∇E, v> must equal Σ cw g(u)·g(v).
        let m = Mesh::build(Domain::boxed(vec![(0.0, 1.0), (0.0, 2.0)]).unwrap(), &[6, 8], 0.0)
            .unwrap();
        let u = DiscreteFunction::from_fn(&m, |x| (x[0] * 3.0).sin() * x[1] * (2.0 - x[1]));
        let v = DiscreteFunction::from_fn(&m, |x| x[0] * (1.0 - x[0]) * (x[1] + 0.3).cos());
        let cw = m.corner_weight();
        let flux = m.corner_fluxes(|node, s, out| {
            let g = m.corner_gradient(u.values(), node, s);
            for d in 0..2 {
                out[d] = cw * g[d];
            }
        });
        let cov = m.corner_adjoint(&flux);
        let lhs: f64 = cov.iter().zip(v.values()).map(|(a, b)| a * b).sum();
        let rhs = cw
            * m.sum_corners(|node, s| {
                let a = m.corner_gradient(u.values(), node, s);
                let b = m.corner_gradient(v.values(), node, s);
                a[0] * b[0] + a[1] * b[1]
            });
        assert!((lhs - rhs).abs() < 1e-12 * rhs.abs().max(1.0));
    }

    #[test]
    fn corner_energy_is_standard_laplacian_energy() {
        let m = unit_interval(9);
        let u = DiscreteFunction::from_fn(&m, |x| x[0] * (1.0 - x[0]));
        let h = m.spacing()[0];
        let v = u.values();
        let direct: f64 = (0..8).map(|i| h * ((v[i + 1] - v[i]) / h).powi(2)).sum();
        let corner = m.corner_weight()
            * m.sum_corners(|node, s| m.corner_gradient(v, node, s)[0].powi(2));
        assert!((direct - corner).abs() < 1e-14);
    }

    #[test]
    fn discrete_function_invariants() {
        let m = unit_interval(5);
        assert!(DiscreteFunction::from_values(&m, vec![1.0, 0.0, 0.0, 0.0, 0.0]).is_err());
        assert!(DiscreteFunction::from_values(&m, vec![0.0, f64::NAN, 0.0, 0.0, 0.0]).is_err());
        assert!(DiscreteFunction::from_values(&m, vec![0.0; 4]).is_err());
        let u = DiscreteFunction::project(&m, vec![1.0; 5]);
        assert_eq!(u.values(), &[0.0, 1.0, 1.0, 1.0, 0.0]);
    }
}
