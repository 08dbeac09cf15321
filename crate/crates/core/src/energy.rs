//! Energies and norms on the discrete space.
//!
//! Gradient integrals are corner sums (see [`crate::grid`]); nodal integrals
//! use the trapezoidal weights. Where a smoothing `δ > 0` is requested, every
//! `|s|^p` is replaced by `(s² + δ²)^{p/2} - δ^p`, which keeps the functional
//! twice differentiable and vanishes at `s = 0`.

use std::cell::Cell;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{DiscreteFunction, Mesh};
use crate::optim::{self, NcgOptions, Objective};
use crate::par;
use crate::precond::SeparableLaplacian;
use crate::sampling;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnergyParams {
    pub p: f64,
    pub q: f64,
    pub eps: f64,
    pub delta: f64,
}

impl EnergyParams {
    pub fn new(p: f64, q: f64, eps: f64, delta: f64) -> Result<Self> {
        let e = EnergyParams { p, q, eps, delta };
        e.validate()?;
        Ok(e)
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |constraint: &'static str| {
            Err(Error::Constraint {
                constraint,
                detail: format!(
                    "p = {}, q = {}, eps = {}, delta = {}",
                    self.p, self.q, self.eps, self.delta
                ),
            })
        };
        if !(self.p > 1.0 && self.p.is_finite()) {
            return fail("p must exceed 1");
        }
        if !(self.q > 1.0) {
            return fail("q must exceed 1");
        }
        if !(self.q <= self.p) {
            return fail("q must not exceed p");
        }
        if !(self.q > self.p - 1.0) {
            return fail("q must exceed p - 1");
        }
        if !(self.eps >= 0.0 && self.eps < 1.0) {
            return fail("eps must lie in [0, 1)");
        }
        if !(self.delta >= 0.0 && self.delta.is_finite()) {
            return fail("delta must be nonnegative");
        }
        Ok(())
    }

    pub fn with_eps(self, eps: f64) -> Self {
        EnergyParams { eps, ..self }
    }

    pub fn with_delta(self, delta: f64) -> Self {
        EnergyParams { delta, ..self }
    }
}

// ---------------------------------------------------------------------------
// Scalar kernels

/// `(t2 + δ²)^{p/2} - δ^p` for `t2 = |s|²`.
#[inline]
fn spow(t2: f64, p: f64, delta: f64) -> f64 {
    if delta == 0.0 {
        t2.powf(0.5 * p)
    } else {
        (t2 + delta * delta).powf(0.5 * p) - delta.powf(p)
    }
}

/// `spow(t2 + dt2) - spow(t2)` without cancellation, given the increment `dt2`.
#[inline]
fn spow_increment(t2: f64, dt2: f64, p: f64, delta: f64) -> f64 {
    let b = t2 + delta * delta;
    if b == 0.0 {
        return dt2.max(0.0).powf(0.5 * p);
    }
    b.powf(0.5 * p) * (0.5 * p * (dt2 / b).ln_1p()).exp_m1()
}

/// `(t2 + δ²)^{(p-2)/2}`, with the convention `0` at a zero base (it always
/// multiplies a vanishing factor there).
#[inline]
fn dcoef(t2: f64, p: f64, delta: f64) -> f64 {
    let b = t2 + delta * delta;
    if b == 0.0 {
        0.0
    } else {
        b.powf(0.5 * p - 1.0)
    }
}

/// Second-derivative factor `(t2 + δ²)^{(p-4)/2}`.
#[inline]
fn d2coef(t2: f64, p: f64, delta: f64) -> f64 {
    let b = t2 + delta * delta;
    if b == 0.0 {
        0.0
    } else {
        b.powf(0.5 * p - 2.0)
    }
}

#[inline]
fn norm2(g: &[f64]) -> f64 {
    g.iter().map(|x| x * x).sum()
}

/// `T(s)`: identity on `[-1, 1]`, `s/|s|` outside.
pub fn truncate(s: f64) -> f64 {
    s.clamp(-1.0, 1.0)
}

pub fn truncate_field(u: &DiscreteFunction) -> DiscreteFunction {
    DiscreteFunction::project(u.mesh(), u.values().iter().map(|&s| truncate(s)).collect())
}

// ---------------------------------------------------------------------------
// Raw integrals on nodal slices

/// `∫ ρ (|∇u|² + δ²)^{p/2} - δ^p` with `ρ` sampled at the corner's node.
pub(crate) fn grad_power(mesh: &Mesh, u: &[f64], p: f64, delta: f64, rho: Option<&[f64]>) -> f64 {
    let n = mesh.dims();
    let s = mesh.sum_corners(|node, s| {
        let g = mesh.corner_gradient(u, node, s);
        let r = rho.map_or(1.0, |r| r[node]);
        r * spow(norm2(&g[..n]), p, delta)
    });
    mesh.corner_weight() * s
}

/// `∫ c (|u|² + δ²)^{p/2} - δ^p` over non-excluded nodes.
pub(crate) fn nodal_power(mesh: &Mesh, u: &[f64], p: f64, delta: f64, c: Option<&[f64]>) -> f64 {
    mesh.integrate_with(|i| c.map_or(1.0, |c| c[i]) * spow(u[i] * u[i], p, delta))
}

/// Covector of `u ↦ ∫ ρ (|∇u|² + δ²)^{p/2} / p`.
pub(crate) fn grad_power_covector(
    mesh: &Mesh,
    u: &[f64],
    p: f64,
    delta: f64,
    rho: Option<&[f64]>,
) -> Vec<f64> {
    let n = mesh.dims();
    let cw = mesh.corner_weight();
    let flux = mesh.corner_fluxes(|node, s, out| {
        let g = mesh.corner_gradient(u, node, s);
        let a = cw * rho.map_or(1.0, |r| r[node]) * dcoef(norm2(&g[..n]), p, delta);
        for d in 0..n {
            out[d] = a * g[d];
        }
    });
    mesh.corner_adjoint(&flux)
}

/// Adds the covector of `u ↦ ∫ c (|u|² + δ²)^{p/2} / p` into `out`.
pub(crate) fn add_nodal_covector(
    mesh: &Mesh,
    u: &[f64],
    p: f64,
    delta: f64,
    c: Option<&[f64]>,
    out: &mut [f64],
) {
    let w = mesh.weights();
    for i in 0..mesh.len() {
        if !mesh.is_constrained(i) {
            out[i] += w[i] * c.map_or(1.0, |c| c[i]) * dcoef(u[i] * u[i], p, delta) * u[i];
        }
    }
}

// ---------------------------------------------------------------------------
// Forcing

/// Symbolic right-hand side densities.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "expr", rename_all = "snake_case", deny_unknown_fields)]
pub enum Manufactured {
    Zero,
    Constant { value: f64 },
    /// `amplitude · Π_d sin(m_d π (x_d - lo_d) / (hi_d - lo_d))`.
    Sine { amplitude: f64, modes: Vec<u32> },
    /// `amplitude · exp(-|x - center|² / (2 width²))`.
    Gaussian { amplitude: f64, center: Vec<f64>, width: f64 },
}

impl Manufactured {
    pub fn validate(&self, dims: usize) -> Result<()> {
        let bad = |msg: String| Err(Error::Shape(msg));
        match self {
            Manufactured::Sine { modes, amplitude } => {
                if modes.len() != dims || !amplitude.is_finite() {
                    return bad(format!("sine forcing needs {dims} modes and a finite amplitude"));
                }
            }
            Manufactured::Gaussian { center, width, amplitude } => {
                if center.len() != dims || !(*width > 0.0) || !amplitude.is_finite() {
                    return bad(format!(
                        "gaussian forcing needs a {dims}-dimensional center and positive width"
                    ));
                }
            }
            Manufactured::Constant { value } if !value.is_finite() => {
                return bad("constant forcing must be finite".into());
            }
            _ => {}
        }
        Ok(())
    }

    pub fn eval(&self, bounds: &[(f64, f64)], x: &[f64]) -> f64 {
        match self {
            Manufactured::Zero => 0.0,
            Manufactured::Constant { value } => *value,
            Manufactured::Sine { amplitude, modes } => {
                let mut v = *amplitude;
                for ((&xd, &(lo, hi)), &m) in x.iter().zip(bounds).zip(modes) {
                    v *= (m as f64 * std::f64::consts::PI * (xd - lo) / (hi - lo)).sin();
                }
                v
            }
            Manufactured::Gaussian { amplitude, center, width } => {
                let r2: f64 = x.iter().zip(center).map(|(a, c)| (a - c) * (a - c)).sum();
                amplitude * (-r2 / (2.0 * width * width)).exp()
            }
        }
    }
}

#[derive(Clone, Debug)]
pub enum ForcingTerm {
    /// Nodal density `f`, paired as `∫ f u`.
    TabulatedDensity(Vec<f64>),
    Manufactured(Manufactured),
    /// `Σ_n (-Δ u_n - shift · u_n)`, each term paired with `u` by parts:
    /// `∫ ∇u_n · ∇u - shift ∫ u_n u`.
    DistributionalSum {
        components: Vec<DiscreteFunction>,
        shift: f64,
    },
}

/// A forcing term reduced to its pairing covector `ℓ`, with `⟨f, u⟩ = ℓ · u`.
#[derive(Clone, Debug, PartialEq)]
pub struct Load {
    covector: Vec<f64>,
}

impl Load {
    pub fn zero(mesh: &Mesh) -> Self {
        Load {
            covector: vec![0.0; mesh.len()],
        }
    }

    pub fn covector(&self) -> &[f64] {
        &self.covector
    }

    pub fn pairing(&self, u: &DiscreteFunction) -> f64 {
        par::dot(&self.covector, u.values())
    }

    pub fn scaled(&self, t: f64) -> Self {
        Load {
            covector: self.covector.iter().map(|c| t * c).collect(),
        }
    }

    pub fn is_zero(&self) -> bool {
        self.covector.iter().all(|&c| c == 0.0)
    }
}

/// Covector of `u ↦ ½ ∫ |∇u|²`, i.e. the stiffness matrix applied to `v`.
pub fn stiffness_apply(mesh: &Mesh, v: &[f64]) -> Vec<f64> {
    grad_power_covector(mesh, v, 2.0, 0.0, None)
}

impl ForcingTerm {
    pub fn load(&self, mesh: &Arc<Mesh>) -> Result<Load> {
        let len = mesh.len();
        let w = mesh.weights();
        let mut cov = vec![0.0; len];
        match self {
            ForcingTerm::TabulatedDensity(f) => {
                if f.len() != len {
                    return Err(Error::Shape(format!("{} density values for {len} nodes", f.len())));
                }
                if let Some(i) = f.iter().position(|v| !v.is_finite()) {
                    return Err(Error::Shape(format!("non-finite density at node {i}")));
                }
                par::fill(&mut cov, |i| if mesh.is_constrained(i) { 0.0 } else { w[i] * f[i] });
            }
            ForcingTerm::Manufactured(m) => {
                m.validate(mesh.dims())?;
                let bounds = &mesh.domain().bounds;
                let n = mesh.dims();
                par::fill(&mut cov, |i| {
                    if mesh.is_constrained(i) {
                        0.0
                    } else {
                        w[i] * m.eval(bounds, &mesh.coords(i)[..n])
                    }
                });
            }
            ForcingTerm::DistributionalSum { components, shift } => {
                for c in components {
                    if !Arc::ptr_eq(c.mesh(), mesh) {
                        return Err(Error::Shape("forcing component lives on another mesh".into()));
                    }
                    let k = stiffness_apply(mesh, c.values());
                    for i in 0..len {
                        if !mesh.is_constrained(i) {
                            cov[i] += k[i] - shift * w[i] * c.values()[i];
                        }
                    }
                }
            }
        }
        Ok(Load { covector: cov })
    }
}

// ---------------------------------------------------------------------------
// Functionals

/// `Q_V(u) = ∫|∇u|^p - ∫V|u|^p` with nodal potential values `v`.
pub fn q_v(u: &DiscreteFunction, v: &[f64], p: f64) -> f64 {
    let m = u.mesh();
    grad_power(m, u.values(), p, 0.0, None) - nodal_power(m, u.values(), p, 0.0, Some(v))
}

/// `(∫ (|∇u|^q + |u|^q) W)^{1/q}` with nodal weight values `w`.
pub fn y_norm(u: &DiscreteFunction, w: &[f64], q: f64) -> f64 {
    let m = u.mesh();
    let s = grad_power(m, u.values(), q, 0.0, Some(w)) + nodal_power(m, u.values(), q, 0.0, Some(w));
    s.max(0.0).powf(1.0 / q)
}

/// `(∫ |∇u|^p + ∫ |u|^p)^{1/p}`.
pub fn w1p_norm(u: &DiscreteFunction, p: f64) -> f64 {
    let m = u.mesh();
    let s = grad_power(m, u.values(), p, 0.0, None) + nodal_power(m, u.values(), p, 0.0, None);
    s.max(0.0).powf(1.0 / p)
}

/// `∫ |∇u|^p`.
pub fn dirichlet(u: &DiscreteFunction, p: f64) -> f64 {
    grad_power(u.mesh(), u.values(), p, 0.0, None)
}

/// `∫ ρ |u|^p` (`ρ = 1` when absent).
pub fn lp_power(u: &DiscreteFunction, p: f64, rho: Option<&[f64]>) -> f64 {
    nodal_power(u.mesh(), u.values(), p, 0.0, rho)
}

/// Nodal coefficient `ε - (1-ε)V` of the zeroth-order part of `φ_ε`.
pub(crate) fn zeroth_order_coefficient(v: &[f64], eps: f64) -> Vec<f64> {
    v.iter().map(|vi| eps - (1.0 - eps) * vi).collect()
}

/// `φ_ε` on raw values with a precomputed zeroth-order coefficient.
pub(crate) struct Phi<'a> {
    pub mesh: &'a Mesh,
    pub coef: Vec<f64>,
    pub load: &'a Load,
    pub p: f64,
    pub delta: f64,
}

impl<'a> Phi<'a> {
    pub fn new(mesh: &'a Mesh, v: &[f64], load: &'a Load, params: &EnergyParams) -> Self {
        Phi {
            mesh,
            coef: zeroth_order_coefficient(v, params.eps),
            load,
            p: params.p,
            delta: params.delta,
        }
    }

    pub fn value(&self, u: &[f64]) -> f64 {
        let (p, d) = (self.p, self.delta);
        (grad_power(self.mesh, u, p, d, None) + nodal_power(self.mesh, u, p, d, Some(&self.coef)))
            / p
            - par::dot(self.load.covector(), u)
    }

    /// `φ(u + t d) - φ(u)`, accurate relative to its own size.
    pub fn increment(&self, u: &[f64], d: &[f64], t: f64) -> f64 {
        let (p, delta) = (self.p, self.delta);
        let mesh = self.mesh;
        let n = mesh.dims();
        let grad = mesh.sum_corners(|node, s| {
            let g = mesh.corner_gradient(u, node, s);
            let h = mesh.corner_gradient(d, node, s);
            let gh: f64 = (0..n).map(|k| g[k] * h[k]).sum();
            let dt2 = t * (2.0 * gh + t * norm2(&h[..n]));
            spow_increment(norm2(&g[..n]), dt2, p, delta)
        }) * mesh.corner_weight();
        let nodal = mesh.integrate_with(|i| {
            let du2 = t * d[i] * (2.0 * u[i] + t * d[i]);
            self.coef[i] * spow_increment(u[i] * u[i], du2, p, delta)
        });
        (grad + nodal) / p - t * par::dot(self.load.covector(), d)
    }

    pub fn covector(&self, u: &[f64]) -> Vec<f64> {
        let (p, d) = (self.p, self.delta);
        let mut c = grad_power_covector(self.mesh, u, p, d, None);
        add_nodal_covector(self.mesh, u, p, d, Some(&self.coef), &mut c);
        for (i, ci) in c.iter_mut().enumerate() {
            if !self.mesh.is_constrained(i) {
                *ci -= self.load.covector()[i];
            }
        }
        c
    }

    /// Second derivative at `u`, materialized per corner and per node.
    pub fn hessian(&self, u: &[f64]) -> Hessian {
        let mesh = self.mesh;
        let n = mesh.dims();
        let k = mesh.orthants();
        let (p, delta) = (self.p, self.delta);
        let cw = mesh.corner_weight();
        let mut corner = vec![0.0; mesh.len() * k * 2];
        par::fill_blocks(&mut corner, 2 * k, |node, block| {
            for s in 0..k {
                if mesh.orthant_valid(node, s) {
                    let g = mesh.corner_gradient(u, node, s);
                    let t2 = norm2(&g[..n]);
                    block[2 * s] = cw * dcoef(t2, p, delta);
                    block[2 * s + 1] = cw * (p - 2.0) * d2coef(t2, p, delta);
                }
            }
        });
        let w = mesh.weights();
        let nodal = (0..mesh.len())
            .map(|i| {
                if mesh.is_constrained(i) {
                    return 0.0;
                }
                let u2 = u[i] * u[i];
                let f = if u2 + delta * delta == 0.0 {
                    if p == 2.0 {
                        1.0
                    } else {
                        0.0
                    }
                } else {
                    d2coef(u2, p, delta) * ((p - 1.0) * u2 + delta * delta)
                };
                w[i] * self.coef[i] * f
            })
            .collect();
        Hessian {
            u: u.to_vec(),
            corner,
            nodal,
        }
    }
}

pub(crate) struct Hessian {
    u: Vec<f64>,
    corner: Vec<f64>,
    nodal: Vec<f64>,
}

impl Hessian {
    pub fn apply(&self, mesh: &Mesh, h: &[f64]) -> Vec<f64> {
        let n = mesh.dims();
        let k = mesh.orthants();
        let flux = mesh.corner_fluxes(|node, s, out| {
            let g = mesh.corner_gradient(&self.u, node, s);
            let gh = mesh.corner_gradient(h, node, s);
            let a = self.corner[(node * k + s) * 2];
            let b = self.corner[(node * k + s) * 2 + 1];
            let dot: f64 = (0..n).map(|d| g[d] * gh[d]).sum();
            for d in 0..n {
                out[d] = a * gh[d] + b * dot * g[d];
            }
        });
        let mut out = mesh.corner_adjoint(&flux);
        for i in 0..mesh.len() {
            out[i] += self.nodal[i] * h[i];
        }
        out
    }
}

/// `φ_ε(u) = (1/p)∫|∇u|^p - ((1-ε)/p)∫V|u|^p + (ε/p)∫|u|^p - ⟨f, u⟩`,
/// δ-smoothed when `params.delta > 0`.
pub fn phi(u: &DiscreteFunction, v: &[f64], load: &Load, params: &EnergyParams) -> f64 {
    Phi::new(u.mesh(), v, load, params).value(u.values())
}

/// `φ_ε(u + t d) - φ_ε(u)` without cancellation against the size of `φ_ε(u)`.
pub fn phi_increment(
    u: &DiscreteFunction,
    d: &DiscreteFunction,
    t: f64,
    v: &[f64],
    load: &Load,
    params: &EnergyParams,
) -> f64 {
    Phi::new(u.mesh(), v, load, params).increment(u.values(), d.values(), t)
}

/// First variation of `φ_ε` as a covector (`∂φ/∂u_i`), zero at constrained nodes.
pub fn phi_covector(u: &DiscreteFunction, v: &[f64], load: &Load, params: &EnergyParams) -> Vec<f64> {
    Phi::new(u.mesh(), v, load, params).covector(u.values())
}

/// Strong form of the first variation: the covector divided by the nodal
/// quadrature weight, i.e. `-div(a(∇u)∇u) - (1-ε)V|u|^{p-2}u + ε|u|^{p-2}u - f`.
pub fn phi_gradient(
    u: &DiscreteFunction,
    v: &[f64],
    load: &Load,
    params: &EnergyParams,
) -> DiscreteFunction {
    let mesh = u.mesh();
    let c = phi_covector(u, v, load, params);
    let w = mesh.weights();
    DiscreteFunction::project(
        mesh,
        c.iter().enumerate().map(|(i, ci)| ci / w[i]).collect(),
    )
}

/// `∫ ζ (|∇a|^{p-2}∇a - |∇b|^{p-2}∇b) · ∇T(a - b)` with a nodal cutoff `ζ`.
pub fn cauchy_diagnostic(
    a: &DiscreteFunction,
    b: &DiscreteFunction,
    zeta: &[f64],
    p: f64,
) -> f64 {
    let mesh = a.mesh();
    let n = mesh.dims();
    let diff: Vec<f64> = a
        .values()
        .iter()
        .zip(b.values())
        .map(|(x, y)| truncate(x - y))
        .collect();
    let s = mesh.sum_corners(|node, s| {
        let ga = mesh.corner_gradient(a.values(), node, s);
        let gb = mesh.corner_gradient(b.values(), node, s);
        let gt = mesh.corner_gradient(&diff, node, s);
        let ca = dcoef(norm2(&ga[..n]), p, 0.0);
        let cb = dcoef(norm2(&gb[..n]), p, 0.0);
        let dot: f64 = (0..n).map(|d| (ca * ga[d] - cb * gb[d]) * gt[d]).sum();
        zeta[node] * dot
    });
    mesh.corner_weight() * s
}

// ---------------------------------------------------------------------------
// Dual norms

#[derive(Clone, Debug)]
pub struct DualNormEstimate {
    /// Best value of `⟨f, u⟩ / Q(u)^{1/p}` seen along the ascent.
    pub value: f64,
    pub iterations: usize,
    /// Maximizer normalized to `Q(u) = 1`.
    pub maximizer: Vec<f64>,
}

/// Minimizes `-⟨f,u⟩ / Q(u)^{1/p}` with `Q(u) = ∫|∇u|^p - ∫V|u|^p + c∫|u|^p`.
struct DualObjective<'a> {
    mesh: &'a Mesh,
    load: &'a Load,
    /// Coefficient of `|u|^p` in `Q`: `c - V`.
    coef: Vec<f64>,
    p: f64,
    precond: SeparableLaplacian,
    indefinite: Cell<bool>,
}

impl DualObjective<'_> {
    fn q(&self, x: &[f64]) -> f64 {
        grad_power(self.mesh, x, self.p, 0.0, None)
            + nodal_power(self.mesh, x, self.p, 0.0, Some(&self.coef))
    }
}

impl Objective for DualObjective<'_> {
    fn value(&self, x: &[f64]) -> f64 {
        let q = self.q(x);
        if !(q > 0.0) {
            if x.iter().any(|&v| v != 0.0) {
                self.indefinite.set(true);
            }
            return f64::NAN;
        }
        -par::dot(self.load.covector(), x) / q.powf(1.0 / self.p)
    }

    fn gradient(&self, x: &[f64]) -> Vec<f64> {
        let p = self.p;
        let q = self.q(x);
        let l = par::dot(self.load.covector(), x);
        // ∇Q / p
        let mut dq = grad_power_covector(self.mesh, x, p, 0.0, None);
        add_nodal_covector(self.mesh, x, p, 0.0, Some(&self.coef), &mut dq);
        let s = q.powf(-1.0 / p);
        let t = l * q.powf(-1.0 / p - 1.0);
        (0..x.len())
            .map(|i| {
                if self.mesh.is_constrained(i) {
                    0.0
                } else {
                    -self.load.covector()[i] * s + t * dq[i]
                }
            })
            .collect()
    }

    fn precondition(&self, g: &[f64]) -> Vec<f64> {
        self.precond.solve(self.mesh, g, 0.0)
    }

    fn renormalize(&self, x: &mut [f64]) -> f64 {
        let q = self.q(x);
        if !(q > 0.0) {
            return 1.0;
        }
        let t = q.powf(-1.0 / self.p);
        x.iter_mut().for_each(|v| *v *= t);
        t
    }
}

fn dual_estimate(
    mesh: &Arc<Mesh>,
    load: &Load,
    coef: Vec<f64>,
    p: f64,
    budget: usize,
    seed: u64,
) -> Result<DualNormEstimate> {
    if load.is_zero() {
        return Ok(DualNormEstimate {
            value: 0.0,
            iterations: 0,
            maximizer: vec![0.0; mesh.len()],
        });
    }
    let obj = DualObjective {
        mesh,
        load,
        coef,
        p,
        precond: SeparableLaplacian::new(mesh),
        indefinite: Cell::new(false),
    };
    let mut x0 = obj.precondition(load.covector());
    if par::dot(load.covector(), &x0) <= 0.0 {
        let bounds = mesh.domain().bounds.clone();
        if let Some((_, u)) = sampling::nonzero_bump(seed, 0, mesh, &bounds) {
            x0 = u.into_values();
        }
        if par::dot(load.covector(), &x0) < 0.0 {
            x0.iter_mut().for_each(|v| *v = -*v);
        }
    }
    // Scale-free start, so that the iterates do not depend on |f|.
    let m = x0.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if m > 0.0 {
        x0.iter_mut().for_each(|v| *v /= m);
    }
    let q0 = obj.q(&x0);
    if !(q0 > 0.0) {
        return Err(Error::Indefinite(format!(
            "Q(u) = {q0:e} <= 0 at the initial ascent iterate"
        )));
    }
    let opts = NcgOptions {
        max_iter: budget,
        grad_tol: 1e-11,
        grad_tol_relative: true,
        value_tol: 1e-15,
        stall_iters: 3,
        initial_step: 1.0,
    };
    let out = optim::ncg_minimize(&obj, x0, &opts);
    if obj.indefinite.get() {
        return Err(Error::Indefinite(
            "Q(u) <= 0 for a nonzero ascent iterate".into(),
        ));
    }
    let best = out.history.iter().fold(f64::INFINITY, |m, &v| m.min(v));
    Ok(DualNormEstimate {
        value: -best,
        iterations: out.iterations,
        maximizer: out.x,
    })
}

/// Lower estimate of `sup {⟨f,u⟩ : Q_V(u) = 1}` by preconditioned ascent.
pub fn dual_norm(
    load: &Load,
    mesh: &Arc<Mesh>,
    v: &[f64],
    p: f64,
    budget: usize,
    seed: u64,
) -> Result<DualNormEstimate> {
    dual_estimate(mesh, load, v.iter().map(|x| -x).collect(), p, budget, seed)
}

/// Lower estimate of the `W^{1,p}` dual norm `sup {⟨f,u⟩ : ‖u‖_{W^{1,p}} = 1}`.
pub fn dual_norm_w1p(
    load: &Load,
    mesh: &Arc<Mesh>,
    p: f64,
    budget: usize,
    seed: u64,
) -> Result<DualNormEstimate> {
    dual_estimate(mesh, load, vec![1.0; mesh.len()], p, budget, seed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Domain;
    use std::f64::consts::PI;

    fn interval(n: usize) -> Arc<Mesh> {
        Mesh::build(Domain::interval(0.0, 1.0).unwrap(), &[n], 0.0).unwrap()
    }

    #[test]
    fn params_validation_names_constraint() {
        assert!(EnergyParams::new(0.5, 0.5, 0.1, 0.0)
            .unwrap_err()
            .to_string()
            .contains("p must exceed 1"));
        assert!(EnergyParams::new(2.0, 2.0, 1.0, 0.0).is_err());
        assert!(EnergyParams::new(2.0, 2.0, 0.0, -1.0).is_err());
        assert!(EnergyParams::new(3.0, 2.5, 0.5, 0.0).is_ok());
    }

    #[test]
    fn truncation() {
        assert_eq!(truncate(0.5), 0.5);
        assert_eq!(truncate(-3.0), -1.0);
        for s in [-5.0, -1.0, -0.3, 0.0, 0.9, 1.0, 7.0] {
            assert_eq!(truncate(truncate(s)), truncate(s));
            assert_eq!(truncate(-s), -truncate(s));
        }
    }

    #[test]
    fn q_v_of_sine() {
        let mesh = interval(201);
        let u = DiscreteFunction::from_fn(&mesh, |x| (PI * x[0]).sin());
        let v0 = vec![0.0; mesh.len()];
        assert!((q_v(&u, &v0, 2.0) - PI * PI / 2.0).abs() < 0.05);
        let lam = vec![3.0; mesh.len()];
        let expect = dirichlet(&u, 2.0) - 3.0 * lp_power(&u, 2.0, None);
        assert!((q_v(&u, &lam, 2.0) - expect).abs() < 1e-12);
        assert_eq!(q_v(&DiscreteFunction::zeros(&mesh), &v0, 2.0), 0.0);
    }

    #[test]
    fn linear_phi_gradient_is_laplacian_minus_f() {
        let mesh = interval(41);
        let h = mesh.spacing()[0];
        let u = DiscreteFunction::from_fn(&mesh, |x| x[0] * (1.0 - x[0]) * (3.0 * x[0]).cos());
        let f: Vec<f64> = (0..mesh.len()).map(|i| (i as f64 * 0.3).sin()).collect();
        let load = ForcingTerm::TabulatedDensity(f.clone()).load(&mesh).unwrap();
        let params = EnergyParams::new(2.0, 2.0, 0.0, 0.0).unwrap();
        let g = phi_gradient(&u, &vec![0.0; mesh.len()], &load, &params);
        let uv = u.values();
        for i in 1..mesh.len() - 1 {
            let lap = -(uv[i + 1] - 2.0 * uv[i] + uv[i - 1]) / (h * h);
            assert!((g.values()[i] - (lap - f[i])).abs() < 1e-9);
        }
    }

    #[test]
    fn cauchy_diagnostic_linear_identity() {
        let mesh = Mesh::build(Domain::boxed(vec![(0.0, 1.0); 2]).unwrap(), &[9, 9], 0.0).unwrap();
        let a = DiscreteFunction::from_fn(&mesh, |x| 0.3 * (PI * x[0]).sin() * x[1]);
        let b = DiscreteFunction::from_fn(&mesh, |x| 0.2 * x[0] * x[1]);
        let zeta = vec![1.0; mesh.len()];
        let d = a.axpy(-1.0, &b);
        let expect = dirichlet(&d, 2.0);
        let got = cauchy_diagnostic(&a, &b, &zeta, 2.0);
        assert!((got - expect).abs() < 1e-14, "{got} vs {expect}");
        assert_eq!(cauchy_diagnostic(&a, &a, &zeta, 3.0), 0.0);
    }

    #[test]
    fn y_norm_linear_case() {
        let mesh = interval(51);
        let u = DiscreteFunction::from_fn(&mesh, |x| (2.0 * PI * x[0]).sin());
        let w = vec![1.0; mesh.len()];
        let y = y_norm(&u, &w, 2.0);
        let direct = dirichlet(&u, 2.0) + lp_power(&u, 2.0, None);
        assert!((y * y - direct).abs() < 1e-12);
        assert_eq!(y_norm(&u.scaled(2.0), &w, 2.0), 2.0 * y);
    }

    #[test]
    fn dual_norm_of_zero_and_riesz_value() {
        let mesh = Mesh::build(Domain::boxed(vec![(0.0, 1.0); 2]).unwrap(), &[13, 13], 0.0)
            .unwrap();
        let v0 = vec![0.0; mesh.len()];
        let zero = Load::zero(&mesh);
        assert_eq!(dual_norm(&zero, &mesh, &v0, 2.0, 10, 1).unwrap().value, 0.0);
        let u0 = DiscreteFunction::from_fn(&mesh, |x| x[0] * x[1] * (1.0 - x[0]) * (1.0 - x[1]));
        let load = ForcingTerm::DistributionalSum {
            components: vec![u0.clone()],
            shift: 0.0,
        }
        .load(&mesh)
        .unwrap();
        let est = dual_norm(&load, &mesh, &v0, 2.0, 50, 1).unwrap();
        let exact = dirichlet(&u0, 2.0).sqrt();
        assert!((est.value - exact).abs() < 1e-10 * exact);
        let est2 = dual_norm(&load.scaled(2.0), &mesh, &v0, 2.0, 50, 1).unwrap();
        assert_eq!(est2.value, 2.0 * est.value);
    }
}
