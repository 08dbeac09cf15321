//! First eigenvalues of the p-Laplacian and sampling certificates for the
//! inequalities behind the existence theory.
//!
//! Certificates are falsification checks: a `Violation` verdict refutes an
//! inequality on the sampled discrete functions, `NoViolation` only means no
//! counterexample was found.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::energy::{
    self, add_nodal_covector, grad_power, grad_power_covector, nodal_power, ForcingTerm,
};
use crate::error::{Error, Result};
use crate::grid::{DiscreteFunction, Domain, Mesh};
use crate::optim::{self, NcgOptions, Objective};
use crate::par;
use crate::potentials::hardy_constant;
use crate::precond::SeparableLaplacian;
use crate::sampling;

#[derive(Clone, Debug)]
pub struct EigenResult {
    /// Smallest Rayleigh quotient found over all seeds.
    pub lambda: f64,
    /// Minimizer normalized to `∫ ρ|u|^p = 1`.
    pub minimizer: DiscreteFunction,
    pub iterations: usize,
    /// Preconditioned gradient norm of the quotient at the minimizer.
    pub residual: f64,
    pub per_seed: Vec<f64>,
    /// Quotient after every accepted step of the best seed.
    pub history: Vec<f64>,
    /// Set when two seeds disagree by more than `10 · tol` (relative).
    pub warning: Option<String>,
}

#[derive(Clone, Debug)]
pub struct RayleighOptions {
    /// Nodal `V` subtracted in the numerator: `(∫|∇u|^p - ∫V|u|^p) / ∫ρ|u|^p`.
    pub potential: Option<Vec<f64>>,
    /// Nodal weight `ρ` of the denominator.
    pub weight: Option<Vec<f64>>,
    pub tol: f64,
    pub max_iter: usize,
    pub seeds: usize,
}

impl Default for RayleighOptions {
    fn default() -> Self {
        RayleighOptions {
            potential: None,
            weight: None,
            tol: 1e-10,
            max_iter: 2000,
            seeds: 2,
        }
    }
}

struct Quotient<'a> {
    mesh: &'a Mesh,
    p: f64,
    v: Option<&'a [f64]>,
    rho: Option<&'a [f64]>,
    precond: SeparableLaplacian,
}

impl Quotient<'_> {
    fn parts(&self, x: &[f64]) -> (f64, f64) {
        let mut num = grad_power(self.mesh, x, self.p, 0.0, None);
        if let Some(v) = self.v {
            num -= nodal_power(self.mesh, x, self.p, 0.0, Some(v));
        }
        (num, nodal_power(self.mesh, x, self.p, 0.0, self.rho))
    }
}

impl Objective for Quotient<'_> {
    fn value(&self, x: &[f64]) -> f64 {
        let (num, den) = self.parts(x);
        if den > 0.0 {
            num / den
        } else {
            f64::NAN
        }
    }

    fn gradient(&self, x: &[f64]) -> Vec<f64> {
        let p = self.p;
        let (num, den) = self.parts(x);
        let r = num / den;
        let mut ce = grad_power_covector(self.mesh, x, p, 0.0, None);
        if let Some(v) = self.v {
            let neg: Vec<f64> = v.iter().map(|a| -a).collect();
            add_nodal_covector(self.mesh, x, p, 0.0, Some(&neg), &mut ce);
        }
        let mut cn = vec![0.0; x.len()];
        add_nodal_covector(self.mesh, x, p, 0.0, self.rho, &mut cn);
        (0..x.len()).map(|i| p * (ce[i] - r * cn[i]) / den).collect()
    }

    fn precondition(&self, g: &[f64]) -> Vec<f64> {
        self.precond.solve(self.mesh, g, 0.0)
    }

    fn renormalize(&self, x: &mut [f64]) -> f64 {
        let den = nodal_power(self.mesh, x, self.p, 0.0, self.rho);
        if !(den > 0.0) {
            return 1.0;
        }
        let t = den.powf(-1.0 / self.p);
        x.iter_mut().for_each(|v| *v *= t);
        t
    }
}

fn initial_guess(mesh: &Arc<Mesh>, seed: u64) -> Vec<f64> {
    let bounds = mesh.domain().bounds.clone();
    let bump = sampling::nonzero_bump(seed, u64::MAX, mesh, &bounds);
    let n = mesh.dims();
    let mut x = vec![0.0; mesh.len()];
    par::fill(&mut x, |i| {
        if mesh.is_constrained(i) {
            return 0.0;
        }
        let c = mesh.coords(i);
        let mut s = 1.0;
        for d in 0..n {
            let (lo, hi) = bounds[d];
            s *= (PI * (c[d] - lo) / (hi - lo)).sin();
        }
        let b = bump.as_ref().map_or(0.0, |(_, u)| u.values()[i]);
        s * (1.0 + 0.25 * b)
    });
    x
}

/// Minimizes `∫|∇u|^p / ∫|u|^p` by preconditioned nonlinear conjugate
/// gradients with renormalization each step.
pub fn rayleigh_min(mesh: &Arc<Mesh>, p: f64, tol: f64, max_iter: usize, seed: u64) -> EigenResult {
    rayleigh_min_with(
        mesh,
        p,
        &RayleighOptions {
            tol,
            max_iter,
            ..Default::default()
        },
        seed,
    )
}

pub fn rayleigh_min_with(mesh: &Arc<Mesh>, p: f64, opts: &RayleighOptions, seed: u64) -> EigenResult {
    let obj = Quotient {
        mesh,
        p,
        v: opts.potential.as_deref(),
        rho: opts.weight.as_deref(),
        precond: SeparableLaplacian::new(mesh),
    };
    let ncg = NcgOptions {
        max_iter: opts.max_iter,
        grad_tol: opts.tol,
        grad_tol_relative: true,
        value_tol: 1e-15,
        stall_iters: 8,
        initial_step: 1.0,
    };
    let seeds = opts.seeds.max(1);
    let runs: Vec<_> = (0..seeds)
        .map(|k| optim::ncg_minimize(&obj, initial_guess(mesh, seed.wrapping_add(k as u64)), &ncg))
        .collect();
    let per_seed: Vec<f64> = runs.iter().map(|r| r.value).collect();
    let best = (0..seeds)
        .min_by(|&a, &b| per_seed[a].total_cmp(&per_seed[b]))
        .unwrap_or(0);
    let lo = per_seed.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = per_seed.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let warning = (hi - lo > 10.0 * opts.tol * lo.abs().max(1e-300))
        .then(|| format!("seeds disagree: quotient range [{lo:.12e}, {hi:.12e}]"));
    let run = runs.into_iter().nth(best).expect("at least one seed");
    EigenResult {
        lambda: run.value,
        minimizer: DiscreteFunction::project(mesh, run.x),
        iterations: run.iterations,
        residual: run.grad_norm,
        per_seed,
        history: run.history,
        warning,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    NoViolation,
    Violation,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CertificationRecord {
    pub inequality_id: String,
    pub sample_count: usize,
    /// Minimum over samples of `LHS - RHS`, relative to the size of the
    /// left-hand side except for the eigenvalue comparison.
    pub worst_margin: f64,
    pub worst_sample: String,
    pub tolerance: f64,
    pub verdict: Verdict,
    /// Additional reported quantities (estimated constants, probe values).
    pub extras: BTreeMap<String, f64>,
}

impl CertificationRecord {
    /// Verdict is `Violation` iff the smallest margin is below `-tolerance`.
    fn from_margins(
        id: &str,
        margins: Vec<(String, f64)>,
        tolerance: f64,
        extras: BTreeMap<String, f64>,
    ) -> Self {
        let mut worst = f64::INFINITY;
        let mut worst_desc = String::new();
        for (desc, m) in &margins {
            // NaN margins count as violations.
            if worst_desc.is_empty() || !(*m >= worst) {
                worst = *m;
                worst_desc = desc.clone();
            }
        }
        CertificationRecord {
            inequality_id: id.to_string(),
            sample_count: margins.len(),
            worst_margin: worst,
            worst_sample: worst_desc,
            tolerance,
            verdict: if worst >= -tolerance {
                Verdict::NoViolation
            } else {
                Verdict::Violation
            },
            extras,
        }
    }

    pub fn violated(&self) -> bool {
        self.verdict == Verdict::Violation
    }
}

/// Sampling controls shared by the certification checks.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CertifyOptions {
    pub samples: usize,
    pub seed: u64,
    /// Relative margin tolerance: in units of `∫|∇u|^p` for functional
    /// inequalities, of the left-hand side for pointwise ones.
    pub tolerance: f64,
    /// Multiplies every certified constant; values above 1 plant violations.
    pub constant_scale: f64,
}

impl Default for CertifyOptions {
    fn default() -> Self {
        CertifyOptions {
            samples: 200,
            seed: 0,
            tolerance: 1e-8,
            constant_scale: 1.0,
        }
    }
}

// ---------------------------------------------------------------------------
// Pointwise inequalities

/// Ratio `(|x|^{p-2}x - |y|^{p-2}y)·(x-y) / D(x, y)` where `D = |x-y|^p` for
/// `p ≥ 2` and `|x-y|² (|x|+|y|)^{p-2}` for `p < 2`. `None` for `x = y`.
pub fn monotonicity_ratio(x: &[f64], y: &[f64], p: f64) -> Option<f64> {
    let nx = x.iter().map(|a| a * a).sum::<f64>().sqrt();
    let ny = y.iter().map(|a| a * a).sum::<f64>().sqrt();
    let d2: f64 = x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum();
    if d2 == 0.0 {
        return None;
    }
    let cx = if nx == 0.0 { 0.0 } else { nx.powf(p - 2.0) };
    let cy = if ny == 0.0 { 0.0 } else { ny.powf(p - 2.0) };
    let pairing: f64 = x
        .iter()
        .zip(y)
        .map(|(a, b)| (cx * a - cy * b) * (a - b))
        .sum();
    let denom = if p >= 2.0 {
        d2.powf(0.5 * p)
    } else {
        d2 * (nx + ny).powf(p - 2.0)
    };
    Some(pairing / denom)
}

/// Estimates the monotonicity constant `c` as the smallest ratio over seeded
/// random vector pairs of dimension `dim` (magnitudes log-uniform over six
/// decades) plus the axis-aligned antipodal pair.
pub fn monotonicity_constant_check(p: f64, dim: usize, opts: &CertifyOptions) -> Result<CertificationRecord> {
    let (samples, seed) = (opts.samples, opts.seed);
    if !(p > 1.0) || dim == 0 {
        return Err(Error::Constraint {
            constraint: "p must exceed 1",
            detail: format!("p = {p}, dim = {dim}"),
        });
    }
    let ratios: Vec<Option<f64>> = par::map(samples, |k| {
        let mut rng = sampling::rng_for(seed, k as u64);
        let draw = |rng: &mut rand_chacha::ChaCha8Rng| {
            let scale = 10f64.powf(rng.gen_range(-3.0..3.0));
            (0..dim).map(|_| scale * rng.gen_range(-1.0..1.0)).collect::<Vec<f64>>()
        };
        let x = draw(&mut rng);
        let y = draw(&mut rng);
        monotonicity_ratio(&x, &y, p)
    });
    let mut e1 = vec![0.0; dim];
    e1[0] = 1.0;
    let m1: Vec<f64> = e1.iter().map(|v| -v).collect();
    let mut entries: Vec<(String, f64)> = ratios
        .into_iter()
        .enumerate()
        .filter_map(|(k, r)| r.map(|r| (format!("pair #{k}"), r)))
        .collect();
    if let Some(r) = monotonicity_ratio(&e1, &m1, p) {
        entries.push(("x = e1, y = -e1".to_string(), r));
    }
    let c_est = entries.iter().map(|e| e.1).fold(f64::INFINITY, f64::min);
    let mut extras = BTreeMap::new();
    extras.insert("c_est".to_string(), c_est);
    extras.insert("skipped_degenerate".to_string(), (samples + 1 - entries.len()) as f64);
    // The certified statement is c > 0: the margin of each pair is its ratio.
    Ok(CertificationRecord::from_margins(
        "monotonicity",
        entries,
        0.0,
        extras,
    ))
}

/// Relative margin of the power-mean bound at `(a, b)`:
/// `1 - scale · C_p (a^{p/2} + b^{p/2}) / (a+b)^{p/2}` with `C_p = 1` for
/// `p ≥ 2` and `2^{(p-2)/2}` otherwise.
pub fn power_mean_margin(a: f64, b: f64, p: f64, scale: f64) -> Option<f64> {
    let lhs = (a + b).powf(0.5 * p);
    if !(lhs > 0.0) {
        return None;
    }
    let c = if p >= 2.0 { 1.0 } else { 2f64.powf(0.5 * (p - 2.0)) };
    Some(1.0 - scale * c * (a.powf(0.5 * p) + b.powf(0.5 * p)) / lhs)
}

pub fn power_mean_check(p: f64, opts: &CertifyOptions) -> Result<CertificationRecord> {
    let (samples, seed, constant_scale, tol) = (opts.samples, opts.seed, opts.constant_scale, opts.tolerance);
    if !(p > 1.0) {
        return Err(Error::Constraint {
            constraint: "p must exceed 1",
            detail: format!("p = {p}"),
        });
    }
    let mut entries = Vec::new();
    // Log-uniform grid including the diagonal and the axis b = 0.
    let grid: Vec<f64> = (-24..=24).map(|k| 10f64.powf(k as f64 / 4.0)).collect();
    for &a in &grid {
        for &b in grid.iter().chain(std::iter::once(&0.0)) {
            if let Some(m) = power_mean_margin(a, b, p, constant_scale) {
                entries.push((format!("a={a:.3e} b={b:.3e}"), m));
            }
        }
    }
    let random: Vec<Option<(String, f64)>> = par::map(samples, |k| {
        let mut rng = sampling::rng_for(seed, k as u64);
        let a = 10f64.powf(rng.gen_range(-6.0..6.0));
        let b = 10f64.powf(rng.gen_range(-6.0..6.0));
        power_mean_margin(a, b, p, constant_scale).map(|m| (format!("a={a:.6e} b={b:.6e}"), m))
    });
    entries.extend(random.into_iter().flatten());
    let mut extras = BTreeMap::new();
    extras.insert("constant_scale".to_string(), constant_scale);
    Ok(CertificationRecord::from_margins("power_mean", entries, tol, extras))
}

// ---------------------------------------------------------------------------
// Functional inequalities

/// Samples seeded bumps on `mesh` and evaluates `margin(u)`, which returns
/// `(LHS - RHS, lhs_scale)`. Margins are recorded relative to `lhs_scale`.
fn sample_functional<F>(mesh: &Arc<Mesh>, opts: &CertifyOptions, margin: F) -> Vec<(String, f64)>
where
    F: Fn(&DiscreteFunction) -> (f64, f64) + Sync + Send,
{
    let bounds = mesh.domain().bounds.clone();
    par::map(opts.samples, |k| {
        sampling::nonzero_bump(opts.seed, k as u64, mesh, &bounds).map(|(b, u)| {
            let (m, scale) = margin(&u);
            (b.describe(), m / scale)
        })
    })
    .into_iter()
    .flatten()
    .collect()
}

/// `∫|∇u|^p ≥ scale · ((N-p)/p)^p ∫|u|^p/|x|^p` on a mesh whose exclusion cap
/// surrounds the origin. With `probe`, also minimizes the weighted quotient
/// and reports its value under `probe_infimum`.
pub fn hardy_check(mesh: &Arc<Mesh>, p: f64, probe: bool, opts: &CertifyOptions) -> Result<CertificationRecord> {
    let n = mesh.dims();
    let c = hardy_constant(n, p)?;
    if mesh.exclusion_radius() <= 0.0 {
        return Err(Error::Mesh("Hardy check needs a punctured mesh or a positive cap".into()));
    }
    let all: Vec<usize> = (0..n).collect();
    let rho: Vec<f64> = (0..mesh.len())
        .map(|i| {
            if mesh.is_excluded(i) {
                0.0
            } else {
                mesh.partial_norm(i, &all).powf(-p)
            }
        })
        .collect();
    let scaled = opts.constant_scale * c;
    let margin = |u: &DiscreteFunction| {
        let lhs = energy::dirichlet(u, p);
        (lhs - scaled * energy::lp_power(u, p, Some(&rho)), lhs)
    };
    let mut entries = sample_functional(mesh, opts, margin);
    let mut extras = BTreeMap::new();
    extras.insert("constant".to_string(), scaled);
    if probe {
        let eig = rayleigh_min_with(
            mesh,
            p,
            &RayleighOptions {
                weight: Some(rho.clone()),
                tol: 1e-8,
                max_iter: 1500,
                seeds: 1,
                ..Default::default()
            },
            opts.seed,
        );
        let (m, s) = margin(&eig.minimizer);
        entries.push(("quotient probe minimizer".to_string(), m / s));
        extras.insert("probe_infimum".to_string(), eig.lambda);
        extras.insert("probe_iterations".to_string(), eig.iterations as f64);
    }
    Ok(CertificationRecord::from_margins("hardy", entries, opts.tolerance, extras))
}

/// Builds the strip `ω × (-L, L)^M` with `z` spacing as close as possible to `hz`.
pub fn strip_mesh(
    omega: &[(f64, f64)],
    omega_nodes: &[usize],
    m: usize,
    l: f64,
    hz: f64,
    cap: f64,
) -> Result<Arc<Mesh>> {
    let domain = Domain::strip(omega, m, l)?;
    let nz = ((2.0 * l / hz).round() as usize + 1).max(3);
    let mut nodes = omega_nodes.to_vec();
    nodes.extend(std::iter::repeat(nz).take(m));
    Mesh::build(domain, &nodes, cap)
}

fn omega_mesh(omega: &[(f64, f64)], omega_nodes: &[usize]) -> Result<Arc<Mesh>> {
    let domain = if omega.len() == 1 {
        Domain::interval(omega[0].0, omega[0].1)?
    } else {
        Domain::boxed(omega.to_vec())?
    };
    Mesh::build(domain, omega_nodes, 0.0)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CylinderRow {
    pub l: f64,
    pub lambda_strip: f64,
    pub lambda_omega: f64,
    pub gap: f64,
    /// Quotient of `v ⊗ w` with `v` the ω minimizer and `w` a plateau of half-width `L/2`.
    pub tensor_bound: f64,
    pub iterations: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CylinderCheck {
    pub record: CertificationRecord,
    pub rows: Vec<CylinderRow>,
    /// Gaps strictly decrease with `L`.
    pub monotone: bool,
}

/// Flat on `|t| ≤ 1`, `cos²` ramp to zero at `|t| = 2`.
pub fn plateau(t: f64) -> f64 {
    let a = t.abs();
    if a <= 1.0 {
        1.0
    } else if a < 2.0 {
        let c = (0.5 * PI * (a - 1.0)).cos();
        c * c
    } else {
        0.0
    }
}

/// Compares `λ_{1,p}(ω)` with `λ_{1,p}(ω × (-L, L)^M)` for each `L`, on
/// strip meshes that share the ω grid and the `z` spacing `hz`.
pub fn cylinder_eigen_check(
    omega: &[(f64, f64)],
    omega_nodes: &[usize],
    m: usize,
    l_values: &[f64],
    hz: f64,
    p: f64,
    tol: f64,
    seed: u64,
) -> Result<CylinderCheck> {
    if m == 0 {
        return Err(Error::Constraint {
            constraint: "M >= 1",
            detail: "M = 0".into(),
        });
    }
    if l_values.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::Constraint {
            constraint: "truncation lengths must increase",
            detail: format!("{l_values:?}"),
        });
    }
    let om = omega_mesh(omega, omega_nodes)?;
    let eig_tol = 1e-11;
    let base = rayleigh_min(&om, p, eig_tol, 5000, seed);
    let lam_w = base.lambda;
    let k = omega.len();
    let mut rows = Vec::with_capacity(l_values.len());
    for &l in l_values {
        let mesh = strip_mesh(omega, omega_nodes, m, l, hz, 0.0)?;
        let strip = rayleigh_min(&mesh, p, eig_tol, 5000, seed);
        // Tensor upper bound.
        let v = base.minimizer.values();
        let tensor = DiscreteFunction::from_fn(&mesh, |x| {
            let idx = omega_index(&om, &x[..k]);
            let w: f64 = x[k..].iter().map(|z| plateau(2.0 * z / l)).product();
            v[idx] * w
        });
        let tb = energy::dirichlet(&tensor, p) / energy::lp_power(&tensor, p, None);
        rows.push(CylinderRow {
            l,
            lambda_strip: strip.lambda,
            lambda_omega: lam_w,
            gap: strip.lambda - lam_w,
            tensor_bound: tb,
            iterations: strip.iterations,
        });
    }
    let monotone = rows.windows(2).all(|w| w[1].gap < w[0].gap);
    let entries = rows
        .iter()
        .map(|r| (format!("L = {}", r.l), r.gap))
        .collect();
    let mut extras = BTreeMap::new();
    extras.insert("lambda_omega".to_string(), lam_w);
    let record = CertificationRecord::from_margins("cylinder_eigenvalue", entries, tol, extras);
    Ok(CylinderCheck {
        record,
        rows,
        monotone,
    })
}

/// Node of the ω mesh at coordinates `y` (which must lie on the grid).
fn omega_index(om: &Mesh, y: &[f64]) -> usize {
    let idx: Vec<usize> = y
        .iter()
        .enumerate()
        .map(|(d, &c)| ((c - om.domain().bounds[d].0) / om.spacing()[d]).round() as usize)
        .collect();
    om.node_at(&idx)
}

/// `∫(|∇u|^p - λ|u|^p) ≥ scale · C ∫|u|^p/|z|^p` on `ω × (-L, L)^M`, where
/// `C = ((M-p)/p)^p`, times `2^{(p-2)/2}` for `p < 2`, and `λ` is the
/// computed first eigenvalue of ω on the same `y` grid.
#[allow(clippy::too_many_arguments)]
pub fn poincare_remainder_check(
    omega: &[(f64, f64)],
    omega_nodes: &[usize],
    m: usize,
    l: f64,
    hz: f64,
    cap: f64,
    p: f64,
    opts: &CertifyOptions,
) -> Result<CertificationRecord> {
    let mf = m as f64;
    if !(mf > p) || !(p > 1.0) {
        return Err(Error::Constraint {
            constraint: "remainder term needs M > p > 1",
            detail: format!("M = {m}, p = {p}"),
        });
    }
    let om = omega_mesh(omega, omega_nodes)?;
    let lam = rayleigh_min(&om, p, 1e-11, 5000, opts.seed).lambda;
    let mesh = strip_mesh(omega, omega_nodes, m, l, hz, cap)?;
    let mut c = ((mf - p) / p).powf(p);
    if p < 2.0 {
        c *= 2f64.powf(0.5 * (p - 2.0));
    }
    let z_axes: Vec<usize> = mesh.domain().unbounded_axes.clone();
    let rho: Vec<f64> = (0..mesh.len())
        .map(|i| {
            if mesh.is_excluded(i) {
                0.0
            } else {
                let r = mesh.partial_norm(i, &z_axes);
                if r > 0.0 {
                    r.powf(-p)
                } else {
                    0.0
                }
            }
        })
        .collect();
    let scaled = opts.constant_scale * c;
    let entries = sample_functional(&mesh, opts, |u| {
        let grad = energy::dirichlet(u, p);
        let lhs = grad - lam * energy::lp_power(u, p, None);
        (lhs - scaled * energy::lp_power(u, p, Some(&rho)), grad)
    });
    let mut extras = BTreeMap::new();
    extras.insert("lambda_omega".to_string(), lam);
    extras.insert("constant".to_string(), scaled);
    Ok(CertificationRecord::from_margins("poincare_remainder", entries, opts.tolerance, extras))
}

// ---------------------------------------------------------------------------
// Blow-up example

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BlowupRow {
    pub k: usize,
    /// `Σ_{n≤K} Q(u_n)`.
    pub q_sum: f64,
    /// `(Σ_{n≤K} Q(u_n))^{1/2}`.
    pub dual_partial: f64,
    /// `⟨f_K, U_K⟩^{1/2}` with `f_K = Σ_{n≤K} (-Δu_n - λ₁u_n)` paired by parts.
    pub dual_pairing: f64,
    /// `∫|∇U_K|²`.
    pub energy: f64,
    pub harmonic: f64,
    pub ratio: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BlowupTable {
    pub lambda1: f64,
    pub truncation: f64,
    pub rows: Vec<BlowupRow>,
    /// `min_K ∫|∇U_K|² / H_K`.
    pub fitted_c: f64,
    /// `u_n u_m ≡ 0` for all `n ≠ m`.
    pub disjoint: bool,
}

/// Discrete `(∫ w'², ∫ w²)` of the scaled plateau `w(z) = plateau(z/s)` on a
/// uniform grid of spacing `h` centred at a node.
fn plateau_moments(s: f64, h: f64) -> (f64, f64, usize) {
    let half = (2.0 * s / h).ceil() as usize + 1;
    let vals: Vec<f64> = (0..=2 * half)
        .map(|j| plateau((j as f64 - half as f64) * h / s))
        .collect();
    let a: f64 = vals.iter().map(|w| w * w * h).sum();
    let b: f64 = vals.windows(2).map(|w| (w[1] - w[0]) * (w[1] - w[0]) / h).sum();
    let support = vals.iter().rposition(|&w| w != 0.0).unwrap_or(0) - half;
    (b, a, support)
}

/// Plateau scale `s` with `∫w'² / ∫w² = target`, by bisection (the ratio
/// decreases in `s`).
fn plateau_scale(target: f64, h: f64, s_max: f64) -> Result<f64> {
    let ratio = |s: f64| {
        let (b, a, _) = plateau_moments(s, h);
        b / a
    };
    let mut lo = 2.0 * h;
    let mut hi = s_max;
    if ratio(hi) > target {
        return Err(Error::Solver(format!(
            "plateau needs half-width above {s_max} to reach ratio {target:e}; widen the per-bump extent"
        )));
    }
    if ratio(lo) < target {
        return Err(Error::Solver(format!("ratio {target:e} needs a plateau below the grid scale")));
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if ratio(mid) > target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// The quadratic blow-up example on `ω × ℝ` (truncated): `u_n = a_n v(y) w_n(z)`
/// with `Q(u_n) = 1/n²`, disjoint supports, and `∫|∇u_n|² = 1/n` (`2` for `n = 1`).
pub fn blowup_demo(
    omega: &[(f64, f64)],
    omega_nodes: &[usize],
    m: usize,
    n_terms: usize,
    l_per_bump: f64,
    hz: f64,
    seed: u64,
) -> Result<BlowupTable> {
    if m != 1 {
        return Err(Error::Constraint {
            constraint: "blow-up example is built with M = 1",
            detail: format!("M = {m}"),
        });
    }
    if n_terms < 3 {
        return Err(Error::Constraint {
            constraint: "n_terms >= 3",
            detail: format!("n_terms = {n_terms}"),
        });
    }
    let om = omega_mesh(omega, omega_nodes)?;
    let eig = rayleigh_min(&om, 2.0, 1e-12, 5000, seed);
    let v = eig.minimizer.values().to_vec();
    let lambda1 = energy::dirichlet(&eig.minimizer, 2.0) / energy::lp_power(&eig.minimizer, 2.0, None);
    if !(lambda1 > 0.0) {
        return Err(Error::Solver("first eigenvalue of omega is not positive".into()));
    }

    // Plateau scales and packing along z (in node units).
    let mut scales = Vec::with_capacity(n_terms);
    let mut half_widths = Vec::with_capacity(n_terms);
    for n in 1..=n_terms {
        let target = if n == 1 { lambda1 } else { lambda1 / (n as f64 - 1.0) };
        let s = plateau_scale(target, hz, 0.5 * l_per_bump)?;
        let (_, _, support) = plateau_moments(s, hz);
        scales.push(s);
        half_widths.push(support);
    }
    let mut centers = Vec::with_capacity(n_terms);
    let mut cursor = 1usize; // first node after the boundary
    for &hw in &half_widths {
        let c = cursor + hw;
        centers.push(c);
        cursor = c + hw + 2; // one zero node between supports
    }
    let nz = cursor + 1;
    let l = 0.5 * (nz - 1) as f64 * hz;
    let domain = Domain::strip(omega, 1, l)?;
    let mut nodes = omega_nodes.to_vec();
    nodes.push(nz);
    let mesh = Mesh::build(domain, &nodes, 0.0)?;
    let k = omega.len();
    let nzs = mesh.shape()[k];

    let mut parts: Vec<DiscreteFunction> = Vec::with_capacity(n_terms);
    for (n, (&s, &c)) in scales.iter().zip(&centers).enumerate() {
        let vals: Vec<f64> = (0..mesh.len())
            .map(|i| {
                let zi = i % nzs;
                let yi = i / nzs;
                let w = plateau((zi as f64 - c as f64) * hz / s);
                v[yi] * w
            })
            .collect();
        let raw = DiscreteFunction::project(&mesh, vals);
        let vzero = vec![lambda1; mesh.len()];
        let q = energy::q_v(&raw, &vzero, 2.0);
        let target = 1.0 / ((n + 1) * (n + 1)) as f64;
        parts.push(raw.scaled((target / q).sqrt()));
    }

    let disjoint = (0..n_terms).all(|a| {
        (a + 1..n_terms).all(|b| {
            parts[a]
                .values()
                .iter()
                .zip(parts[b].values())
                .all(|(x, y)| x * y == 0.0)
        })
    });

    let lam_field = vec![lambda1; mesh.len()];
    let mut rows = Vec::with_capacity(n_terms);
    let mut q_sum = 0.0;
    let mut harmonic = 0.0;
    let mut total = DiscreteFunction::zeros(&mesh);
    for kk in 1..=n_terms {
        let u = &parts[kk - 1];
        q_sum += energy::q_v(u, &lam_field, 2.0);
        harmonic += 1.0 / kk as f64;
        total = total.axpy(1.0, u);
        let load = ForcingTerm::DistributionalSum {
            components: parts[..kk].to_vec(),
            shift: lambda1,
        }
        .load(&mesh)?;
        let pairing = load.pairing(&total);
        let energy_k = energy::dirichlet(&total, 2.0);
        rows.push(BlowupRow {
            k: kk,
            q_sum,
            dual_partial: q_sum.sqrt(),
            dual_pairing: pairing.max(0.0).sqrt(),
            energy: energy_k,
            harmonic,
            ratio: energy_k / harmonic,
        });
    }
    let fitted_c = rows.iter().map(|r| r.ratio).fold(f64::INFINITY, f64::min);
    Ok(BlowupTable {
        lambda1,
        truncation: l,
        rows,
        fitted_c,
        disjoint,
    })
}
