//! Minimization of `φ_ε` and the ε-continuation driver.
//!
//! `minimize_phi` is a truncated Newton method: each step solves the Newton
//! system of the δ-smoothed functional by preconditioned conjugate gradients
//! (stopped early on negative curvature) and globalizes with Armijo
//! backtracking. The preconditioner is the exact inverse of the discrete
//! `-Δ + ε` on the full grid.

use std::sync::Arc;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::energy::{self, EnergyParams, Load, Phi};
use crate::error::{Error, Result};
use crate::grid::{DiscreteFunction, Mesh};
use crate::par;
use crate::precond::SeparableLaplacian;
use crate::sampling;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EpsSchedule {
    pub eps0: f64,
    pub ratio: f64,
    pub steps: usize,
}

impl EpsSchedule {
    pub fn new(eps0: f64, ratio: f64, steps: usize) -> Result<Self> {
        let s = EpsSchedule { eps0, ratio, steps };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.eps0 > 0.0 && self.eps0 < 1.0) {
            return Err(Error::Constraint {
                constraint: "eps0 must lie in (0, 1)",
                detail: format!("eps0 = {}", self.eps0),
            });
        }
        if !(self.ratio > 0.0 && self.ratio < 1.0) {
            return Err(Error::Constraint {
                constraint: "ratio must lie in (0, 1)",
                detail: format!("ratio = {}", self.ratio),
            });
        }
        if self.steps == 0 {
            return Err(Error::Constraint {
                constraint: "steps must be positive",
                detail: "steps = 0".into(),
            });
        }
        if !(self.terminal() > 0.0) {
            return Err(Error::Constraint {
                constraint: "terminal eps must be positive",
                detail: format!("eps0 * ratio^(steps-1) = {}", self.terminal()),
            });
        }
        Ok(())
    }

    pub fn values(&self) -> Vec<f64> {
        (0..self.steps).map(|k| self.eps0 * self.ratio.powi(k as i32)).collect()
    }

    pub fn terminal(&self) -> f64 {
        self.eps0 * self.ratio.powi(self.steps as i32 - 1)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverOptions {
    /// Residual tolerance in the preconditioner-induced dual norm.
    pub tol: f64,
    /// Newton iterations per stage.
    pub max_iter: usize,
    pub delta0: f64,
    pub delta_min: f64,
    /// Inner conjugate-gradient iterations per Newton step.
    pub cg_max_iter: usize,
    pub min_step: f64,
    /// Iteration budget of the dual-norm ascents.
    pub dual_budget: usize,
    pub seed: u64,
    /// Relative slack on the a-priori energy bound.
    pub bound_slack: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            tol: 1e-9,
            max_iter: 200,
            delta0: 1e-2,
            delta_min: 1e-8,
            cg_max_iter: 500,
            min_step: 1e-12,
            dual_budget: 300,
            seed: 0,
            bound_slack: 1e-3,
        }
    }
}

impl SolverOptions {
    pub fn validate(&self) -> Result<()> {
        let bad = |constraint: &'static str, v: f64| {
            Err(Error::Constraint {
                constraint,
                detail: format!("{v}"),
            })
        };
        if !(self.tol > 0.0) {
            return bad("tol must be positive", self.tol);
        }
        if self.max_iter == 0 || self.cg_max_iter == 0 {
            return bad("iteration caps must be positive", 0.0);
        }
        if !(self.delta_min > 0.0 && self.delta0 >= self.delta_min) {
            return bad("need delta0 >= delta_min > 0", self.delta_min);
        }
        if !(self.min_step > 0.0) {
            return bad("min_step must be positive", self.min_step);
        }
        if !(self.bound_slack >= 0.0) {
            return bad("bound_slack must be nonnegative", self.bound_slack);
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MinimizeStatus {
    Converged,
    MaxIter,
}

#[derive(Clone, Debug)]
pub struct MinimizeOutcome {
    pub u: DiscreteFunction,
    pub status: MinimizeStatus,
    pub iterations: usize,
    pub cg_iterations: usize,
    pub line_search_failures: usize,
    /// Residual at the terminal smoothing level.
    pub residual: f64,
    pub delta: f64,
    /// `(φ before, φ after)` of every accepted step, at that step's smoothing.
    pub steps: Vec<(f64, f64)>,
}

impl MinimizeOutcome {
    pub fn phi_nonincreasing(&self) -> bool {
        self.steps.iter().all(|(a, b)| b <= a)
    }
}

/// Lower bound `-(1/p') F^{p'} ε^{-1/(p-1)}` of `φ_ε` when `Q_V ≥ 0`, where
/// `F` is the `W^{1,p}` dual norm of the forcing.
pub fn coercivity_floor(dual_w1p: f64, p: f64, eps: f64) -> f64 {
    let pp = p / (p - 1.0);
    -(dual_w1p.powf(pp) / pp) * eps.powf(-1.0 / (p - 1.0))
}

struct Newton<'a> {
    mesh: &'a Mesh,
    v: &'a [f64],
    load: &'a Load,
    params: EnergyParams,
    precond: &'a SeparableLaplacian,
    opts: &'a SolverOptions,
}

impl Newton<'_> {
    fn delta_at(&self, k: usize) -> f64 {
        if self.params.p == 2.0 {
            return 0.0;
        }
        (self.opts.delta0 * 0.5f64.powi(k.min(1000) as i32)).max(self.opts.delta_min)
    }

    /// Truncated PCG for `H d = -g`. Returns the direction and the number of
    /// inner iterations.
    fn direction(&self, phi: &Phi, u: &[f64], g: &[f64], gnorm: f64) -> (Vec<f64>, usize) {
        let h = phi.hessian(u);
        let sigma = self.params.eps;
        let n = u.len();
        let mut x = vec![0.0; n];
        let mut r: Vec<f64> = g.iter().map(|v| -v).collect();
        let mut z = self.precond.solve(self.mesh, &r, sigma);
        let mut d = z.clone();
        let mut rz = par::dot(&r, &z);
        let eta = (0.1f64).min(gnorm.sqrt());
        let target = eta * rz.max(0.0).sqrt();
        let mut it = 0;
        while it < self.opts.cg_max_iter {
            let hd = h.apply(self.mesh, &d);
            let dhd = par::dot(&d, &hd);
            it += 1;
            if !(dhd > 0.0) {
                if it == 1 {
                    x = d;
                }
                break;
            }
            let alpha = rz / dhd;
            for i in 0..n {
                x[i] += alpha * d[i];
                r[i] -= alpha * hd[i];
            }
            z = self.precond.solve(self.mesh, &r, sigma);
            let rz_new = par::dot(&r, &z);
            if rz_new.max(0.0).sqrt() <= target {
                break;
            }
            let beta = rz_new / rz;
            for i in 0..n {
                d[i] = z[i] + beta * d[i];
            }
            rz = rz_new;
        }
        (x, it)
    }

    fn run(&self, start: &DiscreteFunction, floor: Option<f64>) -> Result<MinimizeOutcome> {
        let mesh = start.mesh();
        let sigma = self.params.eps;
        let mut u = start.values().to_vec();
        let mut steps = Vec::new();
        let mut cg_total = 0;
        let mut failures = 0;
        let mut k = 0;
        loop {
            let delta = self.delta_at(k);
            let params = self.params.with_delta(delta);
            let phi = Phi::new(mesh, self.v, self.load, &params);
            let g = phi.covector(&u);
            let res = self.precond.dual_norm(mesh, &g, sigma);
            let at_floor = delta <= self.opts.delta_min || self.params.p == 2.0;
            if res <= self.opts.tol && at_floor {
                return Ok(self.outcome(mesh, u, MinimizeStatus::Converged, k, cg_total, failures, res, delta, steps));
            }
            if k >= self.opts.max_iter {
                return Ok(self.outcome(mesh, u, MinimizeStatus::MaxIter, k, cg_total, failures, res, delta, steps));
            }
            k += 1;
            let f0 = phi.value(&u);
            let (mut d, cg) = self.direction(&phi, &u, &g, res);
            cg_total += cg;
            let mut slope = par::dot(&g, &d);
            if !(slope < 0.0) {
                d = self.precond.solve(mesh, &g, sigma).iter().map(|x| -x).collect();
                slope = par::dot(&g, &d);
            }
            if slope == 0.0 {
                continue;
            }
            let mut t = 1.0;
            let accepted = loop {
                let inc = phi.increment(&u, &d, t);
                if inc.is_finite() && inc <= 1e-4 * t * slope {
                    let trial: Vec<f64> = u.iter().zip(&d).map(|(a, b)| a + t * b).collect();
                    break Some((trial, f0 + inc));
                }
                let curv = (inc - slope * t) / (t * t);
                t = if inc.is_finite() && curv > 0.0 {
                    (-slope / (2.0 * curv)).clamp(0.1 * t, 0.5 * t)
                } else {
                    0.5 * t
                };
                if t < self.opts.min_step {
                    break None;
                }
            };
            match accepted {
                Some((trial, ft)) => {
                    steps.push((f0, ft));
                    u = trial;
                    if let Some(floor) = floor {
                        if ft < floor {
                            return Err(Error::Indefinite(format!(
                                "phi = {ft:e} fell below the coercivity floor {floor:e}"
                            )));
                        }
                    }
                }
                None => {
                    failures += 1;
                    if at_floor && res <= 10.0 * self.opts.tol {
                        // Stalled within rounding of the target.
                        return Ok(self.outcome(mesh, u, MinimizeStatus::Converged, k, cg_total, failures, res, delta, steps));
                    }
                    if !at_floor {
                        continue;
                    }
                    return Err(Error::LineSearch {
                        detail: format!("no Armijo step above {:e} (residual {res:e})", self.opts.min_step),
                        last: Box::new(DiscreteFunction::project(mesh, u)),
                    });
                }
            }
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn outcome(
        &self,
        mesh: &Arc<Mesh>,
        u: Vec<f64>,
        status: MinimizeStatus,
        iterations: usize,
        cg_iterations: usize,
        line_search_failures: usize,
        residual: f64,
        delta: f64,
        steps: Vec<(f64, f64)>,
    ) -> MinimizeOutcome {
        MinimizeOutcome {
            u: DiscreteFunction::project(mesh, u),
            status,
            iterations,
            cg_iterations,
            line_search_failures,
            residual,
            delta,
            steps,
        }
    }
}

/// Minimizes `φ_ε` from `start` for the fixed `params.eps > 0`.
/// `floor` is a lower bound that `φ` may not cross (see [`coercivity_floor`]).
pub fn minimize_phi(
    start: &DiscreteFunction,
    v: &[f64],
    load: &Load,
    params: &EnergyParams,
    opts: &SolverOptions,
    floor: Option<f64>,
) -> Result<MinimizeOutcome> {
    params.validate()?;
    opts.validate()?;
    if !(params.eps > 0.0) {
        return Err(Error::Constraint {
            constraint: "minimize_phi needs eps > 0",
            detail: format!("eps = {}", params.eps),
        });
    }
    let mesh = start.mesh();
    let precond = SeparableLaplacian::new(mesh);
    Newton {
        mesh,
        v,
        load,
        params: *params,
        precond: &precond,
        opts,
    }
    .run(start, floor)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub eps: f64,
    pub delta: f64,
    pub status: MinimizeStatus,
    pub phi: f64,
    pub q_v: f64,
    pub y_norm: f64,
    pub w1p_norm: f64,
    /// `⟨f, u_n⟩`.
    pub pairing: f64,
    /// `|φ(u_n) - (1/p - 1)⟨f, u_n⟩|`.
    pub identity_gap: f64,
    pub residual: f64,
    pub iterations: usize,
    pub cg_iterations: usize,
    pub line_search_failures: usize,
    pub phi_nonincreasing: bool,
    /// Against the previous stage, with cutoff 1 on the free nodes.
    pub cauchy: Option<f64>,
    /// `D^{p/(p-1)}` for the running dual-norm estimate `D`.
    pub energy_bound: f64,
    /// `φ_{ε_n}(u_{n-1}) - φ_{ε_n}(u_n)`.
    pub warm_start_decrease: Option<f64>,
}

#[derive(Clone, Debug)]
pub struct SolveReport {
    pub stages: Vec<StageRecord>,
    pub solution: DiscreteFunction,
    /// Residual of the pure equation (`ε = 0`, `δ = 0`) at the terminal iterate.
    pub terminal_residual: f64,
    pub dual_norm: f64,
    pub dual_norm_w1p: f64,
    pub wall_time_s: f64,
}

impl SolveReport {
    pub fn converged(&self) -> bool {
        self.stages.iter().all(|s| s.status == MinimizeStatus::Converged)
    }
}

/// Solves `φ_{ε_n}` for every `ε_n` of the schedule with warm starts and
/// records the a-priori quantities. `w` is the nodal weight of the `Y` norm.
#[allow(clippy::too_many_arguments)]
pub fn continuation_solve(
    mesh: &Arc<Mesh>,
    v: &[f64],
    load: &Load,
    w: &[f64],
    p: f64,
    q: f64,
    schedule: &EpsSchedule,
    opts: &SolverOptions,
) -> Result<SolveReport> {
    let clock = Instant::now();
    schedule.validate()?;
    opts.validate()?;
    let base = EnergyParams::new(p, q, schedule.eps0, 0.0)?;
    let dual = energy::dual_norm(load, mesh, v, p, opts.dual_budget, opts.seed)?;
    let dual_w = energy::dual_norm_w1p(load, mesh, p, opts.dual_budget, opts.seed)?;
    if !dual.value.is_finite() || !dual_w.value.is_finite() {
        return Err(Error::Solver("dual norm of the forcing is not finite".into()));
    }
    let pp = p / (p - 1.0);
    let precond = SeparableLaplacian::new(mesh);
    let zeta = vec![1.0; mesh.len()];
    let mut d_running = dual.value;
    let mut u = DiscreteFunction::zeros(mesh);
    let mut prev: Option<DiscreteFunction> = None;
    let mut stages = Vec::with_capacity(schedule.steps);

    for eps in schedule.values() {
        let params = base.with_eps(eps);
        let floor = 2.0 * coercivity_floor(dual_w.value, p, eps) - 1e-12;
        let warm_phi = energy::phi(&u, v, load, &params);
        let out = minimize_phi(&u, v, load, &params, opts, Some(floor))?;
        u = out.u.clone();

        let phi = energy::phi(&u, v, load, &params);
        let qv = energy::q_v(&u, v, p);
        let pairing = load.pairing(&u);
        if qv > 0.0 {
            d_running = d_running.max(pairing / qv.powf(1.0 / p));
        }
        let bound = d_running.powf(pp);
        if qv > bound * (1.0 + opts.bound_slack) + opts.tol {
            return Err(Error::Solver(format!(
                "Q_V(u_n) = {qv:e} exceeds the a-priori bound {bound:e} at eps = {eps:e}"
            )));
        }
        stages.push(StageRecord {
            eps,
            delta: out.delta,
            status: out.status,
            phi,
            q_v: qv,
            y_norm: energy::y_norm(&u, w, q),
            w1p_norm: energy::w1p_norm(&u, p),
            pairing,
            identity_gap: (phi - (1.0 / p - 1.0) * pairing).abs(),
            residual: out.residual,
            iterations: out.iterations,
            cg_iterations: out.cg_iterations,
            line_search_failures: out.line_search_failures,
            phi_nonincreasing: out.phi_nonincreasing(),
            cauchy: prev.as_ref().map(|a| energy::cauchy_diagnostic(a, &u, &zeta, p)),
            energy_bound: bound,
            warm_start_decrease: prev.as_ref().map(|_| warm_phi - phi),
        });
        prev = Some(u.clone());
    }

    let pure = EnergyParams::new(p, q, 0.0, 0.0)?;
    let g = energy::phi_covector(&u, v, load, &pure);
    let terminal_residual = precond.dual_norm(mesh, &g, 0.0);
    Ok(SolveReport {
        stages,
        solution: u,
        terminal_residual,
        dual_norm: d_running,
        dual_norm_w1p: dual_w.value,
        wall_time_s: clock.elapsed().as_secs_f64(),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MultiStartReport {
    pub phi_values: Vec<f64>,
    pub spread: f64,
    /// Number of clusters of `φ` values separated by more than the tolerance.
    pub distinct_basins: usize,
}

/// Runs [`minimize_phi`] from `starts` seeded random fields and reports the
/// spread of the final `φ` values. Starts run concurrently.
pub fn multi_start(
    mesh: &Arc<Mesh>,
    v: &[f64],
    load: &Load,
    params: &EnergyParams,
    opts: &SolverOptions,
    starts: usize,
    seed: u64,
    basin_tol: f64,
) -> Result<MultiStartReport> {
    let bounds = mesh.domain().bounds.clone();
    let runs: Vec<Result<f64>> = par::map(starts, |k| {
        let mut rng = sampling::rng_for(seed, k as u64);
        let b = sampling::random_bump(&mut rng, mesh, &bounds);
        let amp = 4.0 * (rand::Rng::gen::<f64>(&mut rng) - 0.5);
        let start = b.to_function(mesh).scaled(amp);
        let out = minimize_phi(&start, v, load, params, opts, None)?;
        Ok(energy::phi(&out.u, v, load, params))
    });
    let mut phi_values = Vec::with_capacity(starts);
    for r in runs {
        phi_values.push(r?);
    }
    let mut sorted = phi_values.clone();
    sorted.sort_by(f64::total_cmp);
    let spread = sorted.last().copied().unwrap_or(0.0) - sorted.first().copied().unwrap_or(0.0);
    let distinct_basins = if sorted.is_empty() {
        0
    } else {
        1 + sorted.windows(2).filter(|w| w[1] - w[0] > basin_tol).count()
    };
    Ok(MultiStartReport {
        phi_values,
        spread,
        distinct_basins,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::energy::ForcingTerm;
    use crate::energy::Manufactured;
    use crate::grid::Domain;

    #[test]
    fn schedule_values() {
        let s = EpsSchedule::new(0.5, 0.1, 3).unwrap();
        let v = s.values();
        assert_eq!(v.len(), 3);
        assert!((s.terminal() - 0.005).abs() < 1e-15);
        assert!(v.windows(2).all(|w| w[1] < w[0]));
        assert!(EpsSchedule::new(1.0, 0.5, 3).is_err());
        assert!(EpsSchedule::new(0.5, 1.0, 3).is_err());
        assert!(EpsSchedule::new(0.5, 0.5, 0).is_err());
    }

    #[test]
    fn zero_forcing_stays_at_zero() {
        let mesh = Mesh::build(Domain::interval(0.0, 1.0).unwrap(), &[41], 0.0).unwrap();
        let v = vec![0.0; mesh.len()];
        let load = Load::zero(&mesh);
        let params = EnergyParams::new(3.0, 3.0, 0.2, 0.0).unwrap();
        let start = DiscreteFunction::from_fn(&mesh, |x| (3.0 * x[0]).sin());
        let out = minimize_phi(&start, &v, &load, &params, &SolverOptions::default(), None).unwrap();
        let f = energy::phi(&out.u, &v, &load, &params);
        assert!(f <= 0.0 + 1e-12);
        assert!(out.phi_nonincreasing());
    }

    #[test]
    fn floor_is_a_lower_bound_on_a_small_problem() {
        let mesh = Mesh::build(Domain::interval(0.0, 1.0).unwrap(), &[31], 0.0).unwrap();
        let v = vec![0.0; mesh.len()];
        let load = ForcingTerm::Manufactured(Manufactured::Constant { value: 1.0 })
            .load(&mesh)
            .unwrap();
        let params = EnergyParams::new(2.0, 2.0, 0.3, 0.0).unwrap();
        let out = minimize_phi(
            &DiscreteFunction::zeros(&mesh),
            &v,
            &load,
            &params,
            &SolverOptions::default(),
            None,
        )
        .unwrap();
        let f = energy::phi(&out.u, &v, &load, &params);
        let dual = energy::dual_norm_w1p(&load, &mesh, 2.0, 200, 0).unwrap().value;
        assert!(f >= coercivity_floor(dual, 2.0, 0.3) - 1e-12);
    }
}
