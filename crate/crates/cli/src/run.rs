//! Subcommand pipelines. Each run produces a [`RunArtifact`] holding every
//! table and summary value; persistence lives in `report`.

use std::collections::BTreeMap;
use std::sync::Arc;
use std::time::Instant;

use serde::Serialize;
use serde_json::{json, Value};

use plap_core::energy::{self, EnergyParams, ForcingTerm};
use plap_core::grid::{Domain, Mesh};
use plap_core::potentials::{self, AdmissibilityReport, Potential};
use plap_core::solver::{self, MinimizeStatus};
use plap_core::spectra::{self, CertificationRecord, RayleighOptions};
use plap_core::{DiscreteFunction, Error as CoreError};

use crate::config::{CheckKind, Command, DomainKindSpec, ForcingSpec, PotentialSpec, RunConfig};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Ok,
    Violation,
    AdmissibilityFailed,
    SolverFailure,
    MaxIter,
}

impl RunStatus {
    pub fn exit_code(self) -> i32 {
        match self {
            RunStatus::Ok => 0,
            RunStatus::Violation | RunStatus::AdmissibilityFailed => 2,
            RunStatus::SolverFailure | RunStatus::MaxIter => 3,
        }
    }
}

/// A failure before any computation could start; exit code 1.
#[derive(Debug, thiserror::Error)]
#[error("{0}")]
pub struct SetupError(pub String);

/// One delimited-text table.
#[derive(Clone, Debug, PartialEq)]
pub struct Table {
    pub name: &'static str,
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    fn new(name: &'static str, header: &[&str]) -> Self {
        Table {
            name,
            header: header.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }
}

/// Nodal field with node coordinates, in mesh order.
#[derive(Clone, Debug, PartialEq)]
pub struct FieldDump {
    pub dims: usize,
    pub coords: Vec<f64>,
    pub values: Vec<f64>,
}

impl FieldDump {
    fn from_function(u: &DiscreteFunction) -> Self {
        let mesh = u.mesh();
        let n = mesh.dims();
        let mut coords = Vec::with_capacity(n * mesh.len());
        for i in 0..mesh.len() {
            coords.extend_from_slice(&mesh.coords(i)[..n]);
        }
        FieldDump {
            dims: n,
            coords,
            values: u.values().to_vec(),
        }
    }
}

#[derive(Clone, Debug)]
pub struct RunArtifact {
    pub config: RunConfig,
    pub hash: String,
    pub status: RunStatus,
    pub summary: BTreeMap<String, Value>,
    pub tables: Vec<Table>,
    pub solution: Option<FieldDump>,
    pub messages: Vec<String>,
    pub wall_time_s: f64,
}

impl RunArtifact {
    pub fn exit_code(&self) -> i32 {
        self.status.exit_code()
    }

    pub fn table(&self, name: &str) -> Option<&Table> {
        self.tables.iter().find(|t| t.name == name)
    }

    fn fail(&mut self, status: RunStatus, message: String) {
        self.status = self.status.max_by_code(status);
        self.messages.push(message);
    }
}

impl RunStatus {
    fn max_by_code(self, other: RunStatus) -> RunStatus {
        if other.exit_code() > self.exit_code() {
            other
        } else {
            self
        }
    }
}

fn num(x: f64) -> String {
    format!("{x:e}")
}

fn setup(e: CoreError) -> SetupError {
    SetupError(e.to_string())
}

fn is_solver_error(e: &CoreError) -> bool {
    matches!(
        e,
        CoreError::Solver(_) | CoreError::LineSearch { .. } | CoreError::Indefinite(_)
    )
}

fn omega_mesh(cfg: &RunConfig) -> Result<Arc<Mesh>, CoreError> {
    let d = &cfg.domain;
    let bounds: Vec<(f64, f64)> = d.bounds.iter().map(|b| (b[0], b[1])).collect();
    let domain = if bounds.len() == 1 {
        Domain::interval(bounds[0].0, bounds[0].1)?
    } else {
        Domain::boxed(bounds)?
    };
    Mesh::build(domain, &d.nodes[..d.bounds.len()], 0.0)
}

fn omega_parts(cfg: &RunConfig) -> (Vec<(f64, f64)>, Vec<usize>) {
    let d = &cfg.domain;
    (
        d.bounds.iter().map(|b| (b[0], b[1])).collect(),
        d.nodes[..d.bounds.len()].to_vec(),
    )
}

/// `z` spacing of a strip mesh.
fn strip_hz(mesh: &Mesh) -> f64 {
    mesh.spacing()[mesh.dims() - 1]
}

/// Resolves the configured potential, computing `λ_{1,p}(ω)` when asked.
fn resolve_potential(cfg: &RunConfig) -> Result<(Potential, Option<f64>), CoreError> {
    match &cfg.physics.potential {
        PotentialSpec::OmegaEigenvalue { scale } => {
            let om = omega_mesh(cfg)?;
            let eig = spectra::rayleigh_min(&om, cfg.physics.p, cfg.eigen.tol, cfg.eigen.max_iter, cfg.seed);
            Ok((Potential::Constant { value: scale * eig.lambda }, Some(eig.lambda)))
        }
        other => Ok((other.as_core().expect("core potential"), None)),
    }
}

fn forcing(cfg: &RunConfig) -> ForcingTerm {
    match &cfg.physics.forcing {
        ForcingSpec::Density { values } => ForcingTerm::TabulatedDensity(values.clone()),
        other => ForcingTerm::Manufactured(other.as_manufactured().expect("manufactured forcing")),
    }
}

fn admissibility_table(r: &AdmissibilityReport) -> Table {
    let mut t = Table::new(
        "admissibility",
        &[
            "p",
            "q",
            "n",
            "r_proxy",
            "r_alt",
            "local_integrability_proxy",
            "local_integrability_proxy_alt",
            "integrable_by_formula",
            "integrable_alt_by_formula",
            "sampled_margin",
            "samples",
            "violations",
        ],
    );
    t.push(vec![
        num(r.p),
        num(r.q),
        r.n.to_string(),
        num(r.r.proxy()),
        num(r.r_alt),
        num(r.local_integrability_proxy),
        num(r.local_integrability_proxy_alt),
        r.integrable_by_formula.to_string(),
        r.integrable_alt_by_formula.to_string(),
        num(r.sampled_13_margin),
        r.samples.to_string(),
        r.violations.len().to_string(),
    ]);
    t
}

fn certify_table(records: &[CertificationRecord]) -> Table {
    let mut t = Table::new(
        "certify",
        &[
            "inequality_id",
            "p",
            "sample_count",
            "worst_margin",
            "worst_sample",
            "tolerance",
            "verdict",
            "extras",
        ],
    );
    for r in records {
        let p = r.extras.get("p").copied().unwrap_or(f64::NAN);
        let extras = r
            .extras
            .iter()
            .filter(|(k, _)| k.as_str() != "p")
            .map(|(k, v)| format!("{k}={v:e}"))
            .collect::<Vec<_>>()
            .join(";");
        t.push(vec![
            r.inequality_id.clone(),
            num(p),
            r.sample_count.to_string(),
            num(r.worst_margin),
            r.worst_sample.clone(),
            num(r.tolerance),
            serde_json::to_value(r.verdict)
                .ok()
                .and_then(|v| v.as_str().map(str::to_string))
                .unwrap_or_default(),
            extras,
        ]);
    }
    t
}

/// Runs a validated config. `Err` only for setup failures (exit 1).
pub fn run(cfg: &RunConfig) -> Result<RunArtifact, SetupError> {
    let clock = Instant::now();
    let mut art = RunArtifact {
        config: cfg.clone(),
        hash: cfg.hash(),
        status: RunStatus::Ok,
        summary: BTreeMap::new(),
        tables: Vec::new(),
        solution: None,
        messages: Vec::new(),
        wall_time_s: 0.0,
    };
    art.summary.insert("command".into(), json!(cfg.command.to_string()));
    art.summary.insert("hash".into(), json!(art.hash));
    art.summary.insert("seed".into(), json!(cfg.seed));

    let mut proceed = true;
    if matches!(cfg.command, Command::Solve | Command::Admissibility) {
        let passed = admissibility_stage(cfg, &mut art)?;
        let overridden = cfg.admissibility.override_check && cfg.command != Command::Admissibility;
        if !passed {
            if overridden {
                art.messages.push("admissibility check failed; continuing on override".into());
            } else {
                art.fail(RunStatus::AdmissibilityFailed, "configuration is not admissible".into());
                proceed = false;
            }
        }
    }

    let outcome = match cfg.command {
        _ if !proceed => Ok(()),
        Command::Solve => solve_stage(cfg, &mut art),
        Command::Eigen => eigen_stage(cfg, &mut art),
        Command::Certify => certify_stage(cfg, &mut art),
        Command::Blowup => blowup_stage(cfg, &mut art),
        Command::Admissibility => Ok(()),
    };
    match outcome {
        Ok(()) => {}
        Err(e) if is_solver_error(&e) => art.fail(RunStatus::SolverFailure, e.to_string()),
        Err(e) => return Err(setup(e)),
    }
    art.summary.insert("status".into(), json!(art.status));
    art.summary.insert("exit_code".into(), json!(art.exit_code()));
    art.summary.insert("messages".into(), json!(art.messages));
    art.wall_time_s = clock.elapsed().as_secs_f64();
    Ok(art)
}

fn admissibility_stage(cfg: &RunConfig, art: &mut RunArtifact) -> Result<bool, SetupError> {
    let mesh = cfg.mesh().map_err(setup)?;
    let (v, lam) = resolve_potential(cfg).map_err(setup)?;
    let ph = &cfg.physics;
    let report = potentials::admissibility_report(
        &v,
        &mesh,
        ph.p,
        ph.q(),
        &ph.weight,
        cfg.admissibility.samples,
        cfg.seed,
    )
    .map_err(setup)?;
    art.tables.push(admissibility_table(&report));
    if let Some(l) = lam {
        art.summary.insert("lambda_omega".into(), json!(l));
    }
    art.summary.insert("admissibility".into(), json!(report));
    if let Some(first) = report.violations.first() {
        art.messages.push(format!(
            "admissibility: {} sampled violations (first: {first}); smallest margin {:e}",
            report.violations.len(),
            report.sampled_13_margin
        ));
    }
    if !(report.integrable_by_formula || report.integrable_alt_by_formula) {
        art.messages
            .push("admissibility: V is not locally integrable to the required power".into());
    }
    art.summary.insert("admissible".into(), json!(report.admissible()));
    Ok(report.admissible())
}

fn solve_stage(cfg: &RunConfig, art: &mut RunArtifact) -> Result<(), CoreError> {
    let mesh = cfg.mesh()?;
    let (v, _) = resolve_potential(cfg)?;
    let vals = potentials::evaluate_potential(&v, &mesh)?;
    let wvals = potentials::evaluate_weight(&cfg.physics.weight, &mesh)?;
    let load = forcing(cfg).load(&mesh)?;
    let ph = &cfg.physics;
    let opts = cfg.solver.options(cfg.seed);
    let schedule = cfg.solver.schedule();
    let report = solver::continuation_solve(&mesh, &vals, &load, &wvals, ph.p, ph.q(), &schedule, &opts)?;

    let mut t = Table::new(
        "stages",
        &[
            "eps",
            "delta",
            "status",
            "phi",
            "q_v",
            "y_norm",
            "w1p_norm",
            "pairing",
            "identity_gap",
            "residual",
            "iterations",
            "cg_iterations",
            "line_search_failures",
            "phi_nonincreasing",
            "cauchy",
            "energy_bound",
            "warm_start_decrease",
        ],
    );
    for s in &report.stages {
        let status = match s.status {
            MinimizeStatus::Converged => "converged",
            MinimizeStatus::MaxIter => "max_iter",
        };
        t.push(vec![
            num(s.eps),
            num(s.delta),
            status.into(),
            num(s.phi),
            num(s.q_v),
            num(s.y_norm),
            num(s.w1p_norm),
            num(s.pairing),
            num(s.identity_gap),
            num(s.residual),
            s.iterations.to_string(),
            s.cg_iterations.to_string(),
            s.line_search_failures.to_string(),
            s.phi_nonincreasing.to_string(),
            s.cauchy.map(num).unwrap_or_default(),
            num(s.energy_bound),
            s.warm_start_decrease.map(num).unwrap_or_default(),
        ]);
    }
    art.tables.push(t);
    art.summary.insert("stages".into(), json!(report.stages));
    art.summary.insert("terminal_residual".into(), json!(report.terminal_residual));
    art.summary.insert("dual_norm_estimate".into(), json!(report.dual_norm));
    art.summary.insert("dual_norm_w1p_estimate".into(), json!(report.dual_norm_w1p));
    art.summary.insert("converged".into(), json!(report.converged()));
    art.solution = Some(FieldDump::from_function(&report.solution));
    if !report.converged() {
        art.fail(RunStatus::MaxIter, "a continuation stage hit the iteration cap".into());
    }

    if cfg.solver.multi_start > 0 {
        let params = EnergyParams::new(ph.p, ph.q(), schedule.terminal(), 0.0)?;
        let ms = solver::multi_start(
            &mesh,
            &vals,
            &load,
            &params,
            &opts,
            cfg.solver.multi_start,
            cfg.seed,
            cfg.solver.basin_tol,
        )?;
        let continuation_phi = energy::phi(&report.solution, &vals, &load, &params);
        if ms.distinct_basins > 1 {
            art.messages
                .push(format!("multi-start found {} distinct basins", ms.distinct_basins));
        }
        art.summary.insert(
            "multi_start".into(),
            json!({
                "phi_values": ms.phi_values,
                "spread": ms.spread,
                "distinct_basins": ms.distinct_basins,
                "continuation_phi": continuation_phi,
            }),
        );
    }
    Ok(())
}

fn eigen_stage(cfg: &RunConfig, art: &mut RunArtifact) -> Result<(), CoreError> {
    let p = cfg.physics.p;
    if !cfg.eigen.l_values.is_empty() {
        let mesh = cfg.mesh()?;
        let (omega, omega_nodes) = omega_parts(cfg);
        let check = spectra::cylinder_eigen_check(
            &omega,
            &omega_nodes,
            cfg.domain.unbounded_dims,
            &cfg.eigen.l_values,
            strip_hz(&mesh),
            p,
            cfg.certify.tolerance,
            cfg.seed,
        )?;
        let mut t = Table::new(
            "eigen",
            &["l", "lambda", "lambda_omega", "gap", "tensor_bound", "iterations"],
        );
        for r in &check.rows {
            t.push(vec![
                num(r.l),
                num(r.lambda_strip),
                num(r.lambda_omega),
                num(r.gap),
                num(r.tensor_bound),
                r.iterations.to_string(),
            ]);
        }
        art.tables.push(t);
        art.summary.insert("sweep_rows".into(), json!(check.rows));
        art.summary.insert("gap_monotone".into(), json!(check.monotone));
        if !check.monotone {
            art.messages.push("eigenvalue gap is not decreasing in L".into());
        }
        return Ok(());
    }

    let mesh = cfg.mesh()?;
    let (v, _) = resolve_potential(cfg)?;
    let potential = match v {
        Potential::Zero => None,
        other => Some(potentials::evaluate_potential(&other, &mesh)?),
    };
    let e = &cfg.eigen;
    let res = spectra::rayleigh_min_with(
        &mesh,
        p,
        &RayleighOptions {
            potential,
            weight: None,
            tol: e.tol,
            max_iter: e.max_iter,
            seeds: e.seeds,
        },
        cfg.seed,
    );
    let mut t = Table::new("eigen", &["seed", "lambda"]);
    for (k, l) in res.per_seed.iter().enumerate() {
        t.push(vec![cfg.seed.wrapping_add(k as u64).to_string(), num(*l)]);
    }
    art.tables.push(t);
    art.summary.insert("lambda".into(), json!(res.lambda));
    art.summary.insert("iterations".into(), json!(res.iterations));
    art.summary.insert("residual".into(), json!(res.residual));
    art.summary.insert("per_seed".into(), json!(res.per_seed));
    if let Some(w) = &res.warning {
        art.messages.push(w.clone());
        art.summary.insert("warning".into(), json!(w));
    }
    art.solution = Some(FieldDump::from_function(&res.minimizer));
    if !(res.residual <= e.tol) {
        art.messages.push(format!(
            "eigen iteration stopped at residual {:e} above tol {:e}",
            res.residual, e.tol
        ));
    }
    Ok(())
}

fn certify_stage(cfg: &RunConfig, art: &mut RunArtifact) -> Result<(), CoreError> {
    let c = &cfg.certify;
    let p = cfg.physics.p;
    let p_values = if c.p_values.is_empty() { vec![p] } else { c.p_values.clone() };
    let functional = c.options(cfg.seed, c.samples);
    let pointwise = c.options(cfg.seed, c.pointwise_samples);
    let mut records = Vec::new();
    let tag = |mut r: CertificationRecord, p: f64| {
        r.extras.insert("p".into(), p);
        r
    };
    for check in cfg.selected_checks() {
        match check {
            CheckKind::Hardy => {
                let mesh = cfg.mesh()?;
                records.push(tag(spectra::hardy_check(&mesh, p, c.probe, &functional)?, p));
            }
            CheckKind::PoincareRemainder => {
                let mesh = cfg.mesh()?;
                let (omega, nodes) = omega_parts(cfg);
                let r = spectra::poincare_remainder_check(
                    &omega,
                    &nodes,
                    cfg.domain.unbounded_dims,
                    cfg.domain.truncation,
                    strip_hz(&mesh),
                    cfg.domain.cap_radius,
                    p,
                    &functional,
                )?;
                records.push(tag(r, p));
            }
            CheckKind::CylinderEigenvalue => {
                let mesh = cfg.mesh()?;
                let (omega, nodes) = omega_parts(cfg);
                let l_values = if c.l_values.is_empty() {
                    vec![cfg.domain.truncation]
                } else {
                    c.l_values.clone()
                };
                let check = spectra::cylinder_eigen_check(
                    &omega,
                    &nodes,
                    cfg.domain.unbounded_dims,
                    &l_values,
                    strip_hz(&mesh),
                    p,
                    c.tolerance,
                    cfg.seed,
                )?;
                let mut t = Table::new(
                    "cylinder",
                    &["l", "lambda_strip", "lambda_omega", "gap", "tensor_bound", "iterations"],
                );
                for r in &check.rows {
                    t.push(vec![
                        num(r.l),
                        num(r.lambda_strip),
                        num(r.lambda_omega),
                        num(r.gap),
                        num(r.tensor_bound),
                        r.iterations.to_string(),
                    ]);
                }
                art.tables.push(t);
                art.summary.insert("cylinder_gap_monotone".into(), json!(check.monotone));
                records.push(tag(check.record, p));
            }
            CheckKind::Monotonicity => {
                for &pv in &p_values {
                    let r = spectra::monotonicity_constant_check(pv, c.vector_dim, &pointwise)?;
                    records.push(tag(r, pv));
                }
            }
            CheckKind::PowerMean => {
                for &pv in &p_values {
                    records.push(tag(spectra::power_mean_check(pv, &pointwise)?, pv));
                }
            }
        }
    }
    for r in records.iter().filter(|r| r.violated()) {
        art.fail(
            RunStatus::Violation,
            format!(
                "{} violated: margin {:e} at {}",
                r.inequality_id, r.worst_margin, r.worst_sample
            ),
        );
    }
    art.tables.push(certify_table(&records));
    art.summary.insert("records".into(), json!(records));
    Ok(())
}

fn blowup_stage(cfg: &RunConfig, art: &mut RunArtifact) -> Result<(), CoreError> {
    let (omega, nodes) = omega_parts(cfg);
    let b = &cfg.blowup;
    let table = spectra::blowup_demo(&omega, &nodes, 1, b.n_terms, b.l_per_bump, b.hz, cfg.seed)?;
    let mut t = Table::new(
        "blowup",
        &["k", "q_sum", "dual_partial", "dual_pairing", "energy", "harmonic", "ratio"],
    );
    for r in &table.rows {
        t.push(vec![
            r.k.to_string(),
            num(r.q_sum),
            num(r.dual_partial),
            num(r.dual_pairing),
            num(r.energy),
            num(r.harmonic),
            num(r.ratio),
        ]);
    }
    art.tables.push(t);
    art.summary.insert("lambda1".into(), json!(table.lambda1));
    art.summary.insert("truncation".into(), json!(table.truncation));
    art.summary.insert("fitted_c".into(), json!(table.fitted_c));
    art.summary.insert("disjoint".into(), json!(table.disjoint));
    art.summary.insert("rows".into(), json!(table.rows));
    if cfg.domain.kind != DomainKindSpec::Strip {
        art.messages.push("blow-up example uses the strip cross-section only".into());
    }
    Ok(())
}
