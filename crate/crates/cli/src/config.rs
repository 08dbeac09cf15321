//! Run configuration: a TOML document with one table per concern.
//!
//! Unknown keys are rejected. Every field outside `command` has a default;
//! see `RunConfig::default` and the per-section `Default` impls.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use plap_core::energy::Manufactured;
use plap_core::grid::{Domain, DomainKind, Mesh};
use plap_core::potentials::{Potential, Weight};
use plap_core::solver::{EpsSchedule, SolverOptions};
use plap_core::spectra::CertifyOptions;
use plap_core::{EnergyParams, Error as CoreError};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Command {
    Solve,
    Eigen,
    Certify,
    Blowup,
    Admissibility,
}

impl fmt::Display for Command {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Command::Solve => "solve",
            Command::Eigen => "eigen",
            Command::Certify => "certify",
            Command::Blowup => "blowup",
            Command::Admissibility => "admissibility",
        };
        f.write_str(s)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub command: Command,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub domain: DomainSection,
    #[serde(default)]
    pub physics: PhysicsSection,
    #[serde(default)]
    pub solver: SolverSection,
    #[serde(default)]
    pub admissibility: AdmissibilitySection,
    #[serde(default)]
    pub eigen: EigenSection,
    #[serde(default)]
    pub certify: CertifySection,
    #[serde(default)]
    pub blowup: BlowupSection,
    #[serde(default)]
    pub output: OutputSection,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DomainKindSpec {
    Interval,
    Box,
    Strip,
    PuncturedBox,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DomainSection {
    pub kind: DomainKindSpec,
    /// Per-axis `[lo, hi]`; for a strip, the cross-section only.
    pub bounds: Vec<[f64; 2]>,
    /// Strip: number of truncated axes `M`.
    pub unbounded_dims: usize,
    /// Strip: truncation length `L` of `(-L, L)^M`.
    pub truncation: f64,
    pub puncture_radius: f64,
    /// Nodes within this distance of the potential's singular set are excluded.
    pub cap_radius: f64,
    /// Nodes per axis, truncated axes last.
    pub nodes: Vec<usize>,
}

impl Default for DomainSection {
    fn default() -> Self {
        DomainSection {
            kind: DomainKindSpec::Interval,
            bounds: vec![[0.0, 1.0]],
            unbounded_dims: 0,
            truncation: 0.0,
            puncture_radius: 0.0,
            cap_radius: 0.0,
            nodes: vec![101],
        }
    }
}

/// Potentials accepted in configs: the core catalog plus `omega_eigenvalue`,
/// the constant `scale · λ_{1,p}(ω)` computed on the strip's cross-section grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PotentialSpec {
    Zero,
    QuadraticHardy,
    HardyP { n: usize, p: f64 },
    CylindricalHardy { k: usize, p: f64 },
    Constant { value: f64 },
    Tabulated { values: Vec<f64> },
    OmegaEigenvalue {
        #[serde(default = "one")]
        scale: f64,
    },
}

fn one() -> f64 {
    1.0
}

impl PotentialSpec {
    /// The core potential, or `None` for `omega_eigenvalue`.
    pub fn as_core(&self) -> Option<Potential> {
        Some(match self {
            PotentialSpec::Zero => Potential::Zero,
            PotentialSpec::QuadraticHardy => Potential::QuadraticHardy,
            PotentialSpec::HardyP { n, p } => Potential::HardyP { n: *n, p: *p },
            PotentialSpec::CylindricalHardy { k, p } => Potential::CylindricalHardy { k: *k, p: *p },
            PotentialSpec::Constant { value } => Potential::Constant { value: *value },
            PotentialSpec::Tabulated { values } => Potential::Tabulated { values: values.clone() },
            PotentialSpec::OmegaEigenvalue { .. } => return None,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ForcingSpec {
    Zero,
    Constant { value: f64 },
    Sine { amplitude: f64, modes: Vec<u32> },
    Gaussian { amplitude: f64, center: Vec<f64>, width: f64 },
    /// Nodal density values, one per mesh node.
    Density { values: Vec<f64> },
}

impl ForcingSpec {
    pub fn as_manufactured(&self) -> Option<Manufactured> {
        Some(match self {
            ForcingSpec::Zero => Manufactured::Zero,
            ForcingSpec::Constant { value } => Manufactured::Constant { value: *value },
            ForcingSpec::Sine { amplitude, modes } => Manufactured::Sine {
                amplitude: *amplitude,
                modes: modes.clone(),
            },
            ForcingSpec::Gaussian { amplitude, center, width } => Manufactured::Gaussian {
                amplitude: *amplitude,
                center: center.clone(),
                width: *width,
            },
            ForcingSpec::Density { .. } => return None,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PhysicsSection {
    pub p: f64,
    /// Exponent of the `Y` norm; defaults to `p`.
    pub q: Option<f64>,
    pub potential: PotentialSpec,
    pub weight: Weight,
    pub forcing: ForcingSpec,
}

impl Default for PhysicsSection {
    fn default() -> Self {
        PhysicsSection {
            p: 2.0,
            q: None,
            potential: PotentialSpec::Zero,
            weight: Weight::Constant { value: 1.0 },
            forcing: ForcingSpec::Zero,
        }
    }
}

impl PhysicsSection {
    pub fn q(&self) -> f64 {
        self.q.unwrap_or(self.p)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverSection {
    pub eps0: f64,
    pub ratio: f64,
    pub steps: usize,
    pub tol: f64,
    pub max_iter: usize,
    pub delta0: f64,
    pub delta_min: f64,
    pub cg_max_iter: usize,
    pub min_step: f64,
    pub dual_budget: usize,
    pub bound_slack: f64,
    /// Extra random starts at the terminal `ε`; 0 disables.
    pub multi_start: usize,
    pub basin_tol: f64,
}

impl Default for SolverSection {
    fn default() -> Self {
        let o = SolverOptions::default();
        SolverSection {
            eps0: 0.5,
            ratio: 0.1,
            steps: 6,
            tol: o.tol,
            max_iter: o.max_iter,
            delta0: o.delta0,
            delta_min: o.delta_min,
            cg_max_iter: o.cg_max_iter,
            min_step: o.min_step,
            dual_budget: o.dual_budget,
            bound_slack: o.bound_slack,
            multi_start: 0,
            basin_tol: 1e-8,
        }
    }
}

impl SolverSection {
    pub fn schedule(&self) -> EpsSchedule {
        EpsSchedule {
            eps0: self.eps0,
            ratio: self.ratio,
            steps: self.steps,
        }
    }

    pub fn options(&self, seed: u64) -> SolverOptions {
        SolverOptions {
            tol: self.tol,
            max_iter: self.max_iter,
            delta0: self.delta0,
            delta_min: self.delta_min,
            cg_max_iter: self.cg_max_iter,
            min_step: self.min_step,
            dual_budget: self.dual_budget,
            seed,
            bound_slack: self.bound_slack,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdmissibilitySection {
    pub samples: usize,
    /// Run the main computation even if the check fails.
    #[serde(rename = "override")]
    pub override_check: bool,
}

impl Default for AdmissibilitySection {
    fn default() -> Self {
        AdmissibilitySection {
            samples: 64,
            override_check: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EigenSection {
    pub tol: f64,
    pub max_iter: usize,
    pub seeds: usize,
    /// Strip only: truncation lengths of an L-sweep at the configured `z` spacing.
    pub l_values: Vec<f64>,
}

impl Default for EigenSection {
    fn default() -> Self {
        EigenSection {
            tol: 1e-10,
            max_iter: 2000,
            seeds: 2,
            l_values: Vec::new(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckKind {
    Hardy,
    PoincareRemainder,
    CylinderEigenvalue,
    Monotonicity,
    PowerMean,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CertifySection {
    /// Empty selects every check applicable to the domain.
    pub checks: Vec<CheckKind>,
    pub samples: usize,
    /// Pointwise checks (monotonicity, power mean) draw this many samples.
    pub pointwise_samples: usize,
    pub tolerance: f64,
    /// Multiplies the certified constants; above 1 plants a violation.
    pub constant_scale: f64,
    /// Run the adversarial quotient minimization of the Hardy check.
    pub probe: bool,
    /// Dimension of the sampled vectors of the monotonicity check.
    pub vector_dim: usize,
    /// Exponents for the pointwise checks; empty uses `physics.p`.
    pub p_values: Vec<f64>,
    /// Truncation lengths of the cylinder eigenvalue comparison; empty uses
    /// `domain.truncation` alone.
    pub l_values: Vec<f64>,
}

impl Default for CertifySection {
    fn default() -> Self {
        CertifySection {
            checks: Vec::new(),
            samples: 200,
            pointwise_samples: 100_000,
            tolerance: 1e-8,
            constant_scale: 1.0,
            probe: true,
            vector_dim: 3,
            p_values: Vec::new(),
            l_values: Vec::new(),
        }
    }
}

impl CertifySection {
    pub fn options(&self, seed: u64, samples: usize) -> CertifyOptions {
        CertifyOptions {
            samples,
            seed,
            tolerance: self.tolerance,
            constant_scale: self.constant_scale,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BlowupSection {
    pub n_terms: usize,
    /// Largest admissible plateau extent per bump.
    pub l_per_bump: f64,
    /// `z` spacing of the strip grid.
    pub hz: f64,
}

impl Default for BlowupSection {
    fn default() -> Self {
        BlowupSection {
            n_terms: 16,
            l_per_bump: 8.0,
            hz: 0.05,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolutionFormat {
    Csv,
    /// Little-endian `f64` node values in mesh order.
    Binary,
    None,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSection {
    pub dir: String,
    pub solution: SolutionFormat,
}

impl Default for OutputSection {
    fn default() -> Self {
        OutputSection {
            dir: "out".into(),
            solution: SolutionFormat::Csv,
        }
    }
}

/// A field-level configuration error.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ConfigError {
    pub key: String,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.key, self.message)
    }
}

#[derive(Debug, thiserror::Error)]
#[error("{}", .0.iter().map(|e| e.to_string()).collect::<Vec<_>>().join("\n"))]
pub struct ConfigErrors(pub Vec<ConfigError>);

fn core_message(e: &CoreError) -> String {
    match e {
        CoreError::Constraint { constraint, detail } => format!("{constraint} ({detail})"),
        other => other.to_string(),
    }
}

/// Parses and validates a TOML document.
pub fn parse_config(text: &str) -> Result<RunConfig, ConfigErrors> {
    let cfg: RunConfig = toml::from_str(text).map_err(|e| {
        ConfigErrors(vec![ConfigError {
            key: "document".into(),
            message: e.to_string().trim().to_string(),
        }])
    })?;
    cfg.validate()?;
    Ok(cfg)
}

impl RunConfig {
    /// A minimal configuration for `command` with every default filled.
    pub fn new(command: Command) -> Self {
        RunConfig {
            command,
            seed: 0,
            domain: DomainSection::default(),
            physics: PhysicsSection::default(),
            solver: SolverSection::default(),
            admissibility: AdmissibilitySection::default(),
            eigen: EigenSection::default(),
            certify: CertifySection::default(),
            blowup: BlowupSection::default(),
            output: OutputSection::default(),
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// First 16 hex digits of the SHA-256 of the canonical document with the
    /// output section reset, so the same run hashes alike in any directory.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.output = OutputSection::default();
        let digest = Sha256::digest(c.to_toml().as_bytes());
        digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
    }

    pub fn dims(&self) -> usize {
        self.domain.bounds.len()
            + if self.domain.kind == DomainKindSpec::Strip {
                self.domain.unbounded_dims
            } else {
                0
            }
    }

    pub fn core_domain(&self) -> Result<Domain, CoreError> {
        let d = &self.domain;
        let bounds: Vec<(f64, f64)> = d.bounds.iter().map(|b| (b[0], b[1])).collect();
        let domain = match d.kind {
            DomainKindSpec::Interval => {
                if bounds.len() != 1 {
                    return Err(CoreError::Domain("an interval has exactly one axis".into()));
                }
                Domain::interval(bounds[0].0, bounds[0].1)?
            }
            DomainKindSpec::Box => Domain::boxed(bounds)?,
            DomainKindSpec::Strip => Domain::strip(&bounds, d.unbounded_dims, d.truncation)?,
            DomainKindSpec::PuncturedBox => Domain::punctured_box(bounds, d.puncture_radius)?,
        };
        // The cap follows the singular set of the configured potential.
        match self.physics.potential.as_core().and_then(|v| v.singular_axes(domain.dims())) {
            Some(axes) => domain.with_singular_axes(axes),
            None => Ok(domain),
        }
    }

    pub fn mesh(&self) -> Result<Arc<Mesh>, CoreError> {
        Mesh::build(self.core_domain()?, &self.domain.nodes, self.domain.cap_radius)
    }

    /// Checks that apply to the configured domain and exponent.
    pub fn applicable_checks(&self) -> Vec<CheckKind> {
        let mut out = Vec::new();
        match self.domain.kind {
            DomainKindSpec::PuncturedBox => out.push(CheckKind::Hardy),
            DomainKindSpec::Strip => {
                out.push(CheckKind::CylinderEigenvalue);
                if self.domain.unbounded_dims as f64 > self.physics.p {
                    out.push(CheckKind::PoincareRemainder);
                }
            }
            _ => {}
        }
        out.push(CheckKind::Monotonicity);
        out.push(CheckKind::PowerMean);
        out
    }

    pub fn selected_checks(&self) -> Vec<CheckKind> {
        if self.certify.checks.is_empty() {
            self.applicable_checks()
        } else {
            self.certify.checks.clone()
        }
    }

    /// Collects every field-level error.
    pub fn validate(&self) -> Result<(), ConfigErrors> {
        let mut errs = Vec::new();
        let mut err = |key: &str, message: String| {
            errs.push(ConfigError {
                key: key.into(),
                message,
            })
        };

        let dims = self.dims();
        let mesh = match self.mesh() {
            Ok(m) => Some(m),
            Err(e) => {
                err("domain", core_message(&e));
                None
            }
        };

        let ph = &self.physics;
        if !(ph.p > 1.0) || !ph.p.is_finite() {
            err("physics.p", format!("p must exceed 1 (p = {})", ph.p));
        } else if let Err(e) = EnergyParams::new(ph.p, ph.q(), 0.5, 0.0) {
            err("physics.q", core_message(&e));
        }
        if let Some(v) = ph.potential.as_core() {
            if let Err(e) = v.validate(dims) {
                err("physics.potential", core_message(&e));
            } else if let (Potential::Tabulated { values }, Some(m)) = (&v, &mesh) {
                if values.len() != m.len() {
                    err(
                        "physics.potential.values",
                        format!("{} values for {} mesh nodes", values.len(), m.len()),
                    );
                }
            }
        } else if let PotentialSpec::OmegaEigenvalue { scale } = ph.potential {
            if self.domain.kind != DomainKindSpec::Strip {
                err("physics.potential", "omega_eigenvalue needs a strip domain".into());
            }
            if !(scale >= 0.0) {
                err("physics.potential.scale", "scale must be nonnegative".into());
            }
        }
        if let Err(e) = ph.weight.validate() {
            err("physics.weight", core_message(&e));
        }
        match (&ph.forcing, &mesh) {
            (ForcingSpec::Density { values }, Some(m)) => {
                if values.len() != m.len() {
                    err(
                        "physics.forcing.values",
                        format!("{} values for {} mesh nodes", values.len(), m.len()),
                    );
                } else if values.iter().any(|v| !v.is_finite()) {
                    err("physics.forcing.values", "values must be finite".into());
                }
            }
            (f, _) => {
                if let Some(m) = f.as_manufactured() {
                    if let Err(e) = m.validate(dims) {
                        err("physics.forcing", core_message(&e));
                    }
                }
            }
        }

        if self.command == Command::Solve {
            if let Err(e) = self.solver.schedule().validate() {
                err("solver", core_message(&e));
            }
            if let Err(e) = self.solver.options(self.seed).validate() {
                err("solver", core_message(&e));
            }
        }

        match self.command {
            Command::Eigen => {
                if !(self.eigen.tol > 0.0) || self.eigen.max_iter == 0 || self.eigen.seeds == 0 {
                    err("eigen", "tol, max_iter and seeds must be positive".into());
                }
                if !self.eigen.l_values.is_empty() && self.domain.kind != DomainKindSpec::Strip {
                    err("eigen.l_values", "an L-sweep needs a strip domain".into());
                }
                if self.eigen.l_values.windows(2).any(|w| !(w[1] > w[0])) {
                    err("eigen.l_values", "truncation lengths must increase".into());
                }
            }
            Command::Certify => {
                let c = &self.certify;
                let applicable = self.applicable_checks();
                for k in &c.checks {
                    if !applicable.contains(k) {
                        err(
                            "certify.checks",
                            format!("{k:?} does not apply to this domain and exponent"),
                        );
                    }
                }
                if !(c.tolerance >= 0.0) || !(c.constant_scale > 0.0) {
                    err("certify", "tolerance must be nonnegative and constant_scale positive".into());
                }
                if c.samples == 0 || c.pointwise_samples == 0 || c.vector_dim == 0 {
                    err("certify", "sample counts and vector_dim must be positive".into());
                }
                if c.p_values.iter().any(|p| !(*p > 1.0)) {
                    err("certify.p_values", "p must exceed 1".into());
                }
                if c.l_values.windows(2).any(|w| !(w[1] > w[0])) {
                    err("certify.l_values", "truncation lengths must increase".into());
                }
                let selected = self.selected_checks();
                if selected.contains(&CheckKind::Hardy) && dims > 0 && !(ph.p < dims as f64) {
                    err("physics.p", format!("the Hardy check needs 1 < p < N = {dims}"));
                }
            }
            Command::Blowup => {
                if self.domain.kind != DomainKindSpec::Strip || self.domain.unbounded_dims != 1 {
                    err("domain", "the blow-up example needs a strip with unbounded_dims = 1".into());
                }
                if ph.p != 2.0 {
                    err("physics.p", "the blow-up example is quadratic: p must be 2".into());
                }
                let b = &self.blowup;
                if b.n_terms < 3 {
                    err("blowup.n_terms", "n_terms must be at least 3".into());
                }
                if !(b.hz > 0.0) || !(b.l_per_bump > 0.0) {
                    err("blowup", "hz and l_per_bump must be positive".into());
                }
            }
            Command::Solve | Command::Admissibility => {}
        }
        if self.admissibility.samples == 0 && !self.admissibility.override_check {
            err("admissibility.samples", "samples must be positive".into());
        }
        if self.output.dir.is_empty() {
            err("output.dir", "output directory must be set".into());
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(ConfigErrors(errs))
        }
    }
}

/// Mesh kind of a config as seen by the core library.
pub fn domain_kind(cfg: &RunConfig) -> DomainKind {
    match cfg.domain.kind {
        DomainKindSpec::Interval => DomainKind::Interval,
        DomainKindSpec::Box => DomainKind::Box,
        DomainKindSpec::Strip => DomainKind::Strip,
        DomainKindSpec::PuncturedBox => DomainKind::PuncturedBox,
    }
}
