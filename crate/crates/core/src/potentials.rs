//! Potentials `V`, weights `W`, and the admissibility report for a
//! `(V, p, q, W)` configuration.

use serde::{Deserialize, Serialize};

use crate::energy::{self, EnergyParams};
use crate::error::{Error, Result};
use crate::grid::{DiscreteFunction, Mesh};
use crate::par;
use crate::sampling;
use crate::spectra;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Potential {
    Zero,
    /// `((N-2)/2)^2 |x|^{-2}` with `N` the mesh dimension.
    QuadraticHardy,
    /// `((n-p)/p)^p |x|^{-p}`.
    HardyP { n: usize, p: f64 },
    /// `((k-p)/p)^p |y|^{-p}` with `y` the first `k` coordinates.
    CylindricalHardy { k: usize, p: f64 },
    Constant { value: f64 },
    Tabulated { values: Vec<f64> },
}

/// `((n - p) / p)^p`, the sharp Hardy constant.
pub fn hardy_constant(n: usize, p: f64) -> Result<f64> {
    let nf = n as f64;
    if !(p > 1.0 && p < nf) {
        return Err(Error::Constraint {
            constraint: "Hardy constant needs 1 < p < N",
            detail: format!("p = {p}, N = {n}"),
        });
    }
    Ok(((nf - p) / p).powf(p))
}

impl Potential {
    /// Checks parameter constraints against a mesh of dimension `dims`.
    pub fn validate(&self, dims: usize) -> Result<()> {
        match self {
            Potential::Zero => Ok(()),
            Potential::QuadraticHardy => {
                if dims < 3 {
                    return Err(Error::Constraint {
                        constraint: "quadratic Hardy potential needs N >= 3",
                        detail: format!("N = {dims}"),
                    });
                }
                Ok(())
            }
            Potential::HardyP { n, p } => {
                if *n != dims {
                    return Err(Error::Potential(format!(
                        "hardy_p declared for N = {n} on a {dims}-dimensional mesh"
                    )));
                }
                hardy_constant(*n, *p).map(|_| ())
            }
            Potential::CylindricalHardy { k, p } => {
                let kf = *k as f64;
                if !(*p > 1.0 && kf > *p && *k <= dims) {
                    return Err(Error::Constraint {
                        constraint: "cylindrical Hardy potential needs N >= k > p > 1",
                        detail: format!("N = {dims}, k = {k}, p = {p}"),
                    });
                }
                Ok(())
            }
            Potential::Constant { value } => {
                if !(value.is_finite() && *value >= 0.0) {
                    return Err(Error::Constraint {
                        constraint: "V >= 0",
                        detail: format!("constant value {value}"),
                    });
                }
                Ok(())
            }
            Potential::Tabulated { values } => {
                if let Some(i) = values.iter().position(|v| !(v.is_finite() && *v >= 0.0)) {
                    return Err(Error::Constraint {
                        constraint: "V >= 0",
                        detail: format!("tabulated value {} at node {i}", values[i]),
                    });
                }
                Ok(())
            }
        }
    }

    /// Axes whose distance to zero drives the singularity, if any.
    pub fn singular_axes(&self, dims: usize) -> Option<Vec<usize>> {
        match self {
            Potential::QuadraticHardy | Potential::HardyP { .. } => Some((0..dims).collect()),
            Potential::CylindricalHardy { k, .. } => Some((0..*k).collect()),
            _ => None,
        }
    }

    /// Singularity order `s` and codimension `c` of the singular set, so that
    /// `V ~ dist^{-s}` near a set of codimension `c`.
    fn singularity(&self, dims: usize) -> Option<(f64, f64)> {
        match self {
            Potential::QuadraticHardy => Some((2.0, dims as f64)),
            Potential::HardyP { n, p } => Some((*p, *n as f64)),
            Potential::CylindricalHardy { k, p } => Some((*p, *k as f64)),
            _ => None,
        }
    }

    fn coefficient(&self, dims: usize) -> Result<(f64, f64)> {
        Ok(match self {
            Potential::QuadraticHardy => {
                let c = (dims as f64 - 2.0) / 2.0;
                (c * c, 2.0)
            }
            Potential::HardyP { n, p } => (hardy_constant(*n, *p)?, *p),
            Potential::CylindricalHardy { k, p } => (((*k as f64 - p) / p).powf(*p), *p),
            _ => (0.0, 0.0),
        })
    }
}

/// Nodal values of `V`. Excluded nodes carry 0; any other node on the
/// singular set is an error.
pub fn evaluate_potential(v: &Potential, mesh: &Mesh) -> Result<Vec<f64>> {
    let n = mesh.dims();
    v.validate(n)?;
    let len = mesh.len();
    match v {
        Potential::Zero => Ok(vec![0.0; len]),
        Potential::Constant { value } => Ok((0..len)
            .map(|i| if mesh.is_excluded(i) { 0.0 } else { *value })
            .collect()),
        Potential::Tabulated { values } => {
            if values.len() != len {
                return Err(Error::Shape(format!(
                    "tabulated potential has {} values for {len} nodes",
                    values.len()
                )));
            }
            Ok((0..len)
                .map(|i| if mesh.is_excluded(i) { 0.0 } else { values[i] })
                .collect())
        }
        _ => {
            let axes = v.singular_axes(n).unwrap_or_default();
            let (c, s) = v.coefficient(n)?;
            let mut out = vec![0.0; len];
            for (i, o) in out.iter_mut().enumerate() {
                if mesh.is_excluded(i) {
                    continue;
                }
                let r = mesh.partial_norm(i, &axes);
                if r == 0.0 {
                    return Err(Error::Potential(format!(
                        "node {i} lies on the singular set and is not excluded; \
                         use a punctured domain or a positive cap radius"
                    )));
                }
                *o = c * r.powf(-s);
            }
            Ok(out)
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Weight {
    Constant { value: f64 },
    /// `c / (1 + |z|^p)` with `z` the truncated unbounded coordinates.
    CylinderDecay { c: f64, p: f64 },
}

impl Weight {
    pub fn validate(&self) -> Result<()> {
        let ok = match self {
            Weight::Constant { value } => value.is_finite() && *value > 0.0,
            Weight::CylinderDecay { c, p } => c.is_finite() && *c > 0.0 && p.is_finite() && *p > 0.0,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Constraint {
                constraint: "W > 0",
                detail: format!("{self:?}"),
            })
        }
    }
}

pub fn evaluate_weight(w: &Weight, mesh: &Mesh) -> Result<Vec<f64>> {
    w.validate()?;
    Ok(match w {
        Weight::Constant { value } => vec![*value; mesh.len()],
        Weight::CylinderDecay { c, p } => {
            let axes = &mesh.domain().unbounded_axes;
            (0..mesh.len())
                .map(|i| c / (1.0 + mesh.partial_norm(i, axes).powf(*p)))
                .collect()
        }
    })
}

/// Local integrability exponent from the three-way case split on `N` vs `q`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "case", content = "value", rename_all = "snake_case")]
pub enum LocalExponent {
    /// `N < q`: `r = 1`.
    One,
    /// `N = q`: any finite `r > 1`.
    AnyAboveOne,
    /// `N > q`: `1/r + (p-1)/q* = 1` with `q* = Nq/(N-q)`.
    Exact(f64),
}

impl LocalExponent {
    /// Exponent used for the finite-grid integrability proxy.
    pub fn proxy(&self) -> f64 {
        match self {
            LocalExponent::One => 1.0,
            LocalExponent::AnyAboveOne => ANY_ABOVE_ONE_PROXY,
            LocalExponent::Exact(r) => *r,
        }
    }
}

/// Representative exponent for the `N = q` case.
pub const ANY_ABOVE_ONE_PROXY: f64 = 1.1;

/// Validates `(p, q)` and returns `(r, r_alt)`.
pub fn admissibility_exponents(p: f64, q: f64, n: usize) -> Result<(LocalExponent, f64)> {
    if !(p > 1.0) || !p.is_finite() {
        return Err(Error::Constraint {
            constraint: "p must exceed 1",
            detail: format!("p = {p}"),
        });
    }
    if !(q > 1.0) {
        return Err(Error::Constraint {
            constraint: "q must exceed 1",
            detail: format!("q = {q}"),
        });
    }
    if !(q <= p) {
        return Err(Error::Constraint {
            constraint: "q must not exceed p",
            detail: format!("q = {q}, p = {p}"),
        });
    }
    if !(q > p - 1.0) {
        return Err(Error::Constraint {
            constraint: "q must exceed p - 1",
            detail: format!("q = {q}, p = {p}"),
        });
    }
    let nf = n as f64;
    let r = if nf < q {
        LocalExponent::One
    } else if nf == q {
        LocalExponent::AnyAboveOne
    } else {
        let q_star = nf * q / (nf - q);
        LocalExponent::Exact(1.0 / (1.0 - (p - 1.0) / q_star))
    };
    let r_alt = q / (p * (q - p + 1.0));
    Ok((r, r_alt))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdmissibilityReport {
    pub p: f64,
    pub q: f64,
    pub n: usize,
    pub r: LocalExponent,
    pub r_alt: f64,
    /// `∫ V^r` over non-excluded nodes, `r` = [`LocalExponent::proxy`].
    pub local_integrability_proxy: f64,
    /// `∫ V^{r_alt}` over non-excluded nodes.
    pub local_integrability_proxy_alt: f64,
    /// Whether the singularity of `V` is `L^r`-integrable by the analytic formula.
    pub integrable_by_formula: bool,
    pub integrable_alt_by_formula: bool,
    /// `min (1 - y_norm(u)^p)` over samples normalized to `Q_V(u) = 1`.
    pub sampled_13_margin: f64,
    pub samples: usize,
    pub violations: Vec<String>,
}

impl AdmissibilityReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }

    /// Sampled inequality holds and `V` is locally integrable to the power
    /// required by either exponent.
    pub fn admissible(&self) -> bool {
        self.passed() && (self.integrable_by_formula || self.integrable_alt_by_formula)
    }
}

/// Relative margin `1 - y_norm(u)^p / Q_V(u)`; `-∞` when `Q_V(u) ≤ 0`.
fn margin_13(u: &DiscreteFunction, v: &[f64], w: &[f64], params: &EnergyParams) -> f64 {
    let qv = energy::q_v(u, v, params.p);
    if !(qv > 0.0) {
        return f64::NEG_INFINITY;
    }
    1.0 - energy::y_norm(u, w, params.q).powf(params.p) / qv
}

/// Sampling check of `(∫(|∇u|^q + |u|^q) W)^{p/q} ≤ Q_V(u)` plus the
/// analytic integrability exponents. A falsification check, not a proof.
pub fn admissibility_report(
    v: &Potential,
    mesh: &std::sync::Arc<Mesh>,
    p: f64,
    q: f64,
    w: &Weight,
    samples: usize,
    seed: u64,
) -> Result<AdmissibilityReport> {
    let n = mesh.dims();
    let (r, r_alt) = admissibility_exponents(p, q, n)?;
    let vals = evaluate_potential(v, mesh)?;
    let wvals = evaluate_weight(w, mesh)?;
    let params = EnergyParams::new(p, q, 0.0, 0.0)?;

    let proxy = |e: f64| mesh.integrate_with(|i| vals[i].powf(e));
    let (integrable, integrable_alt) = match v.singularity(n) {
        Some((s, c)) => {
            let by_r = match r {
                LocalExponent::One | LocalExponent::AnyAboveOne => s < c,
                LocalExponent::Exact(r) => s * r < c,
            };
            (by_r, s * r_alt < c)
        }
        None => (true, true),
    };

    let bounds = mesh.domain().bounds.clone();
    let sampled: Vec<(String, f64)> = par::map(samples, |k| {
        match sampling::nonzero_bump(seed, k as u64, mesh, &bounds) {
            Some((b, u)) => (b.describe(), margin_13(&u, &vals, &wvals, &params)),
            None => ("empty bump".to_string(), f64::INFINITY),
        }
    });
    let mut entries = sampled;
    let eig = spectra::rayleigh_min_with(
        mesh,
        p,
        &spectra::RayleighOptions {
            potential: Some(vals.clone()),
            max_iter: 200,
            tol: 1e-8,
            seeds: 1,
            ..Default::default()
        },
        seed,
    );
    entries.push((
        "rayleigh minimizer".to_string(),
        margin_13(&eig.minimizer, &vals, &wvals, &params),
    ));

    let mut margin = f64::INFINITY;
    let mut violations = Vec::new();
    for (desc, m) in &entries {
        margin = margin.min(*m);
        if *m < 0.0 {
            violations.push(format!("{desc}: margin {m:.6e}"));
        }
    }
    Ok(AdmissibilityReport {
        p,
        q,
        n,
        r,
        r_alt,
        local_integrability_proxy: proxy(r.proxy()),
        local_integrability_proxy_alt: proxy(r_alt),
        integrable_by_formula: integrable,
        integrable_alt_by_formula: integrable_alt,
        sampled_13_margin: margin,
        samples: entries.len(),
        violations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Domain;

    #[test]
    fn hardy_constants() {
        assert!((hardy_constant(3, 2.0).unwrap() - 0.25).abs() < 1e-15);
        assert!((hardy_constant(4, 2.0).unwrap() - 1.0).abs() < 1e-15);
        assert!((hardy_constant(3, 1.5).unwrap() - 1.0).abs() < 1e-15);
        assert!(hardy_constant(3, 3.0).is_err());
        assert!(hardy_constant(3, 1.0).is_err());
    }

    #[test]
    fn exponent_case_split() {
        let (r, r_alt) = admissibility_exponents(2.0, 2.0, 3).unwrap();
        match r {
            LocalExponent::Exact(r) => assert!((r - 1.2).abs() < 1e-14),
            other => panic!("{other:?}"),
        }
        assert!((r_alt - 1.0).abs() < 1e-15);
        assert_eq!(admissibility_exponents(2.0, 1.8, 1).unwrap().0, LocalExponent::One);
        assert_eq!(
            admissibility_exponents(2.0, 2.0, 2).unwrap().0,
            LocalExponent::AnyAboveOne
        );
    }

    #[test]
    fn exponent_constraints_are_named() {
        let msg = |p, q| admissibility_exponents(p, q, 3).unwrap_err().to_string();
        assert!(msg(0.5, 0.5).contains("p must exceed 1"));
        assert!(msg(2.0, 2.5).contains("q must not exceed p"));
        assert!(msg(3.0, 1.5).contains("q must exceed p - 1"));
    }

    #[test]
    fn point_values() {
        let mesh = Mesh::build(
            Domain::punctured_box(vec![(-1.0, 1.0); 3], 0.0).unwrap(),
            &[5, 5, 5],
            0.2,
        )
        .unwrap();
        let q = evaluate_potential(&Potential::QuadraticHardy, &mesh).unwrap();
        let h = evaluate_potential(&Potential::HardyP { n: 3, p: 1.5 }, &mesh).unwrap();
        // (0.5, 0, 0) has |x| = 0.5 and (1, 0, 0) has |x| = 1.
        let a = mesh.node_at(&[3, 2, 2]);
        let b = mesh.node_at(&[4, 2, 2]);
        assert!((q[a] - 1.0).abs() < 1e-14);
        assert!((h[b] - 1.0).abs() < 1e-14);
        let c = evaluate_potential(&Potential::Constant { value: 2.0 }, &mesh).unwrap();
        let centre = mesh.node_at(&[2, 2, 2]);
        assert!(mesh.is_excluded(centre));
        assert_eq!(c[centre], 0.0);
        assert_eq!(c[a], 2.0);
        assert_eq!(q[centre], 0.0);
    }

    #[test]
    fn unexcluded_singular_node_is_an_error() {
        let mesh = Mesh::build(Domain::boxed(vec![(-1.0, 1.0); 3]).unwrap(), &[5, 5, 5], 0.0)
            .unwrap();
        assert!(evaluate_potential(&Potential::QuadraticHardy, &mesh).is_err());
    }

    #[test]
    fn hardy_scales_along_rays() {
        let mesh = Mesh::build(
            Domain::punctured_box(vec![(-2.0, 2.0); 3], 0.0).unwrap(),
            &[9, 9, 9],
            0.3,
        )
        .unwrap();
        let p = 1.7;
        let v = evaluate_potential(&Potential::HardyP { n: 3, p }, &mesh).unwrap();
        // (0.5, 0.5, 0) and (1, 1, 0); (0.5, 0, 0.5) and (1, 0, 1).
        for (a, b) in [([5, 5, 4], [6, 6, 4]), ([5, 4, 5], [6, 4, 6]), ([3, 4, 4], [2, 4, 4])] {
            let (va, vb) = (v[mesh.node_at(&a)], v[mesh.node_at(&b)]);
            assert!((va / vb - 2f64.powf(p)).abs() < 1e-12);
        }
    }

    #[test]
    fn cylindrical_hardy_needs_k_above_p() {
        assert!(Potential::CylindricalHardy { k: 2, p: 2.0 }.validate(3).is_err());
        assert!(Potential::CylindricalHardy { k: 2, p: 1.5 }.validate(3).is_ok());
        assert!(Potential::HardyP { n: 3, p: 3.5 }.validate(3).is_err());
    }

    #[test]
    fn cylinder_decay_weight() {
        let mesh = Mesh::build(Domain::strip(&[(0.0, 1.0)], 1, 2.0).unwrap(), &[5, 9], 0.0)
            .unwrap();
        let w = evaluate_weight(&Weight::CylinderDecay { c: 3.0, p: 2.0 }, &mesh).unwrap();
        let node = mesh.node_at(&[2, 8]);
        assert!((w[node] - 3.0 / 5.0).abs() < 1e-14);
        assert!(Weight::Constant { value: 0.0 }.validate().is_err());
    }
}
