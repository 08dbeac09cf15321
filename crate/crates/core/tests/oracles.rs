//! Comparisons against independent closed forms and direct linear solves.

use std::f64::consts::PI;
use std::sync::Arc;

use approx::assert_relative_eq;
use plap_core::energy::{self, EnergyParams, ForcingTerm, Manufactured};
use plap_core::potentials::hardy_constant;
use plap_core::solver::{self, SolverOptions};
use plap_core::spectra::{rayleigh_min, rayleigh_min_with, RayleighOptions};
use plap_core::{DiscreteFunction, Domain, Mesh};

fn interval(lo: f64, hi: f64, nodes: usize) -> Arc<Mesh> {
    Mesh::build(Domain::interval(lo, hi).unwrap(), &[nodes], 0.0).unwrap()
}

/// `4/h² sin²(πh / 2L)` with `L` the interval length.
fn three_point_lambda(len: f64, nodes: usize) -> f64 {
    let h = len / (nodes - 1) as f64;
    4.0 / (h * h) * (0.5 * PI * h / len).sin().powi(2)
}

/// Thomas algorithm for a symmetric tridiagonal system.
fn thomas(diag: &[f64], off: &[f64], rhs: &[f64]) -> Vec<f64> {
    let n = diag.len();
    let mut c = vec![0.0; n];
    let mut d = vec![0.0; n];
    c[0] = off.first().copied().unwrap_or(0.0) / diag[0];
    d[0] = rhs[0] / diag[0];
    for i in 1..n {
        let m = diag[i] - off[i - 1] * c[i - 1];
        if i < n - 1 {
            c[i] = off[i] / m;
        }
        d[i] = (rhs[i] - off[i - 1] * d[i - 1]) / m;
    }
    let mut x = vec![0.0; n];
    x[n - 1] = d[n - 1];
    for i in (0..n - 1).rev() {
        x[i] = d[i] - c[i] * x[i + 1];
    }
    x
}

/// Interior system `(K + σ M) u = ℓ` of the 1-D p = 2 energy.
fn interior_solve(mesh: &Mesh, sigma: f64, load: &[f64]) -> Vec<f64> {
    let n = mesh.len();
    let h = mesh.spacing()[0];
    let m = n - 2;
    let diag = vec![2.0 / h + sigma * h; m];
    let off = vec![-1.0 / h; m - 1];
    let inner = thomas(&diag, &off, &load[1..n - 1]);
    let mut u = vec![0.0; n];
    u[1..n - 1].copy_from_slice(&inner);
    u
}

#[test]
fn eigenvalue_matches_tridiagonal_closed_form() {
    let mesh = interval(0.0, 1.0, 41);
    let r = rayleigh_min(&mesh, 2.0, 1e-12, 5000, 0);
    assert_relative_eq!(r.lambda, three_point_lambda(1.0, 41), max_relative = 1e-8);
    assert!(r.warning.is_none());
    assert_relative_eq!(energy::lp_power(&r.minimizer, 2.0, None), 1.0, max_relative = 1e-10);
    assert!(r.history.windows(2).all(|w| w[1] <= w[0] + 1e-14));
}

#[test]
fn eigenvalue_matches_five_point_closed_form() {
    let mesh = Mesh::build(Domain::boxed(vec![(0.0, 1.0); 2]).unwrap(), &[21, 21], 0.0).unwrap();
    let r = rayleigh_min(&mesh, 2.0, 1e-12, 5000, 0);
    assert_relative_eq!(r.lambda, 2.0 * three_point_lambda(1.0, 21), max_relative = 1e-8);
}

#[test]
fn constant_potential_shifts_the_spectrum() {
    let mesh = interval(0.0, 1.0, 41);
    let r = rayleigh_min_with(
        &mesh,
        2.0,
        &RayleighOptions {
            potential: Some(vec![3.0; mesh.len()]),
            tol: 1e-12,
            max_iter: 5000,
            ..Default::default()
        },
        0,
    );
    assert_relative_eq!(r.lambda, three_point_lambda(1.0, 41) - 3.0, max_relative = 1e-8);
}

#[test]
fn interval_length_two_scales_by_a_quarter() {
    let a = rayleigh_min(&interval(0.0, 1.0, 201), 2.0, 1e-11, 5000, 0).lambda;
    let b = rayleigh_min(&interval(0.0, 2.0, 201), 2.0, 1e-11, 5000, 0).lambda;
    assert_relative_eq!(b, a / 4.0, max_relative = 1e-8);
    assert_relative_eq!(b, PI * PI / 4.0, max_relative = 1e-2);
    // p-homogeneity of the quotient: lambda scales as L^{-p}.
    let a3 = rayleigh_min(&interval(0.0, 1.0, 101), 3.0, 1e-11, 5000, 0).lambda;
    let b3 = rayleigh_min(&interval(0.0, 2.0, 101), 3.0, 1e-11, 5000, 0).lambda;
    assert_relative_eq!(b3, a3 / 8.0, max_relative = 1e-6);
}

#[test]
fn linear_minimizer_matches_banded_solve() {
    let mesh = interval(0.0, 1.0, 81);
    let density: Vec<f64> = (0..mesh.len())
        .map(|i| {
            let x = mesh.coords(i)[0];
            (3.0 * x).exp() - 2.0 * x
        })
        .collect();
    let load = ForcingTerm::TabulatedDensity(density).load(&mesh).unwrap();
    let v = vec![0.0; mesh.len()];
    let eps = 0.05;
    let params = EnergyParams::new(2.0, 2.0, eps, 0.0).unwrap();
    let out = solver::minimize_phi(
        &DiscreteFunction::zeros(&mesh),
        &v,
        &load,
        &params,
        &SolverOptions::default(),
        None,
    )
    .unwrap();
    let direct = interior_solve(&mesh, eps, load.covector());
    for (a, b) in out.u.values().iter().zip(&direct) {
        assert!((a - b).abs() <= 1e-9 * (1.0 + b.abs()), "{a} vs {b}");
    }
}

#[test]
fn dual_norm_matches_inverse_stiffness() {
    let mesh = interval(0.0, 1.0, 61);
    let load = ForcingTerm::Manufactured(Manufactured::Gaussian {
        amplitude: 4.0,
        center: vec![0.3],
        width: 0.1,
    })
    .load(&mesh)
    .unwrap();
    let v = vec![0.0; mesh.len()];
    let w = interior_solve(&mesh, 0.0, load.covector());
    let exact: f64 = load.covector().iter().zip(&w).map(|(a, b)| a * b).sum::<f64>().sqrt();
    let est = energy::dual_norm(&load, &mesh, &v, 2.0, 400, 0).unwrap();
    assert!(est.value <= exact * (1.0 + 1e-12));
    assert_relative_eq!(est.value, exact, max_relative = 1e-6);
    let doubled = energy::dual_norm(&load.scaled(2.0), &mesh, &v, 2.0, 400, 0).unwrap();
    assert_relative_eq!(doubled.value, 2.0 * est.value, max_relative = 1e-12);
}

#[test]
fn increment_agrees_with_value_difference() {
    let mesh = Mesh::build(Domain::boxed(vec![(0.0, 1.0); 2]).unwrap(), &[9, 9], 0.0).unwrap();
    let load = ForcingTerm::Manufactured(Manufactured::Constant { value: 1.5 }).load(&mesh).unwrap();
    let v = vec![0.7; mesh.len()];
    let u = DiscreteFunction::from_fn(&mesh, |x| (PI * x[0]).sin() * x[1] * (1.0 - x[1]) * 3.0);
    let d = DiscreteFunction::from_fn(&mesh, |x| x[0] * (1.0 - x[0]) * (2.0 * PI * x[1]).sin());
    for p in [1.5, 2.0, 3.5] {
        let params = EnergyParams::new(p, p, 0.1, 1e-3).unwrap();
        for t in [1.0, 0.3, -0.2] {
            let moved = u.axpy(t, &d);
            let diff = energy::phi(&moved, &v, &load, &params) - energy::phi(&u, &v, &load, &params);
            let inc = energy::phi_increment(&u, &d, t, &v, &load, &params);
            assert!((diff - inc).abs() <= 1e-12 * (1.0 + diff.abs()), "p={p} t={t}: {diff} vs {inc}");
        }
    }
}

#[test]
fn hardy_constants_from_the_closed_form() {
    for n in 3..=6 {
        let half = (n as f64 - 2.0) / 2.0;
        assert_relative_eq!(hardy_constant(n, 2.0).unwrap(), half * half, max_relative = 1e-15);
    }
    assert_relative_eq!(hardy_constant(3, 1.5).unwrap(), 1.0, max_relative = 1e-15);
    assert!(hardy_constant(3, 3.0).is_err());
}

#[test]
fn strictly_convex_energy_has_one_basin() {
    let mesh = interval(0.0, 1.0, 41);
    let load = ForcingTerm::Manufactured(Manufactured::Sine {
        amplitude: 5.0,
        modes: vec![1],
    })
    .load(&mesh)
    .unwrap();
    let v = vec![0.0; mesh.len()];
    let params = EnergyParams::new(3.0, 3.0, 0.01, 0.0).unwrap();
    let r = solver::multi_start(&mesh, &v, &load, &params, &SolverOptions::default(), 6, 11, 1e-8).unwrap();
    assert_eq!(r.phi_values.len(), 6);
    assert_eq!(r.distinct_basins, 1, "{:?}", r.phi_values);
    assert!(r.spread <= 1e-8 * r.phi_values[0].abs());
}
