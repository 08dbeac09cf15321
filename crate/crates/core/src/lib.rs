//! Numerical machinery for the forced p-Laplacian problem
//!
//! ```text
//!     -Δ_p u - V |u|^{p-2} u = f    in Ω,   u = 0 on ∂Ω
//! ```
//!
//! on tensor-product grids. The crate provides the discrete energies
//! (`Q_V`, the regularized functional `φ_ε`, the weighted Sobolev norm and the
//! dual norm of a forcing term), a Newton-CG minimizer driven through an
//! ε-continuation, first-eigenvalue estimates for the p-Laplacian, and a
//! sampling-based certification suite for the Hardy and Poincaré-type
//! inequalities that make the problem solvable.
//!
//! All per-node loops go through [`par`], which uses rayon when the
//! `parallel` feature is enabled and plain iterators otherwise. Reductions are
//! chunked with a fixed chunk size and summed in order, so both builds produce
//! bit-identical results.

pub mod energy;
pub mod error;
pub mod grid;
mod optim;
pub mod par;
pub mod potentials;
pub mod precond;
pub mod sampling;
pub mod solver;
pub mod spectra;

pub use energy::{EnergyParams, ForcingTerm, Load, Manufactured};
pub use error::{Error, Result};
pub use grid::{DiscreteFunction, Domain, DomainKind, Mesh};
pub use potentials::{AdmissibilityReport, Potential, Weight};
pub use solver::{EpsSchedule, SolveReport};
pub use spectra::{CertificationRecord, EigenResult, Verdict};
