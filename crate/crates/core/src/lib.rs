//! Metric-space assessment of the lattice local density approximation on
//! one-dimensional Hubbard chains.
//!
//! The pipeline for one system is: exact ground state ([`hamiltonian`],
//! [`eigensolver`]), Kohn-Sham LDA density ([`ks`] with the Bethe-ansatz
//! functional in [`balda`]), the interacting system reproducing the LDA
//! density ([`inversion`]), and the four distances between the two
//! interacting systems ([`metrics`]). [`experiments`] sweeps these over
//! parameter grids and writes CSV.

#[cfg(test)]
macro_rules! assert_close {
    ($a:expr, $b:expr, $tol:expr) => {{
        let (a, b, tol): (f64, f64, f64) = ($a, $b, $tol);
        assert!((a - b).abs() <= tol, "{a} vs {b} (tol {tol:e})");
    }};
}

pub mod balda;
pub mod config;
pub mod eigensolver;
pub mod error;
pub mod experiments;
pub mod hamiltonian;
pub mod hilbert;
pub mod inversion;
pub mod ks;
pub mod metrics;

pub use error::{Error, Result};
pub use hamiltonian::{build_hubbard, HubbardOperator, HubbardSystem};
pub use hilbert::{Basis, ManyBodyState, SiteField, SpinSector};
