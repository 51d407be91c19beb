//! Numerical laboratory for torsion gluing on model fibers.
//!
//! The crate is organised bottom-up: [`metric_complex`] is the finite
//! dimensional engine, [`simplicial`] builds twisted cochain complexes and
//! Mayer–Vietoris data, [`model_spectra`] handles explicit Laplace spectra and
//! zeta determinants, [`heat_parametrix`] the cylinder heat kernels,
//! [`adiabatic`] the stretching and lattice spectral checks, and [`gluing`]
//! puts the pieces together.

// `!(x > 0.0)` is used on purpose so that NaN is rejected too
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod adiabatic;
pub mod config;
pub mod error;
pub mod gluing;
pub mod heat_parametrix;
pub mod linalg;
pub mod metric_complex;
pub mod model_spectra;
pub mod output;
pub mod quadrature;
pub mod simplicial;
pub mod smooth;

pub use error::{Error, Result};
pub use linalg::{CMat, C64};

/// Convention block attached to every table the CLI writes.
pub fn convention_metadata() -> Vec<(String, String)> {
    vec![
        ("crate_version".into(), env!("CARGO_PKG_VERSION").into()),
        (
            "torsion_convention".into(),
            "log T = -1/2 sum_p (-1)^p p log det' Laplacian_p".into(),
        ),
        (
            "sequence_grading".into(),
            "H^p(Z2,Y) at slot 3p, H^p(Z) at 3p+1, H^p(Z1) at 3p+2; T_f = -torsion(sequence)".into(),
        ),
        (
            "cochain_metric".into(),
            "volume weights (dual volume / cell volume) for L2 comparisons, unit cell basis for Reidemeister torsion".into(),
        ),
        ("euler_term".into(), "(log 2 / 2) rk(F) chi(Y)".into()),
    ]
}
