//! Neural delay differential equations.
//!
//! The crate covers an explicit Euler solver for delay differential equations
//! with grid-aligned delays, the delay families used to build discretizable
//! networks, the DenseResNet view of the Euler scheme, neural DDE maps and
//! their explicit embedding constructions, small-delay asymptotics, Morse
//! separation constants, and a region classifier over the `(K, tau)` plane.

pub mod dde_core;
pub mod delay_lib;
pub mod dense_resnet;
pub mod embedding;
pub mod error;
pub mod fields;
pub mod linalg;
pub mod morse;
pub mod neural_dde;
pub mod regions;
pub mod rng;
pub mod small_delay;

pub use dde_core::{euler_solve, History, InitialData, TimeGrid, Trajectory, VectorField};
pub use error::{Error, Result};

/// Formats a float with 17 significant digits, enough to round-trip any `f64`.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}
