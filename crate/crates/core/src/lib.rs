//! Travelling-wave construction and verification for lattice
//! reaction-diffusion systems discretised in both space and time.
//!
//! The crate solves the travelling-wave problems attached to
//! FitzHugh-Nagumo-type lattice equations with (possibly infinite-range)
//! interaction kernels, at three levels:
//!
//! * the spatially discrete wave equation in the co-moving frame
//!   ([`semidiscrete`]),
//! * the fully discrete wave equation obtained from implicit multistep
//!   time-stepping with rational `c dt` ([`fullydiscrete`]),
//! * direct implicit time integration of the lattice system ([`timesim`]).
//!
//! Around the solvers sit the executable structural checks: kernel and
//! equilibrium conditions ([`kernel`], [`model`]), exact coefficient tables
//! and discrete derivatives ([`bdf`]), twisted operators, characteristic
//! matrices and quasi-inverse diagnostics on the periodised spaces
//! ([`spectral`]).

pub mod bdf;
pub mod error;
pub mod exec;
pub mod grid;
pub mod kernel;
pub mod linalg;
pub mod model;
pub mod fullydiscrete;
pub mod random;
pub mod semidiscrete;
pub mod spectral;
pub mod timesim;
pub mod rational;

pub use error::{Error, Result};
