//! Nonlinear panel flutter on a clamped von Karman plate.
//!
//! The crate is layered bottom-up: [`grid`] (finite differences on a uniform
//! rectangle), [`vonkarman`] (bracket, Airy stress, restoring forces), [`aero`]
//! (piston closures and the delayed-potential reduction), [`dynamics`] (time
//! integration), [`analysis`] (linear stability, equilibria, continuation) and
//! [`diagnostics`] (energies, budgets, modal content).

pub mod aero;
pub mod analysis;
pub mod diagnostics;
pub mod dynamics;
pub mod error;
pub mod grid;
pub mod linalg;
pub mod vonkarman;

pub use error::{Error, Result};
pub use grid::{build_grid, Domain, Field, Grid};
