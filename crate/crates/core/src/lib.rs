//! Numerical laboratory for group extensions of shifts of finite type.
//!
//! The crate computes thermodynamic G-densities, convergence parameters of
//! matrix-coefficient series, Gurevič pressures, twisted approximating
//! measures and limits of matrix coefficients, together with the free-group
//! closed forms they are checked against.

#![allow(non_snake_case)]

pub mod decaylab;
pub mod engine;
pub mod error;
pub mod gdensity;
pub mod groups;
pub mod repspace;
pub mod shiftspace;
pub mod slowvar;
pub mod system;
pub mod thermo;
pub mod twisted;

pub use error::{Error, Result};
pub use groups::{Elem, GroupBackend, GroupKind, Marking};
pub use repspace::{ConeVector, Density};
pub use shiftspace::{BaseTail, Letter, ShiftSpec};
pub use slowvar::SlowFunction;
pub use system::System;
