//! Sparse inhomogeneous random graphs with finitely many vertex types:
//! simulation, cluster statistics, spanning-tree weights, fixed-point
//! solvers, large-deviation rate functions, the Borel branching
//! correspondence and the multi-type Flory equation.

pub mod branching;
pub mod error;
pub mod exec;
pub mod flory;
pub mod graphsim;
pub mod measures;
pub mod rates;
pub mod solvers;
pub mod trees;
pub mod verify;

pub use error::{Error, Result};
pub use measures::{Kernel, MacroMeasure, Measure, MicroMeasure, Model, TypeConfig};
