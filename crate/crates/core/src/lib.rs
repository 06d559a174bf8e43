//! Conditional expectations between finite-dimensional C*-algebras: indices,
//! duals, the Jones tower, the bimodule calculus and Q-systems.

pub mod algebra;
pub mod bimodule;
pub mod cli;
pub mod error;
pub mod expectation;
pub mod experiment;
pub mod fixtures;
pub mod inclusion;
pub mod index;
pub mod linalg;
pub mod manifest;
pub mod optim;
pub mod qsystem;
pub mod report;
pub mod serial;
pub mod tower;

pub use error::{Error, Result};
