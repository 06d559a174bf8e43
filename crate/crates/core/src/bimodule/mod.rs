//! The bimodule calculus: words in `ι`, `ῑ`, their realizations, and
//! intertwiners between them.

pub mod diagram;
pub mod duality;
pub mod eval;
pub mod fusion;
pub mod intertwiner;
pub mod word;

pub use fusion::{associator, fuse, Bimodule, Fusion};
pub use intertwiner::{Category, Intertwiner};
pub use word::{Label, Letter, Object, Word, WordLayout};
