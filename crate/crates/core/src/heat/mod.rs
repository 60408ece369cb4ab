//! Discrete Neumann heat semigroup on grid domains.

mod checks;
mod discrete;

pub use checks::*;
pub use discrete::*;
