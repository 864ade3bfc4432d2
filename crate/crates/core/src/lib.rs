//! Dimension-constrained upper bounds on linear functionals of quantum
//! correlations: randomized moment-matrix bases, per-rank-class SDPs,
//! an interior-point solver, and see-saw lower bounds.

pub mod algebra;
pub mod basis;
pub mod cli;
pub mod error;
pub mod io;
pub mod linalg;
pub mod moment;
pub mod par;
pub mod relax;
pub mod sampler;
pub mod scenario;
pub mod solver;
pub mod verify;

pub use algebra::{Alphabet, Polynomial, RankClass, Rule, Word};
pub use error::{Error, Result};
pub use scenario::{Dim, Field, Scenario, ScenarioBuilder, StateModel, VariableKind};
