//! Exact checks of minimax duality for ensembles of generators on small,
//! fully tractable problems: grid conjugates and envelopes, quadratic
//! payoff families, Shapley-Folkman and Caratheodory decompositions, and
//! the discrete GAN value.

use thiserror::Error;

pub mod caratheodory;
pub mod checks;
pub mod discrete;
pub mod family;
pub mod grid;
pub mod lp;
pub mod shapley_folkman;

pub use caratheodory::{caratheodory_reduce, Reduced};
pub use checks::{infconv_check, strong_duality_check, InfConvReport, StrongDualityReport};
pub use discrete::{discrete_gan_value, DiscreteGanValue};
pub use family::{exact_minimax, family_h, DualityReport, QuadraticFamily};
pub use grid::{conjugate_grid, lower_convex_envelope, GridFunction};
pub use shapley_folkman::{shapley_folkman_decompose, Part, SfDecomposition, SfInstance};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DualityError {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("incompatible grids: {0}")]
    GridMismatch(String),
    #[error("payoff family has no members")]
    EmptyFamily,
    #[error("non-finite input")]
    NonFinite,
    #[error("dimension mismatch: expected {expected}, found {found}")]
    Dimension { expected: usize, found: usize },
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error("{count} multisets to enumerate exceeds the cap of {cap}")]
    EnumerationCap { count: u128, cap: u128 },
    #[error("not a convex combination: {0}")]
    NotConvexCombination(String),
    #[error("invalid instance: {0}")]
    InvalidInstance(String),
    #[error("target {target:?} is not in the convex hull of the Minkowski sum")]
    NotInHull { target: Vec<f64> },
    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),
    #[error("distributions have different support sizes ({left} vs {right})")]
    SupportMismatch { left: usize, right: usize },
}

pub type Result<T> = std::result::Result<T, DualityError>;
