//! Composite Absolute Penalty (CAP) regression.
//!
//! Penalties of the form `T(β) = ‖(α_1‖β_{G_1}‖_{γ_1}, …, α_K‖β_{G_K}‖_{γ_K})‖_{γ₀}`
//! over possibly overlapping groups, exact piecewise-linear path tracers for
//! the L1/L∞ members of the family, an approximate BLasso tracer for the
//! rest, model selection along a path, and the simulation harness.
//!
//! All solvers minimize `½‖y - Xβ‖² + λ·T(β)`, so `λ` lives on the half
//! residual-sum-of-squares scale.

pub mod blasso;
pub mod cluster;
pub mod error;
pub mod hierarchy;
pub mod io;
pub mod maxflow;
pub mod model;
pub mod path;
pub mod penalty;
pub mod selection;
pub mod simulation;

pub use error::{CapError, Result};
pub use hierarchy::HierarchyGraph;
pub use model::{group_normalize, standardize, Coefficients, Dataset, Grouping, GroupingSpec, Norm, Standardization};
pub use penalty::PenaltyValue;
