//! Temporal matrix completion with locally linear latent factors.
//!
//! A sequence of partially observed matrices is coupled through its latent
//! factors: each slice `F_t` is approximated by `O_t * P_t'`, and the factor
//! trajectories are penalized for bending away from straight lines in time.
//! The alternating factor updates reduce to Sylvester equations, solved here
//! through a single eigendecomposition of the temporal coupling matrix.
//!
//! Modules:
//! - [`dataset`]: temporal datasets, holdout splits, normalization, synthesis
//! - [`operators`]: second-difference operators and dense block oracles
//! - [`numerics`]: symmetric eigendecomposition, SVD, Sylvester solvers
//! - [`solver`]: the locally linear completion solver
//! - [`baselines`]: mean imputation and per-slice softImpute variants
//! - [`harness`]: holdout experiments, RMSE scoring, result tables

pub mod baselines;
pub mod dataset;
pub mod harness;
pub mod numerics;
pub mod operators;
pub mod solver;

mod rng;

pub use dataset::{HoldoutSplit, NormalizationStats, TemporalDataset};
pub use harness::{ExperimentPlan, MethodSpec, ResultTable, TableFormat};
pub use solver::{CompletionResult, FactorState, SolverConfig};
