//! Loss-optimal point forecasts under linear constraints.
//!
//! Given a joint predictive distribution for an outcome vector `y` and a
//! constraint such as `1'f = F` on the point forecast vector `f`, the
//! optimal `f` minimizes expected loss subject to the constraint. For
//! additive losses the Lagrangian separates: each component's minimizer is
//! a known function of the multiplier `lambda` (a shifted mean for squared
//! error, a quantile for absolute deviation, a quantile of the
//! size-weighted law for percent errors), and the constraint becomes a
//! monotone scalar (or k-vector) equation in `lambda` solved by
//! Newton-Raphson.
//!
//! Beyond the optimum, the crate evaluates the predictive distribution of
//! realized loss, contrasts it across dependence structures, and runs
//! constraint sensitivity sweeps. An inferential baseline (exact
//! normal/T conditioning and rejection ABC) is provided for comparison.

pub mod analysis;
pub mod conditioning;
pub mod distributions;
pub mod error;
pub mod fixtures;
pub mod losses;
pub mod numeric;
pub mod rng;
pub mod solver;
pub mod spec;

pub use analysis::{
    dependence_contrast, loss_distribution, sensitivity, LossDistributionSummary, SensitivityResult,
};
pub use conditioning::{
    abc_condition, abc_condition_with_bins, condition_normal, condition_t, condition_t_with, AbcResult, ConditionedNormal,
    DispersionConvention,
};
pub use distributions::{
    logt_pdf, size_weighted, EmpiricalDistribution, JointForecast, MarginalDistribution, SampleMatrix,
    SizeWeightedDistribution,
};
pub use error::{Error, Result};
pub use losses::{LambdaBounds, LossFamily, LossKind, MinimizerPath};
pub use solver::{
    attainable_range, solve, solve_linear, solve_path, solve_total, ConstraintSpec, SolveResult, SolveStatus, SolverOptions,
};
