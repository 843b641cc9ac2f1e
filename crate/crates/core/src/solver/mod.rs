//! Convex solvers and tuning for the Lasso and Robust Lasso.

mod cd;
mod lambda;
mod lilliefors;

pub use cd::{
    kkt_residual, lasso, lasso_kkt_residual, robust_lasso, robust_objective, soft_threshold, Design, LassoFit,
    RobustFit, SolverOptions,
};
pub use lambda::{cross_validation_error, select_lambdas, theory_lambdas, LambdaChoice, LambdaGrid};
pub use lilliefors::{lilliefors_pvalue, lilliefors_statistic, MIN_SAMPLE, NULL_REPLICATES};
