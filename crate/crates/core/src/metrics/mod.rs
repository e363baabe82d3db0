//! Behavioral metrics: order dependency of finished towers, per-step
//! trace likelihoods under each predictor, and run summaries.

pub mod likelihood;
pub mod order;
pub mod summary;

pub use likelihood::{
    advantage_csv, mean_log_likelihood, relative_advantage, trace_log_likelihood, AdvantageRow,
    LikelihoodReport, LikelihoodRow, StepLikelihood,
};
pub use order::{order_dependency, OrderDependencyResult};
pub use summary::{summarize_runs, Estimate, RunSummary};
