//! Distributionally robust chance-constrained Bayesian optimization over
//! finite design × environment grids.
//!
//! The pieces, bottom up: [`gp`] posteriors over the product grid,
//! [`ambiguity`] sets and their exact worst-case expectations, the [`drcc`]
//! bounds / classification / acquisition logic, comparison policies in
//! [`baselines`], benchmark [`problems`], and the replicated [`harness`].

pub mod ambiguity;
pub mod baselines;
pub mod drcc;
pub mod error;
pub mod gp;
pub mod grid;
pub mod harness;
pub mod output;
pub mod problems;

pub use ambiguity::{
    empirical_reference, epsilon_schedule, l1_distance, worst_case_expectation, AmbiguitySet,
    DiscreteDistribution, Distance,
};
pub use baselines::{BaselineConfig, Method, PolicyContext, Selection};
pub use drcc::{
    beta_schedule, classify, eta_parameter, stopping, BetaMode, BoundsTable, DesignBounds,
    ScheduleParams, SetLabel, StopStatus,
};
pub use error::{Error, Result};
pub use gp::{kernel_eval, prior_variance_min, GpPosterior, KernelParams, Observation};
pub use grid::{make_grid, GridSpace};
pub use harness::{
    run_algorithm1, run_algorithm1_observed, run_experiment, run_replications, EpsilonMode,
    EtaMode, ExperimentConfig, ExperimentResult, RunSpec, RunStatus, RunTrace, Setting, TraceRow,
};
pub use problems::{ProblemInstance, ProblemTag, TrueValues};
