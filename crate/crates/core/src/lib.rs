//! Guaranteed lower bounds on transient distributions of Markov population
//! models with time-dependent rates.
//!
//! The analysis advances through windows of uniformization with a
//! time-varying rate, keeping only states whose probability exceeds a
//! threshold. Every approximation step loses probability mass and never
//! creates it, so the result is a pointwise lower bound and the missing
//! mass bounds the total error.
//!
//! ```no_run
//! use mpm_transient::{builtin_model, run, RunOptions};
//!
//! let spec = builtin_model("exclusive_switch").unwrap();
//! let res = run(&spec, &RunOptions::default()).unwrap();
//! println!("error bound {:e}", res.total_error());
//! ```

pub mod cli;
pub mod engine;
pub mod error;
pub mod model;
pub mod oracle;
pub mod poisson;
pub mod stepper;
mod sum;

pub use engine::{
    accumulate, dtmc_step, jump_bound, self_loop_bound, total_error, ErrorLedger, SparseDistribution,
    StepRecord, UniformizationRate,
};
pub use error::{Error, Result};
pub use model::{builtin_model, parse_model, ModelSpec, StateVec, TransitionClass};
pub use oracle::{integrate_forward, verify_underapprox, OracleSolution, StateBox};
pub use poisson::{right_truncation, step_parameter, weights, PoissonTruncation};
pub use stepper::{
    choose_step, find_max_state_moments, find_max_state_monotone, moment_derivatives, run, FindMaxMethod,
    MomentState, RunOptions, RunResult, StepPlan,
};
pub use sum::compensated_sum;
