//! Monte Carlo experiments: configuration, per-trial runs, aggregation, sweeps,
//! invariant checks and file output.

pub mod config;
pub mod experiment;
pub mod invariants;
pub mod plot;
pub mod trial;

pub use config::{ExperimentConfig, SweepParam, SweepSpec};
pub use experiment::{
    run_case_study, run_monte_carlo, run_sweep, sweep, MonteCarloResult, SweepPoint, SweepResult,
};
pub use invariants::{check_invariants, InvariantReport};
pub use trial::{run_single_trial, run_trial, Estimator, TrialContext, TrialOutcome, TrialRun};
