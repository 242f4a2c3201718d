//! The simulation loop, paired oracle runs, regret accounting, the fixed
//! evaluation batch, and result artifacts.

pub mod config;
pub mod output;
pub mod regret;
pub mod sim;
pub mod stats;
pub mod streams;
pub mod summary;

pub use config::{EvalConfig, PolicyKind, SimConfig};
pub use regret::{bayes_regret_series, multi_task_regret_series, RegretLedger, StepRecord};
pub use sim::{
    evaluate_batch, run_in_world, run_simulation, EvalPrior, Interaction, SimOutput, Snapshot,
    Trajectory, UserRecord, World,
};
pub use summary::{compare, run_seeds, Comparisons, PolicySummary, SeedResult};
