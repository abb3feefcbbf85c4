//! Experiment orchestration: training runs, evaluation, ablation grids and
//! their CSV outputs, plus the command-line interface.

pub mod ablation;
pub mod cli;
pub mod config;
pub mod output;
pub mod train;

pub use ablation::{run_ablation, run_single, AblationGrid, AblationOutcome, EvalReport, RunResult};
pub use config::{desk_scale_td3, ExperimentConfig};
pub use train::{
    evaluate_policy, run_training, run_training_traced, CurveRow, EvalResult, Policy, TraceStep,
    TrainOutcome, TrainRecord,
};
