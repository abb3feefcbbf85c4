//! Reward-mode × camera-shift × seed grids.

use std::path::Path;

use rayon::prelude::*;

use super::config::ExperimentConfig;
use super::output::{self, RunFiles};
use super::train::{evaluate_policy, run_training, EvalResult, TrainRecord};
use crate::env::Task;
use crate::nn::Mlp;
use crate::rewards::{RewardKind, RewardMode};
use crate::rng::{RngStreams, Stream};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct AblationGrid {
    /// Shared settings; `reward` and `shift_deg` are overridden per cell.
    pub base: ExperimentConfig,
    pub modes: Vec<RewardKind>,
    pub shifts: Vec<f64>,
}

impl AblationGrid {
    /// All four reward regimes at the base config's shift.
    pub fn four_way(base: ExperimentConfig) -> Self {
        let shifts = vec![base.shift_deg];
        Self {
            base,
            modes: RewardKind::ALL.to_vec(),
            shifts,
        }
    }

    /// `(mode, shift)` cells in summary order.
    pub fn cells(&self) -> Vec<ExperimentConfig> {
        let mut modes = self.modes.clone();
        modes.sort_by_key(|m| RewardKind::ALL.iter().position(|k| k == m));
        modes.dedup();
        let mut shifts = self.shifts.clone();
        shifts.sort_by(f64::total_cmp);
        shifts.dedup();
        modes
            .iter()
            .flat_map(|&reward| {
                shifts.iter().map(move |&shift_deg| ExperimentConfig {
                    reward,
                    shift_deg,
                    ..self.base.clone()
                })
            })
            .collect()
    }
}

/// Outcome of one (mode, shift, seed) run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunResult {
    pub config: ExperimentConfig,
    pub seed: u64,
    pub record: TrainRecord,
    pub final_eval: EvalResult,
    pub actor: Mlp,
}

/// Across-seed aggregate of one (mode, shift) cell.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub task: Task,
    pub mode: RewardMode,
    pub shift_deg: f64,
    pub seeds: usize,
    pub eval_episodes: usize,
    pub reward_mean: f64,
    /// Sample standard deviation across seeds (0 for a single seed).
    pub reward_std: f64,
    pub success_mean: f64,
    pub success_std: f64,
}

#[derive(Debug, Clone)]
pub struct AblationOutcome {
    pub runs: Vec<RunResult>,
    pub reports: Vec<EvalReport>,
}

impl AblationOutcome {
    pub fn report(&self, mode: RewardKind, shift_deg: f64) -> Option<&EvalReport> {
        self.reports
            .iter()
            .find(|r| r.mode.name() == mode.name() && r.shift_deg == shift_deg)
    }
}

/// Mean and sample standard deviation.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, var.sqrt())
}

/// Train, then evaluate greedily with `eval_episodes` fresh episodes.
pub fn run_single(config: &ExperimentConfig, seed: u64) -> Result<RunResult> {
    let (agent, record) = run_training(config, seed)?;
    let mut rng = RngStreams::new(seed).stream(Stream::Evaluation);
    let final_eval = evaluate_policy(&agent, config, config.eval_episodes, &mut rng)?;
    Ok(RunResult {
        config: config.clone(),
        seed,
        record,
        final_eval,
        actor: agent.actor,
    })
}

/// Run every cell of the grid for every seed, aggregate across seeds, and
/// when `out_dir` is given write one curve CSV and manifest per run plus a
/// `summary.csv`.
pub fn run_ablation(grid: &AblationGrid, out_dir: Option<&Path>) -> Result<AblationOutcome> {
    if grid.modes.is_empty() || grid.shifts.is_empty() {
        return Err(Error::Config("ablation grid is empty".into()));
    }
    grid.base.validate()?;
    if let Some(dir) = out_dir {
        output::ensure_dir(dir)?;
    }
    let cells = grid.cells();
    let jobs: Vec<(usize, u64)> = cells
        .iter()
        .enumerate()
        .flat_map(|(i, c)| c.seed_list().into_iter().map(move |s| (i, s)))
        .collect();

    let results: Vec<Result<RunResult>> = jobs
        .par_iter()
        .map(|&(i, seed)| {
            let run = run_single(&cells[i], seed)?;
            if let Some(dir) = out_dir {
                let files = RunFiles::new(dir, &run.config, seed);
                output::write_curve(&files.curve, &run.record.rows)?;
                output::write_manifest(&files.manifest, &run.config, seed)?;
                output::write_actor(&files.actor, &run.actor)?;
            }
            Ok(run)
        })
        .collect();

    let mut runs = Vec::with_capacity(results.len());
    let mut failure = None;
    for (res, &(i, seed)) in results.into_iter().zip(&jobs) {
        match res {
            Ok(run) => runs.push(run),
            Err(e) if failure.is_none() => failure = Some((cells[i].run_name(seed), e)),
            Err(_) => {}
        }
    }
    if let Some((run, source)) = failure {
        return Err(Error::Ablation {
            failed_run: run,
            completed: runs.iter().map(|r| r.config.run_name(r.seed)).collect(),
            source: Box::new(source),
        });
    }

    let reports: Vec<EvalReport> = cells
        .iter()
        .map(|cell| {
            let cell_runs: Vec<&RunResult> = runs
                .iter()
                .filter(|r| r.config.reward == cell.reward && r.config.shift_deg == cell.shift_deg)
                .collect();
            let rewards: Vec<f64> = cell_runs.iter().map(|r| r.final_eval.mean_reward).collect();
            let success: Vec<f64> = cell_runs.iter().map(|r| r.final_eval.success_rate).collect();
            let (reward_mean, reward_std) = mean_std(&rewards);
            let (success_mean, success_std) = mean_std(&success);
            EvalReport {
                task: cell.task,
                mode: cell.reward_mode(),
                shift_deg: cell.shift_deg,
                seeds: cell_runs.len(),
                eval_episodes: cell.eval_episodes,
                reward_mean,
                reward_std,
                success_mean,
                success_std,
            }
        })
        .collect();

    if let Some(dir) = out_dir {
        output::write_summary(&dir.join("summary.csv"), &reports)?;
    }
    Ok(AblationOutcome { runs, reports })
}
