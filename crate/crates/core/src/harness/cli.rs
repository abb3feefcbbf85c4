//! Command-line front end: `train`, `eval`, `ablation`, `reward-check`.

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use super::ablation::{mean_std, run_ablation, AblationGrid};
use super::config::ExperimentConfig;
use super::output::{self, RunFiles};
use super::train::evaluate_policy;
use crate::env::{StepEvents, Task};
use crate::rewards::{self, RewardKind};
use crate::rng::{RngStreams, Stream};
use crate::{Error, Result};

/// Exit status for malformed command lines.
pub const EXIT_USAGE: i32 = 2;
/// Exit status for failures while running a valid command.
pub const EXIT_FAILURE: i32 = 1;

#[derive(Debug, Parser)]
#[command(
    name = "dense2sparse",
    version,
    about = "TD3 reach/lift lab comparing dense, sparse, oracle and dense-to-sparse rewards"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Train one reward mode for every seed and write curves, manifests and actors.
    Train(RunArgs),
    /// Re-evaluate actors previously written by `train` or `ablation`.
    Eval(RunArgs),
    /// Train all four reward modes (or `--reward` only) for every shift and seed.
    Ablation(RunArgs),
    /// Print the reward functions at reference distances and events.
    RewardCheck,
}

#[derive(Debug, Args)]
struct RunArgs {
    #[arg(long, value_parser = parse_task)]
    task: Option<Task>,
    #[arg(long, value_parser = parse_reward)]
    reward: Option<RewardKind>,
    #[arg(long)]
    switch_episode: Option<usize>,
    /// Camera shift in degrees; `ablation` accepts a comma-separated list.
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    shift_deg: Vec<f64>,
    #[arg(long)]
    episodes: Option<usize>,
    #[arg(long)]
    eval_episodes: Option<usize>,
    #[arg(long)]
    seeds: Option<usize>,
    #[arg(long)]
    seed_base: Option<u64>,
    /// Flat `key = value` configuration file; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn parse_task(s: &str) -> std::result::Result<Task, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_reward(s: &str) -> std::result::Result<RewardKind, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

#[derive(Debug)]
enum CliError {
    Usage(String),
    Run(Error),
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Run(e)
    }
}

impl RunArgs {
    /// Resolve file + flags into a config and the list of shifts requested.
    fn resolve(&self, many_shifts: bool) -> std::result::Result<(ExperimentConfig, Vec<f64>), CliError> {
        let mut cfg = match &self.config {
            Some(path) => ExperimentConfig::from_file(path)?,
            None if self.task.is_none() => {
                return Err(CliError::Usage("--task is required (or give --config)".into()))
            }
            None => ExperimentConfig::default(),
        };
        if let Some(task) = self.task {
            cfg.task = task;
        }
        if let Some(reward) = self.reward {
            cfg.reward = reward;
        }
        if self.switch_episode.is_some() {
            cfg.switch_episode = self.switch_episode;
        }
        if let Some(n) = self.episodes {
            cfg.total_episodes = n;
        }
        if let Some(n) = self.eval_episodes {
            cfg.eval_episodes = n;
        }
        if let Some(n) = self.seeds {
            cfg.seeds = n;
        }
        if let Some(b) = self.seed_base {
            cfg.seed_base = b;
        }
        if let Some(out) = &self.out {
            cfg.out_dir = out.clone();
        }
        let shifts = match self.shift_deg.as_slice() {
            [] => vec![cfg.shift_deg],
            [one] => vec![*one],
            many if many_shifts => many.to_vec(),
            _ => return Err(CliError::Usage("only one --shift-deg value is allowed here".into())),
        };
        cfg.shift_deg = shifts[0];
        cfg.validate()?;
        Ok((cfg, shifts))
    }
}

/// One line of the `reward-check` table.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RewardCheckRow {
    pub function: &'static str,
    pub distance: Option<f64>,
    pub events: Option<StepEvents>,
    pub value: f64,
}

/// Reference distances used by `reward-check`.
pub const CHECK_DISTANCES: [f64; 5] = [0.0, 0.03, 0.05, 0.1, 0.2];

/// All (touched, grasped, lifted) combinations.
fn event_combinations() -> impl Iterator<Item = StepEvents> {
    (0..8u8).map(|bits| StepEvents {
        touched: bits & 1 != 0,
        grasped: bits & 2 != 0,
        lifted: bits & 4 != 0,
        done: false,
    })
}

pub fn reward_table() -> Result<Vec<RewardCheckRow>> {
    let mut rows = Vec::new();
    for d in CHECK_DISTANCES {
        rows.push(RewardCheckRow {
            function: "reach_dense",
            distance: Some(d),
            events: None,
            value: rewards::reach_dense(d)?,
        });
    }
    for touched in [false, true] {
        let ev = StepEvents { touched, ..StepEvents::default() };
        rows.push(RewardCheckRow {
            function: "reach_sparse",
            distance: None,
            events: Some(ev),
            value: rewards::reach_sparse(&ev),
        });
    }
    for d in CHECK_DISTANCES {
        for ev in event_combinations() {
            rows.push(RewardCheckRow {
                function: "lift_dense",
                distance: Some(d),
                events: Some(ev),
                value: rewards::lift_dense(d, &ev)?,
            });
        }
    }
    for ev in event_combinations() {
        rows.push(RewardCheckRow {
            function: "lift_sparse",
            distance: None,
            events: Some(ev),
            value: rewards::lift_sparse(&ev),
        });
    }
    Ok(rows)
}

fn write_reward_table(out: &mut dyn Write) -> Result<()> {
    let io = |e| Error::io("<stdout>", e);
    writeln!(out, "function,d,touched,grasped,lifted,value").map_err(io)?;
    for row in reward_table()? {
        let d = row.distance.map_or(String::new(), |d| d.to_string());
        let flag = |f: fn(&StepEvents) -> bool| row.events.map_or(String::new(), |e| f(&e).to_string());
        writeln!(
            out,
            "{},{},{},{},{},{}",
            row.function,
            d,
            flag(|e| e.touched),
            flag(|e| e.grasped),
            flag(|e| e.lifted),
            row.value
        )
        .map_err(io)?;
    }
    Ok(())
}

fn train(args: &RunArgs, out: &mut dyn Write, ablation: bool) -> std::result::Result<(), CliError> {
    let (cfg, shifts) = args.resolve(ablation)?;
    let modes = if ablation && args.reward.is_none() {
        RewardKind::ALL.to_vec()
    } else {
        vec![cfg.reward]
    };
    let grid = AblationGrid {
        modes,
        shifts,
        base: cfg.clone(),
    };
    let outcome = run_ablation(&grid, Some(&cfg.out_dir))?;
    let io = |e| CliError::Run(Error::io("<stdout>", e));
    for run in &outcome.runs {
        writeln!(
            out,
            "{}: final_reward={:.3} success={:.3}",
            run.config.run_name(run.seed),
            run.final_eval.mean_reward,
            run.final_eval.success_rate
        )
        .map_err(io)?;
    }
    for r in &outcome.reports {
        writeln!(
            out,
            "{} {} shift={}: reward {:.3} ± {:.3}, success {:.3} ± {:.3} over {} seeds",
            r.task, r.mode, r.shift_deg, r.reward_mean, r.reward_std, r.success_mean, r.success_std, r.seeds
        )
        .map_err(io)?;
    }
    writeln!(out, "outputs written to {}", cfg.out_dir.display()).map_err(io)?;
    Ok(())
}

#[derive(serde::Serialize)]
struct EvalRow {
    seed: u64,
    eval_mean_reward: f64,
    eval_success_rate: f64,
}

fn eval(args: &RunArgs, out: &mut dyn Write) -> std::result::Result<(), CliError> {
    let (cfg, _) = args.resolve(false)?;
    let io = |e| CliError::Run(Error::io("<stdout>", e));
    let mut rows = Vec::new();
    for seed in cfg.seed_list() {
        let files = RunFiles::new(&cfg.out_dir, &cfg, seed);
        let actor = output::read_actor(&files.actor)?;
        let mut rng = RngStreams::new(seed).stream(Stream::Evaluation);
        let res = evaluate_policy(&actor, &cfg, cfg.eval_episodes, &mut rng)?;
        writeln!(
            out,
            "{}: reward={:.3} success={:.3} over {} episodes",
            cfg.run_name(seed),
            res.mean_reward,
            res.success_rate,
            res.episodes
        )
        .map_err(io)?;
        rows.push(EvalRow {
            seed,
            eval_mean_reward: res.mean_reward,
            eval_success_rate: res.success_rate,
        });
    }
    let rewards: Vec<f64> = rows.iter().map(|r| r.eval_mean_reward).collect();
    let success: Vec<f64> = rows.iter().map(|r| r.eval_success_rate).collect();
    let (rm, rs) = mean_std(&rewards);
    let (sm, ss) = mean_std(&success);
    writeln!(out, "mean reward {rm:.3} ± {rs:.3}, success {sm:.3} ± {ss:.3}").map_err(io)?;

    let name = format!("{}_{}_shift{}_eval.csv", cfg.task, cfg.reward.name(), cfg.shift_deg);
    let path = cfg.out_dir.join(name);
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_path(&path)
        .map_err(|e| Error::Format { path: path.clone(), reason: e.to_string() })?;
    for row in &rows {
        w.serialize(row)
            .map_err(|e| Error::Format { path: path.clone(), reason: e.to_string() })?;
    }
    w.flush().map_err(|e| Error::io(&path, e))?;
    Ok(())
}

/// Parse `args` (including the program name), run, and return the exit status.
pub fn run_cli<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            if code == 0 {
                let _ = write!(out, "{e}");
            } else {
                let _ = write!(err, "{e}");
            }
            return code;
        }
    };
    let result = match &cli.command {
        Command::Train(a) => train(a, out, false),
        Command::Ablation(a) => train(a, out, true),
        Command::Eval(a) => eval(a, out),
        Command::RewardCheck => write_reward_table(out).map_err(CliError::Run),
    };
    match result {
        Ok(()) => 0,
        Err(CliError::Usage(msg)) => {
            let _ = writeln!(err, "error: {msg}");
            EXIT_USAGE
        }
        Err(CliError::Run(Error::Config(msg))) => {
            let _ = writeln!(err, "error: invalid configuration: {msg}");
            EXIT_USAGE
        }
        Err(CliError::Run(e)) => {
            let _ = writeln!(err, "error: {e}");
            EXIT_FAILURE
        }
    }
}
