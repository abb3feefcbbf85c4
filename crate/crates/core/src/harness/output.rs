//! Files written by the harness: learning curves, summaries, run manifests
//! and actor snapshots.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::ablation::EvalReport;
use super::config::ExperimentConfig;
use super::train::CurveRow;
use crate::nn::Mlp;
use crate::{Error, Result};

pub const CURVE_HEADER: &str = "episode,eval_mean_reward,eval_success_rate";
pub const SUMMARY_HEADER: &str =
    "task,reward_mode,switch_episode,shift_deg,seeds,final_reward_mean,final_reward_std,success_mean,success_std";

/// One row of the summary CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub task: String,
    pub reward_mode: String,
    /// Empty for modes without a switch.
    pub switch_episode: Option<usize>,
    pub shift_deg: f64,
    pub seeds: usize,
    pub final_reward_mean: f64,
    pub final_reward_std: f64,
    pub success_mean: f64,
    pub success_std: f64,
}

impl From<&EvalReport> for SummaryRow {
    fn from(r: &EvalReport) -> Self {
        Self {
            task: r.task.to_string(),
            reward_mode: r.mode.name().to_string(),
            switch_episode: r.mode.switch_episode(),
            shift_deg: r.shift_deg,
            seeds: r.seeds,
            final_reward_mean: r.reward_mean,
            final_reward_std: r.reward_std,
            success_mean: r.success_mean,
            success_std: r.success_std,
        }
    }
}

pub fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn write_rows<T: Serialize>(path: &Path, rows: &[T], header: &str) -> Result<()> {
    let mut writer = csv::WriterBuilder::new()
        .has_headers(false)
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    for row in rows {
        writer.serialize(row).map_err(|e| Error::Format {
            path: path.to_path_buf(),
            reason: e.to_string(),
        })?;
    }
    let body = writer.into_inner().map_err(|e| Error::Format {
        path: path.to_path_buf(),
        reason: e.to_string(),
    })?;
    let mut bytes = Vec::with_capacity(header.len() + 1 + body.len());
    bytes.extend_from_slice(header.as_bytes());
    bytes.push(b'\n');
    bytes.extend_from_slice(&body);
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn read_rows<T: for<'de> Deserialize<'de>>(path: &Path, header: &str) -> Result<Vec<T>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let malformed = |reason: String| Error::Format {
        path: path.to_path_buf(),
        reason,
    };
    if text.lines().next() != Some(header) {
        return Err(malformed(format!("expected header '{header}'")));
    }
    let mut reader = csv::Reader::from_reader(text.as_bytes());
    reader
        .deserialize()
        .map(|r| r.map_err(|e| malformed(e.to_string())))
        .collect()
}

pub fn write_curve(path: &Path, rows: &[CurveRow]) -> Result<()> {
    write_rows(path, rows, CURVE_HEADER)
}

pub fn read_curve(path: &Path) -> Result<Vec<CurveRow>> {
    read_rows(path, CURVE_HEADER)
}

pub fn write_summary(path: &Path, reports: &[EvalReport]) -> Result<()> {
    let rows: Vec<SummaryRow> = reports.iter().map(SummaryRow::from).collect();
    write_rows(path, &rows, SUMMARY_HEADER)
}

pub fn read_summary(path: &Path) -> Result<Vec<SummaryRow>> {
    read_rows(path, SUMMARY_HEADER)
}

/// Resolved configuration of a single run, replayable with `--config`.
pub fn manifest_text(config: &ExperimentConfig, seed: u64) -> String {
    let single = ExperimentConfig {
        switch_episode: config.reward_mode().switch_episode(),
        seeds: 1,
        seed_base: seed,
        ..config.clone()
    };
    format!(
        "# run {}\n# replay with: --config <this file>\n{}",
        config.run_name(seed),
        single.to_text()
    )
}

pub fn write_manifest(path: &Path, config: &ExperimentConfig, seed: u64) -> Result<()> {
    fs::write(path, manifest_text(config, seed)).map_err(|e| Error::io(path, e))
}

pub fn write_actor(path: &Path, actor: &Mlp) -> Result<()> {
    let json = serde_json::to_string(actor).map_err(|e| Error::Format {
        path: path.to_path_buf(),
        reason: e.to_string(),
    })?;
    fs::write(path, json).map_err(|e| Error::io(path, e))
}

pub fn read_actor(path: &Path) -> Result<Mlp> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mlp: Mlp = serde_json::from_str(&text).map_err(|e| Error::Format {
        path: path.to_path_buf(),
        reason: e.to_string(),
    })?;
    // Re-validate shapes; serialized data may have been edited.
    Mlp::from_parts(mlp.weights().to_vec(), mlp.biases().to_vec(), mlp.output_activation())
}

/// Paths of the files belonging to one run.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RunFiles {
    pub curve: PathBuf,
    pub manifest: PathBuf,
    pub actor: PathBuf,
}

impl RunFiles {
    pub fn new(dir: &Path, config: &ExperimentConfig, seed: u64) -> Self {
        let name = config.run_name(seed);
        Self {
            curve: dir.join(format!("{name}_curve.csv")),
            manifest: dir.join(format!("{name}.manifest")),
            actor: dir.join(format!("{name}_actor.json")),
        }
    }
}
