//! Experiment configuration and its flat `key = value` file format.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::env::{EnvConfig, Task};
use crate::perception::{calibrate_noise, PerceptionModel, BASE_MEAN_ERROR};
use crate::rewards::{RewardKind, RewardMode};
use crate::td3::Td3Config;
use crate::{Error, Result};

/// Everything that determines a training run apart from its seed.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub task: Task,
    pub reward: RewardKind,
    /// Switch point for dense2sparse; `None` means a third of the episodes.
    pub switch_episode: Option<usize>,
    /// At the dense2sparse switch, rewrite the rewards already in the replay
    /// buffer with the sparse reward.
    pub relabel_on_switch: bool,
    pub shift_deg: f64,
    /// Mean perception error at zero shift, metres. Zero disables the noise.
    pub target_mean_error: f64,
    pub total_episodes: usize,
    pub horizon: usize,
    pub eval_every: usize,
    pub eval_start: usize,
    /// Episodes of the final evaluation.
    pub eval_episodes: usize,
    /// Episodes per learning-curve point.
    pub curve_eval_episodes: usize,
    /// Number of seeds; runs use `seed_base..seed_base + seeds`.
    pub seeds: usize,
    pub seed_base: u64,
    pub td3: Td3Config,
    pub terminate_on_success: bool,
    /// Diagnostic: the policy observes the true block position.
    pub true_state_inputs: bool,
    pub out_dir: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            task: Task::Reach,
            reward: RewardKind::Dense2Sparse,
            switch_episode: None,
            relabel_on_switch: true,
            shift_deg: 0.0,
            target_mean_error: BASE_MEAN_ERROR,
            total_episodes: 400,
            horizon: 200,
            eval_every: 5,
            eval_start: 20,
            eval_episodes: 200,
            curve_eval_episodes: 10,
            seeds: 3,
            seed_base: 0,
            td3: desk_scale_td3(),
            terminate_on_success: false,
            true_state_inputs: false,
            out_dir: PathBuf::from("runs"),
        }
    }
}

/// TD3 reference hyperparameters with networks and batches shrunk so a
/// 400-episode run finishes in about a minute on one core.
pub fn desk_scale_td3() -> Td3Config {
    Td3Config {
        hidden: vec![64, 64],
        batch_size: 64,
        ..Td3Config::default()
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if self.horizon == 0 {
            return bad("horizon must be >= 1");
        }
        if self.eval_every == 0 {
            return bad("eval_every must be >= 1");
        }
        if self.eval_episodes == 0 || self.curve_eval_episodes == 0 {
            return bad("evaluation episode counts must be >= 1");
        }
        if self.seeds == 0 {
            return bad("at least one seed is required");
        }
        if !(self.target_mean_error >= 0.0) || !self.target_mean_error.is_finite() {
            return bad("target_mean_error must be finite and >= 0");
        }
        if !self.shift_deg.is_finite() {
            return bad("shift_deg must be finite");
        }
        if self.switch_episode == Some(0) {
            return bad("switch_episode must be >= 1");
        }
        self.td3.validate()
    }

    pub fn reward_mode(&self) -> RewardMode {
        let default_switch = (self.total_episodes / 3).max(1);
        self.reward
            .with_switch(self.switch_episode.unwrap_or(default_switch))
    }

    pub fn seed_list(&self) -> Vec<u64> {
        (0..self.seeds as u64).map(|i| self.seed_base + i).collect()
    }

    pub fn env_config(&self) -> EnvConfig {
        EnvConfig {
            horizon: self.horizon,
            terminate_on_success: self.terminate_on_success,
            ..EnvConfig::default()
        }
    }

    pub fn perception(&self) -> Result<PerceptionModel> {
        let noise = if self.target_mean_error == 0.0 {
            0.0
        } else {
            calibrate_noise(self.target_mean_error)?
        };
        PerceptionModel::new(self.shift_deg, noise)
    }

    /// Short identifier of a run: `reach_dense2sparse_shift10_seed0`.
    pub fn run_name(&self, seed: u64) -> String {
        format!(
            "{}_{}_shift{}_seed{}",
            self.task,
            self.reward.name(),
            self.shift_deg,
            seed
        )
    }

    /// Apply one `key = value` setting.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let value = value.trim();
        match key.trim() {
            "task" => self.task = value.parse()?,
            "reward" | "reward_mode" => self.reward = value.parse()?,
            "switch_episode" => {
                self.switch_episode = match value {
                    "" | "auto" => None,
                    v => Some(parse(key, v)?),
                }
            }
            "relabel_on_switch" => self.relabel_on_switch = parse(key, value)?,
            "shift_deg" => self.shift_deg = parse(key, value)?,
            "target_mean_error" => self.target_mean_error = parse(key, value)?,
            "total_episodes" | "episodes" => self.total_episodes = parse(key, value)?,
            "horizon" => self.horizon = parse(key, value)?,
            "gamma" => self.td3.gamma = parse(key, value)?,
            "eval_every" => self.eval_every = parse(key, value)?,
            "eval_start" => self.eval_start = parse(key, value)?,
            "eval_episodes" => self.eval_episodes = parse(key, value)?,
            "curve_eval_episodes" => self.curve_eval_episodes = parse(key, value)?,
            "seeds" => self.seeds = parse(key, value)?,
            "seed_base" => self.seed_base = parse(key, value)?,
            "tau" => self.td3.tau = parse(key, value)?,
            "policy_delay" => self.td3.policy_delay = parse(key, value)?,
            "target_noise_std" => self.td3.target_noise_std = parse(key, value)?,
            "target_noise_clip" => self.td3.target_noise_clip = parse(key, value)?,
            "exploration_noise_std" => self.td3.exploration_noise_std = parse(key, value)?,
            "batch_size" => self.td3.batch_size = parse(key, value)?,
            "hidden_sizes" => {
                self.td3.hidden = value
                    .split(',')
                    .map(|v| parse(key, v.trim()))
                    .collect::<Result<_>>()?
            }
            "actor_lr" => self.td3.actor_lr = parse(key, value)?,
            "critic_lr" => self.td3.critic_lr = parse(key, value)?,
            "buffer_capacity" => self.td3.buffer_capacity = parse(key, value)?,
            "warmup_steps" => self.td3.warmup_steps = parse(key, value)?,
            "terminate_on_success" => self.terminate_on_success = parse(key, value)?,
            "true_state_inputs" => self.true_state_inputs = parse(key, value)?,
            "out" | "out_dir" => self.out_dir = PathBuf::from(value),
            other => return Err(Error::Config(format!("unknown configuration key '{other}'"))),
        }
        Ok(())
    }

    /// Apply a whole config file's text on top of `self`.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::Config(format!("line {}: expected 'key = value', got '{raw}'", lineno + 1))
            })?;
            self.set(key, value)
                .map_err(|e| Error::Config(format!("line {}: {e}", lineno + 1)))?;
        }
        Ok(())
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::default();
        cfg.apply_text(&text).map_err(|e| Error::Format {
            path: path.to_path_buf(),
            reason: e.to_string(),
        })?;
        Ok(cfg)
    }

    /// Every field in config-file syntax. Reading the text back yields an
    /// identical configuration.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let t = &self.td3;
        let hidden: Vec<String> = t.hidden.iter().map(|h| h.to_string()).collect();
        let switch = self
            .switch_episode
            .map_or_else(|| "auto".to_string(), |v| v.to_string());
        let entries: Vec<(&str, String)> = vec![
            ("task", self.task.to_string()),
            ("reward_mode", self.reward.name().to_string()),
            ("switch_episode", switch),
            ("relabel_on_switch", self.relabel_on_switch.to_string()),
            ("shift_deg", self.shift_deg.to_string()),
            ("target_mean_error", self.target_mean_error.to_string()),
            ("total_episodes", self.total_episodes.to_string()),
            ("horizon", self.horizon.to_string()),
            ("gamma", t.gamma.to_string()),
            ("eval_every", self.eval_every.to_string()),
            ("eval_start", self.eval_start.to_string()),
            ("eval_episodes", self.eval_episodes.to_string()),
            ("curve_eval_episodes", self.curve_eval_episodes.to_string()),
            ("seeds", self.seeds.to_string()),
            ("seed_base", self.seed_base.to_string()),
            ("tau", t.tau.to_string()),
            ("policy_delay", t.policy_delay.to_string()),
            ("target_noise_std", t.target_noise_std.to_string()),
            ("target_noise_clip", t.target_noise_clip.to_string()),
            ("exploration_noise_std", t.exploration_noise_std.to_string()),
            ("batch_size", t.batch_size.to_string()),
            ("hidden_sizes", hidden.join(",")),
            ("actor_lr", t.actor_lr.to_string()),
            ("critic_lr", t.critic_lr.to_string()),
            ("buffer_capacity", t.buffer_capacity.to_string()),
            ("warmup_steps", t.warmup_steps.to_string()),
            ("terminate_on_success", self.terminate_on_success.to_string()),
            ("true_state_inputs", self.true_state_inputs.to_string()),
            ("out_dir", self.out_dir.display().to_string()),
        ];
        for (k, v) in entries {
            let _ = writeln!(s, "{k} = {v}");
        }
        s
    }
}

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    value
        .parse()
        .map_err(|e| Error::Config(format!("bad value '{value}' for '{}': {e}", key.trim())))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn text_round_trip() {
        let mut cfg = ExperimentConfig {
            task: Task::Lift,
            reward: RewardKind::Oracle,
            switch_episode: Some(17),
            shift_deg: 7.5,
            target_mean_error: 0.0123,
            ..ExperimentConfig::default()
        };
        cfg.td3.hidden = vec![32, 16, 8];
        cfg.td3.actor_lr = 1e-3;
        let mut back = ExperimentConfig::default();
        back.apply_text(&cfg.to_text()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn comments_and_blank_lines() {
        let mut cfg = ExperimentConfig::default();
        cfg.apply_text("# header\n\ntask = lift  # inline\nepisodes=12\n").unwrap();
        assert_eq!(cfg.task, Task::Lift);
        assert_eq!(cfg.total_episodes, 12);
    }

    #[test]
    fn bad_lines_are_reported() {
        let mut cfg = ExperimentConfig::default();
        let err = cfg.apply_text("task = reach\nnonsense\n").unwrap_err();
        assert!(err.to_string().contains("line 2"));
        assert!(cfg.apply_text("colour = blue").is_err());
        assert!(cfg.apply_text("horizon = -3").is_err());
    }

    #[test]
    fn default_switch_is_a_third() {
        let cfg = ExperimentConfig {
            total_episodes: 400,
            ..ExperimentConfig::default()
        };
        assert_eq!(cfg.reward_mode(), RewardMode::Dense2Sparse { switch_episode: 133 });
        let tiny = ExperimentConfig {
            total_episodes: 2,
            ..ExperimentConfig::default()
        };
        assert_eq!(tiny.reward_mode().switch_episode(), Some(1));
    }

    #[test]
    fn validation() {
        assert!(ExperimentConfig::default().validate().is_ok());
        for cfg in [
            ExperimentConfig { eval_every: 0, ..ExperimentConfig::default() },
            ExperimentConfig { seeds: 0, ..ExperimentConfig::default() },
            ExperimentConfig { target_mean_error: -0.1, ..ExperimentConfig::default() },
            ExperimentConfig { switch_episode: Some(0), ..ExperimentConfig::default() },
        ] {
            assert!(matches!(cfg.validate(), Err(Error::Config(_))));
        }
    }

    #[test]
    fn seeds_are_consecutive() {
        let cfg = ExperimentConfig { seeds: 3, seed_base: 10, ..ExperimentConfig::default() };
        assert_eq!(cfg.seed_list(), vec![10, 11, 12]);
    }
}
