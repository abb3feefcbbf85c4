//! Reward regimes for the reach and lift tasks.
//!
//! Shaped rewards follow `1 - tanh(10 d)` outside a 3 cm touch radius. In the
//! lift task the grasped and lifted phases pay fixed amounts every step they
//! hold. Sparse rewards are paid on true task events only; when several
//! events hold at once the highest tier pays.

use std::fmt;
use std::str::FromStr;

use crate::env::{StepEvents, Task};
use crate::{Error, Result};

/// Distance below which the reach reward saturates at 1.
pub const TOUCH_DISTANCE: f64 = 0.03;
pub const LIFTED_REWARD: f64 = 2.25;
pub const GRASPED_DENSE_REWARD: f64 = 1.0;
pub const GRASPED_SPARSE_REWARD: f64 = 1.25;
pub const TOUCHED_SPARSE_REWARD: f64 = 1.0;

/// Largest per-step reward of a task.
pub fn max_step_reward(task: Task) -> f64 {
    match task {
        Task::Reach => 1.0,
        Task::Lift => LIFTED_REWARD,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum RewardMode {
    Dense,
    Sparse,
    Oracle,
    /// Dense for episodes `0..switch_episode`, sparse afterwards.
    Dense2Sparse { switch_episode: usize },
}

impl RewardMode {
    pub fn name(&self) -> &'static str {
        match self {
            RewardMode::Dense => "dense",
            RewardMode::Sparse => "sparse",
            RewardMode::Oracle => "oracle",
            RewardMode::Dense2Sparse { .. } => "dense2sparse",
        }
    }

    pub fn switch_episode(&self) -> Option<usize> {
        match self {
            RewardMode::Dense2Sparse { switch_episode } => Some(*switch_episode),
            _ => None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.switch_episode() == Some(0) {
            return Err(Error::Config("switch episode must be >= 1".into()));
        }
        Ok(())
    }

    /// Build a mode from its name; `dense2sparse` needs a switch episode.
    pub fn from_name(name: &str, switch_episode: Option<usize>) -> Result<Self> {
        let mode = match name.trim().to_ascii_lowercase().as_str() {
            "dense" => RewardMode::Dense,
            "sparse" => RewardMode::Sparse,
            "oracle" => RewardMode::Oracle,
            "dense2sparse" => RewardMode::Dense2Sparse {
                switch_episode: switch_episode.ok_or_else(|| {
                    Error::Config("dense2sparse requires a switch episode".into())
                })?,
            },
            other => {
                return Err(Error::Config(format!(
                    "unknown reward mode '{other}' (expected dense|sparse|oracle|dense2sparse)"
                )))
            }
        };
        mode.validate()?;
        Ok(mode)
    }
}

impl fmt::Display for RewardMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Modes written on the command line; `dense2sparse` without a switch point
/// parses with a placeholder that the harness replaces by its default.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum RewardKind {
    Dense,
    Sparse,
    Oracle,
    Dense2Sparse,
}

impl RewardKind {
    pub const ALL: [RewardKind; 4] = [
        RewardKind::Dense,
        RewardKind::Sparse,
        RewardKind::Oracle,
        RewardKind::Dense2Sparse,
    ];

    pub fn with_switch(self, switch_episode: usize) -> RewardMode {
        match self {
            RewardKind::Dense => RewardMode::Dense,
            RewardKind::Sparse => RewardMode::Sparse,
            RewardKind::Oracle => RewardMode::Oracle,
            RewardKind::Dense2Sparse => RewardMode::Dense2Sparse { switch_episode },
        }
    }

    pub fn name(self) -> &'static str {
        self.with_switch(1).name()
    }
}

impl FromStr for RewardKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match RewardMode::from_name(s, Some(1))? {
            RewardMode::Dense => RewardKind::Dense,
            RewardMode::Sparse => RewardKind::Sparse,
            RewardMode::Oracle => RewardKind::Oracle,
            RewardMode::Dense2Sparse { .. } => RewardKind::Dense2Sparse,
        })
    }
}

/// Everything a reward may depend on for one step.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct RewardContext {
    pub task: Option<Task>,
    pub episode_index: usize,
    /// Distance from the gripper to the perceived block position.
    pub estimated_distance: Option<f64>,
    /// Distance from the gripper to the true block position.
    pub true_distance: Option<f64>,
    pub events: Option<StepEvents>,
}

impl RewardContext {
    pub fn new(task: Task, episode_index: usize) -> Self {
        Self {
            task: Some(task),
            episode_index,
            ..Self::default()
        }
    }

    pub fn with_estimated_distance(mut self, d: f64) -> Self {
        self.estimated_distance = Some(d);
        self
    }

    pub fn with_true_distance(mut self, d: f64) -> Self {
        self.true_distance = Some(d);
        self
    }

    pub fn with_events(mut self, events: StepEvents) -> Self {
        self.events = Some(events);
        self
    }

    fn require_task(&self) -> Result<Task> {
        self.task
            .ok_or_else(|| Error::Config("reward context is missing the task".into()))
    }

    fn require_events(&self) -> Result<StepEvents> {
        self.events
            .ok_or_else(|| Error::Config("reward context is missing the step events".into()))
    }
}

fn shaped(d: f64) -> Result<f64> {
    if !(d >= 0.0) {
        return Err(Error::Domain(format!("distance must be >= 0, got {d}")));
    }
    Ok(if d <= TOUCH_DISTANCE {
        1.0
    } else {
        1.0 - (10.0 * d).tanh()
    })
}

/// Shaped reach reward.
pub fn reach_dense(d: f64) -> Result<f64> {
    shaped(d)
}

pub fn reach_sparse(events: &StepEvents) -> f64 {
    if events.touched {
        1.0
    } else {
        0.0
    }
}

/// Shaped lift reward: the reaching stage is shaped on `d`; once the block
/// is held the phase reward takes over.
pub fn lift_dense(d: f64, events: &StepEvents) -> Result<f64> {
    if !(d >= 0.0) {
        return Err(Error::Domain(format!("distance must be >= 0, got {d}")));
    }
    Ok(if events.lifted {
        LIFTED_REWARD
    } else if events.grasped {
        GRASPED_DENSE_REWARD
    } else {
        1.0 - (10.0 * d).tanh()
    })
}

pub fn lift_sparse(events: &StepEvents) -> f64 {
    if events.lifted {
        LIFTED_REWARD
    } else if events.grasped {
        GRASPED_SPARSE_REWARD
    } else if events.touched {
        TOUCHED_SPARSE_REWARD
    } else {
        0.0
    }
}

fn dense_for(task: Task, d: f64, events: Option<StepEvents>) -> Result<f64> {
    match task {
        Task::Reach => reach_dense(d),
        Task::Lift => {
            let events = events.ok_or_else(|| {
                Error::Config("lift rewards need the step events".into())
            })?;
            lift_dense(d, &events)
        }
    }
}

fn sparse_for(task: Task, events: &StepEvents) -> f64 {
    match task {
        Task::Reach => reach_sparse(events),
        Task::Lift => lift_sparse(events),
    }
}

/// Training reward under `mode`.
///
/// Dense uses the perceived distance, oracle the true one; both take grasp
/// and lift phases from the true events. Sparse only looks at true events.
pub fn step_reward(mode: RewardMode, ctx: &RewardContext) -> Result<f64> {
    let task = ctx.require_task()?;
    let dense_on = |d: Option<f64>, what: &str| -> Result<f64> {
        let d = d.ok_or_else(|| Error::Config(format!("reward context is missing the {what} distance")))?;
        dense_for(task, d, ctx.events)
    };
    match mode {
        RewardMode::Dense => dense_on(ctx.estimated_distance, "estimated"),
        RewardMode::Oracle => dense_on(ctx.true_distance, "true"),
        RewardMode::Sparse => Ok(sparse_for(task, &ctx.require_events()?)),
        RewardMode::Dense2Sparse { switch_episode } => {
            mode.validate()?;
            if ctx.episode_index < switch_episode {
                dense_on(ctx.estimated_distance, "estimated")
            } else {
                Ok(sparse_for(task, &ctx.require_events()?))
            }
        }
    }
}

/// Evaluation reward: the shaped formula on the true state, whatever the
/// training regime was.
pub fn eval_reward(ctx: &RewardContext) -> Result<f64> {
    step_reward(RewardMode::Oracle, ctx)
}
