//! Training loop and greedy evaluation.

use std::collections::VecDeque;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use crate::env::{self, Action, EnvState, ACTION_DIM, OBS_DIM};
use crate::nn::Mlp;
use crate::perception::PerceptionModel;
use crate::rewards::{eval_reward, step_reward, RewardContext, RewardMode};
use crate::rng::{Rng, RngStreams, Stream};
use crate::td3::{ReplayBuffer, Td3Agent, Transition};
use crate::{Error, Result};

/// Anything that maps an observation to an action deterministically.
pub trait Policy {
    fn act(&self, observation: &[f64]) -> Result<Vec<f64>>;
}

impl Policy for Td3Agent {
    fn act(&self, observation: &[f64]) -> Result<Vec<f64>> {
        let mut action = self.actor.predict_one(observation)?;
        action.iter_mut().for_each(|a| *a = a.clamp(-1.0, 1.0));
        Ok(action)
    }
}

/// A bare actor network acts like the greedy agent.
impl Policy for Mlp {
    fn act(&self, observation: &[f64]) -> Result<Vec<f64>> {
        let mut action = self.predict_one(observation)?;
        action.iter_mut().for_each(|a| *a = a.clamp(-1.0, 1.0));
        Ok(action)
    }
}

/// One point of a learning curve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurveRow {
    /// Training episodes completed when the evaluation ran.
    pub episode: usize,
    pub eval_mean_reward: f64,
    pub eval_success_rate: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainRecord {
    pub seed: u64,
    pub rows: Vec<CurveRow>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalResult {
    pub mean_reward: f64,
    pub success_rate: f64,
    pub episodes: usize,
}

/// One logged training step: the reward context and the reward paid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceStep {
    pub episode: usize,
    pub step: usize,
    pub context: RewardContext,
    pub reward: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub agent: Td3Agent,
    pub record: TrainRecord,
    /// Present when requested; one entry per environment step.
    pub trace: Option<Vec<TraceStep>>,
    pub env_steps: usize,
}

fn observe(
    state: &EnvState,
    perception: &PerceptionModel,
    true_inputs: bool,
    rng: &mut Rng,
) -> (Vector3<f64>, [f64; OBS_DIM]) {
    let estimate = perception.estimate(&state.block_pos, rng);
    let seen = if true_inputs { state.block_pos } else { estimate };
    (estimate, env::observation(state, &seen))
}

/// Train one agent.
pub fn run_training(config: &ExperimentConfig, seed: u64) -> Result<(Td3Agent, TrainRecord)> {
    let out = train(config, seed, false)?;
    Ok((out.agent, out.record))
}

/// Train one agent and keep the per-step reward trace.
pub fn run_training_traced(config: &ExperimentConfig, seed: u64) -> Result<TrainOutcome> {
    train(config, seed, true)
}

fn train(config: &ExperimentConfig, seed: u64, keep_trace: bool) -> Result<TrainOutcome> {
    config.validate()?;
    let mode = config.reward_mode();
    let perception = config.perception()?;
    let env_cfg = config.env_config();
    let task = config.task;

    let streams = RngStreams::new(seed);
    let mut init_rng = streams.stream(Stream::Init);
    let mut explore_rng = streams.stream(Stream::Exploration);
    let mut env_rng = streams.stream(Stream::Environment);
    let mut perception_rng = streams.stream(Stream::Perception);
    let mut train_rng = streams.stream(Stream::Training);

    let mut agent = Td3Agent::new(OBS_DIM, ACTION_DIM, config.td3.clone(), &mut init_rng)?;
    let mut buffer = ReplayBuffer::new(config.td3.buffer_capacity)?;
    let mut rows = Vec::new();
    let mut trace = keep_trace.then(Vec::new);
    let mut env_steps = 0usize;
    // Reward contexts parallel to the buffer, kept only when relabelling.
    let relabel_at = mode.switch_episode().filter(|_| config.relabel_on_switch);
    let mut contexts: VecDeque<RewardContext> = VecDeque::new();

    for episode in 0..config.total_episodes {
        if relabel_at == Some(episode) {
            relabel(&mut buffer, &contexts, mode, episode)?;
            contexts = VecDeque::new();
        }
        let mut state = env::reset(task, &env_cfg, &mut env_rng);
        let (_, mut obs) = observe(&state, &perception, config.true_state_inputs, &mut perception_rng);
        loop {
            let action = if env_steps < config.td3.warmup_steps {
                agent.random_action(&mut explore_rng)
            } else {
                agent.select_action(&obs, true, &mut explore_rng)?
            };
            let (next, events) = env::step(&state, &Action::from_slice(&action)?, &env_cfg)?;
            let (estimate, next_obs) =
                observe(&next, &perception, config.true_state_inputs, &mut perception_rng);

            let context = RewardContext::new(task, episode)
                .with_estimated_distance((next.gripper_pos - estimate).norm())
                .with_true_distance(env::true_distance(&next))
                .with_events(events);
            let reward = step_reward(mode, &context)?;
            if let Some(trace) = trace.as_mut() {
                trace.push(TraceStep {
                    episode,
                    step: next.step_count,
                    context,
                    reward,
                });
            }

            // Running out of time is not a terminal state.
            let terminal = events.done && next.step_count < env_cfg.horizon;
            buffer.push(Transition {
                state: obs.to_vec(),
                action,
                reward,
                next_state: next_obs.to_vec(),
                done: terminal,
            });
            if relabel_at.is_some_and(|at| episode < at) {
                if contexts.len() == buffer.capacity() {
                    contexts.pop_front();
                }
                contexts.push_back(context);
            }
            env_steps += 1;
            if env_steps > config.td3.warmup_steps && buffer.is_ready(config.td3.batch_size) {
                agent.train_step(&buffer, &mut train_rng)?;
            }

            state = next;
            obs = next_obs;
            if events.done {
                break;
            }
        }

        let completed = episode + 1;
        if completed >= config.eval_start && completed % config.eval_every == 0 {
            let mut eval_rng = streams.stream(Stream::Evaluation);
            let eval = evaluate_policy(&agent, config, config.curve_eval_episodes, &mut eval_rng)?;
            rows.push(CurveRow {
                episode: completed,
                eval_mean_reward: eval.mean_reward,
                eval_success_rate: eval.success_rate,
            });
        }
    }

    Ok(TrainOutcome {
        agent,
        record: TrainRecord { seed, rows },
        trace,
        env_steps,
    })
}

/// Re-score stored transitions (oldest first, paired with `contexts`) as if
/// they had been collected in `episode`.
fn relabel(
    buffer: &mut ReplayBuffer,
    contexts: &VecDeque<RewardContext>,
    mode: RewardMode,
    episode: usize,
) -> Result<()> {
    if contexts.len() != buffer.len() {
        return Err(Error::Shape(format!(
            "{} reward contexts for {} stored transitions",
            contexts.len(),
            buffer.len()
        )));
    }
    for (t, ctx) in buffer.iter_mut().zip(contexts) {
        t.reward = step_reward(mode, &RewardContext { episode_index: episode, ..*ctx })?;
    }
    Ok(())
}

/// Greedy rollouts scored with the true-state evaluation reward.
///
/// The policy still observes the perception estimate, as during training.
/// A success is any episode in which the task is completed before the
/// horizon.
pub fn evaluate_policy<P: Policy + ?Sized>(
    policy: &P,
    config: &ExperimentConfig,
    n_episodes: usize,
    rng: &mut Rng,
) -> Result<EvalResult> {
    if n_episodes == 0 {
        return Err(Error::Config("evaluation needs at least one episode".into()));
    }
    let perception = config.perception()?;
    let env_cfg = config.env_config();
    let task = config.task;
    let mut total_reward = 0.0;
    let mut successes = 0usize;
    for _ in 0..n_episodes {
        let mut state = env::reset(task, &env_cfg, rng);
        let (_, mut obs) = observe(&state, &perception, config.true_state_inputs, rng);
        let mut succeeded = false;
        loop {
            let action = policy.act(&obs)?;
            let (next, events) = env::step(&state, &Action::from_slice(&action)?, &env_cfg)?;
            let context = RewardContext::new(task, 0)
                .with_true_distance(env::true_distance(&next))
                .with_events(events);
            total_reward += eval_reward(&context)?;
            succeeded |= events.success(task);
            let (_, next_obs) = observe(&next, &perception, config.true_state_inputs, rng);
            state = next;
            obs = next_obs;
            if events.done {
                break;
            }
        }
        successes += usize::from(succeeded);
    }
    Ok(EvalResult {
        mean_reward: total_reward / n_episodes as f64,
        success_rate: successes as f64 / n_episodes as f64,
        episodes: n_episodes,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{StepEvents, Task};

    #[test]
    fn relabel_rewrites_rewards_with_the_sparse_formula() {
        let mode = RewardMode::Dense2Sparse { switch_episode: 2 };
        let mut buffer = ReplayBuffer::new(2).unwrap();
        let mut contexts = VecDeque::new();
        for (i, touched) in [false, true, false].into_iter().enumerate() {
            let ctx = RewardContext::new(Task::Reach, 0)
                .with_estimated_distance(0.01)
                .with_true_distance(0.1)
                .with_events(StepEvents { touched, ..StepEvents::default() });
            buffer.push(Transition {
                state: vec![i as f64],
                action: vec![0.0],
                reward: step_reward(mode, &ctx).unwrap(),
                next_state: vec![0.0],
                done: false,
            });
            if contexts.len() == 2 {
                contexts.pop_front();
            }
            contexts.push_back(ctx);
        }
        assert!(buffer.iter().all(|t| t.reward == 1.0));
        relabel(&mut buffer, &contexts, mode, 2).unwrap();
        let rewards: Vec<f64> = buffer.iter().map(|t| t.reward).collect();
        assert_eq!(rewards, vec![1.0, 0.0]);
        contexts.pop_front();
        assert!(relabel(&mut buffer, &contexts, mode, 2).is_err());
    }
}
