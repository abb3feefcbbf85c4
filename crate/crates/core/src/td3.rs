//! Twin Delayed DDPG.
//!
//! Two critics are trained toward a clipped double-Q target built with
//! target-policy smoothing; the actor and all target networks are refreshed
//! only every `policy_delay` critic updates.

use ndarray::{concatenate, s, Array1, Array2, ArrayView2, Axis};
use rand::Rng as _;
use rand_distr::{Distribution, Normal};

use crate::nn::{polyak_update, Activation, Adam, Mlp};
use crate::rng::Rng;
use crate::{Error, Result};

/// TD3 hyperparameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Td3Config {
    pub gamma: f64,
    pub tau: f64,
    pub policy_delay: u64,
    pub target_noise_std: f64,
    pub target_noise_clip: f64,
    pub exploration_noise_std: f64,
    pub batch_size: usize,
    /// Hidden layer widths shared by actor and critics.
    pub hidden: Vec<usize>,
    pub actor_lr: f64,
    pub critic_lr: f64,
    pub buffer_capacity: usize,
    /// Environment steps taken with uniform random actions before the policy acts.
    pub warmup_steps: usize,
}

impl Default for Td3Config {
    fn default() -> Self {
        Self {
            gamma: 0.9,
            tau: 0.005,
            policy_delay: 2,
            target_noise_std: 0.2,
            target_noise_clip: 0.5,
            exploration_noise_std: 0.1,
            batch_size: 256,
            hidden: vec![256, 256],
            actor_lr: Adam::DEFAULT_LR,
            critic_lr: Adam::DEFAULT_LR,
            buffer_capacity: 200_000,
            warmup_steps: 1_000,
        }
    }
}

impl Td3Config {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if !(0.0..1.0).contains(&self.gamma) {
            return bad(format!("discount {} outside [0, 1)", self.gamma));
        }
        if !(0.0..=1.0).contains(&self.tau) {
            return bad(format!("polyak rate {} outside [0, 1]", self.tau));
        }
        if self.policy_delay == 0 {
            return bad("policy delay must be >= 1".into());
        }
        if self.batch_size == 0 || self.buffer_capacity == 0 {
            return bad("batch size and buffer capacity must be >= 1".into());
        }
        if self.hidden.contains(&0) {
            return bad(format!("hidden sizes must be positive: {:?}", self.hidden));
        }
        for (name, v) in [
            ("target noise std", self.target_noise_std),
            ("target noise clip", self.target_noise_clip),
            ("exploration noise std", self.exploration_noise_std),
        ] {
            if !(v >= 0.0) || !v.is_finite() {
                return bad(format!("{name} must be finite and >= 0, got {v}"));
            }
        }
        if !(self.actor_lr > 0.0) || !(self.critic_lr > 0.0) {
            return bad("learning rates must be positive".into());
        }
        Ok(())
    }
}

/// One replay record.
#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub state: Vec<f64>,
    pub action: Vec<f64>,
    pub reward: f64,
    pub next_state: Vec<f64>,
    pub done: bool,
}

/// Bounded FIFO replay memory; the oldest record is overwritten when full.
#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    items: Vec<Transition>,
    capacity: usize,
    cursor: usize,
}

/// Column-stacked minibatch.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub states: Array2<f64>,
    pub actions: Array2<f64>,
    pub rewards: Array1<f64>,
    pub next_states: Array2<f64>,
    /// 1.0 for terminal rows, 0.0 otherwise.
    pub dones: Array1<f64>,
}

impl Batch {
    pub fn len(&self) -> usize {
        self.rewards.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rewards.is_empty()
    }

    pub fn from_transitions<'a>(rows: impl ExactSizeIterator<Item = &'a Transition>) -> Result<Self> {
        let rows: Vec<&Transition> = rows.collect();
        let first = rows
            .first()
            .ok_or_else(|| Error::Shape("cannot build an empty batch".into()))?;
        let (obs, act) = (first.state.len(), first.action.len());
        let n = rows.len();
        let mut states = Array2::zeros((n, obs));
        let mut actions = Array2::zeros((n, act));
        let mut next_states = Array2::zeros((n, obs));
        let mut rewards = Array1::zeros(n);
        let mut dones = Array1::zeros(n);
        for (i, t) in rows.iter().enumerate() {
            if t.state.len() != obs || t.next_state.len() != obs || t.action.len() != act {
                return Err(Error::Shape(format!("transition {i} has inconsistent lengths")));
            }
            states.row_mut(i).assign(&ndarray::aview1(&t.state));
            actions.row_mut(i).assign(&ndarray::aview1(&t.action));
            next_states.row_mut(i).assign(&ndarray::aview1(&t.next_state));
            rewards[i] = t.reward;
            dones[i] = if t.done { 1.0 } else { 0.0 };
        }
        Ok(Self {
            states,
            actions,
            rewards,
            next_states,
            dones,
        })
    }
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Result<Self> {
        if capacity == 0 {
            return Err(Error::Config("replay capacity must be >= 1".into()));
        }
        Ok(Self {
            items: Vec::with_capacity(capacity.min(1 << 16)),
            capacity,
            cursor: 0,
        })
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn is_ready(&self, batch_size: usize) -> bool {
        self.items.len() >= batch_size
    }

    pub fn push(&mut self, transition: Transition) {
        if self.items.len() < self.capacity {
            self.items.push(transition);
        } else {
            self.items[self.cursor] = transition;
        }
        self.cursor = (self.cursor + 1) % self.capacity;
    }

    /// Stored transitions, oldest first.
    pub fn iter(&self) -> impl Iterator<Item = &Transition> {
        let split = if self.items.len() < self.capacity { 0 } else { self.cursor };
        self.items[split..].iter().chain(self.items[..split].iter())
    }

    /// Stored transitions, oldest first, for in-place edits such as reward
    /// relabelling.
    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut Transition> {
        let split = if self.items.len() < self.capacity { 0 } else { self.cursor };
        let (head, tail) = self.items.split_at_mut(split);
        tail.iter_mut().chain(head.iter_mut())
    }

    /// Uniform indices with replacement.
    pub fn sample_indices(&self, batch_size: usize, rng: &mut Rng) -> Result<Vec<usize>> {
        if batch_size == 0 {
            return Err(Error::Config("batch size must be >= 1".into()));
        }
        if !self.is_ready(batch_size) {
            return Err(Error::NotReady {
                size: self.items.len(),
                needed: batch_size,
            });
        }
        let n = self.items.len();
        Ok((0..batch_size).map(|_| rng.random_range(0..n)).collect())
    }

    pub fn sample(&self, batch_size: usize, rng: &mut Rng) -> Result<Batch> {
        let idx = self.sample_indices(batch_size, rng)?;
        Batch::from_transitions(idx.iter().map(|&i| &self.items[i]))
    }
}

/// Losses and counters reported by one [`Td3Agent::train_step`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainDiagnostics {
    /// Sum of both critics' MSE before the update.
    pub critic_loss: f64,
    /// `-mean Q1(s, actor(s))` before the update, when the actor was updated.
    pub actor_loss: Option<f64>,
    pub critic_updates: u64,
    pub actor_updates: u64,
}

/// Actor, twin critics, their targets and optimisers.
#[derive(Debug, Clone, PartialEq)]
pub struct Td3Agent {
    pub actor: Mlp,
    pub actor_target: Mlp,
    pub critic1: Mlp,
    pub critic2: Mlp,
    pub critic1_target: Mlp,
    pub critic2_target: Mlp,
    actor_opt: Adam,
    critic1_opt: Adam,
    critic2_opt: Adam,
    config: Td3Config,
    critic_updates: u64,
    actor_updates: u64,
}

fn layer_sizes(input: usize, hidden: &[usize], output: usize) -> Vec<usize> {
    let mut sizes = Vec::with_capacity(hidden.len() + 2);
    sizes.push(input);
    sizes.extend_from_slice(hidden);
    sizes.push(output);
    sizes
}

impl Td3Agent {
    /// Freshly initialised agent; targets start as exact copies.
    pub fn new(obs_dim: usize, action_dim: usize, config: Td3Config, rng: &mut Rng) -> Result<Self> {
        config.validate()?;
        let actor = Mlp::new(&layer_sizes(obs_dim, &config.hidden, action_dim), Activation::Tanh, rng)?;
        let critic_sizes = layer_sizes(obs_dim + action_dim, &config.hidden, 1);
        let critic1 = Mlp::new(&critic_sizes, Activation::Identity, rng)?;
        let critic2 = Mlp::new(&critic_sizes, Activation::Identity, rng)?;
        Self::from_networks(actor, critic1, critic2, config)
    }

    /// Agent around given networks. The actor must end in tanh and the critics
    /// must take `[state, action]` and return one value.
    pub fn from_networks(actor: Mlp, critic1: Mlp, critic2: Mlp, config: Td3Config) -> Result<Self> {
        config.validate()?;
        let critic_in = actor.input_dim() + actor.output_dim();
        for c in [&critic1, &critic2] {
            if c.input_dim() != critic_in || c.output_dim() != 1 {
                return Err(Error::Shape(format!(
                    "critic {:?} does not fit actor {:?}",
                    c.layer_sizes(),
                    actor.layer_sizes()
                )));
            }
        }
        Ok(Self {
            actor_target: actor.clone(),
            critic1_target: critic1.clone(),
            critic2_target: critic2.clone(),
            actor_opt: Adam::new(&actor, config.actor_lr),
            critic1_opt: Adam::new(&critic1, config.critic_lr),
            critic2_opt: Adam::new(&critic2, config.critic_lr),
            actor,
            critic1,
            critic2,
            config,
            critic_updates: 0,
            actor_updates: 0,
        })
    }

    pub fn config(&self) -> &Td3Config {
        &self.config
    }

    pub fn obs_dim(&self) -> usize {
        self.actor.input_dim()
    }

    pub fn action_dim(&self) -> usize {
        self.actor.output_dim()
    }

    pub fn critic_updates(&self) -> u64 {
        self.critic_updates
    }

    pub fn actor_updates(&self) -> u64 {
        self.actor_updates
    }

    /// Policy action, optionally with Gaussian exploration noise, clamped to `[-1, 1]`.
    pub fn select_action(&self, observation: &[f64], explore: bool, rng: &mut Rng) -> Result<Vec<f64>> {
        let mut action = self.actor.predict_one(observation)?;
        if explore && self.config.exploration_noise_std > 0.0 {
            let noise = Normal::new(0.0, self.config.exploration_noise_std)
                .map_err(|e| Error::Config(e.to_string()))?;
            action.iter_mut().for_each(|a| *a += noise.sample(rng));
        }
        action.iter_mut().for_each(|a| *a = a.clamp(-1.0, 1.0));
        Ok(action)
    }

    /// Uniform random action, used during warmup.
    pub fn random_action(&self, rng: &mut Rng) -> Vec<f64> {
        (0..self.action_dim()).map(|_| rng.random_range(-1.0..=1.0)).collect()
    }

    /// Smoothed target actions for `next_states`: target-actor output plus
    /// clipped Gaussian noise, clamped to the action box.
    pub fn target_actions(&self, next_states: ArrayView2<f64>, rng: &mut Rng) -> Result<Array2<f64>> {
        let mut actions = self.actor_target.predict(next_states)?;
        let clip = self.config.target_noise_clip;
        let std = self.config.target_noise_std;
        if std > 0.0 {
            let noise = Normal::new(0.0, std).map_err(|e| Error::Config(e.to_string()))?;
            actions.mapv_inplace(|a| a + noise.sample(rng).clamp(-clip, clip));
        }
        actions.mapv_inplace(|a| a.clamp(-1.0, 1.0));
        Ok(actions)
    }

    /// Clipped double-Q regression targets, one per batch row.
    pub fn compute_targets(&self, batch: &Batch, rng: &mut Rng) -> Result<Array1<f64>> {
        if batch.is_empty() {
            return Err(Error::Shape("empty batch".into()));
        }
        let next_actions = self.target_actions(batch.next_states.view(), rng)?;
        let input = concatenate![Axis(1), batch.next_states, next_actions];
        let q1 = self.critic1_target.predict(input.view())?;
        let q2 = self.critic2_target.predict(input.view())?;
        let gamma = self.config.gamma;
        let mut y = batch.rewards.clone();
        for i in 0..y.len() {
            let bootstrap = q1[[i, 0]].min(q2[[i, 0]]);
            y[i] += (1.0 - batch.dones[i]) * gamma * bootstrap;
        }
        Ok(y)
    }

    /// Summed MSE of both critics against `targets`.
    pub fn critic_loss(&self, batch: &Batch, targets: &Array1<f64>) -> Result<f64> {
        let input = concatenate![Axis(1), batch.states, batch.actions];
        let mut total = 0.0;
        for critic in [&self.critic1, &self.critic2] {
            let q = critic.predict(input.view())?;
            total += mse(&q, targets)?;
        }
        Ok(total)
    }

    /// One Adam step per critic toward `targets`. Returns the summed MSE
    /// measured before the step.
    pub fn update_critics(&mut self, batch: &Batch, targets: &Array1<f64>) -> Result<f64> {
        let n = batch.len();
        if targets.len() != n {
            return Err(Error::Shape(format!("{} targets for {n} rows", targets.len())));
        }
        let input = concatenate![Axis(1), batch.states, batch.actions];
        let mut total = 0.0;
        for (critic, opt) in [
            (&mut self.critic1, &mut self.critic1_opt),
            (&mut self.critic2, &mut self.critic2_opt),
        ] {
            let (q, cache) = critic.forward(input.view())?;
            total += mse(&q, targets)?;
            let mut grad = q;
            for i in 0..n {
                grad[[i, 0]] = 2.0 * (grad[[i, 0]] - targets[i]) / n as f64;
            }
            let grads = critic.backward(&cache, grad.view())?;
            opt.step(critic, &grads)?;
        }
        Ok(total)
    }

    /// One Adam step on the actor ascending `mean Q1(s, actor(s))`, followed
    /// by Polyak updates of every target network. Returns the actor loss
    /// before the step.
    pub fn update_actor_and_targets(&mut self, batch: &Batch) -> Result<f64> {
        let n = batch.len();
        let (actions, actor_cache) = self.actor.forward(batch.states.view())?;
        let input = concatenate![Axis(1), batch.states, actions];
        let (q, critic_cache) = self.critic1.forward(input.view())?;
        let loss = -q.mean().unwrap_or(0.0);

        let dq = Array2::from_elem((n, 1), -1.0 / n as f64);
        let d_input = self.critic1.input_gradient(&critic_cache, dq.view())?;
        let obs_dim = self.obs_dim();
        let d_actions = d_input.slice(s![.., obs_dim..]);
        let grads = self.actor.backward(&actor_cache, d_actions)?;
        self.actor_opt.step(&mut self.actor, &grads)?;
        self.actor_updates += 1;

        let tau = self.config.tau;
        polyak_update(&mut self.critic1_target, &self.critic1, tau)?;
        polyak_update(&mut self.critic2_target, &self.critic2, tau)?;
        polyak_update(&mut self.actor_target, &self.actor, tau)?;
        Ok(loss)
    }

    /// Sample, fit the critics, and every `policy_delay` updates also move
    /// the actor and targets.
    pub fn train_step(&mut self, buffer: &ReplayBuffer, rng: &mut Rng) -> Result<TrainDiagnostics> {
        let batch = buffer.sample(self.config.batch_size, rng)?;
        let targets = self.compute_targets(&batch, rng)?;
        let critic_loss = self.update_critics(&batch, &targets)?;
        self.critic_updates += 1;
        let actor_loss = if self.critic_updates % self.config.policy_delay == 0 {
            Some(self.update_actor_and_targets(&batch)?)
        } else {
            None
        };
        Ok(TrainDiagnostics {
            critic_loss,
            actor_loss,
            critic_updates: self.critic_updates,
            actor_updates: self.actor_updates,
        })
    }
}

fn mse(q: &Array2<f64>, targets: &Array1<f64>) -> Result<f64> {
    if q.nrows() != targets.len() || q.ncols() != 1 {
        return Err(Error::Shape(format!("{:?} predictions for {} targets", q.dim(), targets.len())));
    }
    let n = targets.len() as f64;
    Ok(q.column(0).iter().zip(targets).map(|(q, y)| (q - y).powi(2)).sum::<f64>() / n)
}
