//! Reinforcement-learning lab for studying reward shaping on simulated
//! manipulation tasks.
//!
//! A TD3 agent learns to reach or lift a block with a kinematic gripper while
//! the block position it observes comes from a noisy, possibly biased
//! perception model. The training reward can be dense (shaped on the
//! perceived distance), sparse (paid on true task events), oracle (shaped on
//! the true distance) or a dense-to-sparse schedule that switches from the
//! former to the latter after a fixed number of episodes.
//!
//! Module map:
//! - [`nn`]: fixed-topology MLPs with backprop, Adam and Polyak averaging
//! - [`td3`]: replay buffer and the TD3 learner
//! - [`env`]: reach / lift simulator
//! - [`perception`]: block-position estimator with camera-shift bias
//! - [`rewards`]: the reward regimes and the evaluation reward
//! - [`harness`]: training loops, evaluation, ablation grids, CSV output, CLI

pub mod env;
mod error;
pub mod harness;
pub mod nn;
pub mod perception;
pub mod rewards;
pub mod rng;
pub mod td3;

pub use error::{Error, Result};
