//! Kinematic point-gripper simulator for the reach and lift tasks.
//!
//! The gripper moves by Cartesian displacement commands inside a box-shaped
//! workspace and opens or closes at a fixed rate. A 5 cm cube rests on the
//! table until it is grasped; from then on it follows the gripper. There is
//! no contact physics: a grasp happens when the closed gripper is close
//! enough to the cube centre.

use std::fmt;
use std::str::FromStr;

use nalgebra::Vector3;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::rng::Rng;
use crate::{Error, Result};

/// Length of the proprioceptive part of an observation.
pub const PROPRIO_DIM: usize = 7;
/// Observation length: proprioception plus the estimated block position.
pub const OBS_DIM: usize = PROPRIO_DIM + 3;
/// Action length: three velocity commands and one grip command.
pub const ACTION_DIM: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Task {
    Reach,
    Lift,
}

impl Task {
    pub fn name(self) -> &'static str {
        match self {
            Task::Reach => "reach",
            Task::Lift => "lift",
        }
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Task {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "reach" => Ok(Task::Reach),
            "lift" => Ok(Task::Lift),
            other => Err(Error::Config(format!("unknown task '{other}' (expected reach|lift)"))),
        }
    }
}

/// Geometry and timing of the simulator. All lengths are in metres.
#[derive(Debug, Clone, PartialEq)]
pub struct EnvConfig {
    pub workspace_min: Vector3<f64>,
    pub workspace_max: Vector3<f64>,
    /// Block centres are drawn from `[-r, r]^2` on the table.
    pub block_xy_range: f64,
    pub block_half_size: f64,
    /// Vertical range for the initial gripper position.
    pub gripper_z_range: (f64, f64),
    /// Displacement of a full-scale velocity command, per step.
    pub max_displacement: f64,
    /// Change in grip degree per step.
    pub grip_rate: f64,
    pub touch_radius: f64,
    pub grasp_radius: f64,
    pub grasp_closure: f64,
    pub lift_height: f64,
    pub horizon: usize,
    /// End the episode at the first success instead of at the horizon.
    pub terminate_on_success: bool,
}

impl Default for EnvConfig {
    fn default() -> Self {
        Self {
            workspace_min: Vector3::new(-0.3, -0.3, 0.0),
            workspace_max: Vector3::new(0.3, 0.3, 0.5),
            block_xy_range: 0.15,
            block_half_size: 0.025,
            gripper_z_range: (0.1, 0.3),
            max_displacement: 0.02,
            grip_rate: 0.25,
            touch_radius: 0.03,
            grasp_radius: 0.02,
            grasp_closure: 0.9,
            lift_height: 0.04,
            horizon: 200,
            terminate_on_success: false,
        }
    }
}

/// Ground-truth simulator state.
#[derive(Debug, Clone, PartialEq)]
pub struct EnvState {
    pub task: Task,
    pub gripper_pos: Vector3<f64>,
    /// Displacement commanded on the previous step.
    pub last_displacement: Vector3<f64>,
    /// 0 fully open, 1 fully closed.
    pub grip_degree: f64,
    pub block_pos: Vector3<f64>,
    pub grasped: bool,
    pub step_count: usize,
    /// Set once the episode has ended; further steps are refused.
    pub finished: bool,
}

/// Discrete task events observed after a step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct StepEvents {
    pub touched: bool,
    pub grasped: bool,
    pub lifted: bool,
    pub done: bool,
}

impl StepEvents {
    /// Whether these events complete `task`.
    pub fn success(&self, task: Task) -> bool {
        match task {
            Task::Reach => self.touched,
            Task::Lift => self.lifted,
        }
    }
}

/// Agent command: Cartesian velocity in `[-1, 1]^3` and a grip command in
/// `[-1, 1]` (positive closes). Out-of-range entries are clamped.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Action {
    pub velocity: Vector3<f64>,
    pub grip: f64,
}

impl Action {
    pub fn zero() -> Self {
        Self {
            velocity: Vector3::zeros(),
            grip: 0.0,
        }
    }

    pub fn from_slice(a: &[f64]) -> Result<Self> {
        if a.len() != ACTION_DIM {
            return Err(Error::Shape(format!("action has {} entries, expected {ACTION_DIM}", a.len())));
        }
        Ok(Self {
            velocity: Vector3::new(a[0], a[1], a[2]),
            grip: a[3],
        })
    }
}

/// Fresh episode. The block is placed uniformly on the table; the gripper
/// is placed uniformly above it, re-drawn until it starts outside the touch
/// radius.
pub fn reset(task: Task, config: &EnvConfig, rng: &mut Rng) -> EnvState {
    let r = config.block_xy_range;
    let block_pos = Vector3::new(
        rng.random_range(-r..=r),
        rng.random_range(-r..=r),
        config.block_half_size,
    );
    let (z_lo, z_hi) = config.gripper_z_range;
    let gripper_pos = loop {
        let g = Vector3::new(
            rng.random_range(config.workspace_min.x..=config.workspace_max.x),
            rng.random_range(config.workspace_min.y..=config.workspace_max.y),
            rng.random_range(z_lo..=z_hi),
        );
        if (g - block_pos).norm() > config.touch_radius {
            break g;
        }
    };
    EnvState {
        task,
        gripper_pos,
        last_displacement: Vector3::zeros(),
        grip_degree: 0.0,
        block_pos,
        grasped: false,
        step_count: 0,
        finished: false,
    }
}

/// Advance one control step.
pub fn step(state: &EnvState, action: &Action, config: &EnvConfig) -> Result<(EnvState, StepEvents)> {
    if state.finished || state.step_count >= config.horizon {
        return Err(Error::Protocol(format!(
            "episode already ended at step {}",
            state.step_count
        )));
    }
    let mut next = state.clone();

    let velocity = action.velocity.map(|v| v.clamp(-1.0, 1.0));
    let displacement = velocity * config.max_displacement;
    next.gripper_pos = (state.gripper_pos + displacement)
        .sup(&config.workspace_min)
        .inf(&config.workspace_max);
    next.last_displacement = displacement;

    // Grip commands are ignored once the block is held.
    if !state.grasped {
        let direction = if action.grip > 0.0 { 1.0 } else { -1.0 };
        next.grip_degree = (state.grip_degree + direction * config.grip_rate).clamp(0.0, 1.0);
    }

    if next.grasped {
        next.block_pos = next.gripper_pos;
    }
    let mut distance = true_distance(&next);
    if !next.grasped && distance <= config.grasp_radius && next.grip_degree >= config.grasp_closure {
        next.grasped = true;
        next.block_pos = next.gripper_pos;
        distance = 0.0;
    }

    let touched = distance <= config.touch_radius;
    let lifted = next.grasped && next.block_pos.z - config.block_half_size >= config.lift_height;
    next.step_count += 1;

    let mut events = StepEvents {
        touched,
        grasped: next.grasped,
        lifted,
        done: false,
    };
    let success = events.success(state.task);
    events.done = (config.terminate_on_success && success) || next.step_count >= config.horizon;
    next.finished = events.done;
    Ok((next, events))
}

/// Euclidean distance between gripper centre and block centre.
pub fn true_distance(state: &EnvState) -> f64 {
    (state.gripper_pos - state.block_pos).norm()
}

/// `[gripper position, last displacement, grip degree]`.
pub fn proprioception(state: &EnvState) -> [f64; PROPRIO_DIM] {
    let g = &state.gripper_pos;
    let d = &state.last_displacement;
    [g.x, g.y, g.z, d.x, d.y, d.z, state.grip_degree]
}

/// Full agent observation: proprioception followed by the block position
/// the agent believes in.
pub fn observation(state: &EnvState, block_estimate: &Vector3<f64>) -> [f64; OBS_DIM] {
    let mut obs = [0.0; OBS_DIM];
    obs[..PROPRIO_DIM].copy_from_slice(&proprioception(state));
    obs[PROPRIO_DIM..].copy_from_slice(block_estimate.as_slice());
    obs
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;

    fn state_at(gripper: [f64; 3], block: [f64; 3]) -> EnvState {
        EnvState {
            task: Task::Reach,
            gripper_pos: Vector3::from(gripper),
            last_displacement: Vector3::zeros(),
            grip_degree: 0.0,
            block_pos: Vector3::from(block),
            grasped: false,
            step_count: 0,
            finished: false,
        }
    }

    #[test]
    fn reset_is_deterministic_and_in_range() {
        let cfg = EnvConfig::default();
        assert_eq!(reset(Task::Lift, &cfg, &mut seeded(4)), reset(Task::Lift, &cfg, &mut seeded(4)));

        let mut rng = seeded(10);
        for _ in 0..1000 {
            let s = reset(Task::Reach, &cfg, &mut rng);
            assert!(s.block_pos.x.abs() <= 0.15 && s.block_pos.y.abs() <= 0.15);
            assert_eq!(s.block_pos.z, 0.025);
            assert!((0.1..=0.3).contains(&s.gripper_pos.z));
            assert!(true_distance(&s) > 0.03);
            assert_eq!(s.grip_degree, 0.0);
            assert_eq!(s.step_count, 0);
        }
    }

    #[test]
    fn zero_action_keeps_gripper() {
        let cfg = EnvConfig::default();
        let s = reset(Task::Reach, &cfg, &mut seeded(1));
        let (n, _) = step(&s, &Action::zero(), &cfg).unwrap();
        assert_eq!(n.gripper_pos, s.gripper_pos);
        assert_eq!(n.step_count, 1);
    }

    #[test]
    fn gripper_on_block_centre_touches() {
        let cfg = EnvConfig::default();
        let s = state_at([0.05, 0.05, 0.025], [0.05, 0.05, 0.025]);
        let (_, ev) = step(&s, &Action::zero(), &cfg).unwrap();
        assert!(ev.touched);
    }

    #[test]
    fn three_full_lifts_complete_the_lift_task() {
        let cfg = EnvConfig {
            terminate_on_success: true,
            ..EnvConfig::default()
        };
        let mut s = state_at([0.0, 0.0, 0.025], [0.0, 0.0, 0.025]);
        s.task = Task::Lift;
        s.grasped = true;
        s.grip_degree = 1.0;
        let up = Action {
            velocity: Vector3::new(0.0, 0.0, 1.0),
            grip: 1.0,
        };
        let mut last = StepEvents::default();
        for _ in 0..3 {
            if s.finished {
                break;
            }
            let (n, ev) = step(&s, &up, &cfg).unwrap();
            s = n;
            last = ev;
        }
        assert!(s.block_pos.z - 0.025 >= 0.04);
        assert!(last.lifted && last.done);
        assert_eq!(s.block_pos, s.gripper_pos);
    }

    #[test]
    fn closing_near_block_grasps_it() {
        let cfg = EnvConfig::default();
        let mut s = state_at([0.0, 0.0, 0.04], [0.0, 0.0, 0.025]);
        s.task = Task::Lift;
        let close = Action {
            velocity: Vector3::zeros(),
            grip: 1.0,
        };
        let mut grasped_at = None;
        for t in 0..6 {
            let (n, ev) = step(&s, &close, &cfg).unwrap();
            s = n;
            if ev.grasped && grasped_at.is_none() {
                grasped_at = Some(t);
            }
        }
        // 0.25 per step: closure reaches 1.0 >= 0.9 on the fourth step.
        assert_eq!(grasped_at, Some(3));
        assert_eq!(s.block_pos, s.gripper_pos);
    }

    #[test]
    fn stepping_a_finished_episode_fails() {
        let cfg = EnvConfig {
            horizon: 2,
            ..EnvConfig::default()
        };
        let mut s = reset(Task::Reach, &cfg, &mut seeded(3));
        let (n, ev) = step(&s, &Action::zero(), &cfg).unwrap();
        assert!(!ev.done);
        s = n;
        let (n, ev) = step(&s, &Action::zero(), &cfg).unwrap();
        assert!(ev.done);
        assert!(matches!(step(&n, &Action::zero(), &cfg), Err(Error::Protocol(_))));
    }

    #[test]
    fn reach_terminates_on_touch_when_configured() {
        let cfg = EnvConfig {
            terminate_on_success: true,
            ..EnvConfig::default()
        };
        let s = state_at([0.0, 0.0, 0.025], [0.0, 0.0, 0.025]);
        let (_, ev) = step(&s, &Action::zero(), &cfg).unwrap();
        assert!(ev.done);

        let (_, ev) = step(&s, &Action::zero(), &EnvConfig::default()).unwrap();
        assert!(ev.touched && !ev.done);
    }

    #[test]
    fn distances() {
        assert_eq!(true_distance(&state_at([0.1, 0.2, 0.3], [0.1, 0.2, 0.3])), 0.0);
        assert_eq!(true_distance(&state_at([0.03, 0.0, 0.025], [0.0, 0.0, 0.025])), 0.03);
        let d = true_distance(&state_at([0.03, 0.04, 0.025], [0.0, 0.0, 0.025]));
        assert!((d - 0.05).abs() < 1e-15);
    }

    #[test]
    fn proprioception_layout() {
        let cfg = EnvConfig::default();
        let s = reset(Task::Lift, &cfg, &mut seeded(8));
        let p = proprioception(&s);
        assert_eq!(&p[3..6], &[0.0, 0.0, 0.0]);

        let mut closed = s.clone();
        closed.grip_degree = 1.0;
        assert_eq!(proprioception(&closed)[6], 1.0);

        let obs = observation(&s, &s.block_pos);
        assert_eq!(obs.len(), 10);
        assert_eq!(&obs[7..], s.block_pos.as_slice());
    }

    #[test]
    fn parse_task() {
        assert_eq!("Reach".parse::<Task>().unwrap(), Task::Reach);
        assert!("push".parse::<Task>().is_err());
    }
}
