//! Episode controllers: the learned policy, the greedy next-best-view and
//! grid-sweep baselines, and a uniform-random agent.

pub mod ges;
pub mod gnbv;
pub mod mlp;
pub mod ppo;

use rand::RngExt as _;

use crate::Rng;
use crate::env::{Action, Env, MAX_ROTATION, MAX_TRANSLATION};

pub use ges::{GesAgent, GesConfig, GesPlan, two_opt};
pub use gnbv::{GnbvAgent, GnbvConfig, score_candidate};
pub use mlp::MlpPolicy;
pub use ppo::{PpoConfig, TrainConfig, collect_rollouts, gae, ppo_update, train};

/// A controller driving one episode at a time. Baselines read privileged
/// state through the env reference; the policy agent uses the observation
/// only.
pub trait Agent: Send {
    fn name(&self) -> &'static str;

    /// Called once right after the env reset, before the first action.
    fn begin_episode(&mut self, env: &Env, seed: u64);

    fn act(&mut self, env: &Env) -> Action;
}

/// Uniform-random actions; the terminate bit is a fair coin.
pub struct RandomAgent {
    rng: Rng,
}

impl RandomAgent {
    pub fn new() -> Self {
        Self {
            rng: crate::seeded_rng(0),
        }
    }
}

impl Default for RandomAgent {
    fn default() -> Self {
        Self::new()
    }
}

impl Agent for RandomAgent {
    fn name(&self) -> &'static str {
        "random"
    }

    fn begin_episode(&mut self, _env: &Env, seed: u64) {
        self.rng = crate::seeded_rng(seed ^ 0x52414e44);
    }

    fn act(&mut self, _env: &Env) -> Action {
        Action {
            dx: self.rng.random_range(-MAX_TRANSLATION..MAX_TRANSLATION),
            dy: self.rng.random_range(-MAX_TRANSLATION..MAX_TRANSLATION),
            dz: self.rng.random_range(-MAX_TRANSLATION..MAX_TRANSLATION),
            droll: self.rng.random_range(-MAX_ROTATION..MAX_ROTATION),
            dyaw: self.rng.random_range(-MAX_ROTATION..MAX_ROTATION),
            terminate: self.rng.random_range(0.0..1.0) < 0.5,
        }
    }
}
