//! Simulation, mapping, and learning stack for finding a target object in a
//! cluttered tabletop scene with a gripper-mounted depth/detection camera.
//!
//! The pipeline: [`scene`] generates and steps a walled workspace of pushable
//! primitives, [`camera`] renders depth and noisy target-detection images from
//! the wrist-mounted virtual camera, [`tsdf`] fuses frames into a voxel map
//! with a detection channel, [`encoder`] compresses the local map into a
//! 71-value state vector, [`env`] wraps everything into a finite-horizon
//! episode loop with shaped rewards, [`agents`] provides a PPO-trained policy
//! plus greedy next-best-view and grid-sweep baselines, and [`harness`] runs
//! seeded, replayable evaluations.

pub mod agents;
pub mod camera;
pub mod encoder;
pub mod env;
pub mod harness;
pub mod math;
pub mod scene;
pub mod testkit;
pub mod tsdf;

use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    #[error("scene generation failed: {0}")]
    SceneGeneration(String),
    #[error("contract violation: {0}")]
    Contract(String),
    #[error("replay mismatch at step {step}: {what}")]
    ReplayMismatch { step: usize, what: String },
    #[error("malformed {format}: {detail}")]
    Format {
        format: &'static str,
        detail: String,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

/// Deterministic RNG used everywhere randomness is needed.
pub type Rng = rand_chacha::ChaCha8Rng;

/// Build the crate-standard RNG from a 64-bit seed.
pub fn seeded_rng(seed: u64) -> Rng {
    use rand::SeedableRng;
    Rng::seed_from_u64(seed)
}
