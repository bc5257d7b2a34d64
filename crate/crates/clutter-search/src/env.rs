//! Finite-horizon episode environment.
//!
//! `reset` builds a seeded scene, a fresh map, and senses once from the
//! starting pose; `step` applies a clipped action in the yaw-projected
//! end-effector frame, re-senses, fuses, and encodes. Rewards: a time
//! penalty per step offset by an exploration reward capped at zero, and
//! terminal rewards for terminating after seeing the target (or in a
//! targetless scene) versus terminating early or timing out.

use serde::{Deserialize, Serialize};

use crate::camera::{CameraIntrinsics, CameraPose, NoiseConfig, render_depth, render_detection};
use crate::encoder::{EncoderConfig, StateVector, encode};
use crate::math::{Vec3, rotate_xy};
use crate::scene::{
    GripperState, SceneConfig, SceneState, generate_scene, step_gripper, target_truth,
};
use crate::tsdf::{TsdfConfig, VoxelGrid};
use crate::{Error, Result, Rng};

/// Per-component translation limit, meters per step.
pub const MAX_TRANSLATION: f64 = 0.06;
/// Roll/yaw limit, radians per step.
pub const MAX_ROTATION: f64 = 0.15;
/// Seeing at least this fraction of the target's voxels counts as found.
pub const SUCCESS_SEEN_FRACTION: f64 = 0.2;

/// Relative gripper displacement in the yaw-projected end-effector frame,
/// plus the episode-terminating flag. Components beyond the limits clip.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Action {
    pub dx: f64,
    pub dy: f64,
    pub dz: f64,
    pub droll: f64,
    pub dyaw: f64,
    pub terminate: bool,
}

impl Action {
    pub fn noop() -> Action {
        Action {
            dx: 0.0,
            dy: 0.0,
            dz: 0.0,
            droll: 0.0,
            dyaw: 0.0,
            terminate: false,
        }
    }

    pub fn terminate() -> Action {
        Action {
            terminate: true,
            ..Action::noop()
        }
    }

    pub fn clipped(&self) -> Action {
        Action {
            dx: self.dx.clamp(-MAX_TRANSLATION, MAX_TRANSLATION),
            dy: self.dy.clamp(-MAX_TRANSLATION, MAX_TRANSLATION),
            dz: self.dz.clamp(-MAX_TRANSLATION, MAX_TRANSLATION),
            droll: self.droll.clamp(-MAX_ROTATION, MAX_ROTATION),
            dyaw: self.dyaw.clamp(-MAX_ROTATION, MAX_ROTATION),
            terminate: self.terminate,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RewardConfig {
    /// Time penalty magnitude per step.
    pub r_time: f64,
    /// Final detection reward (and failure penalty magnitude).
    pub r_detect: f64,
    /// Newly-observed voxel count that earns the full exploration offset;
    /// measured from a canonical overview frame when absent.
    pub explore_scale: Option<f64>,
}

impl Default for RewardConfig {
    fn default() -> Self {
        Self {
            r_time: 1.0,
            r_detect: 150.0,
            explore_scale: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    Active,
    Interactive,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeConfig {
    pub task: TaskKind,
    pub scene: SceneConfig,
    /// Maximum number of steps before the episode fails.
    pub horizon: usize,
    pub tsdf: TsdfConfig,
    pub camera: CameraIntrinsics,
    pub noise: NoiseConfig,
    pub encoder: EncoderConfig,
    pub reward: RewardConfig,
}

impl EpisodeConfig {
    pub fn validate(&self) -> Result<()> {
        if self.horizon == 0 {
            return Err(Error::Contract("horizon must be positive".into()));
        }
        self.scene.validate()
    }

    /// Fill in the measured exploration scale if the config leaves it unset.
    pub fn resolve_explore_scale(&mut self) {
        if self.reward.explore_scale.is_none() {
            self.reward.explore_scale = Some(measure_explore_scale(self));
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Running,
    SuccessFound,
    SuccessNoTarget,
    FailureFalseTerminate,
    FailureTimeout,
}

impl Outcome {
    pub fn is_success(self) -> bool {
        matches!(self, Outcome::SuccessFound | Outcome::SuccessNoTarget)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepResult {
    pub observation: StateVector,
    pub reward: f64,
    pub done: bool,
    pub outcome: Outcome,
}

/// Non-terminal per-step reward: time penalty plus an exploration offset that
/// can at best cancel it. Always in [-r_time, 0].
pub fn step_reward(newly_observed: usize, explore_scale: f64, r_time: f64) -> f64 {
    -r_time + (r_time * newly_observed as f64 / explore_scale).min(r_time)
}

/// Newly-observed voxel count for one frame from the canonical overview pose
/// (workspace center at wall height) over an empty workspace. Deterministic;
/// used as the default exploration scale.
pub fn measure_explore_scale(cfg: &EpisodeConfig) -> f64 {
    let ws = cfg.scene.workspace;
    let scene = SceneState {
        objects: vec![],
        gripper: GripperState {
            pos: Vec3::new(ws.side / 2.0, ws.side / 2.0, ws.wall_height),
            yaw: 0.0,
            roll: 0.0,
            finger_plane_offset: cfg.encoder.finger_plane_offset,
        },
        config: SceneConfig {
            min_objects: 0,
            max_objects: 0,
            ..cfg.scene.clone()
        },
    };
    let mut grid = VoxelGrid::new(&cfg.tsdf, &ws);
    let pose = CameraPose::from_gripper(&scene.gripper, &cfg.camera);
    let depth = render_depth(&scene, &pose, &cfg.camera);
    let noise = NoiseConfig {
        enabled: false,
        ..cfg.noise
    };
    let det = render_detection(
        &scene,
        &depth,
        &pose,
        &cfg.camera,
        &noise,
        &mut crate::seeded_rng(0),
    );
    let newly = grid
        .integrate(&depth, &det, &pose, &cfg.camera)
        .expect("consistent intrinsics");
    (newly as f64).max(1.0)
}

/// One running episode.
pub struct Env {
    cfg: EpisodeConfig,
    scene: SceneState,
    grid: VoxelGrid,
    truth: Option<Vec<usize>>,
    obs: StateVector,
    steps_taken: usize,
    outcome: Outcome,
    explore_scale: f64,
    rng: Rng,
    seed: u64,
}

impl Env {
    /// Start an episode: fresh scene and map, one initial sense from the
    /// starting pose.
    pub fn reset(cfg: &EpisodeConfig, seed: u64) -> Result<Env> {
        cfg.validate()?;
        let mut rng = crate::seeded_rng(seed);
        let scene = generate_scene(&cfg.scene, &mut rng)?;
        Self::start(cfg, scene, rng, seed)
    }

    /// Start an episode on a caller-provided scene (testing support).
    #[doc(hidden)]
    pub fn with_scene(cfg: &EpisodeConfig, scene: SceneState, seed: u64) -> Result<Env> {
        cfg.validate()?;
        Self::start(cfg, scene, crate::seeded_rng(seed), seed)
    }

    fn start(cfg: &EpisodeConfig, scene: SceneState, rng: Rng, seed: u64) -> Result<Env> {
        let grid = VoxelGrid::new(&cfg.tsdf, &cfg.scene.workspace);
        let truth = target_truth(&scene, grid.dims, grid.voxel_size);
        let explore_scale = cfg
            .reward
            .explore_scale
            .unwrap_or_else(|| measure_explore_scale(cfg));
        let mut env = Env {
            cfg: cfg.clone(),
            scene,
            grid,
            truth,
            obs: StateVector::zeros(),
            steps_taken: 0,
            outcome: Outcome::Running,
            explore_scale,
            rng,
            seed,
        };
        env.sense();
        env.obs = encode(&env.grid, &env.scene.gripper, &env.cfg.encoder);
        Ok(env)
    }

    fn sense(&mut self) -> usize {
        let pose = CameraPose::from_gripper(&self.scene.gripper, &self.cfg.camera);
        let depth = render_depth(&self.scene, &pose, &self.cfg.camera);
        let det = render_detection(
            &self.scene,
            &depth,
            &pose,
            &self.cfg.camera,
            &self.cfg.noise,
            &mut self.rng,
        );
        self.grid
            .integrate(&depth, &det, &pose, &self.cfg.camera)
            .expect("images rendered with matching intrinsics")
    }

    /// Apply one action. Errors if the episode already finished.
    pub fn step(&mut self, action: &Action) -> Result<StepResult> {
        if self.outcome != Outcome::Running {
            return Err(Error::Contract("step after episode finished".into()));
        }
        self.steps_taken += 1;

        if action.terminate {
            let (outcome, reward) = match &self.truth {
                None => (Outcome::SuccessNoTarget, self.cfg.reward.r_detect),
                Some(truth) => {
                    if self.grid.target_seen_fraction(truth) >= SUCCESS_SEEN_FRACTION {
                        (Outcome::SuccessFound, self.cfg.reward.r_detect)
                    } else {
                        (Outcome::FailureFalseTerminate, -self.cfg.reward.r_detect)
                    }
                }
            };
            self.outcome = outcome;
            return Ok(StepResult {
                observation: self.obs.clone(),
                reward,
                done: true,
                outcome,
            });
        }

        let a = action.clipped();
        let yaw = self.scene.gripper.yaw;
        let (wx, wy) = rotate_xy(a.dx, a.dy, yaw);
        self.scene = step_gripper(&self.scene, Vec3::new(wx, wy, a.dz), a.droll, a.dyaw);
        // Objects may have moved; the truth voxelization follows them.
        self.truth = target_truth(&self.scene, self.grid.dims, self.grid.voxel_size);
        let newly = self.sense();
        self.obs = encode(&self.grid, &self.scene.gripper, &self.cfg.encoder);

        if self.steps_taken >= self.cfg.horizon {
            self.outcome = Outcome::FailureTimeout;
            return Ok(StepResult {
                observation: self.obs.clone(),
                reward: -self.cfg.reward.r_detect,
                done: true,
                outcome: self.outcome,
            });
        }
        Ok(StepResult {
            observation: self.obs.clone(),
            reward: step_reward(newly, self.explore_scale, self.cfg.reward.r_time),
            done: false,
            outcome: Outcome::Running,
        })
    }

    pub fn observation(&self) -> &StateVector {
        &self.obs
    }

    pub fn grid(&self) -> &VoxelGrid {
        &self.grid
    }

    pub fn scene(&self) -> &SceneState {
        &self.scene
    }

    pub fn gripper(&self) -> &GripperState {
        &self.scene.gripper
    }

    pub fn target_truth(&self) -> Option<&[usize]> {
        self.truth.as_deref()
    }

    /// Fraction of target voxels currently detected; 0 without a target.
    pub fn target_seen_fraction(&self) -> f64 {
        match &self.truth {
            Some(t) if !t.is_empty() => self.grid.target_seen_fraction(t),
            _ => 0.0,
        }
    }

    pub fn steps_taken(&self) -> usize {
        self.steps_taken
    }

    pub fn outcome(&self) -> Outcome {
        self.outcome
    }

    pub fn done(&self) -> bool {
        self.outcome != Outcome::Running
    }

    pub fn config(&self) -> &EpisodeConfig {
        &self.cfg
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn explore_scale(&self) -> f64 {
        self.explore_scale
    }

    /// Cursor into the episode's random stream; logged for replay validation.
    pub fn rng_word_pos(&self) -> u128 {
        self.rng.get_word_pos()
    }
}
