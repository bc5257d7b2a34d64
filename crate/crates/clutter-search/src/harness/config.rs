//! Experiment configuration files: the single source of experiment
//! parameters, serialized as TOML. `presets` mirrors the built-in task
//! setups (normal and large active scenes, interactive pile scenes, and the
//! small smoke-training task).

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::agents::{GesConfig, GnbvConfig, PpoConfig};
use crate::camera::{CameraIntrinsics, NoiseConfig};
use crate::encoder::EncoderConfig;
use crate::env::{EpisodeConfig, RewardConfig, TaskKind};
use crate::scene::{SceneConfig, SceneKind, Workspace};
use crate::tsdf::TsdfConfig;
use crate::{Error, Result};

fn default_eval_episodes() -> usize {
    200
}

fn default_train_steps() -> usize {
    300_000
}

fn default_hidden() -> usize {
    200
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub name: String,
    pub episode: EpisodeConfig,
    #[serde(default)]
    pub ppo: PpoConfig,
    #[serde(default)]
    pub gnbv: GnbvConfig,
    #[serde(default)]
    pub ges: GesConfig,
    #[serde(default = "default_eval_episodes")]
    pub eval_episodes: usize,
    #[serde(default = "default_train_steps")]
    pub train_total_steps: usize,
    #[serde(default = "default_hidden")]
    pub hidden: usize,
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        toml::from_str(&text).map_err(|e| Error::Format {
            format: "experiment config",
            detail: format!("{}: {e}", path.display()),
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = toml::to_string_pretty(self).map_err(|e| Error::Format {
            format: "experiment config",
            detail: e.to_string(),
        })?;
        std::fs::write(path, text)?;
        Ok(())
    }
}

fn base_episode(task: TaskKind, horizon: usize, scene: SceneConfig) -> EpisodeConfig {
    EpisodeConfig {
        task,
        scene,
        horizon,
        tsdf: TsdfConfig::default(),
        camera: CameraIntrinsics::default(),
        noise: NoiseConfig::default(),
        encoder: EncoderConfig::default(),
        reward: RewardConfig::default(),
    }
}

/// Active perception on a normal workspace: scattered cubes.
pub fn active() -> ExperimentConfig {
    let ws = Workspace::new(0.6);
    let scene = SceneConfig {
        kind: SceneKind::Cubes,
        min_objects: 5,
        max_objects: 25,
        num_piles: 0,
        no_target_prob: 0.10,
        exploration_ratio: 0.0,
        workspace: ws,
        seed: 0,
    };
    let mut cfg = ExperimentConfig {
        name: "active".into(),
        episode: base_episode(TaskKind::Active, 130, scene),
        ppo: PpoConfig::default(),
        gnbv: GnbvConfig::default(),
        ges: GesConfig::default(),
        eval_episodes: 200,
        train_total_steps: default_train_steps(),
        hidden: default_hidden(),
    };
    cfg.episode.resolve_explore_scale();
    cfg
}

/// Active perception on the large workspace.
pub fn active_large() -> ExperimentConfig {
    let ws = Workspace::new(1.2);
    let scene = SceneConfig {
        kind: SceneKind::Cubes,
        min_objects: 10,
        max_objects: 40,
        num_piles: 0,
        no_target_prob: 0.10,
        exploration_ratio: 0.0,
        workspace: ws,
        seed: 0,
    };
    let mut cfg = ExperimentConfig {
        name: "active-large".into(),
        episode: base_episode(TaskKind::Active, 500, scene),
        ..active()
    };
    cfg.episode.reward.explore_scale = None;
    cfg.episode.resolve_explore_scale();
    cfg
}

/// Interactive perception: piles of cubes, pushing required.
pub fn interactive() -> ExperimentConfig {
    let ws = Workspace::new(0.6);
    let scene = SceneConfig {
        kind: SceneKind::Cubes,
        min_objects: 15,
        max_objects: 75,
        num_piles: 3,
        no_target_prob: 0.10,
        exploration_ratio: 0.25,
        workspace: ws,
        seed: 0,
    };
    let mut cfg = ExperimentConfig {
        name: "interactive".into(),
        episode: base_episode(TaskKind::Interactive, 130, scene),
        ..active()
    };
    cfg.episode.reward.explore_scale = None;
    cfg.episode.resolve_explore_scale();
    cfg
}

/// Small fast-training task: tiny workspace, few cubes, short horizon, and a
/// coarser map so a desktop CPU gets through hundreds of thousands of steps.
pub fn smoke_train() -> ExperimentConfig {
    let ws = Workspace::new(0.4);
    let scene = SceneConfig {
        kind: SceneKind::Cubes,
        min_objects: 3,
        max_objects: 8,
        num_piles: 0,
        no_target_prob: 0.10,
        exploration_ratio: 0.0,
        workspace: ws,
        seed: 0,
    };
    let mut episode = base_episode(TaskKind::Active, 40, scene);
    episode.tsdf.resolution = 48;
    let mut cfg = ExperimentConfig {
        name: "smoke-train".into(),
        episode,
        ppo: PpoConfig::default(),
        gnbv: GnbvConfig::default(),
        ges: GesConfig::default(),
        eval_episodes: 100,
        train_total_steps: 300_000,
        hidden: 200,
    };
    cfg.episode.resolve_explore_scale();
    cfg
}

pub fn preset(name: &str) -> Result<ExperimentConfig> {
    match name {
        "active" => Ok(active()),
        "active-large" => Ok(active_large()),
        "interactive" => Ok(interactive()),
        "smoke-train" => Ok(smoke_train()),
        other => Err(Error::Contract(format!(
            "unknown preset '{other}' (expected active, active-large, interactive, smoke-train)"
        ))),
    }
}

pub const PRESET_NAMES: [&str; 4] = ["active", "active-large", "interactive", "smoke-train"];

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_roundtrip_through_toml() {
        let dir = tempfile::tempdir().unwrap();
        for name in PRESET_NAMES {
            let cfg = preset(name).unwrap();
            assert!(
                cfg.episode.reward.explore_scale.is_some(),
                "{name}: scale resolved"
            );
            let path = dir.path().join(format!("{name}.toml"));
            cfg.save(&path).unwrap();
            let back = ExperimentConfig::load(&path).unwrap();
            assert_eq!(cfg, back, "{name} roundtrip");
        }
    }

    #[test]
    fn preset_parameters_match_task_table() {
        let a = active();
        assert_eq!(
            (a.episode.scene.min_objects, a.episode.scene.max_objects),
            (5, 25)
        );
        assert_eq!(a.episode.horizon, 130);
        assert_eq!(a.episode.scene.workspace.side, 0.6);
        let l = active_large();
        assert_eq!(l.episode.horizon, 500);
        assert_eq!(l.episode.scene.workspace.side, 1.2);
        let i = interactive();
        assert_eq!(
            (i.episode.scene.min_objects, i.episode.scene.max_objects),
            (15, 75)
        );
        assert_eq!(i.episode.scene.num_piles, 3);
        assert_eq!(i.episode.scene.exploration_ratio, 0.25);
        assert_eq!(i.episode.scene.no_target_prob, 0.10);
    }

    #[test]
    fn unknown_preset_rejected() {
        assert!(preset("bogus").is_err());
    }
}
