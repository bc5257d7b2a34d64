//! Greedy next-best-view baseline.
//!
//! Each step samples candidate poses near the current one. While no target
//! detection exists, candidates are scored by how many currently-unobserved
//! voxels their view would reach (ray marching that treats unobserved space
//! as free and stops at known-occupied voxels); once any detection is
//! present, the candidate whose optical axis points closest at the detection
//! centroid wins. The search terminates after exploring almost everything
//! (no target) or after seeing enough of the target.

use rand::RngExt as _;
use serde::{Deserialize, Serialize};

use crate::Rng;
use crate::camera::{CameraIntrinsics, CameraPose};
use crate::env::{Action, Env, MAX_ROTATION, MAX_TRANSLATION};
use crate::math::{Vec3, rotate_xy, wrap_angle};
use crate::scene::{GRIPPER_Z_MIN, ROLL_LIMIT};
use crate::tsdf::VoxelGrid;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GnbvConfig {
    /// Candidate poses evaluated per step.
    pub samples: usize,
    /// Position sampling radius, meters.
    pub sample_radius: f64,
    /// Roll/yaw sampling half-range, radians.
    pub rot_radius: f64,
    /// Observed fraction above which the scene counts as fully explored.
    pub explored_threshold: f64,
    /// Target-seen fraction above which the search terminates.
    pub seen_threshold: f64,
}

impl Default for GnbvConfig {
    fn default() -> Self {
        Self {
            samples: 10,
            sample_radius: 3.0 * MAX_TRANSLATION,
            rot_radius: 3.0 * MAX_ROTATION,
            explored_threshold: 0.97,
            seen_threshold: 0.2,
        }
    }
}

/// Reusable stamp buffer so repeated scoring avoids reallocation.
#[derive(Debug, Default)]
pub struct ScoreScratch {
    stamp: u32,
    visited: Vec<u32>,
}

/// Expected view gain of a candidate pose: the number of currently-unobserved
/// voxels intersected by pixel rays before any known-occupied voxel,
/// deduplicated across rays. Unobserved voxels are traversed as if free.
pub fn score_candidate(
    grid: &VoxelGrid,
    pose: &CameraPose,
    intr: &CameraIntrinsics,
    scratch: &mut ScoreScratch,
) -> usize {
    if scratch.visited.len() != grid.len() {
        scratch.visited = vec![0; grid.len()];
        scratch.stamp = 0;
    }
    scratch.stamp += 1;
    let stamp = scratch.stamp;
    let vox = grid.voxel_size;
    let (nx, ny, nz) = (
        grid.dims[0] as i64,
        grid.dims[1] as i64,
        grid.dims[2] as i64,
    );
    let bounds = Vec3::new(nx as f64 * vox, ny as f64 * vox, nz as f64 * vox);
    let mut gain = 0usize;

    for row in 0..intr.height {
        for col in 0..intr.width {
            let dir = pose.pixel_ray(intr, row, col);
            let o = pose.origin;
            // Parameter interval inside the grid box.
            let mut t0 = 0.0f64;
            let mut t1 = intr.far;
            let mut miss = false;
            for (p, d, hi) in [
                (o.x, dir.x, bounds.x),
                (o.y, dir.y, bounds.y),
                (o.z, dir.z, bounds.z),
            ] {
                if d.abs() < 1e-15 {
                    if p < 0.0 || p > hi {
                        miss = true;
                        break;
                    }
                } else {
                    let (a, b) = ((0.0 - p) / d, (hi - p) / d);
                    t0 = t0.max(a.min(b));
                    t1 = t1.min(a.max(b));
                }
            }
            if miss || t1 <= t0 {
                continue;
            }
            // Amanatides-Woo traversal from the entry point.
            let start = o + dir * (t0 + 1e-12);
            let mut ix = ((start.x / vox) as i64).clamp(0, nx - 1);
            let mut iy = ((start.y / vox) as i64).clamp(0, ny - 1);
            let mut iz = ((start.z / vox) as i64).clamp(0, nz - 1);
            let step = [
                dir.x.signum() as i64,
                dir.y.signum() as i64,
                dir.z.signum() as i64,
            ];
            let next_boundary = |i: i64, d: f64| {
                if d > 0.0 {
                    (i + 1) as f64 * vox
                } else {
                    i as f64 * vox
                }
            };
            let tmax = |p: f64, d: f64, b: f64| {
                if d.abs() < 1e-15 {
                    f64::INFINITY
                } else {
                    (b - p) / d
                }
            };
            let mut t_max = [
                tmax(o.x, dir.x, next_boundary(ix, dir.x)),
                tmax(o.y, dir.y, next_boundary(iy, dir.y)),
                tmax(o.z, dir.z, next_boundary(iz, dir.z)),
            ];
            let t_delta = [
                if dir.x.abs() < 1e-15 {
                    f64::INFINITY
                } else {
                    vox / dir.x.abs()
                },
                if dir.y.abs() < 1e-15 {
                    f64::INFINITY
                } else {
                    vox / dir.y.abs()
                },
                if dir.z.abs() < 1e-15 {
                    f64::INFINITY
                } else {
                    vox / dir.z.abs()
                },
            ];
            loop {
                let i = (ix + nx * (iy + ny * iz)) as usize;
                if grid.occupied(i) {
                    break;
                }
                if grid.weight_at(i) == 0.0 && scratch.visited[i] != stamp {
                    scratch.visited[i] = stamp;
                    gain += 1;
                }
                // Advance to the next voxel along the smallest boundary time.
                let axis = if t_max[0] <= t_max[1] && t_max[0] <= t_max[2] {
                    0
                } else if t_max[1] <= t_max[2] {
                    1
                } else {
                    2
                };
                if t_max[axis] > t1 {
                    break;
                }
                t_max[axis] += t_delta[axis];
                match axis {
                    0 => ix += step[0],
                    1 => iy += step[1],
                    _ => iz += step[2],
                }
                if ix < 0 || iy < 0 || iz < 0 || ix >= nx || iy >= ny || iz >= nz {
                    break;
                }
            }
        }
    }
    gain
}

/// Detection-mass centroid over voxels at or above the detection threshold.
pub fn detection_centroid(grid: &VoxelGrid) -> Option<Vec3> {
    let mut sum = Vec3::ZERO;
    let mut mass = 0.0f64;
    let (nx, ny, nz) = (grid.dims[0], grid.dims[1], grid.dims[2]);
    for iz in 0..nz {
        for iy in 0..ny {
            for ix in 0..nx {
                let i = ix + nx * (iy + ny * iz);
                let d = grid.det_at(i);
                if d >= grid.det_threshold {
                    let c = grid.voxel_center(ix, iy, iz);
                    sum = sum + c * d as f64;
                    mass += d as f64;
                }
            }
        }
    }
    (mass > 0.0).then(|| sum * (1.0 / mass))
}

/// Cosine of the angle between the camera's optical axis and the direction
/// to a point; 1 means the point sits dead center in the view.
pub fn axis_alignment(pose: &CameraPose, point: Vec3) -> f64 {
    let to = (point - pose.origin).normalized();
    to.dot(pose.view_dir()).clamp(-1.0, 1.0)
}

struct Candidate {
    pos: Vec3,
    yaw: f64,
    roll: f64,
}

pub struct GnbvAgent {
    pub cfg: GnbvConfig,
    rng: Rng,
    scratch: ScoreScratch,
}

impl GnbvAgent {
    pub fn new(cfg: GnbvConfig) -> Self {
        Self {
            cfg,
            rng: crate::seeded_rng(0),
            scratch: ScoreScratch::default(),
        }
    }

    fn sample_candidates(&mut self, env: &Env) -> Vec<Candidate> {
        let g = env.gripper();
        let ws = env.scene().config.workspace;
        let r = self.cfg.sample_radius;
        (0..self.cfg.samples)
            .map(|_| {
                let pos = Vec3::new(
                    (g.pos.x + self.rng.random_range(-r..r)).clamp(0.02, ws.side - 0.02),
                    (g.pos.y + self.rng.random_range(-r..r)).clamp(0.02, ws.side - 0.02),
                    (g.pos.z + self.rng.random_range(-r..r)).clamp(GRIPPER_Z_MIN, ws.wall_height),
                );
                let yaw = wrap_angle(
                    g.yaw
                        + self
                            .rng
                            .random_range(-self.cfg.rot_radius..self.cfg.rot_radius),
                );
                let roll = (g.roll
                    + self
                        .rng
                        .random_range(-self.cfg.rot_radius..self.cfg.rot_radius))
                .clamp(-ROLL_LIMIT, ROLL_LIMIT);
                Candidate { pos, yaw, roll }
            })
            .collect()
    }

    fn step_toward(env: &Env, c: &Candidate) -> Action {
        let g = env.gripper();
        let d = c.pos - g.pos;
        // Express the translation in the yaw-projected end-effector frame.
        let (ex, ey) = rotate_xy(d.x, d.y, -g.yaw);
        Action {
            dx: ex.clamp(-MAX_TRANSLATION, MAX_TRANSLATION),
            dy: ey.clamp(-MAX_TRANSLATION, MAX_TRANSLATION),
            dz: d.z.clamp(-MAX_TRANSLATION, MAX_TRANSLATION),
            droll: (c.roll - g.roll).clamp(-MAX_ROTATION, MAX_ROTATION),
            dyaw: wrap_angle(c.yaw - g.yaw).clamp(-MAX_ROTATION, MAX_ROTATION),
            terminate: false,
        }
    }
}

impl super::Agent for GnbvAgent {
    fn name(&self) -> &'static str {
        "gnbv"
    }

    fn begin_episode(&mut self, _env: &Env, seed: u64) {
        self.rng = crate::seeded_rng(seed ^ 0x474e4256);
        self.scratch = ScoreScratch::default();
    }

    fn act(&mut self, env: &Env) -> Action {
        let grid = env.grid();
        if grid.observed_fraction() > self.cfg.explored_threshold {
            return Action::terminate();
        }
        if env.target_truth().is_some() && env.target_seen_fraction() > self.cfg.seen_threshold {
            return Action::terminate();
        }
        let candidates = self.sample_candidates(env);
        let intr = env.config().camera;
        let best = if let Some(centroid) = detection_centroid(grid) {
            // Steer the camera axis toward the detection.
            candidates
                .into_iter()
                .map(|c| {
                    let pose = CameraPose::from_pose(c.pos, c.yaw, c.roll, &intr);
                    (axis_alignment(&pose, centroid), c)
                })
                .max_by(|a, b| a.0.partial_cmp(&b.0).unwrap())
                .map(|(_, c)| c)
        } else {
            candidates
                .into_iter()
                .map(|c| {
                    let pose = CameraPose::from_pose(c.pos, c.yaw, c.roll, &intr);
                    let gain = score_candidate(grid, &pose, &intr, &mut self.scratch);
                    (gain, c)
                })
                .max_by_key(|(gain, _)| *gain)
                .map(|(_, c)| c)
        };
        match best {
            Some(c) => Self::step_toward(env, &c),
            None => Action::terminate(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::Workspace;
    use crate::tsdf::TsdfConfig;

    fn grid20() -> VoxelGrid {
        VoxelGrid::new(
            &TsdfConfig {
                resolution: 20,
                ..Default::default()
            },
            &Workspace::new(0.6),
        )
    }

    fn generic_pose(intr: &CameraIntrinsics) -> CameraPose {
        CameraPose::from_pose(Vec3::new(0.312, 0.287, 0.243), 0.41, 0.23, intr)
    }

    #[test]
    fn fully_observed_grid_scores_zero() {
        let mut grid = grid20();
        for i in 0..grid.len() {
            grid.set_voxel(i, 0.5, 1.0, 0.0, 1.0);
        }
        let intr = CameraIntrinsics {
            width: 16,
            height: 16,
            ..Default::default()
        };
        let mut scratch = ScoreScratch::default();
        for k in 0..3 {
            let pose = CameraPose::from_pose(
                Vec3::new(0.1 + 0.2 * k as f64, 0.3, 0.25),
                0.3 * k as f64,
                0.1,
                &intr,
            );
            assert_eq!(score_candidate(&grid, &pose, &intr, &mut scratch), 0);
        }
    }

    #[test]
    fn gain_matches_analytic_oracle_on_fresh_grid() {
        let grid = grid20();
        let intr = CameraIntrinsics {
            width: 12,
            height: 12,
            ..Default::default()
        };
        let pose = generic_pose(&intr);
        let mut scratch = ScoreScratch::default();
        let fast = score_candidate(&grid, &pose, &intr, &mut scratch);
        let oracle = crate::testkit::view_gain_oracle(&grid, &pose, &intr);
        assert_eq!(fast, oracle);
        assert!(fast > 0);
    }

    #[test]
    fn gain_matches_oracle_with_occlusions_and_observed_regions() {
        let mut grid = grid20();
        use rand::RngExt as _;
        let mut rng = crate::seeded_rng(31);
        for _ in 0..700 {
            let i = rng.random_range(0..grid.len());
            if rng.random_range(0.0..1.0) < 0.4 {
                grid.set_voxel(i, -0.5, 1.0, 0.0, 1.0); // occupied
            } else {
                grid.set_voxel(i, 0.5, 1.0, 0.0, 1.0); // observed free
            }
        }
        let intr = CameraIntrinsics {
            width: 12,
            height: 12,
            ..Default::default()
        };
        for seed in 0..4u64 {
            let mut r2 = crate::seeded_rng(100 + seed);
            let pose = CameraPose::from_pose(
                Vec3::new(
                    r2.random_range(0.1..0.5),
                    r2.random_range(0.1..0.5),
                    r2.random_range(0.1..0.29),
                ),
                r2.random_range(-3.0..3.0),
                r2.random_range(-1.0..1.0),
                &intr,
            );
            let mut scratch = ScoreScratch::default();
            let fast = score_candidate(&grid, &pose, &intr, &mut scratch);
            let oracle = crate::testkit::view_gain_oracle(&grid, &pose, &intr);
            assert_eq!(fast, oracle, "pose seed {seed}");
        }
    }

    #[test]
    fn rays_stop_at_occupied_wall() {
        let mut grid = grid20();
        // A solid occupied slab right in front of the camera.
        for iz in 0..grid.dims[2] {
            for iy in 0..grid.dims[1] {
                grid.set_voxel(grid.idx(11, iy, iz), -0.9, 1.0, 0.0, 1.0);
            }
        }
        let intr = CameraIntrinsics {
            width: 12,
            height: 12,
            ..Default::default()
        };
        // Looking straight at the slab from close range: camera axes
        // x=(0,1,0), y=(0,0,1), z=+x world (columns of the matrix).
        let rot = crate::math::Mat3([0.0, 0.0, 1.0, 1.0, 0.0, 0.0, 0.0, 1.0, 0.0]);
        let pose = CameraPose {
            origin: Vec3::new(0.315, 0.3, 0.15),
            rot,
        };
        assert!(pose.view_dir().x > 0.9, "setup: camera must look along +x");
        let mut scratch = ScoreScratch::default();
        let gain = score_candidate(&grid, &pose, &intr, &mut scratch);
        // Only voxels between the camera and the slab may count.
        let max_possible = grid.dims[1] * grid.dims[2]; // column x=10 spread over rays
        assert!(
            gain < max_possible,
            "gain {gain} should be blocked by the slab"
        );
        let oracle = crate::testkit::view_gain_oracle(&grid, &pose, &intr);
        assert_eq!(gain, oracle);
    }

    #[test]
    fn centroid_dead_ahead_wins_alignment() {
        let intr = CameraIntrinsics::default();
        // Straight-down camera above the point.
        let ahead = CameraPose::from_pose(Vec3::new(0.3, 0.3, 0.2), 0.0, 0.0, &intr);
        let tilted = CameraPose::from_pose(Vec3::new(0.3, 0.3, 0.2), 0.0, 0.5, &intr);
        let offset = CameraPose::from_pose(Vec3::new(0.4, 0.3, 0.2), 0.0, 0.0, &intr);
        let point = Vec3::new(0.3, 0.3, 0.03);
        let a = axis_alignment(&ahead, point);
        assert!(a > 0.999, "dead-ahead alignment {a}");
        assert!(a > axis_alignment(&tilted, point));
        assert!(a > axis_alignment(&offset, point));
    }

    #[test]
    fn gnbv_terminates_no_target_after_full_exploration() {
        use crate::env::{EpisodeConfig, Outcome, RewardConfig, TaskKind};
        use crate::harness::run_episode;
        let cfg = EpisodeConfig {
            task: TaskKind::Active,
            scene: crate::scene::SceneConfig {
                kind: crate::scene::SceneKind::Cubes,
                min_objects: 1,
                max_objects: 3,
                num_piles: 0,
                no_target_prob: 1.0,
                exploration_ratio: 0.0,
                workspace: Workspace::new(0.3),
                seed: 0,
            },
            horizon: 80,
            tsdf: TsdfConfig {
                resolution: 16,
                ..Default::default()
            },
            camera: CameraIntrinsics {
                width: 32,
                height: 32,
                ..Default::default()
            },
            noise: crate::camera::NoiseConfig::default(),
            encoder: crate::encoder::EncoderConfig {
                crop_side: 0.6,
                ..Default::default()
            },
            reward: RewardConfig {
                explore_scale: Some(800.0),
                ..Default::default()
            },
        };
        for seed in 0..3u64 {
            let mut agent = GnbvAgent::new(GnbvConfig::default());
            let rec = run_episode(&cfg, &mut agent, seed).unwrap();
            assert_eq!(rec.outcome, Outcome::SuccessNoTarget, "seed {seed}");
        }
    }

    #[test]
    fn detection_centroid_weighted_mean() {
        let mut grid = grid20();
        let a = grid.idx(2, 2, 2);
        let b = grid.idx(6, 2, 2);
        grid.set_voxel(a, -0.5, 1.0, 0.6, 1.0);
        grid.set_voxel(b, -0.5, 1.0, 0.6, 1.0);
        let c = detection_centroid(&grid).unwrap();
        let pa = grid.voxel_center(2, 2, 2);
        let pb = grid.voxel_center(6, 2, 2);
        assert!((c.x - (pa.x + pb.x) / 2.0).abs() < 1e-9);
        // Sub-threshold detections are ignored.
        let mut g2 = grid20();
        g2.set_voxel(a, -0.5, 1.0, 0.2, 1.0);
        assert!(detection_centroid(&g2).is_none());
    }
}
