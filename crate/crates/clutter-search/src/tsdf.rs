//! Volumetric truncated signed distance field with a detection channel.
//!
//! Four dense per-voxel channels: normalized signed distance in [-1, 1],
//! its integration weight, a truncated unsigned detection confidence in
//! [0, 1], and the detection weight. Integration uses projective data
//! association (voxels in the camera frustum are projected into the depth
//! image) with a low weight cap so stale geometry is forgotten after a few
//! frames. Free-space observations carve the detection channel toward zero.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::camera::{CameraIntrinsics, CameraPose, DepthImage, DetectionImage};
use crate::math::{Vec3, rotate_xy};
use crate::scene::{GripperState, Workspace};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TsdfConfig {
    /// Voxels along each horizontal side of the workspace.
    pub resolution: usize,
    /// Truncation distance, meters.
    pub truncation: f64,
    /// Integration weight cap; low values forget old measurements quickly.
    pub max_weight: f32,
    /// Detection confidence at or above this counts as a detected voxel.
    pub det_threshold: f32,
}

impl Default for TsdfConfig {
    fn default() -> Self {
        Self {
            resolution: 100,
            truncation: 0.04,
            max_weight: 2.0,
            det_threshold: 0.5,
        }
    }
}

/// Dense voxel map of the workspace. The grid origin is the workspace corner
/// (0, 0, 0); the vertical extent covers the walled volume.
#[derive(Debug, Clone, PartialEq)]
pub struct VoxelGrid {
    pub dims: [usize; 3],
    pub voxel_size: f64,
    pub truncation: f64,
    pub max_weight: f32,
    pub det_threshold: f32,
    tsdf: Vec<f32>,
    weight: Vec<f32>,
    det: Vec<f32>,
    det_weight: Vec<f32>,
    observed: usize,
}

/// Local crop of the map in the yaw-projected end-effector frame: a cube of
/// lattice samples for the occupancy view (1 inside observed surfaces) and
/// the detection view. Out-of-map samples read as unobserved (0).
#[derive(Debug, Clone)]
pub struct LocalCrop {
    /// Samples per horizontal side.
    pub n: usize,
    /// Vertical samples (equal to the map's vertical dimension).
    pub nz: usize,
    pub occupancy: Vec<f32>,
    pub detection: Vec<f32>,
}

impl LocalCrop {
    pub fn idx(&self, a: usize, b: usize, k: usize) -> usize {
        a + self.n * (b + self.n * k)
    }
}

impl VoxelGrid {
    pub fn new(cfg: &TsdfConfig, workspace: &Workspace) -> Self {
        let voxel_size = workspace.side / cfg.resolution as f64;
        assert!(cfg.truncation >= voxel_size, "truncation below voxel size");
        let nz = (workspace.wall_height / voxel_size).ceil().max(1.0) as usize;
        let dims = [cfg.resolution, cfg.resolution, nz];
        let n = dims[0] * dims[1] * dims[2];
        Self {
            dims,
            voxel_size,
            truncation: cfg.truncation,
            max_weight: cfg.max_weight,
            det_threshold: cfg.det_threshold,
            tsdf: vec![0.0; n],
            weight: vec![0.0; n],
            det: vec![0.0; n],
            det_weight: vec![0.0; n],
            observed: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.tsdf.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tsdf.is_empty()
    }

    pub fn idx(&self, ix: usize, iy: usize, iz: usize) -> usize {
        ix + self.dims[0] * (iy + self.dims[1] * iz)
    }

    pub fn voxel_center(&self, ix: usize, iy: usize, iz: usize) -> Vec3 {
        Vec3::new(
            (ix as f64 + 0.5) * self.voxel_size,
            (iy as f64 + 0.5) * self.voxel_size,
            (iz as f64 + 0.5) * self.voxel_size,
        )
    }

    pub fn tsdf_at(&self, i: usize) -> f32 {
        self.tsdf[i]
    }

    pub fn weight_at(&self, i: usize) -> f32 {
        self.weight[i]
    }

    pub fn det_at(&self, i: usize) -> f32 {
        self.det[i]
    }

    pub fn det_weight_at(&self, i: usize) -> f32 {
        self.det_weight[i]
    }

    /// Voxel is known-occupied: observed with a negative distance value.
    pub fn occupied(&self, i: usize) -> bool {
        self.weight[i] > 0.0 && self.tsdf[i] < 0.0
    }

    /// Directly overwrite a voxel's channels. Test and tooling support; the
    /// observed counter stays consistent.
    #[doc(hidden)]
    pub fn set_voxel(&mut self, i: usize, tsdf: f32, weight: f32, det: f32, det_weight: f32) {
        if self.weight[i] == 0.0 && weight > 0.0 {
            self.observed += 1;
        } else if self.weight[i] > 0.0 && weight == 0.0 {
            self.observed -= 1;
        }
        self.tsdf[i] = tsdf;
        self.weight[i] = weight;
        self.det[i] = det;
        self.det_weight[i] = det_weight;
    }

    /// Fuse one depth + detection frame. Returns the number of voxels whose
    /// weight transitioned from zero (newly observed).
    pub fn integrate(
        &mut self,
        depth: &DepthImage,
        det_img: &DetectionImage,
        pose: &CameraPose,
        intr: &CameraIntrinsics,
    ) -> Result<usize> {
        if depth.width != intr.width
            || depth.height != intr.height
            || det_img.width != intr.width
            || det_img.height != intr.height
        {
            return Err(Error::Contract(
                "image dimensions do not match intrinsics".into(),
            ));
        }
        let max_d = depth.max_depth();
        if max_d == 0.0 {
            return Ok(0);
        }
        let reach = max_d + self.truncation;

        // Conservative frustum bounds: camera origin plus the four boundary
        // corner rays at the maximum relevant distance. Voxels outside never
        // project onto a valid pixel within that range.
        let f = intr.focal();
        let (w2, h2) = (intr.width as f64 / 2.0, intr.height as f64 / 2.0);
        let mut lo = pose.origin;
        let mut hi = pose.origin;
        for (cx, cy) in [(-w2, -h2), (w2, -h2), (-w2, h2), (w2, h2)] {
            let dir = pose.rot.apply(Vec3::new(cx / f, cy / f, 1.0).normalized());
            let p = pose.origin + dir * reach;
            lo = Vec3::new(lo.x.min(p.x), lo.y.min(p.y), lo.z.min(p.z));
            hi = Vec3::new(hi.x.max(p.x), hi.y.max(p.y), hi.z.max(p.z));
        }
        let clamp_i =
            |v: f64, n: usize| (v / self.voxel_size).floor().clamp(0.0, n as f64 - 1.0) as usize;
        let (ix0, ix1) = (clamp_i(lo.x, self.dims[0]), clamp_i(hi.x, self.dims[0]));
        let (iy0, iy1) = (clamp_i(lo.y, self.dims[1]), clamp_i(hi.y, self.dims[1]));
        let (iz0, iz1) = (clamp_i(lo.z, self.dims[2]), clamp_i(hi.z, self.dims[2]));

        let xc = pose.rot.col(0);
        let yc = pose.rot.col(1);
        let zc = pose.rot.col(2);
        let trunc = self.truncation;
        let vox = self.voxel_size;
        let mut newly = 0usize;

        for iz in iz0..=iz1 {
            let pz = (iz as f64 + 0.5) * vox - pose.origin.z;
            for iy in iy0..=iy1 {
                let py = (iy as f64 + 0.5) * vox - pose.origin.y;
                let row_base = self.dims[0] * (iy + self.dims[1] * iz);
                for ix in ix0..=ix1 {
                    let px = (ix as f64 + 0.5) * vox - pose.origin.x;
                    let depth_axis = px * zc.x + py * zc.y + pz * zc.z;
                    if depth_axis <= 1e-9 {
                        continue;
                    }
                    let u = (px * xc.x + py * xc.y + pz * xc.z) / depth_axis * f + w2;
                    if u < 0.0 || u >= intr.width as f64 {
                        continue;
                    }
                    let v = (px * yc.x + py * yc.y + pz * yc.z) / depth_axis * f + h2;
                    if v < 0.0 || v >= intr.height as f64 {
                        continue;
                    }
                    let pix = v as usize * intr.width + u as usize;
                    let d = depth.data[pix];
                    if !d.is_finite() {
                        continue;
                    }
                    let r = (px * px + py * py + pz * pz).sqrt();
                    let sd = d - r;
                    if sd < -trunc {
                        continue;
                    }
                    let i = ix + row_base;
                    let sample = ((sd / trunc).min(1.0)) as f32;
                    let w0 = self.weight[i];
                    if w0 == 0.0 {
                        newly += 1;
                    }
                    self.tsdf[i] = (w0 * self.tsdf[i] + sample) / (w0 + 1.0);
                    self.weight[i] = (w0 + 1.0).min(self.max_weight);

                    let ds = if sd > trunc {
                        0.0
                    } else {
                        det_img.data[pix] as f32
                    };
                    let dw0 = self.det_weight[i];
                    self.det[i] = (dw0 * self.det[i] + ds) / (dw0 + 1.0);
                    self.det_weight[i] = (dw0 + 1.0).min(self.max_weight);
                }
            }
        }
        self.observed += newly;
        Ok(newly)
    }

    /// Fraction of voxels ever observed.
    pub fn observed_fraction(&self) -> f64 {
        self.observed as f64 / self.len() as f64
    }

    pub fn observed_count(&self) -> usize {
        self.observed
    }

    /// Fraction of ground-truth target voxels currently detected. The truth
    /// set must be nonempty.
    pub fn target_seen_fraction(&self, truth: &[usize]) -> f64 {
        assert!(!truth.is_empty(), "target_seen_fraction on empty truth");
        let hit = truth
            .iter()
            .filter(|&&i| self.det[i] >= self.det_threshold)
            .count();
        hit as f64 / truth.len() as f64
    }

    /// Resample a square crop centered on the gripper's xy position, rotated
    /// into the yaw-projected end-effector frame, nearest-neighbor lookup.
    pub fn local_crop(&self, gripper: &GripperState, crop_side: f64) -> LocalCrop {
        let n = (crop_side / self.voxel_size).round().max(1.0) as usize;
        let nz = self.dims[2];
        let mut crop = LocalCrop {
            n,
            nz,
            occupancy: vec![0.0; n * n * nz],
            detection: vec![0.0; n * n * nz],
        };
        let half = crop_side / 2.0;
        for k in 0..nz {
            for b in 0..n {
                let v = (b as f64 + 0.5) * self.voxel_size - half;
                for a in 0..n {
                    let u = (a as f64 + 0.5) * self.voxel_size - half;
                    let (dx, dy) = rotate_xy(u, v, gripper.yaw);
                    let wx = gripper.pos.x + dx;
                    let wy = gripper.pos.y + dy;
                    if wx < 0.0 || wy < 0.0 {
                        continue;
                    }
                    let ix = (wx / self.voxel_size) as usize;
                    let iy = (wy / self.voxel_size) as usize;
                    if ix >= self.dims[0] || iy >= self.dims[1] {
                        continue;
                    }
                    let src = self.idx(ix, iy, k);
                    let dst = crop.idx(a, b, k);
                    if self.weight[src] > 0.0 && self.tsdf[src] < 0.0 {
                        crop.occupancy[dst] = 1.0;
                    }
                    if self.det_weight[src] > 0.0 {
                        crop.detection[dst] = self.det[src];
                    }
                }
            }
        }
        crop
    }

    /// Write the grid in the flat binary snapshot layout:
    /// magic `CSGRID1\n`, then little-endian u64 dims[3], f64 voxel_size,
    /// f64 truncation, f32 max_weight, f32 det_threshold, u64 observed,
    /// then the four channels (tsdf, weight, det, det_weight) as f32
    /// x-major rows.
    pub fn save(&self, mut w: impl Write) -> Result<()> {
        w.write_all(b"CSGRID1\n")?;
        for d in self.dims {
            w.write_all(&(d as u64).to_le_bytes())?;
        }
        w.write_all(&self.voxel_size.to_le_bytes())?;
        w.write_all(&self.truncation.to_le_bytes())?;
        w.write_all(&self.max_weight.to_le_bytes())?;
        w.write_all(&self.det_threshold.to_le_bytes())?;
        w.write_all(&(self.observed as u64).to_le_bytes())?;
        for chan in [&self.tsdf, &self.weight, &self.det, &self.det_weight] {
            for v in chan.iter() {
                w.write_all(&v.to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn load(mut r: impl Read) -> Result<Self> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != b"CSGRID1\n" {
            return Err(Error::Format {
                format: "grid snapshot",
                detail: "bad magic".into(),
            });
        }
        let mut u64buf = [0u8; 8];
        let mut read_u64 = |r: &mut dyn Read| -> Result<u64> {
            r.read_exact(&mut u64buf)?;
            Ok(u64::from_le_bytes(u64buf))
        };
        let dims = [
            read_u64(&mut r)? as usize,
            read_u64(&mut r)? as usize,
            read_u64(&mut r)? as usize,
        ];
        let mut f64buf = [0u8; 8];
        r.read_exact(&mut f64buf)?;
        let voxel_size = f64::from_le_bytes(f64buf);
        r.read_exact(&mut f64buf)?;
        let truncation = f64::from_le_bytes(f64buf);
        let mut f32buf = [0u8; 4];
        r.read_exact(&mut f32buf)?;
        let max_weight = f32::from_le_bytes(f32buf);
        r.read_exact(&mut f32buf)?;
        let det_threshold = f32::from_le_bytes(f32buf);
        r.read_exact(&mut f64buf)?;
        let observed = u64::from_le_bytes(f64buf) as usize;
        let n = dims[0] * dims[1] * dims[2];
        let mut channels = Vec::with_capacity(4);
        for _ in 0..4 {
            let mut chan = vec![0f32; n];
            for v in chan.iter_mut() {
                r.read_exact(&mut f32buf)?;
                *v = f32::from_le_bytes(f32buf);
            }
            channels.push(chan);
        }
        let det_weight = channels.pop().unwrap();
        let det = channels.pop().unwrap();
        let weight = channels.pop().unwrap();
        let tsdf = channels.pop().unwrap();
        Ok(Self {
            dims,
            voxel_size,
            truncation,
            max_weight,
            det_threshold,
            tsdf,
            weight,
            det,
            det_weight,
            observed,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::camera::{NoiseConfig, render_depth, render_detection};
    use crate::math::Mat3;
    use crate::scene::{
        FINGER_PLANE_OFFSET, GripperState, ObjectInstance, SceneConfig, SceneKind, SceneState,
        Shape, Workspace,
    };
    use crate::seeded_rng;

    fn small_cfg() -> TsdfConfig {
        TsdfConfig {
            resolution: 20,
            ..Default::default()
        }
    }

    fn workspace() -> Workspace {
        Workspace::new(0.6)
    }

    fn scene_with(objects: Vec<ObjectInstance>) -> SceneState {
        SceneState {
            objects,
            gripper: GripperState {
                pos: Vec3::new(0.3, 0.3, 0.25),
                yaw: 0.0,
                roll: 0.0,
                finger_plane_offset: FINGER_PLANE_OFFSET,
            },
            config: SceneConfig {
                kind: SceneKind::Cubes,
                min_objects: 0,
                max_objects: 0,
                num_piles: 0,
                no_target_prob: 0.0,
                exploration_ratio: 0.0,
                workspace: workspace(),
                seed: 0,
            },
        }
    }

    fn overview_pose(intr: &CameraIntrinsics) -> CameraPose {
        CameraPose::from_pose(Vec3::new(0.3, 0.3, 0.28), 0.1, 0.05, intr)
    }

    fn render_and_integrate(grid: &mut VoxelGrid, scene: &SceneState, pose: &CameraPose) -> usize {
        let intr = CameraIntrinsics::default();
        let depth = render_depth(scene, pose, &intr);
        let noise = NoiseConfig {
            enabled: false,
            ..Default::default()
        };
        let det = render_detection(scene, &depth, pose, &intr, &noise, &mut seeded_rng(0));
        grid.integrate(&depth, &det, pose, &intr).unwrap()
    }

    #[test]
    fn fresh_grid_fraction_zero_then_monotone() {
        let scene = scene_with(vec![]);
        let mut grid = VoxelGrid::new(&small_cfg(), &workspace());
        assert_eq!(grid.observed_fraction(), 0.0);
        let intr = CameraIntrinsics::default();
        let mut last = 0.0;
        for k in 0..5 {
            let pose = CameraPose::from_pose(
                Vec3::new(0.15 + 0.08 * k as f64, 0.3, 0.25),
                0.3 * k as f64,
                0.1,
                &intr,
            );
            render_and_integrate(&mut grid, &scene, &pose);
            let f = grid.observed_fraction();
            assert!(f >= last, "observed fraction decreased");
            last = f;
        }
        assert!(last > 0.1);
    }

    #[test]
    fn newly_observed_matches_projection_oracle() {
        let scene = scene_with(vec![]);
        let mut grid = VoxelGrid::new(&small_cfg(), &workspace());
        let intr = CameraIntrinsics::default();
        let pose = overview_pose(&intr);
        let depth = render_depth(&scene, &pose, &intr);
        let noise = NoiseConfig {
            enabled: false,
            ..Default::default()
        };
        let det = render_detection(&scene, &depth, &pose, &intr, &noise, &mut seeded_rng(0));
        let newly = grid.integrate(&depth, &det, &pose, &intr).unwrap();
        let oracle = crate::testkit::frustum_membership_count(&grid, &depth, &pose, &intr);
        assert_eq!(newly, oracle);
    }

    #[test]
    fn second_integration_of_same_frame_adds_nothing() {
        let scene = scene_with(vec![]);
        let mut grid = VoxelGrid::new(&small_cfg(), &workspace());
        let intr = CameraIntrinsics::default();
        let pose = overview_pose(&intr);
        let first = render_and_integrate(&mut grid, &scene, &pose);
        assert!(first > 0);
        let second = render_and_integrate(&mut grid, &scene, &pose);
        assert_eq!(second, 0);
    }

    #[test]
    fn weight_caps_and_tsdf_stabilizes() {
        let scene = scene_with(vec![]);
        let mut grid = VoxelGrid::new(&small_cfg(), &workspace());
        let pose = overview_pose(&CameraIntrinsics::default());
        for _ in 0..3 {
            render_and_integrate(&mut grid, &scene, &pose);
        }
        let before = grid.tsdf.clone();
        render_and_integrate(&mut grid, &scene, &pose);
        for i in 0..grid.len() {
            assert!(grid.weight[i] <= 2.0);
            if grid.weight[i] > 0.0 {
                assert_eq!(grid.weight[i], 2.0);
                assert!(
                    (grid.tsdf[i] - before[i]).abs() < 1e-6,
                    "tsdf moved after cap"
                );
            }
        }
    }

    #[test]
    fn range_safety_under_noisy_sequences() {
        let mut rng = seeded_rng(123);
        let scene = scene_with(vec![ObjectInstance {
            id: 0,
            shape: Shape::Box {
                half: Vec3::new(0.05, 0.04, 0.03),
            },
            pos: Vec3::new(0.3, 0.3, 0.03),
            yaw: 0.4,
            is_target: true,
        }]);
        let mut grid = VoxelGrid::new(&small_cfg(), &workspace());
        let intr = CameraIntrinsics::default();
        let noise = NoiseConfig::default();
        use rand::RngExt as _;
        for _ in 0..12 {
            let pose = CameraPose::from_pose(
                Vec3::new(
                    rng.random_range(0.1..0.5),
                    rng.random_range(0.1..0.5),
                    rng.random_range(0.1..0.3),
                ),
                rng.random_range(-3.0..3.0),
                rng.random_range(-0.9..0.9),
                &intr,
            );
            let depth = render_depth(&scene, &pose, &intr);
            let det = render_detection(&scene, &depth, &pose, &intr, &noise, &mut rng);
            grid.integrate(&depth, &det, &pose, &intr).unwrap();
        }
        for i in 0..grid.len() {
            assert!((-1.0..=1.0).contains(&grid.tsdf[i]));
            assert!((0.0..=2.0).contains(&grid.weight[i]));
            assert!((0.0..=1.0).contains(&grid.det[i]));
            assert!((0.0..=2.0).contains(&grid.det_weight[i]));
            if grid.det[i] > 0.0 {
                assert!(grid.det_weight[i] > 0.0);
            }
        }
    }

    #[test]
    fn surface_zero_crossing_within_half_voxel() {
        // A slab filling the workspace up to z = 0.12 acts as the plane.
        let slab = ObjectInstance {
            id: 0,
            shape: Shape::Box {
                half: Vec3::new(0.3, 0.3, 0.06),
            },
            pos: Vec3::new(0.3, 0.3, 0.06),
            yaw: 0.0,
            is_target: false,
        };
        let scene = scene_with(vec![slab]);
        let mut grid = VoxelGrid::new(&small_cfg(), &workspace());
        let intr = CameraIntrinsics::default();
        for k in 0..2 {
            let pose = CameraPose::from_pose(
                Vec3::new(0.3, 0.28 + 0.02 * k as f64, 0.27),
                0.0,
                0.0,
                &intr,
            );
            render_and_integrate(&mut grid, &scene, &pose);
        }
        // Walk the column above the slab center.
        let (ix, iy) = (10, 10);
        let mut crossing = None;
        for iz in 0..grid.dims[2] - 1 {
            let a = grid.idx(ix, iy, iz);
            let b = grid.idx(ix, iy, iz + 1);
            if grid.weight[a] > 0.0
                && grid.weight[b] > 0.0
                && grid.tsdf[a] < 0.0
                && grid.tsdf[b] >= 0.0
            {
                // Interpolated crossing height.
                let za = grid.voxel_center(ix, iy, iz).z;
                let t = grid.tsdf[a] as f64 / (grid.tsdf[a] - grid.tsdf[b]) as f64;
                crossing = Some(za + t * grid.voxel_size);
            }
        }
        let z = crossing.expect("no zero crossing found");
        assert!((z - 0.12).abs() <= grid.voxel_size / 2.0, "crossing at {z}");
    }

    #[test]
    fn moved_object_forgotten_within_three_frames() {
        let cube = ObjectInstance {
            id: 0,
            shape: Shape::Box {
                half: Vec3::new(0.03, 0.03, 0.03),
            },
            pos: Vec3::new(0.3, 0.3, 0.03),
            yaw: 0.0,
            is_target: true,
        };
        let before = scene_with(vec![cube.clone()]);
        let mut grid = VoxelGrid::new(&small_cfg(), &workspace());
        let intr = CameraIntrinsics::default();
        let pose = CameraPose::from_pose(Vec3::new(0.3, 0.3, 0.25), 0.0, 0.0, &intr);
        for _ in 0..3 {
            render_and_integrate(&mut grid, &before, &pose);
        }
        let inside = grid.idx(10, 10, 1);
        assert!(
            grid.tsdf[inside] < 0.0,
            "voxel inside the cube should be negative"
        );
        assert!(grid.det[inside] >= grid.det_threshold, "cube is the target");

        // Object vanishes; the vacated region flips sign and detections carve.
        let after = scene_with(vec![]);
        let mut flipped_at = None;
        let mut carved_at = None;
        for frame in 1..=3 {
            render_and_integrate(&mut grid, &after, &pose);
            if flipped_at.is_none() && grid.tsdf[inside] > 0.0 {
                flipped_at = Some(frame);
            }
            if carved_at.is_none() && grid.det[inside] < grid.det_threshold {
                carved_at = Some(frame);
            }
        }
        assert!(flipped_at.is_some(), "sign never flipped");
        assert!(carved_at.is_some(), "detection never carved");
    }

    #[test]
    fn observed_fraction_arithmetic() {
        let mut grid = VoxelGrid::new(&small_cfg(), &workspace());
        let total = grid.len();
        for k in 0..97 {
            grid.set_voxel(k, 0.5, 1.0, 0.0, 1.0);
        }
        assert!((grid.observed_fraction() - 97.0 / total as f64).abs() < 1e-15);
        for k in 97..total {
            grid.set_voxel(k, 0.5, 1.0, 0.0, 1.0);
        }
        assert_eq!(grid.observed_fraction(), 1.0);
    }

    #[test]
    fn target_seen_fraction_counts_detected_truth() {
        let mut grid = VoxelGrid::new(&small_cfg(), &workspace());
        let truth: Vec<usize> = (0..10).map(|k| grid.idx(k, 5, 2)).collect();
        assert_eq!(grid.target_seen_fraction(&truth), 0.0);
        for &i in truth.iter().take(5) {
            grid.det[i] = 0.9;
            grid.det_weight[i] = 1.0;
        }
        assert!((grid.target_seen_fraction(&truth) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn crop_axis_aligned_is_subgrid_copy() {
        let mut grid = VoxelGrid::new(&small_cfg(), &workspace());
        // Mark a few occupied voxels.
        for (ix, iy, iz) in [(8, 9, 1), (12, 11, 2), (10, 10, 0)] {
            let i = grid.idx(ix, iy, iz);
            grid.tsdf[i] = -0.5;
            grid.weight[i] = 1.0;
            grid.det[i] = 0.7;
            grid.det_weight[i] = 1.0;
        }
        let gripper = GripperState {
            pos: Vec3::new(0.3, 0.3, 0.1),
            yaw: 0.0,
            roll: 0.0,
            finger_plane_offset: FINGER_PLANE_OFFSET,
        };
        let crop = grid.local_crop(&gripper, 0.3); // n = 10, centered at voxel 10
        for k in 0..crop.nz {
            for b in 0..crop.n {
                for a in 0..crop.n {
                    let (ix, iy) = (a + 5, b + 5);
                    let want = if grid.occupied(grid.idx(ix, iy, k)) {
                        1.0
                    } else {
                        0.0
                    };
                    assert_eq!(crop.occupancy[crop.idx(a, b, k)], want);
                }
            }
        }
    }

    #[test]
    fn crop_quarter_turn_rotates_samples() {
        let mut grid = VoxelGrid::new(&small_cfg(), &workspace());
        let i = grid.idx(13, 10, 1); // offset +3 voxels along x from center
        grid.tsdf[i] = -0.5;
        grid.weight[i] = 1.0;
        let center = Vec3::new(0.3, 0.3, 0.1);
        let g0 = GripperState {
            pos: center,
            yaw: 0.0,
            roll: 0.0,
            finger_plane_offset: 0.0,
        };
        let g90 = GripperState {
            pos: center,
            yaw: std::f64::consts::FRAC_PI_2,
            roll: 0.0,
            finger_plane_offset: 0.0,
        };
        let c0 = grid.local_crop(&g0, 0.3);
        let c90 = grid.local_crop(&g90, 0.3);
        // In the rotated frame the occupied sample appears rotated by -90deg.
        let occupied0: Vec<usize> = (0..c0.occupancy.len())
            .filter(|&j| c0.occupancy[j] > 0.0)
            .collect();
        let occupied90: Vec<usize> = (0..c90.occupancy.len())
            .filter(|&j| c90.occupancy[j] > 0.0)
            .collect();
        assert_eq!(occupied0.len(), 1);
        assert_eq!(occupied90.len(), 1);
        let (a0, b0) = (occupied0[0] % c0.n, (occupied0[0] / c0.n) % c0.n);
        let (a9, b9) = (occupied90[0] % c90.n, (occupied90[0] / c90.n) % c90.n);
        // World +x maps to crop -y when the frame yaw is +90deg.
        assert_eq!((a0, b0), (8, 5));
        assert_eq!((a9, b9), (5, 1));
    }

    #[test]
    fn crop_outside_walls_reads_unobserved() {
        let mut grid = VoxelGrid::new(&small_cfg(), &workspace());
        for i in 0..grid.len() {
            grid.tsdf[i] = -0.2;
            grid.weight[i] = 1.0;
        }
        let gripper = GripperState {
            pos: Vec3::new(0.0, 0.0, 0.1),
            yaw: 0.0,
            roll: 0.0,
            finger_plane_offset: 0.0,
        };
        let crop = grid.local_crop(&gripper, 0.3);
        // Samples in the quadrant outside the workspace are zero.
        assert_eq!(crop.occupancy[crop.idx(0, 0, 0)], 0.0);
        // Samples inside are occupied.
        assert_eq!(crop.occupancy[crop.idx(crop.n - 1, crop.n - 1, 0)], 1.0);
    }

    #[test]
    fn snapshot_roundtrip() {
        let scene = scene_with(vec![]);
        let mut grid = VoxelGrid::new(&small_cfg(), &workspace());
        let pose = overview_pose(&CameraIntrinsics::default());
        render_and_integrate(&mut grid, &scene, &pose);
        let mut buf = Vec::new();
        grid.save(&mut buf).unwrap();
        let back = VoxelGrid::load(buf.as_slice()).unwrap();
        assert_eq!(grid, back);
    }

    #[test]
    fn mismatched_image_sizes_rejected() {
        let mut grid = VoxelGrid::new(&small_cfg(), &workspace());
        let intr = CameraIntrinsics::default();
        let pose = CameraPose {
            origin: Vec3::new(0.3, 0.3, 0.3),
            rot: Mat3::IDENTITY,
        };
        let depth = DepthImage {
            width: 8,
            height: 8,
            data: vec![1.0; 64],
        };
        let det = DetectionImage {
            width: 8,
            height: 8,
            data: vec![0.0; 64],
        };
        assert!(grid.integrate(&depth, &det, &pose, &intr).is_err());
    }
}
