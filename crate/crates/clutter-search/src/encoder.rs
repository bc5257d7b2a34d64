//! Compression of the local 4-channel map into the 71-value state vector.
//!
//! The map around the gripper is expressed in the yaw-projected end-effector
//! frame, split at the finger plane into layers above and below, summed along
//! z, and binned into 17 cells per map (a 3x3 grid whose center cell is
//! subdivided 3x3 again). The two occupancy maps and the two detection maps
//! are each normalized by their combined sum; the raw sums pass through a
//! squashing map and ride along as exploration-progress features, together
//! with the gripper tilt.

use serde::{Deserialize, Serialize};

use crate::scene::GripperState;
use crate::tsdf::VoxelGrid;

/// Total state vector length: 4 maps x 17 cells + 2 factors + tilt.
pub const STATE_LEN: usize = 71;
/// Cells per flattened map.
pub const CELLS: usize = 17;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EncoderConfig {
    /// Side of the square crop around the gripper, meters.
    pub crop_side: f64,
    /// Finger split plane height relative to the wrist origin, meters.
    pub finger_plane_offset: f64,
    /// Squash constant for the occupancy normalization factor.
    pub tsdf_norm_scale: f64,
    /// Squash constant for the detection normalization factor.
    pub det_norm_scale: f64,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        Self {
            crop_side: 1.2,
            finger_plane_offset: crate::scene::FINGER_PLANE_OFFSET,
            // Roughly one voxel-thick sheet spanning the workspace.
            tsdf_norm_scale: 10_000.0,
            // Roughly one target-sized voxel block.
            det_norm_scale: 125.0,
        }
    }
}

/// The encoded observation. Layout: 17 occupancy cells above the fingers,
/// 17 below, 17 detection cells above, 17 below, occupancy normalization
/// factor, detection normalization factor, gripper tilt (roll, radians).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateVector(pub Vec<f64>);

impl StateVector {
    pub fn zeros() -> Self {
        StateVector(vec![0.0; STATE_LEN])
    }

    pub fn cells(&self) -> &[f64] {
        &self.0[..4 * CELLS]
    }

    pub fn tsdf_factor(&self) -> f64 {
        self.0[68]
    }

    pub fn det_factor(&self) -> f64 {
        self.0[69]
    }

    pub fn tilt(&self) -> f64 {
        self.0[70]
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }
}

/// Cell index for a point at fractional position (fx, fy) in [0, 1)^2 of the
/// crop square. Ordering: the 8 outer cells of the 3x3 grid in row-major
/// order (rows from fy), then the 9 subdivided center cells row-major.
pub fn cell_index(fx: f64, fy: f64) -> usize {
    debug_assert!((0.0..1.0).contains(&fx) && (0.0..1.0).contains(&fy));
    let col = ((fx * 3.0) as usize).min(2);
    let row = ((fy * 3.0) as usize).min(2);
    if row != 1 || col != 1 {
        const OUTER: [[usize; 3]; 3] = [[0, 1, 2], [3, usize::MAX, 4], [5, 6, 7]];
        return OUTER[row][col];
    }
    // Center cell: position within the middle third, subdivided 3x3.
    let gx = fx * 3.0 - 1.0;
    let gy = fy * 3.0 - 1.0;
    let icol = ((gx * 3.0) as usize).min(2);
    let irow = ((gy * 3.0) as usize).min(2);
    8 + irow * 3 + icol
}

/// Bin a square lattice map into the 17 cells; each lattice entry lands in
/// exactly one cell (partition), entries at (i + 0.5)/n fractional positions.
pub fn bin_17(map: &[f64], n: usize) -> [f64; CELLS] {
    assert_eq!(map.len(), n * n, "map must be square");
    let mut cells = [0.0; CELLS];
    for iy in 0..n {
        let fy = (iy as f64 + 0.5) / n as f64;
        for ix in 0..n {
            let fx = (ix as f64 + 0.5) / n as f64;
            cells[cell_index(fx, fy)] += map[iy * n + ix];
        }
    }
    cells
}

/// Encode the grid into the state vector for the given gripper pose.
///
/// Equivalent to cropping the map in the yaw-projected end-effector frame,
/// splitting at the finger plane, summing layers along z, and binning with
/// [`bin_17`]; implemented as a single accumulation pass over the map voxels.
pub fn encode(grid: &VoxelGrid, gripper: &GripperState, cfg: &EncoderConfig) -> StateVector {
    let half = cfg.crop_side / 2.0;
    let split_z = gripper.pos.z + cfg.finger_plane_offset;
    // [layer][cell]; layer 1 = above the fingers.
    let mut occ = [[0.0f64; CELLS]; 2];
    let mut det = [[0.0f64; CELLS]; 2];

    let (s, c) = (-gripper.yaw).sin_cos();
    let vox = grid.voxel_size;
    let (nx, ny, nz) = (grid.dims[0], grid.dims[1], grid.dims[2]);
    for iz in 0..nz {
        let z = (iz as f64 + 0.5) * vox;
        let layer = usize::from(z >= split_z);
        for iy in 0..ny {
            let dy = (iy as f64 + 0.5) * vox - gripper.pos.y;
            for ix in 0..nx {
                let i = ix + nx * (iy + ny * iz);
                let w = grid.weight_at(i);
                if w == 0.0 {
                    continue;
                }
                let occupied = grid.tsdf_at(i) < 0.0;
                let dv = if grid.det_weight_at(i) > 0.0 {
                    grid.det_at(i) as f64
                } else {
                    0.0
                };
                if !occupied && dv == 0.0 {
                    continue;
                }
                let dx = (ix as f64 + 0.5) * vox - gripper.pos.x;
                let u = c * dx - s * dy;
                let v = s * dx + c * dy;
                if u < -half || u >= half || v < -half || v >= half {
                    continue;
                }
                let cell = cell_index((u + half) / cfg.crop_side, (v + half) / cfg.crop_side);
                if occupied {
                    occ[layer][cell] += 1.0;
                }
                det[layer][cell] += dv;
            }
        }
    }

    let occ_sum: f64 = occ.iter().flatten().sum();
    let det_sum: f64 = det.iter().flatten().sum();
    let mut out = Vec::with_capacity(STATE_LEN);
    for layer in [1, 0] {
        for cell in 0..CELLS {
            out.push(if occ_sum > 0.0 {
                occ[layer][cell] / occ_sum
            } else {
                0.0
            });
        }
    }
    for layer in [1, 0] {
        for cell in 0..CELLS {
            out.push(if det_sum > 0.0 {
                det[layer][cell] / det_sum
            } else {
                0.0
            });
        }
    }
    out.push(occ_sum / (occ_sum + cfg.tsdf_norm_scale).max(f64::MIN_POSITIVE));
    out.push(det_sum / (det_sum + cfg.det_norm_scale).max(f64::MIN_POSITIVE));
    out.push(gripper.roll);
    StateVector(out)
}
