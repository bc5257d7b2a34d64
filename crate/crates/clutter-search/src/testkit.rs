//! Independent oracles used by the test suites.
//!
//! Everything here recomputes expected values by a route separate from the
//! implementation it checks: exhaustive enumeration, per-voxel analytic
//! intersection, the slow crop-then-bin encoding pipeline, and central
//! finite differences.

use crate::camera::{CameraIntrinsics, CameraPose, DepthImage};
use crate::encoder::{CELLS, EncoderConfig, StateVector, bin_17};
use crate::math::Vec3;
use crate::scene::GripperState;
use crate::tsdf::VoxelGrid;

/// Count voxels that project onto a valid depth pixel with signed distance
/// above the negative truncation band: the membership predicate behind
/// "newly observed", evaluated per voxel over the whole grid without any
/// frustum pruning, using the transposed-rotation route.
pub fn frustum_membership_count(
    grid: &VoxelGrid,
    depth: &DepthImage,
    pose: &CameraPose,
    intr: &CameraIntrinsics,
) -> usize {
    let rot_t = pose.rot.transpose();
    let f = intr.focal();
    let mut count = 0usize;
    for iz in 0..grid.dims[2] {
        for iy in 0..grid.dims[1] {
            for ix in 0..grid.dims[0] {
                let p = grid.voxel_center(ix, iy, iz);
                let cam = rot_t.apply(p - pose.origin);
                if cam.z <= 1e-9 {
                    continue;
                }
                let u = cam.x / cam.z * f + intr.width as f64 / 2.0;
                let v = cam.y / cam.z * f + intr.height as f64 / 2.0;
                if u < 0.0 || u >= intr.width as f64 || v < 0.0 || v >= intr.height as f64 {
                    continue;
                }
                let d = depth.at(v as usize, u as usize);
                if !d.is_finite() {
                    continue;
                }
                if d - (p - pose.origin).norm() >= -grid.truncation {
                    count += 1;
                }
            }
        }
    }
    count
}

/// Reference encoding through the explicit pipeline: local crop, split at the
/// finger plane, sum the layers along z, bin each flattened map, normalize.
pub fn reference_encode(
    grid: &VoxelGrid,
    gripper: &GripperState,
    cfg: &EncoderConfig,
) -> StateVector {
    let crop = grid.local_crop(gripper, cfg.crop_side);
    let n = crop.n;
    let split_z = gripper.pos.z + cfg.finger_plane_offset;
    // [layer][map]; layer 1 = above the fingers.
    let mut occ_maps = [vec![0.0f64; n * n], vec![0.0f64; n * n]];
    let mut det_maps = [vec![0.0f64; n * n], vec![0.0f64; n * n]];
    for k in 0..crop.nz {
        let z = (k as f64 + 0.5) * grid.voxel_size;
        let layer = usize::from(z >= split_z);
        for b in 0..n {
            for a in 0..n {
                let i = crop.idx(a, b, k);
                occ_maps[layer][b * n + a] += crop.occupancy[i] as f64;
                det_maps[layer][b * n + a] += crop.detection[i] as f64;
            }
        }
    }
    let occ_cells = [bin_17(&occ_maps[0], n), bin_17(&occ_maps[1], n)];
    let det_cells = [bin_17(&det_maps[0], n), bin_17(&det_maps[1], n)];
    let occ_sum: f64 = occ_cells.iter().flatten().sum();
    let det_sum: f64 = det_cells.iter().flatten().sum();
    let mut out = Vec::with_capacity(crate::encoder::STATE_LEN);
    for layer in [1, 0] {
        for cell in 0..CELLS {
            out.push(if occ_sum > 0.0 {
                occ_cells[layer][cell] / occ_sum
            } else {
                0.0
            });
        }
    }
    for layer in [1, 0] {
        for cell in 0..CELLS {
            out.push(if det_sum > 0.0 {
                det_cells[layer][cell] / det_sum
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

/// Length of the shortest open path visiting all points, by exhaustive
/// enumeration. With `fixed_start`, paths must begin at `points[0]`.
pub fn brute_force_open_path(points: &[(f64, f64)], fixed_start: bool) -> f64 {
    fn dist(a: (f64, f64), b: (f64, f64)) -> f64 {
        (a.0 - b.0).hypot(a.1 - b.1)
    }
    fn recurse(
        points: &[(f64, f64)],
        remaining: &mut Vec<usize>,
        last: usize,
        len: f64,
        best: &mut f64,
    ) {
        if remaining.is_empty() {
            *best = best.min(len);
            return;
        }
        if len >= *best {
            return;
        }
        for k in 0..remaining.len() {
            let i = remaining.remove(k);
            recurse(
                points,
                remaining,
                i,
                len + dist(points[last], points[i]),
                best,
            );
            remaining.insert(k, i);
        }
    }
    assert!(
        points.len() >= 2 && points.len() <= 10,
        "oracle is exhaustive"
    );
    let mut best = f64::INFINITY;
    if fixed_start {
        let mut remaining: Vec<usize> = (1..points.len()).collect();
        recurse(points, &mut remaining, 0, 0.0, &mut best);
    } else {
        for s in 0..points.len() {
            let mut remaining: Vec<usize> = (0..points.len()).filter(|&i| i != s).collect();
            recurse(points, &mut remaining, s, 0.0, &mut best);
        }
    }
    best
}

/// Analytic oracle for candidate-view gain: the number of unobserved voxels
/// whose ray entry comes before the first known-occupied voxel on some pixel
/// ray, with unobserved space treated as free. Per-voxel slab intersection
/// against every pixel ray; quadratic, for small grids only.
pub fn view_gain_oracle(grid: &VoxelGrid, pose: &CameraPose, intr: &CameraIntrinsics) -> usize {
    let n = grid.len();
    let half = grid.voxel_size / 2.0;
    let entry = |origin: Vec3, dir: Vec3, center: Vec3| -> Option<f64> {
        let mut t0 = 0.0f64;
        let mut t1 = intr.far;
        for (p, d, c) in [
            (origin.x, dir.x, center.x),
            (origin.y, dir.y, center.y),
            (origin.z, dir.z, center.z),
        ] {
            if d.abs() < 1e-15 {
                if p < c - half || p > c + half {
                    return None;
                }
            } else {
                let (mut a, mut b) = ((c - half - p) / d, (c + half - p) / d);
                if a > b {
                    std::mem::swap(&mut a, &mut b);
                }
                t0 = t0.max(a);
                t1 = t1.min(b);
            }
        }
        (t1 - t0 > 1e-12).then_some(t0)
    };

    let mut counted = vec![false; n];
    for row in 0..intr.height {
        for col in 0..intr.width {
            let dir = pose.pixel_ray(intr, row, col);
            // First occupied entry along this ray.
            let mut t_occ = f64::INFINITY;
            for iz in 0..grid.dims[2] {
                for iy in 0..grid.dims[1] {
                    for ix in 0..grid.dims[0] {
                        let i = grid.idx(ix, iy, iz);
                        if !grid.occupied(i) {
                            continue;
                        }
                        if let Some(t) = entry(pose.origin, dir, grid.voxel_center(ix, iy, iz)) {
                            t_occ = t_occ.min(t);
                        }
                    }
                }
            }
            for iz in 0..grid.dims[2] {
                for iy in 0..grid.dims[1] {
                    for ix in 0..grid.dims[0] {
                        let i = grid.idx(ix, iy, iz);
                        if counted[i] || grid.weight_at(i) > 0.0 {
                            continue;
                        }
                        if let Some(t) = entry(pose.origin, dir, grid.voxel_center(ix, iy, iz)) {
                            if t < t_occ {
                                counted[i] = true;
                            }
                        }
                    }
                }
            }
        }
    }
    counted.iter().filter(|&&c| c).count()
}

/// Central finite difference of `f` along coordinate `i`.
pub fn central_difference(mut f: impl FnMut(&[f64]) -> f64, x: &[f64], i: usize, h: f64) -> f64 {
    let mut xp = x.to_vec();
    xp[i] += h;
    let fp = f(&xp);
    xp[i] = x[i] - h;
    let fm = f(&xp);
    (fp - fm) / (2.0 * h)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn brute_force_line_is_sweep() {
        let pts: Vec<(f64, f64)> = (0..5).map(|i| (i as f64 * 0.06, 0.0)).collect();
        let len = brute_force_open_path(&pts, true);
        assert!((len - 4.0 * 0.06).abs() < 1e-12);
    }

    #[test]
    fn brute_force_free_start_not_longer() {
        let pts = [(0.0, 0.0), (1.0, 0.3), (0.2, 0.9), (0.7, 0.7), (0.4, 0.1)];
        let fixed = brute_force_open_path(&pts, true);
        let free = brute_force_open_path(&pts, false);
        assert!(free <= fixed + 1e-12);
    }

    #[test]
    fn central_difference_of_quadratic() {
        let f = |x: &[f64]| x[0] * x[0] + 3.0 * x[1];
        let g = central_difference(f, &[2.0, 1.0], 0, 1e-5);
        assert!((g - 4.0).abs() < 1e-8);
    }
}
