//! Scene generation and simplified quasi-static physics.
//!
//! The world is a square workspace surrounded by walls, populated with
//! convex primitives (boxes, cylinders, triangular prisms) resting on the
//! ground or stacked in piles. A box-shaped gripper collider sweeps through
//! the scene; objects in its way are pushed horizontally until contact-free
//! and then settled vertically. All motion is deterministic: there is no
//! dynamics integration, only sweep-push and straight-down settling.

use rand::RngExt as _;
use serde::{Deserialize, Serialize};

use crate::math::{Footprint, Vec3, footprints_overlap, rotate_xy, wrap_angle};
use crate::{Error, Result, Rng};

/// Contact tolerance: interpenetration up to this depth is treated as touch.
pub const EPS_PEN: f64 = 1e-4;
/// Bounded retries for rejection-sampled placement.
pub const PLACEMENT_RETRIES: usize = 100;
/// Gripper collider half extents (x, y, z), meters.
pub const GRIPPER_HALF: Vec3 = Vec3 {
    x: 0.015,
    y: 0.04,
    z: 0.03,
};
/// Lowest allowed gripper center height (collider clears the ground).
pub const GRIPPER_Z_MIN: f64 = 0.035;
/// Roll (tilt) limit, radians.
pub const ROLL_LIMIT: f64 = std::f64::consts::FRAC_PI_3;
/// Finger split plane height relative to the wrist origin, meters.
pub const FINGER_PLANE_OFFSET: f64 = -0.02;
/// Edge length of the default cube primitive, meters.
pub const CUBE_EDGE: f64 = 0.03;

const PUSH_STEP: f64 = 0.001;
const PUSH_ROUNDS: usize = 800;
const SWEEP_SUBSTEP: f64 = 0.005;

/// Convex primitive shapes; every shape is an extrusion along z.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Shape {
    Box { half: Vec3 },
    Cylinder { radius: f64, half_height: f64 },
    Prism { side: f64, half_height: f64 },
}

impl Shape {
    pub fn half_height(&self) -> f64 {
        match *self {
            Shape::Box { half } => half.z,
            Shape::Cylinder { half_height, .. } | Shape::Prism { half_height, .. } => half_height,
        }
    }

    /// Radius of the smallest vertical cylinder containing the shape.
    pub fn circumradius(&self) -> f64 {
        match *self {
            Shape::Box { half } => half.x.hypot(half.y),
            Shape::Cylinder { radius, .. } => radius,
            Shape::Prism { side, .. } => side / 3f64.sqrt(),
        }
    }

    fn footprint_at(&self, x: f64, y: f64, yaw: f64) -> Footprint {
        match *self {
            Shape::Box { half } => {
                let corners = [
                    (-half.x, -half.y),
                    (half.x, -half.y),
                    (half.x, half.y),
                    (-half.x, half.y),
                ];
                Footprint::Poly(
                    corners
                        .iter()
                        .map(|&(cx, cy)| {
                            let (rx, ry) = rotate_xy(cx, cy, yaw);
                            (x + rx, y + ry)
                        })
                        .collect(),
                )
            }
            Shape::Cylinder { radius, .. } => Footprint::Circle {
                cx: x,
                cy: y,
                r: radius,
            },
            Shape::Prism { side, .. } => {
                let r = side / 3f64.sqrt();
                let angles = [
                    std::f64::consts::FRAC_PI_2,
                    std::f64::consts::FRAC_PI_2 + 2.0 * std::f64::consts::FRAC_PI_3,
                    std::f64::consts::FRAC_PI_2 + 4.0 * std::f64::consts::FRAC_PI_3,
                ];
                Footprint::Poly(
                    angles
                        .iter()
                        .map(|&a| {
                            let (rx, ry) = rotate_xy(r * a.cos(), r * a.sin(), yaw);
                            (x + rx, y + ry)
                        })
                        .collect(),
                )
            }
        }
    }
}

/// One rigid object in the scene. `pos` is the volume center.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectInstance {
    pub id: u32,
    pub shape: Shape,
    pub pos: Vec3,
    pub yaw: f64,
    pub is_target: bool,
}

impl ObjectInstance {
    pub fn footprint(&self) -> Footprint {
        self.shape.footprint_at(self.pos.x, self.pos.y, self.yaw)
    }

    pub fn bottom(&self) -> f64 {
        self.pos.z - self.shape.half_height()
    }

    pub fn top(&self) -> f64 {
        self.pos.z + self.shape.half_height()
    }
}

/// Walled square workspace with the ground at z = 0 and an open top.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Workspace {
    pub side: f64,
    pub wall_height: f64,
    pub wall_thickness: f64,
}

impl Workspace {
    pub fn new(side: f64) -> Self {
        Self {
            side,
            wall_height: side / 2.0,
            wall_thickness: 0.01,
        }
    }

    pub fn contains_xy(&self, x: f64, y: f64) -> bool {
        x >= 0.0 && x <= self.side && y >= 0.0 && y <= self.side
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SceneKind {
    Cubes,
    FixedPrimitives,
    VariablePrimitives,
}

/// Parameters controlling random scene generation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneConfig {
    pub kind: SceneKind,
    pub min_objects: usize,
    pub max_objects: usize,
    pub num_piles: usize,
    /// Probability that the scene has no target object.
    pub no_target_prob: f64,
    /// Fraction of pile-task scenes generated without piles.
    pub exploration_ratio: f64,
    pub workspace: Workspace,
    /// Base seed used when the scene is generated standalone; episode
    /// drivers derive their own per-episode seeds instead.
    pub seed: u64,
}

impl SceneConfig {
    pub fn validate(&self) -> Result<()> {
        if self.min_objects > self.max_objects {
            return Err(Error::Contract("min_objects > max_objects".into()));
        }
        for (name, p) in [
            ("no_target_prob", self.no_target_prob),
            ("exploration_ratio", self.exploration_ratio),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::Contract(format!("{name} out of [0,1]")));
            }
        }
        Ok(())
    }
}

/// Pose of the free-floating gripper (no arm is modeled).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GripperState {
    pub pos: Vec3,
    pub yaw: f64,
    /// Tilt of the approach axis, radians.
    pub roll: f64,
    /// Finger split plane height relative to the wrist origin.
    pub finger_plane_offset: f64,
}

impl GripperState {
    pub fn footprint(&self) -> Footprint {
        Shape::Box { half: GRIPPER_HALF }.footprint_at(self.pos.x, self.pos.y, self.yaw)
    }

    pub fn z_interval(&self) -> (f64, f64) {
        (self.pos.z - GRIPPER_HALF.z, self.pos.z + GRIPPER_HALF.z)
    }
}

/// Complete ground-truth world state. Immutable snapshot: operations return
/// new states, so values can be shared read-only across threads.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneState {
    pub objects: Vec<ObjectInstance>,
    pub gripper: GripperState,
    pub config: SceneConfig,
}

impl SceneState {
    pub fn target(&self) -> Option<&ObjectInstance> {
        self.objects.iter().find(|o| o.is_target)
    }

    /// Highest object top, or 0 for an empty scene.
    pub fn max_top(&self) -> f64 {
        self.objects.iter().map(|o| o.top()).fold(0.0, f64::max)
    }

    /// Lowest object top, or 0 for an empty scene (used by the sweep baseline).
    pub fn lowest_top(&self) -> f64 {
        if self.objects.is_empty() {
            0.0
        } else {
            self.objects
                .iter()
                .map(|o| o.top())
                .fold(f64::INFINITY, f64::min)
        }
    }
}

fn base_shape(kind: SceneKind, rng: &mut Rng) -> Shape {
    let cube = Shape::Box {
        half: Vec3::new(CUBE_EDGE / 2.0, CUBE_EDGE / 2.0, CUBE_EDGE / 2.0),
    };
    match kind {
        SceneKind::Cubes => cube,
        SceneKind::FixedPrimitives | SceneKind::VariablePrimitives => {
            let pick = rng.random_range(0..4u32);
            let shape = match pick {
                0 => cube,
                1 => Shape::Box {
                    half: Vec3::new(0.02, 0.0125, 0.01),
                },
                2 => Shape::Cylinder {
                    radius: 0.015,
                    half_height: 0.015,
                },
                _ => Shape::Prism {
                    side: 0.04,
                    half_height: 0.0125,
                },
            };
            if kind == SceneKind::VariablePrimitives {
                let s = rng.random_range(0.5..2.0);
                match shape {
                    Shape::Box { half } => Shape::Box { half: half * s },
                    Shape::Cylinder {
                        radius,
                        half_height,
                    } => Shape::Cylinder {
                        radius: radius * s,
                        half_height: half_height * s,
                    },
                    Shape::Prism { side, half_height } => Shape::Prism {
                        side: side * s,
                        half_height: half_height * s,
                    },
                }
            } else {
                shape
            }
        }
    }
}

fn object_inside_walls(ws: &Workspace, fp: &Footprint) -> bool {
    let (x0, y0, x1, y1) = fp.aabb();
    x0 >= 0.0 && y0 >= 0.0 && x1 <= ws.side && y1 <= ws.side
}

fn overlaps_any(fp: &Footprint, zi: (f64, f64), objects: &[ObjectInstance], skip: usize) -> bool {
    objects.iter().enumerate().any(|(j, o)| {
        j != skip
            && zi.0 < o.top() - EPS_PEN
            && o.bottom() < zi.1 - EPS_PEN
            && footprints_overlap(fp, &o.footprint(), EPS_PEN)
    })
}

/// Generate a random scene: scattered objects, optional piles, optional
/// target, and a collision-free gripper pose. Deterministic in (config, rng).
pub fn generate_scene(config: &SceneConfig, rng: &mut Rng) -> Result<SceneState> {
    config.validate()?;
    let ws = config.workspace;
    let count = rng.random_range(config.min_objects..=config.max_objects);
    let has_target = count > 0 && rng.random_range(0.0..1.0) >= config.no_target_prob;
    let pile_scene = config.num_piles > 0 && rng.random_range(0.0..1.0) >= config.exploration_ratio;

    let mut shapes = Vec::with_capacity(count);
    for _ in 0..count {
        shapes.push(base_shape(config.kind, rng));
    }

    // Pile layout: which objects are stacked, and where the target sits.
    let mut pile_sizes: Vec<usize> = Vec::new();
    if pile_scene {
        let piles = config.num_piles.min(count / 2);
        for _ in 0..piles {
            pile_sizes.push(rng.random_range(2..=5usize));
        }
        while pile_sizes.iter().sum::<usize>() > count {
            let m = pile_sizes
                .iter()
                .enumerate()
                .max_by_key(|(_, v)| **v)
                .map(|(i, _)| i)
                .unwrap();
            pile_sizes[m] -= 1;
        }
        pile_sizes.retain(|&k| k >= 2);
    }
    let piled_total: usize = pile_sizes.iter().sum();

    // The target, when present in a pile scene, is buried at the bottom or
    // middle of one of the piles; otherwise it is one of the scattered
    // objects.
    let target_pile = if has_target && !pile_sizes.is_empty() {
        let p = rng.random_range(0..pile_sizes.len());
        let level = if rng.random_range(0.0..1.0) < 0.5 {
            0
        } else {
            pile_sizes[p] / 2
        };
        Some((p, level.min(pile_sizes[p] - 1)))
    } else {
        None
    };
    let target_scatter = if has_target && target_pile.is_none() {
        Some(rng.random_range(0..count - piled_total))
    } else {
        None
    };

    let mut objects: Vec<ObjectInstance> = Vec::with_capacity(count);
    let mut next_shape = shapes.into_iter();
    let mut next_id = 0u32;

    // Piles first: rejection-sample centers, then stack with lateral jitter.
    let mut pile_centers: Vec<(f64, f64)> = Vec::new();
    for (p, &k) in pile_sizes.iter().enumerate() {
        let margin = 0.06;
        let mut placed = false;
        for _ in 0..PLACEMENT_RETRIES {
            let cx = rng.random_range(margin..ws.side - margin);
            let cy = rng.random_range(margin..ws.side - margin);
            if pile_centers
                .iter()
                .any(|&(px, py)| (px - cx).hypot(py - cy) < 0.12)
            {
                continue;
            }
            pile_centers.push((cx, cy));
            placed = true;
            break;
        }
        if !placed {
            return Err(Error::SceneGeneration(
                "pile center placement failed".into(),
            ));
        }
        let (cx, cy) = *pile_centers.last().unwrap();
        let mut z = 0.0;
        for level in 0..k {
            let shape = next_shape.next().unwrap();
            let jitter = 0.004;
            let (jx, jy) = if level == 0 {
                (0.0, 0.0)
            } else {
                (
                    rng.random_range(-jitter..jitter),
                    rng.random_range(-jitter..jitter),
                )
            };
            let yaw = rng.random_range(-std::f64::consts::PI..std::f64::consts::PI);
            let hh = shape.half_height();
            objects.push(ObjectInstance {
                id: next_id,
                shape,
                pos: Vec3::new(cx + jx, cy + jy, z + hh),
                yaw,
                is_target: target_pile == Some((p, level)),
            });
            next_id += 1;
            z += 2.0 * hh;
        }
    }

    // Scattered objects.
    let mut scatter_idx = 0usize;
    while (next_id as usize) < count {
        let shape = next_shape.next().unwrap();
        let r = shape.circumradius();
        let hh = shape.half_height();
        let mut placed = false;
        for _ in 0..PLACEMENT_RETRIES {
            let x = rng.random_range(r..ws.side - r);
            let y = rng.random_range(r..ws.side - r);
            let yaw = rng.random_range(-std::f64::consts::PI..std::f64::consts::PI);
            let fp = shape.footprint_at(x, y, yaw);
            if !object_inside_walls(&ws, &fp) {
                continue;
            }
            if overlaps_any(&fp, (0.0, 2.0 * hh), &objects, usize::MAX) {
                continue;
            }
            objects.push(ObjectInstance {
                id: next_id,
                shape,
                pos: Vec3::new(x, y, hh),
                yaw,
                is_target: target_scatter == Some(scatter_idx),
            });
            next_id += 1;
            scatter_idx += 1;
            placed = true;
            break;
        }
        if !placed {
            return Err(Error::SceneGeneration("object placement failed".into()));
        }
    }

    // Gripper: uniform collision-free pose.
    let gr = GRIPPER_HALF.x.hypot(GRIPPER_HALF.y);
    let mut gripper = None;
    for _ in 0..PLACEMENT_RETRIES {
        let pos = Vec3::new(
            rng.random_range(gr..ws.side - gr),
            rng.random_range(gr..ws.side - gr),
            rng.random_range(GRIPPER_Z_MIN..ws.wall_height),
        );
        let yaw = rng.random_range(-std::f64::consts::PI..std::f64::consts::PI);
        let g = GripperState {
            pos,
            yaw,
            roll: 0.0,
            finger_plane_offset: FINGER_PLANE_OFFSET,
        };
        if !overlaps_any(&g.footprint(), g.z_interval(), &objects, usize::MAX) {
            gripper = Some(g);
            break;
        }
    }
    let gripper =
        gripper.ok_or_else(|| Error::SceneGeneration("gripper placement failed".into()))?;

    Ok(SceneState {
        objects,
        gripper,
        config: config.clone(),
    })
}

fn clamp_gripper_pos(ws: &Workspace, p: Vec3) -> Vec3 {
    let r = GRIPPER_HALF.x.hypot(GRIPPER_HALF.y);
    Vec3::new(
        p.x.clamp(r, ws.side - r),
        p.y.clamp(r, ws.side - r),
        p.z.clamp(GRIPPER_Z_MIN, ws.wall_height),
    )
}

/// Clamp an object position so its footprint AABB stays inside the walls.
fn clamp_object_xy(ws: &Workspace, obj: &ObjectInstance, x: f64, y: f64) -> (f64, f64) {
    let fp = obj.shape.footprint_at(x, y, obj.yaw);
    let (x0, y0, x1, y1) = fp.aabb();
    let mut nx = x;
    let mut ny = y;
    if x0 < 0.0 {
        nx -= x0;
    } else if x1 > ws.side {
        nx -= x1 - ws.side;
    }
    if y0 < 0.0 {
        ny -= y0;
    } else if y1 > ws.side {
        ny -= y1 - ws.side;
    }
    (nx, ny)
}

/// Push every object overlapping the gripper collider along `dir`
/// (horizontal unit vector), propagating contact to touching objects.
/// Objects clamp at walls; wall-jammed chains stop resolving and the
/// gripper passes through.
fn resolve_pushes(scene: &mut SceneState, dir: (f64, f64)) {
    let ws = scene.config.workspace;
    let n = scene.objects.len();
    let mut pinned = vec![false; n];

    // Active set: objects near the gripper or near anything already moved.
    let gfp = scene.gripper.footprint();
    let (gx0, gy0, gx1, gy1) = gfp.aabb();
    let reach = 0.1;
    let mut active: Vec<usize> = (0..n)
        .filter(|&i| {
            let (x0, y0, x1, y1) = scene.objects[i].footprint().aabb();
            x1 > gx0 - reach && x0 < gx1 + reach && y1 > gy0 - reach && y0 < gy1 + reach
        })
        .collect();

    for _ in 0..PUSH_ROUNDS {
        let mut moved_any = false;
        let gzi = scene.gripper.z_interval();

        let mut to_add: Vec<usize> = Vec::new();
        for idx in 0..active.len() {
            let i = active[idx];
            if pinned[i] {
                continue;
            }
            let oi = &scene.objects[i];
            let gripper_hits = oi.bottom() < gzi.1 - EPS_PEN
                && gzi.0 < oi.top() - EPS_PEN
                && footprints_overlap(&oi.footprint(), &gfp, 0.0);
            let mut pushed_by_object = false;
            if !gripper_hits {
                // Pushed by a touching object that sits behind it along dir.
                for &j in &active {
                    if j == i {
                        continue;
                    }
                    let oj = &scene.objects[j];
                    let along_i = oi.pos.x * dir.0 + oi.pos.y * dir.1;
                    let along_j = oj.pos.x * dir.0 + oj.pos.y * dir.1;
                    let downstream = along_i > along_j || (along_i == along_j && i > j);
                    if downstream
                        && oi.bottom() < oj.top() - EPS_PEN
                        && oj.bottom() < oi.top() - EPS_PEN
                        && footprints_overlap(&oi.footprint(), &oj.footprint(), EPS_PEN)
                    {
                        pushed_by_object = true;
                        break;
                    }
                }
            }
            if !(gripper_hits || pushed_by_object) {
                continue;
            }

            let oi = &scene.objects[i];
            let (tx, ty) = (oi.pos.x + dir.0 * PUSH_STEP, oi.pos.y + dir.1 * PUSH_STEP);
            let (cx, cy) = clamp_object_xy(&ws, oi, tx, ty);
            let step = (cx - oi.pos.x).hypot(cy - oi.pos.y);
            if step < PUSH_STEP * 0.5 {
                pinned[i] = true;
                continue;
            }
            // A move into a pinned object jams the chain instead.
            let fp_new = oi.shape.footprint_at(cx, cy, oi.yaw);
            let zi = (oi.bottom(), oi.top());
            let mut jam = false;
            for j in 0..n {
                if j == i || !pinned[j] {
                    continue;
                }
                let oj = &scene.objects[j];
                if zi.0 < oj.top() - EPS_PEN
                    && oj.bottom() < zi.1 - EPS_PEN
                    && footprints_overlap(&fp_new, &oj.footprint(), EPS_PEN)
                {
                    jam = true;
                    break;
                }
            }
            if jam {
                pinned[i] = true;
                continue;
            }
            scene.objects[i].pos.x = cx;
            scene.objects[i].pos.y = cy;
            moved_any = true;
            // Motion may bring previously-distant objects into the chain.
            for j in 0..n {
                if j != i && !active.contains(&j) && !to_add.contains(&j) {
                    let oj = &scene.objects[j];
                    let d = (oj.pos.x - cx).hypot(oj.pos.y - cy);
                    if d < oj.shape.circumradius() + scene.objects[i].shape.circumradius() + 0.02 {
                        to_add.push(j);
                    }
                }
            }
        }
        active.extend(to_add);
        if !moved_any {
            break;
        }
    }
}

/// Drop every unsupported object straight down onto the highest surface
/// under its footprint. Idempotent.
pub fn settle(scene: &SceneState) -> SceneState {
    let mut s = scene.clone();
    settle_in_place(&mut s);
    s
}

fn settle_in_place(s: &mut SceneState) {
    let n = s.objects.len();
    for _ in 0..n.max(1) {
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| {
            s.objects[a]
                .bottom()
                .partial_cmp(&s.objects[b].bottom())
                .unwrap()
                .then(s.objects[a].id.cmp(&s.objects[b].id))
        });
        let mut changed = false;
        for &i in &order {
            let fp = s.objects[i].footprint();
            let bottom = s.objects[i].bottom();
            let mut support = 0.0f64;
            for j in 0..n {
                if j == i {
                    continue;
                }
                let oj = &s.objects[j];
                if oj.top() <= bottom + 1e-9
                    && oj.top() > support
                    && footprints_overlap(&fp, &oj.footprint(), EPS_PEN)
                {
                    support = oj.top();
                }
            }
            if bottom > support + 1e-12 {
                s.objects[i].pos.z -= bottom - support;
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }
}

/// Move the gripper along `translation` (world frame) with rotation deltas,
/// sweeping its collider through the scene: objects in the way are pushed
/// along the horizontal motion direction, then everything settles. Motion is
/// clipped at the walls. Inputs beyond the per-step limits are clamped.
pub fn step_gripper(scene: &SceneState, translation: Vec3, droll: f64, dyaw: f64) -> SceneState {
    let mut s = scene.clone();
    let ws = s.config.workspace;
    s.gripper.roll = (s.gripper.roll + droll).clamp(-ROLL_LIMIT, ROLL_LIMIT);
    s.gripper.yaw = wrap_angle(s.gripper.yaw + dyaw);

    let start = s.gripper.pos;
    let target = clamp_gripper_pos(&ws, start + translation);
    let delta = target - start;
    let len = delta.norm();
    let dir_h = {
        let h = (delta.x, delta.y);
        let hn = h.0.hypot(h.1);
        if hn > 1e-9 {
            Some((h.0 / hn, h.1 / hn))
        } else {
            None
        }
    };

    if len > 1e-12 {
        let steps = (len / SWEEP_SUBSTEP).ceil() as usize;
        for k in 1..=steps {
            let t = k as f64 / steps as f64;
            s.gripper.pos = start + delta * t;
            if let Some(dir) = dir_h {
                resolve_pushes(&mut s, dir);
            }
        }
        s.gripper.pos = target;
    }
    settle_in_place(&mut s);
    s
}

/// Flat voxel indices (x + nx*(y + ny*z)) occupied by the target object at
/// the given grid geometry, or `None` when the scene has no target.
pub fn target_truth(scene: &SceneState, dims: [usize; 3], voxel_size: f64) -> Option<Vec<usize>> {
    let target = scene.target()?;
    let fp = target.footprint();
    let (x0, y0, x1, y1) = fp.aabb();
    let (zb, zt) = (target.bottom(), target.top());
    let clamp_idx =
        |v: f64, n: usize| (v.max(0.0) / voxel_size).floor().min(n as f64 - 1.0) as usize;
    let ix0 = clamp_idx(x0, dims[0]);
    let ix1 = clamp_idx(x1, dims[0]);
    let iy0 = clamp_idx(y0, dims[1]);
    let iy1 = clamp_idx(y1, dims[1]);
    let iz0 = clamp_idx(zb, dims[2]);
    let iz1 = clamp_idx(zt, dims[2]);
    let mut out = Vec::new();
    for iz in iz0..=iz1 {
        let z = (iz as f64 + 0.5) * voxel_size;
        if z < zb || z > zt {
            continue;
        }
        for iy in iy0..=iy1 {
            let y = (iy as f64 + 0.5) * voxel_size;
            for ix in ix0..=ix1 {
                let x = (ix as f64 + 0.5) * voxel_size;
                if fp.contains(x, y) {
                    out.push(ix + dims[0] * (iy + dims[1] * iz));
                }
            }
        }
    }
    Some(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seeded_rng;

    fn test_config(kind: SceneKind, min: usize, max: usize, piles: usize) -> SceneConfig {
        SceneConfig {
            kind,
            min_objects: min,
            max_objects: max,
            num_piles: piles,
            no_target_prob: 0.1,
            exploration_ratio: 0.25,
            workspace: Workspace::new(0.6),
            seed: 0,
        }
    }

    fn cube_at(id: u32, x: f64, y: f64, z: f64) -> ObjectInstance {
        ObjectInstance {
            id,
            shape: Shape::Box {
                half: Vec3::new(0.015, 0.015, 0.015),
            },
            pos: Vec3::new(x, y, z),
            yaw: 0.0,
            is_target: false,
        }
    }

    fn empty_scene() -> SceneState {
        SceneState {
            objects: vec![],
            gripper: GripperState {
                pos: Vec3::new(0.3, 0.3, 0.1),
                yaw: 0.0,
                roll: 0.0,
                finger_plane_offset: FINGER_PLANE_OFFSET,
            },
            config: test_config(SceneKind::Cubes, 0, 0, 0),
        }
    }

    #[test]
    fn generate_object_count_in_range() {
        let cfg = test_config(SceneKind::Cubes, 5, 25, 0);
        for seed in 0..20 {
            let s = generate_scene(&cfg, &mut seeded_rng(seed)).unwrap();
            assert!(s.objects.len() >= 5 && s.objects.len() <= 25);
            assert!(s.objects.iter().filter(|o| o.is_target).count() <= 1);
        }
    }

    #[test]
    fn generate_no_target_when_forced() {
        let mut cfg = test_config(SceneKind::Cubes, 5, 10, 0);
        cfg.no_target_prob = 1.0;
        for seed in 0..10 {
            let s = generate_scene(&cfg, &mut seeded_rng(seed)).unwrap();
            assert!(s.target().is_none());
        }
    }

    #[test]
    fn generate_deterministic() {
        let cfg = test_config(SceneKind::VariablePrimitives, 10, 30, 3);
        let a = generate_scene(&cfg, &mut seeded_rng(7)).unwrap();
        let b = generate_scene(&cfg, &mut seeded_rng(7)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn generate_objects_supported_and_contained() {
        let cfg = test_config(SceneKind::Cubes, 15, 40, 3);
        for seed in 0..10 {
            let s = generate_scene(&cfg, &mut seeded_rng(seed)).unwrap();
            let settled = settle(&s);
            for (a, b) in s.objects.iter().zip(settled.objects.iter()) {
                assert!(
                    (a.pos.z - b.pos.z).abs() < 1e-9,
                    "generated scene not settled"
                );
            }
            for o in &s.objects {
                assert!(object_inside_walls(&s.config.workspace, &o.footprint()));
            }
        }
    }

    #[test]
    fn generate_pile_scene_has_stacks() {
        let mut cfg = test_config(SceneKind::Cubes, 15, 20, 3);
        cfg.exploration_ratio = 0.0;
        let s = generate_scene(&cfg, &mut seeded_rng(3)).unwrap();
        let stacked = s.objects.iter().filter(|o| o.bottom() > 1e-6).count();
        assert!(stacked >= 3, "expected stacked objects, got {stacked}");
    }

    #[test]
    fn settle_drops_floating_cube() {
        let mut s = empty_scene();
        s.objects.push(cube_at(0, 0.3, 0.3, 0.115));
        let out = settle(&s);
        assert!((out.objects[0].bottom() - 0.0).abs() < 1e-12);
    }

    #[test]
    fn settle_stacks_on_support() {
        let mut s = empty_scene();
        s.objects.push(cube_at(0, 0.3, 0.3, 0.015));
        // Floating above with overlapping footprint: lands on the lower top.
        s.objects.push(cube_at(1, 0.31, 0.31, 0.2));
        let out = settle(&s);
        assert!((out.objects[1].bottom() - 0.03).abs() < 1e-12);
    }

    #[test]
    fn settle_idempotent() {
        let cfg = test_config(SceneKind::Cubes, 10, 20, 2);
        let s = generate_scene(&cfg, &mut seeded_rng(11)).unwrap();
        let once = settle(&s);
        let twice = settle(&once);
        assert_eq!(once, twice);
    }

    #[test]
    fn step_gripper_free_motion() {
        let s = empty_scene();
        let out = step_gripper(&s, Vec3::new(0.06, 0.0, 0.0), 0.0, 0.0);
        assert!((out.gripper.pos.x - 0.36).abs() < 1e-12);
        assert_eq!(out.objects, s.objects);
    }

    #[test]
    fn step_gripper_clips_at_wall() {
        let mut s = empty_scene();
        s.gripper.pos = Vec3::new(0.58, 0.3, 0.1);
        let out = step_gripper(&s, Vec3::new(0.06, 0.0, 0.0), 0.0, 0.0);
        let r = GRIPPER_HALF.x.hypot(GRIPPER_HALF.y);
        assert!((out.gripper.pos.x - (0.6 - r)).abs() < 1e-9);
    }

    #[test]
    fn step_gripper_pushes_top_cube_off_stack() {
        let mut s = empty_scene();
        // Two-cube stack ahead of the gripper; sweep at the top cube's height.
        s.objects.push(cube_at(0, 0.4, 0.3, 0.015));
        s.objects.push(cube_at(1, 0.4, 0.3, 0.045));
        s.gripper.pos = Vec3::new(0.3, 0.3, 0.045 + GRIPPER_HALF.z - 0.005);
        let out = step_gripper(&s, Vec3::new(0.06, 0.0, 0.0), 0.0, 0.0);
        let out = step_gripper(&out, Vec3::new(0.06, 0.0, 0.0), 0.0, 0.0);
        // Bottom cube untouched, top cube displaced and dropped to the ground.
        assert!((out.objects[0].pos.x - 0.4).abs() < 1e-9);
        assert!(out.objects[1].pos.x > 0.42);
        assert!(
            (out.objects[1].bottom() - 0.0).abs() < 1e-9,
            "top cube should settle on ground"
        );
    }

    fn assert_no_interpenetration(s: &SceneState) {
        for i in 0..s.objects.len() {
            for j in i + 1..s.objects.len() {
                let (a, b) = (&s.objects[i], &s.objects[j]);
                let z_overlap =
                    a.bottom() < b.top() - 2.0 * EPS_PEN && b.bottom() < a.top() - 2.0 * EPS_PEN;
                if z_overlap {
                    assert!(
                        !footprints_overlap(&a.footprint(), &b.footprint(), 2.0 * EPS_PEN),
                        "objects {} and {} interpenetrate",
                        a.id,
                        b.id
                    );
                }
            }
        }
    }

    #[test]
    fn step_gripper_preserves_object_ids_and_separation() {
        let cfg = test_config(SceneKind::Cubes, 15, 25, 3);
        let s = generate_scene(&cfg, &mut seeded_rng(5)).unwrap();
        let ids: Vec<u32> = s.objects.iter().map(|o| o.id).collect();
        let mut cur = s;
        for k in 0..10 {
            let dx = if k % 2 == 0 { 0.06 } else { -0.04 };
            cur = step_gripper(&cur, Vec3::new(dx, 0.02, -0.01), 0.05, 0.1);
            let now: Vec<u32> = cur.objects.iter().map(|o| o.id).collect();
            assert_eq!(ids, now);
            for o in &cur.objects {
                assert!(object_inside_walls(&cur.config.workspace, &o.footprint()));
            }
            assert_no_interpenetration(&cur);
        }
    }

    #[test]
    fn pushes_propagate_to_touching_objects() {
        let mut s = empty_scene();
        s.objects.push(cube_at(0, 0.40, 0.3, 0.015));
        s.objects.push(cube_at(1, 0.4302, 0.3, 0.015)); // touching the first
        s.gripper.pos = Vec3::new(0.32, 0.3, 0.03);
        let out = step_gripper(&s, Vec3::new(0.06, 0.0, 0.0), 0.0, 0.0);
        assert!(out.objects[0].pos.x > 0.40 + 1e-4, "first cube pushed");
        assert!(
            out.objects[1].pos.x > 0.4302 + 1e-4,
            "second cube pushed via contact"
        );
        // No interpenetration beyond tolerance.
        assert!(
            out.objects[1].pos.x - out.objects[0].pos.x > 0.03 - 2.0 * EPS_PEN,
            "cubes separated"
        );
    }

    #[test]
    fn target_truth_absent_and_block() {
        let mut s = empty_scene();
        assert!(target_truth(&s, [100, 100, 50], 0.006).is_none());
        // Axis-aligned cube positioned so exactly 5 voxel centers per axis fall inside.
        let mut c = cube_at(0, 0.015, 0.015, 0.015);
        c.is_target = true;
        s.objects.push(c);
        let v = target_truth(&s, [100, 100, 50], 0.006).unwrap();
        assert_eq!(v.len(), 125);
    }

    #[test]
    fn scene_snapshot_serializes_to_json() {
        let cfg = test_config(SceneKind::FixedPrimitives, 4, 8, 1);
        let s = generate_scene(&cfg, &mut seeded_rng(2)).unwrap();
        let json = serde_json::to_string(&s).unwrap();
        let back: SceneState = serde_json::from_str(&json).unwrap();
        assert_eq!(s.objects.len(), back.objects.len());
        assert_eq!(s.gripper.pos, back.gripper.pos);
    }

    #[test]
    fn target_truth_ignores_occlusion() {
        let mut s = empty_scene();
        let mut c = cube_at(0, 0.3, 0.3, 0.015);
        c.is_target = true;
        s.objects.push(c);
        s.objects.push(cube_at(1, 0.3, 0.3, 0.045));
        let v = target_truth(&s, [100, 100, 50], 0.006).unwrap();
        assert!(!v.is_empty());
    }
}
