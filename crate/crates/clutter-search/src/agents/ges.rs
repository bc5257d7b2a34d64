//! Grid exhaustive search baseline.
//!
//! The workspace is covered by a regular lattice of waypoints one maximum
//! translation apart. A nearest-neighbor tour from the start, improved by
//! 2-opt, orders the visit; the gripper then sweeps the route at a fixed low
//! height (collider bottom just above the lowest object top) so stacked
//! objects are pushed off along the way. The sweep terminates early once
//! enough of the target has been seen, or claims no-target after the route
//! is exhausted.

use serde::{Deserialize, Serialize};

use crate::env::{Action, Env, MAX_ROTATION, MAX_TRANSLATION};
use crate::math::{rotate_xy, wrap_angle};
use crate::scene::{GRIPPER_HALF, GRIPPER_Z_MIN, Workspace};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GesConfig {
    /// Waypoint spacing; kept at the per-step translation limit.
    pub spacing: f64,
    /// Minimum lattice distance from the walls.
    pub margin: f64,
    /// Clearance between the collider bottom and the lowest object top.
    pub clearance: f64,
    /// Target-seen fraction above which the sweep terminates.
    pub seen_threshold: f64,
}

impl Default for GesConfig {
    fn default() -> Self {
        Self {
            spacing: MAX_TRANSLATION,
            margin: 0.05,
            clearance: 0.005,
            seen_threshold: 0.2,
        }
    }
}

/// Regular lattice of waypoints covering the workspace interior, centered so
/// the margins are symmetric.
pub fn grid_nodes(ws: &Workspace, spacing: f64, margin: f64) -> Vec<(f64, f64)> {
    let span = (ws.side - 2.0 * margin).max(0.0);
    let count = (span / spacing).floor() as usize + 1;
    let offset = (ws.side - (count - 1) as f64 * spacing) / 2.0;
    let mut nodes = Vec::with_capacity(count * count);
    for iy in 0..count {
        for ix in 0..count {
            nodes.push((offset + ix as f64 * spacing, offset + iy as f64 * spacing));
        }
    }
    nodes
}

fn dist(a: (f64, f64), b: (f64, f64)) -> f64 {
    (a.0 - b.0).hypot(a.1 - b.1)
}

pub fn tour_length(nodes: &[(f64, f64)], tour: &[usize]) -> f64 {
    tour.windows(2)
        .map(|w| dist(nodes[w[0]], nodes[w[1]]))
        .sum()
}

/// Nearest-neighbor open tour starting at the node closest to `start`.
/// Distance ties break toward the lower node index.
pub fn nearest_neighbor_tour(nodes: &[(f64, f64)], start: (f64, f64)) -> Vec<usize> {
    let n = nodes.len();
    let mut visited = vec![false; n];
    let mut tour = Vec::with_capacity(n);
    let first = (0..n)
        .min_by(|&a, &b| {
            dist(nodes[a], start)
                .partial_cmp(&dist(nodes[b], start))
                .unwrap()
        })
        .expect("at least one node");
    visited[first] = true;
    tour.push(first);
    let mut cur = first;
    for _ in 1..n {
        let next = (0..n)
            .filter(|&i| !visited[i])
            .min_by(|&a, &b| {
                dist(nodes[a], nodes[cur])
                    .partial_cmp(&dist(nodes[b], nodes[cur]))
                    .unwrap()
            })
            .unwrap();
        visited[next] = true;
        tour.push(next);
        cur = next;
    }
    tour
}

/// 2-opt improvement for an open path: repeatedly apply the segment reversal
/// with the largest length reduction until no exchange shortens the path.
/// Prefix and suffix reversals are part of the neighborhood (they change one
/// boundary edge each), so the returned path may start at a different node.
/// Never lengthens the input.
pub fn two_opt(nodes: &[(f64, f64)], tour: &[usize]) -> Vec<usize> {
    let mut tour = tour.to_vec();
    let n = tour.len();
    if n < 3 {
        return tour;
    }
    loop {
        let mut best_delta = -1e-12;
        let mut best: Option<(usize, usize)> = None;
        for i in 0..n - 1 {
            for j in i + 1..n {
                if i == 0 && j == n - 1 {
                    continue; // whole-path reversal never changes the length
                }
                // Reverse tour[i..=j]: edges (i-1, i) and (j, j+1) change.
                let mut delta = 0.0;
                if i > 0 {
                    delta += dist(nodes[tour[i - 1]], nodes[tour[j]])
                        - dist(nodes[tour[i - 1]], nodes[tour[i]]);
                }
                if j + 1 < n {
                    delta += dist(nodes[tour[i]], nodes[tour[j + 1]])
                        - dist(nodes[tour[j]], nodes[tour[j + 1]]);
                }
                if delta < best_delta {
                    best_delta = delta;
                    best = Some((i, j));
                }
            }
        }
        match best {
            Some((i, j)) => tour[i..=j].reverse(),
            None => break,
        }
    }
    tour
}

/// Planned sweep: waypoints, visit order, progress cursor, sweep height.
#[derive(Debug, Clone)]
pub struct GesPlan {
    pub nodes: Vec<(f64, f64)>,
    pub route: Vec<usize>,
    pub cursor: usize,
    pub sweep_z: f64,
}

/// Build the sweep plan from the gripper's current position.
pub fn ges_plan(ws: &Workspace, start: (f64, f64), cfg: &GesConfig, sweep_z: f64) -> GesPlan {
    let nodes = grid_nodes(ws, cfg.spacing, cfg.margin);
    let tour = nearest_neighbor_tour(&nodes, start);
    let route = two_opt(&nodes, &tour);
    GesPlan {
        nodes,
        route,
        cursor: 0,
        sweep_z,
    }
}

pub struct GesAgent {
    pub cfg: GesConfig,
    plan: Option<GesPlan>,
}

impl GesAgent {
    pub fn new(cfg: GesConfig) -> Self {
        Self { cfg, plan: None }
    }

    pub fn plan(&self) -> Option<&GesPlan> {
        self.plan.as_ref()
    }
}

impl super::Agent for GesAgent {
    fn name(&self) -> &'static str {
        "ges"
    }

    fn begin_episode(&mut self, env: &Env, _seed: u64) {
        let scene = env.scene();
        let ws = scene.config.workspace;
        // Collider bottom rides just above the lowest object top.
        let sweep_z = (scene.lowest_top() + self.cfg.clearance + GRIPPER_HALF.z)
            .clamp(GRIPPER_Z_MIN, ws.wall_height);
        let g = scene.gripper;
        self.plan = Some(ges_plan(&ws, (g.pos.x, g.pos.y), &self.cfg, sweep_z));
    }

    fn act(&mut self, env: &Env) -> Action {
        if env.target_truth().is_some() && env.target_seen_fraction() > self.cfg.seen_threshold {
            return Action::terminate();
        }
        let plan = self.plan.as_mut().expect("begin_episode not called");
        let g = env.gripper();
        let tol = 1e-6;
        while plan.cursor < plan.route.len() {
            let node = plan.nodes[plan.route[plan.cursor]];
            let reached = (g.pos.x - node.0).abs() < tol
                && (g.pos.y - node.1).abs() < tol
                && (g.pos.z - plan.sweep_z).abs() < tol;
            if reached {
                plan.cursor += 1;
            } else {
                break;
            }
        }
        if plan.cursor >= plan.route.len() {
            return Action::terminate();
        }
        let node = plan.nodes[plan.route[plan.cursor]];
        let (dx, dy) = (node.0 - g.pos.x, node.1 - g.pos.y);
        let (ex, ey) = rotate_xy(dx, dy, -g.yaw);
        Action {
            dx: ex.clamp(-MAX_TRANSLATION, MAX_TRANSLATION),
            dy: ey.clamp(-MAX_TRANSLATION, MAX_TRANSLATION),
            dz: (plan.sweep_z - g.pos.z).clamp(-MAX_TRANSLATION, MAX_TRANSLATION),
            droll: (-g.roll).clamp(-MAX_ROTATION, MAX_ROTATION),
            dyaw: wrap_angle(0.0),
            terminate: false,
        }
    }
}
