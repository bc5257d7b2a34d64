//! Small fixed-size linear algebra and 2D convex geometry helpers.

use serde::{Deserialize, Serialize};

/// 3D vector, f64 components.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Vec3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Vec3 {
    pub const ZERO: Vec3 = Vec3 {
        x: 0.0,
        y: 0.0,
        z: 0.0,
    };

    pub fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    pub fn dot(self, o: Vec3) -> f64 {
        self.x * o.x + self.y * o.y + self.z * o.z
    }

    pub fn norm(self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn normalized(self) -> Vec3 {
        let n = self.norm();
        if n <= f64::EPSILON {
            Vec3::ZERO
        } else {
            self * (1.0 / n)
        }
    }

    pub fn xy(self) -> (f64, f64) {
        (self.x, self.y)
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }
}

impl std::ops::Add for Vec3 {
    type Output = Vec3;
    fn add(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x + o.x, self.y + o.y, self.z + o.z)
    }
}

impl std::ops::Sub for Vec3 {
    type Output = Vec3;
    fn sub(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x - o.x, self.y - o.y, self.z - o.z)
    }
}

impl std::ops::Mul<f64> for Vec3 {
    type Output = Vec3;
    fn mul(self, s: f64) -> Vec3 {
        Vec3::new(self.x * s, self.y * s, self.z * s)
    }
}

impl std::ops::Neg for Vec3 {
    type Output = Vec3;
    fn neg(self) -> Vec3 {
        Vec3::new(-self.x, -self.y, -self.z)
    }
}

/// Row-major 3x3 rotation matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Mat3(pub [f64; 9]);

impl Mat3 {
    pub const IDENTITY: Mat3 = Mat3([1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0]);

    /// Rotation about the world z axis.
    pub fn rot_z(a: f64) -> Mat3 {
        let (s, c) = a.sin_cos();
        Mat3([c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0])
    }

    /// Rotation about the world x axis.
    pub fn rot_x(a: f64) -> Mat3 {
        let (s, c) = a.sin_cos();
        Mat3([1.0, 0.0, 0.0, 0.0, c, -s, 0.0, s, c])
    }

    pub fn mul(self, o: Mat3) -> Mat3 {
        let a = &self.0;
        let b = &o.0;
        let mut r = [0.0; 9];
        for i in 0..3 {
            for j in 0..3 {
                r[3 * i + j] = a[3 * i] * b[j] + a[3 * i + 1] * b[3 + j] + a[3 * i + 2] * b[6 + j];
            }
        }
        Mat3(r)
    }

    pub fn apply(self, v: Vec3) -> Vec3 {
        let m = &self.0;
        Vec3::new(
            m[0] * v.x + m[1] * v.y + m[2] * v.z,
            m[3] * v.x + m[4] * v.y + m[5] * v.z,
            m[6] * v.x + m[7] * v.y + m[8] * v.z,
        )
    }

    pub fn transpose(self) -> Mat3 {
        let m = &self.0;
        Mat3([m[0], m[3], m[6], m[1], m[4], m[7], m[2], m[5], m[8]])
    }

    /// Column `i` as a vector.
    pub fn col(self, i: usize) -> Vec3 {
        let m = &self.0;
        Vec3::new(m[i], m[3 + i], m[6 + i])
    }
}

/// Rotate the xy pair by `angle` about the origin.
pub fn rotate_xy(x: f64, y: f64, angle: f64) -> (f64, f64) {
    let (s, c) = angle.sin_cos();
    (c * x - s * y, s * x + c * y)
}

/// Wrap an angle to (-pi, pi].
pub fn wrap_angle(a: f64) -> f64 {
    let mut a = a % std::f64::consts::TAU;
    if a > std::f64::consts::PI {
        a -= std::f64::consts::TAU;
    } else if a <= -std::f64::consts::PI {
        a += std::f64::consts::TAU;
    }
    a
}

/// Convex footprint of an object in the xy plane, world coordinates.
#[derive(Debug, Clone)]
pub enum Footprint {
    /// Counter-clockwise convex polygon.
    Poly(Vec<(f64, f64)>),
    Circle {
        cx: f64,
        cy: f64,
        r: f64,
    },
}

impl Footprint {
    pub fn contains(&self, px: f64, py: f64) -> bool {
        match self {
            Footprint::Circle { cx, cy, r } => {
                let dx = px - cx;
                let dy = py - cy;
                dx * dx + dy * dy <= r * r
            }
            Footprint::Poly(v) => {
                for i in 0..v.len() {
                    let (x0, y0) = v[i];
                    let (x1, y1) = v[(i + 1) % v.len()];
                    // CCW winding: inside points have non-negative cross products.
                    if (x1 - x0) * (py - y0) - (y1 - y0) * (px - x0) < -1e-12 {
                        return false;
                    }
                }
                true
            }
        }
    }

    /// Axis-aligned bounding box (min_x, min_y, max_x, max_y).
    pub fn aabb(&self) -> (f64, f64, f64, f64) {
        match self {
            Footprint::Circle { cx, cy, r } => (cx - r, cy - r, cx + r, cy + r),
            Footprint::Poly(v) => {
                let mut bb = (
                    f64::INFINITY,
                    f64::INFINITY,
                    f64::NEG_INFINITY,
                    f64::NEG_INFINITY,
                );
                for &(x, y) in v {
                    bb.0 = bb.0.min(x);
                    bb.1 = bb.1.min(y);
                    bb.2 = bb.2.max(x);
                    bb.3 = bb.3.max(y);
                }
                bb
            }
        }
    }

    pub fn translated(&self, dx: f64, dy: f64) -> Footprint {
        match self {
            Footprint::Circle { cx, cy, r } => Footprint::Circle {
                cx: cx + dx,
                cy: cy + dy,
                r: *r,
            },
            Footprint::Poly(v) => {
                Footprint::Poly(v.iter().map(|&(x, y)| (x + dx, y + dy)).collect())
            }
        }
    }
}

fn project_poly(v: &[(f64, f64)], ax: f64, ay: f64) -> (f64, f64) {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for &(x, y) in v {
        let p = x * ax + y * ay;
        lo = lo.min(p);
        hi = hi.max(p);
    }
    (lo, hi)
}

fn poly_poly_overlap(a: &[(f64, f64)], b: &[(f64, f64)], shrink: f64) -> bool {
    // Separating axis test over both polygons' edge normals. `shrink` lets
    // callers ignore contact-tolerance-deep penetration.
    for (p, q) in [(a, b), (b, a)] {
        for i in 0..p.len() {
            let (x0, y0) = p[i];
            let (x1, y1) = p[(i + 1) % p.len()];
            let (ax, ay) = (y0 - y1, x1 - x0); // outward for CCW winding
            let n = (ax * ax + ay * ay).sqrt();
            if n <= f64::EPSILON {
                continue;
            }
            let (ax, ay) = (ax / n, ay / n);
            let (alo, ahi) = project_poly(p, ax, ay);
            let (blo, bhi) = project_poly(q, ax, ay);
            if ahi - blo <= shrink || bhi - alo <= shrink {
                return false;
            }
        }
    }
    true
}

fn poly_circle_overlap(v: &[(f64, f64)], cx: f64, cy: f64, r: f64, shrink: f64) -> bool {
    // Distance from circle center to the polygon (0 when inside).
    let mut inside = true;
    let mut min_d = f64::INFINITY;
    for i in 0..v.len() {
        let (x0, y0) = v[i];
        let (x1, y1) = v[(i + 1) % v.len()];
        if (x1 - x0) * (cy - y0) - (y1 - y0) * (cx - x0) < 0.0 {
            inside = false;
        }
        // Distance to the segment.
        let (ex, ey) = (x1 - x0, y1 - y0);
        let len2 = ex * ex + ey * ey;
        let t = if len2 <= f64::EPSILON {
            0.0
        } else {
            (((cx - x0) * ex + (cy - y0) * ey) / len2).clamp(0.0, 1.0)
        };
        let (px, py) = (x0 + t * ex, y0 + t * ey);
        let d = ((cx - px).powi(2) + (cy - py).powi(2)).sqrt();
        min_d = min_d.min(d);
    }
    if inside {
        return true;
    }
    min_d < r - shrink
}

/// Overlap test treating penetration of at most `shrink` as separate.
pub fn footprints_overlap(a: &Footprint, b: &Footprint, shrink: f64) -> bool {
    let (a0, a1, a2, a3) = a.aabb();
    let (b0, b1, b2, b3) = b.aabb();
    if a2 - b0 <= shrink || b2 - a0 <= shrink || a3 - b1 <= shrink || b3 - a1 <= shrink {
        return false;
    }
    match (a, b) {
        (Footprint::Poly(p), Footprint::Poly(q)) => poly_poly_overlap(p, q, shrink),
        (Footprint::Poly(p), Footprint::Circle { cx, cy, r })
        | (Footprint::Circle { cx, cy, r }, Footprint::Poly(p)) => {
            poly_circle_overlap(p, *cx, *cy, *r, shrink)
        }
        (
            Footprint::Circle { cx, cy, r },
            Footprint::Circle {
                cx: dx,
                cy: dy,
                r: s,
            },
        ) => {
            let d = ((cx - dx).powi(2) + (cy - dy).powi(2)).sqrt();
            d < r + s - shrink
        }
    }
}
