//! Oriented boxes and rigid motions in the top-view plane.

use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use crate::math::{abs, cos, normalize_angle, sin, sqrt};

pub type Vec2 = [f64; 2];

/// Labeled-box geometry: a footprint rotated about the vertical, plus a
/// vertical extent starting at `elevation`.
///
/// `size[0]` runs along the local axis `(cos a, sin a)`, `size[1]` along
/// `(-sin a, cos a)`. The second axis is the object's "front" direction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Obb {
    pub center: Vec2,
    pub elevation: f64,
    pub size: [f64; 3],
    pub angle: f64,
}

impl Obb {
    pub fn new(center: Vec2, elevation: f64, size: [f64; 3], angle: f64) -> Self {
        Self {
            center,
            elevation,
            size,
            angle: normalize_angle(angle),
        }
    }

    pub fn axes(&self) -> (Vec2, Vec2) {
        let (s, c) = (sin(self.angle), cos(self.angle));
        ([c, s], [-s, c])
    }

    pub fn half_extents(&self) -> Vec2 {
        [self.size[0] * 0.5, self.size[1] * 0.5]
    }

    pub fn footprint_area(&self) -> f64 {
        self.size[0] * self.size[1]
    }

    pub fn top(&self) -> f64 {
        self.elevation + self.size[2]
    }

    pub fn pose(&self) -> Pose {
        Pose::new(self.angle, self.center)
    }

    /// Footprint corners in anticlockwise order.
    pub fn corners(&self) -> [Vec2; 4] {
        let (u, v) = self.axes();
        let [hx, hy] = self.half_extents();
        let c = self.center;
        let at = |a: f64, b: f64| [c[0] + u[0] * a + v[0] * b, c[1] + u[1] * a + v[1] * b];
        [at(-hx, -hy), at(hx, -hy), at(hx, hy), at(-hx, hy)]
    }

    /// Expresses a room-frame point in this box's local frame.
    pub fn to_local(&self, p: Vec2) -> Vec2 {
        self.pose().inverse().apply(p)
    }

    /// Distance from a point to the footprint boundary (zero on the boundary).
    pub fn distance_to_boundary(&self, p: Vec2) -> f64 {
        let q = self.to_local(p);
        let [hx, hy] = self.half_extents();
        let dx = abs(q[0]) - hx;
        let dy = abs(q[1]) - hy;
        if dx <= 0.0 && dy <= 0.0 {
            // inside: nearest edge
            -(if dx > dy { dx } else { dy })
        } else {
            let ox = if dx > 0.0 { dx } else { 0.0 };
            let oy = if dy > 0.0 { dy } else { 0.0 };
            sqrt(ox * ox + oy * oy)
        }
    }

    /// Area of the footprint intersection of two boxes.
    pub fn intersection_area(&self, other: &Obb) -> f64 {
        let clipped = clip_convex(&self.corners(), &other.corners());
        polygon_area(&clipped)
    }

    /// Separating-axis overlap test on the footprints. Touching counts as overlap.
    pub fn footprints_intersect(&self, other: &Obb) -> bool {
        let a = self.corners();
        let b = other.corners();
        let (u1, v1) = self.axes();
        let (u2, v2) = other.axes();
        for axis in [u1, v1, u2, v2] {
            let (amin, amax) = project(&a, axis);
            let (bmin, bmax) = project(&b, axis);
            if amax < bmin - 1e-12 || bmax < amin - 1e-12 {
                return false;
            }
        }
        true
    }

    /// Applies a rigid motion to the footprint; elevation and sizes are kept.
    pub fn transformed(&self, pose: &Pose) -> Obb {
        Obb {
            center: pose.apply(self.center),
            elevation: self.elevation,
            size: self.size,
            angle: normalize_angle(self.angle + pose.angle),
        }
    }
}

fn project(pts: &[Vec2; 4], axis: Vec2) -> (f64, f64) {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for p in pts {
        let d = p[0] * axis[0] + p[1] * axis[1];
        lo = lo.min(d);
        hi = hi.max(d);
    }
    (lo, hi)
}

/// Sutherland-Hodgman clip of `subject` by the convex, anticlockwise `clip` polygon.
pub fn clip_convex(subject: &[Vec2], clip: &[Vec2]) -> Vec<Vec2> {
    let mut out: Vec<Vec2> = subject.to_vec();
    for i in 0..clip.len() {
        if out.is_empty() {
            break;
        }
        let a = clip[i];
        let b = clip[(i + 1) % clip.len()];
        let side = |p: Vec2| (b[0] - a[0]) * (p[1] - a[1]) - (b[1] - a[1]) * (p[0] - a[0]);
        let input = core::mem::take(&mut out);
        for j in 0..input.len() {
            let cur = input[j];
            let prev = input[(j + input.len() - 1) % input.len()];
            let (sc, sp) = (side(cur), side(prev));
            if sc >= 0.0 {
                if sp < 0.0 {
                    out.push(intersect(prev, cur, sp, sc));
                }
                out.push(cur);
            } else if sp >= 0.0 {
                out.push(intersect(prev, cur, sp, sc));
            }
        }
    }
    out
}

fn intersect(p: Vec2, q: Vec2, sp: f64, sq: f64) -> Vec2 {
    let t = sp / (sp - sq);
    [p[0] + t * (q[0] - p[0]), p[1] + t * (q[1] - p[1])]
}

pub fn polygon_area(poly: &[Vec2]) -> f64 {
    if poly.len() < 3 {
        return 0.0;
    }
    let mut acc = 0.0;
    for i in 0..poly.len() {
        let p = poly[i];
        let q = poly[(i + 1) % poly.len()];
        acc += p[0] * q[1] - q[0] * p[1];
    }
    abs(acc) * 0.5
}

/// A rigid motion of the plane: rotate by `angle`, then translate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pose {
    pub angle: f64,
    pub translation: Vec2,
}

impl Pose {
    pub const IDENTITY: Pose = Pose {
        angle: 0.0,
        translation: [0.0, 0.0],
    };

    pub fn new(angle: f64, translation: Vec2) -> Self {
        Self { angle, translation }
    }

    pub fn rotate(&self, v: Vec2) -> Vec2 {
        let (s, c) = (sin(self.angle), cos(self.angle));
        [c * v[0] - s * v[1], s * v[0] + c * v[1]]
    }

    pub fn apply(&self, p: Vec2) -> Vec2 {
        let r = self.rotate(p);
        [r[0] + self.translation[0], r[1] + self.translation[1]]
    }

    /// `self ∘ other`: apply `other` first.
    pub fn compose(&self, other: &Pose) -> Pose {
        Pose {
            angle: normalize_angle(self.angle + other.angle),
            translation: self.apply(other.translation),
        }
    }

    pub fn inverse(&self) -> Pose {
        let inv = Pose {
            angle: -self.angle,
            translation: [0.0, 0.0],
        };
        let t = inv.rotate(self.translation);
        Pose {
            angle: normalize_angle(-self.angle),
            translation: [-t[0], -t[1]],
        }
    }
}
