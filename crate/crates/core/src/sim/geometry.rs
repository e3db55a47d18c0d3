use std::ops::{Add, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Vec2 {
    pub x: f64,
    pub y: f64,
}

impl Vec2 {
    pub const ZERO: Vec2 = Vec2 { x: 0.0, y: 0.0 };

    pub const fn new(x: f64, y: f64) -> Self {
        Vec2 { x, y }
    }

    pub fn from_angle(angle: f64) -> Self {
        let (s, c) = angle.sin_cos();
        Vec2 { x: c, y: s }
    }

    pub fn dot(self, other: Vec2) -> f64 {
        self.x * other.x + self.y * other.y
    }

    pub fn cross(self, other: Vec2) -> f64 {
        self.x * other.y - self.y * other.x
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn norm_sq(self) -> f64 {
        self.dot(self)
    }

    pub fn distance(self, other: Vec2) -> f64 {
        (self - other).norm()
    }
}

impl Add for Vec2 {
    type Output = Vec2;
    fn add(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x + o.x, self.y + o.y)
    }
}

impl Sub for Vec2 {
    type Output = Vec2;
    fn sub(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x - o.x, self.y - o.y)
    }
}

impl Mul<f64> for Vec2 {
    type Output = Vec2;
    fn mul(self, s: f64) -> Vec2 {
        Vec2::new(self.x * s, self.y * s)
    }
}

impl Neg for Vec2 {
    type Output = Vec2;
    fn neg(self) -> Vec2 {
        Vec2::new(-self.x, -self.y)
    }
}

/// Axis-aligned box.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Aabb {
    pub min: Vec2,
    pub max: Vec2,
}

impl Aabb {
    pub fn contains(&self, p: Vec2) -> bool {
        p.x >= self.min.x && p.x <= self.max.x && p.y >= self.min.y && p.y <= self.max.y
    }

    pub fn contains_strictly(&self, p: Vec2) -> bool {
        p.x > self.min.x && p.x < self.max.x && p.y > self.min.y && p.y < self.max.y
    }

    pub fn width(&self) -> f64 {
        self.max.x - self.min.x
    }

    pub fn height(&self) -> f64 {
        self.max.y - self.min.y
    }

    fn overlaps(&self, other: &Aabb) -> bool {
        self.min.x <= other.max.x
            && other.min.x <= self.max.x
            && self.min.y <= other.max.y
            && other.min.y <= self.max.y
    }

    fn around(a: Vec2, b: Vec2, margin: f64) -> Aabb {
        Aabb {
            min: Vec2::new(a.x.min(b.x) - margin, a.y.min(b.y) - margin),
            max: Vec2::new(a.x.max(b.x) + margin, a.y.max(b.y) + margin),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Segment {
    pub a: Vec2,
    pub b: Vec2,
    bbox: Aabb,
}

impl Segment {
    pub fn new(a: Vec2, b: Vec2) -> Self {
        Segment {
            a,
            b,
            bbox: Aabb::around(a, b, 0.0),
        }
    }

    pub fn length(&self) -> f64 {
        self.a.distance(self.b)
    }

    /// Closest point on the segment to `p`.
    pub fn closest_point(&self, p: Vec2) -> Vec2 {
        let ab = self.b - self.a;
        let len_sq = ab.norm_sq();
        if len_sq == 0.0 {
            return self.a;
        }
        let t = ((p - self.a).dot(ab) / len_sq).clamp(0.0, 1.0);
        self.a + ab * t
    }

    pub fn distance_to(&self, p: Vec2) -> f64 {
        p.distance(self.closest_point(p))
    }

    /// Distance along the ray `origin + t * dir` (unit `dir`) at which it
    /// first meets the segment, if it does so within `max_t`.
    pub fn ray_hit(&self, origin: Vec2, dir: Vec2, max_t: f64) -> Option<f64> {
        let ray_box = Aabb::around(origin, origin + dir * max_t, 0.0);
        if !ray_box.overlaps(&self.bbox) {
            return None;
        }
        let e = self.b - self.a;
        let denom = dir.cross(e);
        if denom == 0.0 {
            return None;
        }
        let w = self.a - origin;
        let t = w.cross(e) / denom;
        let u = w.cross(dir) / denom;
        if t >= 0.0 && t <= max_t && (0.0..=1.0).contains(&u) {
            Some(t)
        } else {
            None
        }
    }

    /// Whether the closed segment `p`-`q` touches this segment.
    pub fn intersects(&self, p: Vec2, q: Vec2) -> bool {
        if !Aabb::around(p, q, 0.0).overlaps(&self.bbox) {
            return false;
        }
        let d1 = orient(self.a, self.b, p);
        let d2 = orient(self.a, self.b, q);
        let d3 = orient(p, q, self.a);
        let d4 = orient(p, q, self.b);
        if ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0))
            && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0))
        {
            return true;
        }
        (d1 == 0.0 && on_box(self.a, self.b, p))
            || (d2 == 0.0 && on_box(self.a, self.b, q))
            || (d3 == 0.0 && on_box(p, q, self.a))
            || (d4 == 0.0 && on_box(p, q, self.b))
    }

    /// Cheap rejection: can any point of the segment lie within `r` of `p`?
    pub(crate) fn near(&self, p: Vec2, r: f64) -> bool {
        p.x >= self.bbox.min.x - r
            && p.x <= self.bbox.max.x + r
            && p.y >= self.bbox.min.y - r
            && p.y <= self.bbox.max.y + r
    }
}

fn orient(a: Vec2, b: Vec2, c: Vec2) -> f64 {
    (b - a).cross(c - a)
}

fn on_box(a: Vec2, b: Vec2, p: Vec2) -> bool {
    p.x >= a.x.min(b.x) && p.x <= a.x.max(b.x) && p.y >= a.y.min(b.y) && p.y <= a.y.max(b.y)
}

/// Wraps an angle into `[-pi, pi)`.
pub fn normalize_angle(angle: f64) -> f64 {
    use std::f64::consts::{PI, TAU};
    let mut a = (angle + PI).rem_euclid(TAU) - PI;
    if a >= PI {
        a -= TAU;
    }
    if a < -PI {
        a = -PI;
    }
    a
}
