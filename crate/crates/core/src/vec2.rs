//! Small planar vector type used by the geometry and the walker.

use serde::{Deserialize, Serialize};
use std::ops::{Add, AddAssign, Mul, Neg, Sub};

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Vec2 {
    pub x: f64,
    pub y: f64,
}

impl Vec2 {
    pub const ZERO: Vec2 = Vec2 { x: 0.0, y: 0.0 };

    #[inline]
    pub const fn new(x: f64, y: f64) -> Self {
        Vec2 { x, y }
    }

    #[inline]
    pub fn dot(self, o: Vec2) -> f64 {
        self.x * o.x + self.y * o.y
    }

    /// z-component of the 3D cross product.
    #[inline]
    pub fn cross(self, o: Vec2) -> f64 {
        self.x * o.y - self.y * o.x
    }

    #[inline]
    pub fn norm2(self) -> f64 {
        self.dot(self)
    }

    #[inline]
    pub fn norm(self) -> f64 {
        self.norm2().sqrt()
    }

    /// Rotation by +90 degrees.
    #[inline]
    pub fn perp(self) -> Vec2 {
        Vec2::new(-self.y, self.x)
    }

    /// Complex multiplication, treating vectors as x + iy.
    #[inline]
    pub fn cmul(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x * o.x - self.y * o.y, self.x * o.y + self.y * o.x)
    }

    pub fn from_polar(r: f64, angle: f64) -> Vec2 {
        Vec2::new(r * angle.cos(), r * angle.sin())
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

impl Add for Vec2 {
    type Output = Vec2;
    #[inline]
    fn add(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x + o.x, self.y + o.y)
    }
}

impl AddAssign for Vec2 {
    #[inline]
    fn add_assign(&mut self, o: Vec2) {
        self.x += o.x;
        self.y += o.y;
    }
}

impl Sub for Vec2 {
    type Output = Vec2;
    #[inline]
    fn sub(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x - o.x, self.y - o.y)
    }
}

impl Mul<f64> for Vec2 {
    type Output = Vec2;
    #[inline]
    fn mul(self, s: f64) -> Vec2 {
        Vec2::new(self.x * s, self.y * s)
    }
}

impl Neg for Vec2 {
    type Output = Vec2;
    #[inline]
    fn neg(self) -> Vec2 {
        Vec2::new(-self.x, -self.y)
    }
}

/// Closest point on segment [a, b] to p, with its parameter in [0, 1].
#[inline]
pub fn closest_on_segment(p: Vec2, a: Vec2, b: Vec2) -> (Vec2, f64) {
    let d = b - a;
    let len2 = d.norm2();
    if len2 == 0.0 {
        return (a, 0.0);
    }
    let s = ((p - a).dot(d) / len2).clamp(0.0, 1.0);
    (a + d * s, s)
}

/// Parameter t in [0, 1] along p->q where it crosses segment [a, b], if it does.
///
/// Touching at an endpoint of [a, b] counts as a crossing; collinear overlap does not.
#[inline]
pub fn segment_crossing(p: Vec2, q: Vec2, a: Vec2, b: Vec2) -> Option<f64> {
    let r = q - p;
    let s = b - a;
    let denom = r.cross(s);
    if denom == 0.0 {
        return None;
    }
    let ap = a - p;
    let t = ap.cross(s) / denom;
    let u = ap.cross(r) / denom;
    if (0.0..=1.0).contains(&t) && (0.0..=1.0).contains(&u) {
        Some(t)
    } else {
        None
    }
}

/// Mirror image of p across the line through a and b.
#[inline]
pub fn mirror_across(p: Vec2, a: Vec2, b: Vec2) -> Vec2 {
    let d = b - a;
    let len2 = d.norm2();
    let s = (p - a).dot(d) / len2;
    let foot = a + d * s;
    foot * 2.0 - p
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn crossing_of_perpendicular_segments() {
        let t = segment_crossing(
            Vec2::new(0.5, -1.0),
            Vec2::new(0.5, 1.0),
            Vec2::new(0.0, 0.0),
            Vec2::new(1.0, 0.0),
        );
        assert!((t.unwrap() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn parallel_segments_do_not_cross() {
        let t = segment_crossing(
            Vec2::new(0.0, 1.0),
            Vec2::new(1.0, 1.0),
            Vec2::new(0.0, 0.0),
            Vec2::new(1.0, 0.0),
        );
        assert!(t.is_none());
    }

    #[test]
    fn mirror_is_an_involution() {
        let a = Vec2::new(0.1, 0.2);
        let b = Vec2::new(0.7, -0.4);
        let p = Vec2::new(0.3, 0.9);
        let q = mirror_across(mirror_across(p, a, b), a, b);
        assert!((p - q).norm() < 1e-14);
    }

    #[test]
    fn complex_product_rotates() {
        let i = Vec2::new(0.0, 1.0);
        assert_eq!(Vec2::new(1.0, 0.0).cmul(i), i);
    }
}
