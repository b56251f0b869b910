//! 2D primitives and the segment-intersection test that decides occlusion.

use serde::{Deserialize, Serialize};

/// A point in metres.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; 2]", into = "[f64; 2]")]
pub struct Point2 {
    pub x: f64,
    pub y: f64,
}

impl Point2 {
    pub const fn new(x: f64, y: f64) -> Self {
        Point2 { x, y }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }

    pub fn dist(&self, other: Point2) -> f64 {
        let dx = self.x - other.x;
        let dy = self.y - other.y;
        (dx * dx + dy * dy).sqrt()
    }
}

impl TryFrom<[f64; 2]> for Point2 {
    type Error = String;

    fn try_from(v: [f64; 2]) -> Result<Self, String> {
        if !v[0].is_finite() || !v[1].is_finite() {
            return Err(format!("point coordinates must be finite, got {v:?}"));
        }
        Ok(Point2::new(v[0], v[1]))
    }
}

impl From<Point2> for [f64; 2] {
    fn from(p: Point2) -> [f64; 2] {
        [p.x, p.y]
    }
}

/// A wall: closed segment between two distinct points.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Segment2 {
    pub a: Point2,
    pub b: Point2,
}

impl Segment2 {
    pub fn new(a: Point2, b: Point2) -> Self {
        Segment2 { a, b }
    }
}

/// Axis-aligned rectangle in metres.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Aabb {
    pub min_x: f64,
    pub min_y: f64,
    pub max_x: f64,
    pub max_y: f64,
}

impl Aabb {
    pub fn new(min_x: f64, min_y: f64, max_x: f64, max_y: f64) -> Self {
        Aabb {
            min_x,
            min_y,
            max_x,
            max_y,
        }
    }

    pub fn is_valid(&self) -> bool {
        self.min_x.is_finite()
            && self.min_y.is_finite()
            && self.max_x.is_finite()
            && self.max_y.is_finite()
            && self.min_x <= self.max_x
            && self.min_y <= self.max_y
    }

    pub fn contains(&self, p: Point2) -> bool {
        p.x >= self.min_x && p.x <= self.max_x && p.y >= self.min_y && p.y <= self.max_y
    }

    /// Componentwise clamp into the rectangle.
    pub fn clamp(&self, p: Point2) -> Point2 {
        Point2::new(
            p.x.clamp(self.min_x, self.max_x),
            p.y.clamp(self.min_y, self.max_y),
        )
    }
}

/// Sign of the cross product (b - a) x (c - a).
fn orientation(a: Point2, b: Point2, c: Point2) -> f64 {
    (b.x - a.x) * (c.y - a.y) - (b.y - a.y) * (c.x - a.x)
}

/// True when `p` lies on the closed segment `ab`, assuming a, b, p collinear.
fn on_segment(a: Point2, b: Point2, p: Point2) -> bool {
    p.x >= a.x.min(b.x) && p.x <= a.x.max(b.x) && p.y >= a.y.min(b.y) && p.y <= a.y.max(b.y)
}

/// True iff the closed segments share at least one point. Touching endpoints
/// and collinear overlap both count: occlusion is decided conservatively.
pub fn segments_intersect(s1: Segment2, s2: Segment2) -> bool {
    let d1 = orientation(s2.a, s2.b, s1.a);
    let d2 = orientation(s2.a, s2.b, s1.b);
    let d3 = orientation(s1.a, s1.b, s2.a);
    let d4 = orientation(s1.a, s1.b, s2.b);

    if ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0))
        && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0))
    {
        return true;
    }

    (d1 == 0.0 && on_segment(s2.a, s2.b, s1.a))
        || (d2 == 0.0 && on_segment(s2.a, s2.b, s1.b))
        || (d3 == 0.0 && on_segment(s1.a, s1.b, s2.a))
        || (d4 == 0.0 && on_segment(s1.a, s1.b, s2.b))
}
