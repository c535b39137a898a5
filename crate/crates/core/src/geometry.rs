//! Planar geometry for the unit workspace.

use serde::{Deserialize, Serialize};
use std::ops::{Add, Mul, Sub};

/// A workspace point, serialized as `[x, y]`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(from = "[f64; 2]", into = "[f64; 2]")]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn dist(self, other: Point) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn lerp(self, other: Point, t: f64) -> Point {
        Point::new(
            self.x + (other.x - self.x) * t,
            self.y + (other.y - self.y) * t,
        )
    }
}

impl From<[f64; 2]> for Point {
    fn from(v: [f64; 2]) -> Self {
        Point::new(v[0], v[1])
    }
}

impl From<Point> for [f64; 2] {
    fn from(p: Point) -> Self {
        [p.x, p.y]
    }
}

impl Add for Point {
    type Output = Point;
    fn add(self, o: Point) -> Point {
        Point::new(self.x + o.x, self.y + o.y)
    }
}

impl Sub for Point {
    type Output = Point;
    fn sub(self, o: Point) -> Point {
        Point::new(self.x - o.x, self.y - o.y)
    }
}

impl Mul<f64> for Point {
    type Output = Point;
    fn mul(self, s: f64) -> Point {
        Point::new(self.x * s, self.y * s)
    }
}

/// Axis-aligned rectangle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rect {
    pub min: Point,
    pub max: Point,
}

impl Rect {
    pub fn contains(&self, p: Point) -> bool {
        p.x >= self.min.x && p.x <= self.max.x && p.y >= self.min.y && p.y <= self.max.y
    }

    pub fn clamp(&self, p: Point) -> Point {
        Point::new(
            p.x.clamp(self.min.x, self.max.x),
            p.y.clamp(self.min.y, self.max.y),
        )
    }

    pub fn width(&self) -> f64 {
        self.max.x - self.min.x
    }

    pub fn height(&self) -> f64 {
        self.max.y - self.min.y
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Circle {
    pub center: Point,
    pub radius: f64,
}

impl Circle {
    pub fn contains(&self, p: Point) -> bool {
        self.center.dist(p) <= self.radius
    }
}

/// A wall, serialized as a pair of points.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "[Point; 2]", into = "[Point; 2]")]
pub struct Segment {
    pub a: Point,
    pub b: Point,
}

impl From<[Point; 2]> for Segment {
    fn from(v: [Point; 2]) -> Self {
        Segment { a: v[0], b: v[1] }
    }
}

impl From<Segment> for [Point; 2] {
    fn from(s: Segment) -> Self {
        [s.a, s.b]
    }
}

fn cross(o: Point, a: Point, b: Point) -> f64 {
    (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x)
}

fn on_segment(p: Point, a: Point, b: Point) -> bool {
    p.x >= a.x.min(b.x) - 1e-12
        && p.x <= a.x.max(b.x) + 1e-12
        && p.y >= a.y.min(b.y) - 1e-12
        && p.y <= a.y.max(b.y) + 1e-12
}

impl Segment {
    pub fn new(a: Point, b: Point) -> Self {
        Self { a, b }
    }

    pub fn length(&self) -> f64 {
        self.a.dist(self.b)
    }

    /// Closed-segment intersection test (touching counts).
    pub fn intersects(&self, other: &Segment) -> bool {
        let (p1, p2, p3, p4) = (self.a, self.b, other.a, other.b);
        let d1 = cross(p3, p4, p1);
        let d2 = cross(p3, p4, p2);
        let d3 = cross(p1, p2, p3);
        let d4 = cross(p1, p2, p4);
        if ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0))
            && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0))
        {
            return true;
        }
        (d1 == 0.0 && on_segment(p1, p3, p4))
            || (d2 == 0.0 && on_segment(p2, p3, p4))
            || (d3 == 0.0 && on_segment(p3, p1, p2))
            || (d4 == 0.0 && on_segment(p4, p1, p2))
    }

    pub fn distance_to(&self, p: Point) -> f64 {
        let d = self.b - self.a;
        let len2 = d.x * d.x + d.y * d.y;
        if len2 == 0.0 {
            return p.dist(self.a);
        }
        let t = (((p.x - self.a.x) * d.x + (p.y - self.a.y) * d.y) / len2).clamp(0.0, 1.0);
        p.dist(self.a + d * t)
    }
}

/// True if any consecutive pair of `points` crosses any wall.
pub fn path_crosses(points: &[Point], walls: &[Segment]) -> bool {
    points
        .windows(2)
        .any(|w| {
            let seg = Segment::new(w[0], w[1]);
            walls.iter().any(|wall| seg.intersects(wall))
        })
}

pub fn path_length(points: &[Point]) -> f64 {
    points.windows(2).map(|w| w[0].dist(w[1])).sum()
}

/// Resample a polyline at a fixed arc-length spacing.
///
/// Returns at most `max_points` points starting at `points[0]`. If the
/// polyline is shorter than the available budget the final vertex is
/// appended once; callers pad as needed.
pub fn resample_by_step(points: &[Point], step: f64, max_points: usize) -> Vec<Point> {
    let mut out = Vec::with_capacity(max_points);
    let Some(&first) = points.first() else {
        return out;
    };
    out.push(first);
    let mut seg = 0usize;
    let mut seg_pos = 0.0;
    while out.len() < max_points {
        let mut remaining = step;
        let mut done = false;
        loop {
            if seg + 1 >= points.len() {
                done = true;
                break;
            }
            let seg_len = points[seg].dist(points[seg + 1]);
            if seg_pos + remaining <= seg_len {
                seg_pos += remaining;
                break;
            }
            remaining -= seg_len - seg_pos;
            seg += 1;
            seg_pos = 0.0;
        }
        if done {
            let last = *points.last().unwrap();
            if out.last().map(|p| p.dist(last) > 1e-12).unwrap_or(true) {
                out.push(last);
            }
            break;
        }
        let a = points[seg];
        let b = points[seg + 1];
        let seg_len = a.dist(b);
        let t = if seg_len > 0.0 { seg_pos / seg_len } else { 0.0 };
        out.push(a.lerp(b, t));
    }
    out
}

/// Resample a polyline into exactly `n` points evenly spaced by arc length.
pub fn resample_uniform(points: &[Point], n: usize) -> Vec<Point> {
    assert!(n >= 2, "need at least two samples");
    let total = path_length(points);
    if points.len() < 2 || total == 0.0 {
        return vec![points.first().copied().unwrap_or_default(); n];
    }
    let mut out = Vec::with_capacity(n);
    let mut seg = 0usize;
    let mut acc = 0.0;
    for k in 0..n {
        let target = total * k as f64 / (n - 1) as f64;
        while seg + 2 < points.len() && acc + points[seg].dist(points[seg + 1]) < target {
            acc += points[seg].dist(points[seg + 1]);
            seg += 1;
        }
        let seg_len = points[seg].dist(points[seg + 1]);
        let t = if seg_len > 0.0 {
            ((target - acc) / seg_len).clamp(0.0, 1.0)
        } else {
            0.0
        };
        out.push(points[seg].lerp(points[seg + 1], t));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn crossing_segments_intersect() {
        let a = Segment::new(Point::new(0.0, 0.0), Point::new(1.0, 1.0));
        let b = Segment::new(Point::new(0.0, 1.0), Point::new(1.0, 0.0));
        assert!(a.intersects(&b));
        let c = Segment::new(Point::new(2.0, 2.0), Point::new(3.0, 3.0));
        assert!(!a.intersects(&c));
        // collinear but disjoint
        let d = Segment::new(Point::new(1.5, 1.5), Point::new(2.5, 2.5));
        assert!(!a.intersects(&d));
        // touching endpoint
        let e = Segment::new(Point::new(1.0, 1.0), Point::new(2.0, 0.0));
        assert!(a.intersects(&e));
    }

    #[test]
    fn distance_to_segment() {
        let s = Segment::new(Point::new(0.0, 0.0), Point::new(1.0, 0.0));
        assert!((s.distance_to(Point::new(0.5, 0.3)) - 0.3).abs() < 1e-12);
        assert!((s.distance_to(Point::new(2.0, 0.0)) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn resample_step_spacing() {
        let pts = [Point::new(0.0, 0.0), Point::new(1.0, 0.0), Point::new(1.0, 1.0)];
        let r = resample_by_step(&pts, 0.1, 100);
        assert_eq!(r.len(), 21);
        for w in r.windows(2) {
            // corner cut shortens one chord
            assert!(w[0].dist(w[1]) <= 0.1 + 1e-9);
        }
        assert!(r.last().unwrap().dist(Point::new(1.0, 1.0)) < 1e-9);
        let truncated = resample_by_step(&pts, 0.1, 5);
        assert_eq!(truncated.len(), 5);
    }

    #[test]
    fn resample_uniform_endpoints() {
        let pts = [Point::new(0.0, 0.0), Point::new(0.0, 2.0)];
        let r = resample_uniform(&pts, 5);
        assert_eq!(r[0], Point::new(0.0, 0.0));
        assert!((r[2].y - 1.0).abs() < 1e-12);
        assert!((r[4].y - 2.0).abs() < 1e-12);
    }
}
