//! Plain 2-D points and the couple of point-set measures used throughout.

use serde::{Deserialize, Serialize};

/// A point in the 2-D plane. Used both for spatial positions (arcsec) and
/// for frequency coordinates `(u, v)` (1/arcsec).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point2 {
    pub x: f64,
    pub y: f64,
}

impl Point2 {
    pub const ORIGIN: Point2 = Point2 { x: 0.0, y: 0.0 };

    pub fn new(x: f64, y: f64) -> Self {
        Point2 { x, y }
    }

    pub fn norm(&self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn dist(&self, other: &Point2) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    pub fn dist_sq(&self, other: &Point2) -> f64 {
        let dx = self.x - other.x;
        let dy = self.y - other.y;
        dx * dx + dy * dy
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

impl From<(f64, f64)> for Point2 {
    fn from((x, y): (f64, f64)) -> Self {
        Point2 { x, y }
    }
}

/// Smallest pairwise distance of a point set. Returns `f64::INFINITY` for
/// fewer than two points.
pub fn min_separation(points: &[Point2]) -> f64 {
    let mut best = f64::INFINITY;
    for (i, a) in points.iter().enumerate() {
        for b in &points[i + 1..] {
            let d = a.dist(b);
            if d < best {
                best = d;
            }
        }
    }
    best
}

/// Fill distance of `nodes` with respect to a probe set: the largest
/// distance from any probe point to its nearest node. Measures how well the
/// nodes cover the region sampled by the probes.
pub fn fill_distance(nodes: &[Point2], probes: &[Point2]) -> f64 {
    probes
        .iter()
        .map(|p| {
            nodes
                .iter()
                .map(|n| p.dist(n))
                .fold(f64::INFINITY, f64::min)
        })
        .fold(0.0, f64::max)
}

/// Mean nearest-neighbor distance of a point set: the typical local spacing,
/// insensitive to coverage holes. `INFINITY` for fewer than two points.
pub fn mean_nearest_neighbor(points: &[Point2]) -> f64 {
    if points.len() < 2 {
        return f64::INFINITY;
    }
    let total: f64 = points
        .iter()
        .enumerate()
        .map(|(i, p)| {
            points
                .iter()
                .enumerate()
                .filter(|(j, _)| *j != i)
                .map(|(_, q)| p.dist(q))
                .fold(f64::INFINITY, f64::min)
        })
        .sum();
    total / points.len() as f64
}
