//! Planar geometry for field-of-view footprints.
//!
//! A field of view is an oriented rectangle centred on the vehicle pose. The
//! overlap between two footprints is computed by clipping one convex polygon
//! against every half-plane of the other and taking the shoelace area of the
//! result.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

const EPS: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Point { x, y }
    }

    fn sub(self, o: Point) -> Point {
        Point::new(self.x - o.x, self.y - o.y)
    }

    fn cross(self, o: Point) -> f64 {
        self.x * o.y - self.y * o.x
    }
}

/// Wraps an angle into `[-pi, pi)`.
pub fn normalize_angle(theta: f64) -> f64 {
    let wrapped = (theta + PI).rem_euclid(2.0 * PI) - PI;
    // rem_euclid can round up to exactly 2*pi for tiny negative inputs
    if wrapped >= PI {
        wrapped - 2.0 * PI
    } else {
        wrapped
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pose2D {
    pub x: f64,
    pub y: f64,
    /// Radians in `[-pi, pi)`.
    pub heading: f64,
}

impl Pose2D {
    pub fn new(x: f64, y: f64, heading: f64) -> Self {
        Pose2D {
            x,
            y,
            heading: normalize_angle(heading),
        }
    }

    pub fn position(&self) -> Point {
        Point::new(self.x, self.y)
    }

    /// Maps a point from this pose's local frame to the world frame.
    pub fn to_world(&self, local: Point) -> Point {
        let (s, c) = self.heading.sin_cos();
        Point::new(self.x + c * local.x - s * local.y, self.y + s * local.x + c * local.y)
    }

    /// Maps a world point into this pose's local frame.
    pub fn to_local(&self, world: Point) -> Point {
        let (s, c) = self.heading.sin_cos();
        let dx = world.x - self.x;
        let dy = world.y - self.y;
        Point::new(c * dx + s * dy, -s * dx + c * dy)
    }

    /// Expresses `other` relative to this pose.
    pub fn relative(&self, other: &Pose2D) -> Pose2D {
        let p = self.to_local(other.position());
        Pose2D::new(p.x, p.y, other.heading - self.heading)
    }

    /// Composes a pose given in this pose's frame into the world frame.
    pub fn compose(&self, local: &Pose2D) -> Pose2D {
        let p = self.to_world(local.position());
        Pose2D::new(p.x, p.y, self.heading + local.heading)
    }
}

/// Rectangle of `length` (along the heading) by `width`, centred on a pose.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OrientedRect {
    pub center: Pose2D,
    pub length: f64,
    pub width: f64,
}

impl OrientedRect {
    pub fn new(center: Pose2D, length: f64, width: f64) -> crate::Result<Self> {
        if !(length > 0.0 && width > 0.0 && length.is_finite() && width.is_finite()) {
            return Err(crate::Error::InvalidArgument(format!(
                "rectangle sides must be positive and finite, got {length} x {width}"
            )));
        }
        if !(center.x.is_finite() && center.y.is_finite() && center.heading.is_finite()) {
            return Err(crate::Error::InvalidArgument("rectangle center must be finite".into()));
        }
        Ok(OrientedRect { center, length, width })
    }

    /// Square field of view of side `side` centred on `pose`.
    pub fn square(pose: Pose2D, side: f64) -> crate::Result<Self> {
        Self::new(pose, side, side)
    }

    pub fn area(&self) -> f64 {
        self.length * self.width
    }

    pub fn contains(&self, p: Point) -> bool {
        let local = self.center.to_local(p);
        local.x.abs() <= self.length / 2.0 && local.y.abs() <= self.width / 2.0
    }
}

/// Counter-clockwise convex polygon; empty means no area.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ConvexPolygon {
    vertices: Vec<Point>,
}

impl ConvexPolygon {
    pub fn empty() -> Self {
        ConvexPolygon::default()
    }

    /// Builds a polygon from CCW vertices, removing duplicates and collinear
    /// points. Fewer than three surviving vertices yield the empty polygon.
    pub fn from_ccw(vertices: Vec<Point>) -> Self {
        let mut dedup: Vec<Point> = Vec::with_capacity(vertices.len());
        for v in vertices {
            if dedup
                .last()
                .is_none_or(|l| (l.x - v.x).abs() > EPS || (l.y - v.y).abs() > EPS)
            {
                dedup.push(v);
            }
        }
        while dedup.len() > 1 {
            let (f, l) = (dedup[0], dedup[dedup.len() - 1]);
            if (f.x - l.x).abs() <= EPS && (f.y - l.y).abs() <= EPS {
                dedup.pop();
            } else {
                break;
            }
        }
        // drop collinear vertices until stable
        let mut changed = true;
        while changed && dedup.len() >= 3 {
            changed = false;
            let n = dedup.len();
            for i in 0..n {
                let prev = dedup[(i + n - 1) % n];
                let cur = dedup[i];
                let next = dedup[(i + 1) % n];
                let (u, w) = (cur.sub(prev), next.sub(cur));
                let norm = (u.x.hypot(u.y) * w.x.hypot(w.y)).max(f64::MIN_POSITIVE);
                if u.cross(w).abs() <= 1e-12 * norm {
                    dedup.remove(i);
                    changed = true;
                    break;
                }
            }
        }
        if dedup.len() < 3 {
            return ConvexPolygon::empty();
        }
        ConvexPolygon { vertices: dedup }
    }

    pub fn vertices(&self) -> &[Point] {
        &self.vertices
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }

    /// Shoelace area (non-negative for CCW input).
    pub fn area(&self) -> f64 {
        shoelace(&self.vertices).max(0.0)
    }

    pub fn centroid(&self) -> Option<Point> {
        let a = shoelace(&self.vertices);
        if a <= 0.0 {
            return None;
        }
        let n = self.vertices.len();
        let (mut cx, mut cy) = (0.0, 0.0);
        for i in 0..n {
            let p = self.vertices[i];
            let q = self.vertices[(i + 1) % n];
            let w = p.cross(q);
            cx += (p.x + q.x) * w;
            cy += (p.y + q.y) * w;
        }
        Some(Point::new(cx / (6.0 * a), cy / (6.0 * a)))
    }

    /// Closed-boundary containment test.
    pub fn contains(&self, p: Point) -> bool {
        let n = self.vertices.len();
        if n < 3 {
            return false;
        }
        (0..n).all(|i| {
            let a = self.vertices[i];
            let b = self.vertices[(i + 1) % n];
            b.sub(a).cross(p.sub(a)) >= 0.0
        })
    }
}

fn shoelace(v: &[Point]) -> f64 {
    let n = v.len();
    if n < 3 {
        return 0.0;
    }
    let mut sum = 0.0;
    for i in 0..n {
        sum += v[i].cross(v[(i + 1) % n]);
    }
    sum / 2.0
}

/// Corners of `rect` in counter-clockwise order.
pub fn rect_corners(rect: &OrientedRect) -> ConvexPolygon {
    let hl = rect.length / 2.0;
    let hw = rect.width / 2.0;
    let local = [
        Point::new(hl, hw),
        Point::new(-hl, hw),
        Point::new(-hl, -hw),
        Point::new(hl, -hw),
    ];
    ConvexPolygon {
        vertices: local.iter().map(|&p| rect.center.to_world(p)).collect(),
    }
}

/// Clips `subject` against the left half-plane of the directed edge `a -> b`.
fn clip_half_plane(subject: &[Point], a: Point, b: Point, out: &mut Vec<Point>) {
    out.clear();
    let n = subject.len();
    if n == 0 {
        return;
    }
    let edge = b.sub(a);
    let side = |p: Point| edge.cross(p.sub(a));
    for i in 0..n {
        let cur = subject[i];
        let prev = subject[(i + n - 1) % n];
        let sc = side(cur);
        let sp = side(prev);
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

fn intersect(p: Point, q: Point, sp: f64, sq: f64) -> Point {
    let t = sp / (sp - sq);
    Point::new(p.x + t * (q.x - p.x), p.y + t * (q.y - p.y))
}

/// Convex polygon `a ∩ b`.
pub fn convex_intersection(a: &ConvexPolygon, b: &ConvexPolygon) -> ConvexPolygon {
    if a.is_empty() || b.is_empty() {
        return ConvexPolygon::empty();
    }
    let mut current = a.vertices.clone();
    let mut scratch = Vec::with_capacity(current.len() + b.vertices.len());
    let m = b.vertices.len();
    for i in 0..m {
        clip_half_plane(&current, b.vertices[i], b.vertices[(i + 1) % m], &mut scratch);
        std::mem::swap(&mut current, &mut scratch);
        if current.is_empty() {
            return ConvexPolygon::empty();
        }
    }
    ConvexPolygon::from_ccw(current)
}

/// `|a ∩ b|`; zero for disjoint inputs or contact along an edge or vertex.
pub fn convex_intersection_area(a: &ConvexPolygon, b: &ConvexPolygon) -> f64 {
    let area = convex_intersection(a, b).area();
    area.min(a.area()).min(b.area()).max(0.0)
}

/// Fraction of `fov_i` lying outside `fov_e`, in `[0, 1]`.
///
/// Containment (including identical rects) gives exactly 0 and disjoint
/// rects exactly 1.
pub fn normalized_extended_fov(fov_i: &OrientedRect, fov_e: &OrientedRect) -> f64 {
    let a = rect_corners(fov_i);
    if fov_i == fov_e || a.vertices.iter().all(|&p| fov_e.contains(p)) {
        return 0.0;
    }
    let b = rect_corners(fov_e);
    if !overlaps_with_area(&a.vertices, &b.vertices) {
        return 1.0;
    }
    let overlap = convex_intersection_area(&a, &b);
    (1.0 - overlap / fov_i.area()).clamp(0.0, 1.0)
}

/// True when the two convex polygons share a region of positive area.
///
/// Separating-axis test with strict inequalities, so touching boundaries do
/// not count as overlap.
pub fn overlaps_with_area(a: &[Point], b: &[Point]) -> bool {
    fn separated(edges_of: &[Point], a: &[Point], b: &[Point]) -> bool {
        let n = edges_of.len();
        for i in 0..n {
            let p = edges_of[i];
            let q = edges_of[(i + 1) % n];
            let axis = Point::new(-(q.y - p.y), q.x - p.x);
            let proj = |v: &Point| axis.x * v.x + axis.y * v.y;
            let (amin, amax) = a
                .iter()
                .map(proj)
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
            let (bmin, bmax) = b
                .iter()
                .map(proj)
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
            let tol = 1e-9 * (1.0 + axis.x.abs() + axis.y.abs());
            if amax <= bmin + tol || bmax <= amin + tol {
                return true;
            }
        }
        false
    }
    if a.len() < 3 || b.len() < 3 {
        return false;
    }
    !(separated(a, a, b) || separated(b, a, b))
}
