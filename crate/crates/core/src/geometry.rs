//! Planar primitives shared by the rest of the crate: points, rigid
//! transforms, convex polygons and the handful of measurements the solver
//! needs (areas, clipping, hulls, diameters).

use std::ops::{Add, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Global tolerance for orientation and coincidence tests, in world units.
pub const GEOM_EPS: f64 = 1e-9;

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Point2 {
    pub x: f64,
    pub y: f64,
}

impl Point2 {
    pub const ORIGIN: Point2 = Point2 { x: 0.0, y: 0.0 };

    #[inline]
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    #[inline]
    pub fn dot(self, o: Point2) -> f64 {
        self.x * o.x + self.y * o.y
    }

    /// z-component of the 3D cross product.
    #[inline]
    pub fn cross(self, o: Point2) -> f64 {
        self.x * o.y - self.y * o.x
    }

    #[inline]
    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    #[inline]
    pub fn norm_sq(self) -> f64 {
        self.dot(self)
    }

    #[inline]
    pub fn dist(self, o: Point2) -> f64 {
        (self - o).norm()
    }

    /// Counter-clockwise perpendicular.
    #[inline]
    pub fn perp(self) -> Point2 {
        Point2::new(-self.y, self.x)
    }

    pub fn normalized(self) -> Point2 {
        let n = self.norm();
        if n > 0.0 {
            self * (1.0 / n)
        } else {
            self
        }
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }

    pub fn lerp(self, o: Point2, t: f64) -> Point2 {
        self + (o - self) * t
    }
}

impl Add for Point2 {
    type Output = Point2;
    #[inline]
    fn add(self, o: Point2) -> Point2 {
        Point2::new(self.x + o.x, self.y + o.y)
    }
}

impl Sub for Point2 {
    type Output = Point2;
    #[inline]
    fn sub(self, o: Point2) -> Point2 {
        Point2::new(self.x - o.x, self.y - o.y)
    }
}

impl Mul<f64> for Point2 {
    type Output = Point2;
    #[inline]
    fn mul(self, s: f64) -> Point2 {
        Point2::new(self.x * s, self.y * s)
    }
}

impl Neg for Point2 {
    type Output = Point2;
    #[inline]
    fn neg(self) -> Point2 {
        Point2::new(-self.x, -self.y)
    }
}

/// `orient(a, b, c) > 0` iff `c` lies to the left of the directed line `a -> b`.
#[inline]
pub fn orient(a: Point2, b: Point2, c: Point2) -> f64 {
    (b - a).cross(c - a)
}

/// Proper rigid motion `v -> R v + t`. The rotation is kept as its cosine
/// and sine so that it is a rotation by construction (det = +1, no
/// reflections).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RigidTransform {
    cos: f64,
    sin: f64,
    pub translation: Point2,
}

impl Default for RigidTransform {
    fn default() -> Self {
        Self::IDENTITY
    }
}

impl RigidTransform {
    pub const IDENTITY: RigidTransform = RigidTransform {
        cos: 1.0,
        sin: 0.0,
        translation: Point2::ORIGIN,
    };

    pub fn new(angle: f64, translation: Point2) -> Self {
        let (sin, cos) = angle.sin_cos();
        Self {
            cos,
            sin,
            translation,
        }
    }

    pub fn translation(t: Point2) -> Self {
        Self {
            translation: t,
            ..Self::IDENTITY
        }
    }

    /// Builds a transform from an explicit 2×2 matrix, validating that it is
    /// a proper rotation.
    pub fn from_matrix(m: [[f64; 2]; 2], translation: Point2) -> Result<Self> {
        let c0 = Point2::new(m[0][0], m[1][0]);
        let c1 = Point2::new(m[0][1], m[1][1]);
        let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
        if (c0.norm() - 1.0).abs() > GEOM_EPS
            || (c1.norm() - 1.0).abs() > GEOM_EPS
            || c0.dot(c1).abs() > GEOM_EPS
            || (det - 1.0).abs() > GEOM_EPS
        {
            return Err(Error::InvalidTransform(format!("{m:?} is not a rotation")));
        }
        Ok(Self {
            cos: m[0][0],
            sin: m[1][0],
            translation,
        })
    }

    pub fn angle(&self) -> f64 {
        self.sin.atan2(self.cos)
    }

    pub fn matrix(&self) -> [[f64; 2]; 2] {
        [[self.cos, -self.sin], [self.sin, self.cos]]
    }

    #[inline]
    pub fn rotate(&self, v: Point2) -> Point2 {
        Point2::new(
            self.cos * v.x - self.sin * v.y,
            self.sin * v.x + self.cos * v.y,
        )
    }

    #[inline]
    pub fn apply(&self, v: Point2) -> Point2 {
        self.rotate(v) + self.translation
    }

    pub fn inverse(&self) -> RigidTransform {
        let inv = RigidTransform {
            cos: self.cos,
            sin: -self.sin,
            translation: Point2::ORIGIN,
        };
        RigidTransform {
            translation: -inv.rotate(self.translation),
            ..inv
        }
    }

    /// `self ∘ other`: apply `other` first, then `self`.
    pub fn compose(&self, other: &RigidTransform) -> RigidTransform {
        let cos = self.cos * other.cos - self.sin * other.sin;
        let sin = self.sin * other.cos + self.cos * other.sin;
        // re-project onto the unit circle so long chains do not drift
        let n = cos.hypot(sin);
        RigidTransform {
            cos: cos / n,
            sin: sin / n,
            translation: self.apply(other.translation),
        }
    }
}

/// Counter-clockwise simple polygon.
#[derive(Clone, Debug, PartialEq)]
pub struct Polygon {
    vertices: Vec<Point2>,
}

impl Polygon {
    /// Normalizes orientation to counter-clockwise and rejects degenerate
    /// input (fewer than three vertices, non-finite coordinates or
    /// near-zero area relative to the bounding box).
    pub fn new(mut vertices: Vec<Point2>) -> Result<Self> {
        if vertices.len() < 3 {
            return Err(Error::Degenerate(format!(
                "polygon needs at least 3 vertices, got {}",
                vertices.len()
            )));
        }
        if vertices.iter().any(|p| !p.is_finite()) {
            return Err(Error::Degenerate("non-finite vertex".into()));
        }
        let a = shoelace(&vertices);
        let (lo, hi) = bbox(&vertices);
        let diag_sq = (hi - lo).norm_sq();
        if a.abs() < GEOM_EPS * diag_sq.max(GEOM_EPS) {
            return Err(Error::Degenerate(format!("near-zero polygon area {a}")));
        }
        if a < 0.0 {
            vertices.reverse();
        }
        Ok(Self { vertices })
    }

    /// Wraps vertices that are already known to be CCW and non-degenerate.
    pub(crate) fn from_ccw_unchecked(vertices: Vec<Point2>) -> Self {
        debug_assert!(vertices.len() >= 3);
        Self { vertices }
    }

    #[inline]
    pub fn vertices(&self) -> &[Point2] {
        &self.vertices
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.vertices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }

    #[inline]
    pub fn vertex(&self, i: usize) -> Point2 {
        self.vertices[i % self.vertices.len()]
    }

    /// Edge `i` runs from vertex `i` to vertex `i + 1` (cyclically).
    #[inline]
    pub fn edge(&self, i: usize) -> (Point2, Point2) {
        (self.vertex(i), self.vertex(i + 1))
    }

    pub fn edge_length(&self, i: usize) -> f64 {
        let (a, b) = self.edge(i);
        a.dist(b)
    }

    pub fn area(&self) -> f64 {
        shoelace(&self.vertices)
    }

    pub fn centroid(&self) -> Point2 {
        polygon_centroid(&self.vertices)
    }

    pub fn bbox(&self) -> (Point2, Point2) {
        bbox(&self.vertices)
    }

    /// Interior angle at vertex `i`, in radians.
    pub fn interior_angle(&self, i: usize) -> f64 {
        let n = self.len();
        let v = self.vertex(i);
        let prev = self.vertex(i + n - 1);
        let next = self.vertex(i + 1);
        let a = next - v;
        let b = prev - v;
        let ang = a.cross(b).atan2(a.dot(b));
        if ang < 0.0 {
            ang + 2.0 * std::f64::consts::PI
        } else {
            ang
        }
    }

    /// Strict convexity: every turn is a left turn by more than `GEOM_EPS`.
    pub fn is_convex(&self) -> bool {
        let n = self.len();
        (0..n).all(|i| {
            orient(self.vertex(i), self.vertex(i + 1), self.vertex(i + 2)) > GEOM_EPS
        })
    }

    /// Point-in-convex-polygon test; points within `tol` of the boundary
    /// count as inside.
    pub fn contains(&self, p: Point2, tol: f64) -> bool {
        let n = self.len();
        (0..n).all(|i| {
            let (a, b) = self.edge(i);
            let len = a.dist(b);
            orient(a, b, p) >= -tol * len
        })
    }

    /// Applies a rigid transform to every vertex. Orientation is preserved.
    pub fn transformed(&self, t: &RigidTransform) -> Polygon {
        Polygon {
            vertices: self.vertices.iter().map(|&v| t.apply(v)).collect(),
        }
    }
}

fn shoelace(pts: &[Point2]) -> f64 {
    let n = pts.len();
    let mut s = 0.0;
    for i in 0..n {
        s += pts[i].cross(pts[(i + 1) % n]);
    }
    0.5 * s
}

fn bbox(pts: &[Point2]) -> (Point2, Point2) {
    let mut lo = Point2::new(f64::INFINITY, f64::INFINITY);
    let mut hi = Point2::new(f64::NEG_INFINITY, f64::NEG_INFINITY);
    for p in pts {
        lo.x = lo.x.min(p.x);
        lo.y = lo.y.min(p.y);
        hi.x = hi.x.max(p.x);
        hi.y = hi.y.max(p.y);
    }
    (lo, hi)
}

fn polygon_centroid(pts: &[Point2]) -> Point2 {
    let n = pts.len();
    // shift to the first vertex for numerical stability
    let o = pts[0];
    let mut a = 0.0;
    let mut c = Point2::ORIGIN;
    for i in 0..n {
        let p = pts[i] - o;
        let q = pts[(i + 1) % n] - o;
        let w = p.cross(q);
        a += w;
        c = c + (p + q) * w;
    }
    if a.abs() < f64::MIN_POSITIVE {
        let sum = pts.iter().fold(Point2::ORIGIN, |acc, &p| acc + p);
        return sum * (1.0 / n as f64);
    }
    o + c * (1.0 / (3.0 * a))
}

/// Shoelace signed area of a vertex sequence; positive for CCW.
pub fn signed_area(vertices: &[Point2]) -> Result<f64> {
    if vertices.len() < 3 {
        return Err(Error::Degenerate(format!(
            "signed area needs at least 3 vertices, got {}",
            vertices.len()
        )));
    }
    Ok(shoelace(vertices))
}

pub fn apply_transform(poly: &Polygon, t: &RigidTransform) -> Polygon {
    poly.transformed(t)
}

/// Clips `subject` against every edge of the convex CCW `clip`
/// (Sutherland–Hodgman). Returns the raw clipped vertex loop, possibly empty.
pub fn clip_convex(subject: &[Point2], clip: &[Point2]) -> Vec<Point2> {
    let mut out: Vec<Point2> = subject.to_vec();
    let m = clip.len();
    let mut buf = Vec::with_capacity(out.len() + m);
    for i in 0..m {
        if out.len() < 3 {
            return Vec::new();
        }
        let a = clip[i];
        let b = clip[(i + 1) % m];
        buf.clear();
        let n = out.len();
        for k in 0..n {
            let s = out[k];
            let e = out[(k + 1) % n];
            let ds = orient(a, b, s);
            let de = orient(a, b, e);
            let s_in = ds >= 0.0;
            let e_in = de >= 0.0;
            if s_in && e_in {
                buf.push(e);
            } else if s_in || e_in {
                let denom = ds - de;
                if denom.abs() > f64::MIN_POSITIVE {
                    buf.push(s.lerp(e, ds / denom));
                }
                if e_in {
                    buf.push(e);
                }
            }
        }
        std::mem::swap(&mut out, &mut buf);
    }
    if out.len() < 3 {
        Vec::new()
    } else {
        out
    }
}

/// Area of the intersection of two convex polygons.
pub fn intersection_area(a: &Polygon, b: &Polygon) -> f64 {
    let (alo, ahi) = a.bbox();
    let (blo, bhi) = b.bbox();
    if alo.x > bhi.x || blo.x > ahi.x || alo.y > bhi.y || blo.y > ahi.y {
        return 0.0;
    }
    let clipped = clip_convex(a.vertices(), b.vertices());
    if clipped.len() < 3 {
        return 0.0;
    }
    shoelace(&clipped).max(0.0)
}

/// Convex intersection polygon, if it has positive area.
pub fn intersection(a: &Polygon, b: &Polygon) -> Option<Polygon> {
    let clipped = clip_convex(a.vertices(), b.vertices());
    if clipped.len() < 3 || shoelace(&clipped) <= 0.0 {
        None
    } else {
        Some(Polygon::from_ccw_unchecked(clipped))
    }
}

/// Area of `target ∩ (others[0] ∪ others[1] ∪ …)` for convex operands, by
/// inclusion–exclusion over the others. Exponential in `others.len()`; meant
/// for the handful of pieces in a cycle.
pub fn area_covered_by_union(target: &Polygon, others: &[&Polygon]) -> f64 {
    fn recurse(current: &[Point2], others: &[&Polygon], start: usize, depth: usize, acc: &mut f64) {
        for k in start..others.len() {
            let clipped = clip_convex(current, others[k].vertices());
            if clipped.len() < 3 {
                continue;
            }
            let a = shoelace(&clipped);
            if a <= 0.0 {
                continue;
            }
            if depth.is_multiple_of(2) {
                *acc += a;
            } else {
                *acc -= a;
            }
            recurse(&clipped, others, k + 1, depth + 1, acc);
        }
    }
    let mut acc = 0.0;
    recurse(target.vertices(), others, 0, 0, &mut acc);
    acc.clamp(0.0, target.area())
}

/// Convex hull (Andrew's monotone chain), CCW, without collinear points.
pub fn convex_hull(points: &[Point2]) -> Result<Polygon> {
    if points.len() < 3 {
        return Err(Error::Degenerate(format!(
            "convex hull needs at least 3 points, got {}",
            points.len()
        )));
    }
    let mut pts: Vec<Point2> = points.to_vec();
    pts.sort_by(|a, b| a.x.total_cmp(&b.x).then(a.y.total_cmp(&b.y)));
    pts.dedup();
    let mut lower: Vec<Point2> = Vec::new();
    for &p in &pts {
        while lower.len() >= 2 && orient(lower[lower.len() - 2], lower[lower.len() - 1], p) <= 0.0 {
            lower.pop();
        }
        lower.push(p);
    }
    let mut upper: Vec<Point2> = Vec::new();
    for &p in pts.iter().rev() {
        while upper.len() >= 2 && orient(upper[upper.len() - 2], upper[upper.len() - 1], p) <= 0.0 {
            upper.pop();
        }
        upper.push(p);
    }
    lower.pop();
    upper.pop();
    lower.extend(upper);
    if lower.len() < 3 {
        return Err(Error::Collinear);
    }
    Polygon::new(lower).map_err(|_| Error::Collinear)
}

/// Largest pairwise distance. Uses the hull's vertices when the point set
/// spans an area, which is exact since the farthest pair lies on the hull.
pub fn diameter(points: &[Point2]) -> Result<f64> {
    if points.len() < 2 {
        return Err(Error::Degenerate(format!(
            "diameter needs at least 2 points, got {}",
            points.len()
        )));
    }
    let candidates: Vec<Point2> = match convex_hull(points) {
        Ok(h) => h.vertices().to_vec(),
        Err(_) => points.to_vec(),
    };
    let mut best = 0.0f64;
    for i in 0..candidates.len() {
        for j in i + 1..candidates.len() {
            best = best.max(candidates[i].dist(candidates[j]));
        }
    }
    Ok(best)
}

/// Minimum translation vector separating two convex polygons (separating
/// axis test). Returns `(normal, depth)` with `normal` pointing from `a`
/// towards `b`, or `None` if they do not overlap by more than `GEOM_EPS`.
pub fn penetration(a: &Polygon, b: &Polygon) -> Option<(Point2, f64)> {
    let mut best: Option<(Point2, f64)> = None;
    for poly in [a, b] {
        for i in 0..poly.len() {
            let (p, q) = poly.edge(i);
            let axis = (q - p).perp().normalized();
            let (amin, amax) = project(a, axis);
            let (bmin, bmax) = project(b, axis);
            let overlap = (amax.min(bmax)) - (amin.max(bmin));
            if overlap <= GEOM_EPS {
                return None;
            }
            // direction that pushes b away from a along this axis
            let push_pos = amax - bmin;
            let push_neg = bmax - amin;
            let (n, d) = if push_pos < push_neg {
                (axis, push_pos)
            } else {
                (-axis, push_neg)
            };
            if best.is_none_or(|(_, bd)| d < bd) {
                best = Some((n, d));
            }
        }
    }
    best
}

fn project(p: &Polygon, axis: Point2) -> (f64, f64) {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for v in p.vertices() {
        let d = v.dot(axis);
        lo = lo.min(d);
        hi = hi.max(d);
    }
    (lo, hi)
}
