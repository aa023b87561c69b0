//! Oriented boxes, quadrilateral corners and rotated intersection-over-union.
//!
//! Intersections are computed exactly (up to floating point) by clipping one
//! convex quadrilateral against the other with Sutherland-Hodgman and taking
//! the shoelace area of the result.

use core::cmp::Ordering;
use core::fmt;

use arrayvec::ArrayVec;
use thiserror::Error;

/// Tolerance for point-on-line decisions while clipping, in pixel units.
pub const CLIP_EPSILON: f64 = 1e-9;

/// Unions below this area are treated as empty.
pub const MIN_UNION_AREA: f64 = 1e-12;

// A convex quad clipped by four half-planes has at most eight vertices.
type PolyBuf = ArrayVec<Point, 16>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GeometryError {
    #[error("box extents must be finite and positive, got w={w} h={h}")]
    NonPositiveExtent { w: f64, h: f64 },
    #[error("box parameters must be finite")]
    NonFinite,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }
}

impl From<(f64, f64)> for Point {
    fn from((x, y): (f64, f64)) -> Self {
        Self { x, y }
    }
}

/// A rotated rectangle: center, extents, and the counter-clockwise angle (radians)
/// of the width axis measured from +x.
///
/// The angle is stored as given; no canonicalization to a half-open period is
/// applied since evaluation only depends on the corner geometry.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OrientedBox {
    cx: f64,
    cy: f64,
    w: f64,
    h: f64,
    angle: f64,
}

impl OrientedBox {
    pub fn new(cx: f64, cy: f64, w: f64, h: f64, angle: f64) -> Result<Self, GeometryError> {
        if !(cx.is_finite() && cy.is_finite() && angle.is_finite()) {
            return Err(GeometryError::NonFinite);
        }
        if !(w.is_finite() && h.is_finite() && w > 0.0 && h > 0.0) {
            return Err(GeometryError::NonPositiveExtent { w, h });
        }
        Ok(Self { cx, cy, w, h, angle })
    }

    pub fn cx(&self) -> f64 {
        self.cx
    }

    pub fn cy(&self) -> f64 {
        self.cy
    }

    pub fn w(&self) -> f64 {
        self.w
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn angle(&self) -> f64 {
        self.angle
    }

    pub fn area(&self) -> f64 {
        self.w * self.h
    }

    /// Expands the box into its four corners, counter-clockwise, starting from
    /// the (+w/2, +h/2) local corner.
    pub fn to_corners(&self) -> QuadCorners {
        let (sin, cos) = libm::sincos(self.angle);
        let (hw, hh) = (self.w / 2.0, self.h / 2.0);
        let local = [(hw, hh), (-hw, hh), (-hw, -hh), (hw, -hh)];
        let pts = local.map(|(u, v)| Point::new(self.cx + u * cos - v * sin, self.cy + u * sin + v * cos));
        QuadCorners(pts)
    }

    /// Whether `p` lies inside the closed box, tested in the box's own frame.
    pub fn contains(&self, p: Point) -> bool {
        let (sin, cos) = libm::sincos(self.angle);
        let (dx, dy) = (p.x - self.cx, p.y - self.cy);
        let u = dx * cos + dy * sin;
        let v = -dx * sin + dy * cos;
        u.abs() <= self.w / 2.0 && v.abs() <= self.h / 2.0
    }
}

/// Four vertices of a quadrilateral in counter-clockwise order
/// (positive shoelace area).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadCorners(pub(crate) [Point; 4]);

impl QuadCorners {
    /// Builds a quadrilateral from four vertices, reversing them if they are
    /// ordered clockwise. The first vertex stays first.
    pub fn from_points(mut pts: [Point; 4]) -> Self {
        if signed_area(&pts) < 0.0 {
            pts[1..].reverse();
        }
        Self(pts)
    }

    /// Builds from the flat `x1 y1 x2 y2 x3 y3 x4 y4` layout.
    pub fn from_flat(c: [f64; 8]) -> Self {
        Self::from_points([
            Point::new(c[0], c[1]),
            Point::new(c[2], c[3]),
            Point::new(c[4], c[5]),
            Point::new(c[6], c[7]),
        ])
    }

    pub fn points(&self) -> &[Point; 4] {
        &self.0
    }

    pub fn to_flat(&self) -> [f64; 8] {
        let p = &self.0;
        [p[0].x, p[0].y, p[1].x, p[1].y, p[2].x, p[2].y, p[3].x, p[3].y]
    }

    pub fn area(&self) -> f64 {
        signed_area(&self.0).max(0.0)
    }

    /// True when every turn is a left turn (collinear turns allowed).
    pub fn is_convex(&self) -> bool {
        let p = &self.0;
        (0..4).all(|i| cross(p[i], p[(i + 1) % 4], p[(i + 2) % 4]) >= -CLIP_EPSILON)
    }
}

impl From<OrientedBox> for QuadCorners {
    fn from(b: OrientedBox) -> Self {
        b.to_corners()
    }
}

impl fmt::Display for QuadCorners {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, p) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str(" ")?;
            }
            write!(f, "{} {}", p.x, p.y)?;
        }
        Ok(())
    }
}

/// Twice the signed area of triangle (a, b, c); positive for a left turn.
#[inline]
fn cross(a: Point, b: Point, c: Point) -> f64 {
    (b.x - a.x) * (c.y - a.y) - (b.y - a.y) * (c.x - a.x)
}

/// Shoelace area, positive for counter-clockwise polygons.
pub fn signed_area(poly: &[Point]) -> f64 {
    let n = poly.len();
    if n < 3 {
        return 0.0;
    }
    let mut acc = 0.0;
    for i in 0..n {
        let (a, b) = (poly[i], poly[(i + 1) % n]);
        acc += a.x * b.y - b.x * a.y;
    }
    acc / 2.0
}

/// Clips `subject` to the left half-plane of the directed edge `a -> b`.
fn clip_half_plane(subject: &PolyBuf, a: Point, b: Point) -> PolyBuf {
    let mut out = PolyBuf::new();
    let n = subject.len();
    if n == 0 {
        return out;
    }
    for i in 0..n {
        let s = subject[i];
        let e = subject[(i + 1) % n];
        let ds = cross(a, b, s);
        let de = cross(a, b, e);
        let s_in = ds >= -CLIP_EPSILON;
        let e_in = de >= -CLIP_EPSILON;
        if s_in != e_in {
            let t = ds / (ds - de);
            if t.is_finite() {
                out.push(Point::new(s.x + (e.x - s.x) * t, s.y + (e.y - s.y) * t));
            }
        }
        if e_in {
            out.push(e);
        }
    }
    out
}

/// Counter-clockwise convex hull of the quadrilateral's vertices
/// (Andrew's monotone chain). Used to make slightly non-convex parsed quads
/// safe as clip polygons.
fn convex_hull(q: &QuadCorners) -> PolyBuf {
    let mut pts = q.0;
    pts.sort_by(|a, b| a.x.total_cmp(&b.x).then(a.y.total_cmp(&b.y)));
    let mut hull = PolyBuf::new();
    let extend = |hull: &mut PolyBuf, p: Point, floor: usize| {
        while hull.len() >= floor + 2 && cross(hull[hull.len() - 2], hull[hull.len() - 1], p) <= 0.0 {
            hull.pop();
        }
        hull.push(p);
    };
    for &p in &pts {
        extend(&mut hull, p, 0);
    }
    hull.pop();
    let floor = hull.len();
    for &p in pts.iter().rev() {
        extend(&mut hull, p, floor);
    }
    hull.pop();
    hull
}

fn as_clip_polygon(q: &QuadCorners) -> PolyBuf {
    if q.is_convex() {
        q.0.iter().copied().collect()
    } else {
        convex_hull(q)
    }
}

fn lexicographic(a: &QuadCorners, b: &QuadCorners) -> Ordering {
    a.to_flat()
        .iter()
        .zip(b.to_flat().iter())
        .map(|(x, y)| x.total_cmp(y))
        .find(|o| o.is_ne())
        .unwrap_or(Ordering::Equal)
}

/// Area of the intersection of two convex quadrilaterals.
///
/// The arguments are put in a canonical order before clipping, so the result
/// is bitwise symmetric.
pub fn convex_intersection_area(a: &QuadCorners, b: &QuadCorners) -> f64 {
    let (subject, clip) = match lexicographic(a, b) {
        Ordering::Greater => (b, a),
        _ => (a, b),
    };
    if subject.area() <= 0.0 || clip.area() <= 0.0 {
        return 0.0;
    }
    let clip = as_clip_polygon(clip);
    let mut poly = as_clip_polygon(subject);
    let m = clip.len();
    for i in 0..m {
        poly = clip_half_plane(&poly, clip[i], clip[(i + 1) % m]);
        if poly.len() < 3 {
            return 0.0;
        }
    }
    signed_area(poly.as_slice()).max(0.0)
}

/// Intersection-over-union of two quadrilaterals.
pub fn quad_iou(a: &QuadCorners, b: &QuadCorners) -> f64 {
    let inter = convex_intersection_area(a, b);
    let union = a.area() + b.area() - inter;
    if union < MIN_UNION_AREA {
        return 0.0;
    }
    (inter / union).clamp(0.0, 1.0)
}

/// Intersection-over-union of two oriented boxes.
pub fn rotated_iou(a: &OrientedBox, b: &OrientedBox) -> f64 {
    quad_iou(&a.to_corners(), &b.to_corners())
}

#[cfg(test)]
mod tests {
    use super::*;
    use core::f64::consts::{FRAC_PI_2, FRAC_PI_4, FRAC_PI_6};

    fn bx(cx: f64, cy: f64, w: f64, h: f64, a: f64) -> OrientedBox {
        OrientedBox::new(cx, cy, w, h, a).unwrap()
    }

    fn close(a: Point, b: Point, tol: f64) -> bool {
        (a.x - b.x).abs() < tol && (a.y - b.y).abs() < tol
    }

    #[test]
    fn rejects_degenerate_extents() {
        assert!(OrientedBox::new(0.0, 0.0, 0.0, 1.0, 0.0).is_err());
        assert!(OrientedBox::new(0.0, 0.0, 1.0, -1.0, 0.0).is_err());
        assert!(OrientedBox::new(f64::NAN, 0.0, 1.0, 1.0, 0.0).is_err());
    }

    #[test]
    fn axis_aligned_corners() {
        let q = bx(0.0, 0.0, 2.0, 2.0, 0.0).to_corners();
        let expect = [(1.0, 1.0), (-1.0, 1.0), (-1.0, -1.0), (1.0, -1.0)];
        for (p, e) in q.points().iter().zip(expect) {
            assert_eq!((p.x, p.y), e);
        }
        assert!(signed_area(q.points()) > 0.0);
    }

    #[test]
    fn quarter_turn_square_has_same_vertex_set() {
        let a = bx(0.0, 0.0, 2.0, 2.0, 0.0).to_corners();
        let b = bx(0.0, 0.0, 2.0, 2.0, FRAC_PI_2).to_corners();
        for p in a.points() {
            assert!(b.points().iter().any(|q| close(*p, *q, 1e-12)));
        }
    }

    #[test]
    fn rotated_corners_match_independent_transform() {
        let b = bx(3.0, 4.0, 4.0, 2.0, FRAC_PI_6);
        let q = b.to_corners();
        // cos 30 = sqrt(3)/2, sin 30 = 1/2, written out by hand.
        let (c, s) = (3f64.sqrt() / 2.0, 0.5);
        let local = [(2.0, 1.0), (-2.0, 1.0), (-2.0, -1.0), (2.0, -1.0)];
        for (p, (u, v)) in q.points().iter().zip(local) {
            let e = Point::new(3.0 + c * u - s * v, 4.0 + s * u + c * v);
            assert!(close(*p, e, 1e-12), "{p:?} vs {e:?}");
        }
        assert!((q.area() - 8.0).abs() < 8.0 * 1e-9);
    }

    #[test]
    fn clockwise_input_is_reoriented() {
        let q = QuadCorners::from_flat([1.0, 1.0, 1.0, 3.0, 3.0, 3.0, 3.0, 1.0]);
        assert!(signed_area(q.points()) > 0.0);
        assert_eq!(q.points()[0], Point::new(1.0, 1.0));
        assert!((q.area() - 4.0).abs() < 1e-12);
    }

    #[test]
    fn intersection_examples() {
        let a = bx(0.0, 0.0, 2.0, 2.0, 0.0).to_corners();
        assert!((convex_intersection_area(&a, &a) - 4.0).abs() < 1e-12);
        let far = bx(10.0, 0.0, 2.0, 2.0, 0.0).to_corners();
        assert_eq!(convex_intersection_area(&a, &far), 0.0);
        let u = bx(0.5, 0.5, 1.0, 1.0, 0.0).to_corners();
        let v = bx(1.0, 0.5, 1.0, 1.0, 0.0).to_corners();
        assert!((convex_intersection_area(&u, &v) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn shared_edge_has_zero_iou() {
        let a = bx(0.0, 0.0, 2.0, 2.0, 0.0);
        let b = bx(2.0, 0.0, 2.0, 2.0, 0.0);
        assert_eq!(rotated_iou(&a, &b), 0.0);
    }

    #[test]
    fn square_against_rotated_square() {
        let a = bx(0.0, 0.0, 2.0, 2.0, 0.0);
        let b = bx(0.0, 0.0, 2.0, 2.0, FRAC_PI_4);
        let inter = 8.0 * 2f64.sqrt() - 8.0;
        let expect = inter / (8.0 - inter);
        assert!((rotated_iou(&a, &b) - expect).abs() < 1e-12);
        assert!((expect - core::f64::consts::FRAC_1_SQRT_2).abs() < 1e-12);
    }

    #[test]
    fn iou_of_distant_boxes_is_zero() {
        let a = bx(0.0, 0.0, 2.0, 2.0, 0.3);
        let b = bx(100.0, 0.0, 2.0, 2.0, 1.1);
        assert_eq!(rotated_iou(&a, &b), 0.0);
        assert_eq!(rotated_iou(&a, &a), 1.0);
    }

    #[test]
    fn nonconvex_quad_uses_hull() {
        // Dent at (2, 1.9) makes the quad slightly non-convex; the hull is the triangle.
        let q = QuadCorners::from_flat([0.0, 0.0, 4.0, 0.0, 2.0, 4.0, 2.0, 1.9]);
        assert!(!q.is_convex());
        let hull = convex_hull(&q);
        assert_eq!(hull.len(), 3);
        let sq = bx(2.0, 1.0, 1.0, 1.0, 0.0).to_corners();
        assert!((convex_intersection_area(&sq, &q) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn zero_area_quad() {
        let q = QuadCorners::from_flat([0.0, 0.0, 1.0, 0.0, 2.0, 0.0, 3.0, 0.0]);
        assert_eq!(quad_iou(&q, &q), 0.0);
    }
}
