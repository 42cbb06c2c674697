//! Points, curves and the closed-form geometry behind them: circle and arc
//! parameters, uniform sampling, and exact point-to-curve distances.

use std::cmp::Ordering;
use std::f64::consts::{PI, TAU};
use std::fmt;
use std::ops::{Add, Mul, Sub};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Tolerance for point identity when resolving action targets.
pub const EPS_ID: f64 = 1e-6;
/// Tolerance below which a curve is considered degenerate.
pub const EPS_GEOM: f64 = 1e-9;
/// Half side length of the square play canvas `[-20, 20]²`.
pub const CANVAS_HALF: f64 = 20.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("{kind} expects {expected} control points, got {got}")]
    WrongPointCount {
        kind: CurveKind,
        expected: usize,
        got: usize,
    },
    #[error("non-finite coordinate in {kind} control points")]
    NonFinite { kind: CurveKind },
    #[error("degenerate {kind}: {reason}")]
    DegenerateCurve { kind: CurveKind, reason: &'static str },
}

/// A position (or translation vector) in canvas units, y axis pointing up.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(from = "[f64; 2]", into = "[f64; 2]")]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl From<[f64; 2]> for Point {
    fn from([x, y]: [f64; 2]) -> Self {
        Point { x, y }
    }
}

impl From<Point> for [f64; 2] {
    fn from(p: Point) -> Self {
        [p.x, p.y]
    }
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Point { x, y }
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }

    pub fn in_canvas(self) -> bool {
        self.is_finite() && self.x.abs() <= CANVAS_HALF && self.y.abs() <= CANVAS_HALF
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn dist(self, other: Point) -> f64 {
        (self - other).norm()
    }

    pub fn dot(self, other: Point) -> f64 {
        self.x * other.x + self.y * other.y
    }

    pub fn cross(self, other: Point) -> f64 {
        self.x * other.y - self.y * other.x
    }

    pub fn midpoint(self, other: Point) -> Point {
        Point::new(0.5 * (self.x + other.x), 0.5 * (self.y + other.y))
    }

    /// Lexicographic `(x, y)` order under `f64::total_cmp`.
    pub fn lex_cmp(&self, other: &Point) -> Ordering {
        self.x
            .total_cmp(&other.x)
            .then_with(|| self.y.total_cmp(&other.y))
    }

    /// Bit-level identity key; `-0.0` and `0.0` map to the same key.
    pub(crate) fn key(self) -> (u64, u64) {
        ((self.x + 0.0).to_bits(), (self.y + 0.0).to_bits())
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

impl fmt::Display for Point {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.x, self.y)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CurveKind {
    Line,
    Circle,
    Arc,
}

impl CurveKind {
    pub fn point_count(self) -> usize {
        match self {
            CurveKind::Line | CurveKind::Circle => 2,
            CurveKind::Arc => 3,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            CurveKind::Line => "line",
            CurveKind::Circle => "circle",
            CurveKind::Arc => "arc",
        }
    }
}

impl fmt::Display for CurveKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A curve defined by its control points. Construction validates it, so
/// every `Curve` value is non-degenerate.
///
/// - line: the two endpoints
/// - circle: two points on a diameter
/// - arc: start, a point the arc passes through, end
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "CurveRepr", into = "CurveRepr")]
pub enum Curve {
    Line([Point; 2]),
    Circle([Point; 2]),
    Arc([Point; 3]),
}

#[derive(Serialize, Deserialize)]
struct CurveRepr {
    #[serde(rename = "type")]
    kind: CurveKind,
    control_points: Vec<Point>,
}

impl TryFrom<CurveRepr> for Curve {
    type Error = GeometryError;
    fn try_from(r: CurveRepr) -> Result<Self, Self::Error> {
        Curve::new(r.kind, &r.control_points)
    }
}

impl From<Curve> for CurveRepr {
    fn from(c: Curve) -> Self {
        CurveRepr {
            kind: c.kind(),
            control_points: c.control_points().to_vec(),
        }
    }
}

impl Curve {
    pub fn new(kind: CurveKind, points: &[Point]) -> Result<Curve, GeometryError> {
        if points.len() != kind.point_count() {
            return Err(GeometryError::WrongPointCount {
                kind,
                expected: kind.point_count(),
                got: points.len(),
            });
        }
        let curve = match kind {
            CurveKind::Line => Curve::Line([points[0], points[1]]),
            CurveKind::Circle => Curve::Circle([points[0], points[1]]),
            CurveKind::Arc => Curve::Arc([points[0], points[1], points[2]]),
        };
        curve.validate()?;
        Ok(curve)
    }

    pub fn line(a: Point, b: Point) -> Result<Curve, GeometryError> {
        Curve::new(CurveKind::Line, &[a, b])
    }

    pub fn circle(a: Point, b: Point) -> Result<Curve, GeometryError> {
        Curve::new(CurveKind::Circle, &[a, b])
    }

    pub fn arc(start: Point, mid: Point, end: Point) -> Result<Curve, GeometryError> {
        Curve::new(CurveKind::Arc, &[start, mid, end])
    }

    pub fn kind(&self) -> CurveKind {
        match self {
            Curve::Line(_) => CurveKind::Line,
            Curve::Circle(_) => CurveKind::Circle,
            Curve::Arc(_) => CurveKind::Arc,
        }
    }

    pub fn control_points(&self) -> &[Point] {
        match self {
            Curve::Line(p) | Curve::Circle(p) => p,
            Curve::Arc(p) => p,
        }
    }

    /// Returns a copy with every control point passed through `f`, validated.
    pub fn map_points(&self, f: impl Fn(Point) -> Point) -> Result<Curve, GeometryError> {
        let pts: Vec<Point> = self.control_points().iter().map(|&p| f(p)).collect();
        Curve::new(self.kind(), &pts)
    }

    pub(crate) fn validate(&self) -> Result<(), GeometryError> {
        let kind = self.kind();
        if !self.control_points().iter().all(|p| p.is_finite()) {
            return Err(GeometryError::NonFinite { kind });
        }
        match *self {
            Curve::Line([a, b]) => {
                if a.dist(b) <= EPS_GEOM {
                    return Err(GeometryError::DegenerateCurve {
                        kind,
                        reason: "endpoints coincide",
                    });
                }
            }
            Curve::Circle([a, b]) => {
                if a.dist(b) <= EPS_GEOM {
                    return Err(GeometryError::DegenerateCurve {
                        kind,
                        reason: "diameter points coincide",
                    });
                }
            }
            Curve::Arc([s, m, e]) => {
                if s.dist(m) <= EPS_GEOM || m.dist(e) <= EPS_GEOM || s.dist(e) <= EPS_GEOM {
                    return Err(GeometryError::DegenerateCurve {
                        kind,
                        reason: "control points not pairwise distinct",
                    });
                }
                let area = 0.5 * (m - s).cross(e - s).abs();
                if area <= EPS_GEOM * EPS_GEOM {
                    return Err(GeometryError::DegenerateCurve {
                        kind,
                        reason: "control points are collinear",
                    });
                }
            }
        }
        Ok(())
    }

    /// Same kind and control points within `eps`; circle diameter points
    /// match in either order.
    pub fn matches(&self, other: &Curve, eps: f64) -> bool {
        let close = |a: &[Point], b: &[Point]| a.iter().zip(b).all(|(p, q)| p.dist(*q) <= eps);
        match (self, other) {
            (Curve::Line(a), Curve::Line(b)) => close(a, b),
            (Curve::Arc(a), Curve::Arc(b)) => close(a, b),
            (Curve::Circle(a), Curve::Circle(b)) => close(a, b) || close(a, &[b[1], b[0]]),
            _ => false,
        }
    }

    /// Exact identity, used where sampled points are known to lie on the curve.
    pub(crate) fn same_bits(&self, other: &Curve) -> bool {
        let eq = |a: &[Point], b: &[Point]| a.iter().zip(b).all(|(p, q)| p.key() == q.key());
        match (self, other) {
            (Curve::Line(a), Curve::Line(b)) => eq(a, b),
            (Curve::Arc(a), Curve::Arc(b)) => eq(a, b),
            (Curve::Circle(a), Curve::Circle(b)) => eq(a, b) || eq(a, &[b[1], b[0]]),
            _ => false,
        }
    }

    /// Total order by kind, then control points lexicographically.
    pub fn canonical_cmp(&self, other: &Curve) -> Ordering {
        self.kind().cmp(&other.kind()).then_with(|| {
            self.control_points()
                .iter()
                .zip(other.control_points())
                .map(|(a, b)| a.lex_cmp(b))
                .find(|o| o.is_ne())
                .unwrap_or(Ordering::Equal)
        })
    }

    pub fn circle_params(&self) -> Option<CircleParams> {
        match *self {
            Curve::Circle([a, b]) => Some(CircleParams::from_diameter(a, b)),
            _ => None,
        }
    }

    pub fn arc_params(&self) -> Option<ArcParams> {
        match *self {
            Curve::Arc([s, m, e]) => ArcParams::through(s, m, e).ok(),
            _ => None,
        }
    }

    /// `n` points along the curve.
    ///
    /// Lines include both endpoints at parameters `i/(n-1)`. Arcs are spaced
    /// evenly in angle from start to end inclusive. Circles start at the
    /// first diameter point and go clockwise over a full turn, without
    /// repeating the starting point.
    pub fn sample(&self, n: usize) -> Vec<Point> {
        let n = n.max(2);
        match *self {
            Curve::Line([a, b]) => (0..n)
                .map(|i| {
                    let t = i as f64 / (n - 1) as f64;
                    if i == n - 1 {
                        b
                    } else {
                        a + (b - a) * t
                    }
                })
                .collect(),
            Curve::Circle([a, b]) => {
                let c = CircleParams::from_diameter(a, b);
                let start = (a - c.center).y.atan2((a - c.center).x);
                (0..n)
                    .map(|i| {
                        if i == 0 {
                            a
                        } else {
                            c.at(start - TAU * i as f64 / n as f64)
                        }
                    })
                    .collect()
            }
            Curve::Arc([s, m, e]) => {
                let arc = ArcParams::through_unchecked(s, m, e);
                (0..n)
                    .map(|i| {
                        if i == 0 {
                            s
                        } else if i == n - 1 {
                            e
                        } else {
                            arc.at(arc.start_angle + arc.sweep * i as f64 / (n - 1) as f64)
                        }
                    })
                    .collect()
            }
        }
    }

    /// Exact Euclidean distance from `p` to the curve's point set.
    pub fn distance_to(&self, p: Point) -> f64 {
        match *self {
            Curve::Line([a, b]) => dist_point_segment(p, a, b),
            Curve::Circle([a, b]) => {
                let c = CircleParams::from_diameter(a, b);
                (p.dist(c.center) - c.radius).abs()
            }
            Curve::Arc([s, m, e]) => {
                let arc = ArcParams::through_unchecked(s, m, e);
                let r = p.dist(arc.center);
                if r == 0.0 {
                    // every arc point is equidistant from the center
                    return arc.radius;
                }
                let theta = (p - arc.center).y.atan2((p - arc.center).x);
                if arc.contains_angle(theta) {
                    (r - arc.radius).abs()
                } else {
                    p.dist(s).min(p.dist(e))
                }
            }
        }
    }
}

/// Distance from `p` to the closed segment `a`–`b` (project and clamp).
pub fn dist_point_segment(p: Point, a: Point, b: Point) -> f64 {
    let ab = b - a;
    let len2 = ab.dot(ab);
    if len2 == 0.0 {
        return p.dist(a);
    }
    let t = ((p - a).dot(ab) / len2).clamp(0.0, 1.0);
    p.dist(a + ab * t)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CircleParams {
    pub center: Point,
    pub radius: f64,
}

impl CircleParams {
    pub fn from_diameter(a: Point, b: Point) -> Self {
        CircleParams {
            center: a.midpoint(b),
            radius: 0.5 * a.dist(b),
        }
    }

    fn at(&self, angle: f64) -> Point {
        Point::new(
            self.center.x + self.radius * angle.cos(),
            self.center.y + self.radius * angle.sin(),
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Orientation {
    Clockwise,
    CounterClockwise,
}

/// Circumcircle of an arc's control points plus the oriented angular span
/// that goes from start to end through the middle point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ArcParams {
    pub center: Point,
    pub radius: f64,
    /// Radians, in `(-π, π]`.
    pub start_angle: f64,
    /// Radians, in `(-π, π]`.
    pub end_angle: f64,
    /// Signed sweep from start to end: positive counterclockwise.
    pub sweep: f64,
    pub orientation: Orientation,
}

impl ArcParams {
    pub fn through(start: Point, mid: Point, end: Point) -> Result<Self, GeometryError> {
        Curve::Arc([start, mid, end]).validate()?;
        Ok(Self::through_unchecked(start, mid, end))
    }

    fn through_unchecked(start: Point, mid: Point, end: Point) -> Self {
        // circumcenter relative to `start`
        let b = mid - start;
        let c = end - start;
        let d = 2.0 * b.cross(c);
        let bb = b.dot(b);
        let cc = c.dot(c);
        let ux = (c.y * bb - b.y * cc) / d;
        let uy = (b.x * cc - c.x * bb) / d;
        let center = Point::new(start.x + ux, start.y + uy);
        let radius = Point::new(ux, uy).norm();
        let angle = |p: Point| (p - center).y.atan2((p - center).x);
        let start_angle = angle(start);
        let end_angle = angle(end);
        let orientation = if b.cross(c) > 0.0 {
            Orientation::CounterClockwise
        } else {
            Orientation::Clockwise
        };
        let ccw_span = (end_angle - start_angle).rem_euclid(TAU);
        let sweep = match orientation {
            Orientation::CounterClockwise => ccw_span,
            Orientation::Clockwise => -(TAU - ccw_span).rem_euclid(TAU),
        };
        ArcParams {
            center,
            radius,
            start_angle,
            end_angle,
            sweep,
            orientation,
        }
    }

    pub fn at(&self, angle: f64) -> Point {
        Point::new(
            self.center.x + self.radius * angle.cos(),
            self.center.y + self.radius * angle.sin(),
        )
    }

    pub fn is_large(&self) -> bool {
        self.sweep.abs() > PI
    }

    /// Whether the ray from the center at `theta` crosses the arc.
    pub fn contains_angle(&self, theta: f64) -> bool {
        let offset = match self.orientation {
            Orientation::CounterClockwise => (theta - self.start_angle).rem_euclid(TAU),
            Orientation::Clockwise => (self.start_angle - theta).rem_euclid(TAU),
        };
        offset <= self.sweep.abs()
    }
}
