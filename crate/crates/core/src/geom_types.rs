//! Planar value types shared by the fitters and the Monte Carlo lab.
//!
//! A fitted contour is a [`GeneralizedCircle`]: either a proper circle or a
//! line, the latter being the limit of a circle whose radius grows without
//! bound. The algebraic [`PrattVector`] form covers both cases uniformly.

use serde::{Deserialize, Serialize};
use std::ops::Deref;

use crate::error::GeomError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point2 {
    pub x: f64,
    pub y: f64,
}

impl Point2 {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn dist(&self, other: &Point2) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

impl From<(f64, f64)> for Point2 {
    fn from((x, y): (f64, f64)) -> Self {
        Self { x, y }
    }
}

/// Ordered planar observations. Holds at least two finite points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Point2>", into = "Vec<Point2>")]
pub struct PointSet(Vec<Point2>);

impl PointSet {
    pub const MIN_LEN: usize = 2;

    pub fn new(points: Vec<Point2>) -> Result<Self, GeomError> {
        if points.len() < Self::MIN_LEN {
            return Err(GeomError::TooFewPoints {
                required: Self::MIN_LEN,
                got: points.len(),
            });
        }
        if let Some(i) = points
            .iter()
            .position(|p| !p.x.is_finite() || !p.y.is_finite())
        {
            return Err(GeomError::NonFinite(i));
        }
        Ok(Self(points))
    }

    pub fn from_xy(xy: &[(f64, f64)]) -> Result<Self, GeomError> {
        Self::new(xy.iter().copied().map(Point2::from).collect())
    }

    pub fn points(&self) -> &[Point2] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<Point2> {
        self.0
    }

    pub fn centroid(&self) -> Point2 {
        centroid(&self.0)
    }

    /// Diagonal of the axis-aligned bounding box. Within a factor √2 of the
    /// true diameter and linear-time, which is what the scale-aware
    /// tolerances need.
    pub fn extent(&self) -> f64 {
        extent(&self.0)
    }

    pub fn map(&self, f: impl Fn(Point2) -> Point2) -> PointSet {
        PointSet(self.0.iter().copied().map(f).collect())
    }
}

impl Deref for PointSet {
    type Target = [Point2];
    fn deref(&self) -> &[Point2] {
        &self.0
    }
}

impl TryFrom<Vec<Point2>> for PointSet {
    type Error = GeomError;
    fn try_from(v: Vec<Point2>) -> Result<Self, GeomError> {
        PointSet::new(v)
    }
}

impl From<PointSet> for Vec<Point2> {
    fn from(p: PointSet) -> Self {
        p.0
    }
}

pub(crate) fn centroid(points: &[Point2]) -> Point2 {
    let n = points.len() as f64;
    let (sx, sy) = points
        .iter()
        .fold((0.0, 0.0), |(sx, sy), p| (sx + p.x, sy + p.y));
    Point2::new(sx / n, sy / n)
}

pub(crate) fn extent(points: &[Point2]) -> f64 {
    let mut lo = Point2::new(f64::INFINITY, f64::INFINITY);
    let mut hi = Point2::new(f64::NEG_INFINITY, f64::NEG_INFINITY);
    for p in points {
        lo.x = lo.x.min(p.x);
        lo.y = lo.y.min(p.y);
        hi.x = hi.x.max(p.x);
        hi.y = hi.y.max(p.y);
    }
    (hi.x - lo.x).hypot(hi.y - lo.y)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Circle {
    pub a: f64,
    pub b: f64,
    #[serde(rename = "R")]
    pub r: f64,
}

impl Circle {
    pub fn new(a: f64, b: f64, r: f64) -> Result<Self, GeomError> {
        if !(r > 0.0 && r.is_finite()) || !a.is_finite() || !b.is_finite() {
            return Err(GeomError::BadRadius(r));
        }
        Ok(Self { a, b, r })
    }

    pub fn center(&self) -> Point2 {
        Point2::new(self.a, self.b)
    }
}

/// The line `nx·x + ny·y + d = 0` with a unit normal.
///
/// The normal is kept in canonical orientation: its first nonzero component
/// is positive, so each geometric line has exactly one representation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Line {
    pub nx: f64,
    pub ny: f64,
    pub d: f64,
}

impl Line {
    pub fn new(nx: f64, ny: f64, d: f64) -> Result<Self, GeomError> {
        let norm = nx.hypot(ny);
        if !(norm > 0.0 && norm.is_finite()) || !d.is_finite() {
            return Err(GeomError::BadNormal);
        }
        let (mut nx, mut ny, mut d) = (nx / norm, ny / norm, d / norm);
        if nx < 0.0 || (nx == 0.0 && ny < 0.0) {
            nx = -nx;
            ny = -ny;
            d = -d;
        }
        // avoid -0.0 so serialized output is stable
        Ok(Self {
            nx: nx + 0.0,
            ny: ny + 0.0,
            d: d + 0.0,
        })
    }

    /// Line through `p` with the given normal angle.
    pub fn through(p: Point2, normal_angle: f64) -> Self {
        let (s, c) = normal_angle.sin_cos();
        Self::new(c, s, -(c * p.x + s * p.y)).expect("unit normal")
    }

    pub fn normal_angle(&self) -> f64 {
        self.ny.atan2(self.nx)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum GeneralizedCircle {
    Circle(Circle),
    Line(Line),
}

impl GeneralizedCircle {
    pub fn as_circle(&self) -> Option<&Circle> {
        match self {
            GeneralizedCircle::Circle(c) => Some(c),
            GeneralizedCircle::Line(_) => None,
        }
    }

    pub fn as_line(&self) -> Option<&Line> {
        match self {
            GeneralizedCircle::Line(l) => Some(l),
            GeneralizedCircle::Circle(_) => None,
        }
    }

    pub fn is_line(&self) -> bool {
        matches!(self, GeneralizedCircle::Line(_))
    }

    /// Image under `p ↦ scale·R(angle)·p + shift`.
    pub fn transformed(&self, scale: f64, angle: f64, shift: Point2) -> GeneralizedCircle {
        let (s, c) = angle.sin_cos();
        match *self {
            GeneralizedCircle::Circle(k) => {
                let a = scale * (c * k.a - s * k.b) + shift.x;
                let b = scale * (s * k.a + c * k.b) + shift.y;
                GeneralizedCircle::Circle(Circle {
                    a,
                    b,
                    r: scale * k.r,
                })
            }
            GeneralizedCircle::Line(l) => {
                let nx = c * l.nx - s * l.ny;
                let ny = s * l.nx + c * l.ny;
                let d = scale * l.d - (nx * shift.x + ny * shift.y);
                GeneralizedCircle::Line(Line::new(nx, ny, d).expect("rotated unit normal"))
            }
        }
    }
}

impl From<Circle> for GeneralizedCircle {
    fn from(c: Circle) -> Self {
        GeneralizedCircle::Circle(c)
    }
}

impl From<Line> for GeneralizedCircle {
    fn from(l: Line) -> Self {
        GeneralizedCircle::Line(l)
    }
}

/// Coefficients of `A(x²+y²) + Bx + Cy + D = 0` with `B² + C² − 4AD = 1`.
///
/// Normalized so that `A > 0`, or `A = 0` and the first nonzero of `(B, C)`
/// is positive.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrattVector {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub d: f64,
}

impl PrattVector {
    pub const CONSTRAINT_TOL: f64 = 1e-9;

    pub fn constraint(&self) -> f64 {
        self.b * self.b + self.c * self.c - 4.0 * self.a * self.d
    }

    /// Rescale an arbitrary coefficient vector onto the constraint set and
    /// apply the sign convention. `None` if `B² + C² − 4AD ≤ 0`.
    pub fn normalized(a: f64, b: f64, c: f64, d: f64) -> Option<Self> {
        let k = b * b + c * c - 4.0 * a * d;
        if !(k > 0.0 && k.is_finite()) {
            return None;
        }
        let s = k.sqrt();
        let mut v = Self {
            a: a / s,
            b: b / s,
            c: c / s,
            d: d / s,
        };
        let flip = v.a < 0.0 || (v.a == 0.0 && (v.b < 0.0 || (v.b == 0.0 && v.c < 0.0)));
        if flip {
            v = Self {
                a: -v.a,
                b: -v.b,
                c: -v.c,
                d: -v.d,
            };
        }
        Some(Self {
            a: v.a + 0.0,
            b: v.b + 0.0,
            c: v.c + 0.0,
            d: v.d + 0.0,
        })
    }

    pub fn to_array(&self) -> [f64; 4] {
        [self.a, self.b, self.c, self.d]
    }
}

pub fn circle_from_pratt(v: &PrattVector) -> GeneralizedCircle {
    if v.a != 0.0 {
        let two_a = 2.0 * v.a;
        GeneralizedCircle::Circle(Circle {
            a: -v.b / two_a,
            b: -v.c / two_a,
            r: 1.0 / two_a.abs(),
        })
    } else {
        GeneralizedCircle::Line(Line::new(v.b, v.c, v.d).expect("constraint gives unit normal"))
    }
}

pub fn pratt_from_circle(g: &GeneralizedCircle) -> PrattVector {
    match *g {
        GeneralizedCircle::Circle(k) => {
            let a = 0.5 / k.r;
            // D = A(a² + b² − R²), factored to keep precision when R ≈ |center|
            let rho = k.a.hypot(k.b);
            let d = a * (rho - k.r) * (rho + k.r);
            PrattVector {
                a,
                b: -2.0 * a * k.a + 0.0,
                c: -2.0 * a * k.b + 0.0,
                d: d + 0.0,
            }
        }
        GeneralizedCircle::Line(l) => {
            PrattVector::normalized(0.0, l.nx, l.ny, l.d).expect("unit normal line")
        }
    }
}

/// Center polar coordinates: `a = cos(theta)/q`, `b = sin(theta)/q`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CenterPolar {
    pub q: f64,
    pub theta: f64,
}

/// Alternative circle parameters with finite estimator moments.
///
/// `polar` is `None` when the center sits at the origin; the other fields
/// remain valid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AltParams {
    pub rho_curv: f64,
    pub c: f64,
    pub d: f64,
    pub polar: Option<CenterPolar>,
}

impl AltParams {
    pub fn center_at_origin(&self) -> bool {
        self.polar.is_none()
    }
}

pub fn to_alternative_params(k: &Circle) -> AltParams {
    let dist = k.a.hypot(k.b);
    AltParams {
        rho_curv: 1.0 / k.r,
        c: k.a / k.r,
        d: k.b / k.r,
        polar: (dist > 0.0).then(|| CenterPolar {
            q: 1.0 / dist,
            theta: k.b.atan2(k.a),
        }),
    }
}

/// Signed distance from `p` to the contour: positive outside a circle, and
/// along the normal for a line.
pub fn residual(g: &GeneralizedCircle, p: &Point2) -> f64 {
    match g {
        GeneralizedCircle::Circle(k) => (p.x - k.a).hypot(p.y - k.b) - k.r,
        GeneralizedCircle::Line(l) => l.nx * p.x + l.ny * p.y + l.d,
    }
}

/// Sum of squared residuals over `points`.
pub fn sum_sq_residuals(g: &GeneralizedCircle, points: &[Point2]) -> f64 {
    points.iter().map(|p| residual(g, p).powi(2)).sum()
}
