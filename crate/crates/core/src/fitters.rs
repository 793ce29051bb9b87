//! Circle and line estimators.
//!
//! All fitters work internally in a normalized frame (centroid at the
//! origin, bounding-box diagonal scaled to one) and map the result back, so
//! the scale-aware tolerances below are dimensionless.

use nalgebra::{DMatrix, Matrix2, Matrix3, Matrix4, SymmetricEigen, Vector2, Vector3, Vector4};
use serde::{Deserialize, Serialize};

use crate::error::FitError;
use crate::geom_types::{
    centroid, circle_from_pratt, extent, pratt_from_circle, Circle, GeneralizedCircle, Line,
    Point2, PrattVector,
};
use crate::objective::{
    objective_full, objective_polar, polar_derivatives, polar_radius, polar_residual_sum,
    radius_hat, PolarParams,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitMethod {
    Geometric,
    Kasa,
    Pratt,
    Circumcircle,
    LineOdr,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Degeneracy {
    None,
    CollinearInput,
    RadiusOverflow,
    MultipleMinimaSuspected,
}

/// Final state of the polar branch, kept so callers can read `1/â` without
/// going through a center that may be astronomically far away.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PolarState {
    pub params: PolarParams,
    pub origin: Point2,
    pub scale: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FitResult {
    pub model: GeneralizedCircle,
    pub objective: f64,
    pub method: FitMethod,
    pub converged: bool,
    pub iterations: usize,
    pub degeneracy: Degeneracy,
    #[serde(skip)]
    pub polar: Option<PolarState>,
}

impl FitResult {
    pub fn pratt(&self) -> PrattVector {
        pratt_from_circle(&self.model)
    }

    /// `1/â`; zero for a line.
    pub fn center_x_reciprocal(&self) -> f64 {
        if let Some(ps) = &self.polar {
            let PolarParams { delta, theta } = ps.params;
            return delta / (ps.origin.x * delta + ps.scale * theta.cos());
        }
        match &self.model {
            GeneralizedCircle::Circle(c) => 1.0 / c.a,
            GeneralizedCircle::Line(_) => 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GeomFitOptions {
    pub max_iterations: usize,
    /// Gradient-norm stopping threshold, relative to the data extent.
    pub grad_tol: f64,
    /// Hand over to the polar parametrization once `R` exceeds this multiple
    /// of the data extent.
    pub radius_switch_factor: f64,
    /// Report a line when the polar branch ends with `|δ|·extent` below this.
    pub line_delta_tol: f64,
    pub multistart: usize,
    /// Run the polar branch regardless of the radius.
    pub force_polar: bool,
}

impl Default for GeomFitOptions {
    fn default() -> Self {
        Self {
            max_iterations: 200,
            grad_tol: 1e-12,
            radius_switch_factor: 100.0,
            line_delta_tol: 1e-12,
            multistart: 1,
            force_polar: false,
        }
    }
}

// ---------------------------------------------------------------------------
// normalized frame

#[derive(Debug, Clone, Copy)]
struct Frame {
    origin: Point2,
    scale: f64,
}

impl Frame {
    fn of(points: &[Point2]) -> Result<(Frame, Vec<Point2>), FitError> {
        let origin = centroid(points);
        let scale = extent(points);
        if !scale.is_finite() {
            return Err(FitError::NumericFailure("data extent"));
        }
        if scale == 0.0 {
            return Err(FitError::DegenerateScatter);
        }
        let local = points
            .iter()
            .map(|p| Point2::new((p.x - origin.x) / scale, (p.y - origin.y) / scale))
            .collect();
        Ok((Frame { origin, scale }, local))
    }

    fn to_world(&self, g: &GeneralizedCircle) -> GeneralizedCircle {
        g.transformed(self.scale, 0.0, self.origin)
    }
}

/// Sum of squared orthogonal distances for a local-frame model, using the
/// cancellation-free polar evaluation for large circles.
fn local_objective(local: &[Point2], g: &GeneralizedCircle) -> f64 {
    match g {
        GeneralizedCircle::Circle(c) if c.r > 10.0 => match PolarParams::from_center(c.a, c.b) {
            Some(p) => polar_residual_sum(local, p),
            None => objective_full(local, c.a, c.b, c.r),
        },
        GeneralizedCircle::Circle(c) => objective_full(local, c.a, c.b, c.r),
        GeneralizedCircle::Line(l) => local
            .iter()
            .map(|p| (l.nx * p.x + l.ny * p.y + l.d).powi(2))
            .sum(),
    }
}

fn require(points: &[Point2], n: usize) -> Result<(), FitError> {
    if points.len() < n {
        return Err(FitError::TooFewPoints {
            required: n,
            got: points.len(),
        });
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// three points

/// Circle through three points, or their line when they are collinear.
pub fn circumcircle(p1: Point2, p2: Point2, p3: Point2) -> Result<GeneralizedCircle, FitError> {
    let pts = [p1, p2, p3];
    let ext = extent(&pts);
    if !ext.is_finite() {
        return Err(FitError::NumericFailure("circumcircle input"));
    }
    let tol = 1e-14 * ext;
    if ext == 0.0 || p1.dist(&p2) <= tol || p1.dist(&p3) <= tol || p2.dist(&p3) <= tol {
        return Err(FitError::DuplicatePoints);
    }
    let (bx, by) = (p2.x - p1.x, p2.y - p1.y);
    let (cx, cy) = (p3.x - p1.x, p3.y - p1.y);
    let cross = bx * cy - by * cx;
    if 0.5 * cross.abs() < 1e-14 * ext * ext {
        return line_odr_fit(&pts).map(|(l, _)| l.into());
    }
    let (b2, c2) = (bx * bx + by * by, cx * cx + cy * cy);
    let d = 2.0 * cross;
    let ux = (cy * b2 - by * c2) / d;
    let uy = (bx * c2 - cx * b2) / d;
    Ok(Circle {
        a: p1.x + ux,
        b: p1.y + uy,
        r: ux.hypot(uy),
    }
    .into())
}

// ---------------------------------------------------------------------------
// Kåsa

fn scatter(local: &[Point2]) -> Matrix2<f64> {
    local.iter().fold(Matrix2::zeros(), |m, p| {
        m + Matrix2::new(p.x * p.x, p.x * p.y, p.x * p.y, p.y * p.y)
    })
}

fn is_collinear(local: &[Point2]) -> bool {
    let ev = SymmetricEigen::new(scatter(local)).eigenvalues;
    let (lo, hi) = (ev.min().max(0.0), ev.max());
    lo.sqrt() <= 1e-12 * hi.sqrt()
}

/// Kåsa circle in the local (centered) frame. With centered data the
/// constant term decouples, leaving a 2×2 solve for the linear terms.
fn kasa_local(local: &[Point2]) -> Result<Circle, FitError> {
    if is_collinear(local) {
        return Err(FitError::CollinearData);
    }
    let n = local.len() as f64;
    let s = scatter(local);
    let (mut rx, mut ry, mut zs) = (0.0, 0.0, 0.0);
    for p in local {
        let z = p.x * p.x + p.y * p.y;
        rx += p.x * z;
        ry += p.y * z;
        zs += z;
    }
    let lin = s
        .lu()
        .solve(&Vector2::new(-rx, -ry))
        .ok_or(FitError::CollinearData)?;
    let c = -zs / n;
    let (a, b) = (-0.5 * lin[0], -0.5 * lin[1]);
    let r2 = a * a + b * b - c;
    if !(r2 > 0.0) {
        return Err(FitError::NegativeRadicand(r2));
    }
    Ok(Circle { a, b, r: r2.sqrt() })
}

/// Algebraic fit minimizing `Σ [(x−a)² + (y−b)² − R²]²`.
pub fn kasa_fit(points: &[Point2]) -> Result<FitResult, FitError> {
    require(points, 3)?;
    let (frame, local) = Frame::of(points).map_err(|e| match e {
        FitError::DegenerateScatter => FitError::CollinearData,
        e => e,
    })?;
    let c = kasa_local(&local)?;
    let g = GeneralizedCircle::Circle(c);
    Ok(FitResult {
        model: frame.to_world(&g),
        objective: local_objective(&local, &g) * frame.scale * frame.scale,
        method: FitMethod::Kasa,
        converged: true,
        iterations: 0,
        degeneracy: Degeneracy::None,
        polar: None,
    })
}

// ---------------------------------------------------------------------------
// Pratt

fn pratt_local(local: &[Point2]) -> Result<GeneralizedCircle, FitError> {
    let rows = local.len().max(4);
    let mut z = DMatrix::<f64>::zeros(rows, 4);
    for (i, p) in local.iter().enumerate() {
        z[(i, 0)] = p.x * p.x + p.y * p.y;
        z[(i, 1)] = p.x;
        z[(i, 2)] = p.y;
        z[(i, 3)] = 1.0;
    }
    let svd = z.svd(false, true);
    let vt = svd.v_t.ok_or(FitError::NumericFailure("pratt svd"))?;
    let sv = &svd.singular_values;
    let (imin, smin) = sv.argmin();
    let smax = sv.max();

    let coeffs: Vector4<f64> = if smin <= 1e-12 * smax {
        // exact fit: the null vector already satisfies the data
        vt.row(imin).transpose().fixed_rows::<4>(0).into_owned()
    } else {
        let v = Matrix4::from_fn(|i, j| vt[(j, i)]);
        let sigma = Matrix4::from_diagonal(&Vector4::from_fn(|i, _| sv[i]));
        let sigma_inv = Matrix4::from_diagonal(&Vector4::from_fn(|i, _| 1.0 / sv[i]));
        let y = v * sigma * v.transpose();
        let n_inv = Matrix4::new(
            0.0, 0.0, 0.0, -0.5, //
            0.0, 1.0, 0.0, 0.0, //
            0.0, 0.0, 1.0, 0.0, //
            -0.5, 0.0, 0.0, 0.0,
        );
        let w = y * n_inv * y;
        let w = 0.5 * (w + w.transpose());
        let eig = SymmetricEigen::new(w);
        // smallest positive generalized eigenvalue = feasible stationary
        // point with the smallest algebraic objective
        let best = (0..4)
            .filter(|&k| eig.eigenvalues[k] > 0.0)
            .min_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]))
            .ok_or(FitError::NumericFailure("pratt eigenvalues"))?;
        v * sigma_inv * v.transpose() * eig.eigenvectors.column(best)
    };

    let (a, b, c, d) = (coeffs[0], coeffs[1], coeffs[2], coeffs[3]);
    let v = PrattVector::normalized(a, b, c, d).ok_or(FitError::NumericFailure("pratt constraint"))?;
    let v = if v.a.abs() <= 1e-12 {
        PrattVector::normalized(0.0, v.b, v.c, v.d)
            .ok_or(FitError::NumericFailure("pratt line"))?
    } else {
        v
    };
    Ok(circle_from_pratt(&v))
}

/// Algebraic fit under the constraint `B² + C² − 4AD = 1`; returns a line
/// when the data are collinear.
pub fn pratt_fit(points: &[Point2]) -> Result<FitResult, FitError> {
    require(points, 3)?;
    let (frame, local) = Frame::of(points)?;
    let g = pratt_local(&local)?;
    let model = frame.to_world(&g);
    Ok(FitResult {
        model,
        objective: local_objective(&local, &g) * frame.scale * frame.scale,
        method: FitMethod::Pratt,
        converged: true,
        iterations: 0,
        degeneracy: if model.is_line() {
            Degeneracy::CollinearInput
        } else {
            Degeneracy::None
        },
        polar: None,
    })
}

// ---------------------------------------------------------------------------
// lines

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "value", rename_all = "snake_case")]
pub enum SlopeEstimate {
    Finite(f64),
    /// `s_xy = 0` and `s_yy > s_xx`: the fitted line is vertical.
    Vertical,
    /// `s_xy = 0` and `s_xx = s_yy`: every direction fits equally well.
    NonUnique,
}

impl SlopeEstimate {
    pub fn finite(&self) -> Option<f64> {
        match self {
            SlopeEstimate::Finite(b) => Some(*b),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LineSlopeStats {
    pub s_xx: f64,
    pub s_yy: f64,
    pub s_xy: f64,
    pub beta_m: SlopeEstimate,
    /// `s_xy/s_xx`, absent when `s_xx = 0`.
    pub beta_l: Option<f64>,
}

fn second_moments(points: &[Point2]) -> (Point2, f64, f64, f64) {
    let c = centroid(points);
    let (mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0);
    for p in points {
        let (dx, dy) = (p.x - c.x, p.y - c.y);
        sxx += dx * dx;
        syy += dy * dy;
        sxy += dx * dy;
    }
    (c, sxx, syy, sxy)
}

/// Orthogonal-regression slope from the centered moments.
///
/// Uses the conjugate form `2s_xy / (√(D² + 4s_xy²) − D)`, `D = s_yy − s_xx`,
/// when `D < 0` so neither branch subtracts nearly equal numbers.
pub fn odr_slope(s_xx: f64, s_yy: f64, s_xy: f64) -> SlopeEstimate {
    if s_xy == 0.0 {
        return if s_xx > s_yy {
            SlopeEstimate::Finite(0.0)
        } else if s_yy > s_xx {
            SlopeEstimate::Vertical
        } else {
            SlopeEstimate::NonUnique
        };
    }
    let d = s_yy - s_xx;
    let root = d.hypot(2.0 * s_xy);
    SlopeEstimate::Finite(if d >= 0.0 {
        (d + root) / (2.0 * s_xy)
    } else {
        2.0 * s_xy / (root - d)
    })
}

/// Orthogonal least-squares line and its moment summary.
pub fn line_odr_fit(points: &[Point2]) -> Result<(Line, LineSlopeStats), FitError> {
    require(points, 2)?;
    if extent(points) == 0.0 {
        return Err(FitError::DegenerateScatter);
    }
    let (c, s_xx, s_yy, s_xy) = second_moments(points);
    let beta_m = odr_slope(s_xx, s_yy, s_xy);
    // normal (−β, 1); an isotropic scatter leaves the direction free, take horizontal
    let (nx, ny) = match beta_m {
        SlopeEstimate::Finite(b) => (-b, 1.0),
        SlopeEstimate::Vertical => (1.0, 0.0),
        SlopeEstimate::NonUnique => (0.0, 1.0),
    };
    let line = Line::new(nx, ny, -(nx * c.x + ny * c.y)).map_err(|_| FitError::NumericFailure("odr normal"))?;
    let stats = LineSlopeStats {
        s_xx,
        s_yy,
        s_xy,
        beta_m,
        beta_l: (s_xx > 0.0).then(|| s_xy / s_xx),
    };
    Ok((line, stats))
}

/// Ordinary least-squares slope `s_xy/s_xx`.
pub fn line_ls_slope(points: &[Point2]) -> Result<f64, FitError> {
    require(points, 2)?;
    let (_, s_xx, _, s_xy) = second_moments(points);
    if s_xx == 0.0 {
        return Err(FitError::ZeroVariance);
    }
    Ok(s_xy / s_xx)
}

// ---------------------------------------------------------------------------
// geometric fit

#[derive(Debug, Clone, Copy)]
enum Start {
    Circle(Circle),
    Line(Line),
}

#[derive(Debug, Clone, Copy)]
enum LocalModel {
    Circle(Circle),
    Polar(PolarParams),
}

#[derive(Debug, Clone, Copy)]
struct Candidate {
    model: LocalModel,
    objective: f64,
    iterations: usize,
    converged: bool,
}

impl Candidate {
    fn to_local_gc(&self, local: &[Point2], line_delta_tol: f64) -> GeneralizedCircle {
        match self.model {
            LocalModel::Circle(c) => c.into(),
            LocalModel::Polar(p) => polar_to_gc(local, p, line_delta_tol),
        }
    }
}

fn polar_to_gc(local: &[Point2], p: PolarParams, line_delta_tol: f64) -> GeneralizedCircle {
    let (sin, cos) = p.theta.sin_cos();
    if p.delta.abs() <= line_delta_tol {
        // offset of the nearest circle point along θ: −mean(s_i − 1)/δ
        let n = local.len() as f64;
        let d = p.delta;
        let offset = -local
            .iter()
            .map(|q| {
                let u = q.x * cos + q.y * sin;
                let v = -q.x * sin + q.y * cos;
                let s = (1.0 - u * d).hypot(v * d);
                (-2.0 * u + (u * u + v * v) * d) / (s + 1.0)
            })
            .sum::<f64>()
            / n;
        Line::new(cos, sin, -offset).expect("unit normal").into()
    } else {
        Circle {
            a: cos / p.delta,
            b: sin / p.delta,
            r: polar_radius(local, p),
        }
        .into()
    }
}

/// Relative objective increase tolerated as rounding, so Gauss-Newton can
/// keep polishing parameters after the objective stops resolving progress.
const NOISE: f64 = 1e-14;
/// Steps below this (relative) are at the rounding floor of the gradient.
const STEP_FLOOR: f64 = 1e-13;

enum LmOutcome {
    Done(Candidate),
    Overflow { center: (f64, f64), iterations: usize },
}

fn lm_circle(local: &[Point2], start: Circle, opts: &GeomFitOptions) -> LmOutcome {
    let mut p = Vector3::new(start.a, start.b, start.r);
    let eval = |p: &Vector3<f64>| objective_full(local, p[0], p[1], p[2]);
    let mut f = eval(&p);
    let mut lambda: Option<f64> = None;
    let mut converged = false;
    let mut it = 0;
    while it < opts.max_iterations {
        it += 1;
        let mut jtj = Matrix3::<f64>::zeros();
        let mut jtr = Vector3::<f64>::zeros();
        for q in local {
            let (dx, dy) = (q.x - p[0], q.y - p[1]);
            let d = dx.hypot(dy);
            let row = if d > 0.0 {
                Vector3::new(-dx / d, -dy / d, -1.0)
            } else {
                Vector3::new(0.0, 0.0, -1.0)
            };
            jtj += row * row.transpose();
            jtr += row * (d - p[2]);
        }
        if jtr.norm() <= opts.grad_tol {
            converged = true;
            break;
        }
        let lam = lambda.get_or_insert(1e-3 * jtj.trace());
        let mut accepted = None;
        while *lam <= 1e30 * jtj.trace().max(f64::MIN_POSITIVE) {
            let step = (jtj + Matrix3::identity() * *lam)
                .cholesky()
                .map(|ch| ch.solve(&(-jtr)));
            if let Some(step) = step {
                let cand = p + step;
                if cand[2] > 0.0 && cand.iter().all(|x| x.is_finite()) {
                    let fc = eval(&cand);
                    if fc <= f * (1.0 + NOISE) {
                        *lam /= 10.0;
                        accepted = Some((cand, fc, step));
                        break;
                    }
                }
            }
            *lam *= 10.0;
        }
        let Some((cand, fc, step)) = accepted else {
            // no descent direction left at working precision
            converged = true;
            break;
        };
        let tiny = step.norm() <= STEP_FLOOR * (1.0 + p.norm());
        p = cand;
        f = fc;
        if p[2] > opts.radius_switch_factor {
            return LmOutcome::Overflow {
                center: (p[0], p[1]),
                iterations: it,
            };
        }
        if tiny {
            converged = true;
            break;
        }
    }
    LmOutcome::Done(Candidate {
        model: LocalModel::Circle(Circle {
            a: p[0],
            b: p[1],
            r: p[2],
        }),
        objective: f,
        iterations: it,
        converged,
    })
}

/// Damped Newton on the reduced polar objective `F(δ, θ)`.
fn newton_polar(local: &[Point2], start: PolarParams, used: usize, opts: &GeomFitOptions) -> Candidate {
    let mut p = start;
    let mut f = polar_residual_sum(local, p);
    let mut mu = 0.0;
    let mut converged = false;
    let mut it = used;
    while it < opts.max_iterations {
        it += 1;
        let Ok(der) = polar_derivatives(local, p) else {
            break;
        };
        let [g0, g1] = der.grad;
        if g0.hypot(g1) <= opts.grad_tol {
            converged = true;
            break;
        }
        let [h00, h01, h11] = der.hess;
        let floor = 1e-3 * (h00.abs() + h11.abs()).max(1e-12);
        let mut accepted = None;
        for _ in 0..60 {
            let (a, c) = (h00 + mu, h11 + mu);
            let det = a * c - h01 * h01;
            if a > 0.0 && det > 0.0 {
                let dd = -(c * g0 - h01 * g1) / det;
                let dt = -(a * g1 - h01 * g0) / det;
                let cand = PolarParams::new(p.delta + dd, p.theta + dt);
                if objective_polar(local, cand).is_ok() {
                    let fc = polar_residual_sum(local, cand);
                    if fc <= f * (1.0 + NOISE) {
                        accepted = Some((cand, fc, dd, dt));
                        mu /= 10.0;
                        if mu < 1e-12 * floor {
                            mu = 0.0;
                        }
                        break;
                    }
                }
            }
            mu = if mu == 0.0 { floor } else { mu * 10.0 };
        }
        let Some((cand, fc, dd, dt)) = accepted else {
            converged = true;
            break;
        };
        let tiny = dd.hypot(dt) <= STEP_FLOOR * (1.0 + p.delta.abs() + p.theta.abs());
        p = cand;
        f = fc;
        if tiny {
            converged = true;
            break;
        }
    }
    if p.delta < 0.0 {
        p = p.mirrored();
    }
    p.theta = p.theta.sin().atan2(p.theta.cos());
    Candidate {
        model: LocalModel::Polar(p),
        objective: f,
        iterations: it,
        converged,
    }
}

fn refine(local: &[Point2], start: Start, opts: &GeomFitOptions) -> Candidate {
    match start {
        Start::Circle(c) if !opts.force_polar && c.r <= opts.radius_switch_factor => {
            match lm_circle(local, c, opts) {
                LmOutcome::Done(cand) => cand,
                LmOutcome::Overflow { center, iterations } => {
                    let p = PolarParams::from_center(center.0, center.1).expect("far center");
                    newton_polar(local, p, iterations, opts)
                }
            }
        }
        Start::Circle(c) => {
            let p = PolarParams::from_center(c.a, c.b).unwrap_or(PolarParams::new(1.0 / c.r, 0.0));
            newton_polar(local, p, 0, opts)
        }
        Start::Line(l) => newton_polar(local, PolarParams::new(0.0, l.normal_angle()), 0, opts),
    }
}

fn start_of(g: &GeneralizedCircle) -> Start {
    match g {
        GeneralizedCircle::Circle(c) => Start::Circle(*c),
        GeneralizedCircle::Line(l) => Start::Line(*l),
    }
}

/// Orthogonal-distance fit in the extended sense: the best circle, or a
/// line when no circle does better.
///
/// Starts from the Kåsa circle (the ODR line when the Kåsa system is
/// singular), runs Levenberg-Marquardt on `(a, b, R)` and hands over to
/// damped Newton on `F(δ, θ)` once the radius outgrows the data. A restart
/// from the Pratt fit guarantees the result is never worse than either
/// algebraic fit.
pub fn geometric_fit(points: &[Point2], opts: &GeomFitOptions) -> Result<FitResult, FitError> {
    require(points, 3)?;
    let (frame, local) = Frame::of(points)?;

    let mut collinear_start = false;
    let kasa_start = match kasa_local(&local) {
        Ok(c) => Start::Circle(c),
        Err(FitError::CollinearData) | Err(FitError::NegativeRadicand(_)) => {
            collinear_start = true;
            let (l, _) = line_odr_fit(&local)?;
            Start::Line(l)
        }
        Err(e) => return Err(e),
    };

    let mut starts = vec![kasa_start];
    if let Start::Circle(c) = kasa_start {
        let extra = opts.multistart.saturating_sub(1).min(8);
        for k in 0..extra {
            let ang = std::f64::consts::TAU * k as f64 / 8.0;
            let (a, b) = (c.a + 0.1 * ang.cos(), c.b + 0.1 * ang.sin());
            let r = radius_hat(&local, a, b);
            starts.push(Start::Circle(Circle { a, b, r }));
        }
    }

    let mut candidates: Vec<Candidate> = starts.iter().map(|s| refine(&local, *s, opts)).collect();
    let best_obj = |cs: &[Candidate]| cs.iter().map(|c| c.objective).fold(f64::INFINITY, f64::min);
    if let Ok(pg) = pratt_local(&local) {
        if local_objective(&local, &pg) < best_obj(&candidates) {
            candidates.push(refine(&local, start_of(&pg), opts));
        }
    }

    let best = *candidates
        .iter()
        .min_by(|x, y| x.objective.total_cmp(&y.objective))
        .expect("at least one start");
    if !best.objective.is_finite() {
        return Err(FitError::NumericFailure("geometric objective"));
    }
    let total_iterations = candidates.iter().map(|c| c.iterations).sum();

    let local_gc = best.to_local_gc(&local, opts.line_delta_tol);
    let multiple = opts.multistart > 1
        && candidates.iter().any(|c| {
            (c.objective - best.objective).abs() < 1e-9
                && model_distance(&c.to_local_gc(&local, opts.line_delta_tol), &local_gc) > 1e-3
        });
    let used_polar = matches!(best.model, LocalModel::Polar(_));
    let degeneracy = if multiple {
        Degeneracy::MultipleMinimaSuspected
    } else if collinear_start || (local_gc.is_line() && is_collinear(&local)) {
        Degeneracy::CollinearInput
    } else if used_polar && !opts.force_polar {
        Degeneracy::RadiusOverflow
    } else {
        Degeneracy::None
    };

    let model = frame.to_world(&local_gc);
    let polar = match best.model {
        LocalModel::Polar(params) => Some(PolarState {
            params,
            origin: frame.origin,
            scale: frame.scale,
        }),
        LocalModel::Circle(_) => None,
    };
    let objective = best.objective * frame.scale * frame.scale;
    if !objective.is_finite() {
        return Err(FitError::NumericFailure("geometric objective"));
    }
    Ok(FitResult {
        model,
        objective,
        method: FitMethod::Geometric,
        converged: best.converged,
        iterations: total_iterations,
        degeneracy,
        polar,
    })
}

fn model_distance(x: &GeneralizedCircle, y: &GeneralizedCircle) -> f64 {
    match (x, y) {
        (GeneralizedCircle::Circle(p), GeneralizedCircle::Circle(q)) => {
            (p.a - q.a).hypot(p.b - q.b) + (p.r - q.r).abs()
        }
        (GeneralizedCircle::Line(p), GeneralizedCircle::Line(q)) => {
            (p.nx - q.nx).hypot(p.ny - q.ny) + (p.d - q.d).abs()
        }
        _ => f64::INFINITY,
    }
}
