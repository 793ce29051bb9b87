//! The orthogonal-distance objective in its four equivalent forms.
//!
//! * full: `F(a, b, R) = Σ (‖p_i − (a, b)‖ − R)²`
//! * reduced: `F(a, b)` with the radius eliminated at its optimum, the mean
//!   distance to the center
//! * polar: `F(δ, θ)` with center `(cos θ, sin θ)/δ`, smooth through `δ = 0`
//!   where the circle degenerates to a line
//!
//! The polar form is what makes near-line fits tractable: `δ` stays small
//! and bounded while the center coordinates blow up.

use serde::{Deserialize, Serialize};

use crate::error::ObjectiveError;
use crate::geom_types::Point2;
use crate::jet::Jet2;

pub fn objective_full(points: &[Point2], a: f64, b: f64, r: f64) -> f64 {
    points
        .iter()
        .map(|p| ((p.x - a).hypot(p.y - b) - r).powi(2))
        .sum()
}

/// Optimal radius for a fixed center: the mean distance from `(a, b)`.
pub fn radius_hat(points: &[Point2], a: f64, b: f64) -> f64 {
    let n = points.len() as f64;
    points.iter().map(|p| (p.x - a).hypot(p.y - b)).sum::<f64>() / n
}

/// `n[z̄ − 2a x̄ − 2b ȳ + a² + b²] − n R(a,b)²` with `z_i = x_i² + y_i²`.
pub fn objective_reduced_ab(points: &[Point2], a: f64, b: f64) -> f64 {
    let n = points.len() as f64;
    let (mut zs, mut xs, mut ys) = (0.0, 0.0, 0.0);
    for p in points {
        zs += p.x * p.x + p.y * p.y;
        xs += p.x;
        ys += p.y;
    }
    let r = radius_hat(points, a, b);
    n * (zs / n - 2.0 * a * xs / n - 2.0 * b * ys / n + a * a + b * b) - n * r * r
}

/// Reciprocal center distance and center angle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PolarParams {
    pub delta: f64,
    pub theta: f64,
}

impl PolarParams {
    pub fn new(delta: f64, theta: f64) -> Self {
        Self { delta, theta }
    }

    /// Polar parameters of the center `(a, b)`; `None` at the origin.
    pub fn from_center(a: f64, b: f64) -> Option<Self> {
        let d = a.hypot(b);
        (d > 0.0).then(|| Self {
            delta: 1.0 / d,
            theta: b.atan2(a),
        })
    }

    /// The same point after `(δ, θ) ↦ (−δ, θ + π)`.
    pub fn mirrored(&self) -> Self {
        Self {
            delta: -self.delta,
            theta: self.theta + std::f64::consts::PI,
        }
    }
}

/// Box around a reference direction in which the polar analysis is run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PolarRegion {
    pub delta_max: f64,
    pub theta_ref: f64,
    pub theta_max: f64,
}

impl PolarRegion {
    /// `|δ| ≤ 100h`, `|θ − θ_ref| ≤ 100h`.
    pub fn around(h: f64, theta_ref: f64) -> Self {
        Self {
            delta_max: 100.0 * h,
            theta_ref,
            theta_max: 100.0 * h,
        }
    }

    pub fn contains(&self, p: &PolarParams) -> bool {
        p.delta.abs() <= self.delta_max && (p.theta - self.theta_ref).abs() <= self.theta_max
    }
}

/// Value, gradient and Hessian of the polar objective `F(δ, θ)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PolarDerivatives {
    pub value: f64,
    /// `(F_δ, F_θ)`
    pub grad: [f64; 2],
    /// `(F_δδ, F_δθ, F_θθ)`
    pub hess: [f64; 3],
}

// w_i = v²/(s + 1 − uδ) while 1 − uδ ≥ 0. Past that the denominator cancels
// (the point lies beyond the center along θ) and the equivalent
// (s − (1 − uδ))/δ² is the well-conditioned one.
fn polar_w(u: f64, v: f64, delta: f64, index: usize) -> Result<(f64, f64), ObjectiveError> {
    let t = 1.0 - u * delta;
    let arg = t * t + (v * delta) * (v * delta);
    if !(arg > 0.0) {
        return Err(ObjectiveError::Domain { index, value: arg });
    }
    let s = arg.sqrt();
    let w = if t >= 0.0 {
        v * v / (s + t)
    } else {
        (s - t) / (delta * delta)
    };
    Ok((s, w))
}

/// `F(δ, θ) = n[z̄ − ū² − 2w̄ + 2ū w̄ δ − w̄² δ²]`.
pub fn objective_polar(points: &[Point2], p: PolarParams) -> Result<f64, ObjectiveError> {
    let n = points.len() as f64;
    let (sin, cos) = p.theta.sin_cos();
    let (mut zs, mut us, mut ws) = (0.0, 0.0, 0.0);
    for (i, q) in points.iter().enumerate() {
        let u = q.x * cos + q.y * sin;
        let v = -q.x * sin + q.y * cos;
        let (_, w) = polar_w(u, v, p.delta, i)?;
        zs += q.x * q.x + q.y * q.y;
        us += u;
        ws += w;
    }
    let (zb, ub, wb) = (zs / n, us / n, ws / n);
    let d = p.delta;
    Ok(n * (zb - ub * ub - 2.0 * wb + 2.0 * ub * wb * d - wb * wb * d * d))
}

fn polar_jet(points: &[Point2], p: PolarParams) -> Result<Jet2, ObjectiveError> {
    let n = points.len() as f64;
    let delta = Jet2::variable(p.delta, 0);
    let theta = Jet2::variable(p.theta, 1);
    let (cos, sin) = (theta.cos(), theta.sin());
    let mut zs = 0.0;
    let mut us = Jet2::constant(0.0);
    let mut ws = Jet2::constant(0.0);
    for (i, q) in points.iter().enumerate() {
        let u = cos * q.x + sin * q.y;
        let v = cos * q.y - sin * q.x;
        // domain check and branch choice on plain values
        polar_w(u.v, v.v, p.delta, i)?;
        let t = -(u * delta) + 1.0;
        let vd = v * delta;
        let s = (t * t + vd * vd).sqrt();
        let w = if t.v >= 0.0 {
            v * v / (s + t)
        } else {
            (s - t) / (delta * delta)
        };
        zs += q.x * q.x + q.y * q.y;
        us = us + u;
        ws = ws + w;
    }
    let ub = us * (1.0 / n);
    let wb = ws * (1.0 / n);
    let inner = -(ub * ub) - wb * 2.0 + ub * wb * delta * 2.0 - wb * wb * delta * delta + zs / n;
    Ok(inner * n)
}

/// Analytic first and second partial derivatives of `F(δ, θ)`.
///
/// Derivatives are of the summed objective itself (not of `F/n`), which is
/// the scale on which `F_δδ ≈ 1 − 2/n` holds near the three-cluster
/// configuration.
pub fn polar_derivatives(
    points: &[Point2],
    p: PolarParams,
) -> Result<PolarDerivatives, ObjectiveError> {
    let j = polar_jet(points, p)?;
    Ok(PolarDerivatives {
        value: j.v,
        grad: j.g,
        hess: j.h,
    })
}

/// Mean distance to the center `(cos θ, sin θ)/δ`, evaluated without
/// forming the (possibly huge) center: `R = mean(s_i)/|δ|`.
pub(crate) fn polar_radius(points: &[Point2], p: PolarParams) -> f64 {
    let (sin, cos) = p.theta.sin_cos();
    let n = points.len() as f64;
    let mean_s = points
        .iter()
        .map(|q| {
            let u = q.x * cos + q.y * sin;
            let v = -q.x * sin + q.y * cos;
            let t = 1.0 - u * p.delta;
            t.hypot(v * p.delta)
        })
        .sum::<f64>()
        / n;
    mean_s / p.delta.abs()
}

/// `Σ (d_i − R)²` at polar parameters, from differences `s_i − 1` formed
/// without cancellation. Accurate even when the radius dwarfs the data.
pub(crate) fn polar_residual_sum(points: &[Point2], p: PolarParams) -> f64 {
    let (sin, cos) = p.theta.sin_cos();
    let d = p.delta;
    let excess: Vec<f64> = points
        .iter()
        .map(|q| {
            let u = q.x * cos + q.y * sin;
            let v = -q.x * sin + q.y * cos;
            let t = 1.0 - u * d;
            let s = t.hypot(v * d);
            // s − 1 = (s² − 1)/(s + 1), s² − 1 = −2uδ + (u² + v²)δ²
            (d * (-2.0 * u + (u * u + v * v) * d)) / (s + 1.0)
        })
        .collect();
    let n = excess.len() as f64;
    let mean = excess.iter().sum::<f64>() / n;
    if d == 0.0 {
        // limit: residuals are u_i − ū
        let (sin, cos) = p.theta.sin_cos();
        let us: Vec<f64> = points.iter().map(|q| q.x * cos + q.y * sin).collect();
        let ub = us.iter().sum::<f64>() / n;
        return us.iter().map(|u| (u - ub).powi(2)).sum();
    }
    excess.iter().map(|e| ((e - mean) / d).powi(2)).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn pts(xy: &[(f64, f64)]) -> Vec<Point2> {
        xy.iter().copied().map(Point2::from).collect()
    }

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / a.abs().max(b.abs()).max(f64::MIN_POSITIVE)
    }

    fn random_points(rng: &mut ChaCha8Rng, n: usize) -> Vec<Point2> {
        (0..n)
            .map(|_| Point2::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
            .collect()
    }

    #[test]
    fn full_objective_examples() {
        let p = pts(&[(1.0, 0.0), (0.0, 1.0), (-1.0, 0.0)]);
        assert_eq!(objective_full(&p, 0.0, 0.0, 1.0), 0.0);
        assert_eq!(objective_full(&p, 0.0, 0.0, 2.0), 3.0);
    }

    #[test]
    fn full_objective_matches_direct_sum() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let p = random_points(&mut rng, 5);
        let (a, b, r) = (0.3, -0.2, 0.9);
        let mut oracle = 0.0;
        for q in &p {
            let d = ((q.x - a) * (q.x - a) + (q.y - b) * (q.y - b)).sqrt();
            oracle += (d - r) * (d - r);
        }
        assert!(rel(objective_full(&p, a, b, r), oracle) <= 1e-13);
    }

    #[test]
    fn radius_hat_examples() {
        let unit: Vec<Point2> = (0..7)
            .map(|k| {
                let t = k as f64;
                Point2::new(t.cos(), t.sin())
            })
            .collect();
        assert!((radius_hat(&unit, 0.0, 0.0) - 1.0).abs() < 1e-15);
        assert_eq!(radius_hat(&pts(&[(0.0, 0.0)]), 3.0, 4.0), 5.0);
    }

    #[test]
    fn radius_hat_beats_grid_search() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let p = random_points(&mut rng, 9);
        let (a, b) = (0.4, 0.1);
        let best = radius_hat(&p, a, b);
        let f_best = objective_full(&p, a, b, best);
        let (lo, hi) = (1e-3, 3.0);
        let step = (hi - lo) / 10_000.0;
        let (mut grid_r, mut grid_f) = (lo, f64::INFINITY);
        for k in 0..=10_000 {
            let r = lo + step * k as f64;
            let f = objective_full(&p, a, b, r);
            if f < grid_f {
                grid_f = f;
                grid_r = r;
            }
        }
        assert!(f_best <= grid_f);
        assert!((best - grid_r).abs() <= step);
    }

    #[test]
    fn reduced_zero_on_exact_circle() {
        let p: Vec<Point2> = (0..6)
            .map(|k| {
                let t = 0.9 * k as f64;
                Point2::new(2.0 + 3.0 * t.cos(), -1.0 + 3.0 * t.sin())
            })
            .collect();
        assert!(objective_reduced_ab(&p, 2.0, -1.0).abs() <= 1e-12);
    }

    #[test]
    fn reduced_translation_invariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let p = random_points(&mut rng, 8);
        let shift = Point2::new(2.5, -1.75);
        let q: Vec<Point2> = p
            .iter()
            .map(|r| Point2::new(r.x + shift.x, r.y + shift.y))
            .collect();
        let (a, b) = (1.3, 0.6);
        let f0 = objective_reduced_ab(&p, a, b);
        let f1 = objective_reduced_ab(&q, a + shift.x, b + shift.y);
        assert!((f0 - f1).abs() <= 1e-10);
    }

    #[test]
    fn polar_at_zero_is_line_residual() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let p = random_points(&mut rng, 10);
        let theta: f64 = 0.37;
        let (s, c) = theta.sin_cos();
        let u: Vec<f64> = p.iter().map(|q| q.x * c + q.y * s).collect();
        let n = u.len() as f64;
        let ub = u.iter().sum::<f64>() / n;
        let u2 = u.iter().map(|x| x * x).sum::<f64>() / n;
        let f0 = objective_polar(&p, PolarParams::new(0.0, theta)).unwrap();
        assert!(rel(f0, n * (u2 - ub * ub)) <= 1e-12);
        assert!(rel(f0, polar_residual_sum(&p, PolarParams::new(0.0, theta))) <= 1e-12);
    }

    #[test]
    fn polar_matches_reduced_at_fifth() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let p = random_points(&mut rng, 12);
        let f = objective_polar(&p, PolarParams::new(0.2, 0.0)).unwrap();
        assert!(rel(f, objective_reduced_ab(&p, 5.0, 0.0)) <= 1e-10);
    }

    #[test]
    fn polar_mirror_symmetry() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let p = random_points(&mut rng, 7);
        let q = PolarParams::new(0.13, -0.8);
        let f0 = objective_polar(&p, q).unwrap();
        let f1 = objective_polar(&p, q.mirrored()).unwrap();
        assert!(rel(f0, f1) <= 1e-14);
    }

    #[test]
    fn polar_domain_error_at_center() {
        // a data point exactly at the center (1, 0)
        let p = pts(&[(1.0, 0.0), (0.0, 1.0), (-1.0, 0.0)]);
        let err = objective_polar(&p, PolarParams::new(1.0, 0.0)).unwrap_err();
        assert!(matches!(err, ObjectiveError::Domain { index: 0, .. }));
        assert!(polar_derivatives(&p, PolarParams::new(1.0, 0.0)).is_err());
    }

    #[test]
    fn polar_far_side_branch_matches_reduced() {
        // center inside the data: several points have 1 − uδ < 0
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let p = random_points(&mut rng, 15);
        let q = PolarParams::from_center(0.2, 0.1).unwrap();
        let f = objective_polar(&p, q).unwrap();
        assert!(rel(f, objective_reduced_ab(&p, 0.2, 0.1)) <= 1e-10);
        assert!(rel(f, polar_residual_sum(&p, q)) <= 1e-10);
        let r = polar_radius(&p, q);
        assert!(rel(r, radius_hat(&p, 0.2, 0.1)) <= 1e-13);
    }

    /// Central differences of the value and of the analytic gradient.
    fn fd_check(p: &[Point2], q: PolarParams, step: f64) -> (f64, f64) {
        let d = polar_derivatives(p, q).unwrap();
        let f = |dd: f64, dt: f64| objective_polar(p, PolarParams::new(q.delta + dd, q.theta + dt)).unwrap();
        let g = |dd: f64, dt: f64| polar_derivatives(p, PolarParams::new(q.delta + dd, q.theta + dt)).unwrap().grad;
        let fd_grad = [
            (f(step, 0.0) - f(-step, 0.0)) / (2.0 * step),
            (f(0.0, step) - f(0.0, -step)) / (2.0 * step),
        ];
        let (gp, gm) = (g(step, 0.0), g(-step, 0.0));
        let (tp, tm) = (g(0.0, step), g(0.0, -step));
        let fd_hess = [
            (gp[0] - gm[0]) / (2.0 * step),
            0.5 * ((gp[1] - gm[1]) + (tp[0] - tm[0])) / (2.0 * step),
            (tp[1] - tm[1]) / (2.0 * step),
        ];
        let gscale = d.grad.iter().chain(&fd_grad).fold(0.0f64, |m, x| m.max(x.abs())).max(d.value.abs());
        let hscale = d.hess.iter().chain(&fd_hess).fold(0.0f64, |m, x| m.max(x.abs()));
        let gerr = (0..2).map(|i| (d.grad[i] - fd_grad[i]).abs()).fold(0.0, f64::max) / gscale;
        let herr = (0..3).map(|i| (d.hess[i] - fd_hess[i]).abs()).fold(0.0, f64::max) / hscale;
        (gerr, herr)
    }

    #[test]
    fn derivatives_match_central_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        for _ in 0..20 {
            let n = rng.random_range(4..12);
            let p = random_points(&mut rng, n);
            let q = PolarParams::new(rng.random_range(-0.3..0.3), rng.random_range(-3.0..3.0));
            let (gerr, herr) = fd_check(&p, q, 1e-6 * 2.0 * 2f64.sqrt());
            assert!(gerr <= 1e-6, "grad rel err {gerr}");
            assert!(herr <= 1e-4, "hess rel err {herr}");
        }
    }

    #[test]
    fn curvature_at_three_cluster_configuration() {
        // two points at (0, ±1), the rest at the origin; line limit along x
        for n in [3usize, 5, 10, 40] {
            let mut p = vec![Point2::new(0.0, 1.0), Point2::new(0.0, -1.0)];
            p.resize(n, Point2::new(0.0, 0.0));
            let d = polar_derivatives(&p, PolarParams::new(0.0, 0.0)).unwrap();
            let nf = n as f64;
            assert!((d.hess[0] - (1.0 - 2.0 / nf)).abs() < 1e-12, "F_dd {}", d.hess[0]);
            assert!(d.hess[1].abs() < 1e-12);
            // F_θθ = 2 Σ (y − ȳ)²
            assert!((d.hess[2] - 4.0).abs() < 1e-12, "F_tt {}", d.hess[2]);
        }
    }

    proptest! {
        #[test]
        fn forms_agree(
            xy in proptest::collection::vec((-1.0..1.0f64, -1.0..1.0f64), 3..15),
            a in 1.5..4.0f64, b in -4.0..4.0f64, flip in proptest::bool::ANY,
        ) {
            let p = pts(&xy);
            let a = if flip { -a } else { a };
            let r = radius_hat(&p, a, b);
            let full = objective_full(&p, a, b, r);
            let red = objective_reduced_ab(&p, a, b);
            let pol = objective_polar(&p, PolarParams::from_center(a, b).unwrap()).unwrap();
            let scale = full.max(1e-3);
            prop_assert!((full - red).abs() <= 1e-10 * scale);
            prop_assert!((full - pol).abs() <= 1e-10 * scale);
        }

        #[test]
        fn polar_continuous_at_line(
            xy in proptest::collection::vec((-1.0..1.0f64, -1.0..1.0f64), 3..15),
            theta in -3.0..3.0f64, delta in -1e-3..1e-3f64,
        ) {
            let p = pts(&xy);
            let f0 = objective_polar(&p, PolarParams::new(0.0, theta)).unwrap();
            let f1 = objective_polar(&p, PolarParams::new(delta, theta)).unwrap();
            // |F_δ| is bounded by a few n·diam³ on the unit box
            let k = 10.0 * p.len() as f64;
            prop_assert!((f1 - f0).abs() <= k * delta.abs() + 1e-14);
        }
    }
}
