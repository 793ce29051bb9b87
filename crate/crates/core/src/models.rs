//! Synthetic data under the functional, structural and radial noise models,
//! plus the three-region construction that produces heavy-tailed fits.
//!
//! Every point draws from its own ChaCha8 stream keyed by `(seed, point)`,
//! so output does not depend on generation order.

use std::f64::consts::{PI, TAU};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::ModelError;
use crate::geom_types::{Point2, PointSet};

/// Base seed; trial and point substreams are derived deterministically.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Seed {
    pub base: u64,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

impl Seed {
    pub const fn new(base: u64) -> Self {
        Self { base }
    }

    /// Independent seed for Monte Carlo trial `t`.
    pub fn for_trial(&self, t: u64) -> Seed {
        Seed {
            base: splitmix64(self.base ^ splitmix64(t)),
        }
    }

    /// Stream for point `i` of a dataset generated from this seed.
    pub fn point_rng(&self, i: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.base);
        rng.set_stream(i);
        rng
    }
}

/// Standard normal pair by the Marsaglia polar method. Fixed draw order:
/// two uniforms per attempt.
pub fn normal_pair(rng: &mut impl Rng) -> (f64, f64) {
    loop {
        let u = 2.0 * rng.random::<f64>() - 1.0;
        let v = 2.0 * rng.random::<f64>() - 1.0;
        let s = u * u + v * v;
        if s > 0.0 && s < 1.0 {
            let f = (-2.0 * s.ln() / s).sqrt();
            return (u * f, v * f);
        }
    }
}

/// Von Mises draw by the Best-Fisher wrapped-Cauchy envelope, in `[0, 2π)`.
pub fn von_mises(rng: &mut impl Rng, mu: f64, kappa: f64) -> f64 {
    if kappa < 1e-12 {
        return wrap_angle(mu + TAU * rng.random::<f64>());
    }
    let tau = 1.0 + (1.0 + 4.0 * kappa * kappa).sqrt();
    let rho = (tau - (2.0 * tau).sqrt()) / (2.0 * kappa);
    let r = (1.0 + rho * rho) / (2.0 * rho);
    loop {
        let u1: f64 = rng.random();
        let u2: f64 = rng.random();
        let u3: f64 = rng.random();
        let z = (PI * u1).cos();
        let f = (1.0 + r * z) / (r + z);
        let c = kappa * (r - f);
        if c * (2.0 - c) - u2 > 0.0 || (c / u2).ln() + 1.0 - c >= 0.0 {
            let sign = if u3 > 0.5 { 1.0 } else { -1.0 };
            return wrap_angle(mu + sign * f.clamp(-1.0, 1.0).acos());
        }
    }
}

fn wrap_angle(t: f64) -> f64 {
    let w = t.rem_euclid(TAU);
    if w >= TAU {
        0.0
    } else {
        w
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AngleSpec {
    /// Fixed true angles (functional model).
    Explicit { angles: Vec<f64> },
    Uniform,
    VonMises { mu: f64, kappa: f64 },
    /// Uniform on `[lo, hi]`.
    Arc { lo: f64, hi: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrueModel {
    pub a_star: f64,
    pub b_star: f64,
    #[serde(rename = "R_star")]
    pub r_star: f64,
    pub angles: AngleSpec,
}

impl TrueModel {
    pub fn validate(&self) -> Result<(), ModelError> {
        if !(self.r_star > 0.0 && self.r_star.is_finite()) {
            return Err(ModelError::Invalid(format!("R_star must be positive, got {}", self.r_star)));
        }
        if !(self.a_star.is_finite() && self.b_star.is_finite()) {
            return Err(ModelError::Invalid("true center must be finite".into()));
        }
        match &self.angles {
            AngleSpec::Explicit { angles } => {
                if let Some(t) = angles.iter().find(|t| !(0.0..TAU).contains(*t)) {
                    return Err(ModelError::Invalid(format!("angle {t} outside [0, 2π)")));
                }
            }
            AngleSpec::VonMises { mu, kappa } => {
                if !(mu.is_finite() && *kappa >= 0.0 && kappa.is_finite()) {
                    return Err(ModelError::Invalid("von Mises needs finite mu and kappa >= 0".into()));
                }
            }
            AngleSpec::Arc { lo, hi } => {
                if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
                    return Err(ModelError::Invalid("arc needs finite lo <= hi".into()));
                }
            }
            AngleSpec::Uniform => {}
        }
        Ok(())
    }

    fn point_at(&self, phi: f64, radius: f64) -> (f64, f64) {
        let (s, c) = phi.sin_cos();
        (self.a_star + radius * c, self.b_star + radius * s)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NoiseKind {
    IsotropicGaussian { sigma: f64 },
    DiagonalGaussian { sigma_x: f64, sigma_y: f64 },
    /// Covariances `[c_xx, c_xy, c_yy]`, one per point or a single entry
    /// shared by all points.
    FullGaussian { cov: Vec<[f64; 3]> },
    UniformBox { half_x: f64, half_y: f64 },
    RadialGaussian { sigma: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    #[serde(flatten)]
    pub kind: NoiseKind,
    /// Per-point mean of the noise (one entry broadcasts); zero when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mean_offset: Option<Vec<[f64; 2]>>,
}

impl NoiseSpec {
    pub fn isotropic(sigma: f64) -> Self {
        Self {
            kind: NoiseKind::IsotropicGaussian { sigma },
            mean_offset: None,
        }
    }

    pub fn none() -> Self {
        Self::isotropic(0.0)
    }

    fn validate(&self, n: usize) -> Result<(), ModelError> {
        let bad = |what: &str| Err(ModelError::Invalid(what.to_string()));
        let nonneg = |x: f64| x >= 0.0 && x.is_finite();
        match &self.kind {
            NoiseKind::IsotropicGaussian { sigma } | NoiseKind::RadialGaussian { sigma } => {
                if !nonneg(*sigma) {
                    return bad("sigma must be finite and >= 0");
                }
            }
            NoiseKind::DiagonalGaussian { sigma_x, sigma_y } => {
                if !(nonneg(*sigma_x) && nonneg(*sigma_y)) {
                    return bad("sigmas must be finite and >= 0");
                }
            }
            NoiseKind::UniformBox { half_x, half_y } => {
                if !(nonneg(*half_x) && nonneg(*half_y)) {
                    return bad("half-widths must be finite and >= 0");
                }
            }
            NoiseKind::FullGaussian { cov } => {
                if cov.len() != 1 && cov.len() != n {
                    return bad("cov needs one entry or one per point");
                }
                for &[xx, xy, yy] in cov {
                    let det = xx * yy - xy * xy;
                    if !(nonneg(xx) && nonneg(yy) && xy.is_finite() && det >= -1e-15 * (xx * yy).max(f64::MIN_POSITIVE)) {
                        return bad("covariance must be positive semidefinite");
                    }
                }
            }
        }
        if let Some(m) = &self.mean_offset {
            if m.len() != 1 && m.len() != n {
                return bad("mean_offset needs one entry or one per point");
            }
            if m.iter().flatten().any(|v| !v.is_finite()) {
                return bad("mean_offset must be finite");
            }
        }
        Ok(())
    }

    /// Planar noise vector for point `i`; draws from `rng` in a fixed order.
    fn draw(&self, rng: &mut impl Rng, i: usize) -> (f64, f64) {
        let (dx, dy) = match &self.kind {
            NoiseKind::IsotropicGaussian { sigma } => {
                let (z1, z2) = normal_pair(rng);
                (sigma * z1, sigma * z2)
            }
            NoiseKind::DiagonalGaussian { sigma_x, sigma_y } => {
                let (z1, z2) = normal_pair(rng);
                (sigma_x * z1, sigma_y * z2)
            }
            NoiseKind::FullGaussian { cov } => {
                let [xx, xy, yy] = cov[if cov.len() == 1 { 0 } else { i }];
                let (z1, z2) = normal_pair(rng);
                let l11 = xx.sqrt();
                let (l21, l22) = if l11 > 0.0 {
                    let l21 = xy / l11;
                    (l21, (yy - l21 * l21).max(0.0).sqrt())
                } else {
                    (0.0, yy.sqrt())
                };
                (l11 * z1, l21 * z1 + l22 * z2)
            }
            NoiseKind::UniformBox { half_x, half_y } => {
                let u: f64 = rng.random();
                let v: f64 = rng.random();
                (half_x * (2.0 * u - 1.0), half_y * (2.0 * v - 1.0))
            }
            NoiseKind::RadialGaussian { .. } => unreachable!("radial noise is not planar"),
        };
        let (mx, my) = match &self.mean_offset {
            Some(m) => {
                let [mx, my] = m[if m.len() == 1 { 0 } else { i }];
                (mx, my)
            }
            None => (0.0, 0.0),
        };
        (dx + mx, dy + my)
    }
}

fn finish(points: Vec<Point2>) -> Result<PointSet, ModelError> {
    PointSet::new(points).map_err(|e| ModelError::Invalid(e.to_string()))
}

fn planar_noise(noise: &NoiseSpec, n: usize) -> Result<(), ModelError> {
    if matches!(noise.kind, NoiseKind::RadialGaussian { .. }) {
        return Err(ModelError::SpecMismatch("radial noise needs generate_radial".into()));
    }
    noise.validate(n)
}

/// Fixed true angles plus planar noise.
pub fn generate_functional(model: &TrueModel, noise: &NoiseSpec, seed: Seed) -> Result<PointSet, ModelError> {
    model.validate()?;
    let AngleSpec::Explicit { angles } = &model.angles else {
        return Err(ModelError::SpecMismatch("functional model needs explicit angles".into()));
    };
    planar_noise(noise, angles.len())?;
    let points = angles
        .iter()
        .enumerate()
        .map(|(i, &phi)| {
            let mut rng = seed.point_rng(i as u64);
            let (x, y) = model.point_at(phi, model.r_star);
            let (dx, dy) = noise.draw(&mut rng, i);
            Point2::new(x + dx, y + dy)
        })
        .collect();
    finish(points)
}

/// I.i.d. true angles from the model's distribution, then planar noise.
pub fn generate_structural(model: &TrueModel, n: usize, noise: &NoiseSpec, seed: Seed) -> Result<PointSet, ModelError> {
    model.validate()?;
    planar_noise(noise, n)?;
    let angle = |rng: &mut ChaCha8Rng| -> Result<f64, ModelError> {
        Ok(match &model.angles {
            AngleSpec::Uniform => TAU * rng.random::<f64>(),
            AngleSpec::VonMises { mu, kappa } => von_mises(rng, *mu, *kappa),
            AngleSpec::Arc { lo, hi } => lo + (hi - lo) * rng.random::<f64>(),
            AngleSpec::Explicit { .. } => {
                return Err(ModelError::SpecMismatch("structural model needs an angle distribution".into()))
            }
        })
    };
    let points = (0..n)
        .map(|i| {
            let mut rng = seed.point_rng(i as u64);
            let phi = angle(&mut rng)?;
            let (x, y) = model.point_at(phi, model.r_star);
            let (dx, dy) = noise.draw(&mut rng, i);
            Ok(Point2::new(x + dx, y + dy))
        })
        .collect::<Result<Vec<_>, ModelError>>()?;
    finish(points)
}

/// Fixed true angles with Gaussian noise along each radius only.
pub fn generate_radial(model: &TrueModel, sigma: f64, seed: Seed) -> Result<PointSet, ModelError> {
    model.validate()?;
    let AngleSpec::Explicit { angles } = &model.angles else {
        return Err(ModelError::SpecMismatch("radial model needs explicit angles".into()));
    };
    if !(sigma >= 0.0 && sigma.is_finite()) {
        return Err(ModelError::Invalid("sigma must be finite and >= 0".into()));
    }
    let mut distinct = angles.clone();
    distinct.sort_by(f64::total_cmp);
    distinct.dedup();
    if distinct.len() < 3 {
        return Err(ModelError::TooFewDistinctAngles(distinct.len()));
    }
    let points = angles
        .iter()
        .enumerate()
        .map(|(i, &phi)| {
            let mut rng = seed.point_rng(i as u64);
            let (xi, _) = normal_pair(&mut rng);
            let (x, y) = model.point_at(phi, model.r_star + sigma * xi);
            Point2::new(x, y)
        })
        .collect();
    finish(points)
}

/// The three sampling boxes of the heavy-tail construction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TheoremRegions {
    pub h: f64,
}

impl TheoremRegions {
    /// `[x_lo, x_hi, y_lo, y_hi]` of the box for point `i` of `n`.
    pub fn bounds(&self, i: usize, n: usize) -> [f64; 4] {
        let (h, h2) = (self.h, self.h * self.h);
        if i == 0 {
            [-h2, h2, -1.0 - h2, -1.0 + h2]
        } else if i + 1 == n {
            [-h, h, 1.0 - h2, 1.0 + h2]
        } else {
            [-h2, h2, -h2, h2]
        }
    }

    pub fn contains(&self, i: usize, n: usize, p: &Point2) -> bool {
        let [x0, x1, y0, y1] = self.bounds(i, n);
        (x0..=x1).contains(&p.x) && (y0..=y1).contains(&p.y)
    }
}

/// One point in the lower square, `n − 2` in the central square and one in
/// the wide upper rectangle, each uniform in its box.
pub fn theorem_construction(n: usize, h: f64, seed: Seed) -> Result<PointSet, ModelError> {
    if n < 3 {
        return Err(ModelError::Invalid(format!("construction needs n >= 3, got {n}")));
    }
    if !(h > 0.0 && h < 0.01) {
        return Err(ModelError::Invalid(format!("construction needs 0 < h < 0.01, got {h}")));
    }
    let regions = TheoremRegions { h };
    let points = (0..n)
        .map(|i| {
            let [x0, x1, y0, y1] = regions.bounds(i, n);
            let mut rng = seed.point_rng(i as u64);
            let u: f64 = rng.random();
            let v: f64 = rng.random();
            Point2::new(x0 + (x1 - x0) * u, y0 + (y1 - y0) * v)
        })
        .collect();
    finish(points)
}

/// Counter-clockwise quarter turn `(x, y) ↦ (−y, x)`.
pub fn rotate_quarter(points: &PointSet) -> PointSet {
    points.map(|p| Point2::new(-p.y, p.x))
}

/// True points on `y = α + βx` at the given abscissae, with i.i.d.
/// isotropic Gaussian errors on both coordinates.
pub fn generate_line_eiv(alpha: f64, beta: f64, xs: &[f64], sigma: f64, seed: Seed) -> Result<PointSet, ModelError> {
    if !(sigma >= 0.0 && sigma.is_finite()) {
        return Err(ModelError::Invalid("sigma must be finite and >= 0".into()));
    }
    let points = xs
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let mut rng = seed.point_rng(i as u64);
            let (z1, z2) = normal_pair(&mut rng);
            Point2::new(x + sigma * z1, alpha + beta * x + sigma * z2)
        })
        .collect();
    finish(points)
}

/// Any supported generator, selected by the `model` tag.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case")]
pub enum GeneratorSpec {
    Functional {
        truth: TrueModel,
        noise: NoiseSpec,
    },
    Structural {
        truth: TrueModel,
        n: usize,
        noise: NoiseSpec,
    },
    Radial {
        truth: TrueModel,
        sigma: f64,
    },
    Theorem {
        n: usize,
        h: f64,
        /// Apply a quarter turn after sampling.
        #[serde(default)]
        rotate: bool,
    },
}

impl GeneratorSpec {
    pub fn generate(&self, seed: Seed) -> Result<PointSet, ModelError> {
        match self {
            GeneratorSpec::Functional { truth, noise } => generate_functional(truth, noise, seed),
            GeneratorSpec::Structural { truth, n, noise } => generate_structural(truth, *n, noise, seed),
            GeneratorSpec::Radial { truth, sigma } => generate_radial(truth, *sigma, seed),
            GeneratorSpec::Theorem { n, h, rotate } => {
                let p = theorem_construction(*n, *h, seed)?;
                Ok(if *rotate { rotate_quarter(&p) } else { p })
            }
        }
    }

    /// Dry run that surfaces configuration errors before a study starts.
    pub fn validate(&self) -> Result<(), ModelError> {
        self.generate(Seed::new(0)).map(|_| ())
    }
}
