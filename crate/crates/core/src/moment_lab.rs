//! Monte Carlo studies of estimator tails and moment convergence.
//!
//! Trials run in parallel on the ambient rayon pool; every aggregate is a
//! sequential reduction over the trial-ordered table, so results do not
//! depend on the thread count.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{FitError, LabError};
use crate::fitters::{geometric_fit, kasa_fit, line_odr_fit, pratt_fit, Degeneracy, FitResult, GeomFitOptions, SlopeEstimate};
use crate::geom_types::{to_alternative_params, GeneralizedCircle, Point2};
use crate::models::{generate_line_eiv, GeneratorSpec, Seed};

/// Minimum exceedances for a threshold to enter the slope fit.
pub const MIN_EXCEEDANCES: u64 = 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Estimator {
    Geometric,
    Kasa,
    Pratt,
}

impl Estimator {
    pub fn name(&self) -> &'static str {
        match self {
            Estimator::Geometric => "geometric",
            Estimator::Kasa => "kasa",
            Estimator::Pratt => "pratt",
        }
    }

    pub fn fit(&self, points: &[Point2], opts: &GeomFitOptions) -> Result<FitResult, FitError> {
        match self {
            Estimator::Geometric => geometric_fit(points, opts),
            Estimator::Kasa => kasa_fit(points),
            Estimator::Pratt => pratt_fit(points),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyConfig {
    pub trials: u64,
    pub seed: Seed,
    pub generator: GeneratorSpec,
    pub estimators: Vec<Estimator>,
    pub thresholds: Vec<f64>,
    pub moment_orders: Vec<u32>,
    #[serde(default)]
    pub fit: GeomFitOptions,
}

impl StudyConfig {
    pub fn validate(&self) -> Result<(), LabError> {
        if self.trials == 0 {
            return Err(LabError::Config("trials must be >= 1".into()));
        }
        if self.estimators.is_empty() {
            return Err(LabError::Config("at least one estimator required".into()));
        }
        validate_thresholds(&self.thresholds)?;
        if self.moment_orders.contains(&0) {
            return Err(LabError::Config("moment orders must be positive".into()));
        }
        self.generator.validate()?;
        Ok(())
    }
}

fn validate_thresholds(t: &[f64]) -> Result<(), LabError> {
    if t.is_empty() || t.iter().any(|x| !(*x > 0.0 && x.is_finite())) || t.windows(2).any(|w| w[0] >= w[1]) {
        return Err(LabError::Config("thresholds must be positive and strictly increasing".into()));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutcomeKind {
    Circle,
    Line,
    /// The estimator declined the dataset (e.g. Kåsa on collinear data).
    Failed,
}

/// One estimator's output on one trial. Lines carry infinite `(a, b, R)`
/// and zero `ρ`, `q`; `c`, `d` are NaN since their limits are indeterminate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRow {
    pub trial: u64,
    pub estimator: Estimator,
    pub kind: OutcomeKind,
    pub a: f64,
    pub b: f64,
    #[serde(rename = "R")]
    pub r: f64,
    pub rho: f64,
    pub c: f64,
    pub d: f64,
    pub q: f64,
    pub theta: f64,
    pub converged: bool,
    pub objective: f64,
    pub degeneracy: Option<Degeneracy>,
    pub error: Option<String>,
}

impl TrialRow {
    fn from_fit(trial: u64, estimator: Estimator, fit: &FitResult) -> Self {
        let base = TrialRow {
            trial,
            estimator,
            kind: OutcomeKind::Circle,
            a: f64::NAN,
            b: f64::NAN,
            r: f64::NAN,
            rho: f64::NAN,
            c: f64::NAN,
            d: f64::NAN,
            q: f64::NAN,
            theta: f64::NAN,
            converged: fit.converged,
            objective: fit.objective,
            degeneracy: Some(fit.degeneracy),
            error: None,
        };
        match &fit.model {
            GeneralizedCircle::Circle(k) => {
                let alt = to_alternative_params(k);
                let (q, theta) = alt.polar.map_or((f64::INFINITY, f64::NAN), |p| (p.q, p.theta));
                TrialRow {
                    a: k.a,
                    b: k.b,
                    r: k.r,
                    rho: alt.rho_curv,
                    c: alt.c,
                    d: alt.d,
                    q,
                    theta,
                    ..base
                }
            }
            GeneralizedCircle::Line(l) => TrialRow {
                kind: OutcomeKind::Line,
                a: f64::INFINITY,
                b: f64::INFINITY,
                r: f64::INFINITY,
                rho: 0.0,
                q: 0.0,
                theta: l.normal_angle(),
                ..base
            },
        }
    }

    fn failed(trial: u64, estimator: Estimator, err: &FitError) -> Self {
        TrialRow {
            trial,
            estimator,
            kind: OutcomeKind::Failed,
            a: f64::NAN,
            b: f64::NAN,
            r: f64::NAN,
            rho: f64::NAN,
            c: f64::NAN,
            d: f64::NAN,
            q: f64::NAN,
            theta: f64::NAN,
            converged: false,
            objective: f64::NAN,
            degeneracy: None,
            error: Some(err.to_string()),
        }
    }
}

/// Rows ordered by trial, then by the configured estimator order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialTable {
    pub trials: u64,
    pub estimators: Vec<Estimator>,
    pub rows: Vec<TrialRow>,
}

impl TrialTable {
    pub fn rows_for(&self, e: Estimator) -> impl Iterator<Item = &TrialRow> {
        self.rows.iter().filter(move |r| r.estimator == e)
    }

    pub fn column(&self, e: Estimator, p: Param) -> Vec<f64> {
        self.rows_for(e).map(|r| p.value(r)).collect()
    }

    pub fn count(&self, e: Estimator, kind: OutcomeKind) -> u64 {
        self.rows_for(e).filter(|r| r.kind == kind).count() as u64
    }
}

/// Estimated quantities a study can summarize.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Param {
    A,
    B,
    R,
    Rho,
    C,
    D,
    Q,
    Theta,
}

impl Param {
    pub const ALL: [Param; 8] = [Param::A, Param::B, Param::R, Param::Rho, Param::C, Param::D, Param::Q, Param::Theta];

    pub fn value(&self, r: &TrialRow) -> f64 {
        match self {
            Param::A => r.a,
            Param::B => r.b,
            Param::R => r.r,
            Param::Rho => r.rho,
            Param::C => r.c,
            Param::D => r.d,
            Param::Q => r.q,
            Param::Theta => r.theta,
        }
    }
}

/// Runs every estimator on `trials` independent datasets.
///
/// Fit refusals are recorded as `Failed` rows; only numeric breakdowns abort.
pub fn run_trials(cfg: &StudyConfig) -> Result<TrialTable, LabError> {
    cfg.validate()?;
    let per_trial = (0..cfg.trials)
        .into_par_iter()
        .map(|t| -> Result<Vec<TrialRow>, LabError> {
            let points = cfg.generator.generate(cfg.seed.for_trial(t))?;
            cfg.estimators
                .iter()
                .map(|&e| match e.fit(&points, &cfg.fit) {
                    Ok(fit) => Ok(TrialRow::from_fit(t, e, &fit)),
                    Err(source @ FitError::NumericFailure(_)) => Err(LabError::Trial { trial: t, source }),
                    Err(err) => Ok(TrialRow::failed(t, e, &err)),
                })
                .collect()
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(TrialTable {
        trials: cfg.trials,
        estimators: cfg.estimators.clone(),
        rows: per_trial.into_iter().flatten().collect(),
    })
}

// ---------------------------------------------------------------------------
// tails

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TailReport {
    pub thresholds: Vec<f64>,
    /// `P̂(|s| > T)`; non-increasing in `T`.
    pub survival: Vec<f64>,
    pub counts: Vec<u64>,
    pub retained: Vec<bool>,
    /// Least-squares slope of `ln P̂` against `ln T` over retained thresholds.
    pub slope: f64,
    pub slope_se: f64,
    /// Samples used; NaN entries are excluded and counted separately.
    pub total: u64,
    pub excluded: u64,
}

impl TailReport {
    /// `max T / min T` over retained thresholds.
    pub fn retained_span(&self) -> f64 {
        let kept: Vec<f64> = self.thresholds.iter().zip(&self.retained).filter(|(_, &k)| k).map(|(t, _)| *t).collect();
        kept.last().zip(kept.first()).map_or(1.0, |(hi, lo)| hi / lo)
    }
}

/// Empirical survival of `|s|` and its log-log slope. Infinite samples
/// exceed every threshold.
pub fn tail_survival(samples: &[f64], thresholds: &[f64]) -> Result<TailReport, LabError> {
    validate_thresholds(thresholds)?;
    let mut abs: Vec<f64> = samples.iter().filter(|s| !s.is_nan()).map(|s| s.abs()).collect();
    let excluded = (samples.len() - abs.len()) as u64;
    abs.sort_by(f64::total_cmp);
    let total = abs.len() as u64;
    let counts: Vec<u64> = thresholds
        .iter()
        .map(|&t| (abs.len() - abs.partition_point(|&s| s <= t)) as u64)
        .collect();
    let survival: Vec<f64> = counts.iter().map(|&c| c as f64 / total.max(1) as f64).collect();
    let retained: Vec<bool> = counts.iter().map(|&c| c >= MIN_EXCEEDANCES).collect();
    let pts: Vec<(f64, f64)> = thresholds
        .iter()
        .zip(&survival)
        .zip(&retained)
        .filter(|(_, &k)| k)
        .map(|((t, s), _)| (t.ln(), s.ln()))
        .collect();
    if pts.len() < 3 {
        return Err(LabError::InsufficientTailData { retained: pts.len() });
    }
    let (slope, slope_se) = ols_slope(&pts);
    Ok(TailReport {
        thresholds: thresholds.to_vec(),
        survival,
        counts,
        retained,
        slope,
        slope_se,
        total,
        excluded,
    })
}

fn ols_slope(pts: &[(f64, f64)]) -> (f64, f64) {
    let k = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / k;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / k;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let slope = sxy / sxx;
    let ssr: f64 = pts.iter().map(|p| (p.1 - my - slope * (p.0 - mx)).powi(2)).sum();
    (slope, (ssr / (k - 2.0) / sxx).sqrt())
}

/// `n` log-spaced thresholds from the `q`-quantile of the finite `|s|` to
/// the largest finite `|s|`; empty when those coincide.
pub fn quantile_thresholds(samples: &[f64], q: f64, n: usize) -> Vec<f64> {
    let mut abs: Vec<f64> = samples.iter().filter(|s| s.is_finite()).map(|s| s.abs()).collect();
    if abs.is_empty() || n < 2 {
        return Vec::new();
    }
    abs.sort_by(f64::total_cmp);
    let lo = abs[((abs.len() - 1) as f64 * q) as usize];
    let hi = abs[abs.len() - 1];
    if !(lo > 0.0 && hi > lo) {
        return Vec::new();
    }
    let step = (hi / lo).ln() / (n - 1) as f64;
    (0..n).map(|i| lo * (step * i as f64).exp()).collect()
}

// ---------------------------------------------------------------------------
// running moments

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentTrace {
    pub order: u32,
    /// Sample counts `m` (including infinite and NaN entries) at which the
    /// trace is recorded.
    pub checkpoints: Vec<u64>,
    /// `(1/m_f) Σ |s|^k` over the finite samples among the first `m`.
    pub moments: Vec<f64>,
    /// `max |s|^k / Σ |s|^k` over the same finite samples.
    pub max_share: Vec<f64>,
    /// Infinite samples seen by each checkpoint.
    pub infinite: Vec<u64>,
    /// `|m(M) − m(M/10)| / |m(M)|`, when `M ≥ 10`.
    pub final_decade_change: Option<f64>,
}

fn checkpoints(m: u64) -> Vec<u64> {
    let mut out = Vec::new();
    let mut decade = 1u64;
    'outer: loop {
        for k in [1, 2, 5] {
            let c = k * decade;
            if c > m {
                break 'outer;
            }
            out.push(c);
        }
        decade = match decade.checked_mul(10) {
            Some(d) => d,
            None => break,
        };
    }
    if m >= 10 {
        out.push(m / 10);
    }
    out.push(m);
    out.sort_unstable();
    out.dedup();
    out
}

/// Running `k`-th absolute moments in sample order.
pub fn running_moment_trace(samples: &[f64], order: u32) -> MomentTrace {
    let m = samples.len() as u64;
    let cps = if m == 0 { Vec::new() } else { checkpoints(m) };
    let (mut sum, mut max, mut finite, mut inf) = (0.0f64, 0.0f64, 0u64, 0u64);
    let mut trace = MomentTrace {
        order,
        checkpoints: cps.clone(),
        moments: Vec::with_capacity(cps.len()),
        max_share: Vec::with_capacity(cps.len()),
        infinite: Vec::with_capacity(cps.len()),
        final_decade_change: None,
    };
    let mut next = cps.iter().peekable();
    let mut at_tenth = None;
    for (i, s) in samples.iter().enumerate() {
        if s.is_infinite() {
            inf += 1;
        } else if s.is_finite() {
            let v = s.abs().powi(order as i32);
            sum += v;
            max = max.max(v);
            finite += 1;
        }
        let seen = i as u64 + 1;
        if next.peek() == Some(&&seen) {
            next.next();
            let mean = if finite > 0 { sum / finite as f64 } else { f64::NAN };
            trace.moments.push(mean);
            trace.max_share.push(if sum > 0.0 { max / sum } else { f64::NAN });
            trace.infinite.push(inf);
            if m >= 10 && seen == m / 10 {
                at_tenth = Some(mean);
            }
        }
    }
    if let (Some(t), Some(&last)) = (at_tenth, trace.moments.last()) {
        trace.final_decade_change = Some((last - t).abs() / last.abs());
    }
    trace
}

// ---------------------------------------------------------------------------
// parameter summaries

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamSummary {
    pub param: Param,
    pub tail: Option<TailReport>,
    pub tail_error: Option<String>,
    pub traces: Vec<MomentTrace>,
    pub infinite: u64,
    pub excluded: u64,
}

impl ParamSummary {
    pub fn trace(&self, order: u32) -> Option<&MomentTrace> {
        self.traces.iter().find(|t| t.order == order)
    }
}

pub fn summarize(param: Param, values: &[f64], thresholds: &[f64], orders: &[u32]) -> ParamSummary {
    let (tail, tail_error) = match tail_survival(values, thresholds) {
        Ok(t) => (Some(t), None),
        Err(e) => (None, Some(e.to_string())),
    };
    ParamSummary {
        param,
        tail,
        tail_error,
        traces: orders.iter().map(|&k| running_moment_trace(values, k)).collect(),
        infinite: values.iter().filter(|v| v.is_infinite()).count() as u64,
        excluded: values.iter().filter(|v| v.is_nan()).count() as u64,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimatorTails {
    pub estimator: Estimator,
    pub circles: u64,
    pub lines: u64,
    pub failed: u64,
    pub params: Vec<ParamSummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TailStudyReport {
    pub trials: u64,
    pub estimators: Vec<EstimatorTails>,
}

/// Tails and running moments of `â`, `b̂`, `R̂` for each estimator.
pub fn tail_study(table: &TrialTable, thresholds: &[f64], orders: &[u32]) -> TailStudyReport {
    let estimators = table
        .estimators
        .iter()
        .map(|&e| EstimatorTails {
            estimator: e,
            circles: table.count(e, OutcomeKind::Circle),
            lines: table.count(e, OutcomeKind::Line),
            failed: table.count(e, OutcomeKind::Failed),
            params: [Param::A, Param::B, Param::R]
                .iter()
                .map(|&p| summarize(p, &table.column(e, p), thresholds, orders))
                .collect(),
        })
        .collect();
    TailStudyReport {
        trials: table.trials,
        estimators,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParametrizationReport {
    pub trials: u64,
    pub lines: u64,
    /// `â`, `b̂`, `R̂` on the configured thresholds.
    pub natural: Vec<ParamSummary>,
    /// `ρ̂`, `ĉ`, `d̂`, `q̂`, `θ̂` on thresholds spanning their own upper tail.
    pub alternative: Vec<ParamSummary>,
}

impl ParametrizationReport {
    pub fn get(&self, p: Param) -> Option<&ParamSummary> {
        self.natural.iter().chain(&self.alternative).find(|s| s.param == p)
    }
}

/// Geometric-fit tails and moments in the natural and alternative
/// parametrizations, side by side.
pub fn compare_parametrizations(table: &TrialTable, thresholds: &[f64], orders: &[u32]) -> Result<ParametrizationReport, LabError> {
    let e = Estimator::Geometric;
    if !table.estimators.contains(&e) {
        return Err(LabError::Config("parametrization study needs geometric fits".into()));
    }
    let natural = [Param::A, Param::B, Param::R]
        .iter()
        .map(|&p| summarize(p, &table.column(e, p), thresholds, orders))
        .collect();
    let alternative = [Param::Rho, Param::C, Param::D, Param::Q, Param::Theta]
        .iter()
        .map(|&p| {
            let v = table.column(e, p);
            let t = quantile_thresholds(&v, 0.9, 8);
            if t.is_empty() {
                // degenerate (e.g. constant) samples: no tail to speak of
                ParamSummary {
                    tail: None,
                    tail_error: Some(LabError::InsufficientTailData { retained: 0 }.to_string()),
                    ..summarize(p, &v, &[f64::MAX], orders)
                }
            } else {
                summarize(p, &v, &t, orders)
            }
        })
        .collect();
    Ok(ParametrizationReport {
        trials: table.trials,
        lines: table.count(e, OutcomeKind::Line),
        natural,
        alternative,
    })
}

// ---------------------------------------------------------------------------
// ζ sweep

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZetaSweep {
    pub h: f64,
    pub xs: Vec<f64>,
    pub zetas: Vec<f64>,
    /// `max |Δζ/Δx|` over adjacent grid points.
    pub max_slope: f64,
    /// Adjacent grid points between which `ζ` changes sign.
    pub sign_change: Option<(f64, f64)>,
    pub zeta_minus_in_range: bool,
    pub zeta_plus_in_range: bool,
    pub monotone: bool,
}

/// `ζ = 1/â` as the last point's abscissa sweeps `[−h, h]`, all other
/// coordinates fixed.
pub fn zeta_sweep(fixed: &[Point2], y_n: f64, grid: usize, h: f64) -> Result<ZetaSweep, LabError> {
    if grid < 100 {
        return Err(LabError::Config(format!("grid must be >= 100, got {grid}")));
    }
    if fixed.len() < 2 || !(h > 0.0) {
        return Err(LabError::Config("sweep needs >= 2 fixed points and h > 0".into()));
    }
    let opts = GeomFitOptions {
        force_polar: true,
        ..Default::default()
    };
    let xs: Vec<f64> = (0..grid).map(|j| -h + 2.0 * h * j as f64 / (grid - 1) as f64).collect();
    let zetas = xs
        .par_iter()
        .enumerate()
        .map(|(index, &x)| {
            let mut pts = fixed.to_vec();
            pts.push(Point2::new(x, y_n));
            geometric_fit(&pts, &opts)
                .map(|f| f.center_x_reciprocal())
                .map_err(|source| LabError::FitFailure { index, source })
        })
        .collect::<Result<Vec<f64>, _>>()?;
    let dx = 2.0 * h / (grid - 1) as f64;
    let quotients: Vec<f64> = zetas.windows(2).map(|w| (w[1] - w[0]) / dx).collect();
    let sign_change = zetas
        .windows(2)
        .position(|w| (w[0] <= 0.0) != (w[1] <= 0.0))
        .map(|j| (xs[j], xs[j + 1]));
    let (z0, z1) = (zetas[0], zetas[grid - 1]);
    Ok(ZetaSweep {
        h,
        max_slope: quotients.iter().fold(0.0, |m, q| m.max(q.abs())),
        monotone: quotients.iter().all(|q| *q > 0.0) || quotients.iter().all(|q| *q < 0.0),
        sign_change,
        zeta_minus_in_range: z0 > -2.0 * h && z0 < 0.0,
        zeta_plus_in_range: z1 > 0.0 && z1 < 2.0 * h,
        xs,
        zetas,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LemmaConfig {
    pub n: usize,
    pub h: f64,
    pub grid: usize,
    pub seed: Seed,
    /// Refinement factor for the stability check.
    #[serde(default = "default_refine")]
    pub refine: usize,
}

fn default_refine() -> usize {
    4
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LemmaReport {
    pub config: LemmaConfig,
    pub coarse: ZetaSweep,
    pub fine: ZetaSweep,
    /// `|max_slope(fine) − max_slope(coarse)| / max_slope(coarse)`.
    pub slope_change: f64,
    pub pass: bool,
}

/// Draws one construction sample and sweeps its last abscissa at two grid
/// resolutions.
pub fn lemma_study(cfg: &LemmaConfig) -> Result<LemmaReport, LabError> {
    let pts = crate::models::theorem_construction(cfg.n, cfg.h, cfg.seed)?.into_inner();
    let (fixed, last) = pts.split_at(cfg.n - 1);
    let coarse = zeta_sweep(fixed, last[0].y, cfg.grid, cfg.h)?;
    let fine = zeta_sweep(fixed, last[0].y, cfg.grid * cfg.refine.max(1), cfg.h)?;
    let slope_change = (fine.max_slope - coarse.max_slope).abs() / coarse.max_slope;
    let pass = coarse.zeta_minus_in_range && coarse.zeta_plus_in_range && coarse.sign_change.is_some() && slope_change < 0.1;
    Ok(LemmaReport {
        config: cfg.clone(),
        coarse,
        fine,
        slope_change,
        pass,
    })
}

// ---------------------------------------------------------------------------
// line slopes

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LineStudyConfig {
    pub trials: u64,
    pub seed: Seed,
    pub alpha: f64,
    pub beta: f64,
    pub n: usize,
    pub sigma: f64,
    /// True abscissae are equally spaced on `[x_lo, x_hi]`.
    #[serde(default)]
    pub x_lo: f64,
    #[serde(default = "one")]
    pub x_hi: f64,
    /// Deviations `t` for the exceedance curves.
    pub t_grid: Vec<f64>,
    pub thresholds: Vec<f64>,
}

fn one() -> f64 {
    1.0
}

impl LineStudyConfig {
    pub fn abscissae(&self) -> Vec<f64> {
        let n = self.n;
        (0..n).map(|i| self.x_lo + (self.x_hi - self.x_lo) * i as f64 / (n - 1) as f64).collect()
    }

    fn validate(&self) -> Result<(), LabError> {
        if self.trials == 0 || self.n < 3 {
            return Err(LabError::Config("line study needs trials >= 1 and n >= 3".into()));
        }
        if !(self.x_hi > self.x_lo) || !(self.sigma >= 0.0) {
            return Err(LabError::Config("line study needs x_hi > x_lo and sigma >= 0".into()));
        }
        validate_thresholds(&self.thresholds)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LineTrial {
    pub trial: u64,
    /// Infinite for a vertical fit, NaN when every direction fits equally.
    pub beta_m: f64,
    /// NaN when `s_xx = 0`.
    pub beta_l: f64,
    /// `|s_xy β² + (s_xx − s_yy) β − s_xy|` relative to its terms.
    pub quadratic_residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LineSlopeReport {
    pub config: LineStudyConfig,
    pub t_grid: Vec<f64>,
    pub exceed_m: Vec<f64>,
    pub exceed_l: Vec<f64>,
    /// `exceed_m < exceed_l` at every `t`.
    pub ordering_holds: bool,
    pub max_quadratic_residual: f64,
    pub tail_m: ParamTail,
    pub tail_l: ParamTail,
    pub trials: Vec<LineTrial>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamTail {
    pub tail: Option<TailReport>,
    pub error: Option<String>,
}

impl From<Result<TailReport, LabError>> for ParamTail {
    fn from(r: Result<TailReport, LabError>) -> Self {
        match r {
            Ok(t) => ParamTail { tail: Some(t), error: None },
            Err(e) => ParamTail { tail: None, error: Some(e.to_string()) },
        }
    }
}

/// Orthogonal versus ordinary least-squares slope errors on a
/// straight-line errors-in-variables model.
pub fn slope_tail_comparison(cfg: &LineStudyConfig) -> Result<LineSlopeReport, LabError> {
    cfg.validate()?;
    let xs = cfg.abscissae();
    let trials = (0..cfg.trials)
        .into_par_iter()
        .map(|t| -> Result<LineTrial, LabError> {
            let pts = generate_line_eiv(cfg.alpha, cfg.beta, &xs, cfg.sigma, cfg.seed.for_trial(t))?;
            let (_, s) = line_odr_fit(&pts).map_err(|source| LabError::Trial { trial: t, source })?;
            let beta_m = match s.beta_m {
                SlopeEstimate::Finite(b) => b,
                SlopeEstimate::Vertical => f64::INFINITY,
                SlopeEstimate::NonUnique => f64::NAN,
            };
            let quadratic_residual = if s.s_xy != 0.0 && beta_m.is_finite() {
                let terms = [s.s_xy * beta_m * beta_m, (s.s_xx - s.s_yy) * beta_m, -s.s_xy];
                terms.iter().sum::<f64>().abs() / terms.iter().map(|x| x.abs()).sum::<f64>()
            } else {
                0.0
            };
            Ok(LineTrial {
                trial: t,
                beta_m,
                beta_l: s.beta_l.unwrap_or(f64::NAN),
                quadratic_residual,
            })
        })
        .collect::<Result<Vec<_>, _>>()?;
    let err_m: Vec<f64> = trials.iter().map(|r| r.beta_m - cfg.beta).collect();
    let err_l: Vec<f64> = trials.iter().map(|r| r.beta_l - cfg.beta).collect();
    let exceed = |e: &[f64], t: f64| e.iter().filter(|x| !(x.abs() <= t)).count() as f64 / e.len() as f64;
    let exceed_m: Vec<f64> = cfg.t_grid.iter().map(|&t| exceed(&err_m, t)).collect();
    let exceed_l: Vec<f64> = cfg.t_grid.iter().map(|&t| exceed(&err_l, t)).collect();
    Ok(LineSlopeReport {
        ordering_holds: exceed_m.iter().zip(&exceed_l).all(|(m, l)| m < l),
        max_quadratic_residual: trials.iter().map(|r| r.quadratic_residual).fold(0.0, f64::max),
        tail_m: tail_survival(&err_m, &cfg.thresholds).into(),
        tail_l: tail_survival(&err_l, &cfg.thresholds).into(),
        t_grid: cfg.t_grid.clone(),
        exceed_m,
        exceed_l,
        config: cfg.clone(),
        trials,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{normal_pair, AngleSpec, NoiseSpec, TrueModel};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::{PI, TAU};

    fn cauchy(n: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| (PI * (rng.random::<f64>() - 0.5)).tan()).collect()
    }

    fn normals(n: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| normal_pair(&mut rng).0).collect()
    }

    fn exact_circle_cfg(trials: u64) -> StudyConfig {
        StudyConfig {
            trials,
            seed: Seed::new(1),
            generator: GeneratorSpec::Functional {
                truth: TrueModel {
                    a_star: 2.0,
                    b_star: -3.0,
                    r_star: 5.0,
                    angles: AngleSpec::Explicit {
                        angles: (0..8).map(|i| TAU * i as f64 / 8.0 + 0.1).collect(),
                    },
                },
                noise: NoiseSpec::none(),
            },
            estimators: vec![Estimator::Geometric, Estimator::Kasa, Estimator::Pratt],
            thresholds: vec![1.0, 10.0, 100.0],
            moment_orders: vec![1, 2],
            fit: GeomFitOptions::default(),
        }
    }

    #[test]
    fn single_exact_trial_recovers_truth() {
        let table = run_trials(&exact_circle_cfg(1)).unwrap();
        assert_eq!(table.rows.len(), 3);
        for r in &table.rows {
            assert_eq!(r.kind, OutcomeKind::Circle);
            assert!((r.a - 2.0).abs() < 1e-7 && (r.b + 3.0).abs() < 1e-7 && (r.r - 5.0).abs() < 1e-7);
        }
    }

    #[test]
    fn tables_are_deterministic_and_complete() {
        let mut cfg = exact_circle_cfg(50);
        cfg.generator = GeneratorSpec::Theorem { n: 3, h: 1e-3, rotate: false };
        let a = run_trials(&cfg).unwrap();
        let b = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap().install(|| run_trials(&cfg).unwrap());
        assert_eq!(a, b);
        assert_eq!(a.rows.len() as u64, cfg.trials * 3);
        for e in &cfg.estimators {
            let total: u64 = [OutcomeKind::Circle, OutcomeKind::Line, OutcomeKind::Failed].iter().map(|&k| a.count(*e, k)).sum();
            assert_eq!(total, cfg.trials);
        }
    }

    #[test]
    fn exact_circle_parametrizations_constant() {
        let table = run_trials(&exact_circle_cfg(20)).unwrap();
        let rep = compare_parametrizations(&table, &[1.0, 10.0, 100.0], &[1, 2]).unwrap();
        for s in rep.natural.iter().chain(&rep.alternative) {
            let v = table.column(Estimator::Geometric, s.param);
            assert!(v.iter().all(|x| (x - v[0]).abs() <= 1e-9 * (1.0 + v[0].abs())), "{:?}", s.param);
        }
    }

    #[test]
    fn cauchy_tail_slope_is_minus_one() {
        let rep = tail_survival(&cauchy(100_000, 3), &[10.0, 30.0, 100.0, 300.0, 1000.0]).unwrap();
        assert!((rep.slope + 1.0).abs() <= 0.15, "slope {}", rep.slope);
        assert!(rep.survival.windows(2).all(|w| w[0] >= w[1]));
        // oracle: P(|X| > T) = 1 − (2/π) atan T
        let s10 = 1.0 - 2.0 / PI * 10f64.atan();
        assert!((rep.survival[0] - s10).abs() < 4.0 * (s10 / 1e5).sqrt());
    }

    #[test]
    fn gaussian_tail_is_steep_or_insufficient() {
        let g = normals(100_000, 4);
        let rep = tail_survival(&g, &[2.0, 2.5, 3.0, 3.5]).unwrap();
        assert!(rep.slope < -3.0, "slope {}", rep.slope);
        assert!(matches!(tail_survival(&g, &[10.0, 20.0, 30.0]), Err(LabError::InsufficientTailData { .. })));
    }

    #[test]
    fn constant_samples_have_no_tail() {
        let r = tail_survival(&[0.5; 1000], &[1.0, 2.0, 3.0]);
        assert_eq!(r, Err(LabError::InsufficientTailData { retained: 0 }));
    }

    #[test]
    fn infinities_exceed_every_threshold() {
        let mut s = vec![f64::INFINITY; 30];
        s.extend([0.1; 70]);
        s.push(f64::NAN);
        let r = tail_survival(&s, &[1.0, 1e3, 1e9]).unwrap();
        assert_eq!(r.counts, vec![30, 30, 30]);
        assert_eq!((r.total, r.excluded), (100, 1));
        assert!(r.slope.abs() < 1e-12);
    }

    #[test]
    fn constant_trace() {
        let t = running_moment_trace(&[2.0; 1000], 1);
        assert!(t.moments.iter().all(|m| *m == 2.0));
        for (m, s) in t.checkpoints.iter().zip(&t.max_share) {
            assert!((s - 1.0 / *m as f64).abs() < 1e-15);
        }
        assert_eq!(t.checkpoints[..4], [1, 2, 5, 10]);
        assert_eq!(*t.checkpoints.last().unwrap(), 1000);
        assert_eq!(t.final_decade_change, Some(0.0));
    }

    #[test]
    fn gaussian_second_moment_converges() {
        let t = running_moment_trace(&normals(100_000, 5), 2);
        assert!((t.moments.last().unwrap() - 1.0).abs() < 0.05);
        assert!(*t.max_share.last().unwrap() < 0.01);
    }

    #[test]
    fn cauchy_max_share_stays_large() {
        let t = running_moment_trace(&cauchy(100_000, 6), 1);
        let late = t.checkpoints.iter().zip(&t.max_share).filter(|(m, _)| **m > 10_000).any(|(_, s)| *s > 0.05);
        assert!(late);
    }

    #[test]
    fn trace_counts_infinities_separately() {
        let t = running_moment_trace(&[1.0, f64::INFINITY, 3.0, f64::NAN, 5.0], 1);
        assert_eq!(t.checkpoints, vec![1, 2, 5]);
        assert_eq!(t.infinite, vec![0, 1, 1]);
        assert_eq!(t.moments[2], 3.0);
    }

    #[test]
    fn zeta_sweep_brackets_zero() {
        let pts = crate::models::theorem_construction(5, 1e-3, Seed::new(3)).unwrap().into_inner();
        let s = zeta_sweep(&pts[..4], pts[4].y, 200, 1e-3).unwrap();
        assert!(s.zeta_minus_in_range && s.zeta_plus_in_range);
        let (lo, hi) = s.sign_change.unwrap();
        assert!(lo < hi && (-1e-3..=1e-3).contains(&lo));
        assert!(s.max_slope.is_finite() && s.monotone);
        assert!(zeta_sweep(&pts[..4], pts[4].y, 50, 1e-3).is_err());
    }

    #[test]
    fn noiseless_line_study_is_exact() {
        let cfg = LineStudyConfig {
            trials: 200,
            seed: Seed::new(2),
            alpha: 0.5,
            beta: 1.0,
            n: 10,
            sigma: 0.0,
            x_lo: 0.0,
            x_hi: 1.0,
            t_grid: vec![0.05, 0.1, 0.2, 0.5],
            thresholds: vec![0.1, 1.0, 10.0],
        };
        let rep = slope_tail_comparison(&cfg).unwrap();
        assert!(rep.exceed_m.iter().chain(&rep.exceed_l).all(|e| *e == 0.0));
        assert!(rep.max_quadratic_residual <= 1e-12);
    }

    #[test]
    fn invalid_configs_are_rejected() {
        let mut cfg = exact_circle_cfg(10);
        cfg.thresholds = vec![10.0, 1.0];
        assert!(matches!(run_trials(&cfg), Err(LabError::Config(_))));
        cfg = exact_circle_cfg(0);
        assert!(matches!(run_trials(&cfg), Err(LabError::Config(_))));
    }
}
