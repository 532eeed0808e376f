//! Fitting (alpha_1, beta_a) to one epidemic wave, profile intervals, and
//! the cross-region parameter and correlation tables.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::WaveWindow;
use crate::model::{integrate, CompartmentState, ModelParams, ParamName};
use crate::observables::incidence_series;
use crate::optim::{nelder_mead, NelderMeadOptions};
use crate::series::DateSeries;
use crate::stats::{pearson, Correlation};

pub const DEFAULT_GRID_POINTS: usize = 21;
pub const DEFAULT_PROFILE_THRESHOLD: f64 = 0.05;
pub const DEFAULT_AWARE_SEED: f64 = 1e-6;
pub const TABLE_WAVES: usize = 3;

#[derive(Debug, Error)]
pub enum FitError {
    #[error("invalid fit setup: {0}")]
    InvalidSpec(String),
    #[error("every candidate failed to integrate (last error: {0})")]
    AllCandidatesFailed(String),
    #[error("parameter {0} is not free in this fit")]
    NotFree(ParamName),
    #[error("table csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("table row {row}: {reason}")]
    Table { row: usize, reason: String },
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

/// How the infected seed of each candidate integration is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SeedRule {
    /// Infected fraction equal to the first positive target value in the
    /// window.
    FirstDataPoint,
    Fixed(f64),
}

/// Fixed parameters used when fitting waves: beta_i = 0.15,
/// gamma_i = 1/14, alpha_2 = 1 and a ten-day active-awareness period.
pub fn default_fit_params() -> ModelParams {
    ModelParams {
        beta_i: 0.15,
        alpha_1: 0.5,
        alpha_2: 1.0,
        beta_a: 0.15,
        gamma_i: 1.0 / 14.0,
        gamma_a: 0.1,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitSpec {
    /// Values for all non-free parameters.
    pub fixed: ModelParams,
    /// Box for alpha_1; `None` keeps `fixed.alpha_1`.
    pub alpha_1: Option<(f64, f64)>,
    /// Box for beta_a; `None` keeps `fixed.beta_a`.
    pub beta_a: Option<(f64, f64)>,
    pub scale_bounds: (f64, f64),
    /// Offset in days: data day d is compared with model time d - t0.
    pub t0_bounds: (f64, f64),
    pub wave: WaveWindow,
    pub target: DateSeries,
    pub seed: SeedRule,
    pub aware_seed: f64,
    pub grid_points: usize,
    pub step_size: f64,
    pub profile_threshold: f64,
}

impl FitSpec {
    pub fn new(target: DateSeries, wave: WaveWindow) -> Self {
        Self {
            fixed: default_fit_params(),
            alpha_1: Some((0.0, 1.0)),
            beta_a: Some((0.0, 0.4)),
            scale_bounds: (1e-4, 1e2),
            t0_bounds: (-30.0, 30.0),
            wave,
            target,
            seed: SeedRule::FirstDataPoint,
            aware_seed: DEFAULT_AWARE_SEED,
            grid_points: DEFAULT_GRID_POINTS,
            step_size: 0.5,
            profile_threshold: DEFAULT_PROFILE_THRESHOLD,
        }
    }

    pub fn validate(&self) -> Result<(), FitError> {
        let bad = |m: String| Err(FitError::InvalidSpec(m));
        self.fixed
            .validate()
            .map_err(|e| FitError::InvalidSpec(e.to_string()))?;
        for (name, b) in [
            (ParamName::Alpha1, self.alpha_1),
            (ParamName::BetaA, self.beta_a),
        ] {
            if let Some((lo, hi)) = b {
                if !(lo <= hi) {
                    return bad(format!("{name} bounds [{lo}, {hi}] are empty"));
                }
                for v in [lo, hi] {
                    self.fixed
                        .with(name, v)
                        .validate()
                        .map_err(|e| FitError::InvalidSpec(format!("{name} bound: {e}")))?;
                }
            }
        }
        let (slo, shi) = self.scale_bounds;
        if !(slo > 0.0 && slo <= shi && shi.is_finite()) {
            return bad(format!(
                "scale bounds [{slo}, {shi}] must be positive and ordered"
            ));
        }
        let (tlo, thi) = self.t0_bounds;
        if !(tlo <= thi && tlo.is_finite() && thi.is_finite()) {
            return bad(format!("t0 bounds [{tlo}, {thi}] invalid"));
        }
        if self.wave.start >= self.wave.end {
            return bad("wave window must start before it ends".into());
        }
        if self.wave.start < self.target.first_date() || self.wave.end > self.target.last_date() {
            return bad(format!(
                "wave {}..{} lies outside the target ({}..{})",
                self.wave.start,
                self.wave.end,
                self.target.first_date(),
                self.target.last_date()
            ));
        }
        if self.grid_points < 1 {
            return bad("grid needs at least one point per axis".into());
        }
        if !(self.step_size > 0.0 && self.step_size <= 1.0) {
            return bad(format!("step size {} must lie in (0, 1]", self.step_size));
        }
        if !(self.aware_seed >= 0.0 && self.aware_seed < 1.0) {
            return bad(format!("aware seed {} must lie in [0, 1)", self.aware_seed));
        }
        if let SeedRule::Fixed(v) = self.seed {
            if !(v > 0.0 && v + self.aware_seed <= 1.0) {
                return bad(format!("infected seed {v} out of range"));
            }
        }
        if !(self.profile_threshold >= 0.0) {
            return bad("profile threshold must be non-negative".into());
        }
        Ok(())
    }

    fn free_params(&self) -> Vec<(ParamName, (f64, f64))> {
        let mut v = Vec::new();
        if let Some(b) = self.alpha_1 {
            v.push((ParamName::Alpha1, b));
        }
        if let Some(b) = self.beta_a {
            v.push((ParamName::BetaA, b));
        }
        v
    }

    /// Target values inside the wave window.
    pub fn window_values(&self) -> Vec<(NaiveDate, f64)> {
        self.target
            .iter()
            .filter(|(d, _)| *d >= self.wave.start && *d <= self.wave.end)
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProfileInterval {
    pub lo: f64,
    pub hi: f64,
    /// The profile was still below threshold at the lower box bound.
    pub lo_censored: bool,
    pub hi_censored: bool,
}

impl ProfileInterval {
    pub fn contains(&self, v: f64) -> bool {
        self.lo <= v && v <= self.hi
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Intervals {
    pub alpha_1: Option<ProfileInterval>,
    pub beta_a: Option<ProfileInterval>,
}

impl Intervals {
    pub fn get(&self, p: ParamName) -> Option<ProfileInterval> {
        match p {
            ParamName::Alpha1 => self.alpha_1,
            ParamName::BetaA => self.beta_a,
            ParamName::Alpha2 => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WaveFit {
    pub label: String,
    pub alpha_1: f64,
    pub beta_a: f64,
    pub scale: f64,
    pub t0: f64,
    pub sse: f64,
    /// Best objective on the coarse grid, before refinement.
    pub coarse_sse: f64,
    pub intervals: Intervals,
    pub converged: bool,
    pub failed_candidates: usize,
}

impl WaveFit {
    pub fn get(&self, p: ParamName) -> Option<f64> {
        match p {
            ParamName::Alpha1 => Some(self.alpha_1),
            ParamName::BetaA => Some(self.beta_a),
            ParamName::Alpha2 => None,
        }
    }
}

/// Lays out the optimization vector as [free model params.., ln s, t0].
struct Problem<'a> {
    spec: &'a FitSpec,
    free: Vec<(ParamName, (f64, f64))>,
    dates: Vec<NaiveDate>,
    y: Vec<f64>,
    y_norm: f64,
    seed: f64,
    n_steps: usize,
}

impl<'a> Problem<'a> {
    fn new(spec: &'a FitSpec) -> Result<Self, FitError> {
        spec.validate()?;
        let window = spec.window_values();
        if window.len() < 2 {
            return Err(FitError::InvalidSpec(
                "wave window holds fewer than two target points".into(),
            ));
        }
        let (dates, y): (Vec<_>, Vec<_>) = window.into_iter().unzip();
        let y_norm = y.iter().map(|v| v * v).sum::<f64>();
        if !(y_norm > 0.0) {
            return Err(FitError::InvalidSpec("target is identically zero".into()));
        }
        let seed = match spec.seed {
            SeedRule::Fixed(v) => v,
            SeedRule::FirstDataPoint => {
                // leading zero days carry no seed information
                let v = y.iter().copied().find(|&v| v > 0.0).unwrap_or(0.0);
                if y[0] <= 0.0 {
                    log::info!(
                        "wave starts with zero counts; seeding with first positive value {v:e}"
                    );
                }
                v.min(1.0 - spec.aware_seed)
            }
        };
        let span = (window_offset(spec.wave.start, *dates.last().unwrap()) as f64
            - spec.t0_bounds.0)
            .max(1.0);
        let n_steps = ((span + 2.0) / spec.step_size).ceil() as usize;
        Ok(Self {
            free: spec.free_params(),
            spec,
            dates,
            y,
            y_norm,
            seed,
            n_steps,
        })
    }

    fn bounds(&self) -> Vec<(f64, f64)> {
        let mut b: Vec<(f64, f64)> = self.free.iter().map(|(_, b)| *b).collect();
        b.push((self.spec.scale_bounds.0.ln(), self.spec.scale_bounds.1.ln()));
        b.push(self.spec.t0_bounds);
        b
    }

    fn model_params(&self, x: &[f64]) -> ModelParams {
        self.free
            .iter()
            .zip(x)
            .fold(self.spec.fixed, |p, ((name, _), v)| p.with(*name, *v))
    }

    fn index_of(&self, p: ParamName) -> Option<usize> {
        self.free.iter().position(|(n, _)| *n == p)
    }

    /// Daily model incidence starting at wave day 0.
    fn model_daily(&self, params: &ModelParams) -> Result<Vec<f64>, String> {
        let initial = CompartmentState::seeded(self.spec.aware_seed, self.seed);
        let traj = integrate(&initial, params, self.spec.step_size, self.n_steps)
            .map_err(|e| e.to_string())?;
        Ok(incidence_series(&traj).values().to_vec())
    }

    fn day(&self, k: usize) -> f64 {
        window_offset(self.spec.wave.start, self.dates[k]) as f64
    }

    fn shifted(&self, m: &[f64], t0: f64) -> Vec<f64> {
        (0..self.y.len())
            .map(|k| interpolate(m, self.day(k) - t0))
            .collect()
    }

    fn sse(&self, pred: &[f64], scale: f64) -> f64 {
        pred.iter()
            .zip(&self.y)
            .map(|(p, y)| (scale * p - y).powi(2))
            .sum()
    }

    /// SSE relative to the target's sum of squares.
    fn objective(&self, x: &[f64]) -> f64 {
        let n = self.free.len();
        match self.model_daily(&self.model_params(x)) {
            Ok(m) => {
                let pred = self.shifted(&m, x[n + 1]);
                self.sse(&pred, x[n].exp()) / self.y_norm
            }
            Err(e) => {
                log::debug!("candidate {x:?} discarded: {e}");
                f64::INFINITY
            }
        }
    }
}

fn window_offset(start: NaiveDate, d: NaiveDate) -> i64 {
    (d - start).num_days()
}

/// Piecewise-linear lookup of a daily series, zero before day 0.
fn interpolate(m: &[f64], tau: f64) -> f64 {
    if tau < 0.0 || m.is_empty() {
        return 0.0;
    }
    let k = tau.floor() as usize;
    if k + 1 >= m.len() {
        return *m.last().unwrap();
    }
    let frac = tau - k as f64;
    m[k] + frac * (m[k + 1] - m[k])
}

fn grid_axis(bounds: (f64, f64), n: usize) -> Vec<f64> {
    if n == 1 || bounds.0 == bounds.1 {
        return vec![0.5 * (bounds.0 + bounds.1)];
    }
    (0..n)
        .map(|k| bounds.0 + (bounds.1 - bounds.0) * k as f64 / (n - 1) as f64)
        .collect()
}

fn refine_options() -> NelderMeadOptions {
    NelderMeadOptions {
        max_iterations: 4000,
        f_tolerance: 1e-15,
        x_tolerance: 1e-9,
        initial_step: 0.05,
    }
}

fn profile_options() -> NelderMeadOptions {
    NelderMeadOptions {
        max_iterations: 1500,
        f_tolerance: 1e-14,
        x_tolerance: 1e-8,
        initial_step: 0.02,
    }
}

/// Coarse grid over the free model parameters with an integer t0 scan and
/// the least-squares scale per cell, followed by simplex refinement over
/// all free and nuisance parameters.
pub fn fit_wave(spec: &FitSpec) -> Result<WaveFit, FitError> {
    let problem = Problem::new(spec)?;
    let n_free = problem.free.len();
    let axes: Vec<Vec<f64>> = problem
        .free
        .iter()
        .map(|(_, b)| grid_axis(*b, spec.grid_points))
        .collect();
    let (tlo, thi) = spec.t0_bounds;
    let (slo, shi) = spec.scale_bounds;
    let t0_scan: Vec<f64> = {
        let mut v: Vec<f64> = ((tlo.ceil() as i64)..=(thi.floor() as i64))
            .map(|t| t as f64)
            .collect();
        if v.is_empty() {
            v.push(0.5 * (tlo + thi));
        }
        v
    };

    let n_cells: usize = axes.iter().map(Vec::len).product();
    let mut failed = 0;
    let mut last_error = String::new();
    let mut candidates: Vec<(f64, Vec<f64>)> = Vec::new();
    for cell in 0..n_cells {
        let mut rem = cell;
        let mut x: Vec<f64> = axes
            .iter()
            .map(|a| {
                let v = a[rem % a.len()];
                rem /= a.len();
                v
            })
            .collect();
        let m = match problem.model_daily(&problem.model_params(&x)) {
            Ok(m) => m,
            Err(e) => {
                log::debug!("grid candidate {x:?} discarded: {e}");
                failed += 1;
                last_error = e;
                continue;
            }
        };
        let mut best: Option<(f64, f64, f64)> = None;
        for &t0 in &t0_scan {
            let pred = problem.shifted(&m, t0);
            let pp: f64 = pred.iter().map(|p| p * p).sum();
            let py: f64 = pred.iter().zip(&problem.y).map(|(p, y)| p * y).sum();
            let s = if pp > 0.0 {
                (py / pp).clamp(slo, shi)
            } else {
                slo
            };
            let obj = problem.sse(&pred, s) / problem.y_norm;
            if best.map_or(true, |(b, _, _)| obj < b) {
                best = Some((obj, s, t0));
            }
        }
        let (obj, s, t0) = best.expect("t0 scan is non-empty");
        x.push(s.ln());
        x.push(t0);
        candidates.push((obj, x));
    }
    if candidates.is_empty() {
        return Err(FitError::AllCandidatesFailed(last_error));
    }
    log::debug!("{failed} of {n_cells} grid candidates failed");
    candidates.sort_by(|a, b| a.0.total_cmp(&b.0));
    let coarse = candidates[0].0;

    let bounds = problem.bounds();
    let objective = |x: &[f64]| problem.objective(x);
    let opts = refine_options();
    let mut best: Option<crate::optim::Minimum> = None;
    for (_, start) in candidates.iter().take(3) {
        let mut m = nelder_mead(objective, start, &bounds, &opts);
        // restart from the result to escape a collapsed simplex
        let again = nelder_mead(objective, &m.x, &bounds, &opts);
        if again.value <= m.value {
            m = again;
        }
        if best.as_ref().map_or(true, |b| m.value < b.value) {
            best = Some(m);
        }
    }
    let mut best = best.expect("at least one start");
    if best.value > coarse {
        // refinement never loses ground to the grid
        best.x = candidates[0].1.clone();
        best.value = coarse;
    }

    let params = problem.model_params(&best.x);
    let mut fit = WaveFit {
        label: spec.wave.label.clone(),
        alpha_1: params.alpha_1,
        beta_a: params.beta_a,
        scale: best.x[n_free].exp(),
        t0: best.x[n_free + 1],
        sse: best.value * problem.y_norm,
        coarse_sse: coarse * problem.y_norm,
        intervals: Intervals::default(),
        converged: best.converged,
        failed_candidates: failed,
    };
    for (name, _) in problem.free.clone() {
        let iv = profile_with_problem(&problem, &best.x, best.value, name, spec.profile_threshold)?;
        match name {
            ParamName::Alpha1 => fit.intervals.alpha_1 = Some(iv),
            ParamName::BetaA => fit.intervals.beta_a = Some(iv),
            ParamName::Alpha2 => {}
        }
    }
    Ok(fit)
}

fn fit_vector(problem: &Problem, fit: &WaveFit) -> Vec<f64> {
    let mut x: Vec<f64> = problem
        .free
        .iter()
        .map(|(n, _)| fit.get(*n).expect("free params are alpha_1/beta_a"))
        .collect();
    x.push(fit.scale.ln());
    x.push(fit.t0);
    x
}

/// Profile interval of one free parameter around a fit: the range of
/// values whose re-optimized SSE stays within `sse * (1 + threshold)`.
pub fn profile_interval(
    spec: &FitSpec,
    fit: &WaveFit,
    param: ParamName,
    threshold: f64,
) -> Result<ProfileInterval, FitError> {
    let problem = Problem::new(spec)?;
    let x = fit_vector(&problem, fit);
    profile_with_problem(&problem, &x, fit.sse / problem.y_norm, param, threshold)
}

fn profile_with_problem(
    problem: &Problem,
    best: &[f64],
    best_value: f64,
    param: ParamName,
    threshold: f64,
) -> Result<ProfileInterval, FitError> {
    let index = problem.index_of(param).ok_or(FitError::NotFree(param))?;
    Ok(profile_interval_with(
        |x| problem.objective(x),
        best,
        &problem.bounds(),
        index,
        best_value,
        threshold,
    ))
}

/// Generic profile over coordinate `index` of a bounded objective.
///
/// Steps outward from the optimum with doubling strides, re-minimizing the
/// other coordinates from the previous profile point, then bisects the
/// crossing. An endpoint that reaches its bound while still inside the
/// threshold is censored. A zero threshold admits only the optimum.
pub fn profile_interval_with<F>(
    objective: F,
    best: &[f64],
    bounds: &[(f64, f64)],
    index: usize,
    best_value: f64,
    threshold: f64,
) -> ProfileInterval
where
    F: Fn(&[f64]) -> f64,
{
    let value = best[index];
    let (lo_b, hi_b) = bounds[index];
    if threshold <= 0.0 {
        return ProfileInterval {
            lo: value,
            hi: value,
            lo_censored: value <= lo_b,
            hi_censored: value >= hi_b,
        };
    }
    let limit = best_value * (1.0 + threshold);
    let others: Vec<usize> = (0..best.len()).filter(|&i| i != index).collect();
    let other_bounds: Vec<(f64, f64)> = others.iter().map(|&i| bounds[i]).collect();
    let opts = profile_options();

    // minimum over the other coordinates with `index` pinned to v
    let profile = |v: f64, warm: &[f64]| -> (f64, Vec<f64>) {
        let full = |y: &[f64]| {
            let mut x = best.to_vec();
            x[index] = v;
            for (k, &i) in others.iter().enumerate() {
                x[i] = y[k];
            }
            objective(&x)
        };
        if others.is_empty() {
            return (full(&[]), Vec::new());
        }
        let m = nelder_mead(full, warm, &other_bounds, &opts);
        (m.value, m.x)
    };

    let width = hi_b - lo_b;
    let base_step = width / 200.0;
    let start: Vec<f64> = others.iter().map(|&i| best[i]).collect();

    let walk = |direction: f64| -> (f64, bool) {
        let bound = if direction > 0.0 { hi_b } else { lo_b };
        if (bound - value) * direction <= 0.0 {
            return (value, true);
        }
        let mut inside = value;
        let mut warm = start.clone();
        let mut step = base_step;
        loop {
            let candidate = if ((bound - inside) * direction) <= step {
                bound
            } else {
                inside + direction * step
            };
            let (f, x) = profile(candidate, &warm);
            if f <= limit {
                inside = candidate;
                warm = x;
                if candidate == bound {
                    return (bound, true);
                }
                step *= 2.0;
                continue;
            }
            // crossing lies in (inside, candidate]
            let (mut a, mut b) = (inside, candidate);
            for _ in 0..30 {
                if (b - a).abs() <= width * 1e-6 {
                    break;
                }
                let mid = 0.5 * (a + b);
                let (f, x) = profile(mid, &warm);
                if f <= limit {
                    a = mid;
                    warm = x;
                } else {
                    b = mid;
                }
            }
            return (a, false);
        }
    };
    let (hi, hi_censored) = walk(1.0);
    let (lo, lo_censored) = walk(-1.0);
    ProfileInterval {
        lo,
        hi,
        lo_censored,
        hi_censored,
    }
}

/// Data and fitted model values over the wave window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitCurvePoint {
    pub date: NaiveDate,
    pub data: f64,
    pub model: f64,
}

pub fn fit_curve(spec: &FitSpec, fit: &WaveFit) -> Result<Vec<FitCurvePoint>, FitError> {
    let problem = Problem::new(spec)?;
    let x = fit_vector(&problem, fit);
    let m = problem
        .model_daily(&problem.model_params(&x))
        .map_err(FitError::AllCandidatesFailed)?;
    let pred = problem.shifted(&m, fit.t0);
    Ok(problem
        .dates
        .iter()
        .zip(&problem.y)
        .zip(pred)
        .map(|((&date, &data), p)| FitCurvePoint {
            date,
            data,
            model: fit.scale * p,
        })
        .collect())
}

pub fn write_fit_curve<W: Write>(points: &[FitCurvePoint], mut out: W) -> std::io::Result<()> {
    writeln!(out, "date,data,model")?;
    for p in points {
        writeln!(out, "{},{:.10e},{:.10e}", p.date, p.data, p.model)?;
    }
    Ok(())
}

/// Model daily incidence for given parameters, `n_days` long, starting from
/// the seeded state. Used to build synthetic targets.
pub fn model_incidence(
    params: &ModelParams,
    aware_seed: f64,
    infected_seed: f64,
    step_size: f64,
    n_days: usize,
) -> Result<Vec<f64>, FitError> {
    let n_steps = (n_days as f64 / step_size).ceil() as usize;
    let traj = integrate(
        &CompartmentState::seeded(aware_seed, infected_seed),
        params,
        step_size,
        n_steps,
    )
    .map_err(|e| FitError::AllCandidatesFailed(e.to_string()))?;
    let mut v = incidence_series(&traj).values().to_vec();
    v.truncate(n_days);
    Ok(v)
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ParamRow {
    pub region: String,
    pub abbreviation: Option<String>,
    pub alpha_1: [Option<f64>; TABLE_WAVES],
    pub alpha_1_interval: [Option<(f64, f64)>; TABLE_WAVES],
    pub beta_a: [Option<f64>; TABLE_WAVES],
    pub beta_a_interval: [Option<(f64, f64)>; TABLE_WAVES],
    pub ranking: Option<f64>,
    pub extras: BTreeMap<String, f64>,
}

impl ParamRow {
    /// alpha_1 at the first wave minus alpha_1 at the second.
    pub fn delta_alpha_1(&self) -> Option<f64> {
        Some(self.alpha_1[0]? - self.alpha_1[1]?)
    }

    /// beta_a at the first wave minus beta_a at the second.
    pub fn delta_beta_a(&self) -> Option<f64> {
        Some(self.beta_a[0]? - self.beta_a[1]?)
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ParamTable {
    pub rows: Vec<ParamRow>,
    pub extra_columns: Vec<String>,
}

/// Builds one row per region from its wave fits (in wave order), joining
/// optional rankings and extra indices. Regions absent from a join get a
/// blank value; missing waves leave their columns blank.
pub fn build_param_table(
    fits: &BTreeMap<String, Vec<WaveFit>>,
    rankings: Option<&BTreeMap<String, f64>>,
    extra_indices: &BTreeMap<String, BTreeMap<String, f64>>,
) -> ParamTable {
    let rows = fits
        .iter()
        .map(|(region, waves)| {
            let mut row = ParamRow {
                region: region.clone(),
                ..Default::default()
            };
            for (k, w) in waves.iter().take(TABLE_WAVES).enumerate() {
                row.alpha_1[k] = Some(w.alpha_1);
                row.beta_a[k] = Some(w.beta_a);
                row.alpha_1_interval[k] = w.intervals.alpha_1.map(|i| (i.lo, i.hi));
                row.beta_a_interval[k] = w.intervals.beta_a.map(|i| (i.lo, i.hi));
            }
            if waves.len() < 2 {
                log::warn!("region {region} has fewer than two waves; delta columns blank");
            }
            row.ranking = rankings.and_then(|r| r.get(region).copied());
            for (name, values) in extra_indices {
                if let Some(v) = values.get(region) {
                    row.extras.insert(name.clone(), *v);
                }
            }
            row
        })
        .collect();
    ParamTable {
        rows,
        extra_columns: extra_indices.keys().cloned().collect(),
    }
}

fn wave_columns() -> Vec<String> {
    let mut cols = Vec::new();
    for k in 1..=TABLE_WAVES {
        for p in ["alpha_1", "beta_a"] {
            cols.push(format!("{p}_p{k}"));
            cols.push(format!("{p}_p{k}_lo"));
            cols.push(format!("{p}_p{k}_hi"));
        }
    }
    cols
}

impl ParamTable {
    /// Values of a named column. Accepts `alpha_1_p1`..`beta_a_p3`,
    /// `delta_alpha_1` (alias `delta_alpha_a`), `delta_beta_a`, `ranking`
    /// and any extra column.
    pub fn column(&self, name: &str) -> Option<Vec<Option<f64>>> {
        let per_row = |f: &dyn Fn(&ParamRow) -> Option<f64>| self.rows.iter().map(f).collect();
        match name {
            "delta_alpha_1" | "delta_alpha_a" => return Some(per_row(&|r| r.delta_alpha_1())),
            "delta_beta_a" => return Some(per_row(&|r| r.delta_beta_a())),
            "ranking" => return Some(per_row(&|r| r.ranking)),
            _ => {}
        }
        for k in 0..TABLE_WAVES {
            if name == format!("alpha_1_p{}", k + 1) {
                return Some(per_row(&|r| r.alpha_1[k]));
            }
            if name == format!("beta_a_p{}", k + 1) {
                return Some(per_row(&|r| r.beta_a[k]));
            }
        }
        if self.extra_columns.iter().any(|c| c == name) {
            return Some(per_row(&|r| r.extras.get(name).copied()));
        }
        None
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), FitError> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["region".to_string(), "abbreviation".to_string()];
        header.extend(wave_columns());
        header.extend(["ranking", "delta_alpha_1", "delta_beta_a"].map(String::from));
        header.extend(self.extra_columns.iter().cloned());
        w.write_record(&header)?;
        let f = |v: Option<f64>| v.map(|v| v.to_string()).unwrap_or_default();
        for r in &self.rows {
            let mut rec = vec![r.region.clone(), r.abbreviation.clone().unwrap_or_default()];
            for k in 0..TABLE_WAVES {
                for (value, iv) in [
                    (r.alpha_1[k], r.alpha_1_interval[k]),
                    (r.beta_a[k], r.beta_a_interval[k]),
                ] {
                    rec.push(f(value));
                    rec.push(f(iv.map(|i| i.0)));
                    rec.push(f(iv.map(|i| i.1)));
                }
            }
            rec.push(f(r.ranking));
            rec.push(f(r.delta_alpha_1()));
            rec.push(f(r.delta_beta_a()));
            for c in &self.extra_columns {
                rec.push(f(r.extras.get(c).copied()));
            }
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Reads the layout written by [`ParamTable::write_csv`]. Derived delta
    /// columns are recomputed; unknown numeric columns become extras.
    pub fn read_csv<R: Read>(reader: R) -> Result<Self, FitError> {
        let mut rdr = csv::Reader::from_reader(reader);
        let headers: Vec<String> = rdr
            .headers()?
            .iter()
            .map(|h| h.trim().to_string())
            .collect();
        let known = wave_columns();
        let skip = [
            "region",
            "abbreviation",
            "ranking",
            "delta_alpha_1",
            "delta_alpha_a",
            "delta_beta_a",
        ];
        let extra_columns: Vec<String> = headers
            .iter()
            .filter(|h| !skip.contains(&h.as_str()) && !known.contains(h))
            .cloned()
            .collect();
        if !headers.iter().any(|h| h == "region") {
            return Err(FitError::Table {
                row: 1,
                reason: "missing column 'region'".into(),
            });
        }
        let mut rows = Vec::new();
        for (i, rec) in rdr.records().enumerate() {
            let row_no = i + 2;
            let rec = rec?;
            let get = |name: &str| -> Option<&str> {
                headers
                    .iter()
                    .position(|h| h == name)
                    .and_then(|c| rec.get(c))
                    .map(str::trim)
                    .filter(|s| !s.is_empty())
            };
            let num = |name: &str| -> Result<Option<f64>, FitError> {
                get(name)
                    .map(|s| {
                        s.parse::<f64>().map_err(|_| FitError::Table {
                            row: row_no,
                            reason: format!("column {name}: '{s}' is not a number"),
                        })
                    })
                    .transpose()
            };
            let mut row = ParamRow {
                region: get("region").unwrap_or_default().to_string(),
                abbreviation: get("abbreviation").map(String::from),
                ranking: num("ranking")?,
                ..Default::default()
            };
            for k in 0..TABLE_WAVES {
                let p = k + 1;
                row.alpha_1[k] = num(&format!("alpha_1_p{p}"))?;
                row.beta_a[k] = num(&format!("beta_a_p{p}"))?;
                let pair = |a: Option<f64>, b: Option<f64>| Some((a?, b?));
                row.alpha_1_interval[k] = pair(
                    num(&format!("alpha_1_p{p}_lo"))?,
                    num(&format!("alpha_1_p{p}_hi"))?,
                );
                row.beta_a_interval[k] = pair(
                    num(&format!("beta_a_p{p}_lo"))?,
                    num(&format!("beta_a_p{p}_hi"))?,
                );
            }
            for c in &extra_columns {
                if let Some(v) = num(c)? {
                    row.extras.insert(c.clone(), v);
                }
            }
            rows.push(row);
        }
        Ok(Self {
            rows,
            extra_columns,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationEntry {
    pub x: String,
    pub y: String,
    /// Complete rows used after pairwise deletion.
    pub n: usize,
    pub result: Result<Correlation, String>,
}

impl CorrelationEntry {
    /// Display label; `delta_alpha_1` is also reported under its alias.
    pub fn label(&self) -> String {
        let show = |c: &str| match c {
            "delta_alpha_1" | "delta_alpha_a" => "delta_alpha_1/delta_alpha_a".to_string(),
            other => other.to_string(),
        };
        format!("{} vs {}", show(&self.x), show(&self.y))
    }
}

/// Correlation pairs reported across regions: the wave-to-wave changes against
/// the first-wave parameters, the activity ranking and, when present, a
/// `mask_orders` column.
pub fn default_pairs(table: &ParamTable) -> Vec<(String, String)> {
    let mut pairs = vec![
        ("delta_beta_a", "alpha_1_p1"),
        ("delta_alpha_1", "beta_a_p1"),
        ("delta_beta_a", "ranking"),
    ];
    if table.extra_columns.iter().any(|c| c == "mask_orders") {
        pairs.push(("delta_beta_a", "mask_orders"));
        pairs.push(("delta_alpha_1", "mask_orders"));
    }
    pairs
        .into_iter()
        .map(|(a, b)| (a.to_string(), b.to_string()))
        .collect()
}

pub fn correlate_table(
    table: &ParamTable,
    pairs: &[(String, String)],
) -> Result<Vec<CorrelationEntry>, FitError> {
    pairs
        .iter()
        .map(|(x, y)| {
            let cx = table
                .column(x)
                .ok_or_else(|| FitError::InvalidSpec(format!("unknown column '{x}'")))?;
            let cy = table
                .column(y)
                .ok_or_else(|| FitError::InvalidSpec(format!("unknown column '{y}'")))?;
            let (a, b): (Vec<f64>, Vec<f64>) = cx
                .iter()
                .zip(&cy)
                .filter_map(|(a, b)| Some(((*a)?, (*b)?)))
                .unzip();
            let result = pearson(&a, &b).map_err(|e| {
                log::warn!("pair {x} vs {y} skipped: {e}");
                e.to_string()
            });
            Ok(CorrelationEntry {
                x: x.clone(),
                y: y.clone(),
                n: a.len(),
                result,
            })
        })
        .collect()
}

/// `pair,rho,p_value,n`; skipped pairs leave rho and p blank.
pub fn write_correlations<W: Write>(entries: &[CorrelationEntry], out: W) -> Result<(), FitError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["pair", "rho", "p_value", "n"])?;
    for e in entries {
        let (rho, p) = match &e.result {
            Ok(c) => (format!("{:.6}", c.rho), format!("{:.6e}", c.p_value)),
            Err(_) => (String::new(), String::new()),
        };
        w.write_record([e.label(), rho, p, e.n.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn interpolation_is_zero_before_start() {
        let m = [1.0, 3.0, 5.0];
        assert_eq!(interpolate(&m, -0.5), 0.0);
        assert_eq!(interpolate(&m, 0.5), 2.0);
        assert_eq!(interpolate(&m, 10.0), 5.0);
    }

    #[test]
    fn quadratic_profile_is_symmetric() {
        // f = 1 + 100 (x - 0.4)^2 + (y - 0.2)^2, limit 1.05 gives |x - 0.4| <= sqrt(5e-4)
        let f = |x: &[f64]| 1.0 + 100.0 * (x[0] - 0.4).powi(2) + (x[1] - 0.2).powi(2);
        let iv = profile_interval_with(f, &[0.4, 0.2], &[(0.0, 1.0), (0.0, 1.0)], 0, 1.0, 0.05);
        let half = 5e-4f64.sqrt();
        assert!((iv.hi - 0.4 - half).abs() < 1e-4, "{iv:?}");
        assert!((0.4 - iv.lo - half).abs() < 1e-4, "{iv:?}");
        assert!(!iv.lo_censored && !iv.hi_censored);
    }

    #[test]
    fn zero_threshold_and_censoring() {
        let f = |x: &[f64]| 1.0 + (x[0] - 0.4).powi(2);
        let iv = profile_interval_with(f, &[0.4], &[(0.0, 1.0)], 0, 1.0, 0.0);
        assert_eq!((iv.lo, iv.hi), (0.4, 0.4));
        let g = |x: &[f64]| 1.0 + x[0].powi(2);
        let iv = profile_interval_with(g, &[0.0], &[(0.0, 1.0)], 0, 1.0, 0.05);
        assert!(iv.lo_censored && !iv.hi_censored);
        assert_eq!(iv.lo, 0.0);
        let flat = |_: &[f64]| 1.0;
        let iv = profile_interval_with(flat, &[0.5], &[(0.0, 1.0)], 0, 1.0, 0.05);
        assert!(iv.lo_censored && iv.hi_censored);
        assert_eq!((iv.lo, iv.hi), (0.0, 1.0));
    }

    fn row(region: &str, a: [f64; 2], b: [f64; 2], rank: Option<f64>) -> ParamRow {
        ParamRow {
            region: region.into(),
            alpha_1: [Some(a[0]), Some(a[1]), None],
            beta_a: [Some(b[0]), Some(b[1]), None],
            ranking: rank,
            ..Default::default()
        }
    }

    #[test]
    fn deltas_use_first_minus_second() {
        let r = row("Alaska", [0.24, 0.16], [0.215, 0.185], Some(22.0));
        assert!((r.delta_beta_a().unwrap() - 0.030).abs() < 1e-12);
        assert!((r.delta_alpha_1().unwrap() - 0.08).abs() < 1e-12);
    }

    #[test]
    fn single_region_has_no_correlation() {
        let t = ParamTable {
            rows: vec![row("A", [0.2, 0.1], [0.2, 0.1], None)],
            extra_columns: vec![],
        };
        let c = correlate_table(&t, &default_pairs(&t)).unwrap();
        assert!(c.iter().all(|e| e.result.is_err()));
        assert_eq!(t.column("delta_alpha_a"), t.column("delta_alpha_1"));
    }

    #[test]
    fn table_csv_round_trip() {
        let mut r = row("B", [0.3, 0.1], [0.25, 0.2], None);
        r.extras.insert("mask_orders".into(), 1.0);
        r.alpha_1_interval[0] = Some((0.29, 0.31));
        let t = ParamTable {
            rows: vec![row("A", [0.2, 0.1], [0.2, 0.15], Some(3.0)), r],
            extra_columns: vec!["mask_orders".into()],
        };
        let mut buf = Vec::new();
        t.write_csv(&mut buf).unwrap();
        let back = ParamTable::read_csv(buf.as_slice()).unwrap();
        assert_eq!(back, t);
    }
}
