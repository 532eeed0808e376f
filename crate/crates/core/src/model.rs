//! Model parameters, compartment state and the fixed-step integrator.

use std::fmt;
use std::io::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Compartments below this after a step indicate an unstable step size.
pub const NEGATIVE_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("invalid parameter {name} = {value}: {reason}")]
    InvalidParam {
        name: &'static str,
        value: f64,
        reason: &'static str,
    },
    #[error("state field {field} is not finite ({value})")]
    NonFinite { field: &'static str, value: f64 },
    #[error("compartment {field} fell to {value:e} (step size too large)")]
    NegativeFraction { field: &'static str, value: f64 },
    #[error("step size must be positive and finite, got {0}")]
    InvalidStep(f64),
    #[error("integration failed at step {step}: {source}")]
    Step {
        step: usize,
        #[source]
        source: Box<ModelError>,
    },
}

/// Parameters that can be varied along a sweep or fit axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ParamName {
    #[serde(rename = "alpha_1")]
    Alpha1,
    #[serde(rename = "alpha_2")]
    Alpha2,
    #[serde(rename = "beta_a")]
    BetaA,
}

impl ParamName {
    pub fn as_str(self) -> &'static str {
        match self {
            ParamName::Alpha1 => "alpha_1",
            ParamName::Alpha2 => "alpha_2",
            ParamName::BetaA => "beta_a",
        }
    }
}

impl fmt::Display for ParamName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for ParamName {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "alpha_1" | "alpha1" => Ok(ParamName::Alpha1),
            "alpha_2" | "alpha2" => Ok(ParamName::Alpha2),
            "beta_a" | "betaa" => Ok(ParamName::BetaA),
            other => Err(format!(
                "unknown parameter '{other}' (expected alpha_1, alpha_2 or beta_a)"
            )),
        }
    }
}

/// Rates are per day; coefficients are dimensionless.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    /// Disease transmission rate among the unaware.
    pub beta_i: f64,
    /// Infection-rate multiplier for aware susceptibles, in [0, 1].
    pub alpha_1: f64,
    /// Awareness-rate multiplier for infected individuals, at least 1.
    pub alpha_2: f64,
    /// Awareness transmission rate.
    pub beta_a: f64,
    /// Disease recovery rate (1 / recovery period).
    pub gamma_i: f64,
    /// Awareness inactivation rate (1 / active-awareness period).
    pub gamma_a: f64,
}

impl Default for ModelParams {
    /// Baseline used by the parameter-space figures: beta_i = 0.15,
    /// gamma_i = 1/14, gamma_a = 3/2, with beta_a = 0.15, alpha_1 = 0.5
    /// and alpha_2 = 1.
    fn default() -> Self {
        Self {
            beta_i: 0.15,
            alpha_1: 0.5,
            alpha_2: 1.0,
            beta_a: 0.15,
            gamma_i: 1.0 / 14.0,
            gamma_a: 1.5,
        }
    }
}

impl ModelParams {
    pub fn validate(&self) -> Result<(), ModelError> {
        let check = |name, value: f64, ok: bool, reason| {
            if value.is_finite() && ok {
                Ok(())
            } else {
                Err(ModelError::InvalidParam {
                    name,
                    value,
                    reason,
                })
            }
        };
        check("beta_i", self.beta_i, self.beta_i >= 0.0, "must be >= 0")?;
        check("beta_a", self.beta_a, self.beta_a >= 0.0, "must be >= 0")?;
        check("gamma_i", self.gamma_i, self.gamma_i > 0.0, "must be > 0")?;
        check("gamma_a", self.gamma_a, self.gamma_a > 0.0, "must be > 0")?;
        check(
            "alpha_1",
            self.alpha_1,
            (0.0..=1.0).contains(&self.alpha_1),
            "must lie in [0, 1]",
        )?;
        check("alpha_2", self.alpha_2, self.alpha_2 >= 1.0, "must be >= 1")?;
        Ok(())
    }

    /// Infection rate for aware susceptibles, `alpha_1 * beta_i`.
    pub fn beta_i_hat(&self) -> f64 {
        self.alpha_1 * self.beta_i
    }

    /// Awareness rate for infected individuals, `alpha_2 * beta_a`.
    pub fn beta_a_hat(&self) -> f64 {
        self.alpha_2 * self.beta_a
    }

    pub fn effective_rates(&self) -> (f64, f64) {
        (self.beta_i_hat(), self.beta_a_hat())
    }

    pub fn get(&self, name: ParamName) -> f64 {
        match name {
            ParamName::Alpha1 => self.alpha_1,
            ParamName::Alpha2 => self.alpha_2,
            ParamName::BetaA => self.beta_a,
        }
    }

    pub fn with(mut self, name: ParamName, value: f64) -> Self {
        match name {
            ParamName::Alpha1 => self.alpha_1 = value,
            ParamName::Alpha2 => self.alpha_2 = value,
            ParamName::BetaA => self.beta_a = value,
        }
        self
    }
}

pub const FIELD_NAMES: [&str; 13] = [
    "US",
    "A1S",
    "A2S",
    "UI",
    "A1I",
    "A2I",
    "UR",
    "A1R",
    "A2R",
    "flux_blue",
    "flux_green",
    "flux_red",
    "flux_aware",
];

/// Population fractions of the nine joint compartments plus four
/// time-integrated transition flows.
///
/// `flux_blue` counts infections of aware susceptibles (A1S, A2S to
/// infected), `flux_green` counts UI to A1I, `flux_red` counts UR to A1R and
/// `flux_aware` counts every U to A1 transition.
///
/// The same type carries time derivatives when returned by [`derivatives`].
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct CompartmentState {
    pub us: f64,
    pub a1s: f64,
    pub a2s: f64,
    pub ui: f64,
    pub a1i: f64,
    pub a2i: f64,
    pub ur: f64,
    pub a1r: f64,
    pub a2r: f64,
    pub flux_blue: f64,
    pub flux_green: f64,
    pub flux_red: f64,
    pub flux_aware: f64,
}

impl CompartmentState {
    /// Fully susceptible population with `aware` in A1S and `infected` in UI.
    pub fn seeded(aware: f64, infected: f64) -> Self {
        Self {
            us: 1.0 - aware - infected,
            a1s: aware,
            ui: infected,
            ..Self::default()
        }
    }

    pub fn to_array(&self) -> [f64; 13] {
        [
            self.us,
            self.a1s,
            self.a2s,
            self.ui,
            self.a1i,
            self.a2i,
            self.ur,
            self.a1r,
            self.a2r,
            self.flux_blue,
            self.flux_green,
            self.flux_red,
            self.flux_aware,
        ]
    }

    pub fn from_array(a: [f64; 13]) -> Self {
        Self {
            us: a[0],
            a1s: a[1],
            a2s: a[2],
            ui: a[3],
            a1i: a[4],
            a2i: a[5],
            ur: a[6],
            a1r: a[7],
            a2r: a[8],
            flux_blue: a[9],
            flux_green: a[10],
            flux_red: a[11],
            flux_aware: a[12],
        }
    }

    pub fn compartments(&self) -> [f64; 9] {
        let a = self.to_array();
        [a[0], a[1], a[2], a[3], a[4], a[5], a[6], a[7], a[8]]
    }

    pub fn compartment_sum(&self) -> f64 {
        self.compartments().iter().sum()
    }

    pub fn infected(&self) -> f64 {
        self.ui + self.a1i + self.a2i
    }

    pub fn recovered(&self) -> f64 {
        self.ur + self.a1r + self.a2r
    }

    pub fn active_aware(&self) -> f64 {
        self.a1s + self.a1i + self.a1r
    }

    pub fn susceptible(&self) -> f64 {
        self.us + self.a1s + self.a2s
    }

    /// Instantaneous new-infection rate.
    pub fn incidence_rate(&self, p: &ModelParams) -> f64 {
        let i = self.infected();
        p.beta_i * i * self.us + p.beta_i_hat() * i * (self.a1s + self.a2s)
    }

    fn check_finite(&self) -> Result<(), ModelError> {
        for (field, value) in FIELD_NAMES.iter().zip(self.to_array()) {
            if !value.is_finite() {
                return Err(ModelError::NonFinite { field, value });
            }
        }
        Ok(())
    }

    fn first_negative(&self, tolerance: f64) -> Option<(&'static str, f64)> {
        FIELD_NAMES
            .iter()
            .zip(self.compartments())
            .find(|(_, v)| *v < -tolerance)
            .map(|(f, v)| (*f, v))
    }

    fn clamped(&self) -> Self {
        let mut a = self.to_array();
        for v in a.iter_mut().take(9) {
            if *v < 0.0 {
                *v = 0.0;
            }
        }
        Self::from_array(a)
    }
}

/// Right-hand side of the coupled system.
///
/// The force of awareness uses the total active-aware fraction
/// `A1 = a1s + a1i + a1r`; the force of infection uses `I = ui + a1i + a2i`.
pub fn derivatives(
    state: &CompartmentState,
    params: &ModelParams,
) -> Result<CompartmentState, ModelError> {
    state.check_finite()?;
    Ok(rhs(state, params))
}

#[inline]
fn rhs(s: &CompartmentState, p: &ModelParams) -> CompartmentState {
    let (bi_hat, ba_hat) = p.effective_rates();
    let a1 = s.active_aware();
    let i = s.infected();

    let aware_us = p.beta_a * a1 * s.us;
    let infect_us = p.beta_i * i * s.us;
    let infect_a1s = bi_hat * i * s.a1s;
    let infect_a2s = bi_hat * i * s.a2s;
    let aware_ui = ba_hat * a1 * s.ui;
    let aware_ur = p.beta_a * a1 * s.ur;

    CompartmentState {
        us: -aware_us - infect_us,
        a1s: aware_us - infect_a1s - p.gamma_a * s.a1s,
        a2s: p.gamma_a * s.a1s - infect_a2s,
        ui: infect_us - aware_ui - p.gamma_i * s.ui,
        a1i: aware_ui + infect_a1s - p.gamma_a * s.a1i - p.gamma_i * s.a1i,
        a2i: p.gamma_a * s.a1i + infect_a2s - p.gamma_i * s.a2i,
        ur: -aware_ur + p.gamma_i * s.ui,
        a1r: aware_ur + p.gamma_i * s.a1i - p.gamma_a * s.a1r,
        a2r: p.gamma_a * s.a1r + p.gamma_i * s.a2i,
        flux_blue: infect_a1s + infect_a2s,
        flux_green: aware_ui,
        flux_red: aware_ur,
        flux_aware: aware_us + aware_ur + aware_ui,
    }
}

#[inline]
fn axpy(y: &[f64; 13], a: f64, x: &[f64; 13]) -> [f64; 13] {
    let mut out = *y;
    for (o, xi) in out.iter_mut().zip(x) {
        *o += a * xi;
    }
    out
}

fn rk4_raw(state: &CompartmentState, p: &ModelParams, h: f64) -> CompartmentState {
    let y = state.to_array();
    let k1 = rhs(state, p).to_array();
    let k2 = rhs(&CompartmentState::from_array(axpy(&y, h / 2.0, &k1)), p).to_array();
    let k3 = rhs(&CompartmentState::from_array(axpy(&y, h / 2.0, &k2)), p).to_array();
    let k4 = rhs(&CompartmentState::from_array(axpy(&y, h, &k3)), p).to_array();
    let mut out = y;
    for j in 0..13 {
        out[j] += h / 6.0 * (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j]);
    }
    CompartmentState::from_array(out)
}

/// One classical fourth-order Runge-Kutta step of length `h` days.
pub fn rk4_step(
    state: &CompartmentState,
    params: &ModelParams,
    h: f64,
) -> Result<CompartmentState, ModelError> {
    if !(h > 0.0 && h.is_finite()) {
        return Err(ModelError::InvalidStep(h));
    }
    state.check_finite()?;
    let next = rk4_raw(state, params, h);
    next.check_finite()?;
    if let Some((field, value)) = next.first_negative(NEGATIVE_TOLERANCE) {
        return Err(ModelError::NegativeFraction { field, value });
    }
    Ok(next)
}

/// States sampled every `step_size` days from t = 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    step_size: f64,
    states: Vec<CompartmentState>,
    params: ModelParams,
}

impl Trajectory {
    pub fn step_size(&self) -> f64 {
        self.step_size
    }

    pub fn states(&self) -> &[CompartmentState] {
        &self.states
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn n_steps(&self) -> usize {
        self.states.len() - 1
    }

    pub fn time(&self, k: usize) -> f64 {
        k as f64 * self.step_size
    }

    pub fn horizon(&self) -> f64 {
        self.time(self.n_steps())
    }

    pub fn initial(&self) -> &CompartmentState {
        &self.states[0]
    }

    pub fn final_state(&self) -> &CompartmentState {
        self.states.last().expect("trajectory is never empty")
    }

    pub fn infected(&self) -> impl Iterator<Item = f64> + '_ {
        self.states.iter().map(CompartmentState::infected)
    }

    /// Writes `t,US,...,flux_aware` rows with 17 significant digits.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        write!(out, "t")?;
        for name in FIELD_NAMES {
            write!(out, ",{name}")?;
        }
        writeln!(out)?;
        for (k, s) in self.states.iter().enumerate() {
            write!(out, "{:.16e}", self.time(k))?;
            for v in s.to_array() {
                write!(out, ",{v:.16e}")?;
            }
            writeln!(out)?;
        }
        Ok(())
    }
}

/// Integrates `n_steps` RK4 steps of size `h` from `initial`.
///
/// Compartments that round to within [`NEGATIVE_TOLERANCE`] below zero are
/// stored as 0; integration continues from the unclamped state so output is
/// bitwise reproducible.
pub fn integrate(
    initial: &CompartmentState,
    params: &ModelParams,
    h: f64,
    n_steps: usize,
) -> Result<Trajectory, ModelError> {
    params.validate()?;
    if !(h > 0.0 && h.is_finite()) {
        return Err(ModelError::InvalidStep(h));
    }
    initial.check_finite()?;
    if let Some((field, value)) = initial.first_negative(NEGATIVE_TOLERANCE) {
        return Err(ModelError::NegativeFraction { field, value });
    }
    let mut states = Vec::with_capacity(n_steps + 1);
    states.push(initial.clamped());
    let mut current = *initial;
    for step in 1..=n_steps {
        current = rk4_step(&current, params, h).map_err(|e| ModelError::Step {
            step,
            source: Box::new(e),
        })?;
        states.push(current.clamped());
    }
    Ok(Trajectory {
        step_size: h,
        states,
        params: *params,
    })
}
