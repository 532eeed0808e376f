//! TOML run configuration. Rate keys carry their unit in the name; a rate
//! may instead be given as a period (`*_period_days`), never both.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use infodemic_core::fit::{FitSpec, SeedRule};
use infodemic_core::model::ParamName;
use infodemic_core::sweep::{Axis, ObservableSet, RunSettings, SweepSpec};
use infodemic_core::{CompartmentState, ModelParams};

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub model: ModelSection,
    #[serde(default)]
    pub integrator: IntegratorSection,
    #[serde(default)]
    pub sweep: SweepSection,
    #[serde(default)]
    pub data: DataSection,
    #[serde(default)]
    pub fit: FitSection,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    pub beta_i_per_day: Option<f64>,
    pub gamma_i_per_day: Option<f64>,
    pub gamma_i_period_days: Option<f64>,
    pub beta_a_per_day: Option<f64>,
    pub gamma_a_per_day: Option<f64>,
    pub gamma_a_period_days: Option<f64>,
    pub alpha_1: Option<f64>,
    pub alpha_2: Option<f64>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntegratorSection {
    pub step_days: Option<f64>,
    pub n_steps: Option<usize>,
    pub aware_seed: Option<f64>,
    pub infected_seed: Option<f64>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    pub panel: Option<String>,
    pub points: Option<usize>,
    pub x: Option<AxisSection>,
    pub y: Option<AxisSection>,
    pub observables: Option<String>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AxisSection {
    pub param: String,
    pub min: f64,
    pub max: f64,
    pub points: usize,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataSection {
    pub cases_csv: Option<PathBuf>,
    pub population_csv: Option<PathBuf>,
    pub waves: Option<PathBuf>,
    pub target_csv: Option<PathBuf>,
    pub regions: Option<Vec<String>>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitSection {
    /// Fix alpha_1 at the model value instead of fitting it.
    #[serde(default)]
    pub fix_alpha_1: bool,
    #[serde(default)]
    pub fix_beta_a: bool,
    pub alpha_1_min: Option<f64>,
    pub alpha_1_max: Option<f64>,
    pub beta_a_min_per_day: Option<f64>,
    pub beta_a_max_per_day: Option<f64>,
    pub scale_min: Option<f64>,
    pub scale_max: Option<f64>,
    pub t0_min_days: Option<f64>,
    pub t0_max_days: Option<f64>,
    pub grid_points: Option<usize>,
    pub profile_threshold: Option<f64>,
    /// Fixed infected seed fraction; default seeds with the first positive
    /// data point.
    pub infected_seed: Option<f64>,
    pub aware_seed: Option<f64>,
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        let mut cfg: Self =
            toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))?;
        // relative data paths are resolved against the config file
        let base = path.parent().unwrap_or(Path::new(""));
        let rebase = |p: &mut Option<PathBuf>| {
            if let Some(v) = p {
                if v.is_relative() {
                    *v = base.join(&*v);
                }
            }
        };
        rebase(&mut cfg.data.cases_csv);
        rebase(&mut cfg.data.population_csv);
        rebase(&mut cfg.data.waves);
        rebase(&mut cfg.data.target_csv);
        Ok(cfg)
    }

    /// Model parameters with overrides applied on top of `base`.
    pub fn model_params(&self, base: ModelParams) -> Result<ModelParams> {
        let m = &self.model;
        let p = ModelParams {
            beta_i: m.beta_i_per_day.unwrap_or(base.beta_i),
            alpha_1: m.alpha_1.unwrap_or(base.alpha_1),
            alpha_2: m.alpha_2.unwrap_or(base.alpha_2),
            beta_a: m.beta_a_per_day.unwrap_or(base.beta_a),
            gamma_i: rate("gamma_i", m.gamma_i_per_day, m.gamma_i_period_days)?
                .unwrap_or(base.gamma_i),
            gamma_a: rate("gamma_a", m.gamma_a_per_day, m.gamma_a_period_days)?
                .unwrap_or(base.gamma_a),
        };
        p.validate()?;
        Ok(p)
    }

    pub fn run_settings(&self) -> Result<RunSettings> {
        let d = RunSettings::default();
        let i = &self.integrator;
        let aware = i.aware_seed.unwrap_or(d.initial.a1s);
        let infected = i.infected_seed.unwrap_or(d.initial.ui);
        if !(aware >= 0.0 && infected >= 0.0 && aware + infected <= 1.0) {
            bail!("integrator seeds must be non-negative and sum to at most 1");
        }
        let s = RunSettings {
            step_size: i.step_days.unwrap_or(d.step_size),
            n_steps: i.n_steps.unwrap_or(d.n_steps),
            initial: CompartmentState::seeded(aware, infected),
            ..d
        };
        if !(s.step_size > 0.0 && s.step_size.is_finite()) || s.n_steps == 0 {
            bail!("step_days must be positive and n_steps at least 1");
        }
        Ok(s)
    }

    /// Sweep grid: a panel preset (optionally with the model section as
    /// fixed overrides) or two explicit axes.
    pub fn sweep_spec(
        &self,
        panel: Option<&str>,
        points: Option<usize>,
        observables: Option<&str>,
    ) -> Result<SweepSpec> {
        let s = &self.sweep;
        let points = points
            .or(s.points)
            .unwrap_or(infodemic_core::sweep::DEFAULT_GRID_POINTS);
        let observables = match observables.or(s.observables.as_deref()) {
            Some(list) => ObservableSet::parse_list(list).map_err(anyhow::Error::msg)?,
            None => ObservableSet::all(),
        };
        let mut spec = match (panel.or(s.panel.as_deref()), &s.x, &s.y) {
            (Some(name), _, _) => {
                let mut spec = SweepSpec::panel(name, points)?;
                spec.fixed = self.model_params(spec.fixed)?;
                spec
            }
            (None, Some(x), Some(y)) => SweepSpec {
                fixed: self.model_params(ModelParams::default())?,
                axis_x: axis(x)?,
                axis_y: axis(y)?,
                observables: ObservableSet::all(),
            },
            _ => bail!("sweep needs --panel, sweep.panel, or both sweep.x and sweep.y axes"),
        };
        spec.observables = observables;
        spec.validate()?;
        Ok(spec)
    }

    /// Applies the fit section to a spec built for one wave.
    pub fn apply_fit(&self, spec: &mut FitSpec) -> Result<()> {
        let f = &self.fit;
        spec.fixed = self.model_params(spec.fixed)?;
        let bounds = |fix: bool, lo: Option<f64>, hi: Option<f64>, d: Option<(f64, f64)>| {
            if fix {
                None
            } else {
                d.map(|(a, b)| (lo.unwrap_or(a), hi.unwrap_or(b)))
            }
        };
        spec.alpha_1 = bounds(f.fix_alpha_1, f.alpha_1_min, f.alpha_1_max, spec.alpha_1);
        spec.beta_a = bounds(
            f.fix_beta_a,
            f.beta_a_min_per_day,
            f.beta_a_max_per_day,
            spec.beta_a,
        );
        spec.scale_bounds = (
            f.scale_min.unwrap_or(spec.scale_bounds.0),
            f.scale_max.unwrap_or(spec.scale_bounds.1),
        );
        spec.t0_bounds = (
            f.t0_min_days.unwrap_or(spec.t0_bounds.0),
            f.t0_max_days.unwrap_or(spec.t0_bounds.1),
        );
        spec.grid_points = f.grid_points.unwrap_or(spec.grid_points);
        spec.profile_threshold = f.profile_threshold.unwrap_or(spec.profile_threshold);
        if let Some(v) = f.infected_seed {
            spec.seed = SeedRule::Fixed(v);
        }
        spec.aware_seed = f.aware_seed.unwrap_or(spec.aware_seed);
        if let Some(h) = self.integrator.step_days {
            spec.step_size = h;
        }
        spec.validate()?;
        Ok(())
    }
}

fn rate(name: &str, per_day: Option<f64>, period: Option<f64>) -> Result<Option<f64>> {
    match (per_day, period) {
        (Some(_), Some(_)) => {
            bail!("give either {name}_per_day or {name}_period_days, not both")
        }
        (Some(r), None) => Ok(Some(r)),
        (None, Some(days)) if days > 0.0 => Ok(Some(1.0 / days)),
        (None, Some(days)) => bail!("{name}_period_days must be positive, got {days}"),
        (None, None) => Ok(None),
    }
}

fn axis(a: &AxisSection) -> Result<Axis> {
    let param: ParamName = a.param.parse().map_err(anyhow::Error::msg)?;
    Ok(Axis::new(param, a.min, a.max, a.points))
}

/// Fails unless every path exists.
pub fn require_existing<'a>(paths: impl IntoIterator<Item = &'a Path>) -> Result<()> {
    for p in paths {
        if !p.exists() {
            bail!("input file {} does not exist", p.display());
        }
    }
    Ok(())
}

/// Fully resolved settings recorded next to every output.
#[derive(Debug, Clone, Serialize)]
pub struct Provenance<T: Serialize> {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: &'static str,
    pub config: T,
}

impl<T: Serialize> Provenance<T> {
    pub fn new(command: &'static str, config: T) -> Self {
        Self {
            tool: env!("CARGO_PKG_NAME"),
            version: env!("CARGO_PKG_VERSION"),
            command,
            config,
        }
    }
}
