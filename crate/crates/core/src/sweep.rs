//! Two-dimensional parameter sweeps over the model observables.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{integrate, CompartmentState, ModelParams, ParamName, Trajectory};
use crate::observables::{
    awareness_incidence_series, decompose_equilibrium_with, incidence_series, is_absorbed,
    EquilibriumDecomposition, Observables, DEFAULT_ABSORPTION_THRESHOLD,
};
use crate::stats::pearson;

pub const DEFAULT_GRID_POINTS: usize = 41;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SweepError {
    #[error("sweep axes must vary different parameters (both are {0})")]
    SameAxis(ParamName),
    #[error("axis {0} needs at least 2 points")]
    TooFewPoints(ParamName),
    #[error("axis {param} range [{min}, {max}] is invalid: {reason}")]
    BadRange {
        param: ParamName,
        min: f64,
        max: f64,
        reason: String,
    },
    #[error("unknown panel preset '{0}' (expected fig2a..fig4c, fig5a..fig5i or fig6)")]
    UnknownPanel(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Axis {
    pub param: ParamName,
    pub min: f64,
    pub max: f64,
    pub n_points: usize,
}

impl Axis {
    pub fn new(param: ParamName, min: f64, max: f64, n_points: usize) -> Self {
        Self {
            param,
            min,
            max,
            n_points,
        }
    }

    pub fn values(&self) -> Vec<f64> {
        let n = self.n_points;
        (0..n)
            .map(|k| {
                if k + 1 == n {
                    self.max
                } else {
                    self.min + (self.max - self.min) * k as f64 / (n - 1) as f64
                }
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ObservableSet {
    pub r_star: bool,
    pub i_m: bool,
    pub t_m: bool,
    pub decomposition: bool,
    pub pearson: bool,
}

impl ObservableSet {
    pub fn all() -> Self {
        Self {
            r_star: true,
            i_m: true,
            t_m: true,
            decomposition: true,
            pearson: true,
        }
    }

    pub fn parse_list(list: &str) -> Result<Self, String> {
        let mut set = Self {
            r_star: false,
            i_m: false,
            t_m: false,
            decomposition: false,
            pearson: false,
        };
        for item in list.split(',').map(str::trim).filter(|s| !s.is_empty()) {
            match item {
                "r_star" => set.r_star = true,
                "i_m" => set.i_m = true,
                "t_m" => set.t_m = true,
                "decomposition" => set.decomposition = true,
                "pearson" => set.pearson = true,
                "all" => set = Self::all(),
                other => return Err(format!("unknown observable '{other}'")),
            }
        }
        Ok(set)
    }
}

impl Default for ObservableSet {
    fn default() -> Self {
        Self::all()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSpec {
    pub fixed: ModelParams,
    pub axis_x: Axis,
    pub axis_y: Axis,
    #[serde(default)]
    pub observables: ObservableSet,
}

impl SweepSpec {
    pub fn validate(&self) -> Result<(), SweepError> {
        if self.axis_x.param == self.axis_y.param {
            return Err(SweepError::SameAxis(self.axis_x.param));
        }
        for axis in [&self.axis_x, &self.axis_y] {
            if axis.n_points < 2 {
                return Err(SweepError::TooFewPoints(axis.param));
            }
            let bad = |reason: String| SweepError::BadRange {
                param: axis.param,
                min: axis.min,
                max: axis.max,
                reason,
            };
            if axis.min > axis.max {
                return Err(bad("min exceeds max".into()));
            }
            for v in [axis.min, axis.max] {
                self.fixed
                    .with(axis.param, v)
                    .validate()
                    .map_err(|e| bad(e.to_string()))?;
            }
        }
        self.fixed.validate().map_err(|e| SweepError::BadRange {
            param: self.axis_x.param,
            min: self.axis_x.min,
            max: self.axis_x.max,
            reason: format!("baseline: {e}"),
        })
    }

    pub fn params_at(&self, x: f64, y: f64) -> ModelParams {
        self.fixed
            .with(self.axis_x.param, x)
            .with(self.axis_y.param, y)
    }

    /// Built-in panel regimes of the parameter-space heatmaps.
    ///
    /// Family (a) fixes beta_a = 0.15 and varies (alpha_1, alpha_2); family
    /// (b) fixes alpha_2 = 1 and varies (beta_a, alpha_1); family (c) fixes
    /// alpha_1 = 0.5 and varies (beta_a, alpha_2). `fig2*`..`fig4*` use the
    /// letter directly, `fig5a-c`/`d-f`/`g-i` map to (a)/(b)/(c) and `fig6`
    /// is family (b).
    pub fn panel(name: &str, n_points: usize) -> Result<Self, SweepError> {
        let family = panel_family(name).ok_or_else(|| SweepError::UnknownPanel(name.into()))?;
        let base = ModelParams::default();
        let alpha_1 = Axis::new(ParamName::Alpha1, 0.0, 1.0, n_points);
        let alpha_2 = Axis::new(ParamName::Alpha2, 1.0, 10.0, n_points);
        let beta_a = Axis::new(ParamName::BetaA, 0.0, 0.4, n_points);
        let (fixed, axis_x, axis_y) = match family {
            'a' => (
                ModelParams {
                    beta_a: 0.15,
                    ..base
                },
                alpha_1,
                alpha_2,
            ),
            'b' => (
                ModelParams {
                    alpha_2: 1.0,
                    ..base
                },
                beta_a,
                alpha_1,
            ),
            _ => (
                ModelParams {
                    alpha_1: 0.5,
                    ..base
                },
                beta_a,
                alpha_2,
            ),
        };
        Ok(Self {
            fixed,
            axis_x,
            axis_y,
            observables: ObservableSet::all(),
        })
    }
}

fn panel_family(name: &str) -> Option<char> {
    let rest = name.strip_prefix("fig")?;
    let mut chars = rest.chars();
    let figure = chars.next()?;
    let letter = chars.next();
    if chars.next().is_some() {
        return None;
    }
    match (figure, letter) {
        ('2' | '3' | '4', Some(l @ ('a' | 'b' | 'c'))) => Some(l),
        ('5', Some('a' | 'b' | 'c')) => Some('a'),
        ('5', Some('d' | 'e' | 'f')) => Some('b'),
        ('5', Some('g' | 'h' | 'i')) => Some('c'),
        ('6', None) => Some('b'),
        _ => None,
    }
}

/// Integration settings shared by every cell.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RunSettings {
    pub step_size: f64,
    pub n_steps: usize,
    pub initial: CompartmentState,
    pub absorption_threshold: f64,
}

impl Default for RunSettings {
    fn default() -> Self {
        Self {
            step_size: 0.5,
            n_steps: 2000,
            initial: CompartmentState::seeded(1e-6, 1e-6),
            absorption_threshold: DEFAULT_ABSORPTION_THRESHOLD,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CellRecord {
    pub observables: Observables,
    pub decomposition: Option<EquilibriumDecomposition>,
    /// Lag-0 Pearson coefficient of daily infected vs daily aware.
    pub pearson_rho: Option<f64>,
    pub absorbed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub x: f64,
    pub y: f64,
    pub params: ModelParams,
    pub outcome: Result<CellRecord, String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Heatmap {
    pub spec: SweepSpec,
    pub x_values: Vec<f64>,
    pub y_values: Vec<f64>,
    /// Row-major: `cells[iy * x_values.len() + ix]`.
    pub cells: Vec<Cell>,
}

impl Heatmap {
    pub fn cell(&self, ix: usize, iy: usize) -> &Cell {
        &self.cells[iy * self.x_values.len() + ix]
    }

    pub fn records(&self) -> impl Iterator<Item = &CellRecord> {
        self.cells.iter().filter_map(|c| c.outcome.as_ref().ok())
    }

    pub fn absorbed(&self) -> Vec<Vec<bool>> {
        (0..self.y_values.len())
            .map(|iy| {
                (0..self.x_values.len())
                    .map(|ix| {
                        self.cell(ix, iy)
                            .outcome
                            .as_ref()
                            .map(|r| r.absorbed)
                            .unwrap_or(false)
                    })
                    .collect()
            })
            .collect()
    }

    /// `x,y,r_star,i_m,t_m,r1_red,r2_green,r3_blue,residual_ur,pearson_rho,absorbed`;
    /// unselected or unavailable values are left blank.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(
            out,
            "x,y,r_star,i_m,t_m,r1_red,r2_green,r3_blue,residual_ur,pearson_rho,absorbed"
        )?;
        let sel = self.spec.observables;
        let fmt = |v: Option<f64>| v.map(|v| format!("{v:.16e}")).unwrap_or_default();
        for cell in &self.cells {
            write!(out, "{},{}", fmt(Some(cell.x)), fmt(Some(cell.y)))?;
            match &cell.outcome {
                Ok(r) => {
                    let o = r.observables;
                    let d = r.decomposition.filter(|_| sel.decomposition);
                    let fields = [
                        Some(o.r_star).filter(|_| sel.r_star),
                        Some(o.i_m).filter(|_| sel.i_m),
                        Some(o.t_m).filter(|_| sel.t_m),
                        d.map(|d| d.r1_red),
                        d.map(|d| d.r2_green),
                        d.map(|d| d.r3_blue),
                        d.map(|d| d.residual_ur),
                        r.pearson_rho.filter(|_| sel.pearson),
                    ];
                    for f in fields {
                        write!(out, ",{}", fmt(f))?;
                    }
                    writeln!(out, ",{}", r.absorbed)?;
                }
                Err(_) => writeln!(out, ",,,,,,,,,false")?,
            }
        }
        Ok(())
    }
}

pub fn check_absorbed(traj: &Trajectory, threshold: f64) -> bool {
    is_absorbed(traj, threshold)
}

/// Integrates one parameter set and extracts the selected observables.
pub fn evaluate_cell(
    params: &ModelParams,
    settings: &RunSettings,
    selection: &ObservableSet,
) -> Result<CellRecord, String> {
    let traj = integrate(
        &settings.initial,
        params,
        settings.step_size,
        settings.n_steps,
    )
    .map_err(|e| e.to_string())?;
    let absorbed = check_absorbed(&traj, settings.absorption_threshold);
    let decomposition = if selection.decomposition && absorbed {
        decompose_equilibrium_with(&traj, settings.absorption_threshold).ok()
    } else {
        None
    };
    let pearson_rho = if selection.pearson {
        let infected = incidence_series(&traj);
        let aware = awareness_incidence_series(&traj);
        pearson(infected.values(), aware.values())
            .ok()
            .map(|c| c.rho)
    } else {
        None
    };
    Ok(CellRecord {
        observables: Observables::from_trajectory(&traj),
        decomposition,
        pearson_rho,
        absorbed,
    })
}

/// Evaluates every grid cell. Cells are independent and may run in
/// parallel; results are merged by cell index so the output does not
/// depend on scheduling.
pub fn grid_sweep(spec: &SweepSpec, settings: &RunSettings) -> Result<Heatmap, SweepError> {
    spec.validate()?;
    let x_values = spec.axis_x.values();
    let y_values = spec.axis_y.values();
    let nx = x_values.len();
    let cells = (0..nx * y_values.len())
        .into_par_iter()
        .map(|idx| {
            let (x, y) = (x_values[idx % nx], y_values[idx / nx]);
            let params = spec.params_at(x, y);
            Cell {
                x,
                y,
                params,
                outcome: evaluate_cell(&params, settings, &spec.observables),
            }
        })
        .collect::<Vec<_>>();
    for cell in &cells {
        match &cell.outcome {
            Err(e) => log::warn!("cell ({}, {}) failed: {e}", cell.x, cell.y),
            Ok(r) if !r.absorbed => {
                log::info!("cell ({}, {}) not absorbed at horizon", cell.x, cell.y)
            }
            _ => {}
        }
    }
    Ok(Heatmap {
        spec: spec.clone(),
        x_values,
        y_values,
        cells,
    })
}
