//! Scalar outbreak observables and the three-pathway equilibrium split.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::Trajectory;
use crate::series::TimeSeries;

/// Total infection prevalence below which a trajectory counts as absorbed.
pub const DEFAULT_ABSORPTION_THRESHOLD: f64 = 1e-10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ObservableError {
    #[error("trajectory has not absorbed: infected fraction {infected:e} at horizon (threshold {threshold:e})")]
    NotAbsorbed { infected: f64, threshold: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Observables {
    /// Fraction ever infected, read at the horizon.
    pub r_star: f64,
    /// Peak of total infected prevalence.
    pub i_m: f64,
    /// Time of the first sample attaining `i_m`, in days.
    pub t_m: f64,
}

impl Observables {
    pub fn from_trajectory(traj: &Trajectory) -> Self {
        let (i_m, t_m) = peak_prevalence(traj);
        Self {
            r_star: final_size(traj),
            i_m,
            t_m,
        }
    }
}

/// Final recovered fractions split by the awareness status at infection.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EquilibriumDecomposition {
    /// Infected while unaware, aware only after recovery (UR to A1R).
    pub r1_red: f64,
    /// Became aware while infected (UI to A1I).
    pub r2_green: f64,
    /// Aware before infection (A1S/A2S to infected).
    pub r3_blue: f64,
    /// Recovered and never aware.
    pub residual_ur: f64,
}

impl EquilibriumDecomposition {
    pub fn total(&self) -> f64 {
        self.r1_red + self.r2_green + self.r3_blue + self.residual_ur
    }

    /// Name of the largest of the three transition groups.
    pub fn dominant_group(&self) -> &'static str {
        let groups = [
            ("red", self.r1_red),
            ("green", self.r2_green),
            ("blue", self.r3_blue),
        ];
        groups
            .iter()
            .fold(groups[0], |best, g| if g.1 > best.1 { *g } else { best })
            .0
    }
}

pub fn is_absorbed(traj: &Trajectory, threshold: f64) -> bool {
    traj.final_state().infected() < threshold
}

pub fn final_size(traj: &Trajectory) -> f64 {
    if !is_absorbed(traj, DEFAULT_ABSORPTION_THRESHOLD) {
        log::warn!(
            "final size read from a non-absorbed trajectory (infected {:e} at t = {})",
            traj.final_state().infected(),
            traj.horizon()
        );
    }
    traj.final_state().recovered()
}

/// Peak total prevalence and the time of its first occurrence.
pub fn peak_prevalence(traj: &Trajectory) -> (f64, f64) {
    let (k, i_m) = traj
        .infected()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |(bk, bv), (k, v)| {
            if v > bv {
                (k, v)
            } else {
                (bk, bv)
            }
        });
    (i_m, traj.time(k))
}

pub fn decompose_equilibrium(
    traj: &Trajectory,
) -> Result<EquilibriumDecomposition, ObservableError> {
    decompose_equilibrium_with(traj, DEFAULT_ABSORPTION_THRESHOLD)
}

pub fn decompose_equilibrium_with(
    traj: &Trajectory,
    threshold: f64,
) -> Result<EquilibriumDecomposition, ObservableError> {
    let last = traj.final_state();
    if !is_absorbed(traj, threshold) {
        return Err(ObservableError::NotAbsorbed {
            infected: last.infected(),
            threshold,
        });
    }
    Ok(EquilibriumDecomposition {
        r1_red: last.flux_red,
        r2_green: last.flux_green,
        r3_blue: last.flux_blue,
        residual_ur: last.ur,
    })
}

fn day_count(traj: &Trajectory) -> usize {
    let horizon = traj.horizon();
    ((horizon - 1e-9).ceil().max(1.0)) as usize
}

/// Per-day integrals of the piecewise-linear interpolant through sampled
/// rates. With h = 0.5 this is the trapezoid rule over each day.
fn daily_integrals(h: f64, rates: &[f64], n_days: usize) -> Vec<f64> {
    let mut days = vec![0.0; n_days];
    for (k, w) in rates.windows(2).enumerate() {
        let (t0, t1) = (k as f64 * h, (k + 1) as f64 * h);
        let slope = (w[1] - w[0]) / h;
        let at = |t: f64| w[0] + slope * (t - t0);
        let mut a = t0;
        while a < t1 {
            let day = (a + 1e-12).floor() as usize;
            let b = ((day + 1) as f64).min(t1);
            if day < n_days {
                days[day] += 0.5 * (at(a) + at(b)) * (b - a);
            }
            a = b;
        }
    }
    days
}

/// Daily new infections: the integral over each day of
/// `beta_i I US + beta_i_hat I (A1S + A2S)`.
pub fn incidence_series(traj: &Trajectory) -> TimeSeries {
    let p = traj.params();
    let rates: Vec<f64> = traj.states().iter().map(|s| s.incidence_rate(p)).collect();
    let days = daily_integrals(traj.step_size(), &rates, day_count(traj));
    TimeSeries::daily(0, days).expect("incidence values are finite")
}

/// Daily new active-aware individuals, from `flux_aware` differences.
pub fn awareness_incidence_series(traj: &Trajectory) -> TimeSeries {
    let h = traj.step_size();
    let states = traj.states();
    let horizon = traj.horizon();
    let flux_at = |t: f64| {
        let x = t / h;
        let k = (x.floor() as usize).min(states.len() - 1);
        if k + 1 >= states.len() {
            return states[k].flux_aware;
        }
        let frac = x - k as f64;
        states[k].flux_aware + frac * (states[k + 1].flux_aware - states[k].flux_aware)
    };
    let n_days = day_count(traj);
    let values = (0..n_days)
        .map(|d| {
            let a = d as f64;
            let b = ((d + 1) as f64).min(horizon);
            flux_at(b) - flux_at(a)
        })
        .collect();
    TimeSeries::daily(0, values).expect("flux differences are finite")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{integrate, CompartmentState, ModelParams};

    fn run(p: ModelParams, n: usize) -> Trajectory {
        integrate(&CompartmentState::seeded(1e-6, 1e-6), &p, 0.5, n).unwrap()
    }

    #[test]
    fn no_transmission_seed_just_recovers() {
        let t = run(
            ModelParams {
                beta_i: 0.0,
                ..Default::default()
            },
            2000,
        );
        assert!((final_size(&t) - 1e-6).abs() < 1e-9);
        let (i_m, t_m) = peak_prevalence(&t);
        assert_eq!((i_m, t_m), (1e-6, 0.0));
        assert!(incidence_series(&t).values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn subcritical_peaks_at_seed() {
        let t = run(
            ModelParams {
                beta_i: 0.05,
                ..Default::default()
            },
            2000,
        );
        let (i_m, t_m) = peak_prevalence(&t);
        assert_eq!(t_m, 0.0);
        assert_eq!(i_m, 1e-6);
    }

    #[test]
    fn non_absorbed_decomposition_fails() {
        let t = run(ModelParams::default(), 1);
        assert!(matches!(
            decompose_equilibrium(&t),
            Err(ObservableError::NotAbsorbed { .. })
        ));
    }

    #[test]
    fn awareness_free_run_has_no_pathway_flow() {
        let p = ModelParams {
            beta_a: 0.0,
            ..Default::default()
        };
        let t = run(p, 2000);
        let d = decompose_equilibrium(&t).unwrap();
        assert_eq!(d.r1_red, 0.0);
        assert_eq!(d.r2_green, 0.0);
        assert!(d.r3_blue < 1e-6);
        assert!((d.residual_ur - final_size(&t)).abs() < 1e-6);
        assert!(awareness_incidence_series(&t)
            .values()
            .iter()
            .all(|&v| v == 0.0));
    }

    #[test]
    fn daily_integrals_of_linear_rate() {
        // rate(t) = t sampled every 0.5 days over [0, 3]
        let rates: Vec<f64> = (0..=6).map(|k| k as f64 * 0.5).collect();
        let days = daily_integrals(0.5, &rates, 3);
        assert_eq!(days, vec![0.5, 1.5, 2.5]);
        // a step that does not divide the day splits segments at boundaries
        let rates: Vec<f64> = (0..=4).map(|k| k as f64 * 0.75).collect();
        let days = daily_integrals(0.75, &rates, 3);
        for (d, v) in days.iter().enumerate() {
            assert!((v - (d as f64 + 0.5)).abs() < 1e-12);
        }
    }

    #[test]
    fn dominant_group_picks_largest() {
        let d = EquilibriumDecomposition {
            r1_red: 0.1,
            r2_green: 0.3,
            r3_blue: 0.2,
            residual_ur: 0.9,
        };
        assert_eq!(d.dominant_group(), "green");
    }
}
