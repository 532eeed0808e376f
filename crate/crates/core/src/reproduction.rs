//! Basic and effective reproduction numbers from the next-generation matrix.
//!
//! Infected compartments are ordered (UI, A1I, A2I). `F` holds new-infection
//! rates at the disease-free evaluation point and `V` the transition rates
//! out of and between infected compartments; R0 is the spectral radius of
//! `F V^-1`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{CompartmentState, ModelParams, Trajectory};
use crate::series::TimeSeries;

pub type Matrix3 = [[f64; 3]; 3];

const POWER_TOLERANCE: f64 = 1e-14;
const POWER_MAX_ITERATIONS: usize = 10_000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ReproductionError {
    #[error("transition matrix V is singular")]
    Singular,
    #[error("power iteration did not converge after {0} iterations")]
    NoConvergence(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NgmPair {
    pub f_matrix: Matrix3,
    pub v_matrix: Matrix3,
}

pub fn ngm_matrices(params: &ModelParams, initial: &CompartmentState) -> NgmPair {
    let (bi_hat, ba_hat) = params.effective_rates();
    let rows = [
        params.beta_i * initial.us,
        bi_hat * initial.a1s,
        bi_hat * initial.a2s,
    ];
    let f_matrix = rows.map(|r| [r; 3]);
    let aware_inflow = ba_hat * initial.a1s;
    let v_matrix = [
        [aware_inflow + params.gamma_i, 0.0, 0.0],
        [-aware_inflow, params.gamma_a + params.gamma_i, 0.0],
        [0.0, -params.gamma_a, params.gamma_i],
    ];
    NgmPair { f_matrix, v_matrix }
}

/// `(beta_i / gamma_i) (US0 + alpha_1 A1S0)`.
///
/// Equals the spectral radius of `F V^-1` when the evaluation point has no
/// inactive-aware susceptibles (A2S0 = 0).
pub fn r0_eff_closed_form(params: &ModelParams, initial: &CompartmentState) -> f64 {
    params.beta_i / params.gamma_i * (initial.us + params.alpha_1 * initial.a1s)
}

/// The term-by-term R0 sum: first-row contributions of `F V^-1` plus the
/// aware contributions. Exported as a transcription cross-check.
pub fn r0_sum_expression(params: &ModelParams, initial: &CompartmentState) -> f64 {
    let (bi_hat, ba_hat) = params.effective_rates();
    let (gi, ga) = (params.gamma_i, params.gamma_a);
    let b = ba_hat * initial.a1s;
    let unaware = params.beta_i
        * initial.us
        * (1.0 / (b + gi) + b / ((b + gi) * (ga + gi)) + b * ga / ((b + gi) * (ga + gi) * gi));
    let active = bi_hat * initial.a1s * (1.0 / (ga + gi) + ga / ((ga + gi) * gi));
    let inactive = bi_hat * initial.a2s / gi;
    unaware + active + inactive
}

fn det3(m: &Matrix3) -> f64 {
    m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
        - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
        + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
}

pub fn invert3(m: &Matrix3) -> Result<Matrix3, ReproductionError> {
    let det = det3(m);
    if det == 0.0 || !det.is_finite() {
        return Err(ReproductionError::Singular);
    }
    let mut inv = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            // cofactor of (j, i) for the adjugate
            let (r0, r1) = match j {
                0 => (1, 2),
                1 => (0, 2),
                _ => (0, 1),
            };
            let (c0, c1) = match i {
                0 => (1, 2),
                1 => (0, 2),
                _ => (0, 1),
            };
            let minor = m[r0][c0] * m[r1][c1] - m[r0][c1] * m[r1][c0];
            let sign = if (i + j) % 2 == 0 { 1.0 } else { -1.0 };
            inv[i][j] = sign * minor / det;
        }
    }
    Ok(inv)
}

pub fn mat_mul(a: &Matrix3, b: &Matrix3) -> Matrix3 {
    let mut out = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            out[i][j] = (0..3).map(|k| a[i][k] * b[k][j]).sum();
        }
    }
    out
}

impl NgmPair {
    pub fn next_generation(&self) -> Result<Matrix3, ReproductionError> {
        Ok(mat_mul(&self.f_matrix, &invert3(&self.v_matrix)?))
    }
}

/// Dominant eigenvalue magnitude of `F V^-1` by power iteration.
pub fn spectral_r0(ngm: &NgmPair) -> Result<f64, ReproductionError> {
    let k = ngm.next_generation()?;
    power_iteration(&k)
}

fn power_iteration(m: &Matrix3) -> Result<f64, ReproductionError> {
    let norm = |v: &[f64; 3]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let mut v = [1.0 / 3f64.sqrt(); 3];
    let mut lambda = 0.0;
    for _ in 0..POWER_MAX_ITERATIONS {
        let w: [f64; 3] = std::array::from_fn(|i| (0..3).map(|j| m[i][j] * v[j]).sum());
        let n = norm(&w);
        if n == 0.0 {
            return Ok(0.0);
        }
        let next = n;
        let w = w.map(|x| x / n);
        let converged = (next - lambda).abs() <= POWER_TOLERANCE * next;
        lambda = next;
        v = w;
        if converged {
            return Ok(lambda);
        }
    }
    Err(ReproductionError::NoConvergence(POWER_MAX_ITERATIONS))
}

/// `(beta_i / gamma_i) (US + alpha_1 (A1S + A2S))` at every sample.
pub fn rt_eff_series(traj: &Trajectory, params: &ModelParams) -> TimeSeries {
    let factor = params.beta_i / params.gamma_i;
    let index = (0..traj.len()).map(|k| traj.time(k)).collect();
    let values = traj
        .states()
        .iter()
        .map(|s| factor * (s.us + params.alpha_1 * (s.a1s + s.a2s)))
        .collect();
    TimeSeries::new(index, values).expect("sample times increase and values are finite")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReproductionReport {
    pub r0_eff: f64,
    pub spectral_r0: f64,
    pub r0_sum: f64,
    pub rt_series: Vec<(f64, f64)>,
}

pub fn reproduction_report(
    traj: &Trajectory,
    params: &ModelParams,
) -> Result<ReproductionReport, ReproductionError> {
    let initial = traj.initial();
    let ngm = ngm_matrices(params, initial);
    Ok(ReproductionReport {
        r0_eff: r0_eff_closed_form(params, initial),
        spectral_r0: spectral_r0(&ngm)?,
        r0_sum: r0_sum_expression(params, initial),
        rt_series: rt_eff_series(traj, params).iter().collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unaware() -> CompartmentState {
        CompartmentState {
            us: 1.0,
            ..Default::default()
        }
    }

    #[test]
    fn fully_unaware_f_has_single_row() {
        let p = ModelParams::default();
        let ngm = ngm_matrices(&p, &unaware());
        assert_eq!(ngm.f_matrix[0], [0.15; 3]);
        assert_eq!(ngm.f_matrix[1], [0.0; 3]);
        assert_eq!(ngm.f_matrix[2], [0.0; 3]);
        let r0 = spectral_r0(&ngm).unwrap();
        assert!((r0 - 0.15 / p.gamma_i).abs() < 1e-10);
        assert!((r0_eff_closed_form(&p, &unaware()) - 2.1).abs() < 1e-12);
    }

    #[test]
    fn full_immunization_zeroes_aware_rows() {
        let p = ModelParams {
            alpha_1: 0.0,
            ..Default::default()
        };
        let s = CompartmentState::seeded(0.3, 0.0);
        let ngm = ngm_matrices(&p, &s);
        assert_eq!(ngm.f_matrix[1], [0.0; 3]);
        assert_eq!(ngm.f_matrix[2], [0.0; 3]);
        let fully_aware = CompartmentState {
            a1s: 1.0,
            ..Default::default()
        };
        assert_eq!(r0_eff_closed_form(&p, &fully_aware), 0.0);
    }

    #[test]
    fn no_transmission_gives_zero() {
        let p = ModelParams {
            beta_i: 0.0,
            ..Default::default()
        };
        assert_eq!(spectral_r0(&ngm_matrices(&p, &unaware())).unwrap(), 0.0);
    }

    #[test]
    fn inverse_round_trips() {
        let v = ngm_matrices(&ModelParams::default(), &CompartmentState::seeded(0.2, 0.0)).v_matrix;
        let id = mat_mul(&v, &invert3(&v).unwrap());
        for i in 0..3 {
            for j in 0..3 {
                let e = if i == j { 1.0 } else { 0.0 };
                assert!((id[i][j] - e).abs() < 1e-14);
            }
        }
        assert_eq!(invert3(&[[0.0; 3]; 3]), Err(ReproductionError::Singular));
    }

    #[test]
    fn sum_expression_matches_eigenvalue() {
        let p = ModelParams {
            alpha_1: 0.3,
            alpha_2: 4.0,
            beta_a: 0.25,
            ..Default::default()
        };
        let s = CompartmentState {
            us: 0.5,
            a1s: 0.3,
            a2s: 0.2,
            ..Default::default()
        };
        let lambda = spectral_r0(&ngm_matrices(&p, &s)).unwrap();
        assert!((r0_sum_expression(&p, &s) - lambda).abs() < 1e-12);
    }
}
