//! Pearson correlation with significance, rank correlation and lagged
//! cross-correlation.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::series::TimeSeries;
use crate::special::student_t_two_sided;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StatsError {
    #[error("series lengths differ ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("need at least 3 points, got {0}")]
    TooShort(usize),
    #[error("correlation undefined: series has zero variance")]
    ZeroVariance,
    #[error("non-finite value in input")]
    NonFinite,
    #[error("max lag {max_lag} must be below series length {len}")]
    LagTooLarge { max_lag: usize, len: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Correlation {
    pub rho: f64,
    pub p_value: f64,
    pub n: usize,
}

fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

/// Sample covariance with the n - 1 convention.
pub fn covariance(a: &[f64], b: &[f64]) -> Result<f64, StatsError> {
    if a.len() != b.len() {
        return Err(StatsError::LengthMismatch(a.len(), b.len()));
    }
    if a.len() < 2 {
        return Err(StatsError::TooShort(a.len()));
    }
    let (ma, mb) = (mean(a), mean(b));
    let s: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
    Ok(s / (a.len() - 1) as f64)
}

fn rho_only(a: &[f64], b: &[f64]) -> Result<f64, StatsError> {
    if a.len() != b.len() {
        return Err(StatsError::LengthMismatch(a.len(), b.len()));
    }
    if a.len() < 3 {
        return Err(StatsError::TooShort(a.len()));
    }
    if a.iter().chain(b).any(|v| !v.is_finite()) {
        return Err(StatsError::NonFinite);
    }
    let (ma, mb) = (mean(a), mean(b));
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    if saa == 0.0 || sbb == 0.0 {
        return Err(StatsError::ZeroVariance);
    }
    // sqrt of the product keeps pearson(x, x) == 1 exactly
    Ok((sab / (saa * sbb).sqrt()).clamp(-1.0, 1.0))
}

/// Sample Pearson coefficient with a two-sided p-value from the
/// t-transform on n - 2 degrees of freedom.
pub fn pearson(a: &[f64], b: &[f64]) -> Result<Correlation, StatsError> {
    let rho = rho_only(a, b)?;
    let n = a.len();
    let dof = (n - 2) as f64;
    let p_value = if rho.abs() >= 1.0 {
        0.0
    } else {
        let t = rho * (dof / (1.0 - rho * rho)).sqrt();
        student_t_two_sided(t, dof).clamp(0.0, 1.0)
    };
    Ok(Correlation { rho, p_value, n })
}

pub fn pearson_series<K: PartialOrd + Copy>(
    a: &TimeSeries<K>,
    b: &TimeSeries<K>,
) -> Result<Correlation, StatsError> {
    pearson(a.values(), b.values())
}

/// Ranks starting at 1, ties receive their average rank.
pub fn ranks(x: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..x.len()).collect();
    order.sort_by(|&i, &j| x[i].total_cmp(&x[j]));
    let mut out = vec![0.0; x.len()];
    let mut start = 0;
    while start < order.len() {
        let mut end = start;
        while end + 1 < order.len() && x[order[end + 1]] == x[order[start]] {
            end += 1;
        }
        let avg = (start + end) as f64 / 2.0 + 1.0;
        for &i in &order[start..=end] {
            out[i] = avg;
        }
        start = end + 1;
    }
    out
}

pub fn spearman(a: &[f64], b: &[f64]) -> Result<Correlation, StatsError> {
    pearson(&ranks(a), &ranks(b))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LagCorrelation {
    pub lag: i64,
    /// `None` when the overlap is shorter than 3 points or degenerate.
    pub rho: Option<f64>,
}

/// Pearson coefficient between `a` shifted forward by each lag and `b`.
///
/// At lag `l` the pairs are `(a[t - l], b[t])` over the overlapping window,
/// so a `b` that trails `a` by `k` days peaks at lag `k`.
pub fn cross_correlation(
    a: &[f64],
    b: &[f64],
    max_lag: usize,
) -> Result<Vec<LagCorrelation>, StatsError> {
    if a.len() != b.len() {
        return Err(StatsError::LengthMismatch(a.len(), b.len()));
    }
    if max_lag >= a.len() {
        return Err(StatsError::LagTooLarge {
            max_lag,
            len: a.len(),
        });
    }
    let n = a.len();
    let lags = -(max_lag as i64)..=(max_lag as i64);
    Ok(lags
        .map(|lag| {
            let shift = lag.unsigned_abs() as usize;
            let (xa, xb) = if lag >= 0 {
                (&a[..n - shift], &b[shift..])
            } else {
                (&a[shift..], &b[..n - shift])
            };
            LagCorrelation {
                lag,
                rho: rho_only(xa, xb).ok(),
            }
        })
        .collect())
}

/// Lag with the largest defined coefficient; earliest lag wins ties.
pub fn best_lag(ccf: &[LagCorrelation]) -> Option<LagCorrelation> {
    ccf.iter().filter(|c| c.rho.is_some()).fold(
        None,
        |best: Option<LagCorrelation>, c| match best {
            Some(b) if b.rho >= c.rho => Some(b),
            _ => Some(*c),
        },
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_and_negated() {
        let x = [0.3, 1.7, 2.2, 9.1, 4.4, 0.05, 7.7];
        assert_eq!(pearson(&x, &x).unwrap().rho, 1.0);
        let neg: Vec<f64> = x.iter().map(|v| -v).collect();
        assert_eq!(pearson(&x, &neg).unwrap().rho, -1.0);
        assert_eq!(pearson(&x, &x).unwrap().p_value, 0.0);
    }

    #[test]
    fn errors() {
        assert_eq!(
            pearson(&[1.0, 2.0], &[1.0, 2.0]),
            Err(StatsError::TooShort(2))
        );
        assert_eq!(
            pearson(&[1.0, 2.0, 3.0], &[1.0, 2.0]),
            Err(StatsError::LengthMismatch(3, 2))
        );
        assert_eq!(
            pearson(&[1.0, 1.0, 1.0], &[1.0, 2.0, 3.0]),
            Err(StatsError::ZeroVariance)
        );
        assert!(cross_correlation(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0], 3).is_err());
    }

    #[test]
    fn ranks_average_ties() {
        assert_eq!(ranks(&[3.0, 1.0, 3.0, 2.0]), vec![3.5, 1.0, 3.5, 2.0]);
    }

    #[test]
    fn short_overlap_reported_missing() {
        let a = [1.0, 3.0, 2.0, 5.0, 4.0];
        let ccf = cross_correlation(&a, &a, 4).unwrap();
        assert_eq!(ccf.len(), 9);
        assert_eq!(ccf[0].rho, None); // lag -4: one pair
        assert_eq!(ccf[4].rho, Some(1.0));
        assert!(ccf[2].rho.is_some()); // lag -2: three pairs
    }

    #[test]
    fn covariance_sample_convention() {
        let c = covariance(&[1.0, 2.0, 3.0], &[2.0, 4.0, 6.0]).unwrap();
        assert!((c - 2.0).abs() < 1e-15);
    }
}
