use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum SeriesError {
    #[error("time series must contain at least one point")]
    Empty,
    #[error("index and values differ in length ({index} vs {values})")]
    LengthMismatch { index: usize, values: usize },
    #[error("index not strictly increasing at position {0}")]
    NotIncreasing(usize),
    #[error("non-finite value at position {0}")]
    NonFinite(usize),
}

/// Ordered, strictly increasing index paired with finite values.
///
/// Model output uses day numbers (`TimeSeries<f64>`); empirical data uses
/// calendar dates ([`DateSeries`]).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeSeries<K = f64> {
    index: Vec<K>,
    values: Vec<f64>,
}

pub type DateSeries = TimeSeries<NaiveDate>;

impl<K: PartialOrd + Copy> TimeSeries<K> {
    pub fn new(index: Vec<K>, values: Vec<f64>) -> Result<Self, SeriesError> {
        if index.len() != values.len() {
            return Err(SeriesError::LengthMismatch {
                index: index.len(),
                values: values.len(),
            });
        }
        if index.is_empty() {
            return Err(SeriesError::Empty);
        }
        if let Some(pos) = index.windows(2).position(|w| !(w[0] < w[1])) {
            return Err(SeriesError::NotIncreasing(pos + 1));
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(SeriesError::NonFinite(pos));
        }
        Ok(Self { index, values })
    }

    pub fn index(&self) -> &[K] {
        &self.index
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (K, f64)> + '_ {
        self.index.iter().copied().zip(self.values.iter().copied())
    }

    pub fn sum(&self) -> f64 {
        self.values.iter().sum()
    }

    /// Same index, values replaced element-wise.
    pub fn map_values(&self, f: impl Fn(f64) -> f64) -> Result<Self, SeriesError> {
        Self::new(
            self.index.clone(),
            self.values.iter().map(|&v| f(v)).collect(),
        )
    }

    /// Points whose index lies in `[start, end]`.
    pub fn slice(&self, start: K, end: K) -> Option<Self> {
        let (index, values): (Vec<K>, Vec<f64>) = self
            .iter()
            .filter(|(k, _)| *k >= start && *k <= end)
            .unzip();
        Self::new(index, values).ok()
    }
}

impl TimeSeries<f64> {
    /// Series indexed by consecutive integer days starting at `first_day`.
    pub fn daily(first_day: usize, values: Vec<f64>) -> Result<Self, SeriesError> {
        let index = (first_day..first_day + values.len())
            .map(|d| d as f64)
            .collect();
        Self::new(index, values)
    }
}

impl DateSeries {
    /// Series over consecutive calendar days starting at `start`.
    pub fn from_start(start: NaiveDate, values: Vec<f64>) -> Result<Self, SeriesError> {
        let index = start.iter_days().take(values.len()).collect();
        Self::new(index, values)
    }

    pub fn first_date(&self) -> NaiveDate {
        self.index[0]
    }

    pub fn last_date(&self) -> NaiveDate {
        self.index[self.index.len() - 1]
    }

    /// True when every consecutive pair of dates is one day apart.
    pub fn is_contiguous(&self) -> bool {
        self.index.windows(2).all(|w| (w[1] - w[0]).num_days() == 1)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_bad_input() {
        assert_eq!(
            TimeSeries::<f64>::new(vec![], vec![]),
            Err(SeriesError::Empty)
        );
        assert_eq!(
            TimeSeries::new(vec![0.0, 0.0], vec![1.0, 2.0]),
            Err(SeriesError::NotIncreasing(1))
        );
        assert_eq!(
            TimeSeries::new(vec![0.0, 1.0], vec![1.0, f64::NAN]),
            Err(SeriesError::NonFinite(1))
        );
        assert!(matches!(
            TimeSeries::new(vec![0.0], vec![1.0, 2.0]),
            Err(SeriesError::LengthMismatch { .. })
        ));
    }

    #[test]
    fn date_helpers() {
        let d0 = NaiveDate::from_ymd_opt(2020, 3, 1).unwrap();
        let s = DateSeries::from_start(d0, vec![1.0, 2.0, 3.0]).unwrap();
        assert!(s.is_contiguous());
        assert_eq!(s.last_date(), NaiveDate::from_ymd_opt(2020, 3, 3).unwrap());
        let sub = s.slice(d0.succ_opt().unwrap(), s.last_date()).unwrap();
        assert_eq!(sub.values(), &[2.0, 3.0]);
    }
}
