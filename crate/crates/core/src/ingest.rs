//! Empirical case data: parsing, daily differencing, smoothing and wave
//! segmentation.

use std::collections::{BTreeMap, BTreeSet};
use std::io::{Read, Write};
use std::path::Path;

use chrono::{Duration, NaiveDate};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::series::{DateSeries, SeriesError};

pub const DEFAULT_VALLEY_FRACTION: f64 = 0.5;
pub const DEFAULT_MIN_WAVE_DAYS: usize = 30;
pub const DEFAULT_MAX_WAVES: usize = 3;

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("region '{region}' not found; available: {}", available.join(", "))]
    RegionNotFound {
        region: String,
        available: Vec<String>,
    },
    #[error("row {row}: {reason}")]
    Malformed { row: usize, reason: String },
    #[error("duplicate date {date} for region '{region}'")]
    DuplicateDate { region: String, date: NaiveDate },
    #[error("dates out of order at row {row} ({date} follows {previous})")]
    NonMonotone {
        row: usize,
        date: NaiveDate,
        previous: NaiveDate,
    },
    #[error("need at least {needed} points, got {got}")]
    TooShort { needed: usize, got: usize },
    #[error("population must be positive, got {0}")]
    BadPopulation(f64),
    #[error("wave windows invalid: {0}")]
    InvalidWaves(String),
    #[error("no wave detected; supply explicit wave boundaries")]
    NoWaves,
    #[error("wave config: {0}")]
    Config(String),
    #[error(transparent)]
    Series(#[from] SeriesError),
}

fn csv_err(row: usize, e: csv::Error) -> IngestError {
    IngestError::Malformed {
        row,
        reason: e.to_string(),
    }
}

fn parse_date(s: &str, row: usize) -> Result<NaiveDate, IngestError> {
    NaiveDate::parse_from_str(s.trim(), "%Y-%m-%d").map_err(|e| IngestError::Malformed {
        row,
        reason: format!("bad date '{s}': {e}"),
    })
}

fn parse_number(s: &str, row: usize, what: &str) -> Result<f64, IngestError> {
    let v: f64 = s.trim().parse().map_err(|_| IngestError::Malformed {
        row,
        reason: format!("bad {what} '{s}'"),
    })?;
    if !v.is_finite() {
        return Err(IngestError::Malformed {
            row,
            reason: format!("non-finite {what}"),
        });
    }
    Ok(v)
}

fn header_index(headers: &csv::StringRecord, name: &str) -> Result<usize, IngestError> {
    headers
        .iter()
        .position(|h| h.trim().eq_ignore_ascii_case(name))
        .ok_or_else(|| IngestError::Malformed {
            row: 1,
            reason: format!("missing column '{name}'"),
        })
}

/// Cumulative case counts for one region from a `date,state,fips,cases,deaths`
/// file. The region matches the `state` column case-insensitively. Rows
/// are numbered from 1 with the header as row 1.
pub fn parse_cumulative_csv(
    path: impl AsRef<Path>,
    region: &str,
) -> Result<DateSeries, IngestError> {
    parse_cumulative_reader(std::fs::File::open(path)?, region)
}

pub fn parse_cumulative_reader<R: Read>(
    reader: R,
    region: &str,
) -> Result<DateSeries, IngestError> {
    let mut rdr = csv::ReaderBuilder::new().flexible(true).from_reader(reader);
    let headers = rdr.headers().map_err(|e| csv_err(1, e))?.clone();
    let date_col = header_index(&headers, "date")?;
    let state_col = header_index(&headers, "state")?;
    let cases_col = header_index(&headers, "cases")?;

    let mut regions = BTreeSet::new();
    let mut dates = Vec::new();
    let mut values = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let row = i + 2;
        let rec = rec.map_err(|e| csv_err(row, e))?;
        let field = |c: usize| {
            rec.get(c).ok_or_else(|| IngestError::Malformed {
                row,
                reason: format!("expected at least {} fields, got {}", c + 1, rec.len()),
            })
        };
        let state = field(state_col)?.trim();
        regions.insert(state.to_string());
        if !state.eq_ignore_ascii_case(region.trim()) {
            continue;
        }
        let date = parse_date(field(date_col)?, row)?;
        let cases = parse_number(field(cases_col)?, row, "case count")?;
        if let Some(&previous) = dates.last() {
            if date == previous {
                return Err(IngestError::DuplicateDate {
                    region: state.to_string(),
                    date,
                });
            }
            if date < previous {
                return Err(IngestError::NonMonotone {
                    row,
                    date,
                    previous,
                });
            }
        }
        dates.push(date);
        values.push(cases);
    }
    if dates.is_empty() {
        return Err(IngestError::RegionNotFound {
            region: region.to_string(),
            available: regions.into_iter().collect(),
        });
    }
    Ok(DateSeries::new(dates, values)?)
}

/// Generic `date,value` series, e.g. an activity index.
pub fn parse_value_csv<R: Read>(reader: R) -> Result<DateSeries, IngestError> {
    let mut rdr = csv::Reader::from_reader(reader);
    let headers = rdr.headers().map_err(|e| csv_err(1, e))?.clone();
    let date_col = header_index(&headers, "date")?;
    let value_col = header_index(&headers, "value")?;
    let mut dates: Vec<NaiveDate> = Vec::new();
    let mut values = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let row = i + 2;
        let rec = rec.map_err(|e| csv_err(row, e))?;
        let date = parse_date(&rec[date_col], row)?;
        if let Some(&previous) = dates.last() {
            if date <= previous {
                return Err(IngestError::NonMonotone {
                    row,
                    date,
                    previous,
                });
            }
        }
        dates.push(date);
        values.push(parse_number(&rec[value_col], row, "value")?);
    }
    Ok(DateSeries::new(dates, values)?)
}

/// `region,population` table keyed by region name.
pub fn parse_population_csv<R: Read>(reader: R) -> Result<BTreeMap<String, f64>, IngestError> {
    let mut rdr = csv::Reader::from_reader(reader);
    let headers = rdr.headers().map_err(|e| csv_err(1, e))?.clone();
    let region_col = header_index(&headers, "region")?;
    let pop_col = header_index(&headers, "population")?;
    let mut out = BTreeMap::new();
    for (i, rec) in rdr.records().enumerate() {
        let row = i + 2;
        let rec = rec.map_err(|e| csv_err(row, e))?;
        let pop = parse_number(&rec[pop_col], row, "population")?;
        if pop <= 0.0 {
            return Err(IngestError::BadPopulation(pop));
        }
        out.insert(rec[region_col].trim().to_string(), pop);
    }
    Ok(out)
}

/// Looks a region up by exact name, then case-insensitively.
pub fn lookup_population(table: &BTreeMap<String, f64>, region: &str) -> Option<f64> {
    table.get(region).copied().or_else(|| {
        table
            .iter()
            .find(|(k, _)| k.eq_ignore_ascii_case(region))
            .map(|(_, v)| *v)
    })
}

/// First differences of a cumulative series, indexed by the later date.
///
/// Missing dates are filled by carrying the last cumulative value forward,
/// so a gap contributes zeros followed by the full jump. Negative
/// differences (reporting corrections) are clamped to zero.
pub fn to_daily(cumulative: &DateSeries) -> Result<DateSeries, IngestError> {
    if cumulative.len() < 2 {
        return Err(IngestError::TooShort {
            needed: 2,
            got: cumulative.len(),
        });
    }
    let filled = forward_fill(cumulative);
    let start = filled.first_date() + Duration::days(1);
    let values = filled
        .values()
        .windows(2)
        .enumerate()
        .map(|(i, w)| {
            let d = w[1] - w[0];
            if d < 0.0 {
                log::warn!(
                    "negative daily count {d} on {} clamped to 0",
                    start + Duration::days(i as i64)
                );
                0.0
            } else {
                d
            }
        })
        .collect();
    Ok(DateSeries::from_start(start, values)?)
}

fn forward_fill(series: &DateSeries) -> DateSeries {
    if series.is_contiguous() {
        return series.clone();
    }
    let mut values = Vec::new();
    let mut last = series.values()[0];
    let mut pairs = series.iter().peekable();
    let mut day = series.first_date();
    while day <= series.last_date() {
        if let Some(&(d, v)) = pairs.peek() {
            if d == day {
                last = v;
                pairs.next();
            }
        }
        values.push(last);
        day += Duration::days(1);
    }
    DateSeries::from_start(series.first_date(), values).expect("filled values are finite")
}

/// Trailing 7-day mean; the first six outputs average the points
/// available so far.
pub fn smooth_ma7(daily: &DateSeries) -> DateSeries {
    let v = daily.values();
    let values = (0..v.len())
        .map(|i| {
            let lo = i.saturating_sub(6);
            v[lo..=i].iter().sum::<f64>() / (i - lo + 1) as f64
        })
        .collect();
    DateSeries::new(daily.index().to_vec(), values).expect("means of finite values are finite")
}

pub fn normalize_by_population(
    series: &DateSeries,
    population: f64,
) -> Result<DateSeries, IngestError> {
    if !(population > 0.0) || !population.is_finite() {
        return Err(IngestError::BadPopulation(population));
    }
    Ok(series.map_values(|v| v / population)?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionSeries {
    pub region: String,
    pub population: f64,
    pub raw_daily: DateSeries,
    pub smoothed: DateSeries,
}

impl RegionSeries {
    pub fn from_cumulative(
        region: &str,
        population: f64,
        cumulative: &DateSeries,
    ) -> Result<Self, IngestError> {
        if !(population > 0.0) {
            return Err(IngestError::BadPopulation(population));
        }
        let raw_daily = to_daily(cumulative)?;
        let smoothed = smooth_ma7(&raw_daily);
        Ok(Self {
            region: region.to_string(),
            population,
            raw_daily,
            smoothed,
        })
    }

    pub fn fraction(&self) -> DateSeries {
        normalize_by_population(&self.smoothed, self.population)
            .expect("population validated at construction")
    }

    /// `date,raw_daily,smoothed,fraction`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "date,raw_daily,smoothed,fraction")?;
        let fraction = self.fraction();
        for ((date, raw), (s, f)) in self
            .raw_daily
            .iter()
            .zip(self.smoothed.values().iter().zip(fraction.values()))
        {
            writeln!(out, "{date},{raw},{s:.10},{f:.10e}")?;
        }
        Ok(())
    }
}

/// Inclusive date range of one epidemic wave.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WaveWindow {
    pub start: NaiveDate,
    pub end: NaiveDate,
    pub label: String,
}

impl WaveWindow {
    pub fn new(start: NaiveDate, end: NaiveDate, label: impl Into<String>) -> Self {
        Self {
            start,
            end,
            label: label.into(),
        }
    }

    pub fn days(&self) -> usize {
        (self.end - self.start).num_days() as usize + 1
    }
}

pub fn wave_label(k: usize) -> String {
    format!("p{}", k + 1)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentConfig {
    /// Explicit windows; when present the automatic search is skipped.
    #[serde(default)]
    pub boundaries: Option<Vec<(NaiveDate, NaiveDate)>>,
    #[serde(default = "default_valley_fraction")]
    pub valley_fraction: f64,
    #[serde(default = "default_min_wave_days")]
    pub min_wave_days: usize,
    #[serde(default = "default_max_waves")]
    pub max_waves: usize,
}

fn default_valley_fraction() -> f64 {
    DEFAULT_VALLEY_FRACTION
}
fn default_min_wave_days() -> usize {
    DEFAULT_MIN_WAVE_DAYS
}
fn default_max_waves() -> usize {
    DEFAULT_MAX_WAVES
}

impl Default for SegmentConfig {
    fn default() -> Self {
        Self {
            boundaries: None,
            valley_fraction: DEFAULT_VALLEY_FRACTION,
            min_wave_days: DEFAULT_MIN_WAVE_DAYS,
            max_waves: DEFAULT_MAX_WAVES,
        }
    }
}

pub fn validate_windows(
    windows: &[WaveWindow],
    series: Option<&DateSeries>,
) -> Result<(), IngestError> {
    for (k, w) in windows.iter().enumerate() {
        if w.start >= w.end {
            return Err(IngestError::InvalidWaves(format!(
                "window {} starts on {} but ends on {}",
                w.label, w.start, w.end
            )));
        }
        if k > 0 && w.start <= windows[k - 1].end {
            return Err(IngestError::InvalidWaves(format!(
                "window {} overlaps or precedes {}",
                w.label,
                windows[k - 1].label
            )));
        }
        if let Some(s) = series {
            if w.start < s.first_date() || w.end > s.last_date() {
                return Err(IngestError::InvalidWaves(format!(
                    "window {} ({}..{}) lies outside the data ({}..{})",
                    w.label,
                    w.start,
                    w.end,
                    s.first_date(),
                    s.last_date()
                )));
            }
        }
    }
    Ok(())
}

/// Splits a smoothed daily series into waves.
///
/// Automatic mode repeatedly splits a segment at its deepest interior
/// valley provided that valley is at most `valley_fraction` of the smaller
/// of the maxima on either side and both sides keep `min_wave_days`. The
/// first `max_waves` segments are returned; windows are contiguous, the
/// valley day closing the earlier wave.
pub fn segment_waves(
    smoothed: &DateSeries,
    config: &SegmentConfig,
) -> Result<Vec<WaveWindow>, IngestError> {
    if let Some(bounds) = &config.boundaries {
        let windows: Vec<WaveWindow> = bounds
            .iter()
            .enumerate()
            .map(|(k, &(s, e))| WaveWindow::new(s, e, wave_label(k)))
            .collect();
        if windows.is_empty() {
            return Err(IngestError::NoWaves);
        }
        validate_windows(&windows, Some(smoothed))?;
        return Ok(windows);
    }
    let n = smoothed.len();
    let min_days = config.min_wave_days.max(1);
    if n < 2 * min_days {
        return Err(IngestError::TooShort {
            needed: 2 * min_days,
            got: n,
        });
    }
    let v = smoothed.values();
    if v.iter().all(|&x| x <= 0.0) {
        return Err(IngestError::NoWaves);
    }
    let mut cuts = Vec::new();
    split_segment(v, 0, n - 1, config.valley_fraction, min_days, &mut cuts);
    cuts.sort_unstable();

    let mut windows = Vec::new();
    let mut start = 0;
    for &cut in cuts.iter().chain(std::iter::once(&(n - 1))) {
        windows.push((start, cut));
        start = cut + 1;
    }
    let dates = smoothed.index();
    Ok(windows
        .into_iter()
        .take(config.max_waves.max(1))
        .enumerate()
        .map(|(k, (a, b))| WaveWindow::new(dates[a], dates[b], wave_label(k)))
        .collect())
}

fn split_segment(
    v: &[f64],
    lo: usize,
    hi: usize,
    fraction: f64,
    min_days: usize,
    cuts: &mut Vec<usize>,
) {
    // windows are [lo, cut] and [cut + 1, hi]
    if hi + 1 - lo < 2 * min_days {
        return;
    }
    let first = lo + min_days - 1;
    let last = hi - min_days;
    let mut best: Option<(usize, f64)> = None;
    for c in first..=last {
        let left = v[lo..=c].iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let right = v[c + 1..=hi]
            .iter()
            .cloned()
            .fold(f64::NEG_INFINITY, f64::max);
        let shoulder = left.min(right);
        if shoulder <= 0.0 || v[c] > fraction * shoulder {
            continue;
        }
        // interior local minimum: the valley must not be a shoulder's edge
        let is_min = (c == lo || v[c] <= v[c - 1]) && v[c] <= v[c + 1];
        if !is_min {
            continue;
        }
        let depth = v[c] / shoulder;
        if best.map_or(true, |(_, d)| depth < d) {
            best = Some((c, depth));
        }
    }
    if let Some((c, _)) = best {
        cuts.push(c);
        split_segment(v, lo, c, fraction, min_days, cuts);
        split_segment(v, c + 1, hi, fraction, min_days, cuts);
    }
}

/// Per-region explicit wave boundaries, as TOML:
///
/// ```toml
/// [regions.Alaska]
/// waves = [["2020-03-10", "2020-06-20"], ["2020-06-21", "2020-09-30"]]
/// ```
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct WaveConfig {
    #[serde(default)]
    pub regions: BTreeMap<String, RegionWaves>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionWaves {
    pub waves: Vec<(NaiveDate, NaiveDate)>,
}

impl WaveConfig {
    pub fn parse(text: &str) -> Result<Self, IngestError> {
        let cfg: Self = toml::from_str(text).map_err(|e| IngestError::Config(e.to_string()))?;
        for (region, rw) in &cfg.regions {
            let windows = rw.windows();
            validate_windows(&windows, None)
                .map_err(|e| IngestError::Config(format!("region {region}: {e}")))?;
        }
        Ok(cfg)
    }

    pub fn windows_for(&self, region: &str) -> Option<Vec<WaveWindow>> {
        self.regions
            .get(region)
            .or_else(|| {
                self.regions
                    .iter()
                    .find(|(k, _)| k.eq_ignore_ascii_case(region))
                    .map(|(_, v)| v)
            })
            .map(RegionWaves::windows)
    }
}

impl RegionWaves {
    pub fn windows(&self) -> Vec<WaveWindow> {
        self.waves
            .iter()
            .enumerate()
            .map(|(k, &(s, e))| WaveWindow::new(s, e, wave_label(k)))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn d(s: &str) -> NaiveDate {
        NaiveDate::parse_from_str(s, "%Y-%m-%d").unwrap()
    }

    fn series(start: &str, v: &[f64]) -> DateSeries {
        DateSeries::from_start(d(start), v.to_vec()).unwrap()
    }

    const NYT: &str = "date,state,fips,cases,deaths\n\
        2020-03-01,X,01,5,0\n\
        2020-03-01,Y,02,1,0\n\
        2020-03-02,X,01,8,0\n";

    #[test]
    fn parses_region_rows() {
        let s = parse_cumulative_reader(NYT.as_bytes(), "X").unwrap();
        assert_eq!(s.values(), &[5.0, 8.0]);
        assert_eq!(s.first_date(), d("2020-03-01"));
    }

    #[test]
    fn missing_region_lists_available() {
        let err = parse_cumulative_reader(NYT.as_bytes(), "Z").unwrap_err();
        match &err {
            IngestError::RegionNotFound { available, .. } => {
                assert_eq!(available, &vec!["X".to_string(), "Y".to_string()])
            }
            e => panic!("unexpected {e}"),
        }
        assert!(err.to_string().contains("X, Y"));
    }

    #[test]
    fn duplicate_and_malformed_rows() {
        let dup = "date,state,fips,cases,deaths\n2020-03-01,X,1,5,0\n2020-03-01,X,1,6,0\n";
        assert!(matches!(
            parse_cumulative_reader(dup.as_bytes(), "X"),
            Err(IngestError::DuplicateDate { date, .. }) if date == d("2020-03-01")
        ));
        let bad = "date,state,fips,cases,deaths\n2020-03-01,X,1,5,0\n2020-03-02,X,1,lots,0\n";
        assert!(matches!(
            parse_cumulative_reader(bad.as_bytes(), "X"),
            Err(IngestError::Malformed { row: 3, .. })
        ));
        let back = "date,state,fips,cases,deaths\n2020-03-02,X,1,5,0\n2020-03-01,X,1,6,0\n";
        assert!(matches!(
            parse_cumulative_reader(back.as_bytes(), "X"),
            Err(IngestError::NonMonotone { row: 3, .. })
        ));
    }

    #[test]
    fn daily_differences() {
        let daily = to_daily(&series("2020-03-01", &[5.0, 8.0, 8.0, 20.0])).unwrap();
        assert_eq!(daily.values(), &[3.0, 0.0, 12.0]);
        assert_eq!(daily.first_date(), d("2020-03-02"));
        let clamped = to_daily(&series("2020-03-01", &[10.0, 7.0])).unwrap();
        assert_eq!(clamped.values(), &[0.0]);
        assert!(to_daily(&series("2020-03-01", &[1.0])).is_err());
    }

    #[test]
    fn gap_is_forward_filled() {
        let gap = DateSeries::new(vec![d("2020-03-01"), d("2020-03-03")], vec![5.0, 9.0]).unwrap();
        let daily = to_daily(&gap).unwrap();
        assert_eq!(daily.index(), &[d("2020-03-02"), d("2020-03-03")]);
        assert_eq!(daily.values(), &[0.0, 4.0]);
    }

    #[test]
    fn trailing_mean_shrinks_at_head() {
        let s = smooth_ma7(&series("2020-01-01", &[7.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0]));
        let expected = [7.0, 3.5, 7.0 / 3.0, 1.75, 1.4, 7.0 / 6.0, 1.0];
        for (a, b) in s.values().iter().zip(expected) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn normalization() {
        let s = normalize_by_population(&series("2020-01-01", &[100.0]), 1e6).unwrap();
        assert!((s.values()[0] - 1e-4).abs() < 1e-18);
        assert!(normalize_by_population(&s, 0.0).is_err());
        assert!(normalize_by_population(&s, -3.0).is_err());
    }

    #[test]
    fn explicit_boundaries_validated() {
        let s = series("2020-01-01", &vec![1.0; 100]);
        let cfg = SegmentConfig {
            boundaries: Some(vec![
                (d("2020-01-01"), d("2020-02-10")),
                (d("2020-02-05"), d("2020-03-20")),
            ]),
            ..Default::default()
        };
        assert!(matches!(
            segment_waves(&s, &cfg),
            Err(IngestError::InvalidWaves(_))
        ));
        let cfg = SegmentConfig {
            boundaries: Some(vec![(d("2020-01-01"), d("2020-02-10"))]),
            ..Default::default()
        };
        assert_eq!(segment_waves(&s, &cfg).unwrap().len(), 1);
    }

    #[test]
    fn wave_config_toml() {
        let text = r#"
            [regions.Alaska]
            waves = [["2020-03-10", "2020-06-20"], ["2020-06-21", "2020-09-30"]]
        "#;
        let cfg = WaveConfig::parse(text).unwrap();
        let w = cfg.windows_for("alaska").unwrap();
        assert_eq!(w.len(), 2);
        assert_eq!(w[1].label, "p2");
        let overlapping = r#"
            [regions.X]
            waves = [["2020-03-10", "2020-06-20"], ["2020-06-01", "2020-09-30"]]
        "#;
        assert!(WaveConfig::parse(overlapping).is_err());
    }
}
