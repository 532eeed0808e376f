use std::io::Write;

use chrono::{Duration, NaiveDate};
use infodemic_core::ingest::{
    parse_cumulative_csv, parse_population_csv, parse_value_csv, segment_waves, smooth_ma7,
    IngestError, RegionSeries, SegmentConfig,
};
use infodemic_core::DateSeries;

fn start() -> NaiveDate {
    NaiveDate::from_ymd_opt(2020, 3, 1).unwrap()
}

fn gaussian(t: f64, mu: f64, sigma: f64, amp: f64) -> f64 {
    amp * (-(t - mu).powi(2) / (2.0 * sigma * sigma)).exp()
}

#[test]
fn single_bump_is_one_wave() {
    let v: Vec<f64> = (0..200)
        .map(|t| gaussian(t as f64, 90.0, 20.0, 500.0))
        .collect();
    let s = DateSeries::from_start(start(), v).unwrap();
    let waves = segment_waves(&s, &SegmentConfig::default()).unwrap();
    assert_eq!(waves.len(), 1);
    assert_eq!(waves[0].start, start());
    assert_eq!(waves[0].end, s.last_date());
}

#[test]
fn two_bumps_split_at_the_valley() {
    let v: Vec<f64> = (0..300)
        .map(|t| {
            let t = t as f64;
            gaussian(t, 70.0, 15.0, 400.0) + gaussian(t, 210.0, 20.0, 600.0)
        })
        .collect();
    // the valley minimum of the mixture, found by brute force
    let valley = (70..210).min_by(|&a, &b| v[a].total_cmp(&v[b])).unwrap();
    let s = DateSeries::from_start(start(), v).unwrap();
    let waves = segment_waves(&s, &SegmentConfig::default()).unwrap();
    assert_eq!(waves.len(), 2);
    assert_eq!(waves[0].end, start() + Duration::days(valley as i64));
    assert_eq!(waves[1].start, start() + Duration::days(valley as i64 + 1));
    assert_eq!(waves[1].label, "p2");
}

#[test]
fn shallow_dip_does_not_split() {
    let v: Vec<f64> = (0..300)
        .map(|t| {
            let t = t as f64;
            gaussian(t, 110.0, 30.0, 500.0) + gaussian(t, 190.0, 30.0, 500.0)
        })
        .collect();
    let s = DateSeries::from_start(start(), v).unwrap();
    assert_eq!(
        segment_waves(&s, &SegmentConfig::default()).unwrap().len(),
        1
    );
}

#[test]
fn at_most_max_waves_returned() {
    let v: Vec<f64> = (0..500)
        .map(|t| {
            let t = t as f64;
            (0..4)
                .map(|k| gaussian(t, 60.0 + 120.0 * k as f64, 12.0, 300.0))
                .sum::<f64>()
        })
        .collect();
    let s = DateSeries::from_start(start(), v).unwrap();
    let waves = segment_waves(&s, &SegmentConfig::default()).unwrap();
    assert_eq!(waves.len(), 3);
    assert!(waves.windows(2).all(|w| w[0].end < w[1].start));
}

#[test]
fn flat_zero_series_reports_no_wave() {
    let s = DateSeries::from_start(start(), vec![0.0; 100]).unwrap();
    assert!(matches!(
        segment_waves(&s, &SegmentConfig::default()),
        Err(IngestError::NoWaves)
    ));
    let short = DateSeries::from_start(start(), vec![1.0; 10]).unwrap();
    assert!(matches!(
        segment_waves(&short, &SegmentConfig::default()),
        Err(IngestError::TooShort { .. })
    ));
}

#[test]
fn smoothing_constant_and_impulse() {
    let c = smooth_ma7(&DateSeries::from_start(start(), vec![4.2; 20]).unwrap());
    assert!(c.values().iter().all(|&v| (v - 4.2).abs() < 1e-12));
    let mut v = vec![0.0; 30];
    v[10] = 70.0;
    let m = smooth_ma7(&DateSeries::from_start(start(), v).unwrap());
    for (k, x) in m.values().iter().enumerate() {
        let expected = if (10..17).contains(&k) { 10.0 } else { 0.0 };
        assert!((x - expected).abs() < 1e-12, "day {k}: {x}");
    }
}

#[test]
fn files_to_region_series() {
    let dir = tempfile::tempdir().unwrap();
    let cases = dir.path().join("us-states.csv");
    let mut f = std::fs::File::create(&cases).unwrap();
    writeln!(f, "date,state,fips,cases,deaths").unwrap();
    let mut cum = 0.0;
    for d in 0..20 {
        cum += (d * 10) as f64;
        let date = start() + Duration::days(d);
        writeln!(f, "{date},Alaska,02,{cum},0").unwrap();
        writeln!(f, "{date},Arizona,04,{},0", cum * 3.0).unwrap();
    }
    drop(f);
    let pops = "region,population\nAlaska,731545\nArizona,7278717\n";
    let table = parse_population_csv(pops.as_bytes()).unwrap();
    let cumulative = parse_cumulative_csv(&cases, "Alaska").unwrap();
    let region = RegionSeries::from_cumulative("Alaska", table["Alaska"], &cumulative).unwrap();
    assert_eq!(region.raw_daily.len(), 19);
    assert_eq!(region.raw_daily.values()[0], 10.0);
    let frac = region.fraction();
    let restored: Vec<f64> = frac.values().iter().map(|v| v * 731545.0).collect();
    for (a, b) in restored.iter().zip(region.smoothed.values()) {
        assert!((a - b).abs() < 1e-12 * b.max(1.0));
    }
    let mut out = Vec::new();
    region.write_csv(&mut out).unwrap();
    let text = String::from_utf8(out).unwrap();
    assert!(text.starts_with("date,raw_daily,smoothed,fraction\n2020-03-02,10,"));
    assert_eq!(text.lines().count(), 20);
    assert!(matches!(
        parse_cumulative_csv(&cases, "Utah"),
        Err(IngestError::RegionNotFound { .. })
    ));
}

#[test]
fn generic_value_series() {
    let text = "date,value\n2021-01-01,3\n2021-01-02,5.5\n";
    let s = parse_value_csv(text.as_bytes()).unwrap();
    assert_eq!(s.values(), &[3.0, 5.5]);
    let bad = "date,value\n2021-01-02,3\n2021-01-01,5.5\n";
    assert!(matches!(
        parse_value_csv(bad.as_bytes()),
        Err(IngestError::NonMonotone { .. })
    ));
    let bad_pop = "region,population\nX,0\n";
    assert!(matches!(
        parse_population_csv(bad_pop.as_bytes()),
        Err(IngestError::BadPopulation(_))
    ));
}
