use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context};
use clap::Args;
use rayon::prelude::*;
use serde::Serialize;

use infodemic_core::fit::{
    build_param_table, correlate_table, default_pairs, fit_curve, fit_wave, write_correlations,
    write_fit_curve, FitError, FitSpec, ParamTable, SeedRule, WaveFit,
};
use infodemic_core::ingest::{
    lookup_population, parse_cumulative_csv, parse_population_csv, parse_value_csv, segment_waves,
    validate_windows, RegionSeries, SegmentConfig, WaveConfig, WaveWindow,
};
use infodemic_core::observables::{decompose_equilibrium, is_absorbed, EquilibriumDecomposition};
use infodemic_core::reproduction::{
    ngm_matrices, r0_eff_closed_form, r0_sum_expression, rt_eff_series, spectral_r0, Matrix3,
};
use infodemic_core::sweep::{grid_sweep, RunSettings, SweepSpec};
use infodemic_core::{integrate, DateSeries, ModelParams, Observables};

use crate::config::{require_existing, RunConfig};
use crate::output::{slug, OutputDir};
use crate::Common;

/// Exit-code classes: `Invalid` maps to 1, `Runtime` to 2.
#[derive(Debug)]
pub enum Failure {
    Invalid(anyhow::Error),
    Runtime(anyhow::Error),
}

trait Classify<T> {
    fn invalid(self) -> Result<T, Failure>;
    fn runtime(self) -> Result<T, Failure>;
}

impl<T, E: Into<anyhow::Error>> Classify<T> for Result<T, E> {
    fn invalid(self) -> Result<T, Failure> {
        self.map_err(|e| Failure::Invalid(e.into()))
    }
    fn runtime(self) -> Result<T, Failure> {
        self.map_err(|e| Failure::Runtime(e.into()))
    }
}

fn fit_failure(e: FitError) -> Failure {
    match e {
        FitError::InvalidSpec(_) | FitError::NotFree(_) => Failure::Invalid(e.into()),
        other => Failure::Runtime(other.into()),
    }
}

type CmdResult = Result<(), Failure>;

fn prepare(common: &Common) -> Result<(RunConfig, OutputDir), Failure> {
    if let Some(c) = &common.config {
        require_existing([c.as_path()]).invalid()?;
    }
    let cfg = RunConfig::load(common.config.as_deref()).invalid()?;
    let root = common
        .out
        .clone()
        .or_else(|| cfg.output_dir.clone())
        .unwrap_or_else(|| PathBuf::from("out"));
    let out = OutputDir::create(&root).runtime()?;
    Ok((cfg, out))
}

#[derive(Serialize)]
struct ModelRun {
    params: ModelParams,
    settings: RunSettings,
}

#[derive(Serialize)]
struct Summary {
    observables: Observables,
    absorbed: bool,
    decomposition: Option<EquilibriumDecomposition>,
    r0_eff: f64,
    spectral_r0: f64,
}

pub fn simulate(common: &Common) -> CmdResult {
    let (cfg, out) = prepare(common)?;
    let params = cfg.model_params(ModelParams::default()).invalid()?;
    let settings = cfg.run_settings().invalid()?;
    let traj = integrate(
        &settings.initial,
        &params,
        settings.step_size,
        settings.n_steps,
    )
    .runtime()?;
    let absorbed = is_absorbed(&traj, settings.absorption_threshold);
    let ngm = ngm_matrices(&params, &settings.initial);
    let summary = Summary {
        observables: Observables::from_trajectory(&traj),
        absorbed,
        decomposition: if absorbed {
            Some(decompose_equilibrium(&traj).runtime()?)
        } else {
            None
        },
        r0_eff: r0_eff_closed_form(&params, &settings.initial),
        spectral_r0: spectral_r0(&ngm).runtime()?,
    };
    out.write_with("trajectory.csv", |w| Ok(traj.write_csv(w)?))
        .runtime()?;
    out.write_json("summary.json", &summary).runtime()?;
    out.write_provenance("simulate", ModelRun { params, settings })
        .runtime()?;
    Ok(())
}

pub fn sweep(
    common: &Common,
    panel: Option<&str>,
    points: Option<usize>,
    observables: Option<&str>,
) -> CmdResult {
    let (cfg, out) = prepare(common)?;
    let spec = cfg.sweep_spec(panel, points, observables).invalid()?;
    let settings = cfg.run_settings().invalid()?;
    let map = grid_sweep(&spec, &settings).runtime()?;
    let failed = map.cells.iter().filter(|c| c.outcome.is_err()).count();
    if failed > 0 {
        log::warn!("{failed} of {} cells failed to integrate", map.cells.len());
    }
    out.write_with("heatmap.csv", |w| Ok(map.write_csv(w)?))
        .runtime()?;
    out.write_json("sweep_spec.json", &spec).runtime()?;
    #[derive(Serialize)]
    struct SweepRun<'a> {
        spec: &'a SweepSpec,
        settings: RunSettings,
    }
    out.write_provenance(
        "sweep",
        SweepRun {
            spec: &spec,
            settings,
        },
    )
    .runtime()?;
    Ok(())
}

#[derive(Serialize)]
struct NgmReport {
    f_matrix: Matrix3,
    v_matrix: Matrix3,
    next_generation: Matrix3,
    spectral_r0: f64,
    r0_sum: f64,
    r0_eff_closed_form: f64,
}

pub fn ngm(common: &Common) -> CmdResult {
    let (cfg, out) = prepare(common)?;
    let params = cfg.model_params(ModelParams::default()).invalid()?;
    let settings = cfg.run_settings().invalid()?;
    let pair = ngm_matrices(&params, &settings.initial);
    let report = NgmReport {
        f_matrix: pair.f_matrix,
        v_matrix: pair.v_matrix,
        next_generation: pair.next_generation().runtime()?,
        spectral_r0: spectral_r0(&pair).runtime()?,
        r0_sum: r0_sum_expression(&params, &settings.initial),
        r0_eff_closed_form: r0_eff_closed_form(&params, &settings.initial),
    };
    let traj = integrate(
        &settings.initial,
        &params,
        settings.step_size,
        settings.n_steps,
    )
    .runtime()?;
    let rt = rt_eff_series(&traj, &params);
    out.write_json("ngm.json", &report).runtime()?;
    out.write_with("rt_eff.csv", |w| {
        writeln!(w, "t,rt_eff")?;
        for (t, v) in rt.iter() {
            writeln!(w, "{t},{v:.12e}")?;
        }
        Ok(())
    })
    .runtime()?;
    out.write_provenance("ngm", ModelRun { params, settings })
        .runtime()?;
    Ok(())
}

#[derive(Debug, Args)]
pub struct DataArgs {
    /// Cumulative case CSV with date,state,...,cases columns.
    #[arg(long)]
    pub cases: Option<PathBuf>,
    /// region,population CSV.
    #[arg(long)]
    pub population: Option<PathBuf>,
    /// Region to process; repeatable.
    #[arg(long = "region")]
    pub regions: Vec<String>,
    /// TOML file with explicit wave boundaries per region; waves are
    /// detected automatically when absent.
    #[arg(long)]
    pub waves: Option<PathBuf>,
}

#[derive(Debug, Clone, Serialize)]
struct DataInputs {
    cases: Option<PathBuf>,
    population: Option<PathBuf>,
    waves: Option<PathBuf>,
    target: Option<PathBuf>,
    regions: Vec<String>,
    segmentation: Option<SegmentConfig>,
}

fn resolve_data(
    cfg: &RunConfig,
    args: &DataArgs,
    target: Option<&Path>,
) -> Result<DataInputs, Failure> {
    let d = &cfg.data;
    let regions = if args.regions.is_empty() {
        d.regions.clone().unwrap_or_default()
    } else {
        args.regions.clone()
    };
    let inputs = DataInputs {
        cases: args.cases.clone().or_else(|| d.cases_csv.clone()),
        population: args.population.clone().or_else(|| d.population_csv.clone()),
        waves: args.waves.clone().or_else(|| d.waves.clone()),
        target: target
            .map(Path::to_path_buf)
            .or_else(|| d.target_csv.clone()),
        regions,
        segmentation: None,
    };
    let paths = [
        &inputs.cases,
        &inputs.population,
        &inputs.waves,
        &inputs.target,
    ];
    require_existing(paths.into_iter().flatten().map(PathBuf::as_path)).invalid()?;
    Ok(inputs)
}

fn load_waves(path: Option<&Path>) -> Result<Option<WaveConfig>, Failure> {
    path.map(|p| {
        let text = std::fs::read_to_string(p)
            .with_context(|| format!("reading {}", p.display()))
            .invalid()?;
        WaveConfig::parse(&text)
            .with_context(|| format!("wave file {}", p.display()))
            .invalid()
    })
    .transpose()
}

fn windows_for(
    region: &str,
    waves: Option<&WaveConfig>,
    smoothed: &DateSeries,
) -> Result<Vec<WaveWindow>, Failure> {
    match waves.and_then(|w| w.windows_for(region)) {
        Some(windows) => {
            validate_windows(&windows, Some(smoothed))
                .with_context(|| format!("region {region}"))
                .invalid()?;
            Ok(windows)
        }
        None => segment_waves(smoothed, &SegmentConfig::default())
            .with_context(|| format!("detecting waves for {region}"))
            .invalid(),
    }
}

fn load_regions(inputs: &DataInputs) -> Result<Vec<RegionSeries>, Failure> {
    let (Some(cases), Some(population)) = (&inputs.cases, &inputs.population) else {
        return Err(Failure::Invalid(anyhow!(
            "case data needs both --cases and --population (or data.cases_csv and data.population_csv)"
        )));
    };
    if inputs.regions.is_empty() {
        return Err(Failure::Invalid(anyhow!(
            "no region given (--region or data.regions)"
        )));
    }
    let pop_text = std::fs::read_to_string(population)
        .with_context(|| format!("reading {}", population.display()))
        .invalid()?;
    let pops = parse_population_csv(pop_text.as_bytes()).invalid()?;
    inputs
        .regions
        .iter()
        .map(|region| {
            let pop = lookup_population(&pops, region)
                .ok_or_else(|| Failure::Invalid(anyhow!("no population for region {region}")))?;
            let cumulative = parse_cumulative_csv(cases, region).invalid()?;
            RegionSeries::from_cumulative(region, pop, &cumulative).invalid()
        })
        .collect()
}

pub fn ingest(common: &Common, args: &DataArgs) -> CmdResult {
    let (cfg, out) = prepare(common)?;
    let mut inputs = resolve_data(&cfg, args, None)?;
    let waves = load_waves(inputs.waves.as_deref())?;
    let series = load_regions(&inputs)?;
    let mut windows = BTreeMap::new();
    for s in &series {
        windows.insert(
            s.region.clone(),
            windows_for(&s.region, waves.as_ref(), &s.smoothed)?,
        );
    }
    for s in &series {
        out.write_with(&format!("series_{}.csv", slug(&s.region)), |w| {
            Ok(s.write_csv(w)?)
        })
        .runtime()?;
    }
    out.write_json("waves.json", &windows).runtime()?;
    inputs.segmentation = waves.is_none().then(SegmentConfig::default);
    out.write_provenance("ingest", inputs).runtime()?;
    Ok(())
}

#[derive(Debug, Clone, Serialize)]
struct ResolvedFit {
    region: String,
    wave: WaveWindow,
    fixed: ModelParams,
    alpha_1: Option<(f64, f64)>,
    beta_a: Option<(f64, f64)>,
    scale_bounds: (f64, f64),
    t0_bounds: (f64, f64),
    seed: SeedRule,
    aware_seed: f64,
    grid_points: usize,
    step_size: f64,
    profile_threshold: f64,
}

impl ResolvedFit {
    fn new(region: &str, s: &FitSpec) -> Self {
        Self {
            region: region.to_string(),
            wave: s.wave.clone(),
            fixed: s.fixed,
            alpha_1: s.alpha_1,
            beta_a: s.beta_a,
            scale_bounds: s.scale_bounds,
            t0_bounds: s.t0_bounds,
            seed: s.seed,
            aware_seed: s.aware_seed,
            grid_points: s.grid_points,
            step_size: s.step_size,
            profile_threshold: s.profile_threshold,
        }
    }
}

pub fn fit(common: &Common, args: &DataArgs, target: Option<&Path>, only: &[String]) -> CmdResult {
    let (cfg, out) = prepare(common)?;
    let mut inputs = resolve_data(&cfg, args, target)?;
    let waves = load_waves(inputs.waves.as_deref())?;

    // (region, fraction series) pairs to fit
    let targets: Vec<(String, DateSeries)> = match &inputs.target {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .with_context(|| format!("reading {}", path.display()))
                .invalid()?;
            let series = parse_value_csv(text.as_bytes()).invalid()?;
            let region = match inputs.regions.as_slice() {
                [] => "target".to_string(),
                [one] => one.clone(),
                _ => {
                    return Err(Failure::Invalid(anyhow!(
                        "a --target series takes at most one --region label"
                    )))
                }
            };
            vec![(region, series)]
        }
        None => load_regions(&inputs)?
            .into_iter()
            .map(|s| {
                let f = s.fraction();
                (s.region, f)
            })
            .collect(),
    };

    let mut jobs = Vec::new();
    for (region, series) in &targets {
        for w in windows_for(region, waves.as_ref(), series)? {
            if !only.is_empty() && !only.contains(&w.label) {
                continue;
            }
            let mut spec = FitSpec::new(series.clone(), w);
            cfg.apply_fit(&mut spec).invalid()?;
            jobs.push((region.clone(), spec));
        }
    }
    if jobs.is_empty() {
        return Err(Failure::Invalid(anyhow!("no wave selected for fitting")));
    }

    let results: Vec<Result<(WaveFit, Vec<_>), Failure>> = jobs
        .par_iter()
        .map(|(region, spec)| {
            let fit = fit_wave(spec).map_err(fit_failure)?;
            log::info!(
                "{region} {}: alpha_1 = {:.4}, beta_a = {:.4}, sse = {:.3e}",
                fit.label,
                fit.alpha_1,
                fit.beta_a,
                fit.sse
            );
            let curve = fit_curve(spec, &fit).map_err(fit_failure)?;
            Ok((fit, curve))
        })
        .collect();

    let mut all: BTreeMap<String, Vec<WaveFit>> = BTreeMap::new();
    for ((region, _), result) in jobs.iter().zip(results) {
        let (fit, curve) = result?;
        let stem = format!("{}_{}", slug(region), slug(&fit.label));
        out.write_json(&format!("fit_{stem}.json"), &fit)
            .runtime()?;
        out.write_with(&format!("curve_{stem}.csv"), |w| {
            Ok(write_fit_curve(&curve, w)?)
        })
        .runtime()?;
        all.entry(region.clone()).or_default().push(fit);
    }
    out.write_json("fits.json", &all).runtime()?;

    #[derive(Serialize)]
    struct FitRun {
        inputs: DataInputs,
        fits: Vec<ResolvedFit>,
    }
    inputs.segmentation = waves.is_none().then(SegmentConfig::default);
    let fits = jobs.iter().map(|(r, s)| ResolvedFit::new(r, s)).collect();
    out.write_provenance("fit", FitRun { inputs, fits })
        .runtime()?;
    Ok(())
}

/// region,value CSV; the header row is skipped.
fn read_region_values(path: &Path) -> anyhow::Result<BTreeMap<String, f64>> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .with_context(|| format!("reading {}", path.display()))?;
    let mut map = BTreeMap::new();
    for (k, rec) in reader.records().enumerate() {
        let rec = rec?;
        let (Some(region), Some(value)) = (rec.get(0), rec.get(1)) else {
            anyhow::bail!("{} row {}: expected region,value", path.display(), k + 2);
        };
        let v: f64 = value
            .parse()
            .with_context(|| format!("{} row {}: bad value '{value}'", path.display(), k + 2))?;
        map.insert(region.to_string(), v);
    }
    Ok(map)
}

pub fn table(
    common: &Common,
    fit_files: &[PathBuf],
    rankings: Option<&Path>,
    extras: &[String],
) -> CmdResult {
    let (_, out) = prepare(common)?;
    require_existing(fit_files.iter().map(PathBuf::as_path).chain(rankings)).invalid()?;
    let mut fits: BTreeMap<String, Vec<WaveFit>> = BTreeMap::new();
    for path in fit_files {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading {}", path.display()))
            .invalid()?;
        let part: BTreeMap<String, Vec<WaveFit>> = serde_json::from_str(&text)
            .with_context(|| format!("parsing {}", path.display()))
            .invalid()?;
        for (region, waves) in part {
            if fits.insert(region.clone(), waves).is_some() {
                return Err(Failure::Invalid(anyhow!(
                    "region {region} appears in more than one fits file"
                )));
            }
        }
    }
    let ranking_map = rankings.map(read_region_values).transpose().invalid()?;
    let mut extra_maps = BTreeMap::new();
    let mut extra_paths = BTreeMap::new();
    for e in extras {
        let (name, path) = e
            .split_once('=')
            .ok_or_else(|| Failure::Invalid(anyhow!("--extra expects NAME=FILE, got '{e}'")))?;
        let path = Path::new(path);
        require_existing([path]).invalid()?;
        extra_maps.insert(name.to_string(), read_region_values(path).invalid()?);
        extra_paths.insert(name.to_string(), path.to_path_buf());
    }
    let table = build_param_table(&fits, ranking_map.as_ref(), &extra_maps);
    out.write_with("parameters.csv", |w| Ok(table.write_csv(w)?))
        .runtime()?;

    #[derive(Serialize)]
    struct TableRun {
        fits: Vec<PathBuf>,
        rankings: Option<PathBuf>,
        extras: BTreeMap<String, PathBuf>,
    }
    let run = TableRun {
        fits: fit_files.to_vec(),
        rankings: rankings.map(Path::to_path_buf),
        extras: extra_paths,
    };
    out.write_provenance("table", run).runtime()?;
    Ok(())
}

pub fn correlate(common: &Common, table_path: &Path, pairs: &[String]) -> CmdResult {
    let (_, out) = prepare(common)?;
    require_existing([table_path]).invalid()?;
    let file = std::fs::File::open(table_path)
        .with_context(|| format!("reading {}", table_path.display()))
        .invalid()?;
    let table = ParamTable::read_csv(file).invalid()?;
    let pairs: Vec<(String, String)> = if pairs.is_empty() {
        default_pairs(&table)
    } else {
        pairs
            .iter()
            .map(|p| {
                p.split_once(':')
                    .map(|(a, b)| (a.trim().to_string(), b.trim().to_string()))
                    .ok_or_else(|| Failure::Invalid(anyhow!("--pair expects X:Y, got '{p}'")))
            })
            .collect::<Result<_, _>>()?
    };
    let report = correlate_table(&table, &pairs).map_err(fit_failure)?;
    out.write_with("correlations.csv", |w| Ok(write_correlations(&report, w)?))
        .runtime()?;
    out.write_json("correlations.json", &report).runtime()?;

    #[derive(Serialize)]
    struct CorrelateRun {
        table: PathBuf,
        pairs: Vec<(String, String)>,
    }
    out.write_provenance(
        "correlate",
        CorrelateRun {
            table: table_path.to_path_buf(),
            pairs,
        },
    )
    .runtime()?;
    Ok(())
}
