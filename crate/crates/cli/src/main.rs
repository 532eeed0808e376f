use std::path::PathBuf;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};

mod commands;
mod config;
mod output;

/// Coupled awareness-epidemic model: simulations, parameter sweeps,
/// reproduction numbers, case-data ingestion, wave fitting and
/// cross-region correlation tables.
///
/// Exit status: 0 on success, 1 on usage or validation errors, 2 on runtime
/// failures. INFODEMIC_THREADS caps the number of worker threads.
#[derive(Debug, Parser)]
#[command(name = "infodemic", version)]
struct Cli {
    /// More log output (-v info, -vv debug); RUST_LOG overrides.
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
pub struct Common {
    /// TOML run configuration.
    #[arg(short, long)]
    pub config: Option<PathBuf>,
    /// Output directory (overrides `output_dir` in the config; default `out`).
    #[arg(short, long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Integrate one trajectory; writes trajectory.csv and summary.json.
    Simulate {
        #[command(flatten)]
        common: Common,
    },
    /// Two-parameter grid sweep; writes heatmap.csv and sweep_spec.json.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// Built-in panel preset, e.g. fig2a, fig4c, fig5e, fig6.
        #[arg(long)]
        panel: Option<String>,
        /// Grid points per axis (default 41).
        #[arg(long)]
        points: Option<usize>,
        /// Comma-separated subset of r_star,i_m,t_m,decomposition,pearson.
        #[arg(long)]
        observables: Option<String>,
    },
    /// Next-generation matrices and reproduction numbers; writes ngm.json
    /// and rt_eff.csv.
    Ngm {
        #[command(flatten)]
        common: Common,
    },
    /// Daily, smoothed and population-normalised case series per region,
    /// plus wave windows; writes series_<region>.csv and waves.json.
    Ingest {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        data: commands::DataArgs,
    },
    /// Fit alpha_1 and beta_a to each wave; writes fits.json,
    /// fit_<region>_<wave>.json and curve_<region>_<wave>.csv.
    Fit {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        data: commands::DataArgs,
        /// Date,value CSV of daily fractions to fit instead of case data.
        #[arg(long)]
        target: Option<PathBuf>,
        /// Only fit waves with these labels (p1, p2, ...).
        #[arg(long = "wave")]
        waves_only: Vec<String>,
    },
    /// Assemble the cross-region parameter table; writes parameters.csv.
    Table {
        #[command(flatten)]
        common: Common,
        /// fits.json files produced by `fit`.
        #[arg(long = "fits", required = true)]
        fits: Vec<PathBuf>,
        /// region,value CSV of activity rankings.
        #[arg(long)]
        rankings: Option<PathBuf>,
        /// Extra region index as NAME=region,value CSV.
        #[arg(long = "extra")]
        extras: Vec<String>,
    },
    /// Pearson correlations between table columns; writes correlations.csv
    /// and correlations.json.
    Correlate {
        #[command(flatten)]
        common: Common,
        /// Parameter table CSV.
        #[arg(long)]
        table: PathBuf,
        /// Column pair as X:Y; repeatable. Defaults to the standard pairs.
        #[arg(long = "pair")]
        pairs: Vec<String>,
    },
}

fn init_logging(verbose: u8) {
    let level = match verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();
}

fn init_threads() -> Result<(), commands::Failure> {
    let Ok(v) = std::env::var("INFODEMIC_THREADS") else {
        return Ok(());
    };
    let n: usize = v.trim().parse().ok().filter(|&n| n > 0).ok_or_else(|| {
        commands::Failure::Invalid(anyhow::anyhow!(
            "INFODEMIC_THREADS must be a positive integer, got '{v}'"
        ))
    })?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| commands::Failure::Runtime(e.into()))
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(1),
            };
        }
    };
    init_logging(cli.verbose);
    let result = init_threads().and_then(|()| match cli.command {
        Command::Simulate { common } => commands::simulate(&common),
        Command::Sweep {
            common,
            panel,
            points,
            observables,
        } => commands::sweep(&common, panel.as_deref(), points, observables.as_deref()),
        Command::Ngm { common } => commands::ngm(&common),
        Command::Ingest { common, data } => commands::ingest(&common, &data),
        Command::Fit {
            common,
            data,
            target,
            waves_only,
        } => commands::fit(&common, &data, target.as_deref(), &waves_only),
        Command::Table {
            common,
            fits,
            rankings,
            extras,
        } => commands::table(&common, &fits, rankings.as_deref(), &extras),
        Command::Correlate {
            common,
            table,
            pairs,
        } => commands::correlate(&common, &table, &pairs),
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(commands::Failure::Invalid(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
        Err(commands::Failure::Runtime(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
