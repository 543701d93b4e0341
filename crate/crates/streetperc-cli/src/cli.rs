//! Argument parsing and config-file merging.
//!
//! Parameters come in either coordinate system: dimensionless (`--p --U
//! --H`) or original (`--p --lambda --r --lambdaS`); mixing the two is a
//! configuration error. A flat `key = value` config file can hold any long
//! flag; explicit flags win. All randomness flows from `--seed`; omitting
//! it draws a seed from entropy and records it in the manifest.

use std::collections::BTreeMap;
use std::path::PathBuf;

use anyhow::{anyhow, Context, Result};
use clap::{Args, Parser, Subcommand};

use streetperc::montecarlo::{
    from_dimensionless, Axis, ConnectionRange, DimensionlessParams, ExperimentConfig, ModelParams,
};

pub const EXIT_CONFIG: i32 = 1;
pub const EXIT_RUNTIME: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "streetperc", version, about = "Percolation experiments on Poisson-Voronoi street systems")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Estimate a crossing probability at one parameter point.
    Estimate(ExperimentArgs),
    /// Estimate along a grid of one parameter axis.
    Sweep(SweepArgs),
    /// Bisect one parameter axis for the 50%-crossing point.
    Critical(CriticalArgs),
    /// Coarse-graining diagnostics: bad-site frequency or a site-grid dump.
    Diagnose(DiagnoseArgs),
    /// Tessellation statistics (street intensity, mean street length).
    Stats(StatsArgs),
    /// Export a JSON-lines result file to CSV.
    Export(ExportArgs),
}

#[derive(Debug, Args, Clone)]
pub struct ParamArgs {
    /// Relay probability on crossroads [default: 1].
    #[arg(long)]
    pub p: Option<f64>,
    /// Mean users per typical street (dimensionless system).
    #[arg(long = "U")]
    pub u: Option<f64>,
    /// Mean hops per typical street; 0 means infinite range (dimensionless system).
    #[arg(long = "H")]
    pub h: Option<f64>,
    /// User intensity per unit street length (original system).
    #[arg(long)]
    pub lambda: Option<f64>,
    /// Connectivity range; omit for infinite range (original system).
    #[arg(long)]
    pub r: Option<f64>,
    /// Seed intensity of the tessellation (original system) [default: 1].
    #[arg(long = "lambdaS")]
    pub lambda_s: Option<f64>,
}

#[derive(Debug, Args, Clone)]
pub struct RunArgs {
    /// Expected number of Voronoi cells in the window [default: 2000].
    #[arg(long)]
    pub cells: Option<f64>,
    /// Trials per estimate [default: 200].
    #[arg(long)]
    pub trials: Option<u64>,
    /// Master seed; omitted: drawn from entropy and recorded.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Contact band of the crossing criterion [default: connectivity range].
    #[arg(long)]
    pub band: Option<f64>,
    /// Cap the worker thread count.
    #[arg(long)]
    pub threads: Option<usize>,
    /// Flat key = value config file; explicit flags override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output path for JSON-lines records; "-" is stdout.
    #[arg(long, default_value = "-")]
    pub out: String,
}

#[derive(Debug, Args)]
pub struct ExperimentArgs {
    #[command(flatten)]
    pub params: ParamArgs,
    #[command(flatten)]
    pub run: RunArgs,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    /// Axis to sweep: p, U, H, lambda or r.
    #[arg(long)]
    pub axis: Option<String>,
    /// Comma-separated ascending grid values.
    #[arg(long)]
    pub grid: Option<String>,
    /// Reuse one realization per trial across the grid (variance reduction).
    #[arg(long)]
    pub coupled: bool,
    #[command(flatten)]
    pub params: ParamArgs,
    #[command(flatten)]
    pub run: RunArgs,
}

#[derive(Debug, Args)]
pub struct CriticalArgs {
    /// Axis to bisect: p, U, H, lambda or r.
    #[arg(long)]
    pub axis: Option<String>,
    /// Bracket "low,high" that must straddle the target.
    #[arg(long)]
    pub bracket: Option<String>,
    /// Crossing probability defining the threshold [default: 0.5].
    #[arg(long)]
    pub target: Option<f64>,
    /// Stop when the bracket is narrower than this [default: 0.01].
    #[arg(long)]
    pub tol: Option<f64>,
    #[command(flatten)]
    pub params: ParamArgs,
    #[command(flatten)]
    pub run: RunArgs,
}

#[derive(Debug, Args)]
pub struct DiagnoseArgs {
    /// Goodness mode: subcritical, supercritical or hard_geometric.
    #[arg(long)]
    pub mode: Option<String>,
    /// Site scale (cube side of the renormalized lattice).
    #[arg(long)]
    pub n: Option<f64>,
    /// Dump the full site grid of one realization instead of the origin
    /// bad-site frequency.
    #[arg(long)]
    pub sites: bool,
    #[command(flatten)]
    pub params: ParamArgs,
    #[command(flatten)]
    pub run: RunArgs,
}

#[derive(Debug, Args)]
pub struct StatsArgs {
    /// Seed intensity [default: 1].
    #[arg(long = "lambdaS")]
    pub lambda_s: Option<f64>,
    /// Number of realizations [default: 20].
    #[arg(long)]
    pub reps: Option<u64>,
    /// Minus-sampling margin [default: 5].
    #[arg(long)]
    pub margin: Option<f64>,
    #[command(flatten)]
    pub run: RunArgs,
}

#[derive(Debug, Args)]
pub struct ExportArgs {
    /// JSON-lines result file to read.
    #[arg(long)]
    pub results: PathBuf,
    /// CSV output path.
    #[arg(long)]
    pub out: PathBuf,
}

pub fn main_with_exit_code() -> i32 {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // Usage and version requests are successes; bad flags are
            // configuration errors.
            let code = if e.use_stderr() { EXIT_CONFIG } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match crate::run::dispatch(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<ConfigError>().is_some() {
                EXIT_CONFIG
            } else {
                EXIT_RUNTIME
            }
        }
    }
}

/// Marker for errors that should exit with the configuration code.
#[derive(Debug)]
pub struct ConfigError(pub String);

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ConfigError {}

pub fn config_err(msg: impl Into<String>) -> anyhow::Error {
    anyhow::Error::new(ConfigError(msg.into()))
}

/// Flat `key = value` file, `#` comments allowed.
pub fn load_config_file(path: &PathBuf) -> Result<BTreeMap<String, String>> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("cannot read config file {}", path.display()))?;
    let mut map = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            return Err(config_err(format!(
                "config line {}: expected 'key = value'",
                i + 1
            )));
        };
        map.insert(k.trim().to_string(), v.trim().to_string());
    }
    Ok(map)
}

fn merged<T: std::str::FromStr>(
    flag: Option<T>,
    file: &BTreeMap<String, String>,
    key: &str,
) -> Result<Option<T>> {
    if flag.is_some() {
        return Ok(flag);
    }
    match file.get(key) {
        None => Ok(None),
        Some(raw) => raw
            .parse()
            .map(Some)
            .map_err(|_| config_err(format!("config key '{key}': cannot parse '{raw}'"))),
    }
}

/// Everything an experiment-shaped command resolves to.
pub struct ResolvedExperiment {
    pub config: ExperimentConfig,
    /// Effective flat configuration for the manifest; reruns from these
    /// values are byte-identical.
    pub echo: BTreeMap<String, String>,
}

pub fn resolve_experiment(params: &ParamArgs, run: &RunArgs) -> Result<ResolvedExperiment> {
    let file = match &run.config {
        Some(path) => load_config_file(path)?,
        None => BTreeMap::new(),
    };

    let p = merged(params.p, &file, "p")?;
    let u = merged(params.u, &file, "U")?;
    let h = merged(params.h, &file, "H")?;
    let lambda = merged(params.lambda, &file, "lambda")?;
    let r = merged(params.r, &file, "r")?;
    let lambda_s = merged(params.lambda_s, &file, "lambdaS")?;

    let dimensionless = u.is_some() || h.is_some();
    let original = lambda.is_some() || r.is_some() || lambda_s.is_some();
    if dimensionless && original {
        return Err(config_err(
            "mixing dimensionless (--U/--H) and original (--lambda/--r/--lambdaS) parameters",
        ));
    }

    let p = p.unwrap_or(1.0);
    let model: ModelParams = if dimensionless {
        let d = DimensionlessParams {
            p,
            u: u.unwrap_or(0.0),
            h: h.unwrap_or(0.0),
        };
        from_dimensionless(&d, 1.0).map_err(|e| config_err(e.to_string()))?
    } else {
        ModelParams {
            lambda_s: lambda_s.unwrap_or(1.0),
            p,
            lambda: lambda.unwrap_or(0.0),
            range: match r {
                Some(r) => ConnectionRange::Finite(r),
                None => ConnectionRange::Infinite,
            },
        }
    };

    let cells = merged(run.cells, &file, "cells")?.unwrap_or(2000.0);
    let trials = merged(run.trials, &file, "trials")?.unwrap_or(200);
    let band = merged(run.band, &file, "band")?;
    let seed = match merged(run.seed, &file, "seed")? {
        Some(s) => s,
        None => rand::random::<u64>(),
    };

    let config = ExperimentConfig {
        params: model,
        window_cells: cells,
        band,
        trials,
        master_seed: seed,
    };
    config.validate().map_err(|e| config_err(e.to_string()))?;

    // Echo in original coordinates: they determine the run completely.
    let mut echo = BTreeMap::new();
    echo.insert("p".into(), fmt_f64(model.p));
    echo.insert("lambda".into(), fmt_f64(model.lambda));
    echo.insert("lambdaS".into(), fmt_f64(model.lambda_s));
    if let ConnectionRange::Finite(rv) = model.range {
        echo.insert("r".into(), fmt_f64(rv));
    }
    echo.insert("cells".into(), fmt_f64(cells));
    echo.insert("trials".into(), trials.to_string());
    echo.insert("seed".into(), seed.to_string());
    if let Some(b) = band {
        echo.insert("band".into(), fmt_f64(b));
    }
    Ok(ResolvedExperiment { config, echo })
}

/// Shortest round-trip decimal form.
pub fn fmt_f64(x: f64) -> String {
    format!("{x}")
}

pub fn parse_axis(raw: &Option<String>, file_key: Option<&str>) -> Result<Axis> {
    let s = raw
        .clone()
        .or_else(|| file_key.map(str::to_string))
        .ok_or_else(|| config_err("--axis is required"))?;
    Axis::parse(&s).ok_or_else(|| {
        config_err(format!("unknown axis '{s}': expected p, U, H, lambda or r"))
    })
}

pub fn parse_grid(raw: &str) -> Result<Vec<f64>> {
    let grid: Result<Vec<f64>, _> = raw.split(',').map(|t| t.trim().parse::<f64>()).collect();
    grid.map_err(|_| config_err(format!("cannot parse grid '{raw}'")))
}

pub fn parse_bracket(raw: &str) -> Result<(f64, f64)> {
    let parts: Vec<&str> = raw.split(',').map(str::trim).collect();
    if parts.len() != 2 {
        return Err(config_err("bracket must be 'low,high'"));
    }
    let lo = parts[0]
        .parse()
        .map_err(|_| config_err(format!("bad bracket value '{}'", parts[0])))?;
    let hi = parts[1]
        .parse()
        .map_err(|_| config_err(format!("bad bracket value '{}'", parts[1])))?;
    Ok((lo, hi))
}

pub fn init_threads(run: &RunArgs) -> Result<()> {
    let file = match &run.config {
        Some(path) => load_config_file(path)?,
        None => BTreeMap::new(),
    };
    if let Some(n) = merged(run.threads, &file, "threads")? {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| anyhow!("thread pool: {e}"))?;
    }
    Ok(())
}
