//! Command execution: run experiments, stream JSON-lines records, export CSV.

use std::collections::BTreeMap;
use std::io::Write;

use anyhow::{Context, Result};
use serde_json::{json, Value};

use streetperc::coarsegrain::{bad_site_frequency, classify_sites, GoodnessMode, SiteFlag};
use streetperc::montecarlo::{
    coupled_sweep, crossing_probability, find_critical, sweep, CriticalSearch, EstimateResult,
};
use streetperc::processes::{sample_relays, sample_users, NodeSet};
use streetperc::pvt::{build_tessellation, compute_stats, sample_seeds};
use streetperc::{cube, Point, RngStream};

use crate::cli::*;

/// Append-only JSON-lines sink: stdout or a file.
struct RecordSink {
    out: Box<dyn Write>,
    path: String,
}

impl RecordSink {
    fn open(path: &str) -> Result<RecordSink> {
        let out: Box<dyn Write> = if path == "-" {
            Box::new(std::io::stdout().lock())
        } else {
            let file = std::fs::File::create(path)
                .with_context(|| format!("cannot write output file {path}"))?;
            Box::new(std::io::BufWriter::new(file))
        };
        Ok(RecordSink {
            out,
            path: path.to_string(),
        })
    }

    fn manifest(&mut self, command: &str, echo: &BTreeMap<String, String>) -> Result<()> {
        let rec = json!({
            "record": "manifest",
            "command": command,
            "tool_version": env!("CARGO_PKG_VERSION"),
            "created_at": chrono::Utc::now().to_rfc3339(),
            "output_path": self.path,
            "config": echo,
        });
        self.line(&rec.to_string())
    }

    fn line(&mut self, s: &str) -> Result<()> {
        writeln!(self.out, "{s}").context("write record")?;
        Ok(())
    }

    fn finish(mut self) -> Result<()> {
        self.out.flush().context("flush records")?;
        Ok(())
    }
}

fn tagged_estimate(est: &EstimateResult) -> Result<String> {
    // Estimate records carry a record tag alongside the flattened fields.
    let mut v: Value = serde_json::from_str(&est.to_json_line())?;
    v.as_object_mut()
        .expect("estimate record is an object")
        .insert("record".into(), Value::String("estimate".into()));
    Ok(v.to_string())
}

pub fn dispatch(command: Command) -> Result<()> {
    match command {
        Command::Estimate(args) => estimate(args),
        Command::Sweep(args) => run_sweep(args),
        Command::Critical(args) => critical(args),
        Command::Diagnose(args) => diagnose(args),
        Command::Stats(args) => stats(args),
        Command::Export(args) => export(args),
    }
}

fn estimate(args: ExperimentArgs) -> Result<()> {
    init_threads(&args.run)?;
    let resolved = resolve_experiment(&args.params, &args.run)?;
    let mut sink = RecordSink::open(&args.run.out)?;
    sink.manifest("estimate", &resolved.echo)?;
    let est = crossing_probability(&resolved.config)?;
    sink.line(&tagged_estimate(&est)?)?;
    sink.finish()?;
    eprintln!(
        "p_hat {:.4} CI [{:.4}, {:.4}] from {} trials in {:.1}s",
        est.p_hat, est.ci_low, est.ci_high, est.trials, est.wall_time_secs
    );
    Ok(())
}

fn run_sweep(args: SweepArgs) -> Result<()> {
    init_threads(&args.run)?;
    let resolved = resolve_experiment(&args.params, &args.run)?;
    let file = match &args.run.config {
        Some(p) => load_config_file(p)?,
        None => BTreeMap::new(),
    };
    let axis = parse_axis(&args.axis, file.get("axis").map(String::as_str))?;
    let grid_raw = args
        .grid
        .clone()
        .or_else(|| file.get("grid").cloned())
        .ok_or_else(|| config_err("--grid is required"))?;
    let grid = parse_grid(&grid_raw)?;
    let coupled = args.coupled || file.get("coupled").map(String::as_str) == Some("true");

    let mut echo = resolved.echo.clone();
    echo.insert("axis".into(), axis.name().into());
    echo.insert("grid".into(), grid_raw.clone());
    echo.insert("coupled".into(), coupled.to_string());

    let mut sink = RecordSink::open(&args.run.out)?;
    sink.manifest("sweep", &echo)?;
    let results = if coupled {
        coupled_sweep(axis, &grid, &resolved.config)?
    } else {
        sweep(axis, &grid, &resolved.config)?
    };
    for est in &results {
        sink.line(&tagged_estimate(est)?)?;
    }
    sink.finish()?;
    eprintln!(
        "swept {} over {} points: p_hat {} .. {}",
        axis.name(),
        results.len(),
        results.first().map(|e| e.p_hat).unwrap_or(f64::NAN),
        results.last().map(|e| e.p_hat).unwrap_or(f64::NAN),
    );
    Ok(())
}

fn critical(args: CriticalArgs) -> Result<()> {
    init_threads(&args.run)?;
    let resolved = resolve_experiment(&args.params, &args.run)?;
    let file = match &args.run.config {
        Some(p) => load_config_file(p)?,
        None => BTreeMap::new(),
    };
    let axis = parse_axis(&args.axis, file.get("axis").map(String::as_str))?;
    let bracket_raw = args
        .bracket
        .clone()
        .or_else(|| file.get("bracket").cloned())
        .ok_or_else(|| config_err("--bracket is required"))?;
    let bracket = parse_bracket(&bracket_raw)?;
    let mut opts = CriticalSearch::default();
    if let Some(t) = args.target.or_else(|| file.get("target").and_then(|s| s.parse().ok())) {
        opts.target = t;
    }
    if let Some(t) = args.tol.or_else(|| file.get("tol").and_then(|s| s.parse().ok())) {
        opts.tolerance = t;
    }

    let mut echo = resolved.echo.clone();
    echo.insert("axis".into(), axis.name().into());
    echo.insert("bracket".into(), bracket_raw.clone());
    echo.insert("target".into(), fmt_f64(opts.target));
    echo.insert("tol".into(), fmt_f64(opts.tolerance));

    let mut sink = RecordSink::open(&args.run.out)?;
    sink.manifest("critical", &echo)?;
    let crit = find_critical(axis, bracket, &resolved.config, opts)?;
    let mut rec: Value = serde_json::from_str(&crit.to_json_line())?;
    rec.as_object_mut()
        .expect("critical record is an object")
        .insert("record".into(), Value::String("critical".into()));
    sink.line(&rec.to_string())?;
    sink.finish()?;
    eprintln!(
        "critical {} = {:.4} in bracket [{:.4}, {:.4}] ({} trials/point)",
        axis.name(),
        crit.value,
        crit.bracket.0,
        crit.bracket.1,
        crit.trials_per_point
    );
    Ok(())
}

fn diagnose(args: DiagnoseArgs) -> Result<()> {
    init_threads(&args.run)?;
    let resolved = resolve_experiment(&args.params, &args.run)?;
    let file = match &args.run.config {
        Some(p) => load_config_file(p)?,
        None => BTreeMap::new(),
    };
    let mode_raw = args
        .mode
        .clone()
        .or_else(|| file.get("mode").cloned())
        .ok_or_else(|| config_err("--mode is required"))?;
    let mode = match mode_raw.as_str() {
        "subcritical" => GoodnessMode::Subcritical,
        "supercritical" => GoodnessMode::Supercritical,
        "hard_geometric" | "hard" => GoodnessMode::HardGeometric,
        other => {
            return Err(config_err(format!(
                "unknown mode '{other}': expected subcritical, supercritical or hard_geometric"
            )))
        }
    };
    let n = args
        .n
        .or_else(|| file.get("n").and_then(|s| s.parse().ok()))
        .ok_or_else(|| config_err("--n is required"))?;

    let mut echo = resolved.echo.clone();
    echo.insert("mode".into(), mode_raw.clone());
    echo.insert("n".into(), fmt_f64(n));
    echo.insert("sites".into(), args.sites.to_string());

    let mut sink = RecordSink::open(&args.run.out)?;
    sink.manifest("diagnose", &echo)?;
    let cfg = &resolved.config;
    if args.sites {
        // One realization on the configured window, full site grid.
        let window = cfg.window()?;
        let mut rng = RngStream::new(cfg.master_seed, 0).rng();
        let seeds = sample_seeds(window, cfg.params.lambda_s, &mut rng)?;
        let t = build_tessellation(seeds)?;
        let users = sample_users(&t, cfg.params.lambda, &mut rng)?;
        let relays = sample_relays(&t, cfg.params.p, &mut rng)?;
        let z = NodeSet::new(&t, users, relays);
        let r = match cfg.params.range {
            streetperc::montecarlo::ConnectionRange::Finite(r) => r,
            streetperc::montecarlo::ConnectionRange::Infinite => {
                return Err(config_err("diagnose requires a finite range (H > 0 or --r)"))
            }
        };
        let grid = classify_sites(&t, &z, n, r, mode)?;
        for line in grid.to_json_lines() {
            sink.line(&line)?;
        }
        sink.finish()?;
        let good = grid.sites.iter().filter(|s| s.flag == SiteFlag::Good).count();
        let bad = grid.sites.iter().filter(|s| s.flag == SiteFlag::Bad).count();
        eprintln!("classified {} sites: {good} good, {bad} bad", grid.sites.len());
    } else {
        let freq = bad_site_frequency(
            &cfg.params,
            mode,
            n,
            cfg.trials,
            RngStream::new(cfg.master_seed, 0),
        )?;
        let rec = json!({
            "record": "bad_site_frequency",
            "mode": mode_raw,
            "n": n,
            "trials": cfg.trials,
            "frequency": freq,
            "p": cfg.params.p,
            "lambda": cfg.params.lambda,
            "lambda_s": cfg.params.lambda_s,
            "master_seed": cfg.master_seed,
        });
        sink.line(&rec.to_string())?;
        sink.finish()?;
        eprintln!("origin bad-site frequency {freq:.4} over {} trials", cfg.trials);
    }
    Ok(())
}

fn stats(args: StatsArgs) -> Result<()> {
    init_threads(&args.run)?;
    let file = match &args.run.config {
        Some(p) => load_config_file(p)?,
        None => BTreeMap::new(),
    };
    let get = |flag: Option<f64>, key: &str, default: f64| -> f64 {
        flag.or_else(|| file.get(key).and_then(|s| s.parse().ok()))
            .unwrap_or(default)
    };
    let lambda_s = get(args.lambda_s, "lambdaS", 1.0);
    let cells = get(args.run.cells, "cells", 1600.0);
    let margin = get(args.margin, "margin", 5.0);
    let reps = args
        .reps
        .or_else(|| file.get("reps").and_then(|s| s.parse().ok()))
        .unwrap_or(20);
    let seed = match args.run.seed.or_else(|| file.get("seed").and_then(|s| s.parse().ok())) {
        Some(s) => s,
        None => rand::random(),
    };

    let mut echo = BTreeMap::new();
    echo.insert("lambdaS".into(), fmt_f64(lambda_s));
    echo.insert("cells".into(), fmt_f64(cells));
    echo.insert("margin".into(), fmt_f64(margin));
    echo.insert("reps".into(), reps.to_string());
    echo.insert("seed".into(), seed.to_string());

    let mut sink = RecordSink::open(&args.run.out)?;
    sink.manifest("stats", &echo)?;

    let side = (cells / lambda_s).sqrt();
    let window = cube(Point::new(0.0, 0.0), side).map_err(|e| config_err(e.to_string()))?;
    let (mut gsum, mut lsum) = (0.0, 0.0);
    for rep in 0..reps {
        let mut rng = RngStream::new(seed, rep).rng();
        let seeds = sample_seeds(window, lambda_s, &mut rng)?;
        let t = build_tessellation(seeds)?;
        let s = compute_stats(&t, margin)?;
        gsum += s.gamma_hat;
        lsum += s.lbar_hat;
        let rec = json!({
            "record": "stats",
            "rep": rep,
            "gamma_hat": s.gamma_hat,
            "lbar_hat": s.lbar_hat,
            "edge_count": s.edge_count,
            "vertex_count": s.vertex_count,
        });
        sink.line(&rec.to_string())?;
    }
    let (gmean, lmean) = (gsum / reps as f64, lsum / reps as f64);
    let rec = json!({
        "record": "stats_summary",
        "reps": reps,
        "gamma_hat_mean": gmean,
        "lbar_hat_mean": lmean,
    });
    sink.line(&rec.to_string())?;
    sink.finish()?;
    eprintln!("gamma_hat {gmean:.4} lbar_hat {lmean:.4} over {reps} realizations");
    Ok(())
}

/// Fixed CSV header for estimate records.
const CSV_HEADER: &str =
    "p,u,h,lambda_s,lambda,r,window_cells,band,trials,master_seed,successes,p_hat,ci_low,ci_high";

/// 17 significant digits: lossless for f64.
fn csv_f64(v: &Value) -> Result<String> {
    match v {
        Value::Null => Ok(String::new()),
        Value::Number(n) => {
            let x = n.as_f64().context("numeric field")?;
            Ok(format!("{x:.16e}"))
        }
        _ => anyhow::bail!("expected number, got {v}"),
    }
}

fn export(args: ExportArgs) -> Result<()> {
    let text = std::fs::read_to_string(&args.results)
        .with_context(|| format!("cannot read results file {}", args.results.display()))?;
    let mut lines = text.lines().enumerate();

    let (_, first) = lines
        .next()
        .ok_or_else(|| anyhow::anyhow!("results file is empty: no manifest"))?;
    let manifest: Value =
        serde_json::from_str(first).context("line 1: manifest is not valid JSON")?;
    if manifest.get("record").and_then(Value::as_str) != Some("manifest") {
        anyhow::bail!("line 1: first record must be the manifest");
    }

    let mut out = String::new();
    out.push_str(CSV_HEADER);
    out.push('\n');
    let mut rows = 0usize;
    for (i, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let rec: Value = serde_json::from_str(line)
            .with_context(|| format!("line {}: malformed record", i + 1))?;
        if rec.get("record").and_then(Value::as_str) != Some("estimate") {
            continue;
        }
        let field = |k: &str| -> Value { rec.get(k).cloned().unwrap_or(Value::Null) };
        let int_field = |k: &str| -> Result<String> {
            rec.get(k)
                .and_then(Value::as_u64)
                .map(|v| v.to_string())
                .with_context(|| format!("line {}: missing integer field '{k}'", i + 1))
        };
        let cols = [
            csv_f64(&field("p"))?,
            csv_f64(&field("u"))?,
            csv_f64(&field("h"))?,
            csv_f64(&field("lambda_s"))?,
            csv_f64(&field("lambda"))?,
            csv_f64(&field("r"))?,
            csv_f64(&field("window_cells"))?,
            csv_f64(&field("band"))?,
            int_field("trials")?,
            int_field("master_seed")?,
            int_field("successes")?,
            csv_f64(&field("p_hat"))?,
            csv_f64(&field("ci_low"))?,
            csv_f64(&field("ci_high"))?,
        ];
        out.push_str(&cols.join(","));
        out.push('\n');
        rows += 1;
    }
    std::fs::write(&args.out, out)
        .with_context(|| format!("cannot write CSV file {}", args.out.display()))?;
    eprintln!("wrote {rows} rows to {}", args.out.display());
    Ok(())
}
