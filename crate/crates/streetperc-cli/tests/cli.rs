//! End-to-end tests of the command-line interface: exit codes, record
//! formats, reproducibility, config precedence, CSV export.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_streetperc"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("spawn streetperc")
}

fn read_lines(path: &Path) -> Vec<String> {
    std::fs::read_to_string(path)
        .expect("read records")
        .lines()
        .map(str::to_string)
        .collect()
}

/// Records after the manifest, which carries a timestamp.
fn body(path: &Path) -> Vec<String> {
    let lines = read_lines(path);
    assert!(
        lines[0].contains("\"record\":\"manifest\""),
        "first record must be the manifest"
    );
    lines[1..].to_vec()
}

fn tmp(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("streetperc-cli-test-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    dir.join(name)
}

#[test]
fn estimate_reruns_byte_identical() {
    let out1 = tmp("est1.jsonl");
    let out2 = tmp("est2.jsonl");
    for out in [&out1, &out2] {
        let st = run(&[
            "estimate", "--p", "0.8", "--U", "10", "--H", "0.5", "--cells", "300", "--trials",
            "50", "--seed", "42", "--out", out.to_str().unwrap(),
        ]);
        assert!(st.status.success(), "{}", String::from_utf8_lossy(&st.stderr));
    }
    assert_eq!(body(&out1), body(&out2));
    assert_eq!(body(&out1).len(), 1);
}

#[test]
fn manifest_alone_reproduces_the_run() {
    let out1 = tmp("mani1.jsonl");
    let st = run(&[
        "estimate", "--p", "0.7", "--lambda", "0.5", "--r", "0.8", "--lambdaS", "1.2", "--cells",
        "250", "--trials", "40", "--seed", "11", "--out", out1.to_str().unwrap(),
    ]);
    assert!(st.status.success());

    // Rebuild the command line from the manifest's config echo only.
    let manifest: serde_json::Value =
        serde_json::from_str(&read_lines(&out1)[0]).expect("manifest json");
    let config = manifest["config"].as_object().expect("config map");
    let out2 = tmp("mani2.jsonl");
    let mut args: Vec<String> = vec!["estimate".into()];
    for (k, v) in config {
        args.push(format!("--{k}"));
        args.push(v.as_str().unwrap().to_string());
    }
    args.push("--out".into());
    args.push(out2.to_str().unwrap().into());
    let st = bin().args(&args).output().unwrap();
    assert!(st.status.success(), "{}", String::from_utf8_lossy(&st.stderr));
    assert_eq!(body(&out1), body(&out2), "manifest rerun must reproduce records");
}

#[test]
fn omitted_seed_is_drawn_and_recorded() {
    let out1 = tmp("seed1.jsonl");
    let st = run(&[
        "estimate", "--p", "0.6", "--cells", "200", "--trials", "20", "--out",
        out1.to_str().unwrap(),
    ]);
    assert!(st.status.success());
    let manifest: serde_json::Value = serde_json::from_str(&read_lines(&out1)[0]).unwrap();
    let seed = manifest["config"]["seed"].as_str().expect("seed recorded");
    // Re-running with the recorded seed reproduces the body.
    let out2 = tmp("seed2.jsonl");
    let st = run(&[
        "estimate", "--p", "0.6", "--cells", "200", "--trials", "20", "--seed", seed, "--out",
        out2.to_str().unwrap(),
    ]);
    assert!(st.status.success());
    assert_eq!(body(&out1), body(&out2));
}

#[test]
fn unknown_flags_exit_one() {
    let st = run(&["estimate", "--does-not-exist", "1"]);
    assert_eq!(st.status.code(), Some(1));
    let stderr = String::from_utf8_lossy(&st.stderr);
    assert!(stderr.to_lowercase().contains("usage") || stderr.contains("--help"), "{stderr}");
}

#[test]
fn mixed_coordinate_systems_exit_one() {
    let st = run(&["estimate", "--p", "0.5", "--U", "2", "--lambda", "3", "--trials", "5"]);
    assert_eq!(st.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&st.stderr).contains("mixing"));
}

#[test]
fn invalid_parameter_exits_one() {
    let st = run(&["estimate", "--p", "1.5", "--trials", "5", "--cells", "100"]);
    assert_eq!(st.status.code(), Some(1));
}

#[test]
fn unwritable_output_exits_two() {
    let st = run(&[
        "estimate", "--p", "0.5", "--cells", "100", "--trials", "5", "--seed", "1", "--out",
        "/nonexistent-dir/records.jsonl",
    ]);
    assert_eq!(st.status.code(), Some(2));
}

#[test]
fn non_straddling_bracket_exits_two() {
    let st = run(&[
        "critical", "--axis", "U", "--p", "0.95", "--H", "0.3", "--bracket", "0,5", "--cells",
        "300", "--trials", "40", "--seed", "17", "--out", tmp("crit-fail.jsonl").to_str().unwrap(),
    ]);
    assert_eq!(st.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&st.stderr).contains("straddle"));
}

#[test]
fn config_file_flags_take_precedence() {
    let cfg = tmp("run.conf");
    std::fs::write(
        &cfg,
        "p = 0.9\ncells = 250\ntrials = 30\nseed = 5\n# comment\nU = 0\nH = 0\n",
    )
    .unwrap();
    let out1 = tmp("cfg1.jsonl");
    let st = run(&[
        "estimate", "--config", cfg.to_str().unwrap(), "--out", out1.to_str().unwrap(),
    ]);
    assert!(st.status.success(), "{}", String::from_utf8_lossy(&st.stderr));
    let manifest: serde_json::Value = serde_json::from_str(&read_lines(&out1)[0]).unwrap();
    assert_eq!(manifest["config"]["p"], "0.9");

    // The explicit flag overrides the file value.
    let out2 = tmp("cfg2.jsonl");
    let st = run(&[
        "estimate", "--config", cfg.to_str().unwrap(), "--p", "0.4", "--out",
        out2.to_str().unwrap(),
    ]);
    assert!(st.status.success());
    let manifest: serde_json::Value = serde_json::from_str(&read_lines(&out2)[0]).unwrap();
    assert_eq!(manifest["config"]["p"], "0.4");
}

#[test]
fn sweep_records_in_grid_order_and_export_round_trips() {
    let out = tmp("sweep.jsonl");
    let st = run(&[
        "sweep", "--axis", "p", "--grid", "0.5,0.7,0.9", "--H", "0", "--U", "0", "--cells",
        "250", "--trials", "30", "--seed", "3", "--out", out.to_str().unwrap(),
    ]);
    assert!(st.status.success());
    let records = body(&out);
    assert_eq!(records.len(), 3);
    let ps: Vec<f64> = records
        .iter()
        .map(|l| serde_json::from_str::<serde_json::Value>(l).unwrap()["p"].as_f64().unwrap())
        .collect();
    assert_eq!(ps, vec![0.5, 0.7, 0.9]);

    let csv = tmp("sweep.csv");
    let st = run(&[
        "export", "--results", out.to_str().unwrap(), "--out", csv.to_str().unwrap(),
    ]);
    assert!(st.status.success());
    let csv_text = std::fs::read_to_string(&csv).unwrap();
    let mut lines = csv_text.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    for (row, record) in lines.zip(&records) {
        let rec: serde_json::Value = serde_json::from_str(record).unwrap();
        for (name, cell) in header.iter().zip(row.split(',')) {
            match &rec[*name] {
                serde_json::Value::Null => assert!(cell.is_empty()),
                serde_json::Value::Number(n) => {
                    // 17 significant digits round-trip f64 exactly.
                    let parsed: f64 = cell.parse().unwrap();
                    assert_eq!(parsed, n.as_f64().unwrap(), "field {name}");
                }
                other => panic!("unexpected field type {other:?}"),
            }
        }
    }
}

#[test]
fn coupled_sweep_is_exactly_monotone() {
    // Coupled sweeps share one realization per trial, so the estimates
    // themselves are nondecreasing along p, not just within noise.
    let out = tmp("coupled.jsonl");
    let st = run(&[
        "sweep", "--axis", "p", "--grid", "0.55,0.65,0.75,0.85", "--H", "0", "--U", "0",
        "--coupled", "--cells", "400", "--trials", "60", "--seed", "21", "--out",
        out.to_str().unwrap(),
    ]);
    assert!(st.status.success(), "{}", String::from_utf8_lossy(&st.stderr));
    let p_hats: Vec<f64> = body(&out)
        .iter()
        .map(|l| serde_json::from_str::<serde_json::Value>(l).unwrap()["p_hat"].as_f64().unwrap())
        .collect();
    assert_eq!(p_hats.len(), 4);
    for w in p_hats.windows(2) {
        assert!(w[1] >= w[0], "coupled estimates fell: {p_hats:?}");
    }
}

#[test]
fn export_of_manifest_only_file_yields_header() {
    let out = tmp("empty.jsonl");
    // A stats run with zero estimate records still has a manifest.
    let st = run(&[
        "stats", "--cells", "150", "--reps", "2", "--margin", "2", "--seed", "8", "--out",
        out.to_str().unwrap(),
    ]);
    assert!(st.status.success());
    let csv = tmp("empty.csv");
    let st = run(&[
        "export", "--results", out.to_str().unwrap(), "--out", csv.to_str().unwrap(),
    ]);
    assert!(st.status.success());
    let text = std::fs::read_to_string(&csv).unwrap();
    let mut lines = text.lines();
    assert!(lines.next().unwrap().starts_with("p,u,h,"));
    assert_eq!(lines.count(), 0, "no estimate records, no rows");
}

#[test]
fn export_reports_malformed_line_number() {
    let path = tmp("broken.jsonl");
    std::fs::write(
        &path,
        "{\"record\":\"manifest\",\"config\":{}}\n{\"record\":\"estimate\"\n",
    )
    .unwrap();
    let st = run(&[
        "export", "--results", path.to_str().unwrap(), "--out", tmp("broken.csv").to_str().unwrap(),
    ]);
    assert_eq!(st.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&st.stderr).contains("line 2"));
}

#[test]
fn stats_reproduces_closed_form_values() {
    let out = tmp("stats-values.jsonl");
    let st = run(&[
        "stats", "--lambdaS", "1", "--cells", "1600", "--reps", "20", "--margin", "5", "--seed",
        "12", "--out", out.to_str().unwrap(),
    ]);
    assert!(st.status.success());
    let summary: serde_json::Value =
        serde_json::from_str(body(&out).last().expect("summary record")).unwrap();
    assert_eq!(summary["record"], "stats_summary");
    let gamma = summary["gamma_hat_mean"].as_f64().unwrap();
    let lbar = summary["lbar_hat_mean"].as_f64().unwrap();
    assert!((gamma - 2.0).abs() / 2.0 < 0.02, "gamma_hat {gamma}");
    assert!((lbar - 2.0 / 3.0).abs() / (2.0 / 3.0) < 0.03, "lbar_hat {lbar}");
}

#[test]
fn critical_subcommand_locates_the_site_threshold() {
    // Moderate window: the 50%-crossing point of the relay-only model still
    // falls inside the documented bracket.
    let out = tmp("crit-pstar.jsonl");
    let st = run(&[
        "critical", "--axis", "p", "--H", "0", "--U", "0", "--bracket", "0.5,0.9", "--cells",
        "1500", "--trials", "200", "--seed", "7", "--out", out.to_str().unwrap(),
    ]);
    assert!(st.status.success(), "{}", String::from_utf8_lossy(&st.stderr));
    let rec: serde_json::Value = serde_json::from_str(&body(&out)[0]).unwrap();
    assert_eq!(rec["record"], "critical");
    assert_eq!(rec["axis"], "p");
    let value = rec["value"].as_f64().unwrap();
    assert!((0.69..=0.74).contains(&value), "threshold estimate {value}");
}

#[test]
fn diagnose_sites_emits_site_records() {
    let out = tmp("sites.jsonl");
    let st = run(&[
        "diagnose", "--mode", "subcritical", "--n", "2", "--sites", "--p", "1", "--lambda",
        "0.3", "--r", "0.3", "--cells", "200", "--seed", "5", "--out", out.to_str().unwrap(),
    ]);
    assert!(st.status.success(), "{}", String::from_utf8_lossy(&st.stderr));
    let records = body(&out);
    assert!(!records.is_empty());
    for line in &records {
        let v: serde_json::Value = serde_json::from_str(line).unwrap();
        assert_eq!(v["record"], "site");
        assert_eq!(v["mode"], "subcritical");
        assert!(v["z"].is_array());
    }
}
