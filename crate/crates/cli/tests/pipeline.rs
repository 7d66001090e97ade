use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use framing_core::pitchdata::save_pitches;
use framing_core::runvalue::RunValueTable;
use framing_core::synth::{simulate_innings, ScoringProcess};

const SMALL: &str = r#"
seed = 7
model = "M3"

[simulate.sizes]
n_umpires = 3
n_catchers = 6
n_pitchers = 8
n_batters = 10
n_pitches = 1500
n_history = 6000

[prior.baselines]
catcher = "C00"
pitcher = "P00"
batter = "B00"

[contours]
nx = 12
nz = 12
levels = [0.5, 0.9]
"#;

fn framing(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_framing"))
        .current_dir(dir)
        .env("RUST_LOG", "warn")
        .args(args)
        .output()
        .expect("run framing")
}

fn ok(dir: &Path, args: &[&str]) {
    let out = framing(dir, args);
    assert!(
        out.status.success(),
        "framing {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
}

fn setup(extra: &str) -> (tempfile::TempDir, PathBuf) {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    std::fs::write(&cfg, format!("{SMALL}\n{extra}")).unwrap();
    (dir, cfg)
}

fn bytes(p: impl AsRef<Path>) -> Vec<u8> {
    std::fs::read(p.as_ref()).unwrap_or_else(|e| panic!("{}: {e}", p.as_ref().display()))
}

#[test]
fn simulate_fit_diagnose_and_reports() {
    let (dir, cfg) = setup("");
    let d = dir.path();
    let c = cfg.to_str().unwrap();
    for step in [
        "simulate",
        "fit",
        "diagnose",
        "evaluate",
        "runvalues",
        "metrics",
        "contours",
        "counterfactual",
    ] {
        ok(d, &["--config", c, "--out", "a", step]);
    }
    let report: serde_json::Value = serde_json::from_slice(&bytes(d.join("a/m3/diagnostics.json"))).unwrap();
    assert_eq!(report["pass"], true);
    let cafe = String::from_utf8(bytes(d.join("a/m3/cafe.csv"))).unwrap();
    assert_eq!(cafe.lines().count(), 1 + 6);
    let areas: serde_json::Value = serde_json::from_slice(&bytes(d.join("a/m3/contour.json"))).unwrap();
    let a50 = areas["areas"][0]["square_feet"].as_f64().unwrap();
    let a90 = areas["areas"][1]["square_feet"].as_f64().unwrap();
    assert!(a50 > a90 && a90 >= 0.0);
    let effective = String::from_utf8(bytes(d.join("a/config.toml"))).unwrap();
    assert!(effective.contains("seed = 7"));

    // same config and seed on one thread: identical artifacts
    for step in ["simulate", "fit", "evaluate", "runvalues", "metrics"] {
        ok(d, &["--config", c, "--out", "b", "--threads", "1", step]);
    }
    for f in [
        "pitches.csv",
        "truth.json",
        "m3/draws.bin",
        "m3/draws.json",
        "m3/metrics.csv",
        "m3/framing.json",
        "runvalues.csv",
    ] {
        assert!(bytes(d.join("a").join(f)) == bytes(d.join("b").join(f)), "{f} differs");
    }
}

#[test]
fn metrics_without_a_fit_names_the_fit_step() {
    let (dir, cfg) = setup("");
    let c = cfg.to_str().unwrap();
    ok(dir.path(), &["--config", c, "simulate"]);
    let out = framing(dir.path(), &["--config", c, "metrics"]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("framing fit"), "{err}");
}

#[test]
fn missing_corpus_names_ingest() {
    let (dir, cfg) = setup("");
    let out = framing(dir.path(), &["--config", cfg.to_str().unwrap(), "zone"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("framing ingest"));
}

#[test]
fn runvalues_recover_the_fixture_table() {
    let dir = tempfile::tempdir().unwrap();
    let reference = RunValueTable::reference();
    let process = ScoringProcess::from_table(&reference);
    let pitches = simulate_innings(40_000, &process, 11).unwrap();
    let corpus = dir.path().join("fixture.csv");
    save_pitches(&corpus, &pitches).unwrap();
    ok(dir.path(), &["ingest", "--input", corpus.to_str().unwrap()]);
    ok(dir.path(), &["runvalues"]);
    let table = RunValueTable::load_csv(dir.path().join("out/runvalues.csv")).unwrap();
    for r in table.rows() {
        let truth = process.rho(r.count).unwrap();
        assert!(
            (r.rho - truth).abs() <= 3.0 * r.se_rho,
            "{}: {} vs {truth}",
            r.count,
            r.rho
        );
    }
}

#[test]
fn numerical_failures_exit_with_two() {
    // too little warmup to find a stable step size
    let (dir, cfg) = setup("[sampler]\nn_warmup = 20\nn_total = 60\n");
    let c = cfg.to_str().unwrap();
    ok(dir.path(), &["--config", c, "simulate"]);
    let out = framing(dir.path(), &["--config", c, "--model", "1", "fit"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("divergence"));

    // too few draws for the effective sample size requirement
    let (dir, cfg) = setup("[sampler]\nn_warmup = 200\nn_total = 300\n");
    let c = cfg.to_str().unwrap();
    ok(dir.path(), &["--config", c, "simulate"]);
    ok(dir.path(), &["--config", c, "--model", "1", "fit"]);
    let out = framing(dir.path(), &["--config", c, "--model", "1", "diagnose"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stdout).contains("FAIL"));
}

#[test]
fn invalid_configs_exit_with_one() {
    let (dir, cfg) = setup("[data]\ngam_seasons = [2011, 2014]\n");
    let out = framing(dir.path(), &["--config", cfg.to_str().unwrap(), "simulate"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("must end before"));

    let (dir, cfg) = setup("unknown_key = 1\n");
    let out = framing(dir.path(), &["--config", cfg.to_str().unwrap(), "simulate"]);
    assert_eq!(out.status.code(), Some(1));

    let (dir, cfg) = setup("[data]\ntrain = \"absent.csv\"\n");
    let out = framing(dir.path(), &["--config", cfg.to_str().unwrap(), "ingest"]);
    assert_eq!(out.status.code(), Some(1));

    let out = framing(dir.path(), &["--model", "9", "fit"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn location_surfaces_feed_the_fit() {
    let (dir, cfg) = setup("[sampler]\nn_chains = 2\nn_warmup = 100\nn_total = 200\n[gam]\nn_interior_knots = 6\n");
    let d = dir.path();
    let c = cfg.to_str().unwrap();
    for step in ["simulate", "zone", "fit-gam"] {
        ok(d, &["--config", c, step]);
    }
    let loc: serde_json::Value = serde_json::from_slice(&bytes(d.join("out/location.json"))).unwrap();
    assert_eq!(loc["kind"], "gam");
    assert!(d.join("out/heatmap.csv").exists());
    assert!(d.join("out/gam_grid_RHB-RHP.csv").exists());
    ok(d, &["--config", c, "--model", "1", "fit"]);
    ok(d, &["--config", c, "--model", "1", "evaluate"]);
    let metrics = String::from_utf8(bytes(d.join("out/m1/metrics.csv"))).unwrap();
    assert!(metrics.starts_with("scope,model,miss,mse,n"));
}

#[test]
fn compare_writes_one_row_per_model() {
    let (dir, cfg) = setup("[sampler]\nn_chains = 2\nn_warmup = 150\nn_total = 300\n[eval]\nn_folds = 2\n");
    let d = dir.path();
    let c = cfg.to_str().unwrap();
    ok(d, &["--config", c, "simulate"]);
    ok(d, &["--config", c, "compare"]);
    for table in ["in_sample.csv", "cross_validation.csv"] {
        let text = String::from_utf8(bytes(d.join("out/compare").join(table))).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 6, "{table}");
        assert!(lines[0].starts_with("model,parameters,overall_miss"));
        assert!(lines[1].starts_with("M1,"));
    }
}
