use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use offgrid_sr::io::{read_measure_file, read_vector_file};
use offgrid_sr::metrics::jaccard;
use serde_json::Value;

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_offgrid-sr")).args(args).output().expect("binary runs")
}

fn ok(args: &[&str]) -> Output {
    let out = run(args);
    assert!(out.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    out
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn generate(dir: &Path, extra: &[&str]) {
    let mut args = vec!["generate", "--d", "1", "--r", "3", "--fc", "15", "--kernel", "dirichlet", "--seed", "1"];
    args.extend_from_slice(extra);
    args.extend_from_slice(&["--out", p(dir)]);
    ok(&args);
}

#[test]
fn generate_records_noise_and_is_deterministic() {
    let t = tempfile::tempdir().unwrap();
    let (a, b) = (t.path().join("a"), t.path().join("b"));
    generate(&a, &["--noise", "1e-4"]);
    generate(&b, &["--noise", "1e-4"]);
    for f in ["truth.csv", "observation.csv", "clean.csv"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f} differs");
    }
    let m = json(&a.join("manifest.json"));
    assert_eq!(m["seed"], 1);
    assert_eq!(m["kernel"], "dirichlet");
    assert!((m["noise_ratio"].as_f64().unwrap() - 1e-4).abs() < 1e-12);

    let c = t.path().join("c");
    generate(&c, &["--noise", "0"]);
    assert_eq!(read_vector_file(&c.join("observation.csv")).unwrap(), read_vector_file(&c.join("clean.csv")).unwrap());
}

#[test]
fn full_pipeline_recovers_separated_spikes() {
    let t = tempfile::tempdir().unwrap();
    let (gen, sol, ext) = (t.path().join("gen"), t.path().join("sol"), t.path().join("ext"));
    generate(&gen, &["--noise", "1e-4", "--min-separation", "0.0667"]);
    ok(&["solve", "--input", p(&gen), "--lambda0", "2e-3", "--out", p(&sol)]);
    let summary = json(&sol.join("summary.json"));
    assert_eq!(summary["rank"], 3);
    assert_eq!(summary["converged"], true);
    assert!(summary["certificate_sup"].as_f64().unwrap() <= 1.01);
    assert!(summary["fw_gap"].as_f64().unwrap() >= -1e-9);

    let trace = fs::read_to_string(sol.join("trace.csv")).unwrap();
    let objective: Vec<f64> = trace.lines().skip(1).map(|l| l.split(',').nth(1).unwrap().parse().unwrap()).collect();
    assert!(objective.windows(2).all(|w| w[1] <= w[0]), "{objective:?}");

    ok(&["extract", "--input", p(&sol), "--out", p(&ext)]);
    let diag = json(&ext.join("diagnostics.json"));
    assert_eq!(diag["flat"], true);
    let truth = read_measure_file(&gen.join("truth.csv")).unwrap();
    let rec = read_measure_file(&ext.join("recovered.csv")).unwrap();
    assert_eq!(jaccard(truth.positions(), rec.positions(), 1e-2).unwrap(), 1.0);

    let out = ok(&["eval", "--truth", p(&gen.join("truth.csv")), "--recovered", p(&ext.join("recovered.csv"))]);
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.starts_with("metric,value,delta,notes\n"));
    assert!(text.contains("jaccard,1.0000000000000000e0,1.0000000000000000e-2"));
}

#[test]
fn single_spike_has_rank_one_and_reproducible_trace() {
    let t = tempfile::tempdir().unwrap();
    let gen = t.path().join("gen");
    ok(&["generate", "--r", "1", "--fc", "8", "--noise", "1e-4", "--seed", "4", "--out", p(&gen)]);
    let mut traces = Vec::new();
    for name in ["s1", "s2"] {
        let dir = t.path().join(name);
        ok(&["solve", "--input", p(&gen), "--record-timing", "false", "--seed", "9", "--out", p(&dir)]);
        assert_eq!(json(&dir.join("summary.json"))["rank"], 1);
        traces.push(fs::read(dir.join("trace.csv")).unwrap());
    }
    assert_eq!(traces[0], traces[1]);
}

#[test]
fn config_file_sections_and_flag_precedence() {
    let t = tempfile::tempdir().unwrap();
    let cfg = t.path().join("run.ini");
    let gen = t.path().join("gen");
    fs::write(&cfg, format!("fc = 6\n[generate]\nr = 2\nnoise = 0\nout = {}\n[solve]\nrho = 7\n", p(&gen))).unwrap();
    ok(&["--config", p(&cfg), "generate", "--seed", "3", "--r", "1"]);
    let m = json(&gen.join("manifest.json"));
    assert_eq!(m["atoms"], 1);
    assert_eq!(m["settings"]["fc"], "6");
    assert_eq!(m["settings"]["seed"], "3");

    let sol = t.path().join("sol");
    ok(&["--config", p(&cfg), "solve", "--input", p(&gen), "--factor-format", "csv", "--out", p(&sol)]);
    let m = json(&sol.join("manifest.json"));
    assert_eq!(m["settings"]["rho"], "7");
    assert!(sol.join("factor.csv").exists());
    // the CSV fallback feeds extraction as well
    ok(&["extract", "--input", p(&sol), "--out", p(&t.path().join("ext"))]);

    fs::write(&cfg, "[generate]\nbogus = 1\n").unwrap();
    let out = run(&["--config", p(&cfg), "generate", "--r", "1", "--fc", "4", "--out", p(&gen)]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("bogus"));
}

#[test]
fn failures_exit_nonzero() {
    let t = tempfile::tempdir().unwrap();
    let out = run(&["solve", "--observation", "/nonexistent/obs.csv", "--fc", "3", "--out", p(t.path())]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("/nonexistent/obs.csv"));

    let gen = t.path().join("gen");
    ok(&["generate", "--r", "3", "--fc", "10", "--noise", "1e-3", "--min-separation", "0.1", "--out", p(&gen)]);
    let out = run(&["solve", "--input", p(&gen), "--max-outer-iters", "1", "--out", p(&t.path().join("s"))]);
    assert_eq!(out.status.code(), Some(2));
    assert!(t.path().join("s/trace.csv").exists());
}

#[test]
fn bench_tables() {
    let t = tempfile::tempdir().unwrap();
    let empty = t.path().join("empty");
    ok(&["bench", "--sweeps", "iterations", "--r-list", "", "--out", p(&empty)]);
    assert_eq!(
        fs::read_to_string(empty.join("iterations.csv")).unwrap(),
        "r,stratum,trials,failed,mean_iterations,exact_fraction,mean_jaccard\n"
    );

    let run_bench = |name: &str, jobs: &str| {
        let dir = t.path().join(name);
        ok(&[
            "bench", "--jobs", jobs, "--fc", "10", "--seeds", "3", "--r-list", "1,2", "--rho-list", "1,1e4",
            "--out", p(&dir),
        ]);
        dir
    };
    let a = run_bench("a", "1");
    let b = run_bench("b", "3");
    for f in ["iterations.csv", "rank.csv", "grid.csv"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f} depends on scheduling");
    }
    let rank = fs::read_to_string(a.join("rank.csv")).unwrap();
    let rows: Vec<Vec<&str>> = rank.lines().skip(1).map(|l| l.split(',').collect()).collect();
    assert_eq!(rows.len(), 2);
    assert_eq!(rows[0][1], "3");
    let low: f64 = rows[0][3].parse().unwrap();
    let high: f64 = rows[1][3].parse().unwrap();
    assert!(high < low && low <= 3.0);
}
