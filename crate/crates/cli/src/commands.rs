use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use offgrid_sr::extraction::{extract, AmplitudeMethod};
use offgrid_sr::io::{
    read_factor_file, read_measure_file, read_vector_file, write_factor_file, write_measure_file, write_metrics,
    write_metrics_file, write_trace_file, write_vector_file, MetricRow,
};
use offgrid_sr::measures::AmplitudeMode;
use offgrid_sr::metrics::{flat_norm, match_supports, support_relative_error, FLAT_NORM_GATE, JACCARD_DELTA};
use offgrid_sr::operators::{KernelKind, OperatorSpec};
use offgrid_sr::pipeline::{make_observation, noise_seed, InstanceSpec};
use offgrid_sr::solver::{certificate_sup, ffw_solve, Evaluator, Problem, SolverConfig, StopReason};
use offgrid_sr::{DiscreteMeasure, Error};
use serde_json::{json, Value};

use crate::args::{ExtractArgs, GenerateArgs, SolveArgs, OPERATOR_KEYS, SOLVER_KEYS};
use crate::settings::{flag, Flags, Settings};

/// Process exit status when the solver hit its outer-iteration cap.
pub const EXIT_NOT_CONVERGED: i32 = 2;

pub fn layered(base: Settings, config: Option<&Path>, section: &str, known: &[&str], flags: Flags) -> Result<Settings> {
    let mut s = base;
    if let Some(path) = config {
        s.merge_file(path, section, known)?;
    }
    s.merge_flags(flags);
    Ok(s)
}

pub fn operator_spec(s: &Settings) -> Result<OperatorSpec> {
    Ok(OperatorSpec {
        kernel: s.get_or("kernel", KernelKind::Dirichlet)?,
        fc: s.require("fc")?,
        dim: s.get_or("d", 1)?,
        sigma: s.list("sigma")?.unwrap_or_default(),
        grid: s.get("grid")?,
        q: s.get("q")?,
        fovea_gain: s.get_or("fovea_gain", 4.0)?,
    })
}

pub fn solver_config(s: &Settings, fc: usize) -> Result<SolverConfig> {
    let d = SolverConfig::default();
    let cfg = SolverConfig {
        fc,
        level: s.get("level")?,
        lambda0: s.get_or("lambda0", d.lambda0)?,
        rho: s.get_or("rho", d.rho)?,
        eps_stop: s.get_or("eps_stop", d.eps_stop)?,
        power_tol: s.get_or("power_tol", d.power_tol)?,
        power_maxit: s.get_or("power_maxit", d.power_maxit)?,
        bfgs_tol: s.get_or("bfgs_tol", d.bfgs_tol)?,
        bfgs_maxit: s.get_or("bfgs_maxit", d.bfgs_maxit)?,
        bfgs_memory: s.get_or("bfgs_memory", d.bfgs_memory)?,
        max_outer_iters: s.get_or("max_outer_iters", d.max_outer_iters)?,
        seed: s.get_or("seed", 0)?,
    };
    cfg.validate()?;
    Ok(cfg)
}

pub fn out_dir(s: &Settings) -> Result<PathBuf> {
    let dir: PathBuf = s.require("out")?;
    fs::create_dir_all(&dir).with_context(|| format!("creating output directory {}", dir.display()))?;
    Ok(dir)
}

fn absolute(p: &Path) -> Result<PathBuf> {
    std::path::absolute(p).with_context(|| format!("resolving {}", p.display()))
}

pub fn write_json(path: &Path, v: &Value) -> Result<()> {
    let text = serde_json::to_string_pretty(v)?;
    fs::write(path, text + "\n").with_context(|| format!("writing {}", path.display()))
}

pub fn read_json(path: &Path) -> Result<Value> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

/// Settings recorded in an upstream manifest, restricted to `keys`.
fn manifest_settings(manifest: &Value, keys: &[&str]) -> Settings {
    let mut s = Settings::default();
    if let Some(map) = manifest.get("settings").and_then(Value::as_object) {
        for k in keys {
            if let Some(v) = map.get(*k).and_then(Value::as_str) {
                s.set(k, v);
            }
        }
    }
    s
}

fn manifest(command: &str, s: &Settings, extra: Value) -> Value {
    let mut m = json!({
        "command": command,
        "version": env!("CARGO_PKG_VERSION"),
        "settings": s.map(),
    });
    if let (Some(obj), Value::Object(more)) = (m.as_object_mut(), extra) {
        obj.extend(more);
    }
    m
}

fn with_keys(groups: &[&[&'static str]]) -> Vec<&'static str> {
    groups.iter().flat_map(|g| g.iter().copied()).collect()
}

pub fn generate(args: &GenerateArgs, config: Option<&Path>) -> Result<i32> {
    let known = with_keys(&[OPERATOR_KEYS, &["r", "amplitudes", "noise", "seed", "min_separation", "out"]]);
    let mut flags = args.op.flags();
    flags.extend([
        flag("r", &args.r),
        flag("amplitudes", &args.amplitudes),
        flag("noise", &args.noise),
        flag("seed", &args.seed),
        flag("min_separation", &args.min_separation),
        ("out", args.out.as_ref().map(|p| p.display().to_string())),
    ]);
    let s = layered(Settings::default(), config, "generate", &known, flags)?;
    let op = operator_spec(&s)?;
    let spec = InstanceSpec {
        r: s.require("r")?,
        dim: op.dim,
        amplitudes: s.get_or("amplitudes", AmplitudeMode::Signed)?,
        noise: s.get_or("noise", 0.0)?,
        min_separation: s.get("min_separation")?,
        max_separation: None,
        seed: s.get_or("seed", 0)?,
    };
    let out = out_dir(&s)?;
    let (truth, y, y0) = make_observation(&spec, &op)?;
    let ratio = if spec.noise == 0.0 { 0.0 } else { (&y - &y0).norm() / y0.norm() };
    write_measure_file(&out.join("truth.csv"), &truth)?;
    write_vector_file(&out.join("observation.csv"), &y)?;
    write_vector_file(&out.join("clean.csv"), &y0)?;
    let m = manifest(
        "generate",
        &s,
        json!({
            "operator": op,
            "instance": spec,
            "seed": spec.seed,
            "noise_seed": noise_seed(spec.seed),
            "noise_level": spec.noise,
            "noise_ratio": ratio,
            "kernel": op.kernel.to_string(),
            "atoms": truth.len(),
            "observation_len": y.len(),
            "files": {"truth": "truth.csv", "observation": "observation.csv", "clean": "clean.csv"},
        }),
    );
    write_json(&out.join("manifest.json"), &m)?;
    log::info!("wrote {} atoms and {} samples to {}", truth.len(), y.len(), out.display());
    Ok(0)
}

pub fn solve(args: &SolveArgs, config: Option<&Path>) -> Result<i32> {
    let known = with_keys(&[
        OPERATOR_KEYS,
        SOLVER_KEYS,
        &["input", "observation", "seed", "factor_format", "record_timing", "out"],
    ]);
    let mut flags = args.op.flags();
    flags.extend(args.solver.flags());
    flags.extend([
        ("input", args.input.as_ref().map(|p| p.display().to_string())),
        ("observation", args.observation.as_ref().map(|p| p.display().to_string())),
        flag("seed", &args.seed),
        flag("factor_format", &args.factor_format),
        flag("record_timing", &args.record_timing),
        ("out", args.out.as_ref().map(|p| p.display().to_string())),
    ]);
    let probe = layered(Settings::default(), config, "solve", &known, flags.clone())?;
    let mut base = Settings::default();
    let mut observation: Option<PathBuf> = None;
    if let Some(input) = probe.get::<PathBuf>("input")? {
        let m = read_json(&input.join("manifest.json"))?;
        base = manifest_settings(&m, &with_keys(&[OPERATOR_KEYS, &["seed"]]));
        observation = Some(input.join("observation.csv"));
    }
    let mut s = layered(base, config, "solve", &known, flags)?;
    let observation = s
        .get::<PathBuf>("observation")?
        .or(observation)
        .ok_or_else(|| anyhow::anyhow!("no observation: pass --observation or --input"))?;
    let observation = absolute(&observation)?;
    s.set("observation", observation.display().to_string());

    let op_spec = operator_spec(&s)?;
    let op = op_spec.build()?;
    let y = read_vector_file(&observation)?;
    if y.len() != op.output_dim() {
        bail!("observation has {} samples but the operator produces {}", y.len(), op.output_dim());
    }
    let cfg = solver_config(&s, op_spec.fc)?;
    let binary = match s.get_or("factor_format", "binary".to_string())?.as_str() {
        "binary" => true,
        "csv" => false,
        other => bail!("factor_format must be `binary` or `csv`, got `{other}`"),
    };
    let timing: bool = s.get_or("record_timing", true)?;
    let out = out_dir(&s)?;

    let prob = Problem::new(op, y, cfg.lambda0)?;
    let mut res = ffw_solve(&prob, &cfg)?;
    if !timing {
        res.trace.iter_mut().for_each(|t| t.wall_ms = 0.0);
    }
    let certificate = certificate_sup(res.state.z(), &prob)?;
    let residual = Evaluator::new(&prob, res.level, cfg.rho)?.toeplitz_residual(&res.state)?;
    let factor_name = if binary { "factor.bin" } else { "factor.csv" };
    write_factor_file(&out.join(factor_name), res.state.factor())?;
    write_trace_file(&out.join("trace.csv"), &res.trace)?;
    let summary = json!({
        "objective": res.state.objective(),
        "rank": res.rank(),
        "iterations": res.iterations,
        "lmo_calls": res.lmo_calls,
        "stop": res.stop,
        "converged": res.converged(),
        "fft_calls": res.fft_calls,
        "lambda": res.lambda,
        "level": res.level,
        "certificate_sup": certificate,
        "toeplitz_residual": residual,
        "power_unconverged": res.power_unconverged,
        "bfgs_failures": res.bfgs_failures,
        "fw_gap": res.fw_gaps.last().copied(),
        "wall_ms": res.trace.last().map_or(0.0, |t| t.wall_ms),
    });
    write_json(&out.join("summary.json"), &summary)?;
    let m = manifest(
        "solve",
        &s,
        json!({
            "operator": op_spec,
            "solver": cfg,
            "level": res.level,
            "files": {"factor": factor_name, "trace": "trace.csv", "summary": "summary.json"},
        }),
    );
    write_json(&out.join("manifest.json"), &m)?;
    println!("{}", serde_json::to_string(&summary)?);
    if res.stop == StopReason::MaxOuterIterations {
        eprintln!(
            "error: solver stopped at the outer-iteration cap ({}) without meeting the stopping rule",
            cfg.max_outer_iters
        );
        return Ok(EXIT_NOT_CONVERGED);
    }
    Ok(0)
}

pub fn extract_cmd(args: &ExtractArgs, config: Option<&Path>) -> Result<i32> {
    let known = ["input", "method", "seed", "out"];
    let flags = vec![
        ("input", args.input.as_ref().map(|p| p.display().to_string())),
        flag("method", &args.method),
        flag("seed", &args.seed),
        ("out", args.out.as_ref().map(|p| p.display().to_string())),
    ];
    let s = layered(Settings::default(), config, "extract", &known, flags)?;
    let input: PathBuf = s.require("input")?;
    let upstream = read_json(&input.join("manifest.json"))?;
    if upstream.get("command").and_then(Value::as_str) != Some("solve") {
        bail!("{} is not the output directory of `solve`", input.display());
    }
    let solve_settings =
        manifest_settings(&upstream, &with_keys(&[OPERATOR_KEYS, SOLVER_KEYS, &["observation", "seed"]]));
    let op_spec = operator_spec(&solve_settings)?;
    let cfg = solver_config(&solve_settings, op_spec.fc)?;
    let level = upstream.get("level").and_then(Value::as_u64).map_or(cfg.level(), |l| l as usize);
    let factor_name = upstream
        .pointer("/files/factor")
        .and_then(Value::as_str)
        .ok_or_else(|| anyhow::anyhow!("solve manifest lists no factor file"))?;
    let factor = read_factor_file(&input.join(factor_name))?;
    let y = read_vector_file(&solve_settings.require::<PathBuf>("observation")?)?;
    let method: AmplitudeMethod = s.get_or("method", AmplitudeMethod::Lsq)?;
    let seed = s.get_or("seed", cfg.seed)?;
    let out = out_dir(&s)?;

    let prob = Problem::new(op_spec.build()?, y, cfg.lambda0)?;
    let eval = Evaluator::new(&prob, level, cfg.rho)?;
    let state = eval.state(factor)?;
    let certificate = certificate_sup(state.z(), &prob)?;
    let diagnostics = if state.columns() == 0 {
        write_measure_file(&out.join("recovered.csv"), &DiscreteMeasure::empty(op_spec.dim)?)?;
        json!({"atoms": 0, "flat": true, "moduli": [], "pivots": [], "residual": prob.hilbert_norm().norm(prob.y()),
               "certificate_sup": certificate, "certificate_at_atoms": []})
    } else {
        let res = extract(&state.u1(), state.z(), &prob, level, method, seed).map_err(|e| match e {
            Error::RankDeficient { .. } | Error::PivotOutsideIndexSet { .. } | Error::IllConditioned { .. } => {
                anyhow::anyhow!("extraction failed: {e}. Try a smaller rho or a larger relaxation level")
            }
            other => anyhow::Error::from(other).context("extraction failed"),
        })?;
        write_measure_file(&out.join("recovered.csv"), &res.measure)?;
        json!({"atoms": res.measure.len(), "flat": res.flat, "moduli": res.moduli, "pivots": res.pivots,
               "residual": res.residual, "certificate_sup": certificate,
               "certificate_at_atoms": res.certificate_at_atoms})
    };
    write_json(&out.join("diagnostics.json"), &diagnostics)?;
    let m = manifest(
        "extract",
        &s,
        json!({"input": absolute(&input)?, "seed": seed, "method": method,
               "files": {"recovered": "recovered.csv", "diagnostics": "diagnostics.json"}}),
    );
    write_json(&out.join("manifest.json"), &m)?;
    println!("{}", serde_json::to_string(&diagnostics)?);
    Ok(0)
}

pub fn metric_rows(truth: &DiscreteMeasure, rec: &DiscreteMeasure, delta: f64) -> Result<Vec<MetricRow>> {
    let matching = match_supports(truth.positions(), rec.positions(), delta)?;
    let mut rows = vec![
        MetricRow::new("jaccard", matching.jaccard(), Some(delta), &format!("{} matched", matching.len())),
        MetricRow::new("atoms_truth", truth.len() as f64, None, ""),
        MetricRow::new("atoms_recovered", rec.len() as f64, None, ""),
    ];
    rows.push(match support_relative_error(truth.positions(), rec.positions()) {
        Ok(e) => MetricRow::new("support_relative_error", e, None, ""),
        Err(Error::UnmatchedAtoms(n)) => {
            MetricRow::new("support_relative_error", f64::NAN, None, &format!("{n} unmatched atoms; see jaccard"))
        }
        Err(e) => return Err(e.into()),
    });
    rows.push(if truth.len() + rec.len() <= FLAT_NORM_GATE {
        MetricRow::new("flat_norm", flat_norm(truth, rec)?, None, "torus geodesic ground metric")
    } else {
        MetricRow::new("flat_norm", f64::NAN, None, &format!("union support above {FLAT_NORM_GATE} points"))
    });
    Ok(rows)
}

pub fn eval(args: &crate::args::EvalArgs, config: Option<&Path>) -> Result<i32> {
    let known = ["truth", "recovered", "delta", "out"];
    let flags = vec![
        ("truth", args.truth.as_ref().map(|p| p.display().to_string())),
        ("recovered", args.recovered.as_ref().map(|p| p.display().to_string())),
        flag("delta", &args.delta),
        ("out", args.out.as_ref().map(|p| p.display().to_string())),
    ];
    let s = layered(Settings::default(), config, "eval", &known, flags)?;
    let truth = read_measure_file(&s.require::<PathBuf>("truth")?)?;
    let rec = read_measure_file(&s.require::<PathBuf>("recovered")?)?;
    let delta = s.get_or("delta", JACCARD_DELTA)?;
    let rows = metric_rows(&truth, &rec, delta)?;
    write_metrics(std::io::stdout().lock(), &rows)?;
    if s.raw("out").is_some() {
        let out = out_dir(&s)?;
        write_metrics_file(&out.join("metrics.csv"), &rows)?;
        write_json(&out.join("manifest.json"), &manifest("eval", &s, json!({"files": {"metrics": "metrics.csv"}})))?;
    }
    Ok(0)
}
