//! Parameter sweeps. Trials run in parallel; results are gathered in (cell, seed) order so
//! every output file is independent of scheduling.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use anyhow::{bail, Context, Result};
use offgrid_sr::extraction::AmplitudeMethod;
use offgrid_sr::io::fmt_f64;
use offgrid_sr::measures::AmplitudeMode;
use offgrid_sr::operators::OperatorSpec;
use offgrid_sr::pipeline::{run_trial, InstanceSpec, TrialReport};
use offgrid_sr::solver::SolverConfig;
use rayon::prelude::*;
use serde_json::json;

use crate::args::{BenchArgs, OPERATOR_KEYS, SOLVER_KEYS};
use crate::commands::{layered, operator_spec, out_dir, solver_config, write_json};
use crate::settings::{flag, Settings};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Sweep {
    Iterations,
    Rank,
    Grid,
}

impl std::str::FromStr for Sweep {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "iterations" => Ok(Self::Iterations),
            "rank" => Ok(Self::Rank),
            "grid" => Ok(Self::Grid),
            _ => Err(format!("unknown sweep `{s}` (iterations, rank, grid)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Stratum {
    Separated,
    Clustered,
}

impl Stratum {
    fn name(self) -> &'static str {
        match self {
            Self::Separated => "separated",
            Self::Clustered => "clustered",
        }
    }
}

#[derive(Debug, Clone)]
struct Task {
    cell: usize,
    instance: InstanceSpec,
    solver: SolverConfig,
}

struct Plan {
    op: OperatorSpec,
    tasks: Vec<Task>,
}

pub fn thread_count(jobs: Option<usize>) -> usize {
    let available = std::thread::available_parallelism().map_or(1, |n| n.get());
    let cap = std::env::var("OFFGRID_SR_THREADS").ok().and_then(|v| v.trim().parse::<usize>().ok());
    let n = jobs.unwrap_or(available);
    cap.map_or(n, |c| n.min(c)).max(1)
}

fn run_tasks(plan: &Plan, threads: usize) -> Result<Vec<Result<TrialReport, String>>> {
    let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build()?;
    Ok(pool.install(|| {
        plan.tasks
            .par_iter()
            .map(|t| {
                run_trial(&t.instance, &plan.op, &t.solver, AmplitudeMethod::Lsq)
                    .map(|(rep, _, _)| rep)
                    .map_err(|e| e.to_string())
            })
            .collect()
    }))
}

fn table(path: &Path, header: &str, rows: &[String]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path).with_context(|| format!("writing {}", path.display()))?);
    writeln!(w, "{header}")?;
    for r in rows {
        writeln!(w, "{r}")?;
    }
    w.flush()?;
    Ok(())
}

fn mean(v: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = v.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    if n == 0 {
        f64::NAN
    } else {
        s / n as f64
    }
}

pub fn bench(args: &BenchArgs, config: Option<&Path>, jobs: Option<usize>) -> Result<i32> {
    let known: Vec<&str> = OPERATOR_KEYS
        .iter()
        .chain(SOLVER_KEYS)
        .chain(&["sweeps", "r_list", "rho_list", "lambda0_list", "sweep_r", "seeds", "seed", "noise", "out"])
        .copied()
        .collect();
    let mut flags = args.op.flags();
    flags.extend(args.solver.flags());
    flags.extend([
        flag("sweeps", &args.sweeps),
        flag("r_list", &args.r_list),
        flag("rho_list", &args.rho_list),
        flag("lambda0_list", &args.lambda0_list),
        flag("sweep_r", &args.sweep_r),
        flag("seeds", &args.seeds),
        flag("seed", &args.seed),
        flag("noise", &args.noise),
        ("out", args.out.as_ref().map(|p| p.display().to_string())),
    ]);
    let mut base = Settings::default();
    base.set("fc", "15");
    base.set("lambda0", "2e-3");
    let s = layered(base, config, "bench", &known, flags)?;
    let op = operator_spec(&s)?;
    let fc = op.fc;
    let base_cfg = solver_config(&s, fc)?;
    let sweeps: Vec<Sweep> = s.list("sweeps")?.unwrap_or_else(|| vec![Sweep::Iterations, Sweep::Rank, Sweep::Grid]);
    let r_list: Vec<usize> = s.list("r_list")?.unwrap_or_else(|| (1..=5).collect());
    let rho_list: Vec<f64> = s.list("rho_list")?.unwrap_or_else(|| vec![0.1, 1.0, 10.0, 100.0, 1000.0]);
    let lambda0_list: Vec<f64> = s.list("lambda0_list")?.unwrap_or_else(|| vec![base_cfg.lambda0]);
    let sweep_r: usize = s.get_or("sweep_r", 3)?;
    let seeds: u64 = s.get_or("seeds", 20)?;
    let first_seed: u64 = s.get_or("seed", 0)?;
    let noise: f64 = s.get_or("noise", 1e-4)?;
    if r_list.contains(&0) || sweep_r == 0 {
        bail!("sparsity levels must be positive");
    }
    let out = out_dir(&s)?;
    let sep = 1.0 / fc as f64;
    let dim = op.dim;
    let trial_seed = |k: u64| first_seed + k;
    let solver_for = |seed: u64, lambda0: f64, rho: f64| SolverConfig { seed, lambda0, rho, ..base_cfg.clone() };

    // cell descriptors per sweep, in output order
    let mut iter_cells = Vec::new();
    if sweeps.contains(&Sweep::Iterations) {
        for &r in &r_list {
            iter_cells.push((r, Stratum::Separated));
            if r >= 2 {
                iter_cells.push((r, Stratum::Clustered));
            }
        }
    }
    let rank_cells: Vec<f64> = if sweeps.contains(&Sweep::Rank) { rho_list.clone() } else { Vec::new() };
    let mut grid_cells = Vec::new();
    if sweeps.contains(&Sweep::Grid) {
        for &l in &lambda0_list {
            for &rho in &rho_list {
                grid_cells.push((l, rho));
            }
        }
    }

    let mut tasks = Vec::new();
    for (c, &(r, stratum)) in iter_cells.iter().enumerate() {
        for k in 0..seeds {
            let seed = trial_seed(k);
            let spec = InstanceSpec::new(r, dim, AmplitudeMode::Signed, noise, seed);
            let spec = match stratum {
                Stratum::Separated => spec.separated(sep),
                Stratum::Clustered => spec.clustered(sep),
            };
            tasks.push(Task { cell: c, instance: spec, solver: solver_for(seed, base_cfg.lambda0, base_cfg.rho) });
        }
    }
    let offset_rank = iter_cells.len();
    for (c, &rho) in rank_cells.iter().enumerate() {
        for k in 0..seeds {
            let seed = trial_seed(k);
            let spec = InstanceSpec::new(sweep_r, dim, AmplitudeMode::Positive, noise, seed).separated(sep);
            tasks.push(Task { cell: offset_rank + c, instance: spec, solver: solver_for(seed, base_cfg.lambda0, rho) });
        }
    }
    let offset_grid = offset_rank + rank_cells.len();
    for (c, &(lambda0, rho)) in grid_cells.iter().enumerate() {
        for k in 0..seeds {
            let seed = trial_seed(k);
            let spec = InstanceSpec::new(sweep_r, dim, AmplitudeMode::Signed, noise, seed).separated(sep);
            tasks.push(Task { cell: offset_grid + c, instance: spec, solver: solver_for(seed, lambda0, rho) });
        }
    }

    let threads = thread_count(jobs);
    let plan = Plan { op: op.clone(), tasks };
    let results = run_tasks(&plan, threads)?;
    let n_cells = offset_grid + grid_cells.len();
    let mut by_cell: Vec<Vec<&TrialReport>> = vec![Vec::new(); n_cells];
    let mut failed = vec![0usize; n_cells];
    let mut trials_log = BufWriter::new(File::create(out.join("trials.jsonl"))?);
    for (task, res) in plan.tasks.iter().zip(&results) {
        match res {
            Ok(rep) => {
                by_cell[task.cell].push(rep);
                writeln!(trials_log, "{}", json!({"cell": task.cell, "lambda0": task.solver.lambda0,
                                                   "rho": task.solver.rho, "report": rep}))?;
            }
            Err(e) => {
                log::warn!("trial seed {} (cell {}) failed: {e}", task.instance.seed, task.cell);
                failed[task.cell] += 1;
                writeln!(trials_log, "{}", json!({"cell": task.cell, "seed": task.instance.seed, "error": e}))?;
            }
        }
    }
    trials_log.flush()?;

    let rows: Vec<String> = iter_cells
        .iter()
        .enumerate()
        .map(|(c, &(r, stratum))| {
            let reps = &by_cell[c];
            let exact = mean(reps.iter().map(|t| (t.iterations == r) as u8 as f64));
            format!(
                "{r},{},{},{},{},{},{}",
                stratum.name(),
                reps.len(),
                failed[c],
                fmt_f64(mean(reps.iter().map(|t| t.iterations as f64))),
                fmt_f64(exact),
                fmt_f64(mean(reps.iter().map(|t| t.scores.jaccard)))
            )
        })
        .collect();
    table(&out.join("iterations.csv"), "r,stratum,trials,failed,mean_iterations,exact_fraction,mean_jaccard", &rows)?;

    let rows: Vec<String> = rank_cells
        .iter()
        .enumerate()
        .map(|(c, &rho)| {
            let reps = &by_cell[offset_rank + c];
            let ranks = || reps.iter().map(|t| t.rank);
            format!(
                "{},{},{},{},{},{}",
                fmt_f64(rho),
                reps.len(),
                failed[offset_rank + c],
                fmt_f64(mean(ranks().map(|x| x as f64))),
                ranks().min().map_or(String::new(), |x| x.to_string()),
                ranks().max().map_or(String::new(), |x| x.to_string())
            )
        })
        .collect();
    table(&out.join("rank.csv"), "rho,trials,failed,mean_rank,min_rank,max_rank", &rows)?;

    let rows: Vec<String> = grid_cells
        .iter()
        .enumerate()
        .map(|(c, &(lambda0, rho))| {
            let reps = &by_cell[offset_grid + c];
            format!(
                "{},{},{},{},{},{}",
                fmt_f64(lambda0),
                fmt_f64(rho),
                reps.len(),
                failed[offset_grid + c],
                fmt_f64(mean(reps.iter().map(|t| t.scores.jaccard))),
                fmt_f64(mean(reps.iter().filter_map(|t| t.scores.support_error)))
            )
        })
        .collect();
    table(&out.join("grid.csv"), "lambda0,rho,trials,failed,mean_jaccard,mean_support_error", &rows)?;

    let total_failed: usize = failed.iter().sum();
    let summary = json!({
        "trials": results.len(),
        "failed": total_failed,
        "cells": n_cells,
        "threads": threads,
        "files": ["iterations.csv", "rank.csv", "grid.csv", "trials.jsonl"],
    });
    write_json(&out.join("summary.json"), &summary)?;
    let manifest = json!({"command": "bench", "version": env!("CARGO_PKG_VERSION"), "settings": s.map(),
                          "operator": op, "solver": base_cfg, "first_seed": first_seed, "seeds": seeds,
                          "threads": threads});
    write_json(&out.join("manifest.json"), &manifest)?;
    println!("{}", serde_json::to_string(&summary)?);
    Ok(0)
}
