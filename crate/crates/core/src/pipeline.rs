//! End-to-end plumbing shared by the CLI and the test suites: reproducible instances
//! and single trials (observe, solve, extract, score).

use std::time::Instant;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::extraction::{extract, AmplitudeMethod};
use crate::measures::{generate_synthetic, min_separation, observe, AmplitudeMode};
use crate::metrics::{flat_norm, jaccard, support_relative_error, FLAT_NORM_GATE, JACCARD_DELTA};
use crate::operators::OperatorSpec;
use crate::rng::substream;
use crate::solver::{certificate_sup, ffw_solve, Evaluator, Problem, SolveResult, SolverConfig, StopReason};
use crate::{CVector, DiscreteMeasure, Error, Result};

const NOISE_STREAM: u64 = 0x6e_6f69_7365;
const MAX_ATTEMPTS: u64 = 100_000;

/// Synthetic ground truth description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceSpec {
    pub r: usize,
    pub dim: usize,
    pub amplitudes: AmplitudeMode,
    /// Relative noise level `||w|| / ||y0||`.
    pub noise: f64,
    /// Reject draws whose minimum separation is not strictly above this.
    #[serde(default)]
    pub min_separation: Option<f64>,
    /// Reject draws whose minimum separation is above this.
    #[serde(default)]
    pub max_separation: Option<f64>,
    pub seed: u64,
}

impl InstanceSpec {
    pub fn new(r: usize, dim: usize, amplitudes: AmplitudeMode, noise: f64, seed: u64) -> Self {
        Self { r, dim, amplitudes, noise, min_separation: None, max_separation: None, seed }
    }

    pub fn separated(mut self, sep: f64) -> Self {
        self.min_separation = Some(sep);
        self
    }

    pub fn clustered(mut self, sep: f64) -> Self {
        self.max_separation = Some(sep);
        self
    }

    fn accepts(&self, m: &DiscreteMeasure) -> Result<bool> {
        if m.len() < 2 {
            return Ok(true);
        }
        let sep = min_separation(m)?;
        Ok(self.min_separation.is_none_or(|lo| sep > lo) && self.max_separation.is_none_or(|hi| sep <= hi))
    }
}

/// Draws the ground truth. Attempt `k` uses the seed of `substream(seed, k)`, so the
/// accepted measure depends only on the spec.
pub fn generate_instance(spec: &InstanceSpec) -> Result<DiscreteMeasure> {
    if spec.min_separation.is_none() && spec.max_separation.is_none() {
        return generate_synthetic(spec.r, spec.dim, spec.amplitudes, spec.seed);
    }
    for attempt in 0..MAX_ATTEMPTS {
        let seed = substream(spec.seed, attempt).random::<u64>();
        let m = generate_synthetic(spec.r, spec.dim, spec.amplitudes, seed)?;
        if spec.accepts(&m)? {
            return Ok(m);
        }
    }
    Err(Error::InvalidParameter(format!(
        "no {}-atom instance with separation in ({:?}, {:?}] after {MAX_ATTEMPTS} draws",
        spec.r, spec.min_separation, spec.max_separation
    )))
}

/// Seed of the noise draw for an instance seed.
pub fn noise_seed(seed: u64) -> u64 {
    substream(seed, NOISE_STREAM).random()
}

/// Ground truth, observation and noiseless observation.
pub fn make_observation(spec: &InstanceSpec, op: &OperatorSpec) -> Result<(DiscreteMeasure, CVector, CVector)> {
    let truth = generate_instance(spec)?;
    let (y, y0) = observe(&truth, &op.build()?, spec.noise, noise_seed(spec.seed))?;
    Ok((truth, y, y0))
}

/// Scores of one recovered measure against the truth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scores {
    pub jaccard: f64,
    /// `None` when the atom counts differ.
    pub support_error: Option<f64>,
    /// `None` when the union support exceeds the LP gate.
    pub flat_norm: Option<f64>,
}

pub fn score(truth: &DiscreteMeasure, recovered: &DiscreteMeasure) -> Result<Scores> {
    let jac = jaccard(truth.positions(), recovered.positions(), JACCARD_DELTA)?;
    let support_error = match support_relative_error(truth.positions(), recovered.positions()) {
        Ok(e) => Some(e),
        Err(Error::UnmatchedAtoms(_)) => None,
        Err(e) => return Err(e),
    };
    let flat = if truth.len() + recovered.len() <= FLAT_NORM_GATE { Some(flat_norm(truth, recovered)?) } else { None };
    Ok(Scores { jaccard: jac, support_error, flat_norm: flat })
}

/// Everything measured in one trial.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrialReport {
    pub seed: u64,
    pub r: usize,
    pub separation: Option<f64>,
    pub iterations: usize,
    pub lmo_calls: usize,
    pub stop: StopReason,
    pub rank: usize,
    pub objective: f64,
    pub certificate: f64,
    pub toeplitz_residual: f64,
    pub fft_calls: u64,
    pub solve_ms: f64,
    /// Extraction failure message; the scores then count every truth atom as missed.
    pub extraction_error: Option<String>,
    pub recovered_atoms: usize,
    pub flat: bool,
    pub scores: Scores,
}

/// Full pipeline for one instance. Solver failures are errors; extraction failures are
/// recorded in the report.
pub fn run_trial(
    spec: &InstanceSpec,
    op_spec: &OperatorSpec,
    solver: &SolverConfig,
    method: AmplitudeMethod,
) -> Result<(TrialReport, SolveResult, Option<DiscreteMeasure>)> {
    let (truth, y, _) = make_observation(spec, op_spec)?;
    let prob = Problem::new(op_spec.build()?, y, solver.lambda0)?;
    let start = Instant::now();
    let res = ffw_solve(&prob, solver)?;
    let solve_ms = start.elapsed().as_secs_f64() * 1e3;
    let certificate = certificate_sup(res.state.z(), &prob)?;
    let toeplitz_residual = Evaluator::new(&prob, res.level, solver.rho)?.toeplitz_residual(&res.state)?;
    let separation = if truth.len() >= 2 { Some(min_separation(&truth)?) } else { None };
    let extracted = if res.state.columns() == 0 {
        Ok(None)
    } else {
        extract(&res.state.u1(), res.state.z(), &prob, res.level, method, solver.seed).map(Some)
    };
    let (recovered, flat, extraction_error) = match extracted {
        Ok(Some(e)) => (Some(e.measure), e.flat, None),
        Ok(None) => (Some(DiscreteMeasure::empty(truth.dim())?), true, None),
        Err(e) => (None, false, Some(e.to_string())),
    };
    let scores = match &recovered {
        Some(m) => score(&truth, m)?,
        None => Scores { jaccard: 0.0, support_error: None, flat_norm: None },
    };
    let report = TrialReport {
        seed: spec.seed,
        r: spec.r,
        separation,
        iterations: res.iterations,
        lmo_calls: res.lmo_calls,
        stop: res.stop,
        rank: res.rank(),
        objective: res.state.objective(),
        certificate,
        toeplitz_residual,
        fft_calls: res.fft_calls,
        solve_ms,
        extraction_error,
        recovered_atoms: recovered.as_ref().map_or(0, DiscreteMeasure::len),
        flat,
        scores,
    };
    Ok((report, res, recovered))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn separated_instances_are_deterministic() {
        let spec = InstanceSpec::new(5, 1, AmplitudeMode::Signed, 1e-4, 7).separated(1.0 / 15.0);
        let a = generate_instance(&spec).unwrap();
        assert_eq!(a, generate_instance(&spec).unwrap());
        assert!(min_separation(&a).unwrap() > 1.0 / 15.0);
        let tight = InstanceSpec::new(3, 1, AmplitudeMode::Signed, 0.0, 1).separated(0.5);
        assert!(generate_instance(&tight).is_err());
        let close = InstanceSpec::new(4, 1, AmplitudeMode::Signed, 0.0, 2).clustered(0.05);
        assert!(min_separation(&generate_instance(&close).unwrap()).unwrap() <= 0.05);
    }

    #[test]
    fn single_spike_trial() {
        let spec = InstanceSpec::new(1, 1, AmplitudeMode::Positive, 0.0, 3);
        let op = OperatorSpec::dirichlet(6, 1);
        let cfg = SolverConfig::new(6, 1e-3, 1.0);
        let (rep, _, rec) = run_trial(&spec, &op, &cfg, AmplitudeMethod::Lsq).unwrap();
        assert_eq!(rep.rank, 1);
        assert_eq!(rec.unwrap().len(), 1);
        assert_eq!(rep.scores.jaccard, 1.0);
        assert!(rep.scores.support_error.unwrap() < 1e-3);
    }
}
