//! The Toeplitz-penalized objective and the FFT-based Frank-Wolfe (FFW) solver.
//!
//! The iterate is the bordered PSD matrix `[R z; z^h tau] = U U^h`, stored only through
//! its factor `U`. Every quantity the algorithm needs (objective, gradient products,
//! line-search coefficients) is computed from `U` with FFTs of side `O(l)`, never by
//! forming an `m_l x m_l` matrix.

mod lbfgs;
mod line_search;
mod lmo;
mod objective;
mod problem;

use std::time::Instant;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

pub use lbfgs::{lbfgs, LbfgsConfig, LbfgsResult, LbfgsStatus, RVector};
pub use line_search::{
    combine, grid_search, line_search, line_search_coeffs, minimize_on_simplex, LineSearchCoeffs, LineSearchResult,
};
pub use lmo::{lmo, min_eigpair, min_eigpair_with, power_iteration, scaled_gradient_apply, Candidate, EigPair};
pub use objective::{gradient_apply, objective_value, Evaluator, GradientOperator, LowRankState};
pub use problem::{resolve_lambda, sup_grid_points, trig_poly_sup, Problem};

use crate::linalg::gram_rank;
use crate::rng::substream;
use crate::{CMatrix, CVector, Error, Result};

/// Parameters of one FFW solve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverConfig {
    pub fc: usize,
    /// Relaxation order `l >= fc`; `None` means `l = fc`.
    pub level: Option<usize>,
    pub lambda0: f64,
    pub rho: f64,
    pub eps_stop: f64,
    pub power_tol: f64,
    pub power_maxit: usize,
    pub bfgs_tol: f64,
    pub bfgs_maxit: usize,
    pub bfgs_memory: usize,
    pub max_outer_iters: usize,
    pub seed: u64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            fc: 1,
            level: None,
            lambda0: 1e-2,
            rho: 1.0,
            eps_stop: 1e-8,
            power_tol: 1e-8,
            power_maxit: 2000,
            bfgs_tol: 1e-11,
            bfgs_maxit: 500,
            bfgs_memory: 10,
            max_outer_iters: 100,
            seed: 0,
        }
    }
}

impl SolverConfig {
    pub fn new(fc: usize, lambda0: f64, rho: f64) -> Self {
        Self { fc, lambda0, rho, ..Default::default() }
    }

    pub fn level(&self) -> usize {
        self.level.unwrap_or(self.fc)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidParameter(msg));
        if self.fc < 1 {
            return bad("fc must be at least 1".into());
        }
        if self.level() < self.fc {
            return bad(format!("relaxation level {} is below fc = {}", self.level(), self.fc));
        }
        for (name, v) in [
            ("lambda0", self.lambda0),
            ("rho", self.rho),
            ("eps_stop", self.eps_stop),
            ("power_tol", self.power_tol),
            ("bfgs_tol", self.bfgs_tol),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return bad(format!("{name} must be positive, got {v}"));
            }
        }
        if self.power_maxit == 0 || self.bfgs_maxit == 0 || self.bfgs_memory == 0 {
            return bad("iteration limits and the L-BFGS memory must be positive".into());
        }
        Ok(())
    }

    pub fn lbfgs(&self) -> LbfgsConfig {
        LbfgsConfig { memory: self.bfgs_memory, tol: self.bfgs_tol, max_iter: self.bfgs_maxit, ..Default::default() }
    }
}

/// One row of the solver trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub iter: usize,
    pub objective: f64,
    /// Minimum eigenvalue of the scaled gradient found by the oracle (`NaN` on row 0).
    pub lambda1: f64,
    pub rank: usize,
    /// Cumulative number of multidimensional FFTs.
    pub fft_calls: u64,
    /// Cumulative wall time in milliseconds.
    pub wall_ms: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StopReason {
    /// `|f_{t+1} - f_t| < eps_stop`; the last, unproductive step was discarded.
    ObjectiveStalled,
    /// The oracle returned the zero matrix.
    ZeroCandidate,
    MaxOuterIterations,
}

#[derive(Debug, Clone)]
pub struct SolveResult {
    pub state: LowRankState,
    pub trace: Vec<TraceRow>,
    /// Accepted Frank-Wolfe steps (the stopping check is not counted).
    pub iterations: usize,
    /// Oracle calls, including the one that triggered the stop.
    pub lmo_calls: usize,
    pub stop: StopReason,
    pub lambda: f64,
    pub level: usize,
    pub power_unconverged: usize,
    pub bfgs_failures: usize,
    pub fft_calls: u64,
    /// Frank-Wolfe duality gap `<X_t - S_t, nabla f(X_t)>` at every oracle call.
    pub fw_gaps: Vec<f64>,
}

impl SolveResult {
    pub fn converged(&self) -> bool {
        self.stop != StopReason::MaxOuterIterations
    }

    pub fn rank(&self) -> usize {
        self.state.rank()
    }
}

fn realify(u: &CMatrix) -> RVector {
    let n = u.len();
    RVector::from_iterator(2 * n, u.iter().map(|v| v.re).chain(u.iter().map(|v| v.im)))
}

fn complexify(x: &RVector, rows: usize, cols: usize) -> CMatrix {
    let n = rows * cols;
    CMatrix::from_iterator(rows, cols, (0..n).map(|i| Complex64::new(x[i], x[n + i])))
}

#[derive(Debug, Clone)]
pub struct BfgsReport {
    pub iterations: usize,
    pub status: LbfgsStatus,
}

/// L-BFGS descent on `F(U) = f(U U^h)` over the realified factor, started at `state`.
pub fn corrective_bfgs(eval: &Evaluator, state: LowRankState, cfg: &LbfgsConfig) -> Result<(LowRankState, BfgsReport)> {
    let (rows, cols) = state.factor().shape();
    if cols == 0 {
        return Ok((state, BfgsReport { iterations: 0, status: LbfgsStatus::SmallGradient }));
    }
    let res = lbfgs(
        |x| {
            let (f, g) = eval.value_and_factor_gradient(&complexify(x, rows, cols))?;
            Ok((f, realify(&g)))
        },
        realify(state.factor()),
        cfg,
    )?;
    let report = BfgsReport { iterations: res.iterations, status: res.status };
    if res.f >= state.objective() {
        return Ok((state, report));
    }
    let out = eval.state(complexify(&res.x, rows, cols))?;
    if out.objective() > state.objective() {
        return Ok((state, report));
    }
    Ok((out, report))
}

/// Frank-Wolfe duality gap `<X - S, nabla f(X)>` where `S` is the oracle output for the
/// smallest eigenvalue `lambda1` of the scaled gradient: `<S, G> = D0 min(lambda1, 0)`.
/// It bounds `f(X) - f*` from above and is nonnegative for feasible `X`.
pub fn frank_wolfe_gap(
    eval: &Evaluator,
    state: &LowRankState,
    grad: &GradientOperator,
    lambda1: f64,
    d0: f64,
) -> Result<f64> {
    let mut inner = 0.0;
    for col in state.factor().column_iter() {
        let u = col.into_owned();
        inner += u.dotc(&eval.apply_gradient(grad, &u)?).re;
    }
    Ok(inner - d0 * lambda1.min(0.0))
}

/// Runs FFW from the empty iterate.
pub fn ffw_solve(prob: &Problem, config: &SolverConfig) -> Result<SolveResult> {
    config.validate()?;
    if config.fc != prob.fc() {
        return Err(Error::InvalidParameter(format!(
            "configured fc = {} but the operator has fc = {}",
            config.fc,
            prob.fc()
        )));
    }
    let start = Instant::now();
    let eval = Evaluator::new(prob, config.level(), config.rho)?;
    let m = eval.moment_size();
    let lbfgs_cfg = config.lbfgs();
    let mut state = eval.empty_state()?;
    let d0 = 2.0 * state.objective();
    let row = |iter: usize, objective: f64, lambda1: f64, rank: usize| TraceRow {
        iter,
        objective,
        lambda1,
        rank,
        fft_calls: eval.fft_calls(),
        wall_ms: start.elapsed().as_secs_f64() * 1e3,
    };
    let mut trace = vec![row(0, state.objective(), f64::NAN, 0)];
    let mut iterations = 0;
    let mut lmo_calls = 0;
    let mut power_unconverged = 0;
    let mut bfgs_failures = 0;
    let mut stop = StopReason::MaxOuterIterations;
    let mut rank = 0;
    let mut fw_gaps = Vec::new();

    for t in 1..=config.max_outer_iters {
        let grad = eval.gradient(&state)?;
        let mut rng = substream(config.seed, t as u64);
        let eig = min_eigpair(&eval, &grad, config.power_tol, config.power_maxit, &mut rng)?;
        lmo_calls += 1;
        if !eig.converged {
            power_unconverged += 1;
            log::debug!("power iteration did not converge at outer iteration {t}");
        }
        fw_gaps.push(frank_wolfe_gap(&eval, &state, &grad, eig.value, d0)?);
        let cand = lmo(eig.value, &eig.vector, d0, m);
        if cand == Candidate::Zero {
            stop = StopReason::ZeroCandidate;
            trace.push(row(t, state.objective(), eig.value, rank));
            break;
        }
        let ls = line_search(&eval, &state, &cand)?;
        let stepped = eval.state(combine(&state, &cand, ls.alpha, ls.beta))?;
        let (next, report) = corrective_bfgs(&eval, stepped, &lbfgs_cfg)?;
        if report.status.is_failure() {
            bfgs_failures += 1;
        }
        if (state.objective() - next.objective()).abs() < config.eps_stop {
            stop = StopReason::ObjectiveStalled;
            trace.push(row(t, state.objective(), eig.value, rank));
            break;
        }
        state = next;
        iterations += 1;
        rank = gram_rank(&state.u1());
        trace.push(row(t, state.objective(), eig.value, rank));
    }
    Ok(SolveResult {
        state,
        trace,
        iterations,
        lmo_calls,
        stop,
        lambda: prob.lambda(),
        level: eval.level(),
        power_unconverged,
        bfgs_failures,
        fft_calls: eval.fft_calls(),
        fw_gaps,
    })
}

/// `sup_x |Phi^* p|` with `p = (y - A z) / lambda`, for coefficients `z` on `[-fc, fc]^d`.
pub fn certificate_sup(z: &CVector, prob: &Problem) -> Result<f64> {
    let op = prob.operator();
    let p = (prob.y() - op.apply(z)?) / Complex64::new(prob.lambda(), 0.0);
    let q = problem::adjoint_coefficients(op, &p)?;
    trig_poly_sup(&q, op.index_set(), sup_grid_points(op.fc()))
}

/// Certificate of a candidate measure.
pub fn certificate_sup_measure(m: &crate::DiscreteMeasure, prob: &Problem) -> Result<f64> {
    certificate_sup(&crate::measures::fourier_coefficients(m, prob.operator().index_set())?, prob)
}
