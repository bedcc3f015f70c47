use num_complex::Complex64;

use super::lmo::Candidate;
use super::objective::{Evaluator, LowRankState};
use crate::{CVector, Result};

/// `q(alpha, beta) = f(alpha X + beta v v^h)` as the quadratic
/// `f(0) + c1 alpha + c2 beta + c11 alpha^2 + c22 beta^2 + c12 alpha beta`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LineSearchCoeffs {
    pub constant: f64,
    pub c1: f64,
    pub c2: f64,
    pub c11: f64,
    pub c22: f64,
    pub c12: f64,
}

impl LineSearchCoeffs {
    pub fn value(&self, alpha: f64, beta: f64) -> f64 {
        self.constant
            + self.c1 * alpha
            + self.c2 * beta
            + self.c11 * alpha * alpha
            + self.c22 * beta * beta
            + self.c12 * alpha * beta
    }

    /// The cases where the interior stationarity system is singular.
    pub fn is_degenerate(&self) -> bool {
        let det = 4.0 * self.c11 * self.c22 - self.c12 * self.c12;
        let scale = 4.0 * self.c11.abs() * self.c22.abs() + self.c12 * self.c12;
        (self.c11 == 0.0 && self.c22 == 0.0) || det.abs() <= 1e-14 * scale
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LineSearchResult {
    pub alpha: f64,
    pub beta: f64,
    /// Predicted objective `q(alpha, beta)`.
    pub value: f64,
    pub degenerate: bool,
}

/// Coefficients from factored quantities only: two operator applications, one Toeplitz
/// projection of the candidate and the Toeplitz projection of the state.
pub fn line_search_coeffs(eval: &Evaluator, state: &LowRankState, v: &CVector) -> Result<LineSearchCoeffs> {
    let prob = eval.problem();
    let m = eval.moment_size();
    let (c0, lambda, rho) = (prob.c0(), prob.lambda(), eval.rho());
    let hnorm = prob.hilbert_norm();
    let op = prob.operator();
    let alg = eval.algebra();

    let u1 = state.u1();
    let w1 = v.rows(0, m).into_owned();
    let omega = v[m];

    let az = op.apply(state.z())?;
    let zw = eval.restrict(&(&w1 * omega.conj()));
    let azw = op.apply(&zw)?;
    let y = prob.y();

    let gram = u1.adjoint() * &u1;
    let tr = u1.norm_squared();
    let tr_w = w1.norm_squared();
    let t_r = alg.project_gram(&u1)?;
    let t_w = alg.project_gram(&nalgebra::DMatrix::from_column_slice(m, 1, w1.as_slice()))?;
    let nr = (gram.norm_squared() - alg.frobenius_norm_sqr(&t_r)).max(0.0);
    let nw = (tr_w * tr_w - alg.frobenius_norm_sqr(&t_w)).max(0.0);
    let cross = (u1.adjoint() * &w1).norm_squared() - alg.frobenius_dot(&t_r, &t_w).re;
    eval.count(2 * op.fft_cost() + u1.ncols() as u64 + 3);

    Ok(LineSearchCoeffs {
        constant: c0 * hnorm.norm_sqr(y) / (2.0 * lambda),
        c1: c0 * (0.5 * (tr / m as f64 + state.tau()) - hnorm.inner(y, &az).re / lambda),
        c2: c0 * (0.5 * (tr_w / m as f64 + omega.norm_sqr()) - hnorm.inner(y, &azw).re / lambda),
        c11: c0 * (hnorm.norm_sqr(&az) / (2.0 * lambda) + nr / (2.0 * rho)),
        c22: c0 * (hnorm.norm_sqr(&azw) / (2.0 * lambda) + nw / (2.0 * rho)),
        c12: c0 * (hnorm.inner(&az, &azw).re / lambda + cross / rho),
    })
}

fn clamp_unit(t: f64) -> f64 {
    if t.is_nan() {
        0.0
    } else {
        t.clamp(0.0, 1.0)
    }
}

/// Exact minimizer of a convex quadratic over `{alpha, beta >= 0, alpha + beta <= 1}`:
/// the best among the vertices, the minimizer on each edge and the interior stationary point.
pub fn minimize_on_simplex(c: &LineSearchCoeffs) -> (f64, f64) {
    let mut cands = vec![(0.0, 0.0), (1.0, 0.0), (0.0, 1.0)];
    if c.c11 > 0.0 {
        cands.push((clamp_unit(-c.c1 / (2.0 * c.c11)), 0.0));
    }
    if c.c22 > 0.0 {
        cands.push((0.0, clamp_unit(-c.c2 / (2.0 * c.c22))));
    }
    // alpha = t, beta = 1 - t
    let a2 = c.c11 + c.c22 - c.c12;
    let a1 = c.c1 - c.c2 - 2.0 * c.c22 + c.c12;
    if a2 > 0.0 {
        let t = clamp_unit(-a1 / (2.0 * a2));
        cands.push((t, 1.0 - t));
    }
    let det = 4.0 * c.c11 * c.c22 - c.c12 * c.c12;
    if det > 0.0 {
        let alpha = (-2.0 * c.c22 * c.c1 + c.c12 * c.c2) / det;
        let beta = (-2.0 * c.c11 * c.c2 + c.c12 * c.c1) / det;
        if alpha >= 0.0 && beta >= 0.0 && alpha + beta <= 1.0 {
            cands.push((alpha, beta));
        }
    }
    cands
        .into_iter()
        .min_by(|a, b| c.value(a.0, a.1).total_cmp(&c.value(b.0, b.1)))
        .expect("candidate list is nonempty")
}

/// Best point of the `(n + 1)`-point-per-side grid on the simplex.
pub fn grid_search(c: &LineSearchCoeffs, n: usize) -> (f64, f64) {
    let mut best = (0.0, 0.0);
    let mut best_val = c.value(0.0, 0.0);
    for i in 0..=n {
        for j in 0..=(n - i) {
            let (a, b) = (i as f64 / n as f64, j as f64 / n as f64);
            let v = c.value(a, b);
            if v < best_val {
                best_val = v;
                best = (a, b);
            }
        }
    }
    best
}

/// Minimizes `f(alpha X + beta v v^h)` over the simplex. A zero candidate fixes `beta = 0`.
pub fn line_search(eval: &Evaluator, state: &LowRankState, candidate: &Candidate) -> Result<LineSearchResult> {
    let m = eval.moment_size();
    let v = match candidate {
        Candidate::Atom(v) => v.clone(),
        Candidate::Zero => CVector::zeros(m + 1),
    };
    let mut c = line_search_coeffs(eval, state, &v)?;
    if matches!(candidate, Candidate::Zero) {
        c.c2 = 0.0;
        c.c22 = 0.0;
        c.c12 = 0.0;
        let alpha = if c.c11 > 0.0 { clamp_unit(-c.c1 / (2.0 * c.c11)) } else if c.c1 < 0.0 { 1.0 } else { 0.0 };
        return Ok(LineSearchResult { alpha, beta: 0.0, value: c.value(alpha, 0.0), degenerate: false });
    }
    if state.columns() == 0 {
        // the alpha direction is void
        c.c1 = 0.0;
        c.c11 = 0.0;
        c.c12 = 0.0;
        let beta = if c.c22 > 0.0 { clamp_unit(-c.c2 / (2.0 * c.c22)) } else if c.c2 < 0.0 { 1.0 } else { 0.0 };
        return Ok(LineSearchResult { alpha: 0.0, beta, value: c.value(0.0, beta), degenerate: false });
    }
    let (mut alpha, mut beta) = minimize_on_simplex(&c);
    let degenerate = c.is_degenerate();
    if degenerate {
        log::warn!("degenerate line search (c11={:e}, c22={:e}, c12={:e}); checking a 101x101 grid", c.c11, c.c22, c.c12);
        let (ga, gb) = grid_search(&c, 100);
        if c.value(ga, gb) < c.value(alpha, beta) {
            (alpha, beta) = (ga, gb);
        }
    }
    Ok(LineSearchResult { alpha, beta, value: c.value(alpha, beta), degenerate })
}

/// `[sqrt(alpha) U, sqrt(beta) v]`, dropping the new column when `beta = 0`.
pub fn combine(state: &LowRankState, candidate: &Candidate, alpha: f64, beta: f64) -> crate::CMatrix {
    let u = state.factor() * Complex64::new(alpha.sqrt(), 0.0);
    match candidate {
        Candidate::Atom(v) if beta > 0.0 => {
            let r = u.ncols();
            let mut out = u.insert_column(r, Complex64::new(0.0, 0.0));
            out.set_column(r, &(v * Complex64::new(beta.sqrt(), 0.0)));
            out
        }
        _ => u,
    }
}
