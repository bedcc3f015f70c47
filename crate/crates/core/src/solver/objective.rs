use std::cell::Cell;

use nalgebra::DVector;
use num_complex::Complex64;

use super::problem::{adjoint_coefficients, Problem};
use crate::linalg::gram_rank;
use crate::toeplitz::{PreparedToeplitz, ToeplitzAlgebra, ToeplitzCoeffs};
use crate::{CMatrix, CVector, Error, IndexSet, Result};

/// The iterate `U = [U1; zeta]` of size `(m_l + 1) x r`, with `[R z; z^h tau] = U U^h`.
#[derive(Debug, Clone)]
pub struct LowRankState {
    factor: CMatrix,
    z: CVector,
    tau: f64,
    objective: f64,
}

impl LowRankState {
    pub fn factor(&self) -> &CMatrix {
        &self.factor
    }

    pub fn into_factor(self) -> CMatrix {
        self.factor
    }

    /// `m_l`, the number of rows of `U1`.
    pub fn moment_size(&self) -> usize {
        self.factor.nrows() - 1
    }

    /// Number of stored columns `r`.
    pub fn columns(&self) -> usize {
        self.factor.ncols()
    }

    pub fn u1(&self) -> CMatrix {
        self.factor.rows(0, self.moment_size()).into_owned()
    }

    /// The last row of `U`, as a column vector.
    pub fn zeta(&self) -> CVector {
        self.factor.row(self.moment_size()).transpose()
    }

    /// Coefficient vector on `[-fc, fc]^d`.
    pub fn z(&self) -> &CVector {
        &self.z
    }

    /// `z~ = U1 conj(zeta)` on the moment index set `[-l, l]^d`.
    pub fn z_full(&self) -> CVector {
        self.u1() * self.zeta().conjugate()
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn objective(&self) -> f64 {
        self.objective
    }

    /// Numerical rank of `R = U1 U1^h`.
    pub fn rank(&self) -> usize {
        gram_rank(&self.u1())
    }

    /// Dense `R = U1 U1^h`.
    pub fn moment_matrix(&self) -> CMatrix {
        let u1 = self.u1();
        &u1 * u1.adjoint()
    }
}

/// Objective and gradient machinery for one `(problem, l, rho)`.
///
/// Counts every multidimensional FFT it performs (Toeplitz products and projections,
/// and operator applications with an FFT representation).
#[derive(Debug)]
pub struct Evaluator<'a> {
    prob: &'a Problem,
    rho: f64,
    alg: ToeplitzAlgebra,
    // positions of [-fc, fc]^d inside [-l, l]^d
    embed: Vec<usize>,
    fft_calls: Cell<u64>,
}

/// `nabla f(X)` at a fixed state, ready for repeated products.
#[derive(Debug, Clone)]
pub struct GradientOperator {
    u1: CMatrix,
    toeplitz: PreparedToeplitz,
    // s^2 A^*(A z - y), embedded in [-l, l]^d
    g: CVector,
    c0: f64,
    lambda: f64,
    rho: f64,
}

struct Parts {
    z: CVector,
    tau: f64,
    residual: CVector,
    toeplitz: ToeplitzCoeffs,
    objective: f64,
}

impl<'a> Evaluator<'a> {
    pub fn new(prob: &'a Problem, level: usize, rho: f64) -> Result<Self> {
        if level < prob.fc() {
            return Err(Error::InvalidParameter(format!(
                "relaxation level {level} is below the cutoff frequency {}",
                prob.fc()
            )));
        }
        if !(rho > 0.0 && rho.is_finite()) {
            return Err(Error::InvalidParameter(format!("rho must be positive, got {rho}")));
        }
        let alg = ToeplitzAlgebra::new(level, prob.dim())?;
        let embed = prob.operator().index_set().embedding_into(alg.rows())?;
        Ok(Self { prob, rho, alg, embed, fft_calls: Cell::new(0) })
    }

    pub fn problem(&self) -> &Problem {
        self.prob
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    pub fn level(&self) -> usize {
        self.alg.level()
    }

    pub fn algebra(&self) -> &ToeplitzAlgebra {
        &self.alg
    }

    /// `m_l = (2l + 1)^d`.
    pub fn moment_size(&self) -> usize {
        self.alg.size()
    }

    pub fn moment_index(&self) -> &IndexSet {
        self.alg.rows()
    }

    pub fn fft_calls(&self) -> u64 {
        self.fft_calls.get()
    }

    pub(crate) fn count(&self, n: u64) {
        self.fft_calls.set(self.fft_calls.get() + n);
    }

    /// Restriction of a `[-l, l]^d` vector to `[-fc, fc]^d`.
    pub fn restrict(&self, full: &CVector) -> CVector {
        CVector::from_iterator(self.embed.len(), self.embed.iter().map(|&p| full[p]))
    }

    /// Zero extension of a `[-fc, fc]^d` vector to `[-l, l]^d`.
    pub fn extend(&self, v: &CVector) -> CVector {
        let mut out = CVector::zeros(self.moment_size());
        for (&p, x) in self.embed.iter().zip(v.iter()) {
            out[p] = *x;
        }
        out
    }

    fn check_factor(&self, u: &CMatrix) -> Result<()> {
        if u.nrows() != self.moment_size() + 1 {
            return Err(Error::Shape(format!("factor has {} rows, expected {}", u.nrows(), self.moment_size() + 1)));
        }
        Ok(())
    }

    fn parts(&self, u: &CMatrix) -> Result<Parts> {
        self.check_factor(u)?;
        let m = self.moment_size();
        let u1 = u.rows(0, m);
        let zeta = u.row(m).transpose();
        let prob = self.prob;
        let hnorm = prob.hilbert_norm();
        let z = self.restrict(&(u1 * zeta.conjugate()));
        let tau = zeta.norm_squared();
        let residual = prob.operator().apply(&z)? - prob.y();
        self.count(prob.operator().fft_cost());
        let toeplitz = self.alg.project_gram(&u1.into_owned())?;
        self.count(u.ncols() as u64 + 1);
        let gram = u1.adjoint() * u1;
        let penalty = (gram.norm_squared() - self.alg.frobenius_norm_sqr(&toeplitz)).max(0.0);
        let objective = prob.c0()
            * (0.5 * (u1.norm_squared() / m as f64 + tau)
                + hnorm.norm_sqr(&residual) / (2.0 * prob.lambda())
                + penalty / (2.0 * self.rho));
        Ok(Parts { z, tau, residual, toeplitz, objective })
    }

    /// The factored objective `f(U U^h)`.
    pub fn objective(&self, u: &CMatrix) -> Result<f64> {
        Ok(self.parts(u)?.objective)
    }

    pub fn state(&self, factor: CMatrix) -> Result<LowRankState> {
        let p = self.parts(&factor)?;
        Ok(LowRankState { factor, z: p.z, tau: p.tau, objective: p.objective })
    }

    pub fn empty_state(&self) -> Result<LowRankState> {
        self.state(CMatrix::zeros(self.moment_size() + 1, 0))
    }

    fn gradient_from_parts(&self, u: &CMatrix, p: &Parts) -> Result<GradientOperator> {
        let prob = self.prob;
        let toeplitz = self.alg.prepare(&p.toeplitz)?;
        self.count(1);
        let g = self.extend(&adjoint_coefficients(prob.operator(), &p.residual)?);
        self.count(prob.operator().fft_cost());
        Ok(GradientOperator {
            u1: u.rows(0, self.moment_size()).into_owned(),
            toeplitz,
            g,
            c0: prob.c0(),
            lambda: prob.lambda(),
            rho: self.rho,
        })
    }

    pub fn gradient(&self, state: &LowRankState) -> Result<GradientOperator> {
        let p = self.parts(state.factor())?;
        self.gradient_from_parts(state.factor(), &p)
    }

    /// `(nabla f) w` for the bordered vector `w = [w1; omega]`.
    pub fn apply_gradient(&self, grad: &GradientOperator, w: &CVector) -> Result<CVector> {
        self.count(2);
        grad.apply(&self.alg, w)
    }

    /// `F(U) = f(U U^h)` and its gradient `2 (nabla f) U`.
    pub fn value_and_factor_gradient(&self, u: &CMatrix) -> Result<(f64, CMatrix)> {
        let p = self.parts(u)?;
        let grad = self.gradient_from_parts(u, &p)?;
        let mut out = CMatrix::zeros(u.nrows(), u.ncols());
        for (j, col) in u.column_iter().enumerate() {
            let gw = self.apply_gradient(&grad, &col.into_owned())?;
            out.set_column(j, &(gw * Complex64::new(2.0, 0.0)));
        }
        Ok((p.objective, out))
    }

    /// `||R - P_T(R)||_F`, accurate even when `R` is nearly Toeplitz (dense for small sizes).
    pub fn toeplitz_residual(&self, state: &LowRankState) -> Result<f64> {
        let u1 = state.u1();
        if self.moment_size() <= crate::operators::DENSE_GATE / 4 {
            let r = &u1 * u1.adjoint();
            let t = self.alg.project_dense(&r)?;
            return Ok((r - self.alg.materialize(&t)?).norm());
        }
        let t = self.alg.project_gram(&u1)?;
        let gram = u1.adjoint() * &u1;
        Ok((gram.norm_squared() - self.alg.frobenius_norm_sqr(&t)).max(0.0).sqrt())
    }
}

impl GradientOperator {
    /// `m_l + 1`.
    pub fn dim(&self) -> usize {
        self.u1.nrows() + 1
    }

    /// The data-term vector `s^2 A^*(A z - y)` on `[-l, l]^d`.
    pub fn data_gradient(&self) -> &CVector {
        &self.g
    }

    fn apply(&self, alg: &ToeplitzAlgebra, w: &CVector) -> Result<CVector> {
        let m = self.u1.nrows();
        if w.len() != m + 1 {
            return Err(Error::Shape(format!("vector has length {}, expected {}", w.len(), m + 1)));
        }
        let w1 = w.rows(0, m).into_owned();
        let omega = w[m];
        let rw = &self.u1 * (self.u1.adjoint() * &w1);
        let pw = alg.apply_prepared(&self.toeplitz, &w1)?;
        let c = |v: f64| Complex64::new(v, 0.0);
        let top = &w1 * c(1.0 / (2.0 * m as f64)) + (rw - pw) * c(1.0 / self.rho) + &self.g * (omega / (2.0 * self.lambda));
        let bottom = self.g.dotc(&w1) / (2.0 * self.lambda) + omega * 0.5;
        let mut out = DVector::zeros(m + 1);
        out.rows_mut(0, m).copy_from(&(top * c(self.c0)));
        out[m] = bottom * self.c0;
        Ok(out)
    }
}

/// `f` at `state`, recomputed from the factor.
pub fn objective_value(state: &LowRankState, prob: &Problem, level: usize, rho: f64) -> Result<f64> {
    Evaluator::new(prob, level, rho)?.objective(state.factor())
}

/// `(nabla f) w` at `state`.
pub fn gradient_apply(state: &LowRankState, prob: &Problem, level: usize, rho: f64, w: &CVector) -> Result<CVector> {
    let eval = Evaluator::new(prob, level, rho)?;
    let grad = eval.gradient(state)?;
    eval.apply_gradient(&grad, w)
}
