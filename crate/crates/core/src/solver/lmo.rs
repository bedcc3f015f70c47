use num_complex::Complex64;
use rand::Rng;

use super::objective::{Evaluator, GradientOperator};
use crate::rng::complex_uniform;
use crate::{CVector, Result};

/// Outcome of a power iteration.
#[derive(Debug, Clone)]
pub struct EigPair {
    pub value: f64,
    pub vector: CVector,
    pub converged: bool,
    pub iterations: usize,
}

/// Dominant eigenpair of the Hermitian map `x -> apply(x) - shift x`.
///
/// Stops once consecutive unit iterates agree up to a phase, `||x_{k+1} - e^{i theta} x_k|| < tol`
/// (the chordal angle), or after `maxit` products. The returned value is the Rayleigh
/// quotient of the shifted map at the final iterate.
pub fn power_iteration<F>(mut apply: F, start: CVector, shift: f64, tol: f64, maxit: usize) -> Result<EigPair>
where
    F: FnMut(&CVector) -> Result<CVector>,
{
    let mut x = &start / Complex64::new(start.norm(), 0.0);
    let mut value = 0.0;
    for it in 1..=maxit {
        let y = apply(&x)? - &x * Complex64::new(shift, 0.0);
        value = x.dotc(&y).re;
        let ny = y.norm();
        if ny == 0.0 {
            return Ok(EigPair { value: 0.0, vector: x, converged: true, iterations: it });
        }
        let xn = y / Complex64::new(ny, 0.0);
        let overlap = x.dotc(&xn);
        let phase = if overlap.norm() > 0.0 { overlap / overlap.norm() } else { Complex64::new(1.0, 0.0) };
        let gap = (&xn - &x * phase).norm();
        x = xn;
        if gap < tol {
            let y = apply(&x)? - &x * Complex64::new(shift, 0.0);
            return Ok(EigPair { value: x.dotc(&y).re, vector: x, converged: true, iterations: it });
        }
    }
    Ok(EigPair { value, vector: x, converged: false, iterations: maxit })
}

/// Smallest eigenpair of a Hermitian map by the two-run scheme: a first power iteration
/// finds the dominant eigenvalue `a`; if `a >= 0` a second run on `M - a I` finds
/// `b <= 0`, and `lambda_1 = a + b`.
pub fn min_eigpair_with<F, R>(mut apply: F, n: usize, tol: f64, maxit: usize, rng: &mut R) -> Result<EigPair>
where
    F: FnMut(&CVector) -> Result<CVector>,
    R: Rng + ?Sized,
{
    let start = CVector::from_iterator(n, (0..n).map(|_| complex_uniform(rng)));
    let first = power_iteration(&mut apply, start.clone(), 0.0, tol, maxit)?;
    if first.value < 0.0 {
        return Ok(first);
    }
    let second = power_iteration(&mut apply, start, first.value, tol, maxit)?;
    Ok(EigPair {
        value: first.value + second.value,
        vector: second.vector,
        converged: second.converged,
        iterations: first.iterations + second.iterations,
    })
}

/// `J^{-1/2} (nabla f) J^{-1/2}` with `J = diag(I / m_l, 1)`.
pub fn scaled_gradient_apply(eval: &Evaluator, grad: &GradientOperator, w: &CVector) -> Result<CVector> {
    let m = grad.dim() - 1;
    let s = Complex64::new((m as f64).sqrt(), 0.0);
    let mut v = w.clone();
    v.rows_mut(0, m).scale_mut(s.re);
    let mut out = eval.apply_gradient(grad, &v)?;
    out.rows_mut(0, m).scale_mut(s.re);
    Ok(out)
}

/// Minimum eigenpair of the scaled gradient at the state `grad` was built from.
pub fn min_eigpair<R: Rng + ?Sized>(
    eval: &Evaluator,
    grad: &GradientOperator,
    tol: f64,
    maxit: usize,
    rng: &mut R,
) -> Result<EigPair> {
    min_eigpair_with(|w| scaled_gradient_apply(eval, grad, w), grad.dim(), tol, maxit, rng)
}

/// Frank-Wolfe vertex over `{X >= 0 : <X, J> <= D0}`.
#[derive(Debug, Clone, PartialEq)]
pub enum Candidate {
    /// The oracle returned the zero matrix (`lambda_1 >= 0`).
    Zero,
    /// Rank-one vertex `v v^h`.
    Atom(CVector),
}

/// `v = sqrt(D0) J^{-1/2} e_1` when `lambda_1 < 0`, zero otherwise.
pub fn lmo(lambda1: f64, e1: &CVector, d0: f64, m: usize) -> Candidate {
    if lambda1 >= 0.0 {
        return Candidate::Zero;
    }
    let mut v = e1 * Complex64::new(d0.sqrt(), 0.0);
    v.rows_mut(0, m).scale_mut((m as f64).sqrt());
    Candidate::Atom(v)
}
