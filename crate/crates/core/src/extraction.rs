//! Atom positions from a low-rank moment factor (the eigenvalue method) and amplitudes
//! by least squares.
//!
//! If `U` spans the moment vectors `v(x_j)`, its column echelon form `U~` satisfies
//! `U~[gamma, :] = I` on the pivot rows `gamma`, and the rows `gamma + e_n` form the
//! multiplication matrix `N_n`, whose eigenvalues are `e^{-2 i pi x_{j,n}}`. A random
//! convex combination of the `N_n` has simple eigenvalues; its Schur basis triangularizes
//! all `N_n` at once and pairs up the coordinates of each atom.

use std::f64::consts::PI;

use nalgebra::{Schur, SVD};
use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::index::colex_cmp_points;
use crate::linalg::{gram_rank, truncate_factor};
use crate::measures::{moment_vector, torus_distance, wrap_unit};
use crate::rng::substream;
use crate::solver::Problem;
use crate::{CMatrix, CVector, DiscreteMeasure, Error, IndexSet, Result};

/// Relative magnitude below which a candidate pivot is treated as zero.
pub const PIVOT_TOLERANCE: f64 = 1e-9;

/// Pivot selection in [`column_echelon`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PivotRule {
    /// Rows in order; the first row with a nonnegligible remaining entry becomes the
    /// next pivot row, with the largest entry of that row as pivot.
    RowScan,
    /// The largest remaining entry over all eligible rows and remaining columns.
    Complete,
}

/// Reduced column echelon form `U~ = U C` with `U~[pivots[j], :] = e_j^T`.
pub fn column_echelon(u: &CMatrix, rule: PivotRule, eligible: Option<&[bool]>) -> Result<(CMatrix, Vec<usize>)> {
    let (m, r) = u.shape();
    let tol = PIVOT_TOLERANCE * u.norm();
    let mut w = u.clone();
    let mut pivots = Vec::with_capacity(r);
    let mut used = vec![false; m];
    let allowed = |i: usize| eligible.is_none_or(|e| e[i]);
    let mut next_row = 0;
    for j in 0..r {
        let choice = match rule {
            PivotRule::RowScan => {
                let mut found = None;
                while next_row < m && found.is_none() {
                    let i = next_row;
                    next_row += 1;
                    if !allowed(i) {
                        continue;
                    }
                    let (c, v) = (j..r).map(|c| (c, w[(i, c)].norm())).fold((j, -1.0), |a, b| if b.1 > a.1 { b } else { a });
                    if v > tol {
                        found = Some((i, c));
                    }
                }
                found
            }
            PivotRule::Complete => {
                let mut best: Option<(usize, usize, f64)> = None;
                for i in (0..m).filter(|&i| !used[i] && allowed(i)) {
                    for c in j..r {
                        let v = w[(i, c)].norm();
                        if v > tol && best.is_none_or(|b| v > b.2) {
                            best = Some((i, c, v));
                        }
                    }
                }
                best.map(|(i, c, _)| (i, c))
            }
        };
        let Some((p, c)) = choice else {
            return Err(Error::RankDeficient { expected: r, found: j });
        };
        w.swap_columns(j, c);
        used[p] = true;
        let piv = w[(p, j)];
        let col = w.column(j) / piv;
        w.set_column(j, &col);
        w[(p, j)] = Complex64::new(1.0, 0.0);
        for k in (0..r).filter(|&k| k != j) {
            let factor = w[(p, k)];
            if factor != Complex64::new(0.0, 0.0) {
                let updated = w.column(k) - &col * factor;
                w.set_column(k, &updated);
                w[(p, k)] = Complex64::new(0.0, 0.0);
            }
        }
        pivots.push(p);
    }
    // present columns in pivot-row order
    let mut order: Vec<usize> = (0..r).collect();
    order.sort_by_key(|&j| pivots[j]);
    let sorted = CMatrix::from_fn(m, r, |i, j| w[(i, order[j])]);
    let pivots = order.iter().map(|&j| pivots[j]).collect();
    Ok((sorted, pivots))
}

/// Rows of `[-l, l]^d` whose shifts by every `e_n` stay inside the cube.
pub fn interior_rows(level: usize, dim: usize) -> Result<Vec<bool>> {
    let idx = IndexSet::new(dim, level)?;
    Ok(idx.iter().map(|k| k.iter().all(|&v| v < level as i64)).collect())
}

/// `N_n = U~[gamma + e_n, :]` for `n = 1..d`.
pub fn multiplication_matrices(ut: &CMatrix, pivots: &[usize], level: usize, dim: usize) -> Result<Vec<CMatrix>> {
    let idx = IndexSet::new(dim, level)?;
    if ut.nrows() != idx.len() {
        return Err(Error::Shape(format!("factor has {} rows, expected {}", ut.nrows(), idx.len())));
    }
    let r = ut.ncols();
    (0..dim)
        .map(|axis| {
            let mut n = CMatrix::zeros(pivots.len(), r);
            for (j, &p) in pivots.iter().enumerate() {
                let mut k = idx.multi_index(p);
                k[axis] += 1;
                let row = idx.position(&k).ok_or(Error::PivotOutsideIndexSet { index: k, axis })?;
                n.set_row(j, &ut.row(row));
            }
            Ok(n)
        })
        .collect()
}

/// Positions recovered from a factor, with the `|z_{j,n}|` quality diagnostic.
#[derive(Debug, Clone, PartialEq)]
pub struct Support {
    pub positions: Vec<Vec<f64>>,
    /// `|z_{j,n}|`, one row per atom; close to 1 for genuine moment factors.
    pub moduli: Vec<Vec<f64>>,
    /// Pivot multi-indices of the echelon form.
    pub pivots: Vec<Vec<i64>>,
}

fn simplex_weights<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> Vec<f64> {
    let e: Vec<f64> = (0..dim).map(|_| -(1.0 - rng.random::<f64>()).ln()).collect();
    let s: f64 = e.iter().sum();
    e.iter().map(|v| v / s).collect()
}

fn min_eigengap(t: &CMatrix) -> f64 {
    let n = t.nrows();
    let mut gap = f64::INFINITY;
    for i in 0..n {
        for j in (i + 1)..n {
            gap = gap.min((t[(i, i)] - t[(j, j)]).norm());
        }
    }
    gap
}

/// Support of the measure whose moment factor is `U1` (`m_l x r`).
pub fn extract_support(u1: &CMatrix, level: usize, dim: usize, seed: u64) -> Result<Support> {
    let idx = IndexSet::new(dim, level)?;
    if u1.nrows() != idx.len() {
        return Err(Error::Shape(format!("factor has {} rows, expected {}", u1.nrows(), idx.len())));
    }
    let u = truncate_factor(u1);
    let r = u.ncols();
    if r == 0 {
        return Ok(Support { positions: Vec::new(), moduli: Vec::new(), pivots: Vec::new() });
    }
    let interior = interior_rows(level, dim)?;
    let (ut, pivots) = column_echelon(&u, PivotRule::Complete, Some(&interior))?;
    let mats = multiplication_matrices(&ut, &pivots, level, dim)?;

    let mut attempt = 0;
    let q = loop {
        let weights = simplex_weights(dim, &mut substream(seed, attempt));
        let mut n = CMatrix::zeros(r, r);
        for (w, m) in weights.iter().zip(&mats) {
            n += m * Complex64::new(*w, 0.0);
        }
        let (q, t) = Schur::new(n).unpack();
        if min_eigengap(&t) >= 1e-8 || attempt == 1 {
            if attempt == 1 && min_eigengap(&t) < 1e-8 {
                log::warn!("clustered eigenvalues in the multiplication matrix; positions may be inaccurate");
            }
            break q;
        }
        attempt += 1;
    };

    let mut atoms: Vec<(Vec<f64>, Vec<f64>)> = (0..r)
        .map(|j| {
            let qj = q.column(j);
            let zs: Vec<Complex64> = mats.iter().map(|m| qj.dotc(&(m * qj))).collect();
            (zs.iter().map(|z| wrap_unit(-z.arg() / (2.0 * PI))).collect(), zs.iter().map(|z| z.norm()).collect())
        })
        .collect();
    atoms.sort_by(|a, b| colex_cmp_points(&a.0, &b.0));
    let (positions, moduli) = atoms.into_iter().unzip();
    Ok(Support { positions, moduli, pivots: pivots.iter().map(|&p| idx.multi_index(p)).collect() })
}

/// How amplitudes are fitted once positions are known.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AmplitudeMethod {
    /// Least squares against the observation `y`.
    #[default]
    Lsq,
    /// Least squares against `A z`, the solver's fitted data (`y - lambda p`).
    Debiased,
}

impl std::str::FromStr for AmplitudeMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "lsq" => Ok(Self::Lsq),
            "debiased" => Ok(Self::Debiased),
            other => Err(Error::Parse(format!("unknown amplitude method `{other}` (expected lsq or debiased)"))),
        }
    }
}

/// Largest condition number of the atom Gram matrix accepted by [`recover_amplitudes`].
pub const MAX_GRAM_CONDITION: f64 = 1e12;

/// The matrix `[A v_c(x_1), ..., A v_c(x_r)]`.
pub fn atom_matrix(positions: &[Vec<f64>], prob: &Problem) -> Result<CMatrix> {
    let op = prob.operator();
    let mut out = CMatrix::zeros(op.output_dim(), positions.len());
    for (j, x) in positions.iter().enumerate() {
        if x.len() != op.dim() {
            return Err(Error::DimensionMismatch { expected: op.dim(), found: x.len() });
        }
        out.set_column(j, &op.apply(&moment_vector(x, op.index_set()))?);
    }
    Ok(out)
}

fn closest_pair(positions: &[Vec<f64>]) -> Result<(usize, usize)> {
    let mut best = (0, 1, f64::INFINITY);
    for i in 0..positions.len() {
        for j in (i + 1)..positions.len() {
            let d = torus_distance(&positions[i], &positions[j])?;
            if d < best.2 {
                best = (i, j, d);
            }
        }
    }
    Ok((best.0, best.1))
}

/// Amplitudes minimizing `||target - sum_j a_j A v_c(x_j)||_H`; `target` is `y`, or `A z`
/// in debiased mode (`z` on `[-fc, fc]^d`).
pub fn recover_amplitudes(
    positions: &[Vec<f64>],
    prob: &Problem,
    method: AmplitudeMethod,
    z: Option<&CVector>,
) -> Result<CVector> {
    if positions.is_empty() {
        return Ok(CVector::zeros(0));
    }
    let target = match (method, z) {
        (AmplitudeMethod::Lsq, _) => prob.y().clone(),
        (AmplitudeMethod::Debiased, Some(z)) => prob.operator().apply(z)?,
        (AmplitudeMethod::Debiased, None) => {
            return Err(Error::InvalidParameter("debiased amplitudes need the solver coefficients".into()))
        }
    };
    let phi = atom_matrix(positions, prob)?;
    let svd = SVD::new(phi, true, true);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    let cond = if smin > 0.0 { (smax / smin).powi(2) } else { f64::INFINITY };
    if positions.len() > prob.operator().output_dim() || !(cond < MAX_GRAM_CONDITION) {
        let (first, second) = closest_pair(positions)?;
        return Err(Error::IllConditioned { cond, first, second });
    }
    svd.solve(&target, 0.0).map_err(|e| Error::Shape(e.to_string()))
}

/// Whether `R = U1 U1^h` is a flat extension of its `[-(l-1), l-1]^d` principal block.
pub fn flatness_check(u1: &CMatrix, level: usize, dim: usize) -> Result<bool> {
    if level < 2 {
        return Err(Error::InvalidParameter(format!("flatness needs l >= 2, got {level}")));
    }
    let outer = IndexSet::new(dim, level)?;
    if u1.nrows() != outer.len() {
        return Err(Error::Shape(format!("factor has {} rows, expected {}", u1.nrows(), outer.len())));
    }
    if u1.ncols() == 0 {
        return Ok(true);
    }
    let rows = IndexSet::new(dim, level - 1)?.embedding_into(&outer)?;
    let inner = CMatrix::from_fn(rows.len(), u1.ncols(), |i, j| u1[(rows[i], j)]);
    Ok(gram_rank(u1) == gram_rank(&inner))
}

/// Everything recovered from a solver state.
#[derive(Debug, Clone)]
pub struct ExtractionResult {
    pub measure: DiscreteMeasure,
    pub pivots: Vec<Vec<i64>>,
    pub flat: bool,
    /// `||y - Phi_c mu||_H`.
    pub residual: f64,
    /// `|z_{j,n}|` per atom.
    pub moduli: Vec<Vec<f64>>,
    /// `|eta(x_j)|` of the solver's certificate at each recovered atom.
    pub certificate_at_atoms: Vec<f64>,
}

/// Support, amplitudes and diagnostics from a factor `U1` and the solver coefficients `z`.
pub fn extract(
    u1: &CMatrix,
    z: &CVector,
    prob: &Problem,
    level: usize,
    method: AmplitudeMethod,
    seed: u64,
) -> Result<ExtractionResult> {
    let dim = prob.dim();
    let support = extract_support(u1, level, dim, seed)?;
    let amplitudes = recover_amplitudes(&support.positions, prob, method, Some(z))?;
    let measure = DiscreteMeasure::new(dim, support.positions.clone(), amplitudes.iter().copied().collect())?;
    let op = prob.operator();
    let fitted = op.apply(&crate::measures::fourier_coefficients(&measure, op.index_set())?)?;
    let residual = prob.hilbert_norm().norm(&(prob.y() - fitted));
    let p = (prob.y() - op.apply(z)?) / Complex64::new(prob.lambda(), 0.0);
    let s = prob.hilbert_norm().scale();
    let eta = op.adjoint(&p)? * Complex64::new(s * s, 0.0);
    let certificate_at_atoms = support
        .positions
        .iter()
        .map(|x| moment_vector(x, op.index_set()).dotc(&eta).norm())
        .collect();
    let flat = if level >= 2 { flatness_check(u1, level, dim)? } else { true };
    Ok(ExtractionResult {
        measure,
        pivots: support.pivots,
        flat,
        residual,
        moduli: support.moduli,
        certificate_at_atoms,
    })
}
