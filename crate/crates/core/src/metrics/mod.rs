//! Recovery metrics: tolerance matching, Jaccard index, flat norm and the relative
//! support error.

mod lp;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

pub use lp::{simplex_from_basis, LpSolution};

use crate::measures::torus_distance;
use crate::{DiscreteMeasure, Error, Result};

/// Largest union support the flat-norm LP accepts.
pub const FLAT_NORM_GATE: usize = 60;

/// Tolerance used for the Jaccard index throughout.
pub const JACCARD_DELTA: f64 = 1e-2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matching {
    /// `(ground-truth index, recovered index)`, sorted by the first entry.
    pub pairs: Vec<(usize, usize)>,
    pub unmatched_truth: Vec<usize>,
    pub unmatched_recovered: Vec<usize>,
    pub delta: f64,
    pub total_distance: f64,
}

impl Matching {
    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn jaccard(&self) -> f64 {
        let n0 = self.pairs.len() + self.unmatched_truth.len();
        let nr = self.pairs.len() + self.unmatched_recovered.len();
        if n0 == 0 && nr == 0 {
            return 1.0;
        }
        self.pairs.len() as f64 / (n0 + nr - self.pairs.len()) as f64
    }
}

/// Minimum-cost perfect assignment on a square cost matrix (Hungarian method with
/// potentials, `O(n^3)`). Returns the column assigned to each row.
fn assignment(cost: &[f64], n: usize) -> Vec<usize> {
    let inf = f64::INFINITY;
    // 1-based arrays, column 0 is the virtual start
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut owner = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        owner[0] = i;
        let mut j0 = 0;
        let mut minv = vec![inf; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = owner[j0];
            let mut delta = inf;
            let mut j1 = 0;
            for j in 1..=n {
                if !used[j] {
                    let cur = cost[(i0 - 1) * n + (j - 1)] - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[owner[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if owner[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            owner[j0] = owner[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut row_to_col = vec![0; n];
    for j in 1..=n {
        if owner[j] > 0 {
            row_to_col[owner[j] - 1] = j - 1;
        }
    }
    row_to_col
}

fn distances(s0: &[Vec<f64>], sr: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
    s0.iter().map(|a| sr.iter().map(|b| torus_distance(a, b)).collect()).collect()
}

/// Maximum-cardinality matching between `s0` and `sr` using only pairs at torus distance
/// `<= delta`; among maximum matchings, one of minimum total distance.
///
/// Solved as a single assignment problem: an admissible pair costs `d - M` with `M`
/// larger than any possible total distance, a forbidden or padded pair costs 0, so the
/// optimum first maximizes the number of admissible pairs and then minimizes distance.
pub fn match_supports(s0: &[Vec<f64>], sr: &[Vec<f64>], delta: f64) -> Result<Matching> {
    if !(delta > 0.0) {
        return Err(Error::InvalidParameter(format!("matching tolerance must be positive, got {delta}")));
    }
    let d = distances(s0, sr)?;
    let n = s0.len().max(sr.len());
    let big = n as f64 * delta.min(f64::MAX / (4.0 * n.max(1) as f64)) + 1.0;
    let mut cost = vec![0.0; n * n];
    for (i, row) in d.iter().enumerate() {
        for (j, &dij) in row.iter().enumerate() {
            if dij <= delta {
                cost[i * n + j] = dij - big;
            }
        }
    }
    let assigned = if n == 0 { Vec::new() } else { assignment(&cost, n) };
    let mut pairs = Vec::new();
    let mut total_distance = 0.0;
    for (i, &j) in assigned.iter().enumerate() {
        if i < s0.len() && j < sr.len() && d[i][j] <= delta {
            pairs.push((i, j));
            total_distance += d[i][j];
        }
    }
    let unmatched_truth = (0..s0.len()).filter(|i| !pairs.iter().any(|p| p.0 == *i)).collect();
    let unmatched_recovered = (0..sr.len()).filter(|j| !pairs.iter().any(|p| p.1 == *j)).collect();
    Ok(Matching { pairs, unmatched_truth, unmatched_recovered, delta, total_distance })
}

/// `|match| / (|S0| + |Sr| - |match|)`; 1 when both supports are empty.
pub fn jaccard(s0: &[Vec<f64>], sr: &[Vec<f64>], delta: f64) -> Result<f64> {
    Ok(match_supports(s0, sr, delta)?.jaccard())
}

/// `||x0 - xr||_F / ||x0||_F` over the minimum-distance perfect matching, with each
/// difference taken on the torus lift (components in `[-1/2, 1/2)`).
pub fn support_relative_error(x0: &[Vec<f64>], xr: &[Vec<f64>]) -> Result<f64> {
    if x0.len() != xr.len() {
        return Err(Error::UnmatchedAtoms(x0.len().abs_diff(xr.len())));
    }
    if x0.is_empty() {
        return Ok(0.0);
    }
    let d = distances(x0, xr)?;
    let n = x0.len();
    let cost: Vec<f64> = d.iter().flatten().copied().collect();
    let assigned = assignment(&cost, n);
    let mut num = 0.0;
    let mut den = 0.0;
    for (i, &j) in assigned.iter().enumerate() {
        for (a, b) in x0[i].iter().zip(&xr[j]) {
            num += crate::measures::torus_delta(*a, *b).powi(2);
            den += a * a;
        }
    }
    if den == 0.0 {
        return Err(Error::InvalidParameter("ground-truth positions have zero norm".into()));
    }
    Ok((num / den).sqrt())
}

/// Union support of two measures with exactly coincident points merged, and the signed
/// masses of `m1 - m2` on it.
fn signed_difference(m1: &DiscreteMeasure, m2: &DiscreteMeasure) -> Result<(Vec<Vec<f64>>, Vec<Complex64>)> {
    if m1.dim() != m2.dim() {
        return Err(Error::DimensionMismatch { expected: m1.dim(), found: m2.dim() });
    }
    let mut points: Vec<Vec<f64>> = Vec::new();
    let mut mass: Vec<Complex64> = Vec::new();
    let sources = [(m1, 1.0), (m2, -1.0)];
    for (m, sign) in sources {
        for (x, a) in m.positions().iter().zip(m.amplitudes()) {
            match points.iter().position(|p| p == x) {
                Some(k) => mass[k] += a * sign,
                None => {
                    points.push(x.clone());
                    mass.push(a * sign);
                }
            }
        }
    }
    Ok((points, mass))
}

/// `sup { sum_i m_i f_i : |f_i| <= 1, f_i - f_j <= d_ij }` for real masses, through its
/// dual transshipment program: move mass between points at cost `d_ij` per unit, or
/// create/destroy it at cost 1 per unit.
pub fn flat_norm_real(points: &[Vec<f64>], mass: &[f64]) -> Result<f64> {
    let n = points.len();
    if mass.len() != n {
        return Err(Error::Shape(format!("{n} points but {} masses", mass.len())));
    }
    if n > FLAT_NORM_GATE {
        return Err(Error::SizeGate { size: n, limit: FLAT_NORM_GATE });
    }
    if n == 0 {
        return Ok(0.0);
    }
    // canonical order and global sign (the value is invariant under m -> -m), so that
    // swapping or permuting the inputs gives bitwise-identical programs
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| {
        points[i].iter().zip(&points[j]).map(|(a, b)| a.total_cmp(b)).find(|o| o.is_ne()).unwrap_or(std::cmp::Ordering::Equal)
    });
    let flip = order.iter().map(|&i| mass[i]).find(|&m| m != 0.0).is_some_and(|m| m < 0.0);
    let points: Vec<&Vec<f64>> = order.iter().map(|&i| &points[i]).collect();
    let mass: Vec<f64> = order.iter().map(|&i| if flip { -mass[i] } else { mass[i] }).collect();
    // columns: x_ij (i != j) flow i -> j, then b_i (i -> sink), then a_i (source -> i)
    let arcs: Vec<(usize, usize)> = (0..n).flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j))).collect();
    let cols = arcs.len() + 2 * n;
    let mut a = vec![0.0; n * cols];
    let mut c = vec![0.0; cols];
    for (k, &(i, j)) in arcs.iter().enumerate() {
        a[i * cols + k] = 1.0;
        a[j * cols + k] = -1.0;
        c[k] = torus_distance(points[i], points[j])?;
    }
    let b_col = arcs.len();
    let a_col = b_col + n;
    let mut basis = Vec::with_capacity(n);
    let mut rhs = Vec::with_capacity(n);
    for i in 0..n {
        a[i * cols + b_col + i] = 1.0;
        a[i * cols + a_col + i] = -1.0;
        c[b_col + i] = 1.0;
        c[a_col + i] = 1.0;
        // flip rows with negative mass so that the start basis is the identity
        if mass[i] < 0.0 {
            for v in &mut a[i * cols..(i + 1) * cols] {
                *v = -*v;
            }
            basis.push(a_col + i);
            rhs.push(-mass[i]);
        } else {
            basis.push(b_col + i);
            rhs.push(mass[i]);
        }
    }
    Ok(simplex_from_basis(&a, &rhs, &c, basis)?.value.max(0.0))
}

/// Flat (dual bounded-Lipschitz) distance between two measures under the torus geodesic
/// metric. Complex amplitudes: the real and imaginary parts are measured separately and
/// combined as `sqrt(re^2 + im^2)`.
pub fn flat_norm(m1: &DiscreteMeasure, m2: &DiscreteMeasure) -> Result<f64> {
    let (points, mass) = signed_difference(m1, m2)?;
    let re: Vec<f64> = mass.iter().map(|z| z.re).collect();
    let fr = flat_norm_real(&points, &re)?;
    if mass.iter().all(|z| z.im == 0.0) {
        return Ok(fr);
    }
    let im: Vec<f64> = mass.iter().map(|z| z.im).collect();
    Ok(fr.hypot(flat_norm_real(&points, &im)?))
}
