//! Dense tableau simplex for `min c^T x` subject to `A x = b`, `x >= 0`, started from a
//! caller-supplied feasible basis. Bland's rule makes it terminate on degenerate problems.

use crate::{Error, Result};

const EPS: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct LpSolution {
    pub value: f64,
    pub x: Vec<f64>,
    pub pivots: usize,
}

/// `a` is row-major `rows x cols`; `basis[i]` is the column that is the `i`-th unit vector
/// of `A` and `b >= 0`, so the basis is feasible.
pub fn simplex_from_basis(a: &[f64], b: &[f64], c: &[f64], mut basis: Vec<usize>) -> Result<LpSolution> {
    let rows = b.len();
    let cols = c.len();
    if a.len() != rows * cols || basis.len() != rows {
        return Err(Error::Shape(format!("LP with {rows} rows and {cols} columns got a {} matrix", a.len())));
    }
    if b.iter().any(|&v| v < 0.0) {
        return Err(Error::InvalidParameter("initial basis is infeasible".into()));
    }
    // tableau rows: [A | b]; cost row holds reduced costs and -objective
    let width = cols + 1;
    let mut t = vec![0.0; (rows + 1) * width];
    for i in 0..rows {
        t[i * width..i * width + cols].copy_from_slice(&a[i * cols..(i + 1) * cols]);
        t[i * width + cols] = b[i];
    }
    let z = rows * width;
    t[z..z + cols].copy_from_slice(c);
    for (i, &bc) in basis.iter().enumerate() {
        let cb = t[z + bc];
        if cb != 0.0 {
            for k in 0..width {
                t[z + k] -= cb * t[i * width + k];
            }
        }
    }
    let mut pivots = 0;
    while let Some(enter) = (0..cols).find(|&j| t[z + j] < -EPS) {
        let mut leave: Option<(usize, f64)> = None;
        for i in 0..rows {
            let aij = t[i * width + enter];
            if aij > EPS {
                let ratio = t[i * width + cols] / aij;
                let better = match leave {
                    None => true,
                    Some((l, r)) => ratio < r - EPS || (ratio <= r + EPS && basis[i] < basis[l]),
                };
                if better {
                    leave = Some((i, ratio));
                }
            }
        }
        let Some((p, _)) = leave else {
            return Err(Error::InvalidParameter("linear program is unbounded".into()));
        };
        let piv = t[p * width + enter];
        for k in 0..width {
            t[p * width + k] /= piv;
        }
        for i in 0..=rows {
            if i == p {
                continue;
            }
            let f = t[i * width + enter];
            if f != 0.0 {
                for k in 0..width {
                    t[i * width + k] -= f * t[p * width + k];
                }
            }
        }
        basis[p] = enter;
        pivots += 1;
    }
    let mut x = vec![0.0; cols];
    for (i, &bc) in basis.iter().enumerate() {
        x[bc] = t[i * width + cols];
    }
    let value = c.iter().zip(&x).map(|(ci, xi)| ci * xi).sum();
    Ok(LpSolution { value, x, pivots })
}
