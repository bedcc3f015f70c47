use num_complex::Complex64;

use crate::fft::FftNd;
use crate::{CVector, Error, HilbertNorm, IndexSet, Result, SpectralOperator};

/// Per-axis number of evaluation points used for every supremum of a
/// trigonometric polynomial of degree `fc`.
pub fn sup_grid_points(fc: usize) -> usize {
    16 * (2 * fc + 1)
}

/// `max_x |sum_k c_k e^{2 i pi <k, x>}|`.
///
/// The polynomial is evaluated on the grid `{n / points}^d` with one zero-padded inverse
/// FFT; the best grid local maxima are then refined by a damped Newton ascent on
/// `|p|^2`, so the result does not depend on the grid beyond locating the peak.
pub fn trig_poly_sup(coeffs: &CVector, idx: &IndexSet, points: usize) -> Result<f64> {
    if coeffs.len() != idx.len() {
        return Err(Error::Shape(format!("expected {} coefficients, got {}", idx.len(), coeffs.len())));
    }
    if points < idx.side() {
        return Err(Error::InvalidParameter(format!("{points} points cannot resolve degree {}", idx.halfwidth())));
    }
    let fft = FftNd::new(points, idx.dim());
    let mut buf = vec![Complex64::new(0.0, 0.0); fft.len()];
    for (k, c) in idx.iter().zip(coeffs.iter()) {
        buf[fft.wrapped_position(&k)] = *c;
    }
    fft.inverse(&mut buf);
    let mags: Vec<f64> = buf.iter().map(|v| v.norm()).collect();
    let grid_sup = mags.iter().copied().fold(0.0, f64::max);
    if grid_sup == 0.0 {
        return Ok(0.0);
    }
    let poly = TrigPoly { coeffs, ks: idx.iter().map(|k| k.iter().map(|&v| v as f64).collect()).collect() };
    let mut best = grid_sup;
    for start in grid_peaks(&mags, points, idx.dim(), 8) {
        let x: Vec<f64> = decode(start, points, idx.dim()).iter().map(|&n| n as f64 / points as f64).collect();
        best = best.max(poly.polish(x, 1.0 / points as f64));
    }
    Ok(best)
}

fn decode(mut pos: usize, side: usize, dim: usize) -> Vec<usize> {
    (0..dim)
        .map(|_| {
            let v = pos % side;
            pos /= side;
            v
        })
        .collect()
}

/// Up to `count` grid positions that dominate their `2d` periodic neighbours, largest first.
fn grid_peaks(mags: &[f64], side: usize, dim: usize, count: usize) -> Vec<usize> {
    let mut peaks: Vec<usize> = (0..mags.len())
        .filter(|&p| {
            let coords = decode(p, side, dim);
            (0..dim).all(|axis| {
                let stride = side.pow(axis as u32);
                let c = coords[axis];
                let up = p - c * stride + ((c + 1) % side) * stride;
                let down = p - c * stride + ((c + side - 1) % side) * stride;
                mags[p] >= mags[up] && mags[p] >= mags[down]
            })
        })
        .collect();
    peaks.sort_by(|&a, &b| mags[b].total_cmp(&mags[a]));
    peaks.truncate(count);
    peaks
}

struct TrigPoly<'a> {
    coeffs: &'a CVector,
    ks: Vec<Vec<f64>>,
}

impl TrigPoly<'_> {
    /// `p(x)`, its gradient and its Hessian.
    fn eval(&self, x: &[f64]) -> (Complex64, Vec<Complex64>, Vec<Complex64>) {
        let d = x.len();
        let zero = Complex64::new(0.0, 0.0);
        let (mut p, mut g, mut h) = (zero, vec![zero; d], vec![zero; d * d]);
        let two_pi = 2.0 * std::f64::consts::PI;
        for (k, c) in self.ks.iter().zip(self.coeffs.iter()) {
            let phase: f64 = k.iter().zip(x).map(|(a, b)| a * b).sum();
            let term = c * Complex64::from_polar(1.0, two_pi * phase);
            p += term;
            for i in 0..d {
                let ti = term * Complex64::new(0.0, two_pi * k[i]);
                g[i] += ti;
                for j in 0..d {
                    h[i * d + j] += ti * Complex64::new(0.0, two_pi * k[j]);
                }
            }
        }
        (p, g, h)
    }

    fn polish(&self, mut x: Vec<f64>, spacing: f64) -> f64 {
        let d = x.len();
        let (mut p, mut g, mut h) = self.eval(&x);
        let mut val = p.norm_sqr();
        for _ in 0..50 {
            // derivatives of |p|^2
            let grad: Vec<f64> = g.iter().map(|gi| 2.0 * (p.conj() * gi).re).collect();
            let hess = nalgebra::DMatrix::from_fn(d, d, |i, j| 2.0 * (g[i].conj() * g[j] + p.conj() * h[i * d + j]).re);
            let gv = nalgebra::DVector::from_vec(grad.clone());
            let newton = (-&hess).clone().cholesky().map(|ch| ch.solve(&gv));
            let mut step: Vec<f64> = match newton {
                Some(s) => s.iter().copied().collect(),
                None => {
                    let scale = spacing / gv.norm().max(f64::MIN_POSITIVE);
                    grad.iter().map(|v| v * scale).collect()
                }
            };
            let len = step.iter().map(|v| v * v).sum::<f64>().sqrt();
            if len > spacing {
                step.iter_mut().for_each(|v| *v *= spacing / len);
            }
            let mut accepted = false;
            for _ in 0..30 {
                let trial: Vec<f64> = x.iter().zip(&step).map(|(a, b)| a + b).collect();
                let (tp, tg, th) = self.eval(&trial);
                if tp.norm_sqr() >= val {
                    let gain = tp.norm_sqr() - val;
                    x = trial;
                    (p, g, h) = (tp, tg, th);
                    val = p.norm_sqr();
                    accepted = gain > 1e-15 * val;
                    break;
                }
                step.iter_mut().for_each(|v| *v *= 0.5);
            }
            if !accepted {
                break;
            }
        }
        val.sqrt()
    }
}

/// Coefficients of `Phi^* v` in the Fourier basis: `scale^2 A^h v`.
pub(crate) fn adjoint_coefficients(op: &SpectralOperator, v: &CVector) -> Result<CVector> {
    let s = op.hilbert_norm().scale();
    Ok(op.adjoint(v)? * Complex64::new(s * s, 0.0))
}

/// `lambda = lambda0 * ||Phi^* y||_inf`, the supremum taken on the dense evaluation grid.
pub fn resolve_lambda(op: &SpectralOperator, y: &CVector, lambda0: f64) -> Result<f64> {
    if !(lambda0 > 0.0 && lambda0.is_finite()) {
        return Err(Error::InvalidParameter(format!("lambda0 must be positive, got {lambda0}")));
    }
    if y.iter().all(|v| *v == Complex64::new(0.0, 0.0)) {
        return Err(Error::ZeroObservation);
    }
    let q = adjoint_coefficients(op, y)?;
    let sup = trig_poly_sup(&q, op.index_set(), sup_grid_points(op.fc()))?;
    if sup == 0.0 {
        return Err(Error::ZeroObservation);
    }
    Ok(lambda0 * sup)
}

/// A BLASSO instance: operator, observation, and the resolved regularization.
#[derive(Debug, Clone)]
pub struct Problem {
    op: SpectralOperator,
    y: CVector,
    lambda: f64,
    c0: f64,
}

impl Problem {
    /// Resolves `lambda = lambda0 ||Phi^* y||_inf`.
    pub fn new(op: SpectralOperator, y: CVector, lambda0: f64) -> Result<Self> {
        let lambda = resolve_lambda(&op, &y, lambda0)?;
        Self::with_lambda(op, y, lambda)
    }

    /// Uses an absolute regularization parameter.
    pub fn with_lambda(op: SpectralOperator, y: CVector, lambda: f64) -> Result<Self> {
        if y.len() != op.output_dim() {
            return Err(Error::Shape(format!("observation has length {}, expected {}", y.len(), op.output_dim())));
        }
        if !(lambda > 0.0 && lambda.is_finite()) {
            return Err(Error::InvalidParameter(format!("lambda must be positive, got {lambda}")));
        }
        let ny = op.hilbert_norm().norm_sqr(&y);
        if ny == 0.0 {
            return Err(Error::ZeroObservation);
        }
        Ok(Self { c0: 2.0 * lambda / ny, op, y, lambda })
    }

    pub fn operator(&self) -> &SpectralOperator {
        &self.op
    }

    pub fn hilbert_norm(&self) -> HilbertNorm {
        self.op.hilbert_norm()
    }

    pub fn y(&self) -> &CVector {
        &self.y
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    /// Normalization `C0 = 2 lambda / ||y||_H^2`, so that the empty iterate has objective 1.
    pub fn c0(&self) -> f64 {
        self.c0
    }

    pub fn fc(&self) -> usize {
        self.op.fc()
    }

    pub fn dim(&self) -> usize {
        self.op.dim()
    }
}
