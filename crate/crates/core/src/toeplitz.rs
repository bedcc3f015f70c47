//! Multilevel (generalized) Toeplitz algebra over `Omega_l = [-l, l]^d`.
//!
//! A generalized Toeplitz matrix is `T = sum_{k in Omega_2l} u_k Theta_k`, where
//! `Theta_k` is the Kronecker product of shift matrices carrying ones at the entries
//! `(s, t)` with `t - s = k`. In colexicographic order this means
//! `T[s, t] = u_{t - s}`. Projection of a Gram matrix onto this space and products
//! with its elements both reduce to FFTs of side `>= 4l + 1`, which is enough for the
//! circular correlations/convolutions to be exact on lags in `Omega_2l`.

use num_complex::Complex64;

use crate::fft::{efficient_len, FftNd};
use crate::operators::DENSE_GATE;
use crate::{CMatrix, CVector, Error, IndexSet, Result};

/// Coefficients `u_k`, `k in Omega_2l` (colexicographic), of a generalized Toeplitz matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct ToeplitzCoeffs {
    level: usize,
    dim: usize,
    coeffs: CVector,
}

impl ToeplitzCoeffs {
    pub fn new(level: usize, dim: usize, coeffs: CVector) -> Result<Self> {
        let lags = IndexSet::new(dim, 2 * level)?;
        if coeffs.len() != lags.len() {
            return Err(Error::Shape(format!("expected {} coefficients, got {}", lags.len(), coeffs.len())));
        }
        Ok(Self { level, dim, coeffs })
    }

    pub fn level(&self) -> usize {
        self.level
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn coeffs(&self) -> &CVector {
        &self.coeffs
    }

    pub fn lag_set(&self) -> IndexSet {
        IndexSet::new(self.dim, 2 * self.level).expect("dimension validated on construction")
    }

    /// Whether `u_{-k} = conj(u_k)` for every lag, within `tol` (absolute).
    pub fn is_hermitian(&self, tol: f64) -> bool {
        let n = self.coeffs.len();
        // colex reversal maps k to -k
        (0..n).all(|p| (self.coeffs[n - 1 - p] - self.coeffs[p].conj()).norm() <= tol)
    }
}

/// `count_k = #{(s, t) in Omega_l^2 : s - t = k} = prod_i (2l + 1 - |k_i|)`.
#[derive(Debug, Clone, PartialEq)]
pub struct DiagonalCounts {
    level: usize,
    dim: usize,
    counts: Vec<u64>,
}

impl DiagonalCounts {
    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn level(&self) -> usize {
        self.level
    }

    pub fn dim(&self) -> usize {
        self.dim
    }
}

pub fn diagonal_counts(level: usize, dim: usize) -> Result<DiagonalCounts> {
    if level < 1 {
        return Err(Error::InvalidParameter("relaxation level must be at least 1".into()));
    }
    let lags = IndexSet::new(dim, 2 * level)?;
    let side = (2 * level + 1) as i64;
    let counts = lags
        .iter()
        .map(|k| k.iter().map(|&ki| (side - ki.abs()) as u64).product())
        .collect();
    Ok(DiagonalCounts { level, dim, counts })
}

/// Precomputed FFT plans and index maps for one `(l, d)`.
#[derive(Debug, Clone)]
pub struct ToeplitzAlgebra {
    rows: IndexSet,
    lags: IndexSet,
    fft: FftNd,
    counts: Vec<f64>,
    // FFT slot of each row index s in Omega_l (placed at s + l per axis)
    row_slots: Vec<usize>,
    // FFT slot of each lag k (wrapped) and of -k
    lag_slots: Vec<usize>,
    neg_lag_slots: Vec<usize>,
}

/// A generalized Toeplitz matrix prepared for repeated products.
#[derive(Debug, Clone)]
pub struct PreparedToeplitz {
    spectrum: Vec<Complex64>,
}

impl ToeplitzAlgebra {
    pub fn new(level: usize, dim: usize) -> Result<Self> {
        let counts = diagonal_counts(level, dim)?;
        let rows = IndexSet::new(dim, level)?;
        let lags = IndexSet::new(dim, 2 * level)?;
        let fft = FftNd::new(efficient_len(4 * level + 1), dim);
        let l = level as i64;
        let row_slots = rows
            .iter()
            .map(|s| fft.wrapped_position(&s.iter().map(|v| v + l).collect::<Vec<_>>()))
            .collect();
        let lag_slots = lags.iter().map(|k| fft.wrapped_position(&k)).collect();
        let neg_lag_slots = lags
            .iter()
            .map(|k| fft.wrapped_position(&k.iter().map(|v| -v).collect::<Vec<_>>()))
            .collect();
        Ok(Self {
            rows,
            lags,
            fft,
            counts: counts.counts.iter().map(|&c| c as f64).collect(),
            row_slots,
            lag_slots,
            neg_lag_slots,
        })
    }

    pub fn level(&self) -> usize {
        self.rows.halfwidth()
    }

    pub fn dim(&self) -> usize {
        self.rows.dim()
    }

    /// `m_l = (2l + 1)^d`.
    pub fn size(&self) -> usize {
        self.rows.len()
    }

    pub fn rows(&self) -> &IndexSet {
        &self.rows
    }

    pub fn lags(&self) -> &IndexSet {
        &self.lags
    }

    pub fn counts(&self) -> &[f64] {
        &self.counts
    }

    /// Side of the FFT grid used for every transform.
    pub fn fft_side(&self) -> usize {
        self.fft.side()
    }

    /// Coefficients of `P_T(U1 U1^h)`: `u_k` is the mean of `U1 U1^h` over the
    /// `k`-th generalized diagonal. Costs `r` forward FFTs and one inverse.
    pub fn project_gram(&self, u1: &CMatrix) -> Result<ToeplitzCoeffs> {
        if u1.nrows() != self.size() {
            return Err(Error::Shape(format!("factor has {} rows, expected {}", u1.nrows(), self.size())));
        }
        let zero = Complex64::new(0.0, 0.0);
        let mut power = vec![zero; self.fft.len()];
        let mut buf = vec![zero; self.fft.len()];
        for col in u1.column_iter() {
            buf.fill(zero);
            for (&slot, v) in self.row_slots.iter().zip(col.iter()) {
                buf[slot] = *v;
            }
            self.fft.forward(&mut buf);
            for (p, b) in power.iter_mut().zip(&buf) {
                *p += b.norm_sqr();
            }
        }
        // autocorrelation a_k = sum_s x_{s+k} conj(x_s); the mean over t - s = k is a_{-k}
        self.fft.inverse(&mut power);
        let n = self.fft.len() as f64;
        let coeffs = CVector::from_iterator(
            self.lags.len(),
            self.neg_lag_slots.iter().zip(&self.counts).map(|(&slot, c)| power[slot] / (n * c)),
        );
        ToeplitzCoeffs::new(self.level(), self.dim(), coeffs)
    }

    /// Coefficients of the orthogonal projection of an explicit matrix (diagonal means).
    pub fn project_dense(&self, r: &CMatrix) -> Result<ToeplitzCoeffs> {
        let m = self.size();
        if r.nrows() != m || r.ncols() != m {
            return Err(Error::Shape(format!("matrix is {}x{}, expected {m}x{m}", r.nrows(), r.ncols())));
        }
        let mut sums = CVector::zeros(self.lags.len());
        let mut lag = vec![0i64; self.dim()];
        let rows: Vec<Vec<i64>> = self.rows.iter().collect();
        for (i, s) in rows.iter().enumerate() {
            for (j, t) in rows.iter().enumerate() {
                for ((l, a), b) in lag.iter_mut().zip(t).zip(s) {
                    *l = a - b;
                }
                sums[self.lags.position(&lag).expect("difference lies in Omega_2l")] += r[(i, j)];
            }
        }
        for (v, c) in sums.iter_mut().zip(&self.counts) {
            *v /= *c;
        }
        ToeplitzCoeffs::new(self.level(), self.dim(), sums)
    }

    /// `||P_T(X)||_F^2 = sum_k count_k |u_k|^2`.
    pub fn frobenius_norm_sqr(&self, t: &ToeplitzCoeffs) -> f64 {
        t.coeffs.iter().zip(&self.counts).map(|(u, c)| c * u.norm_sqr()).sum()
    }

    /// Frobenius inner product `<T_a, T_b> = sum_k count_k conj(a_k) b_k`.
    pub fn frobenius_dot(&self, a: &ToeplitzCoeffs, b: &ToeplitzCoeffs) -> Complex64 {
        a.coeffs.iter().zip(b.coeffs.iter()).zip(&self.counts).map(|((x, y), c)| x.conj() * y * *c).sum()
    }

    fn check(&self, t: &ToeplitzCoeffs) -> Result<()> {
        if t.level != self.level() || t.dim != self.dim() {
            return Err(Error::Shape(format!(
                "coefficients for (l={}, d={}) used with (l={}, d={})",
                t.level,
                t.dim,
                self.level(),
                self.dim()
            )));
        }
        Ok(())
    }

    /// Spectrum of the convolution kernel `v_k = u_{-k}`, reusable across products.
    pub fn prepare(&self, t: &ToeplitzCoeffs) -> Result<PreparedToeplitz> {
        self.check(t)?;
        let mut spectrum = vec![Complex64::new(0.0, 0.0); self.fft.len()];
        for (&slot, u) in self.neg_lag_slots.iter().zip(t.coeffs.iter()) {
            spectrum[slot] = *u;
        }
        self.fft.forward(&mut spectrum);
        let n = self.fft.len() as f64;
        for s in spectrum.iter_mut() {
            *s /= n;
        }
        Ok(PreparedToeplitz { spectrum })
    }

    /// `(T w)_s = sum_t u_{t-s} w_t` with one forward and one inverse FFT.
    pub fn apply_prepared(&self, t: &PreparedToeplitz, w: &CVector) -> Result<CVector> {
        if w.len() != self.size() {
            return Err(Error::Shape(format!("vector has length {}, expected {}", w.len(), self.size())));
        }
        let mut buf = vec![Complex64::new(0.0, 0.0); self.fft.len()];
        for (&slot, v) in self.row_slots.iter().zip(w.iter()) {
            buf[slot] = *v;
        }
        self.fft.forward(&mut buf);
        for (b, s) in buf.iter_mut().zip(&t.spectrum) {
            *b *= s;
        }
        self.fft.inverse(&mut buf);
        Ok(CVector::from_iterator(self.size(), self.row_slots.iter().map(|&slot| buf[slot])))
    }

    pub fn matvec(&self, t: &ToeplitzCoeffs, w: &CVector) -> Result<CVector> {
        let prepared = self.prepare(t)?;
        self.apply_prepared(&prepared, w)
    }

    /// Explicit `sum_k u_k Theta_k`, gated to `m_l <= DENSE_GATE`.
    pub fn materialize(&self, t: &ToeplitzCoeffs) -> Result<CMatrix> {
        self.check(t)?;
        let m = self.size();
        if m > DENSE_GATE {
            return Err(Error::SizeGate { size: m, limit: DENSE_GATE });
        }
        let rows: Vec<Vec<i64>> = self.rows.iter().collect();
        let mut lag = vec![0i64; self.dim()];
        Ok(CMatrix::from_fn(m, m, |i, j| {
            for ((l, a), b) in lag.iter_mut().zip(&rows[j]).zip(&rows[i]) {
                *l = a - b;
            }
            t.coeffs[self.lags.position(&lag).expect("difference lies in Omega_2l")]
        }))
    }

    #[allow(dead_code)]
    fn lag_slot(&self, p: usize) -> usize {
        self.lag_slots[p]
    }
}

/// Free-function forms of the algebra for one-off use.
pub fn project_gram(u1: &CMatrix, level: usize, dim: usize) -> Result<ToeplitzCoeffs> {
    ToeplitzAlgebra::new(level, dim)?.project_gram(u1)
}

pub fn toeplitz_matvec(t: &ToeplitzCoeffs, w: &CVector) -> Result<CVector> {
    ToeplitzAlgebra::new(t.level, t.dim)?.matvec(t, w)
}

pub fn materialize(t: &ToeplitzCoeffs) -> Result<CMatrix> {
    ToeplitzAlgebra::new(t.level, t.dim)?.materialize(t)
}
