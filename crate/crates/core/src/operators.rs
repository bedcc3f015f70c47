//! The spectral approximation matrix `A` with `Phi_c = A F_c`.
//!
//! Three representations share one interface:
//! - `Diagonal`: convolutions observed in the Fourier domain (Dirichlet, Gaussian);
//! - `SubsampledFft`: convolution sampled on the regular grid `{n / L}`, applied with
//!   one FFT of side `L q`;
//! - `Dense`: anything else (foveation), stored as an explicit matrix.

use std::f64::consts::PI;
use std::fmt;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::fft::FftNd;
use crate::measures::torus_delta;
use crate::{CMatrix, CVector, Error, IndexSet, Result};

/// Largest coefficient space for which dense matrices are materialized.
pub const DENSE_GATE: usize = 4096;

/// Scaling of the observation-space norm, `||v||_H = scale * ||v||`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HilbertNorm {
    scale: f64,
}

impl HilbertNorm {
    /// Observations living in the Fourier domain.
    pub fn fourier() -> Self {
        Self { scale: 1.0 }
    }

    /// Observations sampled on a grid with `points` nodes in dimension `dim`.
    pub fn grid(points: usize, dim: usize) -> Self {
        Self { scale: (points as f64).powf(-1.0 / dim as f64) }
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn norm_sqr(&self, v: &CVector) -> f64 {
        self.scale * self.scale * v.norm_squared()
    }

    pub fn norm(&self, v: &CVector) -> f64 {
        self.scale * v.norm()
    }

    /// `<a, b>_H = scale^2 a^h b`.
    pub fn inner(&self, a: &CVector, b: &CVector) -> Complex64 {
        a.dotc(b) * (self.scale * self.scale)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OperatorKind {
    Diagonal,
    SubsampledFft,
    Dense,
}

#[derive(Clone)]
struct Subsampled {
    grid: usize,
    q: usize,
    diag: CVector,
    fine: FftNd,
    // fine-grid slot of each coefficient k (at k + fc per axis)
    coef_slots: Vec<usize>,
    // fine-grid slot of each coarse sample n (at q n per axis)
    sample_slots: Vec<usize>,
    // e^{-2 i pi <fc 1, n> / L} at each coarse sample
    modulation: Vec<Complex64>,
}

#[derive(Clone)]
enum Repr {
    Diagonal(CVector),
    Subsampled(Box<Subsampled>),
    Dense(CMatrix),
}

/// The matrix `A(phi)` mapping Fourier coefficients on `[-fc, fc]^d` to observations.
#[derive(Clone)]
pub struct SpectralOperator {
    index: IndexSet,
    hnorm: HilbertNorm,
    repr: Repr,
}

impl fmt::Debug for SpectralOperator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SpectralOperator")
            .field("kind", &self.kind())
            .field("fc", &self.index.halfwidth())
            .field("dim", &self.index.dim())
            .field("output_dim", &self.output_dim())
            .finish()
    }
}

fn check_fc(fc: usize, d: usize) -> Result<IndexSet> {
    if fc < 1 {
        return Err(Error::InvalidParameter("cutoff frequency must be at least 1".into()));
    }
    IndexSet::new(d, fc)
}

/// Ideal low-pass filter: `A = Id`.
pub fn build_dirichlet(fc: usize, d: usize) -> Result<SpectralOperator> {
    let index = check_fc(fc, d)?;
    Ok(SpectralOperator {
        index,
        hnorm: HilbertNorm::fourier(),
        repr: Repr::Diagonal(CVector::from_element(index.len(), Complex64::new(1.0, 0.0))),
    })
}

/// Fourier transform of the unnormalized Gaussian `exp(-<t, Sigma^-1 t> / 2)` with
/// `Sigma = diag(sigma^2)`, evaluated at the integer frequency `k`.
pub fn gaussian_hat(sigma: &[f64], k: &[i64]) -> f64 {
    let d = sigma.len() as f64;
    let det_sqrt: f64 = sigma.iter().product();
    let quad: f64 = sigma.iter().zip(k).map(|(s, &ki)| s * s * (ki * ki) as f64).sum();
    (2.0 * PI).powf(d / 2.0) * det_sqrt * (-2.0 * PI * PI * quad).exp()
}

fn check_sigma(sigma: &[f64], d: usize) -> Result<()> {
    if sigma.len() != d {
        return Err(Error::DimensionMismatch { expected: d, found: sigma.len() });
    }
    if sigma.iter().any(|&s| !(s > 0.0) || !s.is_finite()) {
        return Err(Error::InvalidParameter(format!("standard deviations must be positive, got {sigma:?}")));
    }
    Ok(())
}

/// Diagonal of Gaussian Fourier coefficients over `[-fc, fc]^d`.
pub fn gaussian_diagonal(fc: usize, d: usize, sigma: &[f64]) -> Result<CVector> {
    let index = check_fc(fc, d)?;
    check_sigma(sigma, d)?;
    Ok(CVector::from_iterator(
        index.len(),
        index.iter().map(|k| Complex64::new(gaussian_hat(sigma, &k), 0.0)),
    ))
}

/// Periodized Gaussian convolution observed in the Fourier domain.
pub fn build_gaussian(fc: usize, d: usize, sigma: &[f64]) -> Result<SpectralOperator> {
    let diag = gaussian_diagonal(fc, d, sigma)?;
    Ok(SpectralOperator { index: IndexSet::new(d, fc)?, hnorm: HilbertNorm::fourier(), repr: Repr::Diagonal(diag) })
}

/// Diagonal operator from arbitrary Fourier multipliers.
pub fn build_diagonal(fc: usize, d: usize, diag: CVector) -> Result<SpectralOperator> {
    let index = check_fc(fc, d)?;
    if diag.len() != index.len() {
        return Err(Error::Shape(format!("diagonal has length {}, expected {}", diag.len(), index.len())));
    }
    Ok(SpectralOperator { index, hnorm: HilbertNorm::fourier(), repr: Repr::Diagonal(diag) })
}

/// Convolution with Fourier multipliers `kernel_diag = (c_{-k}(phi))_k`, sampled on
/// the grid `{n / L : n in [0, L)^d}` (colexicographic output order).
///
/// `q` defaults to the smallest admissible upsampling factor `ceil((2 fc + 1) / L)`.
pub fn build_subsampled(
    fc: usize,
    d: usize,
    grid: usize,
    kernel_diag: CVector,
    q: Option<usize>,
) -> Result<SpectralOperator> {
    let index = check_fc(fc, d)?;
    if grid < 1 {
        return Err(Error::InvalidParameter("grid side must be at least 1".into()));
    }
    if kernel_diag.len() != index.len() {
        return Err(Error::Shape(format!(
            "kernel diagonal has length {}, expected {}",
            kernel_diag.len(),
            index.len()
        )));
    }
    let q_min = index.side().div_ceil(grid);
    let q = q.unwrap_or(q_min);
    if q < q_min {
        return Err(Error::InvalidParameter(format!("upsampling factor {q} is below the minimum {q_min}")));
    }
    let fine = FftNd::new(grid * q, d);
    let f = fc as i64;
    let coef_slots = index
        .iter()
        .map(|k| fine.wrapped_position(&k.iter().map(|ki| ki + f).collect::<Vec<_>>()))
        .collect();
    let coarse = CoarseGrid { side: grid, dim: d };
    let mut sample_slots = Vec::with_capacity(coarse.len());
    let mut modulation = Vec::with_capacity(coarse.len());
    for n in coarse.iter() {
        sample_slots.push(fine.wrapped_position(&n.iter().map(|&ni| ni * q as i64).collect::<Vec<_>>()));
        let s: i64 = n.iter().sum();
        modulation.push(Complex64::from_polar(1.0, -2.0 * PI * (f * s) as f64 / grid as f64));
    }
    Ok(SpectralOperator {
        index,
        hnorm: HilbertNorm::grid(coarse.len(), d),
        repr: Repr::Subsampled(Box::new(Subsampled {
            grid,
            q,
            diag: kernel_diag,
            fine,
            coef_slots,
            sample_slots,
            modulation,
        })),
    })
}

/// Subsampled periodized Gaussian convolution.
pub fn build_subsampled_gaussian(
    fc: usize,
    d: usize,
    grid: usize,
    sigma: &[f64],
    q: Option<usize>,
) -> Result<SpectralOperator> {
    build_subsampled(fc, d, grid, gaussian_diagonal(fc, d, sigma)?, q)
}

/// Arbitrary dense operator; `hnorm` chooses the observation-space norm.
pub fn build_dense(fc: usize, d: usize, matrix: CMatrix, hnorm: HilbertNorm) -> Result<SpectralOperator> {
    let index = check_fc(fc, d)?;
    if matrix.ncols() != index.len() {
        return Err(Error::Shape(format!("matrix has {} columns, expected {}", matrix.ncols(), index.len())));
    }
    Ok(SpectralOperator { index, hnorm, repr: Repr::Dense(matrix) })
}

/// Default fine-grid side for numerical Fourier coefficients of foveation rows.
pub fn foveation_fine_grid(fc: usize, grid: usize) -> usize {
    (8 * fc).max(4 * grid)
}

/// Foveated measurements `phi(s, x) = g(sigma(x)^{-1} (s - x))` on the grid `{n / L}`.
///
/// `sigma_fn` returns the per-axis widths at `x` (diagonal covariance). Row `s` of the
/// matrix holds `c_{-k}(x -> phi(s, x))`, computed by a DFT of the kernel sampled on a
/// fine grid of side `foveation_fine_grid(fc, L)`. The difference `s - x` is taken as
/// its nearest periodic image, so `g` should be negligible beyond half a period.
pub fn build_foveation<G, S>(fc: usize, d: usize, grid: usize, g: G, sigma_fn: S) -> Result<SpectralOperator>
where
    G: Fn(&[f64]) -> f64,
    S: Fn(&[f64]) -> Vec<f64>,
{
    build_foveation_with_fine_grid(fc, d, grid, g, sigma_fn, foveation_fine_grid(fc, grid))
}

pub fn build_foveation_with_fine_grid<G, S>(
    fc: usize,
    d: usize,
    grid: usize,
    g: G,
    sigma_fn: S,
    fine_side: usize,
) -> Result<SpectralOperator>
where
    G: Fn(&[f64]) -> f64,
    S: Fn(&[f64]) -> Vec<f64>,
{
    let index = check_fc(fc, d)?;
    if grid < 1 {
        return Err(Error::InvalidParameter("grid side must be at least 1".into()));
    }
    if fine_side < index.side() {
        return Err(Error::InvalidParameter(format!(
            "fine grid side {fine_side} cannot resolve {} frequencies",
            index.side()
        )));
    }
    let coarse = CoarseGrid { side: grid, dim: d };
    if coarse.len() * index.len() > 64 * 1024 * 1024 {
        return Err(Error::SizeGate { size: coarse.len() * index.len(), limit: 64 * 1024 * 1024 });
    }
    let fine = FftNd::new(fine_side, d);
    let fine_grid = CoarseGrid { side: fine_side, dim: d };
    let samples: Vec<Vec<f64>> = fine_grid
        .iter()
        .map(|p| p.iter().map(|&pi| pi as f64 / fine_side as f64).collect())
        .collect();
    let mut widths = Vec::with_capacity(samples.len());
    for x in &samples {
        let w = sigma_fn(x);
        check_sigma(&w, d)?;
        widths.push(w);
    }
    let slots: Vec<usize> = index.iter().map(|k| fine.wrapped_position(&k)).collect();
    let norm = 1.0 / fine.len() as f64;
    let mut matrix = CMatrix::zeros(coarse.len(), index.len());
    let mut buf = vec![Complex64::new(0.0, 0.0); fine.len()];
    let mut u = vec![0.0; d];
    for (row, n) in coarse.iter().enumerate() {
        let s: Vec<f64> = n.iter().map(|&ni| ni as f64 / grid as f64).collect();
        for ((slot, x), w) in buf.iter_mut().zip(&samples).zip(&widths) {
            for i in 0..d {
                u[i] = torus_delta(s[i], x[i]) / w[i];
            }
            *slot = Complex64::new(g(&u), 0.0);
        }
        // c_{-k} = mean of h(x) e^{+2 i pi <k, x>}
        fine.inverse(&mut buf);
        for (col, &slot) in slots.iter().enumerate() {
            matrix[(row, col)] = buf[slot] * norm;
        }
    }
    Ok(SpectralOperator { index, hnorm: HilbertNorm::grid(coarse.len(), d), repr: Repr::Dense(matrix) })
}

/// The Gaussian profile `g(u) = exp(-|u|^2 / 2)`.
pub fn gaussian_profile(u: &[f64]) -> f64 {
    (-0.5 * u.iter().map(|v| v * v).sum::<f64>()).exp()
}

/// Width growing quadratically with the torus distance to the fovea centre:
/// `sigma(x) = sigma0 (1 + gain |x - centre|^2)`.
pub fn foveation_widths(sigma0: Vec<f64>, gain: f64, centre: Vec<f64>) -> impl Fn(&[f64]) -> Vec<f64> {
    move |x: &[f64]| {
        let r2: f64 = x.iter().zip(&centre).map(|(a, c)| torus_delta(*a, *c).powi(2)).sum();
        sigma0.iter().map(|s| s * (1.0 + gain * r2)).collect()
    }
}

impl SpectralOperator {
    pub fn kind(&self) -> OperatorKind {
        match self.repr {
            Repr::Diagonal(_) => OperatorKind::Diagonal,
            Repr::Subsampled(_) => OperatorKind::SubsampledFft,
            Repr::Dense(_) => OperatorKind::Dense,
        }
    }

    /// The coefficient index set `[-fc, fc]^d`.
    pub fn index_set(&self) -> &IndexSet {
        &self.index
    }

    pub fn fc(&self) -> usize {
        self.index.halfwidth()
    }

    pub fn dim(&self) -> usize {
        self.index.dim()
    }

    pub fn hilbert_norm(&self) -> HilbertNorm {
        self.hnorm
    }

    pub fn output_dim(&self) -> usize {
        match &self.repr {
            Repr::Diagonal(d) => d.len(),
            Repr::Subsampled(s) => s.modulation.len(),
            Repr::Dense(m) => m.nrows(),
        }
    }

    /// Grid side and upsampling factor of a subsampled operator.
    pub fn grid(&self) -> Option<(usize, usize)> {
        match &self.repr {
            Repr::Subsampled(s) => Some((s.grid, s.q)),
            _ => None,
        }
    }

    /// Number of multidimensional FFTs performed by one `apply` or `adjoint`.
    pub fn fft_cost(&self) -> u64 {
        match self.repr {
            Repr::Subsampled(_) => 1,
            _ => 0,
        }
    }

    pub fn apply(&self, z: &CVector) -> Result<CVector> {
        if z.len() != self.index.len() {
            return Err(Error::Shape(format!("coefficient vector has length {}, expected {}", z.len(), self.index.len())));
        }
        Ok(match &self.repr {
            Repr::Diagonal(d) => d.component_mul(z),
            Repr::Dense(m) => m * z,
            Repr::Subsampled(s) => {
                let mut buf = vec![Complex64::new(0.0, 0.0); s.fine.len()];
                for ((&slot, dk), zk) in s.coef_slots.iter().zip(s.diag.iter()).zip(z.iter()) {
                    buf[slot] = dk * zk;
                }
                s.fine.inverse(&mut buf);
                CVector::from_iterator(
                    s.sample_slots.len(),
                    s.sample_slots.iter().zip(&s.modulation).map(|(&slot, e)| buf[slot] * e),
                )
            }
        })
    }

    /// Adjoint for the plain Euclidean inner products on both sides.
    pub fn adjoint(&self, y: &CVector) -> Result<CVector> {
        if y.len() != self.output_dim() {
            return Err(Error::Shape(format!("observation has length {}, expected {}", y.len(), self.output_dim())));
        }
        Ok(match &self.repr {
            Repr::Diagonal(d) => d.conjugate().component_mul(y),
            Repr::Dense(m) => m.adjoint() * y,
            Repr::Subsampled(s) => {
                let mut buf = vec![Complex64::new(0.0, 0.0); s.fine.len()];
                for ((&slot, e), yn) in s.sample_slots.iter().zip(&s.modulation).zip(y.iter()) {
                    buf[slot] = yn * e.conj();
                }
                s.fine.forward(&mut buf);
                CVector::from_iterator(
                    s.coef_slots.len(),
                    s.coef_slots.iter().zip(s.diag.iter()).map(|(&slot, dk)| dk.conj() * buf[slot]),
                )
            }
        })
    }

    /// Explicit matrix, gated to `(2 fc + 1)^d <= DENSE_GATE` columns.
    pub fn to_dense(&self) -> Result<CMatrix> {
        let n = self.index.len();
        if n > DENSE_GATE {
            return Err(Error::SizeGate { size: n, limit: DENSE_GATE });
        }
        Ok(match &self.repr {
            Repr::Diagonal(d) => CMatrix::from_diagonal(d),
            Repr::Dense(m) => m.clone(),
            Repr::Subsampled(s) => {
                let coarse = CoarseGrid { side: s.grid, dim: self.dim() };
                let ks: Vec<Vec<i64>> = self.index.iter().collect();
                let mut m = CMatrix::zeros(coarse.len(), n);
                for (row, t) in coarse.iter().enumerate() {
                    for (col, k) in ks.iter().enumerate() {
                        let phase: f64 = k.iter().zip(&t).map(|(&ki, &ti)| (ki * ti) as f64).sum::<f64>() / s.grid as f64;
                        m[(row, col)] = s.diag[col] * Complex64::from_polar(1.0, 2.0 * PI * phase);
                    }
                }
                m
            }
        })
    }
}

/// The grid `[0, side)^dim` in colexicographic order.
#[derive(Debug, Clone, Copy)]
pub struct CoarseGrid {
    pub side: usize,
    pub dim: usize,
}

impl CoarseGrid {
    pub fn len(&self) -> usize {
        self.side.pow(self.dim as u32)
    }

    pub fn is_empty(&self) -> bool {
        self.side == 0
    }

    pub fn iter(&self) -> impl Iterator<Item = Vec<i64>> + '_ {
        (0..self.len()).map(move |mut p| {
            (0..self.dim)
                .map(|_| {
                    let v = (p % self.side) as i64;
                    p /= self.side;
                    v
                })
                .collect()
        })
    }
}

/// Continuous kernels whose Fourier coefficients are known in closed form.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianKernel {
    pub sigma: Vec<f64>,
}

/// Tail energy `sum_{|k|_inf > fc} |g_hat(k)|^2` (truncated at `|k|_inf <= cap`) for
/// each cutoff in `fcs`. This is the squared Hilbert-Schmidt error of the spectral
/// approximation.
pub fn spectral_truncation_error(kernel: &GaussianKernel, fcs: &[usize], cap: usize) -> Result<Vec<f64>> {
    check_sigma(&kernel.sigma, kernel.sigma.len())?;
    let axis_hat = |s: f64, k: i64| (2.0 * PI).sqrt() * s * (-2.0 * PI * PI * s * s * (k * k) as f64).exp();
    fcs.iter()
        .map(|&fc| {
            if fc > cap {
                return Err(Error::InvalidParameter(format!("cutoff {fc} exceeds the summation cap {cap}")));
            }
            // separable: full = prod E_i, head = prod H_i, and
            // full - head = sum_j (prod_{i<j} H_i) (E_j - H_j) (prod_{i>j} E_i)
            let head: Vec<f64> = kernel
                .sigma
                .iter()
                .map(|&s| (-(fc as i64)..=fc as i64).map(|k| axis_hat(s, k).powi(2)).sum())
                .collect();
            let tail: Vec<f64> = kernel
                .sigma
                .iter()
                .map(|&s| 2.0 * ((fc as i64 + 1)..=cap as i64).rev().map(|k| axis_hat(s, k).powi(2)).sum::<f64>())
                .collect();
            let full: Vec<f64> = head.iter().zip(&tail).map(|(h, t)| h + t).collect();
            let d = kernel.sigma.len();
            Ok((0..d)
                .map(|j| head[..j].iter().product::<f64>() * tail[j] * full[j + 1..].iter().product::<f64>())
                .sum())
        })
        .collect()
}

/// Total energy `sum_{|k|_inf <= cap} |g_hat(k)|^2`.
pub fn spectral_energy(kernel: &GaussianKernel, fc: usize) -> f64 {
    kernel
        .sigma
        .iter()
        .map(|&s| {
            (-(fc as i64)..=fc as i64)
                .map(|k| ((2.0 * PI).sqrt() * s * (-2.0 * PI * PI * s * s * (k * k) as f64).exp()).powi(2))
                .sum::<f64>()
        })
        .product()
}

/// Kernels selectable from configuration files.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum KernelKind {
    Dirichlet,
    Gaussian,
    SubsampledGaussian,
    Foveation,
}

impl std::str::FromStr for KernelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "dirichlet" => Ok(Self::Dirichlet),
            "gaussian" => Ok(Self::Gaussian),
            "subsampled-gaussian" => Ok(Self::SubsampledGaussian),
            "foveation" => Ok(Self::Foveation),
            other => Err(Error::Parse(format!("unknown kernel `{other}`"))),
        }
    }
}

impl fmt::Display for KernelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Dirichlet => "dirichlet",
            Self::Gaussian => "gaussian",
            Self::SubsampledGaussian => "subsampled-gaussian",
            Self::Foveation => "foveation",
        })
    }
}

/// Serializable description of an operator (config files and manifests).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OperatorSpec {
    pub kernel: KernelKind,
    pub fc: usize,
    pub dim: usize,
    /// Per-axis widths; a single value is broadcast to every axis.
    #[serde(default)]
    pub sigma: Vec<f64>,
    #[serde(default)]
    pub grid: Option<usize>,
    #[serde(default)]
    pub q: Option<usize>,
    /// Foveation only: relative width growth away from the centre of the domain.
    #[serde(default = "default_fovea_gain")]
    pub fovea_gain: f64,
}

fn default_fovea_gain() -> f64 {
    4.0
}

impl OperatorSpec {
    pub fn dirichlet(fc: usize, dim: usize) -> Self {
        Self { kernel: KernelKind::Dirichlet, fc, dim, sigma: Vec::new(), grid: None, q: None, fovea_gain: default_fovea_gain() }
    }

    fn widths(&self) -> Result<Vec<f64>> {
        match self.sigma.len() {
            1 => Ok(vec![self.sigma[0]; self.dim]),
            n if n == self.dim => Ok(self.sigma.clone()),
            _ => Err(Error::InvalidParameter(format!(
                "kernel `{}` needs 1 or {} sigma values, got {}",
                self.kernel,
                self.dim,
                self.sigma.len()
            ))),
        }
    }

    fn grid_side(&self) -> Result<usize> {
        self.grid
            .ok_or_else(|| Error::InvalidParameter(format!("kernel `{}` requires `grid`", self.kernel)))
    }

    pub fn build(&self) -> Result<SpectralOperator> {
        match self.kernel {
            KernelKind::Dirichlet => build_dirichlet(self.fc, self.dim),
            KernelKind::Gaussian => build_gaussian(self.fc, self.dim, &self.widths()?),
            KernelKind::SubsampledGaussian => {
                build_subsampled_gaussian(self.fc, self.dim, self.grid_side()?, &self.widths()?, self.q)
            }
            KernelKind::Foveation => build_foveation(
                self.fc,
                self.dim,
                self.grid_side()?,
                gaussian_profile,
                foveation_widths(self.widths()?, self.fovea_gain, vec![0.5; self.dim]),
            ),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{complex_normal, seeded};

    fn random_vec(n: usize, seed: u64) -> CVector {
        let mut rng = seeded(seed);
        CVector::from_iterator(n, (0..n).map(|_| complex_normal(&mut rng)))
    }

    fn dense_subsampled_oracle(fc: usize, d: usize, grid: usize, diag: &CVector) -> CMatrix {
        let idx = IndexSet::new(d, fc).unwrap();
        let cg = CoarseGrid { side: grid, dim: d };
        let mut m = CMatrix::zeros(cg.len(), idx.len());
        for (r, n) in cg.iter().enumerate() {
            for (c, k) in idx.iter().enumerate() {
                let mut ph = 0.0;
                for i in 0..d {
                    ph += k[i] as f64 * n[i] as f64 / grid as f64;
                }
                m[(r, c)] = diag[c] * Complex64::from_polar(1.0, 2.0 * PI * ph);
            }
        }
        m
    }

    fn adjoint_gap(op: &SpectralOperator, seed: u64) -> f64 {
        let z = random_vec(op.index_set().len(), seed);
        let y = random_vec(op.output_dim(), seed + 1000);
        let lhs = op.apply(&z).unwrap().dotc(&y);
        let rhs = z.dotc(&op.adjoint(&y).unwrap());
        (lhs - rhs).norm() / (z.norm() * y.norm())
    }

    #[test]
    fn dirichlet_is_identity() {
        let op = build_dirichlet(1, 1).unwrap();
        let z = random_vec(3, 1);
        assert_eq!(op.apply(&z).unwrap(), z);
        assert_eq!(op.adjoint(&z).unwrap(), z);
        let op = build_dirichlet(2, 2).unwrap();
        assert_eq!(op.output_dim(), 25);
        assert_eq!(op.kind(), OperatorKind::Diagonal);
        assert_eq!(op.hilbert_norm().scale(), 1.0);
        assert!(build_dirichlet(0, 1).is_err());
    }

    #[test]
    fn gaussian_entries() {
        let op = build_gaussian(3, 1, &[0.1]).unwrap();
        let a = op.to_dense().unwrap();
        assert!((a[(3, 3)].re - (2.0 * PI).sqrt() * 0.1).abs() < 1e-15);
        assert!((a[(3, 3)].re - 0.250_662_827_463_100_05).abs() < 1e-12);
        for k in 0..3 {
            assert!(a[(3 + k + 1, 3 + k + 1)].re < a[(3 + k, 3 + k)].re);
            assert_eq!(a[(3 - k, 3 - k)], a[(3 + k, 3 + k)]);
        }
        let op = build_gaussian(2, 2, &[0.05, 0.05]).unwrap();
        let idx = op.index_set();
        let p = idx.position(&[1, 1]).unwrap();
        let want = 2.0 * PI * 0.0025 * (-2.0 * PI * PI * 2.0 * 0.0025f64).exp();
        assert!((op.to_dense().unwrap()[(p, p)].re - want).abs() < 1e-15);
        assert!(build_gaussian(2, 1, &[0.0]).is_err());
        assert!(build_gaussian(2, 1, &[-0.1]).is_err());
    }

    #[test]
    fn gaussian_diagonal_is_real_positive_symmetric() {
        let op = build_gaussian(4, 2, &[0.07, 0.11]).unwrap();
        let a = op.to_dense().unwrap();
        let idx = op.index_set();
        for (p, k) in idx.iter().enumerate() {
            let neg: Vec<i64> = k.iter().map(|v| -v).collect();
            let q = idx.position(&neg).unwrap();
            assert!(a[(p, p)].im == 0.0 && a[(p, p)].re > 0.0);
            assert_eq!(a[(p, p)], a[(q, q)]);
        }
    }

    #[test]
    fn subsampled_matches_dense_small_1d() {
        let diag = CVector::from_element(3, Complex64::new(1.0, 0.0));
        let op = build_subsampled(1, 1, 4, diag.clone(), None).unwrap();
        assert_eq!(op.grid(), Some((4, 1)));
        let dense = dense_subsampled_oracle(1, 1, 4, &diag);
        let z = random_vec(3, 5);
        assert!((op.apply(&z).unwrap() - &dense * &z).camax() < 1e-12);
        assert!(adjoint_gap(&op, 9) < 1e-10);
    }

    #[test]
    fn subsampled_matches_dense_gaussian_2d() {
        let diag = gaussian_diagonal(2, 2, &[0.05, 0.08]).unwrap();
        let op = build_subsampled(2, 2, 8, diag.clone(), None).unwrap();
        let dense = dense_subsampled_oracle(2, 2, 8, &diag);
        for seed in 0..5 {
            let z = random_vec(25, seed);
            let y = random_vec(64, seed + 7);
            assert!((op.apply(&z).unwrap() - &dense * &z).camax() <= 1e-10 * z.norm());
            assert!((op.adjoint(&y).unwrap() - dense.adjoint() * &y).camax() <= 1e-10 * y.norm());
        }
        assert!((op.to_dense().unwrap() - dense).camax() < 1e-12);
        assert!((op.hilbert_norm().scale() - 1.0 / 8.0).abs() < 1e-15);
    }

    #[test]
    fn subsampled_agrees_with_dense_over_small_shapes() {
        for d in 1..=3usize {
            for fc in 1..=5usize {
                if (2 * fc + 1).pow(d as u32) > 125 {
                    continue;
                }
                for grid in 1..=16usize {
                    if grid.pow(d as u32) > 256 {
                        continue;
                    }
                    let diag = random_vec((2 * fc + 1).pow(d as u32), (d * 100 + fc * 10 + grid) as u64);
                    let op = build_subsampled(fc, d, grid, diag.clone(), None).unwrap();
                    let dense = dense_subsampled_oracle(fc, d, grid, &diag);
                    let z = random_vec(diag.len(), 3);
                    let want = &dense * &z;
                    let got = op.apply(&z).unwrap();
                    assert!((got - &want).norm() <= 1e-10 * want.norm().max(1e-300), "d={d} fc={fc} L={grid}");
                }
            }
        }
    }

    #[test]
    fn explicit_q_override() {
        let diag = gaussian_diagonal(3, 1, &[0.1]).unwrap();
        assert!(build_subsampled(3, 1, 4, diag.clone(), Some(1)).is_err());
        let op = build_subsampled(3, 1, 4, diag.clone(), Some(4)).unwrap();
        let dense = dense_subsampled_oracle(3, 1, 4, &diag);
        let z = random_vec(7, 1);
        assert!((op.apply(&z).unwrap() - dense * z).camax() < 1e-12);
        assert!(build_subsampled(3, 1, 4, random_vec(5, 1), None).is_err());
    }

    #[test]
    fn adjointness_for_every_kind() {
        let fov = build_foveation(3, 1, 12, gaussian_profile, foveation_widths(vec![0.05], 4.0, vec![0.5])).unwrap();
        let dense = build_dense(2, 1, CMatrix::from_fn(7, 5, |i, j| Complex64::new(i as f64 - j as f64, (i * j) as f64)), HilbertNorm::fourier()).unwrap();
        let ops = [
            build_dirichlet(3, 2).unwrap(),
            build_gaussian(4, 1, &[0.1]).unwrap(),
            build_subsampled_gaussian(3, 2, 6, &[0.1, 0.1], None).unwrap(),
            fov,
            dense,
        ];
        for op in &ops {
            for seed in 0..50 {
                assert!(adjoint_gap(op, seed) <= 1e-10, "{op:?}");
            }
        }
    }

    #[test]
    fn dense_apply_matches_loops() {
        let m = CMatrix::from_fn(4, 3, |i, j| Complex64::new((i + 2 * j) as f64, 1.0 - i as f64));
        let op = build_dense(1, 1, m.clone(), HilbertNorm::fourier()).unwrap();
        let z = random_vec(3, 2);
        let got = op.apply(&z).unwrap();
        for i in 0..4 {
            let mut acc = Complex64::new(0.0, 0.0);
            for j in 0..3 {
                acc += m[(i, j)] * z[j];
            }
            assert!((got[i] - acc).norm() < 1e-14);
        }
        assert!(op.apply(&random_vec(4, 1)).is_err());
        assert!(op.adjoint(&random_vec(3, 1)).is_err());
        assert!(build_dense(1, 1, CMatrix::zeros(4, 4), HilbertNorm::fourier()).is_err());
    }

    #[test]
    fn constant_width_foveation_matches_subsampled_gaussian() {
        // fc = 12, sigma = 0.1: g_hat(12) ~ 1e-13
        let (fc, grid, s) = (12usize, 10usize, 0.1);
        let fov = build_foveation(fc, 1, grid, gaussian_profile, move |_x: &[f64]| vec![s]).unwrap();
        let sub = build_subsampled_gaussian(fc, 1, grid, &[s], None).unwrap();
        let a = fov.to_dense().unwrap();
        let b = sub.to_dense().unwrap();
        assert!((a - b).camax() <= 1e-6);
    }

    #[test]
    fn foveation_rows_are_conjugate_symmetric() {
        let fov = build_foveation(4, 2, 5, gaussian_profile, foveation_widths(vec![0.06, 0.04], 3.0, vec![0.5, 0.5])).unwrap();
        let a = fov.to_dense().unwrap();
        let idx = fov.index_set();
        for row in 0..a.nrows() {
            for (p, k) in idx.iter().enumerate() {
                let q = idx.position(&k.iter().map(|v| -v).collect::<Vec<_>>()).unwrap();
                assert!((a[(row, q)] - a[(row, p)].conj()).norm() <= 1e-10);
            }
        }
    }

    #[test]
    fn foveation_fine_grid_self_convergence() {
        let base = foveation_fine_grid(6, 8);
        let build = |gain: f64, side: usize| {
            build_foveation_with_fine_grid(6, 1, 8, gaussian_profile, foveation_widths(vec![0.06], gain, vec![0.5]), side)
                .unwrap()
                .to_dense()
                .unwrap()
        };
        let gap = |a: &CMatrix, b: &CMatrix| (a - b).camax();
        assert!(gap(&build(0.0, base), &build(0.0, 2 * base)) < 1e-8);
        // the width profile has a kink where |x - 1/2|^2 wraps, so convergence is algebraic
        let reference = build(2.0, 8 * base);
        let coarse = gap(&build(2.0, base), &reference);
        let fine = gap(&build(2.0, 4 * base), &reference);
        assert!(fine < coarse / 4.0 && fine < 1e-5, "{coarse} {fine}");
    }

    #[test]
    fn truncation_error_decreases() {
        let kernel = GaussianKernel { sigma: vec![0.1] };
        let err = spectral_truncation_error(&kernel, &[5, 10, 15, 30], 200).unwrap();
        for w in err.windows(2) {
            assert!(w[1] < w[0]);
        }
        assert!(err[3] < 1e-15);
        // Parseval split
        let full = spectral_energy(&kernel, 200);
        for (&fc, &e) in [5usize, 10].iter().zip(&err) {
            let head = spectral_energy(&kernel, fc);
            assert!((e - (full - head)).abs() < 1e-12);
        }
        // closed-form tail summation, 2D
        let k2 = GaussianKernel { sigma: vec![0.1, 0.15] };
        let e = spectral_truncation_error(&k2, &[3], 60).unwrap()[0];
        let mut direct = 0.0;
        for a in -60i64..=60 {
            for b in -60i64..=60 {
                if a.abs().max(b.abs()) > 3 {
                    direct += gaussian_hat(&[0.1, 0.15], &[a, b]).powi(2);
                }
            }
        }
        assert!((e - direct).abs() < 1e-14);
    }

    #[test]
    fn spec_roundtrip_builds() {
        let spec = OperatorSpec { kernel: KernelKind::SubsampledGaussian, fc: 3, dim: 2, sigma: vec![0.1], grid: Some(8), q: None, fovea_gain: 4.0 };
        let json = serde_json::to_string(&spec).unwrap();
        let back: OperatorSpec = serde_json::from_str(&json).unwrap();
        assert_eq!(back, spec);
        assert_eq!(back.build().unwrap().kind(), OperatorKind::SubsampledFft);
        let mut bad = spec.clone();
        bad.grid = None;
        assert!(bad.build().is_err());
        assert_eq!("foveation".parse::<KernelKind>().unwrap(), KernelKind::Foveation);
    }
}
