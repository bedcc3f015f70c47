//! Discrete Radon measures on the torus `[0, 1)^d`.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::Rng;

use crate::rng::{complex_normal, seeded};
use crate::{CVector, Error, IndexSet, Result, SpectralOperator};

/// A finite sum of weighted Dirac masses on the torus.
///
/// Coordinates are reduced modulo 1 on construction and atoms sharing a bitwise
/// identical position are merged by summing their amplitudes.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteMeasure {
    dim: usize,
    positions: Vec<Vec<f64>>,
    amplitudes: Vec<Complex64>,
}

/// Reduce a coordinate into `[0, 1)`.
pub fn wrap_unit(x: f64) -> f64 {
    let r = x - x.floor();
    if r >= 1.0 {
        0.0
    } else {
        r
    }
}

/// Per-axis signed difference `x - y` lifted to `[-1/2, 1/2)`.
pub fn torus_delta(x: f64, y: f64) -> f64 {
    let d = x - y;
    d - (d + 0.5).floor()
}

/// Geodesic distance on the flat torus.
pub fn torus_distance(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::DimensionMismatch { expected: x.len(), found: y.len() });
    }
    Ok(x.iter()
        .zip(y)
        .map(|(a, b)| {
            let t = (a - b).abs().rem_euclid(1.0);
            let t = t.min(1.0 - t);
            t * t
        })
        .sum::<f64>()
        .sqrt())
}

/// How amplitudes of synthetic instances are drawn.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AmplitudeMode {
    /// Uniform on `[-1, 1]`.
    Signed,
    /// Uniform on `[0.1, 1]`.
    Positive,
}

impl std::str::FromStr for AmplitudeMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "signed" => Ok(Self::Signed),
            "positive" => Ok(Self::Positive),
            other => Err(Error::Parse(format!("unknown amplitude mode `{other}`"))),
        }
    }
}

impl DiscreteMeasure {
    pub fn new(dim: usize, positions: Vec<Vec<f64>>, amplitudes: Vec<Complex64>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidParameter("dimension must be at least 1".into()));
        }
        if positions.len() != amplitudes.len() {
            return Err(Error::Shape(format!(
                "{} positions but {} amplitudes",
                positions.len(),
                amplitudes.len()
            )));
        }
        let mut merged_pos: Vec<Vec<f64>> = Vec::with_capacity(positions.len());
        let mut merged_amp: Vec<Complex64> = Vec::with_capacity(positions.len());
        for (p, a) in positions.into_iter().zip(amplitudes) {
            if p.len() != dim {
                return Err(Error::DimensionMismatch { expected: dim, found: p.len() });
            }
            if p.iter().any(|c| !c.is_finite()) {
                return Err(Error::InvalidParameter("non-finite coordinate".into()));
            }
            let p: Vec<f64> = p.into_iter().map(wrap_unit).collect();
            let same = |q: &Vec<f64>| q.iter().zip(&p).all(|(x, y)| x.to_bits() == y.to_bits());
            match merged_pos.iter().position(same) {
                Some(i) => merged_amp[i] += a,
                None => {
                    merged_pos.push(p);
                    merged_amp.push(a);
                }
            }
        }
        Ok(Self { dim, positions: merged_pos, amplitudes: merged_amp })
    }

    pub fn real(dim: usize, positions: Vec<Vec<f64>>, amplitudes: &[f64]) -> Result<Self> {
        Self::new(dim, positions, amplitudes.iter().map(|&a| Complex64::new(a, 0.0)).collect())
    }

    pub fn empty(dim: usize) -> Result<Self> {
        Self::new(dim, Vec::new(), Vec::new())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn positions(&self) -> &[Vec<f64>] {
        &self.positions
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amplitudes
    }

    /// Total variation norm `sum |a_j|`.
    pub fn total_variation(&self) -> f64 {
        self.amplitudes.iter().map(|a| a.norm()).sum()
    }

    /// Sum of two measures (atoms at identical positions merge).
    pub fn plus(&self, other: &Self) -> Result<Self> {
        if other.dim != self.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, found: other.dim });
        }
        let mut pos = self.positions.clone();
        pos.extend(other.positions.iter().cloned());
        let mut amp = self.amplitudes.clone();
        amp.extend(other.amplitudes.iter().copied());
        Self::new(self.dim, pos, amp)
    }

    pub fn scaled(&self, s: Complex64) -> Self {
        Self {
            dim: self.dim,
            positions: self.positions.clone(),
            amplitudes: self.amplitudes.iter().map(|a| a * s).collect(),
        }
    }

    /// Translate every atom by `t` (mod 1).
    pub fn translated(&self, t: &[f64]) -> Result<Self> {
        if t.len() != self.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, found: t.len() });
        }
        let pos = self
            .positions
            .iter()
            .map(|p| p.iter().zip(t).map(|(x, s)| x + s).collect())
            .collect();
        Self::new(self.dim, pos, self.amplitudes.clone())
    }
}

/// Minimum pairwise torus distance between atoms.
pub fn min_separation(m: &DiscreteMeasure) -> Result<f64> {
    if m.len() < 2 {
        return Err(Error::TooFewAtoms(m.len()));
    }
    let mut best = f64::INFINITY;
    for i in 0..m.len() {
        for j in (i + 1)..m.len() {
            best = best.min(torus_distance(&m.positions[i], &m.positions[j])?);
        }
    }
    Ok(best)
}

/// The moment vector `v(x)_k = e^{-2 i pi <k, x>}` over `idx`.
pub fn moment_vector(x: &[f64], idx: &IndexSet) -> CVector {
    // per-axis phase tables, then colex products
    let side = idx.side();
    let f = idx.halfwidth() as i64;
    let tables: Vec<Vec<Complex64>> = x
        .iter()
        .map(|&xi| {
            (0..side)
                .map(|s| Complex64::from_polar(1.0, -2.0 * PI * (s as i64 - f) as f64 * xi))
                .collect()
        })
        .collect();
    CVector::from_iterator(
        idx.len(),
        (0..idx.len()).map(|mut p| {
            let mut v = Complex64::new(1.0, 0.0);
            for table in &tables {
                v *= table[p % side];
                p /= side;
            }
            v
        }),
    )
}

/// Fourier coefficients `c_k(mu) = sum_j a_j e^{-2 i pi <k, x_j>}` for `k` in `idx`.
pub fn fourier_coefficients(m: &DiscreteMeasure, idx: &IndexSet) -> Result<CVector> {
    if idx.dim() != m.dim() {
        return Err(Error::DimensionMismatch { expected: m.dim(), found: idx.dim() });
    }
    let mut out = CVector::zeros(idx.len());
    for (x, a) in m.positions.iter().zip(&m.amplitudes) {
        out.axpy(*a, &moment_vector(x, idx), Complex64::new(1.0, 0.0));
    }
    Ok(out)
}

/// Random instance with `r` atoms i.i.d. uniform on `[0,1)^d`.
pub fn generate_synthetic(r: usize, d: usize, mode: AmplitudeMode, seed: u64) -> Result<DiscreteMeasure> {
    if d == 0 {
        return Err(Error::InvalidParameter("dimension must be at least 1".into()));
    }
    let mut rng = seeded(seed);
    let mut positions = Vec::with_capacity(r);
    let mut amplitudes = Vec::with_capacity(r);
    for _ in 0..r {
        positions.push((0..d).map(|_| rng.random::<f64>()).collect::<Vec<_>>());
        let a = match mode {
            AmplitudeMode::Signed => rng.random_range(-1.0..=1.0),
            AmplitudeMode::Positive => rng.random_range(0.1..=1.0),
        };
        amplitudes.push(Complex64::new(a, 0.0));
    }
    DiscreteMeasure::new(d, positions, amplitudes)
}

/// Noisy observation `y = A F_c mu + w` with `||w|| / ||y0|| = noise_level` exactly.
///
/// Returns `(y, y0)`.
pub fn observe(
    m: &DiscreteMeasure,
    op: &SpectralOperator,
    noise_level: f64,
    seed: u64,
) -> Result<(CVector, CVector)> {
    if !(noise_level >= 0.0) {
        return Err(Error::InvalidParameter(format!("noise level {noise_level} is negative")));
    }
    if op.index_set().dim() != m.dim() {
        return Err(Error::DimensionMismatch { expected: op.index_set().dim(), found: m.dim() });
    }
    let y0 = op.apply(&fourier_coefficients(m, op.index_set())?)?;
    if noise_level == 0.0 {
        return Ok((y0.clone(), y0));
    }
    let mut rng = seeded(seed);
    let w = CVector::from_iterator(y0.len(), (0..y0.len()).map(|_| complex_normal(&mut rng)));
    let scale = noise_level * y0.norm() / w.norm();
    let y = &y0 + w * Complex64::new(scale, 0.0);
    Ok((y, y0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operators::build_dirichlet;
    use proptest::prelude::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn torus_distance_examples() {
        assert_eq!(torus_distance(&[0.3], &[0.3]).unwrap(), 0.0);
        assert!((torus_distance(&[0.1], &[0.9]).unwrap() - 0.2).abs() < 1e-15);
        assert!((torus_distance(&[0.0, 0.0], &[0.5, 0.5]).unwrap() - 0.5f64.sqrt()).abs() < 1e-15);
        assert!(torus_distance(&[0.0], &[0.0, 0.1]).is_err());
    }

    #[test]
    fn construction_wraps_and_merges() {
        let m = DiscreteMeasure::real(1, vec![vec![1.25], vec![0.25], vec![-0.5]], &[1.0, 2.0, 1.0]).unwrap();
        assert_eq!(m.len(), 2);
        assert_eq!(m.positions()[0], vec![0.25]);
        assert_eq!(m.amplitudes()[0], c(3.0, 0.0));
        assert_eq!(m.positions()[1], vec![0.5]);
        assert!(DiscreteMeasure::real(1, vec![vec![0.1]], &[]).is_err());
        assert!(DiscreteMeasure::real(2, vec![vec![0.1]], &[1.0]).is_err());
        // tiny negative values must not wrap to 1.0
        let m = DiscreteMeasure::real(1, vec![vec![-1e-18]], &[1.0]).unwrap();
        assert!(m.positions()[0][0] < 1.0);
    }

    #[test]
    fn min_separation_examples() {
        let m = DiscreteMeasure::real(1, vec![vec![0.1], vec![0.5], vec![0.9]], &[1.0; 3]).unwrap();
        assert!((min_separation(&m).unwrap() - 0.2).abs() < 1e-15);
        let m = DiscreteMeasure::real(1, vec![vec![0.0], vec![0.5]], &[1.0; 2]).unwrap();
        assert_eq!(min_separation(&m).unwrap(), 0.5);
        let m = DiscreteMeasure::real(1, vec![vec![0.0]], &[1.0]).unwrap();
        assert!(matches!(min_separation(&m), Err(Error::TooFewAtoms(1))));
    }

    #[test]
    fn min_separation_matches_brute_force() {
        let m = generate_synthetic(5, 2, AmplitudeMode::Signed, 11).unwrap();
        let mut best = f64::INFINITY;
        for (i, p) in m.positions().iter().enumerate() {
            for (j, q) in m.positions().iter().enumerate() {
                if i != j {
                    let d: f64 = p
                        .iter()
                        .zip(q)
                        .map(|(a, b)| {
                            let t = (a - b).abs();
                            t.min(1.0 - t).powi(2)
                        })
                        .sum();
                    best = best.min(d.sqrt());
                }
            }
        }
        assert!((min_separation(&m).unwrap() - best).abs() < 1e-15);
    }

    #[test]
    fn fourier_coefficients_examples() {
        let idx = IndexSet::new(1, 1).unwrap();
        let empty = DiscreteMeasure::empty(1).unwrap();
        assert!(fourier_coefficients(&empty, &idx).unwrap().iter().all(|v| *v == c(0.0, 0.0)));

        let m = DiscreteMeasure::real(1, vec![vec![0.25]], &[1.0]).unwrap();
        let cf = fourier_coefficients(&m, &idx).unwrap();
        for (got, want) in cf.iter().zip([c(0.0, 1.0), c(1.0, 0.0), c(0.0, -1.0)]) {
            assert!((got - want).norm() < 1e-15);
        }
        assert!(fourier_coefficients(&m, &IndexSet::new(2, 1).unwrap()).is_err());
    }

    #[test]
    fn fourier_coefficients_match_double_loop() {
        let idx = IndexSet::new(2, 1).unwrap();
        let m = DiscreteMeasure::new(
            2,
            vec![vec![0.13, 0.77], vec![0.52, 0.08]],
            vec![c(0.7, -0.2), c(-1.1, 0.4)],
        )
        .unwrap();
        let cf = fourier_coefficients(&m, &idx).unwrap();
        let mut p = 0;
        for k2 in -1i64..=1 {
            for k1 in -1i64..=1 {
                let mut acc = c(0.0, 0.0);
                for (x, a) in m.positions().iter().zip(m.amplitudes()) {
                    acc += a * Complex64::from_polar(1.0, -2.0 * PI * (k1 as f64 * x[0] + k2 as f64 * x[1]));
                }
                assert!((cf[p] - acc).norm() < 1e-12);
                p += 1;
            }
        }
    }

    #[test]
    fn synthetic_is_deterministic_and_in_range() {
        let a = generate_synthetic(3, 1, AmplitudeMode::Signed, 7).unwrap();
        let b = generate_synthetic(3, 1, AmplitudeMode::Signed, 7).unwrap();
        assert_eq!(a, b);
        let m = generate_synthetic(100, 2, AmplitudeMode::Signed, 3).unwrap();
        assert_eq!(m.len(), 100);
        assert!(m.positions().iter().flatten().all(|&x| (0.0..1.0).contains(&x)));
        assert!(m.amplitudes().iter().all(|a| a.im == 0.0 && a.re.abs() <= 1.0));
        let p = generate_synthetic(50, 1, AmplitudeMode::Positive, 3).unwrap();
        assert!(p.amplitudes().iter().all(|a| (0.1..=1.0).contains(&a.re)));
        assert!(generate_synthetic(0, 1, AmplitudeMode::Signed, 1).unwrap().is_empty());
    }

    #[test]
    fn signed_amplitudes_have_small_mean() {
        let m = generate_synthetic(1000, 1, AmplitudeMode::Signed, 2024).unwrap();
        let mean: f64 = m.amplitudes().iter().map(|a| a.re).sum::<f64>() / m.len() as f64;
        assert!(mean.abs() <= 0.1, "mean {mean}");
    }

    #[test]
    fn observe_noise_is_exactly_scaled() {
        let op = build_dirichlet(3, 1).unwrap();
        let m = DiscreteMeasure::real(1, vec![vec![0.4]], &[1.0]).unwrap();
        let (y, y0) = observe(&m, &op, 0.0, 1).unwrap();
        assert_eq!(y, y0);
        assert_eq!(y0, fourier_coefficients(&m, op.index_set()).unwrap());
        let (y, y0) = observe(&m, &op, 1e-2, 1).unwrap();
        assert!(((&y - &y0).norm() / y0.norm() - 1e-2).abs() < 1e-12);
        assert!(observe(&m, &op, -1.0, 1).is_err());
    }

    fn arb_measure(d: usize) -> impl Strategy<Value = DiscreteMeasure> {
        prop::collection::vec((prop::collection::vec(0.0..1.0f64, d), -1.0..1.0f64), 0..6).prop_map(
            move |atoms| {
                let (p, a): (Vec<_>, Vec<_>) = atoms.into_iter().unzip();
                DiscreteMeasure::real(d, p, &a).unwrap()
            },
        )
    }

    proptest! {
        #[test]
        fn real_measures_have_conjugate_symmetric_coefficients(m in arb_measure(2)) {
            let idx = IndexSet::new(2, 2).unwrap();
            let cf = fourier_coefficients(&m, &idx).unwrap();
            for p in 0..idx.len() {
                let k = idx.multi_index(p);
                let neg: Vec<i64> = k.iter().map(|v| -v).collect();
                let q = idx.position(&neg).unwrap();
                prop_assert!((cf[q] - cf[p].conj()).norm() <= 1e-12);
            }
        }

        #[test]
        fn coefficients_are_linear_and_tv_bounded(a in arb_measure(1), b in arb_measure(1)) {
            let idx = IndexSet::new(1, 4).unwrap();
            let sum = fourier_coefficients(&a.plus(&b).unwrap(), &idx).unwrap();
            let parts = fourier_coefficients(&a, &idx).unwrap() + fourier_coefficients(&b, &idx).unwrap();
            prop_assert!((sum - parts).camax() <= 1e-12);
            let ca = fourier_coefficients(&a, &idx).unwrap();
            prop_assert!(ca.iter().all(|v| v.norm() <= a.total_variation() + 1e-12));
        }

        #[test]
        fn torus_distance_is_a_metric(
            x in prop::collection::vec(0.0..1.0f64, 3),
            y in prop::collection::vec(0.0..1.0f64, 3),
            z in prop::collection::vec(0.0..1.0f64, 3),
        ) {
            let dxy = torus_distance(&x, &y).unwrap();
            prop_assert_eq!(dxy, torus_distance(&y, &x).unwrap());
            prop_assert!(dxy <= torus_distance(&x, &z).unwrap() + torus_distance(&z, &y).unwrap() + 1e-12);
        }
    }
}
