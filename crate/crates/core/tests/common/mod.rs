//! Independent dense reference implementations shared by the integration suites.
#![allow(dead_code)]

use std::collections::BTreeMap;
use std::f64::consts::PI;

use nalgebra::DMatrix;
use offgrid_sr::measures::torus_distance;
use offgrid_sr::operators::{build_dirichlet, build_gaussian, build_subsampled_gaussian, gaussian_hat};
use offgrid_sr::rng::{complex_normal, seeded, SeededRng};
use offgrid_sr::solver::Problem;
use offgrid_sr::{CMatrix, CVector, Complex64, IndexSet, SpectralOperator};
use rand::Rng;

pub fn c(re: f64) -> Complex64 {
    Complex64::new(re, 0.0)
}

pub fn random_cvec(n: usize, rng: &mut SeededRng) -> CVector {
    CVector::from_iterator(n, (0..n).map(|_| complex_normal(rng)))
}

pub fn random_cmat(rows: usize, cols: usize, rng: &mut SeededRng) -> CMatrix {
    CMatrix::from_iterator(rows, cols, (0..rows * cols).map(|_| complex_normal(rng)))
}

pub fn random_hermitian(n: usize, rng: &mut SeededRng) -> CMatrix {
    let a = random_cmat(n, n, rng);
    (&a + a.adjoint()) * c(0.5)
}

/// A small random problem: kernel, dimension, cutoff and relaxation order vary with the
/// seed, with `(2l + 1)^d <= 125`.
pub struct Instance {
    pub prob: Problem,
    pub level: usize,
    pub rho: f64,
    pub label: String,
}

pub fn random_instance(seed: u64) -> Instance {
    let mut rng = seeded(seed);
    let d = 1 + (seed % 2) as usize;
    let fc = rng.random_range(1..=2usize);
    let level = if d == 1 { fc + rng.random_range(0..=3usize) } else { fc + rng.random_range(0..=1usize) };
    let kind = seed / 2 % 3;
    let op: SpectralOperator = match kind {
        0 => build_dirichlet(fc, d).unwrap(),
        1 => build_gaussian(fc, d, &vec![rng.random_range(0.05..0.2); d]).unwrap(),
        _ => build_subsampled_gaussian(fc, d, rng.random_range(2..=7usize), &vec![rng.random_range(0.05..0.2); d], None)
            .unwrap(),
    };
    let y = random_cvec(op.output_dim(), &mut rng);
    let lambda0 = rng.random_range(0.01..0.5);
    let rho = 10f64.powf(rng.random_range(-1.0..2.0));
    let label = format!("d={d} fc={fc} l={level} kernel#{kind} rho={rho:.3}");
    Instance { prob: Problem::new(op, y, lambda0).unwrap(), level, rho, label }
}

/// Entry `(s, t)` of the bordered moment matrix depends on `k_t - k_s`; returns the
/// mean of `r` over each such class, laid out as a dense matrix.
pub fn dense_toeplitz_projection(r: &CMatrix, idx: &IndexSet) -> CMatrix {
    let n = idx.len();
    let keys: Vec<Vec<i64>> = idx.iter().collect();
    let mut sums: BTreeMap<Vec<i64>, (Complex64, f64)> = BTreeMap::new();
    let lag = |s: usize, t: usize| keys[t].iter().zip(&keys[s]).map(|(a, b)| a - b).collect::<Vec<_>>();
    for s in 0..n {
        for t in 0..n {
            let e = sums.entry(lag(s, t)).or_insert((c(0.0), 0.0));
            e.0 += r[(s, t)];
            e.1 += 1.0;
        }
    }
    CMatrix::from_fn(n, n, |s, t| {
        let (sum, count) = sums[&lag(s, t)];
        sum / count
    })
}

/// Means of `r` along each multilevel diagonal, keyed by `k_t - k_s`.
pub fn diagonal_means(r: &CMatrix, idx: &IndexSet) -> BTreeMap<Vec<i64>, Complex64> {
    let keys: Vec<Vec<i64>> = idx.iter().collect();
    let mut sums: BTreeMap<Vec<i64>, (Complex64, f64)> = BTreeMap::new();
    for s in 0..keys.len() {
        for t in 0..keys.len() {
            let lag: Vec<i64> = keys[t].iter().zip(&keys[s]).map(|(a, b)| a - b).collect();
            let e = sums.entry(lag).or_insert((c(0.0), 0.0));
            e.0 += r[(s, t)];
            e.1 += 1.0;
        }
    }
    sums.into_iter().map(|(k, (s, n))| (k, s / n)).collect()
}

/// Dense multilevel Toeplitz matrix `T[s, t] = u_{k_t - k_s}` from coefficients on the
/// lag set `[-2l, 2l]^d`.
pub fn dense_toeplitz(coeffs: &CVector, level: usize, d: usize) -> CMatrix {
    let rows = IndexSet::new(d, level).unwrap();
    let lags = IndexSet::new(d, 2 * level).unwrap();
    let keys: Vec<Vec<i64>> = rows.iter().collect();
    CMatrix::from_fn(rows.len(), rows.len(), |s, t| {
        let lag: Vec<i64> = keys[t].iter().zip(&keys[s]).map(|(a, b)| a - b).collect();
        coeffs[lags.position(&lag).unwrap()]
    })
}

struct Blocks {
    r: CMatrix,
    z: CVector,
    tau: f64,
    idx: IndexSet,
}

fn blocks(x: &CMatrix, prob: &Problem, level: usize) -> Blocks {
    let m = x.nrows() - 1;
    let idx = IndexSet::new(prob.dim(), level).unwrap();
    let r = x.view((0, 0), (m, m)).into_owned();
    let zt = x.view((0, m), (m, 1)).column(0).into_owned();
    let inner = prob.operator().index_set();
    let z = CVector::from_iterator(inner.len(), inner.iter().map(|k| zt[idx.position(&k).unwrap()]));
    Blocks { r, z, tau: x[(m, m)].re, idx }
}

/// The objective as a function of the full bordered matrix `X`.
pub fn dense_objective(x: &CMatrix, prob: &Problem, level: usize, rho: f64) -> f64 {
    let b = blocks(x, prob, level);
    let m = b.r.nrows() as f64;
    let a = prob.operator().to_dense().unwrap();
    let s2 = prob.hilbert_norm().scale().powi(2);
    let data = s2 * (prob.y() - &a * &b.z).norm_squared();
    let pen = (&b.r - dense_toeplitz_projection(&b.r, &b.idx)).norm_squared();
    let lambda = prob.lambda();
    prob.c0() * (0.5 * (b.r.trace().re / m + b.tau) + data / (2.0 * lambda) + pen / (2.0 * rho))
}

/// Gradient of [`dense_objective`] for the real inner product `Re tr(G^h H)` on
/// Hermitian matrices.
pub fn dense_gradient(x: &CMatrix, prob: &Problem, level: usize, rho: f64) -> CMatrix {
    let b = blocks(x, prob, level);
    let m = b.r.nrows();
    let a = prob.operator().to_dense().unwrap();
    let s2 = prob.hilbert_norm().scale().powi(2);
    let gc = a.adjoint() * (&a * &b.z - prob.y()) * c(s2);
    let inner = prob.operator().index_set();
    let mut g = CVector::zeros(m);
    for (k, v) in inner.iter().zip(gc.iter()) {
        g[b.idx.position(&k).unwrap()] = *v;
    }
    let lambda = prob.lambda();
    let mut out = CMatrix::zeros(m + 1, m + 1);
    let top = CMatrix::identity(m, m) * c(0.5 / m as f64) + (&b.r - dense_toeplitz_projection(&b.r, &b.idx)) * c(1.0 / rho);
    out.view_mut((0, 0), (m, m)).copy_from(&top);
    for i in 0..m {
        out[(i, m)] = g[i] / (2.0 * lambda);
        out[(m, i)] = g[i].conj() / (2.0 * lambda);
    }
    out[(m, m)] = c(0.5);
    out * c(prob.c0())
}

/// `Re tr(A^h B)`.
pub fn real_inner(a: &CMatrix, b: &CMatrix) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x.conj() * y).re).sum()
}

/// Subsampled convolution by explicit summation: row `n` (colexicographic over the
/// grid) is `sum_k ghat(k) z_k exp(2 i pi <k, n> / L)`.
pub fn dense_subsampled_gaussian(fc: usize, d: usize, grid: usize, sigma: &[f64]) -> CMatrix {
    let idx = IndexSet::new(d, fc).unwrap();
    let rows = grid.pow(d as u32);
    CMatrix::from_fn(rows, idx.len(), |r, col| {
        let k = idx.multi_index(col);
        let mut rem = r;
        let mut phase = 0.0;
        for &ki in &k {
            phase += ki as f64 * (rem % grid) as f64 / grid as f64;
            rem /= grid;
        }
        Complex64::from_polar(gaussian_hat(sigma, &k), 2.0 * PI * phase)
    })
}

/// Flat norm of real masses by enumerating every vertex of the feasible polytope
/// `{|f_i| <= 1, f_i - f_j <= d_ij}`. A vertex is fixed by a spanning forest of tight
/// difference constraints whose trees each contain one tight bound; every parent array,
/// root sign and edge orientation is tried.
pub fn flat_norm_vertex_oracle(points: &[Vec<f64>], mass: &[f64]) -> f64 {
    let n = points.len();
    assert!(n <= 8, "vertex enumeration is exponential");
    if n == 0 {
        return 0.0;
    }
    let dist: Vec<Vec<f64>> = points.iter().map(|a| points.iter().map(|b| torus_distance(a, b).unwrap()).collect()).collect();
    let mut best = f64::NEG_INFINITY;
    let mut parent = vec![usize::MAX; n];
    let total = (n as u64).pow(n as u32);
    for code in 0..total {
        // parent[i] = i encodes a root
        let mut rem = code;
        for p in parent.iter_mut() {
            *p = (rem % n as u64) as usize;
            rem /= n as u64;
        }
        // acyclic apart from root self-loops, and depth order for evaluation
        let mut order = Vec::with_capacity(n);
        let mut depth = vec![usize::MAX; n];
        let mut ok = true;
        for i in 0..n {
            let mut chain = vec![i];
            let mut cur = i;
            while parent[cur] != cur && depth[cur] == usize::MAX {
                cur = parent[cur];
                if chain.contains(&cur) {
                    ok = false;
                    break;
                }
                chain.push(cur);
            }
            if !ok {
                break;
            }
            for &v in chain.iter().rev() {
                if depth[v] == usize::MAX {
                    depth[v] = if parent[v] == v { 0 } else { depth[parent[v]] + 1 };
                    order.push(v);
                }
            }
        }
        if !ok {
            continue;
        }
        // one sign per node: root bound sign, or edge orientation
        for signs in 0..(1u32 << n) {
            let mut f = vec![0.0; n];
            for &v in &order {
                let s = if signs >> v & 1 == 1 { 1.0 } else { -1.0 };
                f[v] = if parent[v] == v { s } else { f[parent[v]] + s * dist[v][parent[v]] };
            }
            let feasible = f.iter().all(|x| x.abs() <= 1.0 + 1e-12)
                && (0..n).all(|i| (0..n).all(|j| f[i] - f[j] <= dist[i][j] + 1e-12));
            if feasible {
                best = best.max(f.iter().zip(mass).map(|(a, b)| a * b).sum());
            }
        }
    }
    best
}

/// Largest matching size and, among maximum matchings, the least total distance, by
/// exhaustive search.
pub fn brute_force_matching(s0: &[Vec<f64>], sr: &[Vec<f64>], delta: f64) -> (usize, f64) {
    fn rec(i: usize, used: &mut Vec<bool>, d: &[Vec<f64>], delta: f64, acc: (usize, f64), best: &mut (usize, f64)) {
        if i == d.len() {
            if acc.0 > best.0 || (acc.0 == best.0 && acc.1 < best.1) {
                *best = acc;
            }
            return;
        }
        rec(i + 1, used, d, delta, acc, best);
        for j in 0..used.len() {
            if !used[j] && d[i][j] <= delta {
                used[j] = true;
                rec(i + 1, used, d, delta, (acc.0 + 1, acc.1 + d[i][j]), best);
                used[j] = false;
            }
        }
    }
    let d: Vec<Vec<f64>> = s0.iter().map(|a| sr.iter().map(|b| torus_distance(a, b).unwrap()).collect()).collect();
    let mut best = (0, f64::INFINITY);
    rec(0, &mut vec![false; sr.len()], &d, delta, (0, 0.0), &mut best);
    if best.0 == 0 {
        best.1 = 0.0;
    }
    best
}

/// Smallest eigenvalue and spectral norm of a Hermitian matrix.
pub fn dense_extremes(m: &CMatrix) -> (f64, f64) {
    let eig = m.clone().symmetric_eigen();
    let min = eig.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min);
    let norm = eig.eigenvalues.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    (min, norm)
}

/// `J^{-1/2} G J^{-1/2}` with `J = diag(I / m, 1)`.
pub fn scale_gradient(g: &CMatrix) -> CMatrix {
    let m = g.nrows() - 1;
    let s = (m as f64).sqrt();
    let mut out = g.clone();
    for i in 0..=m {
        for j in 0..=m {
            let f = if i < m { s } else { 1.0 } * if j < m { s } else { 1.0 };
            out[(i, j)] *= f;
        }
    }
    out
}

pub fn hermitian_part(m: &DMatrix<Complex64>) -> DMatrix<Complex64> {
    (m + m.adjoint()) * c(0.5)
}

/// Rejection-sampled measure whose atoms are pairwise at least `sep` apart.
pub fn separated_measure(r: usize, d: usize, sep: f64, seed: u64) -> offgrid_sr::DiscreteMeasure {
    use offgrid_sr::measures::{generate_synthetic, min_separation, AmplitudeMode};
    for attempt in 0..1_000_000u64 {
        let m = generate_synthetic(r, d, AmplitudeMode::Signed, seed.wrapping_mul(1_000_003).wrapping_add(attempt)).unwrap();
        if r < 2 || min_separation(&m).unwrap() >= sep {
            return m;
        }
    }
    panic!("no separated draw for r={r} d={d} sep={sep}");
}

/// `U1` with columns `sqrt(|a_j|) v(x_j)`, so that `U1 U1^h` is the moment matrix of `|mu|`.
pub fn exact_moment_factor(m: &offgrid_sr::DiscreteMeasure, level: usize) -> CMatrix {
    let idx = IndexSet::new(m.dim(), level).unwrap();
    let mut u = CMatrix::zeros(idx.len(), m.len());
    for (j, (x, a)) in m.positions().iter().zip(m.amplitudes()).enumerate() {
        u.set_column(j, &(offgrid_sr::measures::moment_vector(x, &idx) * c(a.norm().sqrt())));
    }
    u
}

/// Errors of one extraction round trip on an exact moment factor.
#[derive(Debug, Clone, PartialEq)]
pub struct RoundTrip {
    pub matched: bool,
    pub position_error: f64,
    pub amplitude_error: f64,
    pub modulus_error: f64,
    pub flat: bool,
}

impl RoundTrip {
    pub fn within(&self, pos: f64, amp: f64, modulus: f64) -> bool {
        self.matched && self.flat && self.position_error <= pos && self.amplitude_error <= amp && self.modulus_error <= modulus
    }
}

/// Runs support extraction, amplitude fitting (noiseless Fourier data at `fc = l`) and
/// the flatness check; positions and amplitudes are compared after optimal matching.
pub fn extraction_round_trip(m: &offgrid_sr::DiscreteMeasure, level: usize, seed: u64) -> RoundTrip {
    use offgrid_sr::extraction::{extract_support, flatness_check, recover_amplitudes, AmplitudeMethod};
    use offgrid_sr::measures::fourier_coefficients;
    use offgrid_sr::metrics::match_supports;
    let u = exact_moment_factor(m, level);
    let support = extract_support(&u, level, m.dim(), seed).unwrap();
    let op = build_dirichlet(level, m.dim()).unwrap();
    let y = fourier_coefficients(m, op.index_set()).unwrap();
    let prob = Problem::new(op, y, 0.1).unwrap();
    let amps = recover_amplitudes(&support.positions, &prob, AmplitudeMethod::Lsq, None).unwrap();
    let matching = match_supports(m.positions(), &support.positions, 0.5).unwrap();
    let matched = matching.len() == m.len() && support.positions.len() == m.len();
    let mut position_error = 0.0f64;
    let mut amplitude_error = 0.0f64;
    for &(i, j) in &matching.pairs {
        position_error = position_error.max(torus_distance(&m.positions()[i], &support.positions[j]).unwrap());
        amplitude_error = amplitude_error.max((m.amplitudes()[i] - amps[j]).norm());
    }
    let modulus_error = support.moduli.iter().flatten().fold(0.0f64, |a, z| a.max((z - 1.0).abs()));
    let flat = level < 2 || flatness_check(&u, level, m.dim()).unwrap();
    RoundTrip { matched, position_error, amplitude_error, modulus_error, flat }
}

/// Admissible `(d, l, r)` round-trip configurations: separation `2 / (2l + 1)` and
/// interior pivots available for every atom.
pub fn round_trip_configs() -> Vec<(usize, usize, usize)> {
    let mut out = Vec::new();
    for level in 2..=4usize {
        let sep = 2.0 / (2 * level + 1) as f64;
        // d = 1: at most floor(1 / sep) atoms fit at this separation
        for r in 1..=((1.0 / sep).floor() as usize).min(5) {
            out.push((1, level, r));
        }
        let r2 = if level == 2 { 2 } else { 4 + (level == 4) as usize };
        for r in 1..=r2 {
            out.push((2, level, r));
        }
    }
    out
}
