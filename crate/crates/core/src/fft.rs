//! Multidimensional FFTs on cubic grids stored in colexicographic layout
//! (axis 0 contiguous).
//!
//! Convention: `forward` computes `X_j = sum_n x_n e^{-2 i pi <j, n> / N}` and
//! `inverse` computes `x_n = sum_j X_j e^{+2 i pi <j, n> / N}`, both unnormalized;
//! callers divide by `N^d` where a true inverse is needed.

use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

/// Smallest length `>= min` whose prime factors are all in {2, 3, 5, 7}.
pub fn efficient_len(min: usize) -> usize {
    let mut n = min.max(1);
    loop {
        let mut m = n;
        for p in [2, 3, 5, 7] {
            while m.is_multiple_of(p) {
                m /= p;
            }
        }
        if m == 1 {
            return n;
        }
        n += 1;
    }
}

/// Planned forward and inverse transforms over `[0, side)^dim`.
#[derive(Clone)]
pub struct FftNd {
    side: usize,
    dim: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl fmt::Debug for FftNd {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FftNd").field("side", &self.side).field("dim", &self.dim).finish()
    }
}

impl FftNd {
    pub fn new(side: usize, dim: usize) -> Self {
        let mut planner = FftPlanner::new();
        Self {
            side,
            dim,
            forward: planner.plan_fft_forward(side),
            inverse: planner.plan_fft_inverse(side),
        }
    }

    pub fn side(&self) -> usize {
        self.side
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.side.pow(self.dim as u32)
    }

    pub fn is_empty(&self) -> bool {
        self.side == 0
    }

    pub fn forward(&self, data: &mut [Complex64]) {
        self.run(&*self.forward, data);
    }

    pub fn inverse(&self, data: &mut [Complex64]) {
        self.run(&*self.inverse, data);
    }

    /// Wrapped grid position of the integer multi-index `k` (negative entries wrap).
    pub fn wrapped_position(&self, k: &[i64]) -> usize {
        let n = self.side as i64;
        let mut pos = 0usize;
        for &ki in k.iter().rev() {
            pos = pos * self.side + ki.rem_euclid(n) as usize;
        }
        pos
    }

    fn run(&self, plan: &dyn Fft<f64>, data: &mut [Complex64]) {
        assert_eq!(data.len(), self.len(), "FFT buffer has wrong length");
        let n = self.side;
        let mut scratch = vec![Complex64::new(0.0, 0.0); plan.get_inplace_scratch_len()];
        // axis 0 lines are contiguous
        plan.process_with_scratch(data, &mut scratch);
        let mut line = vec![Complex64::new(0.0, 0.0); n];
        for axis in 1..self.dim {
            let stride = n.pow(axis as u32);
            let block = stride * n;
            for base in (0..data.len()).step_by(block) {
                for offset in 0..stride {
                    let start = base + offset;
                    for (i, v) in line.iter_mut().enumerate() {
                        *v = data[start + i * stride];
                    }
                    plan.process_with_scratch(&mut line, &mut scratch);
                    for (i, v) in line.iter().enumerate() {
                        data[start + i * stride] = *v;
                    }
                }
            }
        }
    }
}
