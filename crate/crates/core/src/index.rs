//! Colexicographic enumeration of the cubes `[-f, f]^d`.
//!
//! The first coordinate varies fastest, so the linear position of `k` is
//! `sum_i (k_i + f) (2f + 1)^i`. Every vector indexed by multi-indices in this crate
//! (Fourier coefficients, moment-matrix rows, Toeplitz coefficients) uses this layout.

use std::cmp::Ordering;

use crate::{Error, Result};

/// The multi-index cube `[-halfwidth, halfwidth]^dim` in colexicographic order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct IndexSet {
    dim: usize,
    halfwidth: usize,
}

impl IndexSet {
    pub fn new(dim: usize, halfwidth: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidParameter("dimension must be at least 1".into()));
        }
        Ok(Self { dim, halfwidth })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn halfwidth(&self) -> usize {
        self.halfwidth
    }

    /// Number of indices per axis, `2f + 1`.
    pub fn side(&self) -> usize {
        2 * self.halfwidth + 1
    }

    pub fn len(&self) -> usize {
        self.side().pow(self.dim as u32)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn contains(&self, k: &[i64]) -> bool {
        let f = self.halfwidth as i64;
        k.len() == self.dim && k.iter().all(|&ki| -f <= ki && ki <= f)
    }

    /// Linear colexicographic position of `k`, or `None` outside the cube.
    pub fn position(&self, k: &[i64]) -> Option<usize> {
        if !self.contains(k) {
            return None;
        }
        let f = self.halfwidth as i64;
        let side = self.side();
        let mut pos = 0usize;
        for &ki in k.iter().rev() {
            pos = pos * side + (ki + f) as usize;
        }
        Some(pos)
    }

    /// Multi-index at linear position `pos`.
    pub fn multi_index(&self, pos: usize) -> Vec<i64> {
        let mut out = vec![0i64; self.dim];
        self.write_multi_index(pos, &mut out);
        out
    }

    pub fn write_multi_index(&self, mut pos: usize, out: &mut [i64]) {
        let side = self.side();
        let f = self.halfwidth as i64;
        for slot in out.iter_mut() {
            *slot = (pos % side) as i64 - f;
            pos /= side;
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = Vec<i64>> + '_ {
        (0..self.len()).map(move |p| self.multi_index(p))
    }

    /// Positions of `self`'s indices inside the larger cube `outer`.
    pub fn embedding_into(&self, outer: &IndexSet) -> Result<Vec<usize>> {
        if outer.dim != self.dim {
            return Err(Error::DimensionMismatch { expected: outer.dim, found: self.dim });
        }
        if outer.halfwidth < self.halfwidth {
            return Err(Error::InvalidParameter(format!(
                "cannot embed halfwidth {} into halfwidth {}",
                self.halfwidth, outer.halfwidth
            )));
        }
        Ok(self
            .iter()
            .map(|k| outer.position(&k).expect("inner cube is contained in outer cube"))
            .collect())
    }
}

/// Colexicographic comparison: the last coordinate is the most significant.
pub fn colex_cmp(a: &[i64], b: &[i64]) -> Ordering {
    for (x, y) in a.iter().rev().zip(b.iter().rev()) {
        match x.cmp(y) {
            Ordering::Equal => continue,
            other => return other,
        }
    }
    a.len().cmp(&b.len())
}

/// Colexicographic comparison of real points (used to sort recovered positions).
pub fn colex_cmp_points(a: &[f64], b: &[f64]) -> Ordering {
    for (x, y) in a.iter().rev().zip(b.iter().rev()) {
        match x.total_cmp(y) {
            Ordering::Equal => continue,
            other => return other,
        }
    }
    a.len().cmp(&b.len())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn length_is_side_to_the_dim() {
        for d in 1..4 {
            for f in 0..4 {
                let idx = IndexSet::new(d, f).unwrap();
                assert_eq!(idx.len(), (2 * f + 1).pow(d as u32));
                assert_eq!(idx.iter().count(), idx.len());
            }
        }
    }

    #[test]
    fn enumeration_is_strictly_colex_increasing() {
        let idx = IndexSet::new(3, 2).unwrap();
        let all: Vec<_> = idx.iter().collect();
        for w in all.windows(2) {
            assert_eq!(colex_cmp(&w[0], &w[1]), Ordering::Less);
        }
        assert_eq!(all[0], vec![-2, -2, -2]);
        assert_eq!(all[1], vec![-1, -2, -2]);
    }

    #[test]
    fn position_inverts_multi_index() {
        let idx = IndexSet::new(2, 3).unwrap();
        for p in 0..idx.len() {
            assert_eq!(idx.position(&idx.multi_index(p)), Some(p));
        }
        assert_eq!(idx.position(&[4, 0]), None);
        assert_eq!(idx.position(&[0]), None);
    }

    #[test]
    fn embedding_maps_centre_to_centre() {
        let inner = IndexSet::new(2, 1).unwrap();
        let outer = IndexSet::new(2, 2).unwrap();
        let emb = inner.embedding_into(&outer).unwrap();
        assert_eq!(emb.len(), 9);
        assert_eq!(emb[4], outer.position(&[0, 0]).unwrap());
        assert!(outer.embedding_into(&inner).is_err());
    }

    #[test]
    fn zero_dimension_rejected() {
        assert!(IndexSet::new(0, 1).is_err());
    }
}
