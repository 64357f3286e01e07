//! UniBi relations: `M = R_h Ξ R_t`, two block-diagonal rotations around a
//! diagonal scaling.

use super::{Divisor, Side, TransformCache};
use crate::error::Result;
use crate::linalg::{self, DenseMatrix, RotationBlock};

/// Flat layout `[head blocks (n)] [tail blocks (n)] [ξ (n)]`.
#[derive(Debug, Clone, Copy)]
pub struct UniBiRelation<'a> {
    head_blocks: &'a [f64],
    tail_blocks: &'a [f64],
    xi: &'a [f64],
    block_size: usize,
}

impl<'a> UniBiRelation<'a> {
    pub fn from_flat(params: &'a [f64], block_size: usize) -> Self {
        let n = params.len() / 3;
        Self {
            head_blocks: &params[..n],
            tail_blocks: &params[n..2 * n],
            xi: &params[2 * n..],
            block_size,
        }
    }

    pub fn dim(&self) -> usize {
        self.xi.len()
    }

    pub fn block_size(&self) -> usize {
        self.block_size
    }

    pub fn xi(&self) -> &'a [f64] {
        self.xi
    }

    fn blocks(raw: &[f64], k: usize) -> Result<Vec<RotationBlock>> {
        let (unit, _) = linalg::unit_blocks(raw, k);
        unit.chunks(k)
            .map(|c| RotationBlock::new(c.to_vec()))
            .collect()
    }

    /// Normalized head-side rotation blocks.
    pub fn head_rotation(&self) -> Result<Vec<RotationBlock>> {
        Self::blocks(self.head_blocks, self.block_size)
    }

    pub fn tail_rotation(&self) -> Result<Vec<RotationBlock>> {
        Self::blocks(self.tail_blocks, self.block_size)
    }

    /// Index and magnitude of the largest |ξ_i|; ties go to the lowest index.
    pub fn xi_max(&self) -> (usize, f64) {
        let mut best = (0, self.xi[0].abs());
        for (i, v) in self.xi.iter().enumerate().skip(1) {
            if v.abs() > best.1 {
                best = (i, v.abs());
            }
        }
        best
    }

    pub(super) fn divisor(&self) -> Divisor {
        let (i, m) = self.xi_max();
        let sign = if self.xi[i] < 0.0 { -1.0 } else { 1.0 };
        Divisor {
            value: m,
            grad: vec![(2 * self.dim() + i, sign)],
        }
    }

    // Left:  y = R_tᵀ Ξ R_hᵀ x   (mid = R_hᵀ x)
    // Right: y = R_h Ξ R_t x     (mid = R_t x)
    fn rotations(&self, side: Side) -> (&'a [f64], &'a [f64], bool) {
        match side {
            Side::Left => (self.head_blocks, self.tail_blocks, true),
            Side::Right => (self.tail_blocks, self.head_blocks, false),
        }
    }

    pub(super) fn apply(&self, x: &[f64], side: Side, mid: &mut Vec<f64>) -> Vec<f64> {
        let k = self.block_size;
        let (first, second, transposed) = self.rotations(side);
        let (u1, _) = linalg::unit_blocks(first, k);
        let (u2, _) = linalg::unit_blocks(second, k);
        *mid = linalg::rotate_flat(&u1, k, x, transposed);
        let scaled: Vec<f64> = mid.iter().zip(self.xi).map(|(a, b)| a * b).collect();
        linalg::rotate_flat(&u2, k, &scaled, transposed)
    }

    pub(super) fn apply_backward(
        &self,
        cache: &TransformCache,
        dy: &[f64],
        dx: &mut [f64],
        drel: &mut [f64],
    ) {
        let k = self.block_size;
        let n = self.dim();
        let (first, second, transposed) = self.rotations(cache.side);
        let (u1, n1) = linalg::unit_blocks(first, k);
        let (u2, n2) = linalg::unit_blocks(second, k);
        let (first_off, second_off) = match cache.side {
            Side::Left => (0, n),
            Side::Right => (n, 0),
        };
        let scaled: Vec<f64> = cache.mid.iter().zip(self.xi).map(|(a, b)| a * b).collect();
        let mut d_scaled = vec![0.0; n];
        linalg::rotate_flat_backward(
            &u2,
            &n2,
            k,
            &scaled,
            dy,
            transposed,
            &mut d_scaled,
            &mut drel[second_off..second_off + n],
        );
        let mut d_mid = vec![0.0; n];
        for i in 0..n {
            drel[2 * n + i] += cache.mid[i] * d_scaled[i];
            d_mid[i] = self.xi[i] * d_scaled[i];
        }
        linalg::rotate_flat_backward(
            &u1,
            &n1,
            k,
            &cache.input,
            &d_mid,
            transposed,
            dx,
            &mut drel[first_off..first_off + n],
        );
    }

    pub(super) fn raw_matrix(&self) -> DenseMatrix {
        let n = self.dim();
        let mut m = DenseMatrix::zeros(n, n);
        let mut e = vec![0.0; n];
        let mut mid = Vec::new();
        for c in 0..n {
            e[c] = 1.0;
            let col = self.apply(&e, Side::Right, &mut mid);
            for (r, v) in col.into_iter().enumerate() {
                m.set(r, c, v);
            }
            e[c] = 0.0;
        }
        m
    }

    /// The rotations are orthogonal, so the singular values are `|ξ|`.
    pub(super) fn raw_spectrum(&self) -> Vec<f64> {
        let mut s: Vec<f64> = self.xi.iter().map(|v| v.abs()).collect();
        s.sort_by(|a, b| b.total_cmp(a));
        s
    }
}
