//! Dense kernel: vector normalization, block-diagonal rotations, one-sided
//! Jacobi SVD and the matrix norms used by the diagnostics.
//!
//! Rotation parameters are stored flat (`k` reals per block) so model tables
//! can be updated in place by the optimizer; [`RotationBlock`] is the owned
//! form used at API boundaries.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Norm below which a vector or rotation block is considered collapsed.
pub const DEGENERATE_NORM: f64 = 1e-12;

const SVD_MAX_SWEEPS: usize = 60;
const SVD_TOL: f64 = 1e-12;
const SVD_MAX_ORDER: usize = 4096;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl DenseMatrix {
    /// Row-major construction. Rejects empty shapes, wrong lengths and
    /// non-finite entries.
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::Shape(format!("empty matrix {rows}x{cols}")));
        }
        if data.len() != rows * cols {
            return Err(Error::Shape(format!(
                "{} entries for a {rows}x{cols} matrix",
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(
                "matrix has non-finite entries".into(),
            ));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    pub fn from_diagonal(diag: &[f64]) -> Self {
        let n = diag.len();
        let mut m = Self::zeros(n, n);
        for (i, d) in diag.iter().enumerate() {
            m.data[i * n + i] = *d;
        }
        m
    }

    pub fn from_rows(rows: &[&[f64]]) -> Result<Self> {
        let cols = rows.first().map_or(0, |r| r.len());
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::Shape("ragged rows".into()));
        }
        Self::new(rows.len(), cols, rows.concat())
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn column(&self, c: usize) -> Vec<f64> {
        (0..self.rows).map(|r| self.get(r, c)).collect()
    }

    pub fn transpose(&self) -> Self {
        let mut t = Self::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                t.data[c * self.rows + r] = self.get(r, c);
            }
        }
        t
    }

    pub fn matmul(&self, other: &DenseMatrix) -> Result<Self> {
        if self.cols != other.rows {
            return Err(Error::Shape(format!(
                "{}x{} times {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let mut out = Self::zeros(self.rows, other.cols);
        for r in 0..self.rows {
            for k in 0..self.cols {
                let a = self.get(r, k);
                if a == 0.0 {
                    continue;
                }
                let src = other.row(k);
                let dst = &mut out.data[r * other.cols..(r + 1) * other.cols];
                for (d, s) in dst.iter_mut().zip(src) {
                    *d += a * s;
                }
            }
        }
        Ok(out)
    }

    /// `M x`
    pub fn matvec(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.cols {
            return Err(Error::Shape(format!(
                "vector of length {} against {} columns",
                x.len(),
                self.cols
            )));
        }
        Ok((0..self.rows).map(|r| dot(self.row(r), x)).collect())
    }

    /// `Mᵀ x`
    pub fn tr_matvec(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.rows {
            return Err(Error::Shape(format!(
                "vector of length {} against {} rows",
                x.len(),
                self.rows
            )));
        }
        let mut out = vec![0.0; self.cols];
        for (r, xr) in x.iter().enumerate() {
            for (o, m) in out.iter_mut().zip(self.row(r)) {
                *o += xr * m;
            }
        }
        Ok(out)
    }

    pub fn sub(&self, other: &DenseMatrix) -> Result<Self> {
        if self.rows != other.rows || self.cols != other.cols {
            return Err(Error::Shape(format!(
                "{}x{} minus {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| a - b)
            .collect();
        Ok(Self {
            rows: self.rows,
            cols: self.cols,
            data,
        })
    }

    pub fn scale(&self, factor: f64) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|v| v * factor).collect(),
        }
    }

    /// `(n, n)` matrix whose `(p, q)` entry is `x_p y_q`.
    pub fn outer(x: &[f64], y: &[f64]) -> Self {
        let mut m = Self::zeros(x.len(), y.len());
        for (p, xp) in x.iter().enumerate() {
            for (q, yq) in y.iter().enumerate() {
                m.data[p * y.len() + q] = xp * yq;
            }
        }
        m
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RotationBlock {
    params: Vec<f64>,
}

impl RotationBlock {
    /// Block of size 2 (`(x, y)`) or 4 (`(p, q, u, v)`), stored as given.
    pub fn new(params: Vec<f64>) -> Result<Self> {
        check_block_size(params.len())?;
        if params.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(
                "non-finite rotation parameter".into(),
            ));
        }
        Ok(Self { params })
    }

    pub fn identity(block_size: usize) -> Result<Self> {
        check_block_size(block_size)?;
        let mut params = vec![0.0; block_size];
        params[0] = 1.0;
        Ok(Self { params })
    }

    pub fn block_size(&self) -> usize {
        self.params.len()
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn is_normalized(&self) -> bool {
        (norm(&self.params) - 1.0).abs() <= DEGENERATE_NORM
    }

    /// Rescale to unit norm; a collapsed block is reset to the identity.
    pub fn normalized(&self) -> Self {
        let mut params = self.params.clone();
        normalize_block_in_place(&mut params);
        Self { params }
    }
}

fn check_block_size(k: usize) -> Result<()> {
    if k == 2 || k == 4 {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!(
            "rotation block size must be 2 or 4, got {k}"
        )))
    }
}

#[derive(Debug, Clone)]
pub struct SvdResult {
    pub u: DenseMatrix,
    pub sigma: Vec<f64>,
    pub v: DenseMatrix,
}

impl SvdResult {
    /// `U diag(σ) Vᵀ`
    pub fn reconstruct(&self) -> DenseMatrix {
        let n = self.sigma.len();
        let mut us = self.u.clone();
        for r in 0..n {
            for c in 0..n {
                us.set(r, c, us.get(r, c) * self.sigma[c]);
            }
        }
        us.matmul(&self.v.transpose()).expect("square factors")
    }
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Unit vector and the original norm.
pub fn normalize(vector: &[f64]) -> Result<(Vec<f64>, f64)> {
    let n = norm(vector);
    if !(n >= DEGENERATE_NORM) {
        return Err(Error::DegenerateVector { norm: n });
    }
    Ok((vector.iter().map(|v| v / n).collect(), n))
}

/// Backward of `x ↦ x / ‖x‖`: maps a gradient w.r.t. the unit vector to a
/// gradient w.r.t. the raw vector.
pub(crate) fn normalize_backward(unit: &[f64], raw_norm: f64, d_unit: &[f64], d_raw: &mut [f64]) {
    let radial = dot(unit, d_unit);
    for ((d, g), u) in d_raw.iter_mut().zip(d_unit).zip(unit) {
        *d += (g - u * radial) / raw_norm;
    }
}

pub(crate) fn normalize_block_in_place(params: &mut [f64]) -> f64 {
    let n = norm(params);
    if n < DEGENERATE_NORM || !n.is_finite() {
        params.iter_mut().for_each(|p| *p = 0.0);
        params[0] = 1.0;
        return 0.0;
    }
    params.iter_mut().for_each(|p| *p /= n);
    n
}

// (row, col) -> (parameter index, sign), row-major.
const SO2_LAYOUT: [(usize, f64); 4] = [(0, 1.0), (1, -1.0), (1, 1.0), (0, 1.0)];
#[rustfmt::skip]
const SO4_LAYOUT: [(usize, f64); 16] = [
    (0, 1.0), (1, -1.0), (2, -1.0), (3, -1.0),
    (1, 1.0), (0, 1.0),  (3, 1.0),  (2, -1.0),
    (2, 1.0), (3, -1.0), (0, 1.0),  (1, 1.0),
    (3, 1.0), (2, 1.0),  (1, -1.0), (0, 1.0),
];

fn layout(k: usize) -> &'static [(usize, f64)] {
    match k {
        2 => &SO2_LAYOUT,
        4 => &SO4_LAYOUT,
        _ => unreachable!("block size validated upstream"),
    }
}

/// Dense `k x k` matrix of a normalized rotation block.
pub fn materialize_rotation(block: &RotationBlock) -> Result<DenseMatrix> {
    if !block.is_normalized() {
        return Err(Error::UnnormalizedBlock {
            norm: norm(block.params()),
        });
    }
    let k = block.block_size();
    let data = layout(k)
        .iter()
        .map(|&(p, s)| s * block.params[p])
        .collect();
    DenseMatrix::new(k, k, data)
}

/// `Diag[B_1, ..., B_m] x`, or its transpose applied to `x`.
pub fn apply_block_rotation(
    blocks: &[RotationBlock],
    x: &[f64],
    transposed: bool,
) -> Result<Vec<f64>> {
    let total: usize = blocks.iter().map(RotationBlock::block_size).sum();
    if total != x.len() {
        return Err(Error::Shape(format!(
            "blocks cover {total} coordinates, vector has {}",
            x.len()
        )));
    }
    let mut out = vec![0.0; x.len()];
    let mut offset = 0;
    for b in blocks {
        if !b.is_normalized() {
            return Err(Error::UnnormalizedBlock {
                norm: norm(b.params()),
            });
        }
        let k = b.block_size();
        rotate_block(
            b.params(),
            k,
            &x[offset..offset + k],
            transposed,
            &mut out[offset..offset + k],
        );
        offset += k;
    }
    Ok(out)
}

/// Block-diagonal matrix of a list of normalized blocks.
pub fn materialize_block_diagonal(blocks: &[RotationBlock]) -> Result<DenseMatrix> {
    let n: usize = blocks.iter().map(RotationBlock::block_size).sum();
    let mut m = DenseMatrix::zeros(n.max(1), n.max(1));
    let mut offset = 0;
    for b in blocks {
        let r = materialize_rotation(b)?;
        let k = b.block_size();
        for i in 0..k {
            for j in 0..k {
                m.set(offset + i, offset + j, r.get(i, j));
            }
        }
        offset += k;
    }
    Ok(m)
}

#[inline]
fn rotate_block(unit: &[f64], k: usize, x: &[f64], transposed: bool, out: &mut [f64]) {
    let lay = layout(k);
    for r in 0..k {
        for c in 0..k {
            let (p, s) = lay[r * k + c];
            let m = s * unit[p];
            if transposed {
                out[c] += m * x[r];
            } else {
                out[r] += m * x[c];
            }
        }
    }
}

/// Unit-normalized copy of flat block parameters plus the raw norms
/// (0.0 marks a collapsed block that was reset to the identity).
pub(crate) fn unit_blocks(raw: &[f64], k: usize) -> (Vec<f64>, Vec<f64>) {
    let mut unit = raw.to_vec();
    let norms = unit.chunks_mut(k).map(normalize_block_in_place).collect();
    (unit, norms)
}

/// Apply flat unit blocks (`x.len() / k` of them).
pub(crate) fn rotate_flat(unit: &[f64], k: usize, x: &[f64], transposed: bool) -> Vec<f64> {
    let mut out = vec![0.0; x.len()];
    for ((u, xs), o) in unit.chunks(k).zip(x.chunks(k)).zip(out.chunks_mut(k)) {
        rotate_block(u, k, xs, transposed, o);
    }
    out
}

/// Backward of [`rotate_flat`] through the block normalization.
///
/// Accumulates into `dx` and `d_raw`.
#[allow(clippy::too_many_arguments)]
pub(crate) fn rotate_flat_backward(
    unit: &[f64],
    norms: &[f64],
    k: usize,
    x: &[f64],
    dout: &[f64],
    transposed: bool,
    dx: &mut [f64],
    d_raw: &mut [f64],
) {
    let lay = layout(k);
    let mut d_unit = vec![0.0; k];
    for (b, &bn) in norms.iter().enumerate() {
        let o = b * k;
        let u = &unit[o..o + k];
        d_unit.iter_mut().for_each(|v| *v = 0.0);
        for r in 0..k {
            for c in 0..k {
                let (p, s) = lay[r * k + c];
                let m = s * u[p];
                // out = B x: out_r += m x_c ; out = Bᵀ x: out_c += m x_r
                let (g, xi, xo) = if transposed {
                    (x[o + r] * dout[o + c], o + r, o + c)
                } else {
                    (dout[o + r] * x[o + c], o + c, o + r)
                };
                dx[xi] += m * dout[xo];
                d_unit[p] += s * g;
            }
        }
        if bn > 0.0 {
            normalize_backward(u, bn, &d_unit, &mut d_raw[o..o + k]);
        }
    }
}

pub fn frobenius_norm(m: &DenseMatrix) -> f64 {
    norm(m.data())
}

pub fn spectral_radius(sigma: &[f64]) -> Result<f64> {
    if sigma.is_empty() {
        return Err(Error::InvalidArgument("empty singular value list".into()));
    }
    Ok(sigma.iter().cloned().fold(f64::NEG_INFINITY, f64::max))
}

/// One-sided (Hestenes) Jacobi SVD of a square matrix.
///
/// Columns of a working copy are rotated pairwise until every pair is
/// orthogonal to `1e-12` relative to the column norms.
pub fn jacobi_svd(m: &DenseMatrix) -> Result<SvdResult> {
    if !m.is_square() {
        return Err(Error::Shape(format!(
            "jacobi_svd needs a square matrix, got {}x{}",
            m.rows(),
            m.cols()
        )));
    }
    let n = m.rows();
    if n > SVD_MAX_ORDER {
        return Err(Error::Shape(format!("order {n} exceeds {SVD_MAX_ORDER}")));
    }
    // column-major working storage
    let mut w: Vec<Vec<f64>> = (0..n).map(|c| m.column(c)).collect();
    let mut v: Vec<Vec<f64>> = (0..n)
        .map(|c| {
            let mut e = vec![0.0; n];
            e[c] = 1.0;
            e
        })
        .collect();

    let mut converged = n == 1;
    let mut residual = 0.0;
    for _ in 0..SVD_MAX_SWEEPS {
        residual = 0.0_f64;
        let mut rotated = false;
        for p in 0..n {
            for q in p + 1..n {
                let alpha = dot(&w[p], &w[p]);
                let beta = dot(&w[q], &w[q]);
                let gamma = dot(&w[p], &w[q]);
                let scale = (alpha * beta).sqrt();
                if scale == 0.0 || gamma == 0.0 {
                    continue;
                }
                let rel = gamma.abs() / scale;
                residual = residual.max(rel);
                if rel <= SVD_TOL {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                rotate_columns(&mut w, p, q, c, s);
                rotate_columns(&mut v, p, q, c, s);
            }
        }
        if !rotated {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::NoConvergence {
            sweeps: SVD_MAX_SWEEPS,
            residual,
        });
    }

    let mut sigma: Vec<f64> = w.iter().map(|c| norm(c)).collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| sigma[b].total_cmp(&sigma[a]).then(a.cmp(&b)));
    sigma = order.iter().map(|&i| sigma[i]).collect();
    let w: Vec<Vec<f64>> = order.iter().map(|&i| w[i].clone()).collect();
    let v: Vec<Vec<f64>> = order.iter().map(|&i| v[i].clone()).collect();

    // Columns with negligible σ carry no direction; complete them to an
    // orthonormal basis instead.
    let cutoff = sigma[0] * f64::EPSILON * n as f64;
    let mut u_cols: Vec<Vec<f64>> = Vec::with_capacity(n);
    for (i, col) in w.iter().enumerate() {
        if sigma[i] > cutoff && sigma[i] > 0.0 {
            u_cols.push(col.iter().map(|x| x / sigma[i]).collect());
        } else {
            u_cols.push(complete_basis(&u_cols, n));
        }
    }

    Ok(SvdResult {
        u: from_columns(&u_cols),
        sigma,
        v: from_columns(&v),
    })
}

fn rotate_columns(cols: &mut [Vec<f64>], p: usize, q: usize, c: f64, s: f64) {
    let (lo, hi) = cols.split_at_mut(q);
    let (a, b) = (&mut lo[p], &mut hi[0]);
    for (x, y) in a.iter_mut().zip(b.iter_mut()) {
        let xp = *x;
        let yq = *y;
        *x = c * xp - s * yq;
        *y = s * xp + c * yq;
    }
}

/// A unit vector orthogonal to every vector in `basis`.
fn complete_basis(basis: &[Vec<f64>], n: usize) -> Vec<f64> {
    let mut best: Option<(f64, Vec<f64>)> = None;
    for e in 0..n {
        let mut cand = vec![0.0; n];
        cand[e] = 1.0;
        for _ in 0..2 {
            for b in basis {
                let proj = dot(&cand, b);
                cand.iter_mut().zip(b).for_each(|(c, bv)| *c -= proj * bv);
            }
        }
        let nrm = norm(&cand);
        if best.as_ref().map_or(true, |(bn, _)| nrm > *bn) {
            best = Some((nrm, cand));
        }
    }
    let (nrm, cand) = best.expect("n > 0");
    cand.into_iter().map(|c| c / nrm).collect()
}

fn from_columns(cols: &[Vec<f64>]) -> DenseMatrix {
    let n = cols.len();
    let mut m = DenseMatrix::zeros(n, n);
    for (c, col) in cols.iter().enumerate() {
        for (r, v) in col.iter().enumerate() {
            m.set(r, c, *v);
        }
    }
    m
}

/// Haar-distributed orthogonal matrix: QR (modified Gram-Schmidt, applied
/// twice) of a standard Gaussian matrix.
pub fn random_orthogonal<R: Rng + ?Sized>(n: usize, rng: &mut R) -> DenseMatrix {
    loop {
        let mut cols: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..n).map(|_| rng.sample(StandardNormal)).collect())
            .collect();
        let mut ok = true;
        for i in 0..n {
            for _ in 0..2 {
                for j in 0..i {
                    let (done, rest) = cols.split_at_mut(i);
                    let proj = dot(&rest[0], &done[j]);
                    rest[0]
                        .iter_mut()
                        .zip(&done[j])
                        .for_each(|(c, b)| *c -= proj * b);
                }
            }
            let nrm = norm(&cols[i]);
            if nrm < 1e-8 {
                ok = false;
                break;
            }
            cols[i].iter_mut().for_each(|c| *c /= nrm);
        }
        if ok {
            return from_columns(&cols);
        }
    }
}

/// Determinant by partial-pivot LU; only used by tests and diagnostics on
/// small matrices.
pub fn determinant(m: &DenseMatrix) -> Result<f64> {
    if !m.is_square() {
        return Err(Error::Shape("determinant of a non-square matrix".into()));
    }
    let n = m.rows();
    let mut a = m.data().to_vec();
    let mut det = 1.0;
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&x, &y| a[x * n + col].abs().total_cmp(&a[y * n + col].abs()))
            .expect("non-empty range");
        if a[pivot * n + col] == 0.0 {
            return Ok(0.0);
        }
        if pivot != col {
            for c in 0..n {
                a.swap(pivot * n + c, col * n + c);
            }
            det = -det;
        }
        let p = a[col * n + col];
        det *= p;
        for r in col + 1..n {
            let f = a[r * n + col] / p;
            for c in col..n {
                a[r * n + c] -= f * a[col * n + c];
            }
        }
    }
    Ok(det)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_matrix(n: usize, rng: &mut ChaCha8Rng) -> DenseMatrix {
        let data = (0..n * n).map(|_| rng.sample(StandardNormal)).collect();
        DenseMatrix::new(n, n, data).unwrap()
    }

    fn random_block(k: usize, rng: &mut ChaCha8Rng) -> RotationBlock {
        let p: Vec<f64> = (0..k).map(|_| rng.sample(StandardNormal)).collect();
        RotationBlock::new(p).unwrap().normalized()
    }

    #[test]
    fn normalize_examples() {
        let (u, n) = normalize(&[3.0, 4.0]).unwrap();
        assert_eq!(n, 5.0);
        assert!((u[0] - 0.6).abs() < 1e-15 && (u[1] - 0.8).abs() < 1e-15);

        let (u, n) = normalize(&[0.0, 1.0, 0.0]).unwrap();
        assert_eq!(u, vec![0.0, 1.0, 0.0]);
        assert_eq!(n, 1.0);

        assert!(matches!(
            normalize(&[0.0, 0.0]),
            Err(Error::DegenerateVector { .. })
        ));
    }

    #[test]
    fn materialize_examples() {
        let id = materialize_rotation(&RotationBlock::new(vec![1.0, 0.0]).unwrap()).unwrap();
        assert_eq!(id, DenseMatrix::identity(2));

        let r = materialize_rotation(&RotationBlock::new(vec![0.6, 0.8]).unwrap()).unwrap();
        assert_eq!(r.data(), &[0.6, -0.8, 0.8, 0.6]);

        let q =
            materialize_rotation(&RotationBlock::new(vec![1.0, 0.0, 0.0, 0.0]).unwrap()).unwrap();
        assert_eq!(q, DenseMatrix::identity(4));

        assert!(matches!(
            materialize_rotation(&RotationBlock::new(vec![2.0, 0.0]).unwrap()),
            Err(Error::UnnormalizedBlock { .. })
        ));
    }

    #[test]
    fn quaternion_layout_matches_printed_matrix() {
        let (p, q, u, v) = (0.5, -0.1, 0.7, 0.3);
        let b = RotationBlock::new(vec![p, q, u, v]).unwrap().normalized();
        let s = norm(&[p, q, u, v]);
        let (p, q, u, v) = (p / s, q / s, u / s, v / s);
        let m = materialize_rotation(&b).unwrap();
        #[rustfmt::skip]
        let expected = [
            p, -q, -u, -v,
            q,  p,  v, -u,
            u, -v,  p,  q,
            v,  u, -q,  p,
        ];
        for (a, e) in m.data().iter().zip(expected) {
            assert!((a - e).abs() < 1e-15);
        }
    }

    #[test]
    fn block_rotation_examples() {
        let id = vec![RotationBlock::identity(2).unwrap(); 2];
        let x = [0.3, -1.0, 2.0, 5.0];
        assert_eq!(apply_block_rotation(&id, &x, false).unwrap(), x.to_vec());

        let quarter = [RotationBlock::new(vec![0.0, 1.0]).unwrap()];
        assert_eq!(
            apply_block_rotation(&quarter, &[1.0, 0.0], false).unwrap(),
            vec![0.0, 1.0]
        );
        assert_eq!(
            apply_block_rotation(&quarter, &[0.0, 1.0], true).unwrap(),
            vec![1.0, 0.0]
        );
        assert!(matches!(
            apply_block_rotation(&quarter, &[1.0, 0.0, 0.0], false),
            Err(Error::Shape(_))
        ));
    }

    #[test]
    fn block_rotation_matches_dense_product() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for trial in 0..1000 {
            let k = if trial % 2 == 0 { 2 } else { 4 };
            let nb = 1 + trial % 5;
            let blocks: Vec<_> = (0..nb).map(|_| random_block(k, &mut rng)).collect();
            let x: Vec<f64> = (0..nb * k).map(|_| rng.sample(StandardNormal)).collect();
            let dense = materialize_block_diagonal(&blocks).unwrap();
            for transposed in [false, true] {
                let fast = apply_block_rotation(&blocks, &x, transposed).unwrap();
                let slow = if transposed {
                    dense.tr_matvec(&x).unwrap()
                } else {
                    dense.matvec(&x).unwrap()
                };
                for (a, b) in fast.iter().zip(&slow) {
                    assert!((a - b).abs() < 1e-12);
                }
                assert!((norm(&fast) - norm(&x)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn random_rotations_are_proper_orthogonal() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for trial in 0..500 {
            let k = if trial % 2 == 0 { 2 } else { 4 };
            let m = materialize_rotation(&random_block(k, &mut rng)).unwrap();
            let mtm = m.transpose().matmul(&m).unwrap();
            let err = frobenius_norm(&mtm.sub(&DenseMatrix::identity(k)).unwrap());
            assert!(err < 1e-12, "orthogonality error {err}");
            assert!((determinant(&m).unwrap() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn rotation_backward_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for k in [2usize, 4] {
            for transposed in [false, true] {
                let n = 2 * k;
                let raw: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
                let x: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
                let g: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
                let f = |raw: &[f64], x: &[f64]| {
                    let (u, _) = unit_blocks(raw, k);
                    dot(&rotate_flat(&u, k, x, transposed), &g)
                };
                let (unit, norms) = unit_blocks(&raw, k);
                let mut dx = vec![0.0; n];
                let mut draw = vec![0.0; n];
                rotate_flat_backward(&unit, &norms, k, &x, &g, transposed, &mut dx, &mut draw);
                let h = 1e-6;
                for i in 0..n {
                    let mut a = raw.clone();
                    let mut b = raw.clone();
                    a[i] += h;
                    b[i] -= h;
                    let fd = (f(&a, &x) - f(&b, &x)) / (2.0 * h);
                    assert!((fd - draw[i]).abs() < 1e-7, "raw {i}: {fd} vs {}", draw[i]);
                    let mut a = x.clone();
                    let mut b = x.clone();
                    a[i] += h;
                    b[i] -= h;
                    let fd = (f(&raw, &a) - f(&raw, &b)) / (2.0 * h);
                    assert!((fd - dx[i]).abs() < 1e-7);
                }
            }
        }
    }

    #[test]
    fn svd_examples() {
        let s = jacobi_svd(&DenseMatrix::identity(3)).unwrap();
        assert_eq!(s.sigma, vec![1.0, 1.0, 1.0]);

        let s = jacobi_svd(&DenseMatrix::from_diagonal(&[3.0, -2.0])).unwrap();
        assert!((s.sigma[0] - 3.0).abs() < 1e-15 && (s.sigma[1] - 2.0).abs() < 1e-15);

        let p = DenseMatrix::from_rows(&[&[0.0, 1.0], &[1.0, 0.0]]).unwrap();
        let s = jacobi_svd(&p).unwrap();
        assert!(s.sigma.iter().all(|v| (v - 1.0).abs() < 1e-15));

        assert!(matches!(
            jacobi_svd(&DenseMatrix::zeros(2, 3)),
            Err(Error::Shape(_))
        ));
    }

    #[test]
    fn svd_reconstructs_random_matrices() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for trial in 0..1000 {
            let n = 2 + (trial * 7) % 63;
            let m = random_matrix(n, &mut rng);
            let s = jacobi_svd(&m).unwrap();
            let err = frobenius_norm(&s.reconstruct().sub(&m).unwrap());
            assert!(err < 1e-9, "order {n}: reconstruction error {err}");
            assert!(s.sigma.windows(2).all(|w| w[0] >= w[1]));
            assert!(s.sigma.iter().all(|v| *v >= 0.0));
            if trial % 50 == 0 {
                let id = DenseMatrix::identity(n);
                let utu = s.u.transpose().matmul(&s.u).unwrap();
                let vtv = s.v.transpose().matmul(&s.v).unwrap();
                assert!(frobenius_norm(&utu.sub(&id).unwrap()) < 1e-9);
                assert!(frobenius_norm(&vtv.sub(&id).unwrap()) < 1e-9);
            }
        }
    }

    #[test]
    fn svd_handles_rank_deficiency() {
        let m = DenseMatrix::from_rows(&[&[1.0, 2.0, 0.0], &[2.0, 4.0, 0.0], &[0.0, 0.0, 0.0]])
            .unwrap();
        let s = jacobi_svd(&m).unwrap();
        assert!((s.sigma[0] - 5.0).abs() < 1e-12);
        assert!(s.sigma[1].abs() < 1e-12 && s.sigma[2].abs() < 1e-12);
        let utu = s.u.transpose().matmul(&s.u).unwrap();
        assert!(frobenius_norm(&utu.sub(&DenseMatrix::identity(3)).unwrap()) < 1e-9);
        assert!(frobenius_norm(&s.reconstruct().sub(&m).unwrap()) < 1e-9);
    }

    #[test]
    fn orthogonal_matrices_have_unit_singular_values() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for n in 2..20 {
            let q = random_orthogonal(n, &mut rng);
            let s = jacobi_svd(&q).unwrap();
            assert!(s.sigma.iter().all(|v| (v - 1.0).abs() < 1e-9));
        }
    }

    #[test]
    fn spectral_radius_agrees_with_power_iteration() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        for trial in 0..100 {
            let n = 2 + trial % 10;
            let m = random_matrix(n, &mut rng);
            let rho = spectral_radius(&jacobi_svd(&m).unwrap().sigma).unwrap();
            let mtm = m.transpose().matmul(&m).unwrap();
            let mut x: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
            let mut lambda = 0.0;
            for _ in 0..5000 {
                let y = mtm.matvec(&x).unwrap();
                lambda = norm(&y);
                x = y.iter().map(|v| v / lambda).collect();
            }
            assert!(
                (lambda.sqrt() - rho).abs() < 1e-6 * rho.max(1.0),
                "{} vs {rho}",
                lambda.sqrt()
            );
        }
    }

    #[test]
    fn norms_examples() {
        assert!((frobenius_norm(&DenseMatrix::identity(2)) - 2f64.sqrt()).abs() < 1e-15);
        let m = DenseMatrix::from_rows(&[&[1.0, 1.0], &[-1.0, 1.0]]).unwrap();
        assert_eq!(frobenius_norm(&m), 2.0);
        assert_eq!(spectral_radius(&[1.0, 0.5]).unwrap(), 1.0);
        assert!(spectral_radius(&[]).is_err());
    }
}
