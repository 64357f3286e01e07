//! CP, ComplEx and RESCAL relations on the shared score pipeline.

use super::{score, score_backward, Divisor, ModelState, ScoreGrad, ScoreTape, Side};
use crate::error::{Error, Result};
use crate::linalg::{self, DenseMatrix};

/// Diagonal relation; CP also keeps separate head and tail entity tables.
#[derive(Debug, Clone, Copy)]
pub struct CpRelation<'a> {
    diag: &'a [f64],
}

impl<'a> CpRelation<'a> {
    pub fn new(diag: &'a [f64]) -> Self {
        Self { diag }
    }

    pub fn diagonal(&self) -> &'a [f64] {
        self.diag
    }

    pub(super) fn divisor(&self) -> Divisor {
        let (i, m) = argmax_abs(self.diag.iter().copied());
        let sign = if self.diag[i] < 0.0 { -1.0 } else { 1.0 };
        Divisor {
            value: m,
            grad: vec![(i, sign)],
        }
    }

    pub(super) fn apply(&self, x: &[f64]) -> Vec<f64> {
        x.iter().zip(self.diag).map(|(a, b)| a * b).collect()
    }

    pub(super) fn apply_backward(&self, x: &[f64], dy: &[f64], dx: &mut [f64], drel: &mut [f64]) {
        for i in 0..x.len() {
            dx[i] += self.diag[i] * dy[i];
            drel[i] += x[i] * dy[i];
        }
    }

    pub(super) fn raw_matrix(&self) -> DenseMatrix {
        DenseMatrix::from_diagonal(self.diag)
    }

    pub(super) fn raw_spectrum(&self) -> Vec<f64> {
        sorted_desc(self.diag.iter().map(|v| v.abs()).collect())
    }
}

/// Complex diagonal relation stored as `(a, b)` pairs. Each pair acts on a
/// coordinate pair as `[[a, b], [-b, a]]`, which makes the score
/// `Re(<h, r, conj(t)>)`.
#[derive(Debug, Clone, Copy)]
pub struct ComplexRelation<'a> {
    pairs: &'a [f64],
}

impl<'a> ComplexRelation<'a> {
    pub fn new(pairs: &'a [f64]) -> Self {
        Self { pairs }
    }

    pub fn moduli(&self) -> Vec<f64> {
        self.pairs.chunks(2).map(|p| p[0].hypot(p[1])).collect()
    }

    pub(super) fn divisor(&self) -> Divisor {
        let (j, m) = argmax_abs(self.moduli().into_iter());
        let grad = if m > 0.0 {
            vec![
                (2 * j, self.pairs[2 * j] / m),
                (2 * j + 1, self.pairs[2 * j + 1] / m),
            ]
        } else {
            Vec::new()
        };
        Divisor { value: m, grad }
    }

    pub(super) fn apply(&self, x: &[f64], side: Side) -> Vec<f64> {
        let mut y = vec![0.0; x.len()];
        for (j, p) in self.pairs.chunks(2).enumerate() {
            let (a, b) = (p[0], p[1]);
            let (x0, x1) = (x[2 * j], x[2 * j + 1]);
            let (y0, y1) = match side {
                Side::Left => (a * x0 - b * x1, b * x0 + a * x1),
                Side::Right => (a * x0 + b * x1, -b * x0 + a * x1),
            };
            y[2 * j] = y0;
            y[2 * j + 1] = y1;
        }
        y
    }

    pub(super) fn apply_backward(
        &self,
        x: &[f64],
        side: Side,
        dy: &[f64],
        dx: &mut [f64],
        drel: &mut [f64],
    ) {
        for (j, p) in self.pairs.chunks(2).enumerate() {
            let (a, b) = (p[0], p[1]);
            let (x0, x1) = (x[2 * j], x[2 * j + 1]);
            let (g0, g1) = (dy[2 * j], dy[2 * j + 1]);
            match side {
                Side::Left => {
                    dx[2 * j] += a * g0 + b * g1;
                    dx[2 * j + 1] += -b * g0 + a * g1;
                    drel[2 * j] += x0 * g0 + x1 * g1;
                    drel[2 * j + 1] += -x1 * g0 + x0 * g1;
                }
                Side::Right => {
                    dx[2 * j] += a * g0 - b * g1;
                    dx[2 * j + 1] += b * g0 + a * g1;
                    drel[2 * j] += x0 * g0 + x1 * g1;
                    drel[2 * j + 1] += x1 * g0 - x0 * g1;
                }
            }
        }
    }

    pub(super) fn raw_matrix(&self) -> DenseMatrix {
        let n = self.pairs.len();
        let mut m = DenseMatrix::zeros(n, n);
        for (j, p) in self.pairs.chunks(2).enumerate() {
            let o = 2 * j;
            m.set(o, o, p[0]);
            m.set(o, o + 1, p[1]);
            m.set(o + 1, o, -p[1]);
            m.set(o + 1, o + 1, p[0]);
        }
        m
    }

    pub(super) fn raw_spectrum(&self) -> Vec<f64> {
        sorted_desc(self.moduli().into_iter().flat_map(|m| [m, m]).collect())
    }
}

/// Full `n x n` relation matrix, row-major.
#[derive(Debug, Clone, Copy)]
pub struct RescalRelation<'a> {
    data: &'a [f64],
    n: usize,
}

impl<'a> RescalRelation<'a> {
    pub fn new(data: &'a [f64], n: usize) -> Self {
        Self { data, n }
    }

    pub fn matrix(&self) -> DenseMatrix {
        self.raw_matrix()
    }

    /// Largest singular value, with gradient `u₁ v₁ᵀ`.
    pub(super) fn divisor(&self) -> Result<Divisor> {
        let svd = linalg::jacobi_svd(&self.raw_matrix())?;
        let u = svd.u.column(0);
        let v = svd.v.column(0);
        let mut grad = Vec::with_capacity(self.n * self.n);
        for i in 0..self.n {
            for j in 0..self.n {
                grad.push((i * self.n + j, u[i] * v[j]));
            }
        }
        Ok(Divisor {
            value: svd.sigma[0],
            grad,
        })
    }

    pub(super) fn apply(&self, x: &[f64], side: Side) -> Vec<f64> {
        let n = self.n;
        let mut y = vec![0.0; n];
        for i in 0..n {
            let row = &self.data[i * n..(i + 1) * n];
            match side {
                Side::Right => y[i] = linalg::dot(row, x),
                Side::Left => {
                    for j in 0..n {
                        y[j] += row[j] * x[i];
                    }
                }
            }
        }
        y
    }

    pub(super) fn apply_backward(
        &self,
        x: &[f64],
        side: Side,
        dy: &[f64],
        dx: &mut [f64],
        drel: &mut [f64],
    ) {
        let n = self.n;
        for i in 0..n {
            let row = &self.data[i * n..(i + 1) * n];
            for j in 0..n {
                match side {
                    Side::Left => {
                        dx[i] += row[j] * dy[j];
                        drel[i * n + j] += x[i] * dy[j];
                    }
                    Side::Right => {
                        dx[j] += row[j] * dy[i];
                        drel[i * n + j] += dy[i] * x[j];
                    }
                }
            }
        }
    }

    pub(super) fn raw_matrix(&self) -> DenseMatrix {
        let mut m = DenseMatrix::zeros(self.n, self.n);
        for (idx, v) in self.data.iter().enumerate() {
            m.set(idx / self.n, idx % self.n, *v);
        }
        m
    }

    pub(super) fn raw_spectrum(&self) -> Result<Vec<f64>> {
        Ok(linalg::jacobi_svd(&self.raw_matrix())?.sigma)
    }
}

fn argmax_abs(values: impl Iterator<Item = f64>) -> (usize, f64) {
    let mut best = (0, f64::NEG_INFINITY);
    for (i, v) in values.enumerate() {
        if v.abs() > best.1 {
            best = (i, v.abs());
        }
    }
    best
}

fn sorted_desc(mut v: Vec<f64>) -> Vec<f64> {
    v.sort_by(|a, b| b.total_cmp(a));
    v
}

fn require_baseline(state: &ModelState) -> Result<()> {
    if state.config().kind.is_unibi() {
        return Err(Error::InvalidArgument(format!(
            "{} is not a baseline model",
            state.config().kind
        )));
    }
    Ok(())
}

/// Score of a baseline model; constraints apply only when enabled in the
/// state's config.
pub fn baseline_score(
    state: &ModelState,
    h: usize,
    r: usize,
    t: usize,
) -> Result<(f64, ScoreTape)> {
    require_baseline(state)?;
    score(state, h, r, t)
}

pub fn baseline_backward(state: &ModelState, tape: &ScoreTape, upstream: f64) -> Result<ScoreGrad> {
    require_baseline(state)?;
    score_backward(state, tape, upstream)
}
