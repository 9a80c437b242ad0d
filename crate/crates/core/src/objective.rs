//! The regularized hinge objective
//!
//! ```text
//! F(alpha) = (1/m) sum_i max(0, 1 - y_i f(x_i)) + sum_{k,j} Lambda_k |alpha_kj|,
//! f(x)     = sum_{k,j} alpha_kj y_j K_k(x, x_j),
//! ```
//!
//! its margins, and the per-coordinate subgradients used by coordinate descent.
//! Coefficients are signed, so the label of the landmark `x_j` sits inside `f`
//! while the penalty only sees `|alpha_kj|`.

use ndarray::Array2;

use crate::complexity::PenaltyVector;
use crate::error::{Error, Result};
use crate::kernels::GramStack;

/// Signed coefficients, one row per kernel family and one column per training point.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefMatrix {
    pub alpha: Array2<f64>,
}

impl CoefMatrix {
    pub fn zeros(p: usize, m: usize) -> Self {
        Self {
            alpha: Array2::zeros((p, m)),
        }
    }

    pub fn shape(&self) -> (usize, usize) {
        self.alpha.dim()
    }

    pub fn nnz(&self) -> usize {
        self.alpha.iter().filter(|a| **a != 0.0).count()
    }

    pub fn l1_weighted(&self, penalties: &PenaltyVector) -> f64 {
        self.alpha
            .rows()
            .into_iter()
            .zip(&penalties.effective)
            .map(|(row, lam)| lam * row.iter().map(|a| a.abs()).sum::<f64>())
            .sum()
    }
}

/// Scores `f(x_i)` on the training points and the margins `y_i f(x_i)`.
#[derive(Debug, Clone, PartialEq)]
pub struct MarginState {
    pub raw_scores: Vec<f64>,
    pub margins: Vec<f64>,
}

impl MarginState {
    pub fn zeros(m: usize) -> Self {
        Self {
            raw_scores: vec![0.0; m],
            margins: vec![0.0; m],
        }
    }

    /// Applies `alpha_kj += delta` in O(m).
    pub fn update(&mut self, stack: &GramStack, labels: &[f64], k: usize, j: usize, delta: f64) {
        let g = &stack.grams[k];
        let scale = delta * labels[j];
        for (i, (raw, margin)) in self.raw_scores.iter_mut().zip(self.margins.iter_mut()).enumerate() {
            *raw += scale * g[[i, j]];
            *margin = labels[i] * *raw;
        }
    }

    /// Average hinge loss over the sample.
    pub fn hinge(&self) -> f64 {
        self.margins.iter().map(|&t| (1.0 - t).max(0.0)).sum::<f64>() / self.margins.len() as f64
    }
}

pub(crate) fn check_shapes(
    alpha: Option<&CoefMatrix>,
    stack: &GramStack,
    labels: &[f64],
    penalties: Option<&PenaltyVector>,
) -> Result<()> {
    let (p, m) = (stack.num_kernels(), stack.num_points());
    if labels.len() != m {
        return Err(Error::Dimension(format!("{} labels for {m} training points", labels.len())));
    }
    if let Some(a) = alpha {
        if a.shape() != (p, m) {
            return Err(Error::Dimension(format!("coefficients {:?}, stack is {p}x{m}", a.shape())));
        }
    }
    if let Some(pen) = penalties {
        if pen.len() != p {
            return Err(Error::Dimension(format!("{} penalty weights for {p} kernels", pen.len())));
        }
    }
    Ok(())
}

/// Full recomputation of the training scores and margins.
pub fn margins(alpha: &CoefMatrix, stack: &GramStack, labels: &[f64]) -> Result<MarginState> {
    check_shapes(Some(alpha), stack, labels, None)?;
    let m = stack.num_points();
    let mut raw = vec![0.0; m];
    for (k, row) in alpha.alpha.rows().into_iter().enumerate() {
        let g = &stack.grams[k];
        for (j, &a) in row.iter().enumerate() {
            if a == 0.0 {
                continue;
            }
            let scale = a * labels[j];
            for (i, r) in raw.iter_mut().enumerate() {
                *r += scale * g[[i, j]];
            }
        }
    }
    let margins = raw.iter().zip(labels).map(|(r, y)| r * y).collect();
    Ok(MarginState {
        raw_scores: raw,
        margins,
    })
}

pub fn objective_value(
    alpha: &CoefMatrix,
    stack: &GramStack,
    labels: &[f64],
    penalties: &PenaltyVector,
) -> Result<f64> {
    check_shapes(Some(alpha), stack, labels, Some(penalties))?;
    let state = margins(alpha, stack, labels)?;
    Ok(state.hinge() + alpha.l1_weighted(penalties))
}

/// `(1/m) sum_{i : margin_i < 1} -y_i y_j G_k[i][j]`, the hinge part of the
/// coordinate subgradient.
pub fn hinge_gradient(state: &MarginState, stack: &GramStack, labels: &[f64], k: usize, j: usize) -> f64 {
    let g = &stack.grams[k];
    let m = labels.len();
    let mut s = 0.0;
    for i in 0..m {
        if state.margins[i] < 1.0 {
            s -= labels[i] * g[[i, j]];
        }
    }
    s * labels[j] / m as f64
}

/// Combines the hinge part `g` with the `Lambda |alpha|` term: the
/// minimum-norm element of the coordinate subdifferential.
#[inline]
pub fn soft_subgradient(g: f64, alpha: f64, lambda: f64) -> f64 {
    if alpha != 0.0 {
        g + alpha.signum() * lambda
    } else if g.abs() <= lambda {
        0.0
    } else {
        g - g.signum() * lambda
    }
}

pub fn coordinate_subgradient(
    alpha: &CoefMatrix,
    state: &MarginState,
    stack: &GramStack,
    labels: &[f64],
    penalties: &PenaltyVector,
    k: usize,
    j: usize,
) -> f64 {
    let g = hinge_gradient(state, stack, labels, k, j);
    soft_subgradient(g, alpha.alpha[[k, j]], penalties.effective[k])
}

/// Coordinate with the largest `|subgradient|`; ties go to the smallest `(k, j)`.
/// Returns `(0, 0, 0.0)` at a coordinate-wise stationary point.
pub fn steepest_coordinate(
    alpha: &CoefMatrix,
    state: &MarginState,
    stack: &GramStack,
    labels: &[f64],
    penalties: &PenaltyVector,
) -> (usize, usize, f64) {
    let mut best = (0, 0, 0.0f64);
    for k in 0..stack.num_kernels() {
        for j in 0..stack.num_points() {
            let sg = coordinate_subgradient(alpha, state, stack, labels, penalties, k, j);
            if sg.abs() > best.2.abs() {
                best = (k, j, sg);
            }
        }
    }
    best
}

/// Column-major copy of the signed design `a[i][(k, j)] = y_i y_j G_k[i][j]`,
/// so that coordinate `c = k * m + j` reads one contiguous slice.
#[derive(Debug, Clone)]
pub(crate) struct SignedDesign {
    pub p: usize,
    pub m: usize,
    cols: Vec<f64>,
    /// Row-major copy: `rows[i * p * m + c]`.
    rows: Vec<f64>,
    /// `max_i |a_ic|` per coordinate.
    pub col_max: Vec<f64>,
    /// Penalty weight per coordinate.
    pub weight: Vec<f64>,
}

impl SignedDesign {
    pub fn new(stack: &GramStack, labels: &[f64], penalties: &PenaltyVector) -> Result<Self> {
        check_shapes(None, stack, labels, Some(penalties))?;
        let (p, m) = (stack.num_kernels(), stack.num_points());
        let mut cols = vec![0.0; p * m * m];
        let mut rows = vec![0.0; p * m * m];
        let mut col_max = vec![0.0; p * m];
        let mut weight = vec![0.0; p * m];
        for k in 0..p {
            let g = &stack.grams[k];
            for j in 0..m {
                let c = k * m + j;
                let col = &mut cols[c * m..(c + 1) * m];
                let mut mx: f64 = 0.0;
                for i in 0..m {
                    let v = labels[i] * labels[j] * g[[i, j]];
                    col[i] = v;
                    rows[i * p * m + c] = v;
                    mx = mx.max(v.abs());
                }
                col_max[c] = mx;
                weight[c] = penalties.effective[k];
            }
        }
        Ok(Self {
            p,
            m,
            cols,
            rows,
            col_max,
            weight,
        })
    }

    #[inline]
    pub fn num_coords(&self) -> usize {
        self.p * self.m
    }

    #[inline]
    pub fn col(&self, c: usize) -> &[f64] {
        &self.cols[c * self.m..(c + 1) * self.m]
    }

    /// `a_ic` for every coordinate `c` of training point `i`.
    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        let pm = self.p * self.m;
        &self.rows[i * pm..(i + 1) * pm]
    }

    #[inline]
    pub fn split(&self, c: usize) -> (usize, usize) {
        (c / self.m, c % self.m)
    }
}
