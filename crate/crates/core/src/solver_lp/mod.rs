//! Linear-programming formulation of the training problem.
//!
//! Each coefficient is split as `alpha = alpha_plus - alpha_minus` and each hinge
//! term becomes a slack `xi_i`, giving
//!
//! ```text
//! min  (1/m) sum_i xi_i + sum_{k,j} Lambda_k (ap_kj + am_kj)
//! s.t. xi_i + sum_{k,j} (ap_kj - am_kj) y_i y_j G_k[i][j] >= 1,   all variables >= 0.
//! ```
//!
//! Variables are laid out as `[ap (p*m), am (p*m), xi (m)]` with coordinate
//! `c = k * m + j` inside each block.

mod lp_format;
mod simplex;

use std::fmt;

use log::warn;
use ndarray::Array2;

pub use lp_format::{export_lp_file, parse_lp_text, write_lp, ParsedLp};
pub(crate) use simplex::solve_with_duals;
pub use simplex::{simplex_solve, DEGENERATE_SWITCH, FEASIBILITY_TOL, PIVOT_TOL};

use crate::complexity::PenaltyVector;
use crate::error::{Error, Result};
use crate::kernels::GramStack;
use crate::objective::{check_shapes, CoefMatrix};

/// Coefficients below this magnitude are read as zero when extracting a model.
pub const EXTRACT_TOL: f64 = 1e-7;

/// `min c.x  s.t.  A x >= b, x >= 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct LPProblem {
    pub num_vars: usize,
    pub objective_coeffs: Vec<f64>,
    pub constraint_matrix: Array2<f64>,
    pub rhs: Vec<f64>,
    /// `(p, m)` when the variables follow the split-coefficient layout.
    pub layout: Option<(usize, usize)>,
}

impl LPProblem {
    pub fn new(objective_coeffs: Vec<f64>, constraint_matrix: Array2<f64>, rhs: Vec<f64>) -> Result<Self> {
        let problem = Self {
            num_vars: objective_coeffs.len(),
            objective_coeffs,
            constraint_matrix,
            rhs,
            layout: None,
        };
        problem.validate()?;
        Ok(problem)
    }

    pub fn num_constraints(&self) -> usize {
        self.rhs.len()
    }

    pub fn validate(&self) -> Result<()> {
        let (rows, cols) = self.constraint_matrix.dim();
        if cols != self.num_vars || self.objective_coeffs.len() != self.num_vars || rows != self.rhs.len() {
            return Err(Error::Dimension(format!(
                "LP with {} variables, {} costs, {rows}x{cols} matrix and {} right-hand sides",
                self.num_vars,
                self.objective_coeffs.len(),
                self.rhs.len()
            )));
        }
        if let Some((p, m)) = self.layout {
            if self.num_vars != 2 * p * m + m || rows != m {
                return Err(Error::Dimension(format!("layout {p}x{m} does not match the LP size")));
            }
        }
        let finite = self.objective_coeffs.iter().chain(&self.rhs).chain(self.constraint_matrix.iter()).all(|v| v.is_finite());
        if !finite {
            return Err(Error::Numeric("LP data contains a non-finite value".into()));
        }
        Ok(())
    }

    /// Name of variable `v` in exported files.
    pub fn var_name(&self, v: usize) -> String {
        match self.layout {
            Some((p, m)) => {
                let pm = p * m;
                if v < pm {
                    format!("ap_{}_{}", v / m, v % m)
                } else if v < 2 * pm {
                    format!("am_{}_{}", (v - pm) / m, (v - pm) % m)
                } else {
                    format!("xi_{}", v - 2 * pm)
                }
            }
            None => format!("x_{v}"),
        }
    }

    /// Largest violation of `A x >= b` and `x >= 0`.
    pub fn max_violation(&self, x: &[f64]) -> f64 {
        let mut worst = x.iter().fold(0.0f64, |w, v| w.max(-v));
        for (row, b) in self.constraint_matrix.rows().into_iter().zip(&self.rhs) {
            let lhs: f64 = row.iter().zip(x).map(|(a, v)| a * v).sum();
            worst = worst.max(b - lhs);
        }
        worst
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LPStatus {
    Optimal,
    IterationLimit,
    Infeasible,
    Unbounded,
}

impl fmt::Display for LPStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            LPStatus::Optimal => "optimal",
            LPStatus::IterationLimit => "iteration_limit",
            LPStatus::Infeasible => "infeasible",
            LPStatus::Unbounded => "unbounded",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LPSolution {
    pub var_values: Vec<f64>,
    pub objective: f64,
    pub status: LPStatus,
    pub pivots: usize,
}

pub fn build_lp(stack: &GramStack, labels: &[f64], penalties: &PenaltyVector) -> Result<LPProblem> {
    check_shapes(None, stack, labels, Some(penalties))?;
    let (p, m) = (stack.num_kernels(), stack.num_points());
    let pm = p * m;
    let n = 2 * pm + m;
    let mut c = vec![0.0; n];
    for k in 0..p {
        for j in 0..m {
            c[k * m + j] = penalties.effective[k];
            c[pm + k * m + j] = penalties.effective[k];
        }
    }
    for ci in &mut c[2 * pm..] {
        *ci = 1.0 / m as f64;
    }
    let mut a = Array2::zeros((m, n));
    for i in 0..m {
        for k in 0..p {
            let g = &stack.grams[k];
            for j in 0..m {
                // Adding zero turns a negative zero into a positive one.
                let v = labels[i] * labels[j] * g[[i, j]] + 0.0;
                a[[i, k * m + j]] = v;
                a[[i, pm + k * m + j]] = 0.0 - v;
            }
        }
        a[[i, 2 * pm + i]] = 1.0;
    }
    Ok(LPProblem {
        num_vars: n,
        objective_coeffs: c,
        constraint_matrix: a,
        rhs: vec![1.0; m],
        layout: Some((p, m)),
    })
}

fn split_to_coefs(values: &[f64], p: usize, m: usize) -> Result<CoefMatrix> {
    let pm = p * m;
    if values.len() != 2 * pm + m {
        return Err(Error::Dimension(format!("{} LP values for a {p}x{m} model", values.len())));
    }
    let mut out = CoefMatrix::zeros(p, m);
    let mut overlapping = 0usize;
    for c in 0..pm {
        let (plus, minus) = (values[c], values[pm + c]);
        let overlap = plus.min(minus);
        if overlap > EXTRACT_TOL {
            overlapping += 1;
        }
        let (plus, minus) = (plus - overlap.max(0.0), minus - overlap.max(0.0));
        if plus.max(minus) > EXTRACT_TOL {
            out.alpha[[c / m, c % m]] = plus - minus;
        }
    }
    if overlapping > 0 {
        warn!("{overlapping} coordinates had both split parts positive; overlap removed");
    }
    Ok(out)
}

/// `alpha = alpha_plus - alpha_minus` after removing any overlap; parts at or
/// below `EXTRACT_TOL` read as zero.
pub fn extract_model(solution: &LPSolution, shape: (usize, usize)) -> Result<CoefMatrix> {
    if solution.status != LPStatus::Optimal {
        return Err(Error::Extraction(format!("LP status is {}, not optimal", solution.status)));
    }
    split_to_coefs(&solution.var_values, shape.0, shape.1)
}

/// Builds, solves and extracts. A non-optimal status is returned to the caller
/// together with the coefficients of the last iterate.
pub fn train_lp(
    stack: &GramStack,
    labels: &[f64],
    penalties: &PenaltyVector,
    max_pivots: usize,
) -> Result<(CoefMatrix, LPSolution)> {
    let problem = build_lp(stack, labels, penalties)?;
    let solution = simplex_solve(&problem, max_pivots)?;
    let shape = (stack.num_kernels(), stack.num_points());
    let coefs = if solution.status == LPStatus::Optimal {
        extract_model(&solution, shape)?
    } else {
        warn!("LP stopped with status {}", solution.status);
        split_to_coefs(&solution.var_values, shape.0, shape.1)?
    };
    Ok((coefs, solution))
}

/// Default pivot budget for a problem of the given size.
pub fn default_max_pivots(p: usize, m: usize) -> usize {
    50 * (2 * p * m + 2 * m).max(100)
}
