//! Dense two-phase revised simplex for `min c.x  s.t.  A x >= b, x >= 0`.
//!
//! The basis inverse is kept explicitly and updated by elementary row
//! operations, with a fresh Gauss-Jordan inverse every `REFACTOR_EVERY` pivots.

use log::debug;

use super::{LPProblem, LPSolution, LPStatus};
use crate::error::{Error, Result};

/// Smallest pivot element and reduced cost treated as nonzero.
pub const PIVOT_TOL: f64 = 1e-9;
/// Largest constraint violation or negative value accepted as feasible.
pub const FEASIBILITY_TOL: f64 = 1e-7;
/// Consecutive degenerate pivots after which pricing falls back to Bland's rule.
pub const DEGENERATE_SWITCH: usize = 50;

const REFACTOR_EVERY: usize = 50;
const DEGENERATE_STEP: f64 = 1e-12;

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
enum Kind {
    Structural,
    Surplus,
    Artificial,
}

struct Simplex {
    m: usize,
    n: usize,
    /// Column-major structural block after row sign normalization.
    cols: Vec<f64>,
    /// `+1` or `-1` per row so that the working right-hand side is nonnegative.
    row_sign: Vec<f64>,
    rhs: Vec<f64>,
    basis: Vec<usize>,
    in_basis: Vec<bool>,
    binv: Vec<f64>,
    x_basic: Vec<f64>,
    pivots: usize,
    since_refactor: usize,
}

impl Simplex {
    fn kind(&self, col: usize) -> Kind {
        if col < self.n {
            Kind::Structural
        } else if col < self.n + self.m {
            Kind::Surplus
        } else {
            Kind::Artificial
        }
    }

    /// Writes column `col` of the working matrix `[A' | -S | I]` into `out`.
    fn column(&self, col: usize, out: &mut [f64]) {
        match self.kind(col) {
            Kind::Structural => out.copy_from_slice(&self.cols[col * self.m..(col + 1) * self.m]),
            Kind::Surplus => {
                out.fill(0.0);
                let i = col - self.n;
                out[i] = -self.row_sign[i];
            }
            Kind::Artificial => {
                out.fill(0.0);
                out[col - self.n - self.m] = 1.0;
            }
        }
    }

    /// `y . column(col)` without materializing the column.
    fn dot_column(&self, y: &[f64], col: usize) -> f64 {
        match self.kind(col) {
            Kind::Structural => {
                let c = &self.cols[col * self.m..(col + 1) * self.m];
                c.iter().zip(y).map(|(a, b)| a * b).sum()
            }
            Kind::Surplus => {
                let i = col - self.n;
                -self.row_sign[i] * y[i]
            }
            Kind::Artificial => y[col - self.n - self.m],
        }
    }

    fn refactor(&mut self) -> Result<()> {
        let m = self.m;
        let mut b = vec![0.0; m * m];
        let mut col = vec![0.0; m];
        for (r, &bc) in self.basis.iter().enumerate() {
            self.column(bc, &mut col);
            for i in 0..m {
                b[i * m + r] = col[i];
            }
        }
        self.binv = invert(b, m)?;
        for i in 0..m {
            self.x_basic[i] = (0..m).map(|t| self.binv[i * m + t] * self.rhs[t]).sum();
        }
        self.since_refactor = 0;
        Ok(())
    }

    fn duals(&self, costs: &[f64]) -> Vec<f64> {
        let m = self.m;
        let mut y = vec![0.0; m];
        for (r, &bc) in self.basis.iter().enumerate() {
            let cb = costs[bc];
            if cb != 0.0 {
                for (t, yt) in y.iter_mut().enumerate() {
                    *yt += cb * self.binv[r * m + t];
                }
            }
        }
        y
    }

    fn ftran(&self, col: usize) -> Vec<f64> {
        let m = self.m;
        let mut a = vec![0.0; m];
        self.column(col, &mut a);
        (0..m)
            .map(|i| (0..m).map(|t| self.binv[i * m + t] * a[t]).sum())
            .collect()
    }

    fn pivot(&mut self, row: usize, entering: usize, d: &[f64], theta: f64) {
        let m = self.m;
        for i in 0..m {
            self.x_basic[i] -= theta * d[i];
        }
        self.x_basic[row] = theta;
        let piv = d[row];
        for t in 0..m {
            self.binv[row * m + t] /= piv;
        }
        for i in 0..m {
            if i != row && d[i] != 0.0 {
                let f = d[i];
                for t in 0..m {
                    self.binv[i * m + t] -= f * self.binv[row * m + t];
                }
            }
        }
        self.in_basis[self.basis[row]] = false;
        self.in_basis[entering] = true;
        self.basis[row] = entering;
        self.pivots += 1;
        self.since_refactor += 1;
    }

    /// Runs primal simplex iterations with the given costs over the allowed columns.
    fn run(&mut self, costs: &[f64], allowed: &[bool], max_pivots: usize) -> Result<LPStatus> {
        let total = costs.len();
        let mut degenerate_run = 0usize;
        loop {
            if self.since_refactor >= REFACTOR_EVERY {
                self.refactor()?;
            }
            let y = self.duals(costs);
            let bland = degenerate_run >= DEGENERATE_SWITCH;
            let mut entering = None;
            let mut best = -PIVOT_TOL;
            for j in 0..total {
                if !allowed[j] || self.in_basis[j] {
                    continue;
                }
                let dj = costs[j] - self.dot_column(&y, j);
                if dj < best {
                    entering = Some(j);
                    if bland {
                        break;
                    }
                    best = dj;
                }
            }
            let Some(q) = entering else {
                return Ok(LPStatus::Optimal);
            };
            if self.pivots >= max_pivots {
                return Ok(LPStatus::IterationLimit);
            }
            let d = self.ftran(q);

            let mut leave: Option<(usize, f64)> = None;
            for r in 0..self.m {
                let dr = d[r];
                // A basic artificial at level zero must not grow: leave at once.
                let ratio = if self.kind(self.basis[r]) == Kind::Artificial && !allowed[self.basis[r]] {
                    if dr.abs() > PIVOT_TOL {
                        0.0
                    } else {
                        continue;
                    }
                } else if dr > PIVOT_TOL {
                    self.x_basic[r].max(0.0) / dr
                } else {
                    continue;
                };
                let better = match leave {
                    None => true,
                    Some((lr, lt)) => {
                        if ratio < lt - 1e-12 {
                            true
                        } else if ratio <= lt + 1e-12 {
                            if bland {
                                self.basis[r] < self.basis[lr]
                            } else {
                                dr.abs() > d[lr].abs()
                            }
                        } else {
                            false
                        }
                    }
                };
                if better {
                    leave = Some((r, ratio));
                }
            }
            let Some((r, theta)) = leave else {
                return Ok(LPStatus::Unbounded);
            };
            if theta <= DEGENERATE_STEP {
                degenerate_run += 1;
            } else {
                degenerate_run = 0;
            }
            self.pivot(r, q, &d, theta);
        }
    }
}

/// Gauss-Jordan inverse with partial pivoting of a row-major `m x m` matrix.
fn invert(mut a: Vec<f64>, m: usize) -> Result<Vec<f64>> {
    let mut inv = vec![0.0; m * m];
    for i in 0..m {
        inv[i * m + i] = 1.0;
    }
    for c in 0..m {
        let p = (c..m)
            .max_by(|&x, &y| a[x * m + c].abs().total_cmp(&a[y * m + c].abs()))
            .unwrap_or(c);
        if a[p * m + c].abs() < 1e-14 {
            return Err(Error::Numeric("simplex basis became singular".into()));
        }
        if p != c {
            for t in 0..m {
                a.swap(p * m + t, c * m + t);
                inv.swap(p * m + t, c * m + t);
            }
        }
        let piv = a[c * m + c];
        for t in 0..m {
            a[c * m + t] /= piv;
            inv[c * m + t] /= piv;
        }
        for i in 0..m {
            if i != c {
                let f = a[i * m + c];
                if f != 0.0 {
                    for t in 0..m {
                        a[i * m + t] -= f * a[c * m + t];
                        inv[i * m + t] -= f * inv[c * m + t];
                    }
                }
            }
        }
    }
    Ok(inv)
}

/// Solves the problem; at most `max_pivots` pivots across both phases.
pub fn simplex_solve(problem: &LPProblem, max_pivots: usize) -> Result<LPSolution> {
    solve_with_duals(problem, max_pivots).map(|(sol, _)| sol)
}

/// Like [`simplex_solve`], also returning one dual value per constraint row
/// from the final basis (zeros if phase two was never reached).
pub(crate) fn solve_with_duals(problem: &LPProblem, max_pivots: usize) -> Result<(LPSolution, Vec<f64>)> {
    problem.validate()?;
    let m = problem.num_constraints();
    let n = problem.num_vars;
    let row_sign: Vec<f64> = problem.rhs.iter().map(|&b| if b < 0.0 { -1.0 } else { 1.0 }).collect();
    let rhs: Vec<f64> = problem.rhs.iter().zip(&row_sign).map(|(b, s)| b * s).collect();
    // Each structural column is scaled to unit maximum; kernel columns can
    // differ by many orders of magnitude, which otherwise dominates pricing.
    let scale: Vec<f64> = (0..n)
        .map(|j| {
            let v = problem.constraint_matrix.column(j).iter().fold(0.0f64, |a, x| a.max(x.abs()));
            if v > 0.0 && v.is_finite() {
                v
            } else {
                1.0
            }
        })
        .collect();
    let mut cols = vec![0.0; n * m];
    for i in 0..m {
        for j in 0..n {
            cols[j * m + i] = row_sign[i] * problem.constraint_matrix[[i, j]] / scale[j];
        }
    }

    // Crash basis: a surplus with coefficient +1, else a structural unit column, else an artificial.
    let mut basis = vec![usize::MAX; m];
    let mut used = vec![false; n];
    for i in 0..m {
        if row_sign[i] < 0.0 {
            basis[i] = n + i;
            continue;
        }
        let unit = (0..n).find(|&j| {
            !used[j] && cols[j * m + i] > 0.0 && (0..m).all(|t| t == i || cols[j * m + t] == 0.0)
        });
        basis[i] = match unit {
            Some(j) => {
                used[j] = true;
                j
            }
            None => n + m + i,
        };
    }

    let mut in_basis = vec![false; n + 2 * m];
    for &b in &basis {
        in_basis[b] = true;
    }
    let mut s = Simplex {
        m,
        n,
        cols,
        row_sign,
        rhs,
        basis,
        in_basis,
        binv: Vec::new(),
        x_basic: vec![0.0; m],
        pivots: 0,
        since_refactor: 0,
    };
    s.refactor()?;

    let total = n + 2 * m;
    let mut allowed: Vec<bool> = (0..total).map(|j| j < n + m).collect();
    let artificial_basic = s.basis.iter().any(|&b| b >= n + m);
    if artificial_basic {
        for &b in &s.basis {
            allowed[b] = true;
        }
        let costs: Vec<f64> = (0..total).map(|j| if j >= n + m { 1.0 } else { 0.0 }).collect();
        let status = s.run(&costs, &allowed, max_pivots)?;
        let infeas: f64 = s
            .basis
            .iter()
            .zip(&s.x_basic)
            .filter(|(b, _)| **b >= n + m)
            .map(|(_, x)| x.max(0.0))
            .sum();
        debug!("phase one ended after {} pivots, infeasibility {infeas:e}", s.pivots);
        if status == LPStatus::IterationLimit {
            return Ok((finish(problem, &s, &scale, LPStatus::IterationLimit), vec![0.0; m]));
        }
        if infeas > FEASIBILITY_TOL {
            return Ok((finish(problem, &s, &scale, LPStatus::Infeasible), vec![0.0; m]));
        }
        for j in n + m..total {
            allowed[j] = false;
        }
    }

    let mut costs = vec![0.0; total];
    for (cj, (c, sc)) in costs.iter_mut().zip(problem.objective_coeffs.iter().zip(&scale)) {
        *cj = c / sc;
    }
    let status = s.run(&costs, &allowed, max_pivots)?;
    s.refactor()?;
    debug!("simplex finished with {:?} after {} pivots", status, s.pivots);
    let y: Vec<f64> = s.duals(&costs).iter().zip(&s.row_sign).map(|(v, sg)| v * sg).collect();
    Ok((finish(problem, &s, &scale, status), y))
}

fn finish(problem: &LPProblem, s: &Simplex, scale: &[f64], status: LPStatus) -> LPSolution {
    let mut x = vec![0.0; problem.num_vars];
    for (&b, &v) in s.basis.iter().zip(&s.x_basic) {
        if b < problem.num_vars {
            x[b] = if v.abs() <= PIVOT_TOL { 0.0 } else { v / scale[b] };
        }
    }
    let objective = x.iter().zip(&problem.objective_coeffs).map(|(a, c)| a * c).sum();
    LPSolution {
        var_values: x,
        objective,
        status,
        pivots: s.pivots,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{array, Array2};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn lp(c: Vec<f64>, a: Array2<f64>, b: Vec<f64>) -> LPProblem {
        LPProblem::new(c, a, b).unwrap()
    }

    #[test]
    fn single_variable() {
        let sol = simplex_solve(&lp(vec![1.0], array![[1.0]], vec![1.0]), 100).unwrap();
        assert_eq!(sol.status, LPStatus::Optimal);
        assert_eq!(sol.var_values, vec![1.0]);
        assert_eq!(sol.objective, 1.0);
    }

    #[test]
    fn needs_phase_one() {
        // min x + y  s.t. x + 2y >= 4, 3x + y >= 6  ->  x = 1.6, y = 1.2
        let sol = simplex_solve(&lp(vec![1.0, 1.0], array![[1.0, 2.0], [3.0, 1.0]], vec![4.0, 6.0]), 100).unwrap();
        assert_eq!(sol.status, LPStatus::Optimal);
        assert!((sol.var_values[0] - 1.6).abs() < 1e-12);
        assert!((sol.var_values[1] - 1.2).abs() < 1e-12);
        assert!((sol.objective - 2.8).abs() < 1e-12);
    }

    #[test]
    fn infeasible_and_unbounded() {
        // -x >= 1 with x >= 0 has no solution.
        let sol = simplex_solve(&lp(vec![1.0], array![[-1.0]], vec![1.0]), 100).unwrap();
        assert_eq!(sol.status, LPStatus::Infeasible);
        // min -x  s.t. x >= 1 is unbounded.
        let sol = simplex_solve(&lp(vec![-1.0], array![[1.0]], vec![1.0]), 100).unwrap();
        assert_eq!(sol.status, LPStatus::Unbounded);
    }

    #[test]
    fn negative_rhs_uses_surplus() {
        // x - y >= -1, min y - x ... bounded by x <= ... use: min y s.t. y - x >= -1, x >= 2.
        let sol = simplex_solve(&lp(vec![0.0, 1.0], array![[-1.0, 1.0], [1.0, 0.0]], vec![-1.0, 2.0]), 100).unwrap();
        assert_eq!(sol.status, LPStatus::Optimal);
        assert!((sol.objective - 1.0).abs() < 1e-12);
    }

    #[test]
    fn iteration_limit() {
        let sol = simplex_solve(&lp(vec![1.0, 1.0], array![[1.0, 2.0], [3.0, 1.0]], vec![4.0, 6.0]), 0).unwrap();
        assert_eq!(sol.status, LPStatus::IterationLimit);
    }

    #[test]
    fn degenerate_instances_terminate() {
        // Many identical constraints through the optimum.
        let a = Array2::from_shape_fn((12, 3), |(i, j)| [1.0, 1.0, 1.0][j] * (1.0 + (i % 2) as f64));
        let b: Vec<f64> = (0..12).map(|i| 1.0 + (i % 2) as f64).collect();
        let sol = simplex_solve(&lp(vec![1.0, 2.0, 3.0], a, b), 1000).unwrap();
        assert_eq!(sol.status, LPStatus::Optimal);
        assert!((sol.objective - 1.0).abs() < 1e-12);

        // Beale's classic cycling example rewritten as >= rows.
        let a = array![
            [-0.25, 8.0, 1.0, -9.0],
            [-0.5, 12.0, 0.5, -3.0],
            [0.0, 0.0, -1.0, 0.0]
        ];
        let sol = simplex_solve(&lp(vec![-0.75, 20.0, -0.5, 6.0], a, vec![0.0, 0.0, -1.0]), 1000).unwrap();
        assert_eq!(sol.status, LPStatus::Optimal);
        assert!((sol.objective + 1.25).abs() < 1e-9);
    }

    /// Enumerates every basic solution of `A x - s = b` and returns the best objective.
    fn brute_force(c: &[f64], a: &Array2<f64>, b: &[f64]) -> Option<f64> {
        let (m, n) = a.dim();
        let total = n + m;
        let col = |j: usize, i: usize| if j < n { a[[i, j]] } else if j - n == i { -1.0 } else { 0.0 };
        let mut best: Option<f64> = None;
        let mut idx: Vec<usize> = (0..m).collect();
        loop {
            let mut mat = vec![0.0; m * m];
            for (r, &j) in idx.iter().enumerate() {
                for i in 0..m {
                    mat[i * m + r] = col(j, i);
                }
            }
            if let Ok(inv) = invert(mat, m) {
                let xb: Vec<f64> = (0..m).map(|i| (0..m).map(|t| inv[i * m + t] * b[t]).sum()).collect();
                if xb.iter().all(|&v| v >= -1e-10) {
                    let obj: f64 = idx.iter().zip(&xb).filter(|(j, _)| **j < n).map(|(j, v)| c[*j] * v).sum();
                    best = Some(best.map_or(obj, |o: f64| o.min(obj)));
                }
            }
            // next combination
            let mut i = m;
            loop {
                if i == 0 {
                    return best;
                }
                i -= 1;
                if idx[i] < total - m + i {
                    idx[i] += 1;
                    for t in i + 1..m {
                        idx[t] = idx[t - 1] + 1;
                    }
                    break;
                }
            }
        }
    }

    #[test]
    fn matches_vertex_enumeration() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..40 {
            let m = rng.random_range(1..=3);
            let n = rng.random_range(1..=4);
            let a = Array2::from_shape_fn((m, n), |_| rng.random_range(-1.0..2.0));
            let b: Vec<f64> = (0..m).map(|_| rng.random_range(-1.0..1.0)).collect();
            let c: Vec<f64> = (0..n).map(|_| rng.random_range(0.1..1.0)).collect();
            let sol = simplex_solve(&lp(c.clone(), a.clone(), b.clone()), 500).unwrap();
            match brute_force(&c, &a, &b) {
                Some(best) => {
                    assert_eq!(sol.status, LPStatus::Optimal);
                    assert!((sol.objective - best).abs() < 1e-9, "{} vs {best}", sol.objective);
                }
                None => assert_eq!(sol.status, LPStatus::Infeasible),
            }
        }
    }
}
