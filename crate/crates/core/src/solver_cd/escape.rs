//! Exact refinement used when coordinate steps stall at a kink.
//!
//! The training problem is the linear program
//! `min sum_c Lambda_c |beta_c| + (1/m) sum_i xi_i` with `xi_i >= 1 - (A beta)_i`,
//! `xi >= 0`. Its dual is `max sum_i u_i` over `0 <= u_i <= 1/m` with
//! `|A^T u|_c <= Lambda_c`. Only a few coordinates are nonzero at the optimum,
//! so the program is solved over a working set of coordinates; the row duals
//! of that restricted program are priced against every coordinate, and
//! violated coordinates join the set until none remain.
//! Any `u` in the box gives the lower bound `t sum_i u_i` on the optimum, with
//! `t = min(1, min_c Lambda_c / |A^T u|_c)`.

use log::debug;
use ndarray::Array2;

use crate::objective::SignedDesign;
use crate::solver_lp::{solve_with_duals, LPProblem, LPStatus};

/// Dual lower bound from box-feasible multipliers.
pub(crate) fn dual_bound(design: &SignedDesign, u: &[f64]) -> f64 {
    let mut t: f64 = 1.0;
    for c in 0..design.num_coords() {
        let v: f64 = design.col(c).iter().zip(u).map(|(a, w)| a * w).sum::<f64>().abs();
        if v > 0.0 {
            t = t.min(design.weight[c] / v);
        }
    }
    t.max(0.0) * u.iter().sum::<f64>()
}

/// Multipliers read off a primal point through complementary slackness.
///
/// Points with `z_i` clearly positive get `1/m`, clearly negative get `0`. For
/// points on the kink the support coordinates must satisfy
/// `sum_i u_i a_ic = Lambda_c sign(beta_c)`; those multipliers come from a
/// ridge-regularized least-squares fit and are clipped into the box.
pub(crate) fn kkt_dual(design: &SignedDesign, support: &[(usize, f64)], z: &[f64]) -> Vec<f64> {
    let m = design.m;
    let inv_m = 1.0 / m as f64;
    let scale = z.iter().fold(1.0f64, |s, v| s.max(v.abs()));
    let on_kink = |v: f64| v.abs() <= KINK_TOL * scale;
    let mut u: Vec<f64> = z.iter().map(|&v| if on_kink(v) || v < 0.0 { 0.0 } else { inv_m }).collect();
    let kink: Vec<usize> = (0..m).filter(|&i| on_kink(z[i])).collect();
    if kink.is_empty() || support.is_empty() {
        return u;
    }
    // Rows of B and r, one per support coordinate, scaled to unit column maximum.
    let nk = kink.len();
    let mut rows = Vec::with_capacity(support.len());
    for &(c, b) in support {
        let col = design.col(c);
        let sc = if design.col_max[c] > 0.0 { 1.0 / design.col_max[c] } else { 1.0 };
        let fixed: f64 = col.iter().zip(&u).map(|(a, w)| a * w).sum();
        let r = (design.weight[c] * b.signum() - fixed) * sc;
        let row: Vec<f64> = kink.iter().map(|&i| col[i] * sc).collect();
        rows.push((row, r));
    }
    // Normal equations (B^T B + eps I) x = B^T r.
    let mut ata = vec![0.0; nk * nk];
    let mut atb = vec![0.0; nk];
    for (row, r) in &rows {
        for a in 0..nk {
            if row[a] == 0.0 {
                continue;
            }
            atb[a] += row[a] * r;
            for b in 0..nk {
                ata[a * nk + b] += row[a] * row[b];
            }
        }
    }
    let diag = (0..nk).map(|a| ata[a * nk + a]).fold(0.0f64, f64::max).max(1e-300);
    for a in 0..nk {
        ata[a * nk + a] += 1e-12 * diag;
    }
    if let Some(x) = solve_dense(ata, atb, nk) {
        for (t, &i) in kink.iter().enumerate() {
            u[i] = x[t].clamp(0.0, inv_m);
        }
    }
    u
}

/// Relative size of `|z_i|` below which a point counts as sitting on the kink.
const KINK_TOL: f64 = 1e-7;

/// Gaussian elimination with partial pivoting; `None` if singular.
fn solve_dense(mut a: Vec<f64>, mut b: Vec<f64>, n: usize) -> Option<Vec<f64>> {
    for c in 0..n {
        let p = (c..n).max_by(|&x, &y| a[x * n + c].abs().total_cmp(&a[y * n + c].abs()))?;
        if a[p * n + c].abs() < 1e-300 {
            return None;
        }
        if p != c {
            for t in 0..n {
                a.swap(p * n + t, c * n + t);
            }
            b.swap(p, c);
        }
        for r in c + 1..n {
            let f = a[r * n + c] / a[c * n + c];
            if f != 0.0 {
                for t in c..n {
                    a[r * n + t] -= f * a[c * n + t];
                }
                b[r] -= f * b[c];
            }
        }
    }
    let mut x = vec![0.0; n];
    for c in (0..n).rev() {
        let s: f64 = (c + 1..n).map(|t| a[c * n + t] * x[t]).sum();
        x[c] = (b[c] - s) / a[c * n + c];
    }
    x.iter().all(|v| v.is_finite()).then_some(x)
}

/// `z_i = 1 - margin_i` for a dense coefficient vector.
pub(crate) fn residuals(design: &SignedDesign, beta: &[f64]) -> Vec<f64> {
    let mut z = vec![1.0; design.m];
    for (c, &b) in beta.iter().enumerate() {
        if b != 0.0 {
            for (zi, a) in z.iter_mut().zip(design.col(c)) {
                *zi -= b * a;
            }
        }
    }
    z
}


/// Result of one refinement.
pub(crate) struct Refined {
    /// Best dense coefficient vector found, `start` if nothing improved on it.
    pub beta: Vec<f64>,
    /// Best dual lower bound seen.
    pub lower_bound: f64,
    pub rounds: usize,
}

/// Pricing passes per refinement.
const ROUNDS_MAX: usize = 100;
/// Relative violation of `|A^T u|_c <= Lambda_c` that brings a coordinate in.
const PRICE_TOL: f64 = 1e-9;
/// Coordinates at least this close to the dual constraint join the first
/// working set, since the starting multipliers are only estimates.
const INITIAL_RATIO: f64 = 0.5;

fn objective(design: &SignedDesign, beta: &[f64]) -> f64 {
    let z = residuals(design, beta);
    let hinge: f64 = z.iter().map(|v| v.max(0.0)).sum::<f64>() / design.m as f64;
    hinge + beta.iter().zip(&design.weight).map(|(b, w)| w * b.abs()).sum::<f64>()
}

/// `|A^T u|_c / Lambda_c` per coordinate.
fn ratios(design: &SignedDesign, u: &[f64]) -> Vec<f64> {
    (0..design.num_coords())
        .map(|c| {
            let v: f64 = design.col(c).iter().zip(u).map(|(a, w)| a * w).sum::<f64>().abs();
            if design.weight[c] > 0.0 {
                v / design.weight[c]
            } else if v > 0.0 {
                f64::INFINITY
            } else {
                0.0
            }
        })
        .collect()
}

/// Adds up to `limit` coordinates with ratio above `threshold`, largest first.
/// Returns how many were added.
fn extend(set: &mut Vec<usize>, in_set: &mut [bool], ratio: &[f64], threshold: f64, limit: usize) -> usize {
    let mut cand: Vec<usize> = (0..ratio.len()).filter(|&c| !in_set[c] && ratio[c] > threshold).collect();
    cand.sort_by(|&x, &y| ratio[y].total_cmp(&ratio[x]).then(x.cmp(&y)));
    cand.truncate(limit);
    for &c in &cand {
        in_set[c] = true;
        set.push(c);
    }
    cand.len()
}

/// Solves the program over the coordinates in `set`; returns the dense
/// coefficients and the row duals.
fn solve_restricted(design: &SignedDesign, set: &[usize]) -> Option<(Vec<f64>, Vec<f64>)> {
    let m = design.m;
    let w = set.len();
    let n = 2 * w + m;
    let mut cost = vec![1.0 / m as f64; n];
    let mut a = Array2::zeros((m, n));
    for (t, &c) in set.iter().enumerate() {
        cost[t] = design.weight[c];
        cost[w + t] = design.weight[c];
        for (i, &v) in design.col(c).iter().enumerate() {
            a[[i, t]] = v;
            a[[i, w + t]] = -v;
        }
    }
    for i in 0..m {
        a[[i, 2 * w + i]] = 1.0;
    }
    let problem = LPProblem::new(cost, a, vec![1.0; m]).ok()?;
    let (sol, y) = solve_with_duals(&problem, 50 * (n + m).max(100)).ok()?;
    if sol.status != LPStatus::Optimal {
        debug!("restricted program over {w} coordinates ended with status {}", sol.status);
        return None;
    }
    let mut beta = vec![0.0; design.num_coords()];
    for (t, &c) in set.iter().enumerate() {
        beta[c] = sol.var_values[t] - sol.var_values[w + t];
    }
    Some((beta, y))
}

/// Refines `start` (with objective `f_start`) until the gap between the best
/// objective and the dual bound is within `gap_tol * max(1, F)`, no coordinate
/// prices out, or the round budget runs out.
pub(crate) fn refine(design: &SignedDesign, start: &[f64], f_start: f64, gap_tol: f64) -> Refined {
    let m = design.m;
    let inv_m = 1.0 / m as f64;
    let support: Vec<(usize, f64)> =
        start.iter().enumerate().filter(|(_, b)| **b != 0.0).map(|(c, b)| (c, *b)).collect();
    let u0 = kkt_dual(design, &support, &residuals(design, start));
    let mut lower_bound = dual_bound(design, &u0);

    let mut in_set = vec![false; design.num_coords()];
    let mut set: Vec<usize> = support.iter().map(|&(c, _)| c).collect();
    for &c in &set {
        in_set[c] = true;
    }
    extend(&mut set, &mut in_set, &ratios(design, &u0), INITIAL_RATIO, m);

    let mut beta = start.to_vec();
    let mut best_f = f_start;
    let mut rounds = 0;
    while rounds < ROUNDS_MAX && best_f - lower_bound > gap_tol * best_f.max(1.0) {
        rounds += 1;
        let Some((b, y)) = solve_restricted(design, &set) else {
            break;
        };
        let f = objective(design, &b);
        if f < best_f {
            best_f = f;
            beta = b;
        }
        let u: Vec<f64> = y.iter().map(|v| v.clamp(0.0, inv_m)).collect();
        lower_bound = lower_bound.max(dual_bound(design, &u));
        if extend(&mut set, &mut in_set, &ratios(design, &u), 1.0 + PRICE_TOL, m) == 0 {
            break;
        }
    }
    debug!("refinement: {rounds} rounds over {} coordinates, F {best_f:.10e}, bound {lower_bound:.10e}", set.len());
    Refined {
        beta,
        lower_bound,
        rounds,
    }
}
