//! Coordinate descent with steepest-coordinate selection and exact line search.
//!
//! Starting from `alpha = 0`, each step picks the coordinate with the largest
//! subgradient magnitude relative to its column scale and minimizes the
//! objective exactly along it. Because the objective is polyhedral,
//! single-coordinate moves can stall at a kink that is not optimal. When that
//! happens the problem is solved exactly over a working set grown from the
//! current support (see [`escape`]); the objective is minimized along the
//! direction to that solution and coordinate steps resume. Termination is
//! certified by a dual lower bound.
//!
//! Iterates are held in an ordered sparse map: coordinates that were never
//! moved stay exactly zero.

mod escape;
mod line_search;

use std::collections::BTreeMap;
use std::io::Write;

use log::{debug, info};

use crate::complexity::PenaltyVector;
use crate::error::{Error, Result};
use crate::kernels::GramStack;
use crate::objective::{check_shapes, soft_subgradient, CoefMatrix, MarginState, SignedDesign};

pub(crate) use line_search::minimize_piecewise_linear;

#[derive(Debug, Clone, PartialEq)]
pub struct CDConfig {
    /// Stationarity threshold on the largest coordinate subgradient.
    pub tol: f64,
    /// Step budget; `None` means `100 * p * m`.
    pub max_steps: Option<usize>,
    /// Relative decrease over a window of `p * m` steps below which the
    /// coordinate phase counts as stalled.
    pub objective_tol: f64,
    /// Log progress every this many steps.
    pub log_every: usize,
    /// Certified optimality: stop once `F - lower_bound <= gap_tol * max(1, F)`.
    pub gap_tol: f64,
    /// Working-set refinements allowed per run.
    pub max_escapes: usize,
}

impl Default for CDConfig {
    fn default() -> Self {
        Self {
            tol: 1e-5,
            max_steps: None,
            objective_tol: 1e-9,
            log_every: 1000,
            gap_tol: 1e-7,
            max_escapes: 20,
        }
    }
}

impl CDConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = |v: f64| v > 0.0 && v.is_finite();
        if !(positive(self.tol) && positive(self.objective_tol) && positive(self.gap_tol)) {
            return Err(Error::Config("tolerances must be positive and finite".into()));
        }
        if self.max_steps == Some(0) || self.log_every == 0 || self.max_escapes == 0 {
            return Err(Error::Config("step, logging and escape budgets must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceStep {
    pub step: usize,
    /// `(k, j)` for a coordinate step, `None` for a step along a searched direction.
    pub coord: Option<(usize, usize)>,
    pub eta: f64,
    pub objective: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    /// The duality gap fell below the tolerance.
    Certified,
    MaxSteps,
    /// Directional searches ran out before the gap closed.
    EscapeBudget,
    /// A refinement left the objective unchanged without closing the gap,
    /// typically because columns of very different scale keep the dual
    /// bound loose in floating point.
    Stuck,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CDTrace {
    pub steps: Vec<TraceStep>,
    pub initial_objective: f64,
    pub final_objective: f64,
    /// Best certified lower bound on the optimal objective.
    pub lower_bound: f64,
    pub steps_taken: usize,
    pub escapes: usize,
    pub converged: bool,
    pub stop_reason: StopReason,
}

impl CDTrace {
    /// Writes `step,k,j,eta,objective`; direction steps leave `k` and `j` empty.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "step,k,j,eta,objective")?;
        for s in &self.steps {
            match s.coord {
                Some((k, j)) => writeln!(out, "{},{k},{j},{:e},{:e}", s.step, s.eta, s.objective)?,
                None => writeln!(out, "{},,,{:e},{:e}", s.step, s.eta, s.objective)?,
            }
        }
        Ok(())
    }
}

/// Global minimizer of `eta -> F(alpha + eta e_kj)`, closest to zero among ties.
pub fn line_search_exact(
    alpha: &CoefMatrix,
    state: &MarginState,
    stack: &GramStack,
    labels: &[f64],
    penalties: &PenaltyVector,
    k: usize,
    j: usize,
) -> f64 {
    let g = &stack.grams[k];
    let m = labels.len();
    let hinge = (0..m).map(|i| (1.0 - state.margins[i], labels[i] * labels[j] * g[[i, j]]));
    let l1 = std::iter::once((alpha.alpha[[k, j]], 1.0, penalties.effective[k]));
    minimize_piecewise_linear(hinge, l1, 1.0 / m as f64)
}

/// Sparse iterate with margins, hinge-gradient cache and objective parts.
struct Descent<'a> {
    design: &'a SignedDesign,
    inv_m: f64,
    alpha: BTreeMap<usize, f64>,
    margins: Vec<f64>,
    active: Vec<bool>,
    /// `(1/m) sum_{i active} -a_ic` per coordinate.
    grad: Vec<f64>,
    hinge: f64,
    penalty: f64,
}

impl<'a> Descent<'a> {
    fn new(design: &'a SignedDesign) -> Self {
        let mut d = Self {
            design,
            inv_m: 1.0 / design.m as f64,
            alpha: BTreeMap::new(),
            margins: vec![0.0; design.m],
            active: vec![false; design.m],
            grad: vec![0.0; design.num_coords()],
            hinge: 0.0,
            penalty: 0.0,
        };
        d.rebuild();
        d
    }

    fn objective(&self) -> f64 {
        self.hinge + self.penalty
    }

    fn coef(&self, c: usize) -> f64 {
        self.alpha.get(&c).copied().unwrap_or(0.0)
    }

    /// Recomputes every cached quantity from the coefficient map.
    fn rebuild(&mut self) {
        let d = self.design;
        self.margins.fill(0.0);
        for (&c, &a) in &self.alpha {
            for (t, v) in self.margins.iter_mut().zip(d.col(c)) {
                *t += a * v;
            }
        }
        self.grad.fill(0.0);
        let mut hinge = 0.0;
        for i in 0..d.m {
            let act = self.margins[i] < 1.0;
            self.active[i] = act;
            if act {
                for (g, a) in self.grad.iter_mut().zip(d.row(i)) {
                    *g -= a;
                }
            }
            hinge += (1.0 - self.margins[i]).max(0.0);
        }
        for g in &mut self.grad {
            *g *= self.inv_m;
        }
        self.hinge = hinge * self.inv_m;
        self.penalty = self.alpha.iter().map(|(&c, a)| d.weight[c] * a.abs()).sum();
    }

    /// Coordinate with the largest subgradient per unit of margin change,
    /// `|sg_c| / max_i |a_ic|`, smallest index on ties. Returns the coordinate,
    /// its subgradient and the scaled magnitude.
    fn steepest(&self) -> (usize, f64, f64) {
        let mut best = (0, 0.0f64, 0.0f64);
        let mut nz = self.alpha.iter().peekable();
        for c in 0..self.design.num_coords() {
            let a = match nz.peek() {
                Some((&cc, &v)) if cc == c => {
                    nz.next();
                    v
                }
                _ => 0.0,
            };
            let scale = self.design.col_max[c];
            if scale == 0.0 {
                continue;
            }
            let sg = soft_subgradient(self.grad[c], a, self.design.weight[c]);
            let score = sg.abs() / scale;
            if score > best.2 {
                best = (c, sg, score);
            }
        }
        best
    }

    fn line_search(&self, c: usize) -> f64 {
        let col = self.design.col(c);
        let hinge = self.margins.iter().zip(col).map(|(t, a)| (1.0 - t, *a));
        minimize_piecewise_linear(hinge, std::iter::once((self.coef(c), 1.0, self.design.weight[c])), self.inv_m)
    }

    fn coordinate_value(&self, c: usize, eta: f64) -> f64 {
        let col = self.design.col(c);
        let hinge: f64 = self.margins.iter().zip(col).map(|(t, a)| (1.0 - (t + eta * a)).max(0.0)).sum();
        let old = self.coef(c);
        hinge * self.inv_m + self.penalty + self.design.weight[c] * ((old + eta).abs() - old.abs())
    }

    fn apply_coordinate(&mut self, c: usize, eta: f64) {
        let d = self.design;
        let old = self.coef(c);
        let new = old + eta;
        if new == 0.0 {
            self.alpha.remove(&c);
        } else {
            self.alpha.insert(c, new);
        }
        self.penalty += d.weight[c] * (new.abs() - old.abs());
        let mut hinge = 0.0;
        for (i, a) in d.col(c).iter().enumerate() {
            let t = self.margins[i] + eta * a;
            self.margins[i] = t;
            let act = t < 1.0;
            if act != self.active[i] {
                let sign = if act { -self.inv_m } else { self.inv_m };
                for (g, r) in self.grad.iter_mut().zip(d.row(i)) {
                    *g += sign * r;
                }
                self.active[i] = act;
            }
            hinge += (1.0 - t).max(0.0);
        }
        self.hinge = hinge * self.inv_m;
    }

    /// Lower bound from the multipliers `u_i = 1/m` on points with margin below one.
    fn subgradient_bound(&self) -> f64 {
        let mut t: f64 = 1.0;
        for (g, w) in self.grad.iter().zip(&self.design.weight) {
            if g.abs() > 0.0 {
                t = t.min(w / g.abs());
            }
        }
        let count = self.active.iter().filter(|a| **a).count();
        t.max(0.0) * count as f64 * self.inv_m
    }

    /// Lower bound from multipliers fitted by complementary slackness.
    fn slackness_bound(&self) -> f64 {
        let support: Vec<(usize, f64)> = self.alpha.iter().map(|(&c, &a)| (c, a)).collect();
        let z: Vec<f64> = self.margins.iter().map(|t| 1.0 - t).collect();
        escape::dual_bound(self.design, &escape::kkt_dual(self.design, &support, &z))
    }

    fn dense(&self) -> Vec<f64> {
        let mut v = vec![0.0; self.design.num_coords()];
        for (&c, &a) in &self.alpha {
            v[c] = a;
        }
        v
    }

    /// Exact minimization along `target - alpha`; returns `(t, F(alpha + t d))`.
    fn direction_search(&self, target: &[f64]) -> (Vec<(usize, f64)>, f64, f64) {
        let d = self.design;
        let mut dir = Vec::new();
        for (c, &b) in target.iter().enumerate() {
            let step = b - self.coef(c);
            if step != 0.0 {
                dir.push((c, step));
            }
        }
        let mut slope = vec![0.0; d.m];
        for &(c, step) in &dir {
            for (s, a) in slope.iter_mut().zip(d.col(c)) {
                *s += step * a;
            }
        }
        let t = minimize_piecewise_linear(
            self.margins.iter().zip(&slope).map(|(m, s)| (1.0 - m, *s)),
            dir.iter().map(|&(c, step)| (self.coef(c), step, d.weight[c])),
            self.inv_m,
        );
        let hinge: f64 = self.margins.iter().zip(&slope).map(|(m, s)| (1.0 - (m + t * s)).max(0.0)).sum();
        let moved: f64 = dir
            .iter()
            .map(|&(c, step)| {
                let a = self.coef(c);
                d.weight[c] * ((a + t * step).abs() - a.abs())
            })
            .sum();
        (dir, t, hinge * self.inv_m + self.penalty + moved)
    }

    fn apply_direction(&mut self, dir: &[(usize, f64)], t: f64) {
        for &(c, step) in dir {
            let new = self.coef(c) + t * step;
            if new == 0.0 {
                self.alpha.remove(&c);
            } else {
                self.alpha.insert(c, new);
            }
        }
        self.rebuild();
    }

    fn into_coefs(self) -> CoefMatrix {
        let (p, m) = (self.design.p, self.design.m);
        let mut out = CoefMatrix::zeros(p, m);
        for (c, a) in self.alpha {
            out.alpha[[c / m, c % m]] = a;
        }
        out
    }
}

/// Trains from `alpha = 0`. The returned trace objective never increases.
pub fn train_cd(
    stack: &GramStack,
    labels: &[f64],
    penalties: &PenaltyVector,
    config: &CDConfig,
) -> Result<(CoefMatrix, CDTrace)> {
    config.validate()?;
    check_shapes(None, stack, labels, Some(penalties))?;
    let design = SignedDesign::new(stack, labels, penalties)?;
    let (p, m) = (design.p, design.m);
    let max_steps = config.max_steps.unwrap_or(100 * p * m);
    let window = p * m;

    let mut eng = Descent::new(&design);
    let mut steps: Vec<TraceStep> = Vec::new();
    let initial = eng.objective();
    let mut lower_bound: f64 = 0.0;
    let mut escapes = 0;
    let reason;

    loop {
        let f = eng.objective();
        if !f.is_finite() {
            return Err(Error::Numeric(format!("objective became {f} after {} steps", steps.len())));
        }
        if steps.len() >= max_steps {
            reason = StopReason::MaxSteps;
            break;
        }
        let (c, _, score) = eng.steepest();
        let mut stalled = score < config.tol;
        if !stalled {
            let eta = eng.line_search(c);
            let f_new = if eta != 0.0 { eng.coordinate_value(c, eta) } else { f };
            if f_new < f {
                eng.apply_coordinate(c, eta);
                let objective = eng.objective();
                steps.push(TraceStep {
                    step: steps.len() + 1,
                    coord: Some(design.split(c)),
                    eta,
                    objective,
                });
                if steps.len() % config.log_every == 0 {
                    debug!("step {}: objective {objective:.10e}, nnz {}", steps.len(), eng.alpha.len());
                }
                let n = steps.len();
                if n > window {
                    let past = steps[n - 1 - window].objective;
                    stalled = past - objective < config.objective_tol * past.abs();
                }
            } else {
                stalled = true;
            }
        }
        if !stalled {
            continue;
        }

        let f = eng.objective();
        lower_bound = lower_bound.max(eng.subgradient_bound()).max(eng.slackness_bound());
        if f - lower_bound <= config.gap_tol * f.max(1.0) {
            reason = StopReason::Certified;
            break;
        }
        if escapes >= config.max_escapes {
            reason = StopReason::EscapeBudget;
            break;
        }
        escapes += 1;
        let res = escape::refine(&design, &eng.dense(), f, config.gap_tol);
        lower_bound = lower_bound.max(res.lower_bound);
        let (dir, t, f_new) = eng.direction_search(&res.beta);
        debug!(
            "escape {escapes}: {} rounds, F {f:.10e} -> {f_new:.10e}, bound {lower_bound:.10e}",
            res.rounds
        );
        if t != 0.0 && f_new < f - 1e-13 * f.max(1.0) {
            eng.apply_direction(&dir, t);
            let objective = eng.objective().min(f);
            steps.push(TraceStep {
                step: steps.len() + 1,
                coord: None,
                eta: t,
                objective,
            });
        } else if f - lower_bound > config.gap_tol * f.max(1.0) {
            reason = StopReason::Stuck;
            break;
        }
        let f = eng.objective();
        if f - lower_bound <= config.gap_tol * f.max(1.0) {
            reason = StopReason::Certified;
            break;
        }
    }

    let final_objective = eng.objective();
    info!(
        "coordinate descent stopped ({reason:?}) after {} steps: objective {final_objective:.10e}, bound {lower_bound:.10e}, nnz {}",
        steps.len(),
        eng.alpha.len()
    );
    let trace = CDTrace {
        steps_taken: steps.len(),
        steps,
        initial_objective: initial,
        final_objective,
        lower_bound,
        escapes,
        converged: reason == StopReason::Certified,
        stop_reason: reason,
    };
    Ok((eng.into_coefs(), trace))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Dataset;
    use crate::kernels::{build_stack, KernelSpec};
    use crate::objective::{margins, objective_value};
    use crate::solver_lp::{train_lp, LPStatus};
    use ndarray::{array, Array2};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn toy() -> (GramStack, Vec<f64>) {
        (GramStack::from_grams(vec![KernelSpec::Linear], vec![array![[1.0]]]).unwrap(), vec![1.0])
    }

    #[test]
    fn line_search_examples() {
        let (st, y) = toy();
        let a = CoefMatrix::zeros(1, 1);
        let s = MarginState::zeros(1);
        let half = PenaltyVector::constant(0.5, 1).unwrap();
        let eta = line_search_exact(&a, &s, &st, &y, &half, 0, 0);
        assert_eq!(eta, 1.0);
        let moved = CoefMatrix { alpha: array![[eta]] };
        assert_eq!(objective_value(&moved, &st, &y, &half).unwrap(), 0.5);
        let two = PenaltyVector::constant(2.0, 1).unwrap();
        assert_eq!(line_search_exact(&a, &s, &st, &y, &two, 0, 0), 0.0);
        let zero = PenaltyVector::constant(0.0, 1).unwrap();
        assert_eq!(line_search_exact(&a, &s, &st, &y, &zero, 0, 0), 1.0);
    }

    #[test]
    fn train_examples() {
        let (st, y) = toy();
        let (a, tr) = train_cd(&st, &y, &PenaltyVector::constant(0.5, 1).unwrap(), &CDConfig::default()).unwrap();
        assert_eq!(a.alpha[[0, 0]], 1.0);
        assert_eq!(tr.final_objective, 0.5);
        assert_eq!(tr.steps_taken, 1);
        assert!(tr.converged);

        let (a, tr) = train_cd(&st, &y, &PenaltyVector::constant(3.0, 1).unwrap(), &CDConfig::default()).unwrap();
        assert_eq!(a.nnz(), 0);
        assert_eq!(tr.steps_taken, 0);
        assert_eq!(tr.final_objective, 1.0);
        assert!(tr.converged);
    }

    fn instance(seed: u64, m: usize) -> (GramStack, Vec<f64>, PenaltyVector) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = Array2::from_shape_fn((m, 3), |_| rng.random_range(-1.0..1.0));
        let y: Vec<f64> = (0..m).map(|i| if x[[i, 0]] + 0.3 * x[[i, 1]] + rng.random_range(-0.3..0.3) > 0.0 { 1.0 } else { -1.0 }).collect();
        let data = Dataset::new(x, y.clone()).unwrap();
        let st = build_stack(&[KernelSpec::polynomial(2).unwrap(), KernelSpec::gaussian(1.0).unwrap()], &data).unwrap();
        let pen = PenaltyVector::new(vec![0.2, 0.5], rng.random_range(0.001..0.1), 0.001).unwrap();
        (st, y, pen)
    }

    #[test]
    fn agrees_with_lp_and_descends() {
        for seed in 0..5 {
            let (st, y, pen) = instance(seed, 30);
            let (a, tr) = train_cd(&st, &y, &pen, &CDConfig::default()).unwrap();
            let (_, sol) = train_lp(&st, &y, &pen, 1_000_000).unwrap();
            assert_eq!(sol.status, LPStatus::Optimal);
            assert!(
                (tr.final_objective - sol.objective).abs() <= 1e-4 * sol.objective.max(1.0),
                "seed {seed}: cd {} lp {}",
                tr.final_objective,
                sol.objective
            );
            let f = objective_value(&a, &st, &y, &pen).unwrap();
            assert!((f - tr.final_objective).abs() < 1e-9);
            let mut prev = tr.initial_objective;
            for s in &tr.steps {
                assert!(s.objective <= prev + 1e-12);
                prev = s.objective;
            }
        }
    }

    #[test]
    fn deterministic_and_sparse() {
        let (st, y, pen) = instance(9, 25);
        let (a1, t1) = train_cd(&st, &y, &pen, &CDConfig::default()).unwrap();
        let (a2, t2) = train_cd(&st, &y, &pen, &CDConfig::default()).unwrap();
        assert_eq!(a1, a2);
        assert_eq!(t1, t2);
        // only coordinates named in the trace (or moved by a direction step) can be nonzero
        if t1.steps.iter().all(|s| s.coord.is_some()) {
            for k in 0..2 {
                for j in 0..25 {
                    if a1.alpha[[k, j]] != 0.0 {
                        assert!(t1.steps.iter().any(|s| s.coord == Some((k, j))));
                    }
                }
            }
        }
        let state = margins(&a1, &st, &y).unwrap();
        assert!((state.hinge() + a1.l1_weighted(&pen) - t1.final_objective).abs() < 1e-9);
    }

    #[test]
    fn trace_csv() {
        let (st, y) = toy();
        let (_, tr) = train_cd(&st, &y, &PenaltyVector::constant(0.5, 1).unwrap(), &CDConfig::default()).unwrap();
        let mut buf = Vec::new();
        tr.write_csv(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "step,k,j,eta,objective\n1,0,0,1e0,5e-1\n");
    }
}
