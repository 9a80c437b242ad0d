//! Cross-validated model selection and result tables.
//!
//! Round `i` of an `F`-fold run tests on fold `i`, validates on fold `i + 1 mod F`
//! and trains on the remaining folds. Every grid point is trained once per round;
//! the point with the lowest mean validation error is selected and its test
//! errors are reported.

use std::collections::BTreeMap;
use std::fmt;
use std::fmt::Write as _;
use std::io::Write;
use std::str::FromStr;
use std::time::Instant;

use log::{info, warn};

use crate::complexity::{build_penalties, local_penalties, PenaltyMode, PenaltyVector, Radius, SpectrumCache};
use crate::data::{make_folds, split_cv, Dataset, Standardizer};
use crate::error::{Error, Result};
use crate::kernels::{build_stack, KernelSpec};
use crate::model::{SparseModel, DEFAULT_PRUNE_TOL};
use crate::objective::CoefMatrix;
use crate::solver_cd::{train_cd, CDConfig};
use crate::solver_lp::{default_max_pivots, train_lp, LPStatus};

/// Largest LP (in variables) the internal simplex is asked to solve.
pub const LP_VAR_CAP: usize = 2200;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolverKind {
    Cd,
    Lp,
}

impl fmt::Display for SolverKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SolverKind::Cd => "cd",
            SolverKind::Lp => "lp",
        })
    }
}

impl FromStr for SolverKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cd" => Ok(SolverKind::Cd),
            "lp" => Ok(SolverKind::Lp),
            other => Err(Error::Parameter(format!("unknown solver {other:?} (expected cd or lp)"))),
        }
    }
}

/// `{10^0, 10^-1, ..., 10^-6}`.
pub fn default_decades() -> Vec<f64> {
    (0..=6).map(|i| 10f64.powi(-i)).collect()
}

#[derive(Debug, Clone)]
pub struct GridSpec {
    pub lambdas: Vec<f64>,
    pub betas: Vec<f64>,
    pub mode: PenaltyMode,
    pub solver: SolverKind,
    pub kernels: Vec<KernelSpec>,
    /// Radii tried with local penalties; overrides the radius inside `mode`.
    pub local_s: Option<Vec<f64>>,
    pub seed: u64,
    pub cd: CDConfig,
    /// Simplex pivot budget; `None` picks one from the problem size.
    pub max_pivots: Option<usize>,
    /// Record wall-clock training times in the report.
    pub timings: bool,
}

impl GridSpec {
    pub fn new(kernels: Vec<KernelSpec>, mode: PenaltyMode) -> Self {
        Self {
            lambdas: default_decades(),
            betas: default_decades(),
            mode,
            solver: SolverKind::Cd,
            kernels,
            local_s: None,
            seed: 42,
            cd: CDConfig::default(),
            max_pivots: None,
            timings: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.lambdas.is_empty() || self.betas.is_empty() || self.kernels.is_empty() {
            return Err(Error::Config("lambda, beta and kernel grids must be non-empty".into()));
        }
        if self.lambdas.iter().chain(&self.betas).any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::Config("lambda and beta values must be finite and >= 0".into()));
        }
        if let Some(s) = &self.local_s {
            if !matches!(self.mode, PenaltyMode::Local(_)) {
                return Err(Error::Config("a radius grid needs local penalties".into()));
            }
            if s.is_empty() || s.iter().any(|v| !(*v >= 0.0)) {
                return Err(Error::Config("radius grid must be non-empty and >= 0".into()));
            }
        }
        self.cd.validate()
    }

    /// Radii of the grid, `None` when the mode has no radius.
    fn radii(&self) -> Vec<Option<Radius>> {
        match (self.mode, &self.local_s) {
            (PenaltyMode::Local(_), Some(s)) => s.iter().map(|&v| Some(Radius::Finite(v))).collect(),
            (PenaltyMode::Local(r), None) => vec![Some(r)],
            _ => vec![None],
        }
    }

    /// Grid points ordered by `(lambda, beta, s)` ascending, which is also the
    /// tie-breaking order of model selection.
    pub fn points(&self) -> Vec<GridPoint> {
        let mut lambdas = self.lambdas.clone();
        let mut betas = self.betas.clone();
        lambdas.sort_by(f64::total_cmp);
        lambdas.dedup();
        betas.sort_by(f64::total_cmp);
        betas.dedup();
        let mut radii = self.radii();
        radii.sort_by(|a, b| radius_key(*a).total_cmp(&radius_key(*b)));
        let mut out = Vec::new();
        for &lambda in &lambdas {
            for &beta in &betas {
                for &s in &radii {
                    out.push(GridPoint { lambda, beta, s });
                }
            }
        }
        out
    }
}

fn radius_key(r: Option<Radius>) -> f64 {
    match r {
        None => 0.0,
        Some(Radius::Finite(v)) => v,
        Some(Radius::Infinite) => f64::INFINITY,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridPoint {
    pub lambda: f64,
    pub beta: f64,
    pub s: Option<Radius>,
}

/// Outcome of one training run on a fold.
#[derive(Debug, Clone)]
pub struct Trained {
    pub model: SparseModel,
    pub objective: f64,
    /// Solver reached its own optimality test.
    pub converged: bool,
    pub seconds: f64,
}

/// Trains on an already standardized sample.
pub fn train_one(
    train: &Dataset,
    standardizer: &Standardizer,
    kernels: &[KernelSpec],
    penalties: &PenaltyVector,
    solver: SolverKind,
    cd: &CDConfig,
    max_pivots: Option<usize>,
) -> Result<Trained> {
    let stack = build_stack(kernels, train)?;
    train_on_stack(&stack, train, standardizer, penalties, solver, cd, max_pivots)
}

/// Like [`train_one`] with the Gram stack of `train` already built.
pub fn train_on_stack(
    stack: &crate::kernels::GramStack,
    train: &Dataset,
    standardizer: &Standardizer,
    penalties: &PenaltyVector,
    solver: SolverKind,
    cd: &CDConfig,
    max_pivots: Option<usize>,
) -> Result<Trained> {
    let start = Instant::now();
    let (alpha, objective, converged): (CoefMatrix, f64, bool) = match solver {
        SolverKind::Cd => {
            let (alpha, trace) = train_cd(stack, &train.labels, penalties, cd)?;
            (alpha, trace.final_objective, trace.converged)
        }
        SolverKind::Lp => {
            let (p, m) = (stack.num_kernels(), stack.num_points());
            let pivots = max_pivots.unwrap_or_else(|| default_max_pivots(p, m));
            let (alpha, sol) = train_lp(stack, &train.labels, penalties, pivots)?;
            (alpha, sol.objective, sol.status == LPStatus::Optimal)
        }
    };
    let seconds = start.elapsed().as_secs_f64();
    let model = SparseModel::from_coefs(&alpha, train, &stack.specs, standardizer, DEFAULT_PRUNE_TOL)?;
    Ok(Trained {
        model,
        objective,
        converged,
        seconds,
    })
}

/// Percentage of points whose predicted label differs from the true one.
pub fn error_pct(model: &SparseModel, data: &Dataset) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::Size("cannot evaluate on an empty set".into()));
    }
    let labels = model.predict_label(data)?;
    let wrong = labels.iter().zip(&data.labels).filter(|(a, b)| a != b).count();
    Ok(100.0 * wrong as f64 / data.len() as f64)
}

/// Reported result of one round at the selected grid point.
#[derive(Debug, Clone, PartialEq)]
pub struct FoldRecord {
    pub fold: usize,
    pub lambda: f64,
    pub beta: f64,
    pub s: Option<Radius>,
    pub test_error_pct: f64,
    pub num_svs: usize,
    pub train_seconds: Option<f64>,
}

/// Index sets actually used in one round.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitAudit {
    pub round: usize,
    pub test_fold: usize,
    pub validation_fold: usize,
    pub train_folds: Vec<usize>,
    pub train: Vec<usize>,
    pub validation: Vec<usize>,
    pub test: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CVReport {
    pub dataset: String,
    pub method: String,
    pub selected: GridPoint,
    /// Mean validation error of every valid grid point, in grid order.
    pub validation: Vec<(GridPoint, f64)>,
    pub folds: Vec<FoldRecord>,
    pub audit: Vec<SplitAudit>,
}

/// Mean and sample standard deviation (zero for a single value).
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

impl CVReport {
    pub fn error_stats(&self) -> (f64, f64) {
        mean_std(&self.folds.iter().map(|r| r.test_error_pct).collect::<Vec<_>>())
    }

    pub fn sv_stats(&self) -> (f64, f64) {
        mean_std(&self.folds.iter().map(|r| r.num_svs as f64).collect::<Vec<_>>())
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record([
            "dataset",
            "method",
            "fold",
            "lambda",
            "beta",
            "s",
            "test_error_pct",
            "num_svs",
            "train_seconds",
        ])?;
        for r in &self.folds {
            w.write_record([
                self.dataset.clone(),
                self.method.clone(),
                r.fold.to_string(),
                r.lambda.to_string(),
                r.beta.to_string(),
                r.s.map(|s| s.to_string()).unwrap_or_default(),
                r.test_error_pct.to_string(),
                r.num_svs.to_string(),
                r.train_seconds.map(|t| format!("{t:.3}")).unwrap_or_default(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    /// One line per round naming the folds and the indices in each part.
    pub fn write_audit<W: Write>(&self, mut out: W) -> Result<()> {
        let list = |v: &[usize]| v.iter().map(|i| i.to_string()).collect::<Vec<_>>().join(" ");
        for a in &self.audit {
            writeln!(
                out,
                "round={} test_fold={} validation_fold={} train_folds={} | test: {} | validation: {} | train: {}",
                a.round,
                a.test_fold,
                a.validation_fold,
                list(&a.train_folds),
                list(&a.test),
                list(&a.validation),
                list(&a.train)
            )?;
        }
        Ok(())
    }
}

/// Reads report CSVs written by [`CVReport::write_csv`], one report per
/// `(dataset, method)` pair in order of first appearance. Validation scores
/// and split audits are not part of the file and come back empty.
pub fn read_report_csv(text: &str) -> Result<Vec<CVReport>> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
    let header = reader.headers()?.clone();
    let expected = ["dataset", "method", "fold", "lambda", "beta", "s", "test_error_pct", "num_svs", "train_seconds"];
    if header.iter().ne(expected) {
        return Err(Error::Format(format!("unexpected report header {:?}", header.iter().collect::<Vec<_>>())));
    }
    let mut reports: Vec<CVReport> = Vec::new();
    for (n, rec) in reader.records().enumerate() {
        let rec = rec?;
        let bad = |what: &str| Error::Format(format!("report row {}: bad {what} {:?}", n + 1, rec.iter().collect::<Vec<_>>()));
        let num = |i: usize, what: &str| -> Result<f64> { rec[i].parse().map_err(|_| bad(what)) };
        let s = if rec[5].is_empty() { None } else { Some(rec[5].parse::<Radius>()?) };
        let record = FoldRecord {
            fold: rec[2].parse().map_err(|_| bad("fold"))?,
            lambda: num(3, "lambda")?,
            beta: num(4, "beta")?,
            s,
            test_error_pct: num(6, "test error")?,
            num_svs: rec[7].parse().map_err(|_| bad("support vector count"))?,
            train_seconds: if rec[8].is_empty() { None } else { Some(num(8, "training time")?) },
        };
        match reports.iter_mut().find(|r| r.dataset == rec[0] && r.method == rec[1]) {
            Some(r) => r.folds.push(record),
            None => reports.push(CVReport {
                dataset: rec[0].to_string(),
                method: rec[1].to_string(),
                selected: GridPoint {
                    lambda: record.lambda,
                    beta: record.beta,
                    s: record.s,
                },
                validation: Vec::new(),
                folds: vec![record],
                audit: Vec::new(),
            }),
        }
    }
    Ok(reports)
}

/// Per-family complexities for one radius, computed once per round.
fn complexities(
    stack: &crate::kernels::GramStack,
    mode: PenaltyMode,
    s: Option<Radius>,
    cache: &mut Option<SpectrumCache>,
) -> Result<Vec<f64>> {
    match (mode, s) {
        (PenaltyMode::Local(_), Some(r)) => {
            if cache.is_none() {
                if let Some(bad) = stack.specs.iter().find(|s| !s.claims_psd()) {
                    return Err(Error::Config(format!("local penalties need PSD kernels, got {bad}")));
                }
                *cache = Some(SpectrumCache::build(stack, crate::complexity::DEFAULT_EIGEN_CAP)?);
            }
            local_penalties(cache.as_ref().expect("cache built above"), r)
        }
        _ => Ok(build_penalties(stack, mode, 0.0, 0.0)?.r),
    }
}

/// Per-round result of one grid point: validation error, test error, SV count, seconds.
type Cell = Option<(f64, f64, usize, f64)>;

pub fn run_cv(dataset: &Dataset, name: &str, method: &str, grid: &GridSpec, num_folds: usize) -> Result<CVReport> {
    grid.validate()?;
    let folds = make_folds(dataset.len(), num_folds, grid.seed)?;
    let points = grid.points();
    let radii = grid.radii();
    let mut cells: Vec<Vec<Cell>> = vec![Vec::with_capacity(num_folds); points.len()];
    let mut audit = Vec::with_capacity(num_folds);

    for round in 0..num_folds {
        let split = split_cv(&folds, round)?;
        let val_fold = (round + 1) % num_folds;
        audit.push(SplitAudit {
            round,
            test_fold: round,
            validation_fold: val_fold,
            train_folds: (0..num_folds).filter(|&f| f != round && f != val_fold).collect(),
            train: split.train.clone(),
            validation: split.validation.clone(),
            test: split.test.clone(),
        });
        let raw_train = dataset.subset(&split.train);
        let standardizer = Standardizer::fit(&raw_train);
        let train = standardizer.apply(&raw_train)?;
        let validation = dataset.subset(&split.validation);
        let test = dataset.subset(&split.test);
        let stack = build_stack(&grid.kernels, &train)?;
        let (p, m) = (stack.num_kernels(), stack.num_points());
        if grid.solver == SolverKind::Lp && 2 * p * m + m > LP_VAR_CAP {
            return Err(Error::Config(format!(
                "LP with {} variables exceeds the internal solver cap of {LP_VAR_CAP}; use the cd solver",
                2 * p * m + m
            )));
        }
        let mut cache = None;
        let mut rs: BTreeMap<usize, Result<Vec<f64>>> = BTreeMap::new();
        for (t, &s) in radii.iter().enumerate() {
            rs.insert(t, complexities(&stack, grid.mode, s, &mut cache));
        }

        for (g, pt) in points.iter().enumerate() {
            let t = radii.iter().position(|r| *r == pt.s).expect("point radius is in the grid");
            let cell = rs[&t]
                .as_ref()
                .map_err(|e| Error::Harness(e.to_string()))
                .and_then(|r| PenaltyVector::new(r.clone(), pt.lambda, pt.beta))
                .and_then(|pen| train_on_stack(&stack, &train, &standardizer, &pen, grid.solver, &grid.cd, grid.max_pivots))
                .and_then(|tr| {
                    if grid.solver == SolverKind::Lp && !tr.converged {
                        return Err(Error::Harness("simplex did not reach optimality".into()));
                    }
                    if !tr.converged {
                        warn!("round {round}, {pt:?}: coordinate descent stopped before certifying optimality");
                    }
                    let v = error_pct(&tr.model, &validation)?;
                    let e = error_pct(&tr.model, &test)?;
                    Ok((v, e, tr.model.support_count().1, tr.seconds))
                });
            match cell {
                Ok(c) => cells[g].push(Some(c)),
                Err(e) => {
                    warn!("round {round}, lambda {} beta {} s {:?}: {e}; grid point excluded", pt.lambda, pt.beta, pt.s);
                    cells[g].push(None);
                }
            }
        }
        info!("{name}: round {round} of {num_folds} done");
    }

    let mut validation = Vec::new();
    let mut best: Option<(usize, f64)> = None;
    for (g, pt) in points.iter().enumerate() {
        let Some(vals) = cells[g].iter().map(|c| c.map(|c| c.0)).collect::<Option<Vec<f64>>>() else {
            continue;
        };
        let mean = vals.iter().sum::<f64>() / vals.len() as f64;
        validation.push((*pt, mean));
        // Points are in tie-break order, so only a strictly lower mean replaces the best.
        if best.is_none_or(|(_, b)| mean < b) {
            best = Some((g, mean));
        }
    }
    let Some((g, _)) = best else {
        return Err(Error::Harness("every grid point failed".into()));
    };
    let selected = points[g];
    let folds_out = cells[g]
        .iter()
        .enumerate()
        .map(|(fold, c)| {
            let (_, e, svs, secs) = c.expect("selected point is valid on every round");
            FoldRecord {
                fold,
                lambda: selected.lambda,
                beta: selected.beta,
                s: selected.s,
                test_error_pct: e,
                num_svs: svs,
                train_seconds: grid.timings.then_some(secs),
            }
        })
        .collect();
    Ok(CVReport {
        dataset: name.to_string(),
        method: method.to_string(),
        selected,
        validation,
        folds: folds_out,
        audit,
    })
}

/// Summary row imported from another tool.
#[derive(Debug, Clone, PartialEq)]
pub struct BaselineRow {
    pub dataset: String,
    pub error_mean: f64,
    pub error_std: f64,
    pub svs_mean: f64,
    pub svs_std: f64,
}

/// Reads `dataset,error_mean,error_std,svs_mean,svs_std` rows; a leading
/// header row starting with `dataset` is skipped.
pub fn parse_baseline_csv(text: &str) -> Result<Vec<BaselineRow>> {
    let mut rows: Vec<BaselineRow> = Vec::new();
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(text.as_bytes());
    for (n, rec) in reader.records().enumerate() {
        let rec = rec?;
        if rec.iter().all(|f| f.is_empty()) || (n == 0 && rec.get(0) == Some("dataset")) {
            continue;
        }
        if rec.len() != 5 {
            return Err(Error::Format(format!("baseline row {} has {} fields, expected 5", n + 1, rec.len())));
        }
        let num = |i: usize| -> Result<f64> {
            rec[i]
                .parse()
                .map_err(|_| Error::Format(format!("baseline row {}: bad number {:?}", n + 1, &rec[i])))
        };
        let row = BaselineRow {
            dataset: rec[0].to_string(),
            error_mean: num(1)?,
            error_std: num(2)?,
            svs_mean: num(3)?,
            svs_std: num(4)?,
        };
        if rows.iter().any(|r| r.dataset == row.dataset) {
            return Err(Error::Merge(format!("dataset {:?} appears twice in the baseline file", row.dataset)));
        }
        rows.push(row);
    }
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchmarkTable {
    pub text: String,
    pub csv: String,
}

/// Datasets as rows and methods as columns, once for test error and once for
/// support vector counts, each cell `mean (std)`. Baseline rows are merged by
/// dataset name into an extra column.
pub fn benchmark_table(reports: &[CVReport], baseline: Option<(&str, &[BaselineRow])>) -> Result<BenchmarkTable> {
    let mut datasets: Vec<String> = Vec::new();
    let mut methods: Vec<String> = Vec::new();
    let mut cells: BTreeMap<(String, String), ((f64, f64), (f64, f64))> = BTreeMap::new();
    let mut add = |d: &str, m: &str, err: (f64, f64), sv: (f64, f64)| -> Result<()> {
        if cells.insert((d.to_string(), m.to_string()), (err, sv)).is_some() {
            return Err(Error::Merge(format!("dataset {d:?} has two results for {m:?}")));
        }
        if !datasets.iter().any(|x| x == d) {
            datasets.push(d.to_string());
        }
        if !methods.iter().any(|x| x == m) {
            methods.push(m.to_string());
        }
        Ok(())
    };
    for r in reports {
        add(&r.dataset, &r.method, r.error_stats(), r.sv_stats())?;
    }
    if let Some((name, rows)) = baseline {
        for b in rows {
            add(&b.dataset, name, (b.error_mean, b.error_std), (b.svs_mean, b.svs_std))?;
        }
    }

    let cell = |(m, s): (f64, f64), digits: usize| format!("{m:.digits$} ({s:.digits$})");
    let mut text = String::new();
    for (title, pick, digits) in [("Error (%)", 0, 2), ("Number of support vectors", 1, 1)] {
        let mut rows = vec![std::iter::once("dataset".to_string()).chain(methods.iter().cloned()).collect::<Vec<_>>()];
        for d in &datasets {
            let mut row = vec![d.clone()];
            for m in &methods {
                row.push(match cells.get(&(d.clone(), m.clone())) {
                    Some(&(e, s)) => cell(if pick == 0 { e } else { s }, digits),
                    None => "-".into(),
                });
            }
            rows.push(row);
        }
        let widths: Vec<usize> = (0..rows[0].len())
            .map(|c| rows.iter().map(|r| r[c].chars().count()).max().unwrap_or(0))
            .collect();
        if !text.is_empty() {
            text.push('\n');
        }
        writeln!(text, "{title}").expect("writing to a string");
        for r in rows {
            let line: Vec<String> = r.iter().zip(&widths).map(|(v, w)| format!("{v:<w$}")).collect();
            writeln!(text, "{}", line.join("  ").trim_end()).expect("writing to a string");
        }
    }

    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["dataset", "method", "error_mean", "error_std", "svs_mean", "svs_std"])?;
    for d in &datasets {
        for m in &methods {
            if let Some(&((em, es), (sm, ss))) = cells.get(&(d.clone(), m.clone())) {
                w.write_record([d.clone(), m.clone(), em.to_string(), es.to_string(), sm.to_string(), ss.to_string()])?;
            }
        }
    }
    let csv = String::from_utf8(w.into_inner().map_err(|e| Error::Io(e.into_error()))?)
        .expect("csv output is UTF-8");
    Ok(BenchmarkTable { text, csv })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Two Gaussian blobs separated along the first axis.
    fn blobs(m: usize, seed: u64) -> Dataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let y: Vec<f64> = (0..m).map(|i| if i % 2 == 0 { 1.0 } else { -1.0 }).collect();
        let x = Array2::from_shape_fn((m, 2), |(i, c)| {
            let centre = if c == 0 { 3.0 * y[i] } else { 0.0 };
            centre + rng.random_range(-1.0..1.0)
        });
        Dataset::new(x, y).unwrap()
    }

    fn small_grid() -> GridSpec {
        let mut g = GridSpec::new(vec![KernelSpec::Linear, KernelSpec::gaussian(0.5).unwrap()], PenaltyMode::Trace);
        g.lambdas = vec![0.01, 0.1];
        g.betas = vec![0.001, 0.1];
        g
    }

    #[test]
    fn grid_order_is_tie_break_order() {
        let mut g = small_grid();
        g.mode = PenaltyMode::Local(Radius::Infinite);
        g.local_s = Some(vec![0.5, 0.1]);
        g.lambdas = vec![0.1, 0.01];
        let pts = g.points();
        assert_eq!(pts.len(), 8);
        assert_eq!(pts[0], GridPoint { lambda: 0.01, beta: 0.001, s: Some(Radius::Finite(0.1)) });
        assert_eq!(pts[1].s, Some(Radius::Finite(0.5)));
        assert_eq!(pts[2].beta, 0.1);
        assert_eq!(pts[4].lambda, 0.1);
        g.mode = PenaltyMode::Trace;
        assert!(g.validate().is_err());
    }

    #[test]
    fn separable_blobs_are_learned() {
        let data = blobs(100, 1);
        let rep = run_cv(&data, "blobs", "trace", &small_grid(), 5).unwrap();
        assert_eq!(rep.folds.len(), 5);
        assert!(rep.error_stats().0 <= 2.0, "{:?}", rep.folds);
        for (i, a) in rep.audit.iter().enumerate() {
            assert_eq!((a.test_fold, a.validation_fold), (i, (i + 1) % 5));
            assert_eq!(a.train.len() + a.validation.len() + a.test.len(), 100);
        }
    }

    #[test]
    fn single_point_matches_direct_training() {
        let data = blobs(60, 2);
        let mut g = small_grid();
        g.lambdas = vec![0.05];
        g.betas = vec![0.01];
        let rep = run_cv(&data, "blobs", "trace", &g, 4).unwrap();
        let folds = make_folds(60, 4, g.seed).unwrap();
        for r in 0..4 {
            let split = split_cv(&folds, r).unwrap();
            let raw = data.subset(&split.train);
            let st = Standardizer::fit(&raw);
            let train = st.apply(&raw).unwrap();
            let stack = build_stack(&g.kernels, &train).unwrap();
            let pen = build_penalties(&stack, PenaltyMode::Trace, 0.05, 0.01).unwrap();
            let tr = train_one(&train, &st, &g.kernels, &pen, SolverKind::Cd, &g.cd, None).unwrap();
            let e = error_pct(&tr.model, &data.subset(&split.test)).unwrap();
            assert_eq!(rep.folds[r].test_error_pct, e);
            assert_eq!(rep.folds[r].num_svs, tr.model.support_count().1);
        }
    }

    #[test]
    fn csv_is_reproducible() {
        let data = blobs(40, 3);
        let mut a = Vec::new();
        let mut b = Vec::new();
        run_cv(&data, "blobs", "trace", &small_grid(), 5).unwrap().write_csv(&mut a).unwrap();
        run_cv(&data, "blobs", "trace", &small_grid(), 5).unwrap().write_csv(&mut b).unwrap();
        assert_eq!(a, b);
        let text = String::from_utf8(a).unwrap();
        assert!(text.starts_with("dataset,method,fold,lambda,beta,s,test_error_pct,num_svs,train_seconds\n"));
        assert_eq!(text.lines().count(), 6);
    }

    #[test]
    fn report_csv_reads_back() {
        let data = blobs(40, 5);
        let mut g = small_grid();
        g.timings = true;
        let rep = run_cv(&data, "blobs", "trace", &g, 5).unwrap();
        let mut buf = Vec::new();
        rep.write_csv(&mut buf).unwrap();
        let back = read_report_csv(std::str::from_utf8(&buf).unwrap()).unwrap();
        assert_eq!(back.len(), 1);
        assert_eq!((back[0].dataset.as_str(), back[0].method.as_str()), ("blobs", "trace"));
        assert_eq!(back[0].error_stats(), rep.error_stats());
        assert_eq!(back[0].sv_stats(), rep.sv_stats());
        assert_eq!(back[0].selected, rep.selected);
        assert!(back[0].folds.iter().all(|f| f.train_seconds.is_some()));
        assert!(read_report_csv("dataset,fold\nx,1\n").is_err());
    }

    #[test]
    fn all_points_failing_is_an_error() {
        let data = blobs(30, 4);
        // Polynomial-dimension penalties reject the gaussian family.
        let mut g = small_grid();
        g.mode = PenaltyMode::PolyDim;
        assert!(matches!(run_cv(&data, "blobs", "x", &g, 3), Err(Error::Harness(_))));
    }

    #[test]
    fn mean_std_matches_hand_values() {
        assert_eq!(mean_std(&[2.0]), (2.0, 0.0));
        let (m, s) = mean_std(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(m, 2.5);
        assert!((s - (5.0f64 / 3.0).sqrt()).abs() < 1e-15);
    }

    fn report(dataset: &str, method: &str, errs: &[f64], svs: &[usize]) -> CVReport {
        let pt = GridPoint { lambda: 0.1, beta: 0.1, s: None };
        CVReport {
            dataset: dataset.into(),
            method: method.into(),
            selected: pt,
            validation: vec![],
            folds: errs
                .iter()
                .zip(svs)
                .enumerate()
                .map(|(fold, (&e, &n))| FoldRecord {
                    fold,
                    lambda: 0.1,
                    beta: 0.1,
                    s: None,
                    test_error_pct: e,
                    num_svs: n,
                    train_seconds: None,
                })
                .collect(),
            audit: vec![],
        }
    }

    #[test]
    fn table_layout_and_merge() {
        let reps = [report("iono", "trace", &[2.0, 4.0], &[30, 32]), report("iono", "local", &[3.0, 3.0], &[10, 12])];
        let t = benchmark_table(&reps, None).unwrap();
        let lines: Vec<&str> = t.text.lines().collect();
        assert_eq!(lines[0], "Error (%)");
        assert!(lines[1].starts_with("dataset") && lines[1].contains("trace") && lines[1].contains("local"));
        assert!(lines[2].contains("3.00 (1.41)") && lines[2].contains("3.00 (0.00)"));
        assert!(t.text.contains("Number of support vectors"));
        assert!(t.text.contains("31.0 (1.4)"));
        assert_eq!(t.csv.lines().count(), 3);

        let base = parse_baseline_csv("dataset,error_mean,error_std,svs_mean,svs_std\nionosphere,6.54,3.07,152.0,5.5\n").unwrap();
        let t = benchmark_table(&[report("ionosphere", "trace", &[4.0, 4.0], &[30, 30])], Some(("L2-SVM", &base))).unwrap();
        assert!(t.text.contains("L2-SVM"));
        assert!(t.text.contains("6.54 (3.07)"));
        assert!(t.text.contains("152.0 (5.5)"));

        let empty = parse_baseline_csv("").unwrap();
        let t = benchmark_table(&[report("ionosphere", "trace", &[4.0], &[30])], Some(("L2-SVM", &empty))).unwrap();
        assert!(!t.text.contains("L2-SVM"));

        assert!(matches!(benchmark_table(&[reps[0].clone(), reps[0].clone()], None), Err(Error::Merge(_))));
        assert!(matches!(
            parse_baseline_csv("a,1,1,1,1\na,2,2,2,2\n"),
            Err(Error::Merge(_))
        ));
        assert!(parse_baseline_csv("a,1,1\n").is_err());
    }
}
