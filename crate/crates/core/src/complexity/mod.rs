//! Per-family complexity estimates `r_k` and the penalty weights
//! `Lambda_k = lambda * r_k + beta` built from them.
//!
//! Four estimates are available:
//!
//! * trace: `kappa * sqrt(Tr K) / m`;
//! * polydim (polynomial kernels only): `12 kappa^2 sqrt(pi d / m)` with
//!   `d = C(N + k, k)` the feature-space dimension of a degree-`k` kernel;
//! * local: `sqrt((2/m) sum_j min(s, lambda_j))` over the Gram spectrum. At
//!   `s = inf` this is `sqrt(2 Tr K / m)`, which is *not* the trace bound: the two
//!   formulas differ by a factor `sqrt(2)` for normalized kernels and are kept
//!   as-is rather than reconciled;
//! * uniform: `r_k = 1`, which with `lambda = 0` is the plain norm-1 SVM.
//!
//! [`mc_rademacher`] estimates the empirical Rademacher complexity of
//! `{x -> +-K(x, x_j)}` directly and serves as a check on the bounds.

mod jacobi;

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::kernels::{GramStack, KernelSpec};

pub use jacobi::{check_symmetric, jacobi_eigen, SymmetricEigen, OFF_DIAGONAL_TOL, SYMMETRY_TOL};

/// Default largest matrix handed to the Jacobi solver.
pub const DEFAULT_EIGEN_CAP: usize = 2000;

/// Complexity estimates and the penalty weights derived from them.
#[derive(Debug, Clone, PartialEq)]
pub struct PenaltyVector {
    pub r: Vec<f64>,
    pub lambda: f64,
    pub beta: f64,
    pub effective: Vec<f64>,
}

impl PenaltyVector {
    pub fn new(r: Vec<f64>, lambda: f64, beta: f64) -> Result<Self> {
        if !(lambda >= 0.0 && lambda.is_finite() && beta >= 0.0 && beta.is_finite()) {
            return Err(Error::Parameter(format!(
                "lambda and beta must be finite and nonnegative, got {lambda}, {beta}"
            )));
        }
        if let Some(bad) = r.iter().find(|v| !(**v >= 0.0 && v.is_finite())) {
            return Err(Error::Parameter(format!("complexity estimate {bad} is not a finite nonnegative number")));
        }
        let effective: Vec<f64> = r.iter().map(|rk| lambda * rk + beta).collect();
        if let Some(bad) = effective.iter().find(|v| !v.is_finite()) {
            return Err(Error::Numeric(format!("penalty weight {bad} is not finite")));
        }
        Ok(Self {
            r,
            lambda,
            beta,
            effective,
        })
    }

    /// Same weight for every family, bypassing any complexity estimate.
    pub fn constant(weight: f64, p: usize) -> Result<Self> {
        Self::new(vec![1.0; p], 0.0, weight)
    }

    pub fn len(&self) -> usize {
        self.r.len()
    }

    pub fn is_empty(&self) -> bool {
        self.r.is_empty()
    }

    /// Writes the `family,spec,r_k,lambda,beta,Lambda_k` report.
    pub fn write_report<W: Write>(&self, specs: &[KernelSpec], out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["family", "spec", "r_k", "lambda", "beta", "Lambda_k"])?;
        for (k, spec) in specs.iter().enumerate() {
            w.write_record([
                k.to_string(),
                spec.to_string(),
                format!("{:e}", self.r[k]),
                format!("{:e}", self.lambda),
                format!("{:e}", self.beta),
                format!("{:e}", self.effective[k]),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Local-complexity radius: a finite nonnegative value or infinity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Radius {
    Finite(f64),
    Infinite,
}

impl fmt::Display for Radius {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Radius::Finite(s) => write!(f, "{s}"),
            Radius::Infinite => write!(f, "inf"),
        }
    }
}

impl FromStr for Radius {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s.eq_ignore_ascii_case("inf") || s.eq_ignore_ascii_case("infinity") {
            return Ok(Radius::Infinite);
        }
        let v: f64 = s
            .parse()
            .map_err(|_| Error::Parameter(format!("bad local radius {s:?}")))?;
        if v.is_infinite() && v > 0.0 {
            Ok(Radius::Infinite)
        } else if v >= 0.0 {
            Ok(Radius::Finite(v))
        } else {
            Err(Error::Parameter(format!("local radius must be nonnegative, got {v}")))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PenaltyMode {
    Trace,
    PolyDim,
    Local(Radius),
    Uniform,
}

impl fmt::Display for PenaltyMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PenaltyMode::Trace => write!(f, "trace"),
            PenaltyMode::PolyDim => write!(f, "polydim"),
            PenaltyMode::Local(s) => write!(f, "local:{s}"),
            PenaltyMode::Uniform => write!(f, "uniform"),
        }
    }
}

impl FromStr for PenaltyMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "trace" => Ok(PenaltyMode::Trace),
            "polydim" => Ok(PenaltyMode::PolyDim),
            "uniform" => Ok(PenaltyMode::Uniform),
            other => match other.strip_prefix("local:") {
                Some(r) => Ok(PenaltyMode::Local(r.parse()?)),
                None => Err(Error::Parameter(format!("unknown penalty mode {other:?}"))),
            },
        }
    }
}

/// `kappa * sqrt(sum_i max(G_ii, 0)) / m`.
pub fn trace_penalty(gram: &Array2<f64>, kappa: f64) -> Result<f64> {
    let (m, c) = gram.dim();
    if m != c || m == 0 {
        return Err(Error::Dimension(format!("expected a non-empty square matrix, got {m}x{c}")));
    }
    if !(kappa >= 0.0) {
        return Err(Error::Parameter(format!("kappa must be nonnegative, got {kappa}")));
    }
    let trace: f64 = gram.diag().iter().map(|d| d.max(0.0)).sum();
    Ok(kappa * trace.sqrt() / m as f64)
}

/// `C(n + k, k)`, the number of monomials of degree at most `k` in `n` variables.
pub fn poly_dim(n: u64, k: u64) -> Result<u64> {
    if n < 1 || k < 1 {
        return Err(Error::Parameter(format!("poly_dim needs n, k >= 1, got {n}, {k}")));
    }
    let overflow = || {
        Error::Capacity(format!(
            "C({n}+{k}, {k}) exceeds the 64-bit range; use the trace penalty instead"
        ))
    };
    let mut c: u128 = 1;
    for i in 1..=k as u128 {
        // c = C(n + i - 1, i - 1) here, so c * (n + i) / i is exact.
        c = c.checked_mul(n as u128 + i).ok_or_else(overflow)? / i;
        if c > u64::MAX as u128 {
            return Err(overflow());
        }
    }
    Ok(c as u64)
}

/// `12 kappa^2 sqrt(pi C(n + k, k) / m)`.
pub fn polydim_penalty(kappa: f64, n: u64, k: u64, m: f64) -> Result<f64> {
    if !(m >= 1.0) {
        return Err(Error::Parameter(format!("sample size must be >= 1, got {m}")));
    }
    let d = poly_dim(n, k)? as f64;
    Ok(12.0 * kappa * kappa * (std::f64::consts::PI * d / m).sqrt())
}

/// Sorted spectrum of one Gram matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    /// Eigenvalues, non-increasing; negatives clamped to zero.
    pub values: Vec<f64>,
    /// Set when some eigenvalue was below `-1e-6 * max` before clamping.
    pub clamped_significant: bool,
}

/// Eigenvalues of every family's Gram matrix for one sample.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectrumCache {
    pub spectra: Vec<Spectrum>,
    pub source_m: usize,
}

impl SpectrumCache {
    pub fn build(stack: &GramStack, cap: usize) -> Result<Self> {
        let spectra = stack
            .grams
            .iter()
            .map(|g| eigenvalues_sym(g, cap))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            spectra,
            source_m: stack.num_points(),
        })
    }
}

/// All eigenvalues of a symmetric matrix via cyclic Jacobi, sorted descending.
pub fn eigenvalues_sym(gram: &Array2<f64>, cap: usize) -> Result<Spectrum> {
    if gram.nrows() > cap {
        return Err(Error::Capacity(format!(
            "{}x{} exceeds the eigen-solver cap of {cap}",
            gram.nrows(),
            gram.ncols()
        )));
    }
    let raw = jacobi_eigen(gram, false)?.values;
    let top = raw.first().copied().unwrap_or(0.0).max(0.0);
    let clamped_significant = raw.iter().any(|&l| l < -1e-6 * top);
    if clamped_significant {
        log::warn!("Gram spectrum has eigenvalues below -1e-6 * max; clamped to 0");
    }
    Ok(Spectrum {
        values: raw.into_iter().map(|l| l.max(0.0)).collect(),
        clamped_significant,
    })
}

/// `sqrt((2/m) sum_j min(s, lambda_j))`.
pub fn local_penalty(spectrum: &[f64], m: usize, s: Radius) -> Result<f64> {
    if m == 0 {
        return Err(Error::Parameter("sample size must be positive".into()));
    }
    let sum: f64 = match s {
        Radius::Infinite => spectrum.iter().map(|l| l.max(0.0)).sum(),
        Radius::Finite(s) if s >= 0.0 => spectrum.iter().map(|l| l.max(0.0).min(s)).sum(),
        Radius::Finite(s) => {
            return Err(Error::Parameter(format!("local radius must be nonnegative, got {s}")))
        }
    };
    Ok((2.0 * sum / m as f64).sqrt())
}

/// Monte-Carlo estimate of `(1/m) E_sigma max_j |sum_i sigma_i G_ij|` with its standard error.
pub fn mc_rademacher(gram: &Array2<f64>, num_samples: usize, seed: u64) -> Result<(f64, f64)> {
    let (m, c) = gram.dim();
    if m == 0 || c == 0 {
        return Err(Error::Dimension("empty Gram matrix".into()));
    }
    if num_samples < 2 {
        return Err(Error::Parameter("need at least two Rademacher draws".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut sums = vec![0.0; c];
    let mut draws = Vec::with_capacity(num_samples);
    for _ in 0..num_samples {
        sums.iter_mut().for_each(|s| *s = 0.0);
        for row in gram.rows() {
            let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
            for (s, g) in sums.iter_mut().zip(row.iter()) {
                *s += sign * g;
            }
        }
        let sup = sums.iter().fold(0.0f64, |a, s| a.max(s.abs()));
        draws.push(sup / m as f64);
    }
    let n = num_samples as f64;
    let mean = draws.iter().sum::<f64>() / n;
    let var = draws.iter().map(|d| (d - mean) * (d - mean)).sum::<f64>() / (n - 1.0);
    Ok((mean, var.sqrt() / n.sqrt()))
}

/// Per-family complexities for `stack` under `mode`, combined into penalty weights.
pub fn build_penalties(stack: &GramStack, mode: PenaltyMode, lambda: f64, beta: f64) -> Result<PenaltyVector> {
    let m = stack.num_points();
    let r = match mode {
        PenaltyMode::Uniform => vec![1.0; stack.num_kernels()],
        PenaltyMode::Trace => stack
            .grams
            .iter()
            .zip(&stack.kappas)
            .map(|(g, &kappa)| trace_penalty(g, kappa))
            .collect::<Result<Vec<_>>>()?,
        PenaltyMode::PolyDim => {
            let n = stack.input_dim.ok_or_else(|| {
                Error::Config("polydim penalties need the input dimension of the sample".into())
            })?;
            stack
                .specs
                .iter()
                .zip(&stack.kappas)
                .map(|(spec, &kappa)| match spec {
                    KernelSpec::Polynomial { degree } => {
                        polydim_penalty(kappa, n as u64, *degree as u64, m as f64)
                    }
                    other => Err(Error::Config(format!("polydim penalties need polynomial kernels, got {other}"))),
                })
                .collect::<Result<Vec<_>>>()?
        }
        PenaltyMode::Local(s) => {
            if let Some(bad) = stack.specs.iter().find(|s| !s.claims_psd()) {
                return Err(Error::Config(format!("local penalties need PSD kernels, got {bad}")));
            }
            let cache = SpectrumCache::build(stack, DEFAULT_EIGEN_CAP)?;
            cache
                .spectra
                .iter()
                .map(|sp| local_penalty(&sp.values, m, s))
                .collect::<Result<Vec<_>>>()?
        }
    };
    PenaltyVector::new(r, lambda, beta)
}

/// Local penalties for an already-computed spectrum cache (one value per family).
pub fn local_penalties(cache: &SpectrumCache, s: Radius) -> Result<Vec<f64>> {
    cache
        .spectra
        .iter()
        .map(|sp| local_penalty(&sp.values, cache.source_m, s))
        .collect()
}
