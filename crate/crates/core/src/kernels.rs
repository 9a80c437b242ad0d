//! Kernel families, Gram matrices and the per-family stack consumed by the solvers.
//!
//! Kernel specs are written as `linear`, `poly:<d>`, `poly:<d1>-<d2>` (one spec
//! per degree), `rbf:<gamma>`, `rbf:<lo>..<hi>` (one spec per decade) and
//! `sigmoid:<a>,<b>`. Several specs may be joined with `;`.

use std::fmt;
use std::str::FromStr;

use ndarray::{Array2, ArrayView1, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "lowercase")]
pub enum KernelSpec {
    /// `x . y`
    Linear,
    /// `(x . y + 1)^degree`
    Polynomial { degree: u32 },
    /// `exp(-gamma |x - y|^2)`
    Gaussian { gamma: f64 },
    /// `tanh(a x . y + b)`; not positive semi-definite in general.
    Sigmoid { a: f64, b: f64 },
}

impl KernelSpec {
    pub fn polynomial(degree: u32) -> Result<Self> {
        let spec = KernelSpec::Polynomial { degree };
        spec.validate()?;
        Ok(spec)
    }

    pub fn gaussian(gamma: f64) -> Result<Self> {
        let spec = KernelSpec::Gaussian { gamma };
        spec.validate()?;
        Ok(spec)
    }

    pub fn sigmoid(a: f64, b: f64) -> Result<Self> {
        let spec = KernelSpec::Sigmoid { a, b };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            KernelSpec::Polynomial { degree } if degree < 1 => {
                Err(Error::Parameter("polynomial degree must be >= 1".into()))
            }
            KernelSpec::Gaussian { gamma } if !(gamma > 0.0 && gamma.is_finite()) => {
                Err(Error::Parameter(format!("gaussian gamma must be positive, got {gamma}")))
            }
            KernelSpec::Sigmoid { a, b } if !(a.is_finite() && b.is_finite()) => {
                Err(Error::Parameter("sigmoid parameters must be finite".into()))
            }
            _ => Ok(()),
        }
    }

    /// True exactly for the families whose Gram matrices are always PSD.
    pub fn claims_psd(&self) -> bool {
        !matches!(self, KernelSpec::Sigmoid { .. })
    }

    pub fn family_name(&self) -> &'static str {
        match self {
            KernelSpec::Linear => "linear",
            KernelSpec::Polynomial { .. } => "poly",
            KernelSpec::Gaussian { .. } => "rbf",
            KernelSpec::Sigmoid { .. } => "sigmoid",
        }
    }

    /// Kernel value from the inner product and squared distance of a pair.
    #[inline]
    fn from_parts(&self, dot: f64, sq_dist: impl FnOnce() -> f64) -> f64 {
        match *self {
            KernelSpec::Linear => dot,
            KernelSpec::Polynomial { degree } => (dot + 1.0).powi(degree as i32),
            KernelSpec::Gaussian { gamma } => (-gamma * sq_dist()).exp(),
            KernelSpec::Sigmoid { a, b } => (a * dot + b).tanh(),
        }
    }

    #[inline]
    pub(crate) fn eval_slices(&self, x: &[f64], y: &[f64]) -> f64 {
        match self {
            KernelSpec::Gaussian { .. } => self.from_parts(0.0, || {
                x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum()
            }),
            _ => self.from_parts(dot(x, y), || 0.0),
        }
    }
}

#[inline]
pub(crate) fn dot(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| a * b).sum()
}

impl fmt::Display for KernelSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            KernelSpec::Linear => write!(f, "linear"),
            KernelSpec::Polynomial { degree } => write!(f, "poly:{degree}"),
            KernelSpec::Gaussian { gamma } => write!(f, "rbf:{gamma:e}"),
            KernelSpec::Sigmoid { a, b } => write!(f, "sigmoid:{a},{b}"),
        }
    }
}

fn parse_real(s: &str, what: &str) -> Result<f64> {
    s.trim()
        .parse()
        .map_err(|_| Error::Parameter(format!("bad {what} {s:?}")))
}

/// Parses a `;`-separated kernel list, expanding degree ranges and decade grids.
pub fn parse_kernel_specs(text: &str) -> Result<Vec<KernelSpec>> {
    let mut specs = Vec::new();
    for item in text.split(';').map(str::trim).filter(|s| !s.is_empty()) {
        let (name, arg) = match item.split_once(':') {
            Some((n, a)) => (n.trim(), Some(a.trim())),
            None => (item, None),
        };
        match (name, arg) {
            ("linear", None) => specs.push(KernelSpec::Linear),
            ("poly", Some(arg)) => {
                let (lo, hi) = match arg.split_once('-') {
                    Some((lo, hi)) => (lo, hi),
                    None => (arg, arg),
                };
                let lo: u32 = lo
                    .trim()
                    .parse()
                    .map_err(|_| Error::Parameter(format!("bad degree in {item:?}")))?;
                let hi: u32 = hi
                    .trim()
                    .parse()
                    .map_err(|_| Error::Parameter(format!("bad degree in {item:?}")))?;
                if lo > hi {
                    return Err(Error::Parameter(format!("empty degree range {item:?}")));
                }
                for d in lo..=hi {
                    specs.push(KernelSpec::polynomial(d)?);
                }
            }
            ("rbf", Some(arg)) => match arg.split_once("..") {
                Some((lo, hi)) => {
                    let lo = parse_real(lo, "gamma")?;
                    let hi = parse_real(hi, "gamma")?;
                    if !(lo > 0.0 && hi >= lo) {
                        return Err(Error::Parameter(format!("bad gamma grid {item:?}")));
                    }
                    let (e_lo, e_hi) = (lo.log10().round() as i32, hi.log10().round() as i32);
                    for e in e_lo..=e_hi {
                        specs.push(KernelSpec::gaussian(10f64.powi(e))?);
                    }
                }
                None => specs.push(KernelSpec::gaussian(parse_real(arg, "gamma")?)?),
            },
            ("sigmoid", Some(arg)) => {
                let (a, b) = arg
                    .split_once(',')
                    .ok_or_else(|| Error::Parameter(format!("sigmoid needs a,b in {item:?}")))?;
                specs.push(KernelSpec::sigmoid(parse_real(a, "a")?, parse_real(b, "b")?)?);
            }
            _ => return Err(Error::Parameter(format!("unknown kernel spec {item:?}"))),
        }
    }
    if specs.is_empty() {
        return Err(Error::Parameter("no kernel specs given".into()));
    }
    Ok(specs)
}

impl FromStr for KernelSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let mut specs = parse_kernel_specs(s)?;
        if specs.len() != 1 {
            return Err(Error::Parameter(format!("{s:?} names {} kernels", specs.len())));
        }
        Ok(specs.remove(0))
    }
}

fn check_value(spec: &KernelSpec, v: f64, i: usize, j: usize) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::Numeric(format!("{spec} at ({i},{j}) evaluates to {v}")))
    }
}

pub fn eval_kernel(spec: &KernelSpec, x: ArrayView1<'_, f64>, y: ArrayView1<'_, f64>) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::Dimension(format!("kernel arguments of length {} and {}", x.len(), y.len())));
    }
    let v = match (x.as_slice(), y.as_slice()) {
        (Some(xs), Some(ys)) => spec.eval_slices(xs, ys),
        _ => spec.eval_slices(&x.to_vec(), &y.to_vec()),
    };
    check_value(spec, v, 0, 0)
}

/// Pairwise inner products and squared distances of the rows of `a` against the rows of `b`.
struct PairTables {
    dots: Array2<f64>,
    sq: Option<Array2<f64>>,
}

impl PairTables {
    fn new(a: ArrayView2<'_, f64>, b: ArrayView2<'_, f64>, need_sq: bool) -> Self {
        let dots = a.dot(&b.t());
        let sq = need_sq.then(|| {
            Array2::from_shape_fn(dots.dim(), |(i, j)| {
                a.row(i).iter().zip(b.row(j)).map(|(x, y)| (x - y) * (x - y)).sum()
            })
        });
        Self { dots, sq }
    }

    fn kernel(&self, spec: &KernelSpec) -> Result<Array2<f64>> {
        let mut out = Array2::zeros(self.dots.dim());
        for ((i, j), v) in out.indexed_iter_mut() {
            let k = spec.from_parts(self.dots[[i, j]], || {
                self.sq.as_ref().expect("squared distances computed")[[i, j]]
            });
            *v = check_value(spec, k, i, j)?;
        }
        Ok(out)
    }
}

fn needs_sq(specs: &[KernelSpec]) -> bool {
    specs.iter().any(|s| matches!(s, KernelSpec::Gaussian { .. }))
}

pub fn gram_matrix(spec: &KernelSpec, data: &Dataset) -> Result<Array2<f64>> {
    let x = data.features.view();
    PairTables::new(x, x, needs_sq(std::slice::from_ref(spec))).kernel(spec)
}

/// Kernel values between query rows and support points (`query.len() x support.nrows()`).
pub fn cross_gram(spec: &KernelSpec, support: ArrayView2<'_, f64>, query: &Dataset) -> Result<Array2<f64>> {
    if support.nrows() > 0 && support.ncols() != query.num_features() {
        return Err(Error::Dimension(format!(
            "support points have {} features, query has {}",
            support.ncols(),
            query.num_features()
        )));
    }
    if support.nrows() == 0 {
        return Ok(Array2::zeros((query.len(), 0)));
    }
    PairTables::new(query.features.view(), support, needs_sq(std::slice::from_ref(spec))).kernel(spec)
}

/// Gram matrices of every kernel family on one training sample.
#[derive(Debug, Clone)]
pub struct GramStack {
    pub specs: Vec<KernelSpec>,
    pub grams: Vec<Array2<f64>>,
    /// Empirical `max_i sqrt(K(x_i, x_i))` per family.
    pub kappas: Vec<f64>,
    /// Feature dimension of the sample, when the stack was built from one.
    pub input_dim: Option<usize>,
}

impl GramStack {
    /// Assembles a stack from precomputed matrices.
    pub fn from_grams(specs: Vec<KernelSpec>, grams: Vec<Array2<f64>>) -> Result<Self> {
        if specs.is_empty() || specs.len() != grams.len() {
            return Err(Error::Dimension(format!(
                "{} specs for {} Gram matrices",
                specs.len(),
                grams.len()
            )));
        }
        let m = grams[0].nrows();
        let mut kappas = Vec::with_capacity(specs.len());
        for (spec, g) in specs.iter().zip(&grams) {
            if g.dim() != (m, m) {
                return Err(Error::Dimension(format!("Gram matrix {:?}, expected {m}x{m}", g.dim())));
            }
            let mut kappa: f64 = 0.0;
            for i in 0..m {
                let d = g[[i, i]];
                if d < 0.0 && spec.claims_psd() {
                    return Err(Error::PsdViolation {
                        spec: spec.to_string(),
                        index: i,
                        value: d,
                    });
                }
                kappa = kappa.max(d.max(0.0).sqrt());
            }
            kappas.push(kappa);
        }
        Ok(Self {
            specs,
            grams,
            kappas,
            input_dim: None,
        })
    }

    pub fn num_kernels(&self) -> usize {
        self.specs.len()
    }

    pub fn num_points(&self) -> usize {
        self.grams[0].nrows()
    }
}

pub fn build_stack(specs: &[KernelSpec], data: &Dataset) -> Result<GramStack> {
    if specs.is_empty() {
        return Err(Error::Parameter("at least one kernel is required".into()));
    }
    for s in specs {
        s.validate()?;
    }
    let x = data.features.view();
    let tables = PairTables::new(x, x, needs_sq(specs));
    let grams = specs.iter().map(|s| tables.kernel(s)).collect::<Result<Vec<_>>>()?;
    let mut stack = GramStack::from_grams(specs.to_vec(), grams)?;
    stack.input_dim = Some(data.num_features());
    Ok(stack)
}
