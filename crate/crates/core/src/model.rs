//! Trained hypotheses: nonzero coefficients with their support points.
//!
//! A model predicts `f(x) = sum alpha y_j K_k(x, x_j)` over its entries, where `x`
//! is first mapped through the standardizer fitted at training time. Support
//! points are stored in the model itself, so a model file is enough to predict.
//!
//! The JSON file layout:
//!
//! ```text
//! {
//!   "format": "capsvm-model",
//!   "version": 1,
//!   "kernels": [{"family": "poly", "degree": 2}, ...],
//!   "standardizer": {"mean": [...], "std": [...]},
//!   "threshold": 0.0,
//!   "support": [{"j": 3, "y": 1.0, "x": [...]}, ...],
//!   "coefficients": [{"k": 0, "j": 3, "alpha": 0.25}, ...]
//! }
//! ```
//!
//! Reals are written in shortest round-trip form, so a reloaded model predicts
//! bit-for-bit the same values.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, Standardizer};
use crate::error::{file_err, Error, Result};
use crate::kernels::{cross_gram, KernelSpec};
use crate::objective::CoefMatrix;

pub const FORMAT_NAME: &str = "capsvm-model";
pub const FORMAT_VERSION: u32 = 1;
/// Coefficients at or below this magnitude are dropped by default.
pub const DEFAULT_PRUNE_TOL: f64 = 1e-7;

/// One nonzero coefficient `alpha_kj`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Entry {
    pub k: usize,
    pub j: usize,
    pub alpha: f64,
}

/// Training point `x_j` (already standardized) with its label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SupportPoint {
    pub j: usize,
    pub y: f64,
    pub x: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SparseModel {
    pub specs: Vec<KernelSpec>,
    pub standardizer: Standardizer,
    pub threshold: f64,
    /// Sorted by `(k, j)`.
    pub entries: Vec<Entry>,
    /// Sorted by `j`, one per distinct index among the entries.
    pub support: Vec<SupportPoint>,
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    format: String,
    version: u32,
    kernels: Vec<KernelSpec>,
    standardizer: Standardizer,
    threshold: f64,
    support: Vec<SupportPoint>,
    coefficients: Vec<Entry>,
}

impl SparseModel {
    /// Keeps the coefficients with `|alpha| > prune_tol`. `train` holds the
    /// standardized training points the coefficients refer to.
    pub fn from_coefs(
        alpha: &CoefMatrix,
        train: &Dataset,
        specs: &[KernelSpec],
        standardizer: &Standardizer,
        prune_tol: f64,
    ) -> Result<Self> {
        let (p, m) = alpha.shape();
        if p != specs.len() || m != train.len() {
            return Err(Error::Dimension(format!(
                "coefficients are {p}x{m} for {} kernels and {} training points",
                specs.len(),
                train.len()
            )));
        }
        if train.num_features() != standardizer.dim() {
            return Err(Error::Dimension(format!(
                "training data has {} features, standardizer {}",
                train.num_features(),
                standardizer.dim()
            )));
        }
        if !(prune_tol >= 0.0) {
            return Err(Error::Parameter(format!("prune tolerance must be >= 0, got {prune_tol}")));
        }
        let mut entries = Vec::new();
        let mut used = BTreeSet::new();
        for ((k, j), &a) in alpha.alpha.indexed_iter() {
            if a.abs() > prune_tol {
                entries.push(Entry { k, j, alpha: a });
                used.insert(j);
            }
        }
        let support = used
            .into_iter()
            .map(|j| SupportPoint {
                j,
                y: train.labels[j],
                x: train.row(j).to_vec(),
            })
            .collect();
        Ok(Self {
            specs: specs.to_vec(),
            standardizer: standardizer.clone(),
            threshold: 0.0,
            entries,
            support,
        })
    }

    /// Raw scores of the query points, given in original (unstandardized) units.
    pub fn predict_raw(&self, query: &Dataset) -> Result<Vec<f64>> {
        let query = self.standardizer.apply(query)?;
        let mut raw = vec![0.0; query.len()];
        if self.entries.is_empty() {
            return Ok(raw);
        }
        let n = self.standardizer.dim();
        let slot: BTreeMap<usize, usize> = self.support.iter().enumerate().map(|(s, p)| (p.j, s)).collect();
        for k in 0..self.specs.len() {
            let here: Vec<&Entry> = self.entries.iter().filter(|e| e.k == k).collect();
            if here.is_empty() {
                continue;
            }
            let mut points = Array2::zeros((here.len(), n));
            for (r, e) in here.iter().enumerate() {
                let sp = &self.support[slot[&e.j]];
                points.row_mut(r).assign(&ndarray::aview1(&sp.x));
            }
            let kx = cross_gram(&self.specs[k], points.view(), &query)?;
            for (q, out) in raw.iter_mut().enumerate() {
                for (r, e) in here.iter().enumerate() {
                    *out += e.alpha * self.support[slot[&e.j]].y * kx[[q, r]];
                }
            }
        }
        Ok(raw)
    }

    /// `+1` where the raw score is at least the threshold, `-1` elsewhere.
    pub fn predict_label(&self, query: &Dataset) -> Result<Vec<f64>> {
        Ok(self.labels_from_raw(&self.predict_raw(query)?))
    }

    pub fn labels_from_raw(&self, raw: &[f64]) -> Vec<f64> {
        raw.iter().map(|&r| if r >= self.threshold { 1.0 } else { -1.0 }).collect()
    }

    /// Number of stored coefficients and of distinct support points.
    pub fn support_count(&self) -> (usize, usize) {
        (self.entries.len(), self.support.len())
    }

    pub fn write_json<W: Write>(&self, out: W) -> Result<()> {
        let file = ModelFile {
            format: FORMAT_NAME.into(),
            version: FORMAT_VERSION,
            kernels: self.specs.clone(),
            standardizer: self.standardizer.clone(),
            threshold: self.threshold,
            support: self.support.clone(),
            coefficients: self.entries.clone(),
        };
        let mut out = out;
        serde_json::to_writer_pretty(&mut out, &file)?;
        writeln!(out)?;
        out.flush()?;
        Ok(())
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        let value: serde_json::Value = serde_json::from_str(text)?;
        Self::from_value(value)
    }

    fn from_value(value: serde_json::Value) -> Result<Self> {
        match value.get("format").and_then(|v| v.as_str()) {
            Some(FORMAT_NAME) => {}
            Some(other) => return Err(Error::Format(format!("not a model file (format {other:?})"))),
            None => return Err(Error::Format("missing `format` field".into())),
        }
        match value.get("version") {
            Some(v) if v.as_u64() == Some(FORMAT_VERSION as u64) => {}
            Some(v) => return Err(Error::Format(format!("unsupported model version {v}"))),
            None => return Err(Error::Format("missing `version` field".into())),
        }
        let file: ModelFile =
            serde_json::from_value(value).map_err(|e| Error::Format(format!("bad model file: {e}")))?;
        let model = Self {
            specs: file.kernels,
            standardizer: file.standardizer,
            threshold: file.threshold,
            entries: file.coefficients,
            support: file.support,
        };
        model.validate()?;
        Ok(model)
    }

    /// Checks the structural invariants of a loaded model.
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Format(msg));
        for s in &self.specs {
            s.validate().map_err(|e| Error::Format(e.to_string()))?;
        }
        let n = self.standardizer.dim();
        if self.standardizer.std.len() != n || self.standardizer.std.iter().any(|s| !(*s > 0.0)) {
            return bad("standardizer needs one positive std per mean".into());
        }
        if !self.threshold.is_finite() {
            return bad("threshold must be finite".into());
        }
        let mut prev: Option<usize> = None;
        for p in &self.support {
            if prev.is_some_and(|q| q >= p.j) {
                return bad(format!("support point {} out of order or repeated", p.j));
            }
            prev = Some(p.j);
            if p.x.len() != n {
                return bad(format!("support point {} has {} features, expected {n}", p.j, p.x.len()));
            }
            if p.y != 1.0 && p.y != -1.0 {
                return bad(format!("support point {} has label {}", p.j, p.y));
            }
        }
        let mut last: Option<(usize, usize)> = None;
        let mut used = BTreeSet::new();
        for e in &self.entries {
            if last.is_some_and(|l| l >= (e.k, e.j)) {
                return bad(format!("coefficient ({}, {}) out of order or repeated", e.k, e.j));
            }
            last = Some((e.k, e.j));
            if e.k >= self.specs.len() {
                return bad(format!("coefficient refers to kernel {} of {}", e.k, self.specs.len()));
            }
            if !(e.alpha.is_finite() && e.alpha != 0.0) {
                return bad(format!("coefficient ({}, {}) is {}", e.k, e.j, e.alpha));
            }
            if self.support.binary_search_by_key(&e.j, |p| p.j).is_err() {
                return bad(format!("coefficient refers to missing support point {}", e.j));
            }
            used.insert(e.j);
        }
        if used.len() != self.support.len() {
            return bad("support point without a coefficient".into());
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(file_err(path))?;
        self.write_json(BufWriter::new(file))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = File::open(path).map_err(file_err(path))?;
        let value: serde_json::Value = serde_json::from_reader(BufReader::new(file))
            .map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
        Self::from_value(value)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::build_stack;
    use crate::objective::MarginState;
    use ndarray::array;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn linear_model(entries: Vec<Entry>, support: Vec<SupportPoint>) -> SparseModel {
        SparseModel {
            specs: vec![KernelSpec::Linear],
            standardizer: Standardizer::identity(2),
            threshold: 0.0,
            entries,
            support,
        }
    }

    fn random_setup(seed: u64, m: usize) -> (Dataset, Vec<KernelSpec>, CoefMatrix) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = Array2::from_shape_fn((m, 3), |_| rng.random_range(-2.0..2.0));
        let y = (0..m).map(|i| if i % 2 == 0 { 1.0 } else { -1.0 }).collect();
        let data = Dataset::new(x, y).unwrap();
        let specs = vec![KernelSpec::polynomial(2).unwrap(), KernelSpec::gaussian(0.5).unwrap()];
        let mut alpha = CoefMatrix::zeros(2, m);
        for _ in 0..m / 2 {
            let (k, j) = (rng.random_range(0..2), rng.random_range(0..m));
            alpha.alpha[[k, j]] = rng.random_range(-1.0..1.0);
        }
        (data, specs, alpha)
    }

    #[test]
    fn empty_and_pruned_models() {
        let data = Dataset::new(array![[1.0, 2.0], [0.0, -1.0]], vec![1.0, -1.0]).unwrap();
        let st = Standardizer::identity(2);
        let model = SparseModel::from_coefs(&CoefMatrix::zeros(1, 2), &data, &[KernelSpec::Linear], &st, 1e-7).unwrap();
        assert_eq!(model.support_count(), (0, 0));
        assert_eq!(model.predict_raw(&data).unwrap(), vec![0.0, 0.0]);

        let mut alpha = CoefMatrix::zeros(1, 2);
        alpha.alpha[[0, 1]] = 1e-9;
        let model = SparseModel::from_coefs(&alpha, &data, &[KernelSpec::Linear], &st, DEFAULT_PRUNE_TOL).unwrap();
        assert!(model.entries.is_empty());
    }

    #[test]
    fn distinct_support_points() {
        let data = Dataset::new(array![[1.0], [2.0], [3.0]], vec![1.0, -1.0, 1.0]).unwrap();
        let specs = [KernelSpec::Linear, KernelSpec::polynomial(2).unwrap()];
        let mut alpha = CoefMatrix::zeros(2, 3);
        alpha.alpha[[0, 0]] = 0.5;
        alpha.alpha[[1, 0]] = -0.5;
        alpha.alpha[[1, 2]] = 0.1;
        let model = SparseModel::from_coefs(&alpha, &data, &specs, &Standardizer::identity(1), 1e-7).unwrap();
        assert_eq!(model.support_count(), (3, 2));
        assert_eq!(model.support.iter().map(|p| p.j).collect::<Vec<_>>(), vec![0, 2]);

        let two = linear_model(
            vec![Entry { k: 0, j: 3, alpha: 1.0 }, Entry { k: 1, j: 3, alpha: 1.0 }],
            vec![SupportPoint { j: 3, y: 1.0, x: vec![0.0, 0.0] }],
        );
        assert_eq!(two.support_count(), (2, 1));
    }

    #[test]
    fn single_linear_entry() {
        let model = linear_model(
            vec![Entry { k: 0, j: 0, alpha: 1.0 }],
            vec![SupportPoint { j: 0, y: 1.0, x: vec![1.0, 0.0] }],
        );
        let q = Dataset::new(array![[2.0, 0.0], [-1.0, 5.0]], vec![1.0, 1.0]).unwrap();
        assert_eq!(model.predict_raw(&q).unwrap(), vec![2.0, -1.0]);
        assert_eq!(model.predict_label(&q).unwrap(), vec![1.0, -1.0]);
        let bad = Dataset::new(array![[1.0]], vec![1.0]).unwrap();
        assert!(matches!(model.predict_raw(&bad), Err(Error::Dimension(_))));
    }

    #[test]
    fn label_rule() {
        let model = linear_model(Vec::new(), Vec::new());
        assert_eq!(model.labels_from_raw(&[0.5, -0.2, 0.0]), vec![1.0, -1.0, 1.0]);
    }

    #[test]
    fn flipping_signs_flips_labels() {
        let (data, specs, alpha) = random_setup(4, 12);
        let st = Standardizer::fit(&data);
        let train = st.apply(&data).unwrap();
        let model = SparseModel::from_coefs(&alpha, &train, &specs, &st, 0.0).unwrap();
        let mut neg = model.clone();
        for e in &mut neg.entries {
            e.alpha = -e.alpha;
        }
        let (a, b) = (model.predict_raw(&data).unwrap(), neg.predict_raw(&data).unwrap());
        let (la, lb) = (model.labels_from_raw(&a), neg.labels_from_raw(&b));
        for i in 0..a.len() {
            if a[i] != 0.0 {
                assert_eq!(la[i], -lb[i]);
            }
        }
    }

    #[test]
    fn training_predictions_match_margin_state() {
        for seed in 0..5 {
            let (data, specs, alpha) = random_setup(seed, 15);
            let st = Standardizer::fit(&data);
            let train = st.apply(&data).unwrap();
            let stack = build_stack(&specs, &train).unwrap();
            let mut state = MarginState::zeros(15);
            for ((k, j), &a) in alpha.alpha.indexed_iter() {
                if a != 0.0 {
                    state.update(&stack, &train.labels, k, j, a);
                }
            }
            let model = SparseModel::from_coefs(&alpha, &train, &specs, &st, 0.0).unwrap();
            let raw = model.predict_raw(&data).unwrap();
            for (r, s) in raw.iter().zip(&state.raw_scores) {
                assert!((r - s).abs() <= 1e-9, "{r} vs {s}");
            }
        }
    }

    #[test]
    fn json_round_trip_is_bit_exact() {
        let (data, specs, alpha) = random_setup(8, 20);
        let st = Standardizer::fit(&data);
        let train = st.apply(&data).unwrap();
        let model = SparseModel::from_coefs(&alpha, &train, &specs, &st, 0.0).unwrap();
        let mut buf = Vec::new();
        model.write_json(&mut buf).unwrap();
        let back = SparseModel::from_json_str(std::str::from_utf8(&buf).unwrap()).unwrap();
        assert_eq!(back, model);
        let (a, b) = (model.predict_raw(&data).unwrap(), back.predict_raw(&data).unwrap());
        assert!(a.iter().zip(&b).all(|(x, y)| x.to_bits() == y.to_bits()));

        let empty = linear_model(Vec::new(), Vec::new());
        let mut buf = Vec::new();
        empty.write_json(&mut buf).unwrap();
        assert_eq!(SparseModel::from_json_str(std::str::from_utf8(&buf).unwrap()).unwrap(), empty);
    }

    #[test]
    fn rejects_unknown_version_and_broken_files() {
        let model = linear_model(
            vec![Entry { k: 0, j: 0, alpha: 1.0 }],
            vec![SupportPoint { j: 0, y: 1.0, x: vec![1.0, 0.0] }],
        );
        let mut buf = Vec::new();
        model.write_json(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let err = SparseModel::from_json_str(&text.replace("\"version\": 1", "\"version\": 7")).unwrap_err();
        assert!(matches!(&err, Error::Format(m) if m.contains('7')), "{err}");
        assert!(SparseModel::from_json_str(&text.replace("\"k\": 0", "\"k\": 4")).is_err());
        assert!(SparseModel::from_json_str(&text.replace("\"alpha\": 1.0", "\"alpha\": 0.0")).is_err());
        assert!(SparseModel::from_json_str(&text.replace("capsvm-model", "other")).is_err());
        assert!(SparseModel::from_json_str("{").is_err());
    }
}
