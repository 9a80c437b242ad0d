//! Dataset loading, feature standardization and cross-validation folds.

use std::fs;
use std::path::Path;

use ndarray::{Array2, ArrayView1, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{file_err, Error, Result};

/// Feature matrix (one row per example) with labels in {-1, +1}.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub features: Array2<f64>,
    pub labels: Vec<f64>,
    pub feature_names: Option<Vec<String>>,
}

impl Dataset {
    /// Builds a dataset, checking the label and finiteness invariants.
    pub fn new(features: Array2<f64>, labels: Vec<f64>) -> Result<Self> {
        let (m, n) = features.dim();
        if m == 0 || n == 0 {
            return Err(Error::Size(format!("dataset must be non-empty, got {m}x{n}")));
        }
        if labels.len() != m {
            return Err(Error::Dimension(format!(
                "{} labels for {m} feature rows",
                labels.len()
            )));
        }
        if let Some(bad) = labels.iter().find(|&&y| y != 1.0 && y != -1.0) {
            return Err(Error::Parameter(format!("label {bad} is not -1 or +1")));
        }
        if let Some(((i, j), v)) = features.indexed_iter().find(|(_, v)| !v.is_finite()) {
            return Err(Error::Numeric(format!("feature ({i},{j}) = {v} is not finite")));
        }
        Ok(Self {
            features,
            labels,
            feature_names: None,
        })
    }

    pub fn with_names(mut self, names: Vec<String>) -> Result<Self> {
        if names.len() != self.num_features() {
            return Err(Error::Dimension(format!(
                "{} feature names for {} columns",
                names.len(),
                self.num_features()
            )));
        }
        self.feature_names = Some(names);
        Ok(self)
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn num_features(&self) -> usize {
        self.features.ncols()
    }

    pub fn row(&self, i: usize) -> ArrayView1<'_, f64> {
        self.features.row(i)
    }

    /// Rows selected by `indices`, in the given order.
    pub fn subset(&self, indices: &[usize]) -> Dataset {
        Dataset {
            features: self.features.select(Axis(0), indices),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            feature_names: self.feature_names.clone(),
        }
    }
}

fn map_label(token: &str, path: &Path, line: usize) -> Result<f64> {
    let bad = || Error::Label {
        path: path.to_path_buf(),
        line,
        label: token.to_string(),
    };
    let v: f64 = token.trim().parse().map_err(|_| bad())?;
    if v == 1.0 {
        Ok(1.0)
    } else if v == 0.0 || v == -1.0 {
        Ok(-1.0)
    } else {
        Err(bad())
    }
}

/// Reads a LIBSVM text file (`label idx:val ...`, 1-based increasing indices).
pub fn load_libsvm(path: impl AsRef<Path>) -> Result<Dataset> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(file_err(path))?;
    parse_libsvm(&text, path)
}

pub(crate) fn parse_libsvm(text: &str, path: &Path) -> Result<Dataset> {
    let parse_err = |line: usize, msg: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        msg,
    };
    let mut labels = Vec::new();
    let mut rows: Vec<Vec<(usize, f64)>> = Vec::new();
    let mut num_features = 0usize;
    for (lineno, raw) in text.lines().enumerate() {
        let lineno = lineno + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let mut tokens = content.split_whitespace();
        let label = tokens.next().expect("non-empty line has a token");
        labels.push(map_label(label, path, lineno)?);
        let mut row = Vec::new();
        let mut last = 0usize;
        for tok in tokens {
            let (idx, val) = tok
                .split_once(':')
                .ok_or_else(|| parse_err(lineno, format!("expected idx:val, found {tok:?}")))?;
            let idx: usize = idx
                .parse()
                .map_err(|_| parse_err(lineno, format!("bad feature index {idx:?}")))?;
            let val: f64 = val
                .parse()
                .map_err(|_| parse_err(lineno, format!("bad feature value {val:?}")))?;
            if idx == 0 || idx <= last {
                return Err(parse_err(
                    lineno,
                    format!("feature indices must be 1-based and increasing, found {idx} after {last}"),
                ));
            }
            if !val.is_finite() {
                return Err(parse_err(lineno, format!("non-finite value {val}")));
            }
            last = idx;
            row.push((idx - 1, val));
        }
        num_features = num_features.max(last);
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(parse_err(0, "no examples".into()));
    }
    if num_features == 0 {
        return Err(parse_err(0, "no features".into()));
    }
    let mut features = Array2::zeros((rows.len(), num_features));
    for (i, row) in rows.iter().enumerate() {
        for &(j, v) in row {
            features[[i, j]] = v;
        }
    }
    Dataset::new(features, labels)
}

/// Reads a rectangular numeric CSV; the first row is treated as a header when
/// any of its cells is non-numeric.
pub fn load_csv(path: impl AsRef<Path>, label_column: usize) -> Result<Dataset> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(file_err(path))?;
    parse_csv(&text, path, label_column)
}

pub(crate) fn parse_csv(text: &str, path: &Path, label_column: usize) -> Result<Dataset> {
    let parse_err = |line: usize, msg: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        msg,
    };
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let mut header: Option<Vec<String>> = None;
    let mut labels = Vec::new();
    let mut values = Vec::new();
    let mut width = None;
    for (r, record) in reader.records().enumerate() {
        let record = record?;
        let line = record.position().map_or(r + 1, |p| p.line() as usize);
        if record.iter().all(|c| c.is_empty()) {
            continue;
        }
        let w = *width.get_or_insert(record.len());
        if record.len() != w {
            return Err(parse_err(line, format!("expected {w} columns, found {}", record.len())));
        }
        if label_column >= w {
            return Err(Error::Index {
                index: label_column,
                bound: w,
            });
        }
        let numeric = record.iter().all(|c| c.parse::<f64>().is_ok());
        if !numeric && r == 0 {
            header = Some(
                record
                    .iter()
                    .enumerate()
                    .filter(|&(c, _)| c != label_column)
                    .map(|(_, s)| s.to_string())
                    .collect(),
            );
            continue;
        }
        for (c, cell) in record.iter().enumerate() {
            if c == label_column {
                labels.push(map_label(cell, path, line)?);
                continue;
            }
            let v: f64 = cell
                .parse()
                .map_err(|_| parse_err(line, format!("non-numeric cell {cell:?} in column {c}")))?;
            if !v.is_finite() {
                return Err(parse_err(line, format!("non-finite value in column {c}")));
            }
            values.push(v);
        }
    }
    let w = width.unwrap_or(0);
    if labels.is_empty() || w < 2 {
        return Err(parse_err(0, "need at least one row and one feature column".into()));
    }
    let features = Array2::from_shape_vec((labels.len(), w - 1), values)
        .map_err(|e| Error::Dimension(e.to_string()))?;
    let ds = Dataset::new(features, labels)?;
    match header {
        Some(names) => ds.with_names(names),
        None => Ok(ds),
    }
}

/// Per-column affine map fitted on a training set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

/// Columns whose population std falls below this are only centered.
pub const MIN_STD: f64 = 1e-12;

impl Standardizer {
    pub fn fit(train: &Dataset) -> Self {
        let m = train.len() as f64;
        let mut mean = Vec::with_capacity(train.num_features());
        let mut std = Vec::with_capacity(train.num_features());
        for col in train.features.columns() {
            let mu = col.sum() / m;
            let var = col.iter().map(|v| (v - mu) * (v - mu)).sum::<f64>() / m;
            let sd = var.sqrt();
            mean.push(mu);
            std.push(if sd < MIN_STD { 1.0 } else { sd });
        }
        Self { mean, std }
    }

    /// No-op map for `dim` features.
    pub fn identity(dim: usize) -> Self {
        Self {
            mean: vec![0.0; dim],
            std: vec![1.0; dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn apply(&self, data: &Dataset) -> Result<Dataset> {
        if data.num_features() != self.dim() {
            return Err(Error::Dimension(format!(
                "standardizer fitted on {} features, data has {}",
                self.dim(),
                data.num_features()
            )));
        }
        let mut out = data.clone();
        for (j, mut col) in out.features.columns_mut().into_iter().enumerate() {
            let (mu, sd) = (self.mean[j], self.std[j]);
            col.mapv_inplace(|v| (v - mu) / sd);
        }
        Ok(out)
    }
}

/// Fits a z-score map on `train` and applies it to `train` and every entry of `others`.
pub fn standardize(train: &Dataset, others: &[Dataset]) -> Result<(Dataset, Vec<Dataset>, Standardizer)> {
    let st = Standardizer::fit(train);
    let train = st.apply(train)?;
    let others = others.iter().map(|d| st.apply(d)).collect::<Result<Vec<_>>>()?;
    Ok((train, others, st))
}

/// Assignment of each example to one of `num_folds` folds.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FoldAssignment {
    pub fold_of: Vec<usize>,
    pub num_folds: usize,
    pub seed: u64,
}

/// Seeded shuffle of `0..m` dealt round-robin into folds.
pub fn make_folds(m: usize, num_folds: usize, seed: u64) -> Result<FoldAssignment> {
    if num_folds < 2 {
        return Err(Error::Size(format!("need at least 2 folds, got {num_folds}")));
    }
    if m < num_folds {
        return Err(Error::Size(format!("{m} examples cannot fill {num_folds} folds")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut perm: Vec<usize> = (0..m).collect();
    perm.shuffle(&mut rng);
    let mut fold_of = vec![0; m];
    for (t, &i) in perm.iter().enumerate() {
        fold_of[i] = t % num_folds;
    }
    Ok(FoldAssignment {
        fold_of,
        num_folds,
        seed,
    })
}

impl FoldAssignment {
    pub fn members(&self, fold: usize) -> Vec<usize> {
        (0..self.fold_of.len())
            .filter(|&i| self.fold_of[i] == fold)
            .collect()
    }

    pub fn fold_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.num_folds];
        for &f in &self.fold_of {
            sizes[f] += 1;
        }
        sizes
    }
}

/// Index sets of one cross-validation round (each sorted ascending).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CvSplit {
    pub train: Vec<usize>,
    pub validation: Vec<usize>,
    pub test: Vec<usize>,
}

/// Round `i`: test on fold `i`, validate on fold `i + 1 (mod F)`, train on the rest.
pub fn split_cv(folds: &FoldAssignment, i: usize) -> Result<CvSplit> {
    let f = folds.num_folds;
    if i >= f {
        return Err(Error::Index { index: i, bound: f });
    }
    let val_fold = (i + 1) % f;
    let mut split = CvSplit {
        train: Vec::new(),
        validation: Vec::new(),
        test: Vec::new(),
    };
    for (idx, &fold) in folds.fold_of.iter().enumerate() {
        if fold == i {
            split.test.push(idx);
        } else if fold == val_fold {
            split.validation.push(idx);
        } else {
            split.train.push(idx);
        }
    }
    Ok(split)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use proptest::prelude::*;

    fn p() -> &'static Path {
        Path::new("mem")
    }

    #[test]
    fn libsvm_single_line() {
        let d = parse_libsvm("+1 1:2.0 3:1.0\n", p()).unwrap();
        assert_eq!(d.features, array![[2.0, 0.0, 1.0]]);
        assert_eq!(d.labels, vec![1.0]);
    }

    #[test]
    fn libsvm_zero_label_maps_to_negative() {
        let d = parse_libsvm("0 1:5", p()).unwrap();
        assert_eq!(d.labels, vec![-1.0]);
    }

    #[test]
    fn libsvm_errors_carry_line_numbers() {
        match parse_libsvm("+1 1:2\n-1 2-3\n", p()) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
        match parse_libsvm("+1 1:2\n\n2 1:1\n", p()) {
            Err(Error::Label { line, label, .. }) => {
                assert_eq!(line, 3);
                assert_eq!(label, "2");
            }
            other => panic!("unexpected {other:?}"),
        }
        assert!(matches!(parse_libsvm("1 3:1 2:1", p()), Err(Error::Parse { .. })));
    }

    #[test]
    fn csv_without_and_with_header() {
        let plain = parse_csv("1,2,+1\n3,4,-1\n5,6,+1\n", p(), 2).unwrap();
        assert_eq!(plain.len(), 3);
        assert_eq!(plain.num_features(), 2);
        assert_eq!(plain.labels, vec![1.0, -1.0, 1.0]);
        let named = parse_csv("a,b,y\n1,2,+1\n3,4,-1\n5,6,+1\n", p(), 2).unwrap();
        assert_eq!(named.features, plain.features);
        assert_eq!(named.labels, plain.labels);
        assert_eq!(named.feature_names, Some(vec!["a".to_string(), "b".to_string()]));
    }

    #[test]
    fn csv_rejects_ragged_and_non_numeric() {
        assert!(matches!(parse_csv("1,2,1\n3,1\n", p(), 2), Err(Error::Parse { line: 2, .. })));
        assert!(matches!(parse_csv("1,2,1\n3,x,1\n", p(), 2), Err(Error::Parse { line: 2, .. })));
    }

    #[test]
    fn standardize_examples() {
        let train = Dataset::new(array![[1.0, 5.0], [3.0, 5.0]], vec![1.0, -1.0]).unwrap();
        let test = Dataset::new(array![[4.0, 5.0]], vec![1.0]).unwrap();
        let (t, others, st) = standardize(&train, &[test]).unwrap();
        assert_eq!(t.features, array![[-1.0, 0.0], [1.0, 0.0]]);
        assert_eq!(st.mean, vec![2.0, 5.0]);
        assert_eq!(st.std, vec![1.0, 1.0]);
        assert_eq!(others[0].features, array![[2.0, 0.0]]);
    }

    #[test]
    fn folds_examples() {
        let f = make_folds(5, 5, 9).unwrap();
        let mut seen = f.fold_of.clone();
        seen.sort();
        assert_eq!(seen, vec![0, 1, 2, 3, 4]);

        let mut sizes = make_folds(7, 5, 1).unwrap().fold_sizes();
        sizes.sort();
        assert_eq!(sizes, vec![1, 1, 1, 2, 2]);

        assert_eq!(make_folds(699, 5, 42).unwrap(), make_folds(699, 5, 42).unwrap());
        assert!(matches!(make_folds(3, 5, 0), Err(Error::Size(_))));
        assert!(matches!(make_folds(3, 1, 0), Err(Error::Size(_))));
    }

    #[test]
    fn split_follows_rotation() {
        let f = make_folds(23, 5, 3).unwrap();
        let s0 = split_cv(&f, 0).unwrap();
        assert_eq!(s0.test, f.members(0));
        assert_eq!(s0.validation, f.members(1));
        let s4 = split_cv(&f, 4).unwrap();
        assert_eq!(s4.test, f.members(4));
        assert_eq!(s4.validation, f.members(0));
        let mut train = f.members(1);
        train.extend(f.members(2));
        train.extend(f.members(3));
        train.sort();
        assert_eq!(s4.train, train);
        assert!(matches!(split_cv(&f, 5), Err(Error::Index { .. })));
    }

    proptest! {
        #[test]
        fn split_partitions_indices(m in 2usize..200, nf in 2usize..8, seed in any::<u64>()) {
            prop_assume!(m >= nf);
            let folds = make_folds(m, nf, seed).unwrap();
            let sizes = folds.fold_sizes();
            prop_assert!(sizes.iter().all(|&s| s > 0));
            prop_assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
            for i in 0..nf {
                let s = split_cv(&folds, i).unwrap();
                let mut all: Vec<usize> = s.train.iter().chain(&s.validation).chain(&s.test).copied().collect();
                all.sort();
                prop_assert_eq!(all, (0..m).collect::<Vec<_>>());
            }
        }

        #[test]
        fn standardization_is_idempotent(rows in prop::collection::vec(prop::collection::vec(-50.0f64..50.0, 3), 2..30)) {
            let m = rows.len();
            let flat: Vec<f64> = rows.into_iter().flatten().collect();
            let ds = Dataset::new(Array2::from_shape_vec((m, 3), flat).unwrap(), vec![1.0; m]).unwrap();
            let (once, _, _) = standardize(&ds, &[]).unwrap();
            let (twice, _, _) = standardize(&once, &[]).unwrap();
            for (a, b) in once.features.iter().zip(twice.features.iter()) {
                prop_assert!((a - b).abs() < 1e-9);
            }
        }
    }
}
