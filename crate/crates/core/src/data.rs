//! Datasets, index bookkeeping, and active-learning splits.
//!
//! A [`Split`] partitions the dataset into a held-out test set and a training
//! set, and the training set further into an initially labeled seed set and
//! the unlabeled pool the query strategies draw from.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::fmt;
use std::path::Path;

use indexmap::IndexSet;
use ndarray::{Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::seed;

/// Maximum number of labeled-set draws before giving up on the
/// two-class requirement.
pub const MAX_LABELED_RESAMPLES: usize = 100;

const KFOLD_PERMUTATION_STREAM: u64 = u64::MAX;

/// Feature matrix, class labels encoded as `0..n_classes`, and optional
/// instance names.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    features: Array2<f64>,
    labels: Vec<usize>,
    n_classes: usize,
    /// Original label value of each encoded class, ascending.
    classes: Vec<i64>,
    names: Option<Vec<String>>,
}

impl Dataset {
    /// Builds a dataset from already-encoded labels.
    pub fn new(features: Array2<f64>, labels: Vec<usize>, names: Option<Vec<String>>) -> Result<Self> {
        let raw = labels.iter().map(|&l| l as i64).collect();
        Self::from_raw_labels(features, raw, names)
    }

    /// Builds a dataset from arbitrary integer labels, re-encoding them to
    /// `0..C` in ascending order of the original values.
    pub fn from_raw_labels(features: Array2<f64>, raw_labels: Vec<i64>, names: Option<Vec<String>>) -> Result<Self> {
        let n = features.nrows();
        if raw_labels.len() != n {
            return Err(Error::InvalidData(format!(
                "{} labels for {} feature rows",
                raw_labels.len(),
                n
            )));
        }
        if n < 2 {
            return Err(Error::InvalidData("dataset needs at least 2 instances".into()));
        }
        if features.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidData("non-finite feature value".into()));
        }
        let classes: Vec<i64> = raw_labels
            .iter()
            .copied()
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        if classes.len() < 2 {
            return Err(Error::InvalidData("single-class dataset".into()));
        }
        let code: HashMap<i64, usize> = classes.iter().enumerate().map(|(i, &c)| (c, i)).collect();
        let labels = raw_labels.iter().map(|l| code[l]).collect();
        if let Some(names) = &names {
            if names.len() != n {
                return Err(Error::InvalidData(format!("{} names for {} instances", names.len(), n)));
            }
            let mut seen = HashSet::with_capacity(n);
            if let Some(dup) = names.iter().find(|name| !seen.insert(name.as_str())) {
                return Err(Error::InvalidData(format!("duplicate instance name {dup:?}")));
            }
        }
        Ok(Dataset {
            features,
            labels,
            n_classes: classes.len(),
            classes,
            names,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn n_features(&self) -> usize {
        self.features.ncols()
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn features(&self) -> ArrayView2<'_, f64> {
        self.features.view()
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    /// Original label values, indexed by encoded class.
    pub fn classes(&self) -> &[i64] {
        &self.classes
    }

    pub fn names(&self) -> Option<&[String]> {
        self.names.as_deref()
    }

    /// Copies the feature rows at `indices`, in order.
    pub fn rows(&self, indices: &[usize]) -> Array2<f64> {
        self.features.select(Axis(0), indices)
    }

    /// Looks up instances by name.
    pub fn indices_of_names<S: AsRef<str>>(&self, names: &[S]) -> Result<Vec<usize>> {
        let all = self
            .names
            .as_ref()
            .ok_or_else(|| Error::InvalidData("dataset has no instance names".into()))?;
        let lookup: HashMap<&str, usize> = all.iter().enumerate().map(|(i, s)| (s.as_str(), i)).collect();
        names
            .iter()
            .map(|s| {
                lookup
                    .get(s.as_ref())
                    .copied()
                    .ok_or_else(|| Error::InvalidData(format!("unknown instance name {:?}", s.as_ref())))
            })
            .collect()
    }
}

/// Ordered, duplicate-free set of instance indices.
///
/// Serializes as a JSON integer array.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct IndexCollection(IndexSet<usize>);

impl IndexCollection {
    pub fn new() -> Self {
        Self::default()
    }

    /// Builds a collection, rejecting duplicates.
    pub fn from_vec(indices: Vec<usize>) -> Result<Self> {
        let len = indices.len();
        let set: IndexSet<usize> = indices.into_iter().collect();
        if set.len() != len {
            return Err(Error::param("index collection contains duplicates"));
        }
        Ok(IndexCollection(set))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn contains(&self, index: usize) -> bool {
        self.0.contains(&index)
    }

    pub fn iter(&self) -> impl ExactSizeIterator<Item = usize> + '_ {
        self.0.iter().copied()
    }

    /// Element at position `pos` in insertion order.
    pub fn get(&self, pos: usize) -> Option<usize> {
        self.0.get_index(pos).copied()
    }

    pub fn to_vec(&self) -> Vec<usize> {
        self.0.iter().copied().collect()
    }

    /// Appends `index`; returns false if it was already present.
    pub fn push(&mut self, index: usize) -> bool {
        self.0.insert(index)
    }

    pub fn max(&self) -> Option<usize> {
        self.0.iter().copied().max()
    }

    /// Same elements in a canonical (ascending) order.
    pub fn sorted(&self) -> Self {
        let mut v = self.to_vec();
        v.sort_unstable();
        IndexCollection(v.into_iter().collect())
    }

    pub fn is_disjoint(&self, other: &IndexCollection) -> bool {
        self.0.is_disjoint(&other.0)
    }
}

impl FromIterator<usize> for IndexCollection {
    /// Collects indices, silently dropping repeats.
    fn from_iter<T: IntoIterator<Item = usize>>(iter: T) -> Self {
        IndexCollection(iter.into_iter().collect())
    }
}

impl fmt::Display for IndexCollection {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("{")?;
        for (i, idx) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            write!(f, "{idx}")?;
        }
        f.write_str("}")
    }
}

impl Serialize for IndexCollection {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.collect_seq(self.0.iter())
    }
}

impl<'de> Deserialize<'de> for IndexCollection {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let v = Vec::<usize>::deserialize(deserializer)?;
        IndexCollection::from_vec(v).map_err(serde::de::Error::custom)
    }
}

/// One fold's partition of the dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Split {
    pub test: IndexCollection,
    pub train: IndexCollection,
    pub initially_labeled: IndexCollection,
    pub initially_unlabeled: IndexCollection,
}

impl Split {
    /// Checks every structural invariant of a split against `dataset`.
    pub fn validate(&self, dataset: &Dataset) -> Result<()> {
        let n = dataset.len();
        let bad = |m: &str| Err(Error::InvalidData(format!("invalid split: {m}")));
        if [
            &self.test,
            &self.train,
            &self.initially_labeled,
            &self.initially_unlabeled,
        ]
        .iter()
        .any(|c| c.max().is_some_and(|m| m >= n))
        {
            return bad("index out of range");
        }
        if !self.test.is_disjoint(&self.train) {
            return bad("test and train overlap");
        }
        if self.test.len() + self.train.len() != n {
            return bad("test and train do not cover the dataset");
        }
        if !self.initially_labeled.is_disjoint(&self.initially_unlabeled)
            || self.initially_labeled.len() + self.initially_unlabeled.len() != self.train.len()
            || !self
                .initially_labeled
                .iter()
                .chain(self.initially_unlabeled.iter())
                .all(|i| self.train.contains(i))
        {
            return bad("labeled and unlabeled do not partition train");
        }
        if count_classes(dataset.labels(), self.initially_labeled.iter()) < 2 {
            return bad("initially labeled set has fewer than 2 classes");
        }
        Ok(())
    }
}

fn count_classes(labels: &[usize], indices: impl Iterator<Item = usize>) -> usize {
    indices.map(|i| labels[i]).collect::<HashSet<_>>().len()
}

/// Nearest integer, halves rounded up.
pub(crate) fn round_half_up(x: f64) -> usize {
    (x + 0.5).floor().max(0.0) as usize
}

fn check_fraction(name: &str, value: f64) -> Result<()> {
    if value > 0.0 && value < 1.0 {
        Ok(())
    } else {
        Err(Error::param(format!("{name} must lie in (0, 1), got {value}")))
    }
}

/// Chooses the initially labeled subset of `train` and returns
/// `(labeled, unlabeled)`.
///
/// The labeled size is `max(classes present in train, round(rate * |train|))`,
/// capped so at least one instance stays unlabeled. Draws are repeated until
/// the labeled set contains two classes.
fn choose_labeled(
    dataset: &Dataset,
    train: &[usize],
    initial_label_rate: f64,
    rng: &mut impl rand::Rng,
) -> Result<(IndexCollection, IndexCollection)> {
    let labels = dataset.labels();
    let seen = count_classes(labels, train.iter().copied());
    if seen < 2 || train.len() < 3 {
        return Err(Error::InvalidData(format!(
            "training part ({} instances, {} classes) cannot hold a two-class labeled set and a non-empty pool",
            train.len(),
            seen
        )));
    }
    let wanted = seen.max(round_half_up(initial_label_rate * train.len() as f64));
    let size = wanted.min(train.len() - 1);
    for _ in 0..MAX_LABELED_RESAMPLES {
        let mut picked: Vec<usize> = rand::seq::index::sample(rng, train.len(), size)
            .into_iter()
            .map(|p| train[p])
            .collect();
        if count_classes(labels, picked.iter().copied()) >= 2 {
            picked.sort_unstable();
            let labeled = IndexCollection::from_vec(picked)?;
            let unlabeled = train.iter().copied().filter(|&i| !labeled.contains(i)).collect();
            return Ok((labeled, unlabeled));
        }
    }
    Err(Error::InvalidData(format!(
        "no labeled set with two classes after {MAX_LABELED_RESAMPLES} draws"
    )))
}

/// Random hold-out splits for active-learning experiments.
///
/// Split `i` draws from the stream `seed::derive(seed, i)`, so each split
/// can be regenerated on its own.
pub fn split_al(
    dataset: &Dataset,
    test_ratio: f64,
    initial_label_rate: f64,
    split_count: usize,
    seed: u64,
) -> Result<Vec<Split>> {
    check_fraction("test_ratio", test_ratio)?;
    check_fraction("initial_label_rate", initial_label_rate)?;
    if split_count == 0 {
        return Err(Error::param("split_count must be positive"));
    }
    let n = dataset.len();
    let test_size = round_half_up(test_ratio * n as f64).clamp(1, n - 1);
    (0..split_count)
        .map(|i| {
            let mut rng = seed::rng(seed::derive(seed, i as u64));
            let mut perm: Vec<usize> = (0..n).collect();
            perm.shuffle(&mut rng);
            let (test, train) = perm.split_at_mut(test_size);
            test.sort_unstable();
            train.sort_unstable();
            let (initially_labeled, initially_unlabeled) =
                choose_labeled(dataset, train, initial_label_rate, &mut rng)?;
            Ok(Split {
                test: IndexCollection::from_vec(test.to_vec())?,
                train: IndexCollection::from_vec(train.to_vec())?,
                initially_labeled,
                initially_unlabeled,
            })
        })
        .collect()
}

/// `k`-fold cross-validation splits. Fold test sets partition the dataset and
/// differ in size by at most one (the first `n mod k` folds are larger).
pub fn kfold_split(dataset: &Dataset, k: usize, initial_label_rate: f64, seed: u64) -> Result<Vec<Split>> {
    let n = dataset.len();
    if k < 2 {
        return Err(Error::param(format!("k must be at least 2, got {k}")));
    }
    if k > n {
        return Err(Error::param(format!("k = {k} exceeds dataset size {n}")));
    }
    check_fraction("initial_label_rate", initial_label_rate)?;
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(&mut seed::rng(seed::derive(seed, KFOLD_PERMUTATION_STREAM)));

    let (base, extra) = (n / k, n % k);
    let mut start = 0;
    (0..k)
        .map(|fold| {
            let size = base + usize::from(fold < extra);
            let mut test = perm[start..start + size].to_vec();
            let mut train: Vec<usize> = perm[..start].iter().chain(&perm[start + size..]).copied().collect();
            start += size;
            test.sort_unstable();
            train.sort_unstable();
            let mut rng = seed::rng(seed::derive(seed, fold as u64));
            let (initially_labeled, initially_unlabeled) =
                choose_labeled(dataset, &train, initial_label_rate, &mut rng)?;
            Ok(Split {
                test: IndexCollection::from_vec(test)?,
                train: IndexCollection::from_vec(train)?,
                initially_labeled,
                initially_unlabeled,
            })
        })
        .collect()
}

/// Moves `queried` from the unlabeled pool to the labeled set, appending in
/// query order.
pub fn update_partition(
    labeled: &IndexCollection,
    unlabeled: &IndexCollection,
    queried: &[usize],
) -> Result<(IndexCollection, IndexCollection)> {
    let mut moved = HashSet::with_capacity(queried.len());
    for &q in queried {
        if !unlabeled.contains(q) {
            return Err(Error::param(format!("queried index {q} is not in the unlabeled pool")));
        }
        if !moved.insert(q) {
            return Err(Error::param(format!("index {q} queried twice")));
        }
    }
    let mut new_labeled = labeled.clone();
    for &q in queried {
        new_labeled.push(q);
    }
    let new_unlabeled = unlabeled.iter().filter(|i| !moved.contains(i)).collect();
    Ok((new_labeled, new_unlabeled))
}

/// Uniform sample without replacement of `min(m, |collection|)` elements,
/// returned in the collection's order.
pub fn random_sample(collection: &IndexCollection, m: usize, seed: u64) -> IndexCollection {
    let m = m.min(collection.len());
    let mut positions = rand::seq::index::sample(&mut seed::rng(seed), collection.len(), m).into_vec();
    positions.sort_unstable();
    positions.into_iter().filter_map(|p| collection.get(p)).collect()
}

/// Which CSV column holds a value.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub enum ColumnSelector {
    #[default]
    Last,
    Index(usize),
    /// Header name; requires a header row.
    Name(String),
}

impl Serialize for ColumnSelector {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            ColumnSelector::Last => s.serialize_str("last"),
            ColumnSelector::Index(i) => s.serialize_u64(*i as u64),
            ColumnSelector::Name(n) => s.serialize_str(n),
        }
    }
}

impl<'de> Deserialize<'de> for ColumnSelector {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Index(usize),
            Name(String),
        }
        Ok(match Raw::deserialize(d)? {
            Raw::Index(i) => ColumnSelector::Index(i),
            Raw::Name(n) if n == "last" => ColumnSelector::Last,
            Raw::Name(n) => ColumnSelector::Name(n),
        })
    }
}

impl ColumnSelector {
    fn resolve(&self, width: usize, header: Option<&csv::StringRecord>) -> Result<usize> {
        let idx = match self {
            ColumnSelector::Last => width.checked_sub(1),
            ColumnSelector::Index(i) => Some(*i),
            ColumnSelector::Name(name) => {
                let header = header.ok_or_else(|| {
                    Error::Config(format!("column {name:?} selected by name but has_header is false"))
                })?;
                header.iter().position(|h| h.trim() == name)
            }
        };
        idx.filter(|&i| i < width)
            .ok_or_else(|| Error::Config(format!("column {self:?} not present in a {width}-column file")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LoadOptions {
    #[serde(default)]
    pub label_column: ColumnSelector,
    #[serde(default)]
    pub has_header: bool,
    /// Optional column holding unique instance names; excluded from features.
    #[serde(default)]
    pub name_column: Option<ColumnSelector>,
}

impl Default for LoadOptions {
    fn default() -> Self {
        LoadOptions {
            label_column: ColumnSelector::Last,
            has_header: false,
            name_column: None,
        }
    }
}

fn parse_label(cell: &str) -> Option<i64> {
    let cell = cell.trim();
    cell.parse::<i64>().ok().or_else(|| {
        cell.parse::<f64>()
            .ok()
            .filter(|v| v.fract() == 0.0 && v.abs() < 9.0e15)
            .map(|v| v as i64)
    })
}

/// Reads a comma-separated file with numeric features and an integer label
/// column.
pub fn load_dataset(path: impl AsRef<Path>, options: &LoadOptions) -> Result<Dataset> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(options.has_header)
        .flexible(false)
        .trim(csv::Trim::All)
        .from_reader(file);
    let parse_err = |line: u64, message: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };
    let header = if options.has_header {
        Some(reader.headers().map_err(|e| parse_err(1, e.to_string()))?.clone())
    } else {
        None
    };

    let mut features = Vec::new();
    let mut raw_labels = Vec::new();
    let mut names = options.name_column.as_ref().map(|_| Vec::new());
    let mut columns: Option<(usize, Option<usize>, usize)> = None;
    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            let message = match e.kind() {
                csv::ErrorKind::UnequalLengths { expected_len, len, .. } => {
                    format!("ragged rows: expected {expected_len} fields, found {len}")
                }
                _ => e.to_string(),
            };
            parse_err(line, message)
        })?;
        let line = record.position().map_or(0, |p| p.line());
        let (label_col, name_col, width) = match columns {
            Some(c) => c,
            None => {
                let width = record.len();
                let label_col = options.label_column.resolve(width, header.as_ref())?;
                let name_col = options
                    .name_column
                    .as_ref()
                    .map(|s| s.resolve(width, header.as_ref()))
                    .transpose()?;
                if name_col == Some(label_col) {
                    return Err(Error::Config("label and name columns coincide".into()));
                }
                *columns.insert((label_col, name_col, width))
            }
        };
        for (j, cell) in record.iter().enumerate() {
            if j == label_col {
                let label =
                    parse_label(cell).ok_or_else(|| parse_err(line, format!("label {cell:?} is not an integer")))?;
                raw_labels.push(label);
            } else if Some(j) == name_col {
                if let Some(names) = names.as_mut() {
                    names.push(cell.to_string());
                }
            } else {
                let value: f64 = cell
                    .parse()
                    .map_err(|_| parse_err(line, format!("non-numeric cell {cell:?} in column {j}")))?;
                features.push(value);
            }
        }
        debug_assert_eq!(record.len(), width);
    }
    let n = raw_labels.len();
    let d = features.len().checked_div(n).unwrap_or(0);
    let features = Array2::from_shape_vec((n, d), features).map_err(|e| Error::InvalidData(e.to_string()))?;
    Dataset::from_raw_labels(features, raw_labels, names)
}
