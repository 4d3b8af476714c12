//! Schema, instances, datasets and training-split statistics.

use alloc::collections::BTreeSet;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::rng::{derive_seed, rng_from, streams};
use crate::{Error, Result};

/// Default number of quantile bins per continuous feature.
pub const DEFAULT_BINS: usize = 10;

/// One of the two class labels, by position in the schema's class list.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Class(u8);

impl Class {
    pub const FIRST: Class = Class(0);
    pub const SECOND: Class = Class(1);

    pub fn from_index(index: usize) -> Option<Class> {
        match index {
            0 => Some(Class::FIRST),
            1 => Some(Class::SECOND),
            _ => None,
        }
    }

    pub fn index(self) -> usize {
        self.0 as usize
    }

    /// The contrasting class.
    pub fn other(self) -> Class {
        Class(1 - self.0)
    }
}

impl fmt::Display for Class {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeatureKind {
    Continuous,
    Categorical,
}

fn default_true() -> bool {
    true
}

fn is_true(v: &bool) -> bool {
    *v
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSpec {
    pub name: String,
    pub kind: FeatureKind,
    /// Ordered category list; the position of a category is its ordinal code.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub categories: Vec<String>,
    #[serde(default = "default_true", skip_serializing_if = "is_true")]
    pub actionable: bool,
}

impl FeatureSpec {
    pub fn continuous(name: impl Into<String>) -> Self {
        FeatureSpec {
            name: name.into(),
            kind: FeatureKind::Continuous,
            categories: Vec::new(),
            actionable: true,
        }
    }

    pub fn categorical<S: Into<String>>(
        name: impl Into<String>,
        categories: impl IntoIterator<Item = S>,
    ) -> Self {
        FeatureSpec {
            name: name.into(),
            kind: FeatureKind::Categorical,
            categories: categories.into_iter().map(Into::into).collect(),
            actionable: true,
        }
    }

    pub fn immutable(mut self) -> Self {
        self.actionable = false;
        self
    }

    pub fn is_categorical(&self) -> bool {
        self.kind == FeatureKind::Categorical
    }
}

#[derive(Deserialize)]
struct RawSchema {
    features: Vec<FeatureSpec>,
    classes: Vec<String>,
}

/// Ordered feature list plus the two class names `(c, c')`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawSchema")]
pub struct FeatureSchema {
    features: Vec<FeatureSpec>,
    classes: [String; 2],
}

impl TryFrom<RawSchema> for FeatureSchema {
    type Error = Error;

    fn try_from(raw: RawSchema) -> Result<Self> {
        let classes: [String; 2] = raw.classes.try_into().map_err(|v: Vec<String>| {
            Error::InvalidSchema(format!("expected exactly 2 classes, found {}", v.len()))
        })?;
        FeatureSchema::new(raw.features, classes)
    }
}

impl FeatureSchema {
    pub fn new(features: Vec<FeatureSpec>, classes: [String; 2]) -> Result<Self> {
        let mut names = BTreeSet::new();
        for spec in &features {
            if spec.name.is_empty() {
                return Err(Error::InvalidSchema("empty feature name".into()));
            }
            if !names.insert(spec.name.as_str()) {
                return Err(Error::InvalidSchema(format!(
                    "duplicate feature name {:?}",
                    spec.name
                )));
            }
            match spec.kind {
                FeatureKind::Continuous if !spec.categories.is_empty() => {
                    return Err(Error::InvalidSchema(format!(
                        "continuous feature {:?} declares categories",
                        spec.name
                    )));
                }
                FeatureKind::Categorical => {
                    let distinct: BTreeSet<&str> =
                        spec.categories.iter().map(String::as_str).collect();
                    if distinct.len() != spec.categories.len() || distinct.len() < 2 {
                        return Err(Error::InvalidSchema(format!(
                            "categorical feature {:?} needs at least 2 distinct categories",
                            spec.name
                        )));
                    }
                }
                _ => {}
            }
        }
        if classes[0] == classes[1] || classes.iter().any(String::is_empty) {
            return Err(Error::InvalidSchema(
                "class labels must be distinct and non-empty".into(),
            ));
        }
        Ok(FeatureSchema { features, classes })
    }

    pub fn features(&self) -> &[FeatureSpec] {
        &self.features
    }

    pub fn feature(&self, index: usize) -> &FeatureSpec {
        &self.features[index]
    }

    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    pub fn classes(&self) -> &[String; 2] {
        &self.classes
    }

    pub fn class_name(&self, class: Class) -> &str {
        &self.classes[class.index()]
    }

    pub fn class_by_name(&self, name: &str) -> Option<Class> {
        self.classes
            .iter()
            .position(|c| c == name)
            .and_then(Class::from_index)
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.features.iter().position(|f| f.name == name)
    }

    /// Ordinal code of `value` for a categorical feature.
    pub fn encode(&self, feature: usize, value: &str) -> Option<f64> {
        self.features[feature]
            .categories
            .iter()
            .position(|c| c == value)
            .map(|i| i as f64)
    }

    /// Category string for an ordinal code; `None` for continuous features or
    /// out-of-range codes.
    pub fn decode(&self, feature: usize, value: f64) -> Option<&str> {
        let spec = &self.features[feature];
        if !spec.is_categorical() || value < 0.0 || libm::trunc(value) != value {
            return None;
        }
        spec.categories.get(value as usize).map(String::as_str)
    }

    pub fn check(&self, instance: &Instance) -> Result<()> {
        if instance.len() != self.len() {
            return Err(Error::SchemaMismatch {
                expected: self.len(),
                found: instance.len(),
            });
        }
        for (i, (spec, &v)) in self.features.iter().zip(instance.values()).enumerate() {
            let ok = match spec.kind {
                FeatureKind::Continuous => v.is_finite(),
                FeatureKind::Categorical => self.decode(i, v).is_some(),
            };
            if !ok {
                return Err(Error::InvalidInstance(format!(
                    "value {v} out of domain for feature {:?}",
                    spec.name
                )));
            }
        }
        Ok(())
    }
}

/// Feature values aligned with the schema. Categorical values hold their
/// ordinal code.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Instance(Vec<f64>);

impl Instance {
    pub fn new(values: Vec<f64>) -> Self {
        Instance(values)
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn get(&self, feature: usize) -> f64 {
        self.0[feature]
    }

    pub fn set(&mut self, feature: usize, value: f64) {
        self.0[feature] = value;
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl From<Vec<f64>> for Instance {
    fn from(values: Vec<f64>) -> Self {
        Instance(values)
    }
}

/// A labelled row. `id` is the row's position in the source file and is the
/// identity used for exclusion and tie-breaking.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Row {
    pub id: usize,
    pub instance: Instance,
    pub label: Class,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitTag {
    Full,
    Train,
    Test,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub source: String,
    pub split: SplitTag,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    schema: FeatureSchema,
    rows: Vec<Row>,
    provenance: Provenance,
}

impl Dataset {
    pub fn new(schema: FeatureSchema, rows: Vec<Row>, provenance: Provenance) -> Result<Self> {
        for row in &rows {
            schema.check(&row.instance)?;
        }
        Ok(Dataset {
            schema,
            rows,
            provenance,
        })
    }

    pub fn schema(&self) -> &FeatureSchema {
        &self.schema
    }

    pub fn rows(&self) -> &[Row] {
        &self.rows
    }

    pub fn row(&self, index: usize) -> Option<&Row> {
        self.rows.get(index)
    }

    pub fn provenance(&self) -> &Provenance {
        &self.provenance
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn class_counts(&self) -> [usize; 2] {
        let mut counts = [0; 2];
        for row in &self.rows {
            counts[row.label.index()] += 1;
        }
        counts
    }

    /// Stratified, seeded partition into `(train, test)`. The test side holds
    /// `round(len * test_fraction)` rows, apportioned across classes by
    /// largest remainder; both sides keep source row order.
    pub fn split(&self, test_fraction: f64, seed: u64) -> Result<(Dataset, Dataset)> {
        if !(test_fraction > 0.0 && test_fraction < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "test fraction {test_fraction} not in (0, 1)"
            )));
        }
        if self.rows.is_empty() {
            return Err(Error::EmptyDataset);
        }
        let n = self.rows.len();
        let n_test = libm::round(n as f64 * test_fraction) as usize;
        if n_test == 0 || n_test == n {
            return Err(Error::DegenerateSplit {
                train: n - n_test,
                test: n_test,
            });
        }

        let mut by_class: [Vec<usize>; 2] = [Vec::new(), Vec::new()];
        for (pos, row) in self.rows.iter().enumerate() {
            by_class[row.label.index()].push(pos);
        }
        let exact: [f64; 2] = [0, 1].map(|c| by_class[c].len() as f64 * test_fraction);
        let mut quota: [usize; 2] = exact.map(|q| libm::floor(q) as usize);
        let mut remainder = n_test - quota[0] - quota[1];
        let mut order = [0usize, 1];
        order.sort_by(|&a, &b| {
            let ra = exact[a] - quota[a] as f64;
            let rb = exact[b] - quota[b] as f64;
            rb.total_cmp(&ra).then(a.cmp(&b))
        });
        for c in order {
            if remainder > 0 && quota[c] < by_class[c].len() {
                quota[c] += 1;
                remainder -= 1;
            }
        }

        let mut in_test = alloc::vec![false; n];
        for (c, positions) in by_class.iter_mut().enumerate() {
            let mut rng = rng_from(derive_seed(seed, streams::SPLIT, c as u64));
            positions.shuffle(&mut rng);
            for &pos in positions.iter().take(quota[c]) {
                in_test[pos] = true;
            }
        }

        let mut train = Vec::with_capacity(n - n_test);
        let mut test = Vec::with_capacity(n_test);
        for (pos, row) in self.rows.iter().enumerate() {
            if in_test[pos] {
                test.push(row.clone());
            } else {
                train.push(row.clone());
            }
        }
        let side = |rows, split| Dataset {
            schema: self.schema.clone(),
            rows,
            provenance: Provenance {
                source: self.provenance.source.clone(),
                split,
            },
        };
        Ok((side(train, SplitTag::Train), side(test, SplitTag::Test)))
    }
}

/// Median with the mean-of-middle-pair convention for even lengths. Sorts
/// `values` in place. Returns `None` for an empty slice.
pub fn median(values: &mut [f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    values.sort_by(f64::total_cmp);
    let n = values.len();
    Some(if n % 2 == 1 {
        values[n / 2]
    } else {
        (values[n / 2 - 1] + values[n / 2]) / 2.0
    })
}

/// Median absolute deviation from the median.
pub fn median_absolute_deviation(values: &[f64]) -> Option<f64> {
    let mut scratch = values.to_vec();
    let center = median(&mut scratch)?;
    for (s, v) in scratch.iter_mut().zip(values) {
        *s = libm::fabs(v - center);
    }
    median(&mut scratch)
}

/// Linear-interpolation quantile of sorted data.
fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * q;
    let lo = libm::floor(h) as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContinuousStats {
    pub median: f64,
    pub mad: f64,
    pub min: f64,
    pub max: f64,
    /// Interior quantile edges, strictly increasing.
    pub bin_edges: Vec<f64>,
    /// Zero MAD; proximity scaling falls back to 1.
    pub degenerate: bool,
    /// Every training value is a whole number, so sampled values are rounded.
    pub integral: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeatureSummary {
    Continuous(ContinuousStats),
    Categorical { counts: Vec<usize> },
}

/// Per-feature statistics of the training split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureStats {
    features: Vec<FeatureSummary>,
    bins: usize,
}

impl FeatureStats {
    pub fn compute(train: &Dataset) -> Result<Self> {
        Self::with_bins(train, DEFAULT_BINS)
    }

    pub fn with_bins(train: &Dataset, bins: usize) -> Result<Self> {
        if train.is_empty() {
            return Err(Error::EmptyDataset);
        }
        if bins == 0 {
            return Err(Error::InvalidConfig("bin count must be positive".into()));
        }
        let schema = train.schema();
        let features = schema
            .features()
            .iter()
            .enumerate()
            .map(|(f, spec)| match spec.kind {
                FeatureKind::Categorical => {
                    let mut counts = alloc::vec![0; spec.categories.len()];
                    for row in train.rows() {
                        counts[row.instance.get(f) as usize] += 1;
                    }
                    FeatureSummary::Categorical { counts }
                }
                FeatureKind::Continuous => {
                    let column: Vec<f64> = train.rows().iter().map(|r| r.instance.get(f)).collect();
                    FeatureSummary::Continuous(continuous_stats(&column, bins))
                }
            })
            .collect();
        Ok(FeatureStats { features, bins })
    }

    pub fn bins(&self) -> usize {
        self.bins
    }

    pub fn summaries(&self) -> &[FeatureSummary] {
        &self.features
    }

    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    pub fn continuous(&self, feature: usize) -> Option<&ContinuousStats> {
        match &self.features[feature] {
            FeatureSummary::Continuous(c) => Some(c),
            FeatureSummary::Categorical { .. } => None,
        }
    }

    /// Divisor for MAD-scaled distances: the MAD, or 1 for degenerate and
    /// categorical features.
    pub fn scale(&self, feature: usize) -> f64 {
        match self.continuous(feature) {
            Some(c) if !c.degenerate => c.mad,
            _ => 1.0,
        }
    }

    /// Discretised code used by the Hamming distance: the quantile bin for
    /// continuous features, the ordinal code itself for categoricals.
    pub fn bin_of(&self, feature: usize, value: f64) -> usize {
        match &self.features[feature] {
            FeatureSummary::Continuous(c) => c.bin_edges.partition_point(|&e| e < value),
            FeatureSummary::Categorical { .. } => value as usize,
        }
    }

    pub fn degenerate_features(&self) -> Vec<usize> {
        (0..self.features.len())
            .filter(|&f| self.continuous(f).is_some_and(|c| c.degenerate))
            .collect()
    }
}

fn continuous_stats(column: &[f64], bins: usize) -> ContinuousStats {
    let mut sorted = column.to_vec();
    let median = median(&mut sorted).expect("non-empty column");
    let mad = median_absolute_deviation(column).expect("non-empty column");
    let mut bin_edges: Vec<f64> = Vec::with_capacity(bins.saturating_sub(1));
    for i in 1..bins {
        let edge = quantile_sorted(&sorted, i as f64 / bins as f64);
        if bin_edges.last().is_none_or(|&last| edge > last) {
            bin_edges.push(edge);
        }
    }
    ContinuousStats {
        median,
        mad,
        min: sorted[0],
        max: sorted[sorted.len() - 1],
        bin_edges,
        degenerate: mad == 0.0,
        integral: column.iter().all(|&v| libm::trunc(v) == v),
    }
}
