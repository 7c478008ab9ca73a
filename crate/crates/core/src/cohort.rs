//! Cohort datasets and preprocessing.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::String;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
#[cfg(feature = "serde")]
use serde::{Deserialize, Serialize};

use crate::class::{ClassCounts, GlycemicClass};
use crate::record::{AttributeKind, Feature, PatientRecord};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum CohortError {
    #[error("duplicate record id `{0}`")]
    DuplicateId(String),
    #[error("record {index} (`{id}`): {field}: {message}")]
    InvalidRecord {
        index: usize,
        id: String,
        field: &'static str,
        message: String,
    },
    #[error("standard deviation is zero; normalization is undefined")]
    DegenerateSigma,
    #[error("need at least {needed} values, got {got}")]
    TooFewValues { needed: usize, got: usize },
    #[error("every value is missing")]
    AllMissing,
    #[error("record `{id}` has no label")]
    UnlabeledRecord { id: String },
    #[error("train fraction {0} must lie strictly between 0 and 1")]
    InvalidFraction(f64),
    #[error("record `{id}` has no glycemic measurement (fpg, hba1c, ogtt_2h, random_glucose)")]
    InsufficientGlycemicData { id: String },
    #[error("invalid cohort statistics: {0}")]
    InvalidStatistics(String),
}

/// Column descriptor of a dataset schema.
#[derive(Clone, Debug, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct FeatureDescriptor {
    pub name: String,
    pub kind: AttributeKind,
    pub unit: String,
}

impl From<Feature> for FeatureDescriptor {
    fn from(f: Feature) -> Self {
        FeatureDescriptor {
            name: f.name().into(),
            kind: f.kind(),
            unit: f.unit().into(),
        }
    }
}

/// Where a dataset came from.
#[derive(Clone, Debug, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum DatasetSource {
    File { path: String },
    Synthetic { seed: u64 },
    Derived { from: String },
}

/// Validated collection of records with unique ids.
#[derive(Clone, Debug, PartialEq)]
pub struct CohortDataset {
    schema: Vec<FeatureDescriptor>,
    records: Vec<PatientRecord>,
    source: DatasetSource,
}

impl CohortDataset {
    /// Checks id uniqueness and per-record range invariants.
    pub fn new(records: Vec<PatientRecord>, source: DatasetSource) -> Result<Self, CohortError> {
        let mut seen = BTreeSet::new();
        for (index, r) in records.iter().enumerate() {
            if !seen.insert(r.id.as_str()) {
                return Err(CohortError::DuplicateId(r.id.clone()));
            }
            if let Err(v) = r.validate() {
                return Err(CohortError::InvalidRecord {
                    index,
                    id: r.id.clone(),
                    field: v.field,
                    message: v.message,
                });
            }
        }
        Ok(CohortDataset {
            schema: Feature::ALL.into_iter().map(FeatureDescriptor::from).collect(),
            records,
            source,
        })
    }

    pub fn schema(&self) -> &[FeatureDescriptor] {
        &self.schema
    }

    pub fn records(&self) -> &[PatientRecord] {
        &self.records
    }

    pub fn source(&self) -> &DatasetSource {
        &self.source
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn into_records(self) -> Vec<PatientRecord> {
        self.records
    }

    /// Labels of every record; fails on the first unlabeled one.
    pub fn labels(&self) -> Result<Vec<GlycemicClass>, CohortError> {
        self.records
            .iter()
            .map(|r| {
                r.label
                    .ok_or_else(|| CohortError::UnlabeledRecord { id: r.id.clone() })
            })
            .collect()
    }

    pub fn class_counts(&self) -> ClassCounts {
        let mut counts = ClassCounts::default();
        for c in self.records.iter().filter_map(|r| r.label) {
            counts.add(c);
        }
        counts
    }

    /// Present values of a numeric feature.
    pub fn column(&self, feature: Feature) -> Vec<Option<f64>> {
        self.records.iter().map(|r| r.numeric(feature)).collect()
    }
}

/// Mean and standard deviation of one feature, in feature units.
#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct NormalizationParams {
    pub mean: f64,
    pub std_dev: f64,
}

impl NormalizationParams {
    /// Fits mean and population standard deviation (divide by n).
    pub fn fit(values: &[f64]) -> Result<Self, CohortError> {
        if values.len() < 2 {
            return Err(CohortError::TooFewValues {
                needed: 2,
                got: values.len(),
            });
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
        Ok(NormalizationParams {
            mean,
            std_dev: libm::sqrt(var),
        })
    }

    pub fn is_degenerate(&self) -> bool {
        self.std_dev == 0.0
    }

    pub fn apply(&self, x: f64) -> f64 {
        (x - self.mean) / self.std_dev
    }

    pub fn invert(&self, z: f64) -> f64 {
        z * self.std_dev + self.mean
    }
}

/// Standardizes `values` as `(x - mean) / sd`. Given params are used
/// unchanged (test data reuses training params); otherwise they are fitted.
pub fn normalize(
    values: &[f64],
    params: Option<NormalizationParams>,
) -> Result<(Vec<f64>, NormalizationParams), CohortError> {
    let params = match params {
        Some(p) => p,
        None => NormalizationParams::fit(values)?,
    };
    if params.is_degenerate() {
        return Err(CohortError::DegenerateSigma);
    }
    Ok((values.iter().map(|&x| params.apply(x)).collect(), params))
}

/// Per-feature normalization params over the dataset's numeric features.
/// Features with fewer than two present values are skipped.
pub fn fit_normalization(dataset: &CohortDataset) -> BTreeMap<Feature, NormalizationParams> {
    let mut out = BTreeMap::new();
    for feature in Feature::numeric() {
        let present: Vec<f64> = dataset.column(feature).into_iter().flatten().collect();
        if let Ok(p) = NormalizationParams::fit(&present) {
            out.insert(feature, p);
        }
    }
    out
}

/// Replaces each missing slot with the mean of the present values.
pub fn impute_missing(values: &[Option<f64>]) -> Result<Vec<f64>, CohortError> {
    let present: Vec<f64> = values.iter().flatten().copied().collect();
    if present.is_empty() {
        return Err(CohortError::AllMissing);
    }
    let mean = present.iter().sum::<f64>() / present.len() as f64;
    Ok(values.iter().map(|v| v.unwrap_or(mean)).collect())
}

/// Mean imputation fitted on one dataset and applied to others.
#[derive(Clone, Debug, Default, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct Imputer {
    pub means: BTreeMap<Feature, f64>,
    /// Numeric features with no present value at fit time; left missing.
    pub skipped: Vec<Feature>,
}

impl Imputer {
    pub fn fit(dataset: &CohortDataset) -> Self {
        let mut imputer = Imputer::default();
        for feature in Feature::numeric() {
            let present: Vec<f64> = dataset.column(feature).into_iter().flatten().collect();
            if present.is_empty() {
                imputer.skipped.push(feature);
            } else {
                let mean = present.iter().sum::<f64>() / present.len() as f64;
                imputer.means.insert(feature, mean);
            }
        }
        imputer
    }

    pub fn apply_record(&self, record: &mut PatientRecord) {
        for (&feature, &mean) in &self.means {
            if record.numeric(feature).is_none() {
                record.set_numeric(feature, Some(mean));
            }
        }
    }

    /// Imputed copy of `dataset`. Labels and ids are untouched.
    pub fn apply(&self, dataset: &CohortDataset) -> Result<CohortDataset, CohortError> {
        let mut records = dataset.records().to_vec();
        for r in &mut records {
            self.apply_record(r);
        }
        CohortDataset::new(records, dataset.source().clone())
    }
}

/// Per-class train quotas: floor of `fraction * size` plus one extra for
/// the classes with the largest remainders, so the train total is
/// `round(fraction * n)`. Ties go to the more severe class.
pub fn stratified_quotas(counts: &ClassCounts, fraction: f64) -> [u64; 4] {
    let total = counts.total() as f64;
    let target = libm::round(fraction * total) as u64;
    let mut quotas = [0u64; 4];
    let mut remainders = [0.0f64; 4];
    for i in 0..4 {
        let exact = fraction * counts.0[i] as f64;
        quotas[i] = libm::floor(exact) as u64;
        remainders[i] = exact - quotas[i] as f64;
    }
    let mut left = target.saturating_sub(quotas.iter().sum());
    let mut order = [0usize, 1, 2, 3];
    order.sort_by(|&a, &b| remainders[b].total_cmp(&remainders[a]).then(a.cmp(&b)));
    for &i in &order {
        if left == 0 {
            break;
        }
        if quotas[i] < counts.0[i] {
            quotas[i] += 1;
            left -= 1;
        }
    }
    quotas
}

/// Class-stratified random partition into (train, test). Records keep their
/// original relative order in both parts.
pub fn stratified_split(
    dataset: &CohortDataset,
    train_fraction: f64,
    seed: u64,
) -> Result<(CohortDataset, CohortDataset), CohortError> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(CohortError::InvalidFraction(train_fraction));
    }
    let labels = dataset.labels()?;
    let quotas = stratified_quotas(&ClassCounts::from_labels(&labels), train_fraction);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut in_train = alloc::vec![false; labels.len()];
    for class in GlycemicClass::ALL {
        let mut members: Vec<usize> = labels
            .iter()
            .enumerate()
            .filter(|(_, &c)| c == class)
            .map(|(i, _)| i)
            .collect();
        members.shuffle(&mut rng);
        for &i in members.iter().take(quotas[class.index()] as usize) {
            in_train[i] = true;
        }
    }
    let (mut train, mut test) = (Vec::new(), Vec::new());
    for (record, train_side) in dataset.records().iter().zip(in_train) {
        if train_side {
            train.push(record.clone());
        } else {
            test.push(record.clone());
        }
    }
    let source = dataset.source().clone();
    Ok((
        CohortDataset::new(train, source.clone())?,
        CohortDataset::new(test, source)?,
    ))
}
