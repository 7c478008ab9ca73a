//! Multiclass evaluation: confusion matrices, one-vs-rest metrics, Cohen's
//! kappa, concordance and subgroup analyses.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

#[cfg(feature = "serde")]
use serde::{Deserialize, Serialize};

use crate::class::GlycemicClass;
use crate::knowledge::Diagnoser;
use crate::record::{Feature, PatientRecord};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum MetricsError {
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("no observations")]
    Empty,
    #[error("confusion matrix is empty")]
    EmptyMatrix,
    #[error("chance agreement is 1; kappa is undefined")]
    DegenerateMarginals,
    #[error("age bands {0} and {1} overlap")]
    OverlappingBands(String, String),
    #[error("invalid age band {0}")]
    InvalidBand(String),
    #[error("record `{0}` has no label")]
    UnlabeledRecord(String),
    #[error("feature `{0}` of the subset is not in the full set")]
    InvalidSubset(String),
}

/// Rows are the reference class, columns the predicted class, both in
/// class order.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
#[cfg_attr(feature = "serde", serde(transparent))]
pub struct ConfusionMatrix(pub [[u64; 4]; 4]);

impl ConfusionMatrix {
    pub fn from_pairs(truth: &[GlycemicClass], predicted: &[GlycemicClass]) -> Result<Self, MetricsError> {
        if truth.len() != predicted.len() {
            return Err(MetricsError::LengthMismatch {
                left: truth.len(),
                right: predicted.len(),
            });
        }
        if truth.is_empty() {
            return Err(MetricsError::Empty);
        }
        let mut cm = ConfusionMatrix::default();
        for (t, p) in truth.iter().zip(predicted) {
            cm.record(*t, *p);
        }
        Ok(cm)
    }

    pub fn record(&mut self, truth: GlycemicClass, predicted: GlycemicClass) {
        self.0[truth.index()][predicted.index()] += 1;
    }

    pub fn get(&self, truth: GlycemicClass, predicted: GlycemicClass) -> u64 {
        self.0[truth.index()][predicted.index()]
    }

    pub fn total(&self) -> u64 {
        self.0.iter().flatten().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..4).map(|i| self.0[i][i]).sum()
    }

    pub fn row_total(&self, class: GlycemicClass) -> u64 {
        self.0[class.index()].iter().sum()
    }

    pub fn column_total(&self, class: GlycemicClass) -> u64 {
        self.0.iter().map(|r| r[class.index()]).sum()
    }

    /// `trace / total`; `None` when empty.
    pub fn accuracy(&self) -> Option<f64> {
        ratio(self.trace(), self.total())
    }

    /// One-vs-rest reduction for `class`.
    pub fn class_metrics(&self, class: GlycemicClass) -> Result<ClassMetrics, MetricsError> {
        let total = self.total();
        if total == 0 {
            return Err(MetricsError::EmptyMatrix);
        }
        let tp = self.get(class, class);
        let fn_ = self.row_total(class) - tp;
        let fp = self.column_total(class) - tp;
        let tn = total - tp - fn_ - fp;
        Ok(ClassMetrics {
            class,
            tp,
            fp,
            fn_,
            tn,
            accuracy: ratio(tp + tn, total),
            sensitivity: ratio(tp, tp + fn_),
            specificity: ratio(tn, tn + fp),
            precision: ratio(tp, tp + fp),
        })
    }

    pub fn all_class_metrics(&self) -> Result<Vec<ClassMetrics>, MetricsError> {
        GlycemicClass::ALL.iter().map(|&c| self.class_metrics(c)).collect()
    }

    /// Cohen's kappa with observed and chance agreement.
    pub fn kappa(&self) -> Result<AgreementReport, MetricsError> {
        let total = self.total();
        if total == 0 {
            return Err(MetricsError::EmptyMatrix);
        }
        let n = total as u128;
        let chance: u128 = GlycemicClass::ALL
            .iter()
            .map(|&c| self.row_total(c) as u128 * self.column_total(c) as u128)
            .sum();
        if chance == n * n {
            return Err(MetricsError::DegenerateMarginals);
        }
        let trace = self.trace() as u128;
        let p_o = trace as f64 / total as f64;
        let p_e = chance as f64 / (n * n) as f64;
        // (n·trace − Σ r·c) / (n² − Σ r·c): the same ratio without
        // cancellation in 1 − p_e
        let num = (n * trace) as f64 - chance as f64;
        let den = (n * n - chance) as f64;
        Ok(AgreementReport {
            n: total,
            agreements: self.trace(),
            p_o,
            p_e,
            kappa: num / den,
            concordance: p_o,
        })
    }
}

fn ratio(num: u64, den: u64) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

/// One-vs-rest counts and ratios. Ratios with a zero denominator are `None`.
#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct ClassMetrics {
    pub class: GlycemicClass,
    pub tp: u64,
    pub fp: u64,
    #[cfg_attr(feature = "serde", serde(rename = "fn"))]
    pub fn_: u64,
    pub tn: u64,
    pub accuracy: Option<f64>,
    pub sensitivity: Option<f64>,
    pub specificity: Option<f64>,
    pub precision: Option<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct AgreementReport {
    pub n: u64,
    pub agreements: u64,
    pub p_o: f64,
    pub p_e: f64,
    pub kappa: f64,
    pub concordance: f64,
}

/// Fraction of positions where both lists agree.
pub fn concordance_rate(a: &[GlycemicClass], b: &[GlycemicClass]) -> Result<f64, MetricsError> {
    if a.len() != b.len() {
        return Err(MetricsError::LengthMismatch {
            left: a.len(),
            right: b.len(),
        });
    }
    if a.is_empty() {
        return Err(MetricsError::Empty);
    }
    let same = a.iter().zip(b).filter(|(x, y)| x == y).count();
    Ok(same as f64 / a.len() as f64)
}

/// Closed integer age range `[lo, hi]` in years.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct AgeBand {
    pub lo: u32,
    pub hi: u32,
}

impl AgeBand {
    pub const fn new(lo: u32, hi: u32) -> Self {
        AgeBand { lo, hi }
    }

    /// Whole years of age are compared, so 40.7 falls in `[20, 40]`.
    pub fn contains(&self, age: f64) -> bool {
        let years = libm::floor(age);
        years >= self.lo as f64 && years <= self.hi as f64
    }

    pub fn label(&self) -> String {
        format!("{}-{}", self.lo, self.hi)
    }
}

pub const DEFAULT_AGE_BANDS: [AgeBand; 4] = [
    AgeBand::new(20, 40),
    AgeBand::new(41, 60),
    AgeBand::new(61, 80),
    AgeBand::new(81, 100),
];

pub fn check_bands(bands: &[AgeBand]) -> Result<(), MetricsError> {
    for b in bands {
        if b.lo > b.hi {
            return Err(MetricsError::InvalidBand(b.label()));
        }
    }
    for (i, a) in bands.iter().enumerate() {
        for b in &bands[i + 1..] {
            if a.lo <= b.hi && b.lo <= a.hi {
                return Err(MetricsError::OverlappingBands(a.label(), b.label()));
            }
        }
    }
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct SubgroupRow {
    pub band: AgeBand,
    pub patients: u64,
    pub correct: u64,
    pub misclassified: u64,
}

/// Counts per band from `(age, correct)` outcomes. Ages outside every band
/// are ignored.
pub fn subgroup_counts<I>(outcomes: I, bands: &[AgeBand]) -> Result<Vec<SubgroupRow>, MetricsError>
where
    I: IntoIterator<Item = (f64, bool)>,
{
    check_bands(bands)?;
    let mut rows: Vec<SubgroupRow> = bands
        .iter()
        .map(|&band| SubgroupRow {
            band,
            patients: 0,
            correct: 0,
            misclassified: 0,
        })
        .collect();
    for (age, ok) in outcomes {
        if let Some(row) = rows.iter_mut().find(|r| r.band.contains(age)) {
            row.patients += 1;
            if ok {
                row.correct += 1;
            } else {
                row.misclassified += 1;
            }
        }
    }
    Ok(rows)
}

/// Per-band accuracy of `model` against record labels. Records without an
/// age are skipped; records without a label are an error.
pub fn subgroup_report<D: Diagnoser + ?Sized>(
    records: &[PatientRecord],
    model: &D,
    bands: &[AgeBand],
) -> Result<Vec<SubgroupRow>, MetricsError> {
    let mut outcomes = Vec::with_capacity(records.len());
    for r in records {
        let label = r.label.ok_or_else(|| MetricsError::UnlabeledRecord(r.id.clone()))?;
        if let Some(age) = r.age {
            outcomes.push((age, model.diagnose(r) == label));
        }
    }
    subgroup_counts(outcomes, bands)
}

/// `record` with every feature outside `keep` set to missing.
pub fn mask_features(record: &PatientRecord, keep: &[Feature]) -> PatientRecord {
    let mut out = record.clone();
    for f in Feature::ALL {
        if !keep.contains(&f) {
            out.clear(f);
        }
    }
    out
}

/// Concordance with labels when only `set_a`, then only `set_b`, is observed.
pub fn feature_set_comparison<D: Diagnoser + ?Sized>(
    records: &[PatientRecord],
    model: &D,
    set_a: &[Feature],
    set_b: &[Feature],
) -> Result<(f64, f64), MetricsError> {
    if let Some(f) = set_b.iter().find(|f| !set_a.contains(f)) {
        return Err(MetricsError::InvalidSubset(f.name().into()));
    }
    let labels = records
        .iter()
        .map(|r| r.label.ok_or_else(|| MetricsError::UnlabeledRecord(r.id.clone())))
        .collect::<Result<Vec<_>, _>>()?;
    let run = |keep: &[Feature]| -> Vec<GlycemicClass> {
        records.iter().map(|r| model.diagnose(&mask_features(r, keep))).collect()
    };
    Ok((concordance_rate(&run(set_a), &labels)?, concordance_rate(&run(set_b), &labels)?))
}

/// A per-class figure as printed in a published table.
#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct ReportedFigures {
    pub class: GlycemicClass,
    /// "Correct (%)" column, as a ratio.
    pub correct: f64,
    pub correct_decimals: u32,
    pub sensitivity: f64,
    pub specificity: f64,
    /// Decimals printed for sensitivity and specificity.
    pub ratio_decimals: u32,
}

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct Divergence {
    pub class: GlycemicClass,
    pub figure: String,
    pub reported: f64,
    pub computed: Option<f64>,
}

fn rounds_to(computed: Option<f64>, reported: f64, decimals: u32) -> bool {
    let Some(c) = computed else { return false };
    let half = 0.5 * libm::pow(10.0, -(decimals as f64));
    libm::fabs(c - reported) <= half + 1e-12
}

/// Figures that are not the rounding of the value computed from the
/// matrix. "Correct" is read as per-class recall.
pub fn flag_divergences(cm: &ConfusionMatrix, reported: &[ReportedFigures]) -> Result<Vec<Divergence>, MetricsError> {
    let mut out = Vec::new();
    for r in reported {
        let m = cm.class_metrics(r.class)?;
        let checks = [
            ("correct", r.correct, r.correct_decimals, m.sensitivity),
            ("sensitivity", r.sensitivity, r.ratio_decimals, m.sensitivity),
            ("specificity", r.specificity, r.ratio_decimals, m.specificity),
        ];
        for (figure, value, decimals, computed) in checks {
            if !rounds_to(computed, value, decimals) {
                out.push(Divergence {
                    class: r.class,
                    figure: figure.into(),
                    reported: value,
                    computed,
                });
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use GlycemicClass::*;

    #[test]
    fn two_by_two_kappa() {
        let mut cm = ConfusionMatrix::default();
        cm.0[0][0] = 50;
        cm.0[0][1] = 10;
        cm.0[1][0] = 5;
        cm.0[1][1] = 35;
        let k = cm.kappa().unwrap();
        assert!((k.p_o - 0.85).abs() < 1e-12);
        assert!((k.p_e - 0.51).abs() < 1e-12);
        assert!((k.kappa - 0.34 / 0.49).abs() < 1e-12);
    }

    #[test]
    fn degenerate_and_empty() {
        let mut cm = ConfusionMatrix::default();
        assert_eq!(cm.kappa(), Err(MetricsError::EmptyMatrix));
        cm.0[2][2] = 7;
        assert_eq!(cm.kappa(), Err(MetricsError::DegenerateMarginals));
        let m = cm.class_metrics(VerifiedDiabetes).unwrap();
        assert_eq!(m.sensitivity, None);
        assert_eq!(m.specificity, Some(1.0));
    }

    #[test]
    fn lengths_must_match() {
        assert!(matches!(
            ConfusionMatrix::from_pairs(&[AtRisk; 3], &[AtRisk; 4]),
            Err(MetricsError::LengthMismatch { .. })
        ));
        assert!(concordance_rate(&[AtRisk], &[]).is_err());
    }

    #[test]
    fn bands() {
        assert!(matches!(
            check_bands(&[AgeBand::new(20, 40), AgeBand::new(35, 60)]),
            Err(MetricsError::OverlappingBands(..))
        ));
        check_bands(&DEFAULT_AGE_BANDS).unwrap();
        let mut outcomes = vec![(70.0, true); 315];
        outcomes.extend(vec![(65.0, false); 5]);
        outcomes.push((15.0, true));
        let rows = subgroup_counts(outcomes, &DEFAULT_AGE_BANDS).unwrap();
        assert_eq!((rows[2].patients, rows[2].correct, rows[2].misclassified), (320, 315, 5));
        assert_eq!(rows.iter().map(|r| r.patients).sum::<u64>(), 320);
    }

    #[test]
    fn rounding_check() {
        assert!(rounds_to(Some(0.9809), 0.98, 2));
        assert!(!rounds_to(Some(0.9809), 0.90, 2));
        assert!(!rounds_to(Some(1.0), 0.998, 3));
        assert!(!rounds_to(None, 0.5, 2));
    }
}
