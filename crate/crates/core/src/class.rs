//! Glycemic outcome classes and per-class vectors.

use core::cmp::Ordering;
use core::fmt;
use core::str::FromStr;

#[cfg(feature = "serde")]
use serde::{Deserialize, Serialize};

/// Four-way glycemic outcome.
///
/// Vectors indexed by class (distributions, counts, confusion-matrix rows)
/// always use the order `[VerifiedDiabetes, Prediabetes, AtRisk, NoDiabetes]`,
/// which is also descending severity.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum GlycemicClass {
    VerifiedDiabetes,
    Prediabetes,
    AtRisk,
    NoDiabetes,
}

impl GlycemicClass {
    pub const ALL: [GlycemicClass; 4] = [
        GlycemicClass::VerifiedDiabetes,
        GlycemicClass::Prediabetes,
        GlycemicClass::AtRisk,
        GlycemicClass::NoDiabetes,
    ];

    /// Position in class-indexed vectors.
    pub const fn index(self) -> usize {
        match self {
            GlycemicClass::VerifiedDiabetes => 0,
            GlycemicClass::Prediabetes => 1,
            GlycemicClass::AtRisk => 2,
            GlycemicClass::NoDiabetes => 3,
        }
    }

    pub fn from_index(index: usize) -> Option<Self> {
        Self::ALL.get(index).copied()
    }

    /// 3 for verified diabetes down to 0 for no diabetes.
    pub const fn severity(self) -> u8 {
        3 - self.index() as u8
    }

    pub const fn as_str(self) -> &'static str {
        match self {
            GlycemicClass::VerifiedDiabetes => "verified_diabetes",
            GlycemicClass::Prediabetes => "prediabetes",
            GlycemicClass::AtRisk => "at_risk",
            GlycemicClass::NoDiabetes => "no_diabetes",
        }
    }

    pub const fn display_name(self) -> &'static str {
        match self {
            GlycemicClass::VerifiedDiabetes => "Verified Diabetes",
            GlycemicClass::Prediabetes => "Prediabetes",
            GlycemicClass::AtRisk => "At Risk",
            GlycemicClass::NoDiabetes => "No Diabetes",
        }
    }
}

/// Ordered by severity: `NoDiabetes < AtRisk < Prediabetes < VerifiedDiabetes`.
impl Ord for GlycemicClass {
    fn cmp(&self, other: &Self) -> Ordering {
        self.severity().cmp(&other.severity())
    }
}

impl PartialOrd for GlycemicClass {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for GlycemicClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown glycemic class `{0}`")]
pub struct UnknownClass(pub alloc::string::String);

impl FromStr for GlycemicClass {
    type Err = UnknownClass;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|c| c.as_str() == s)
            .ok_or_else(|| UnknownClass(s.into()))
    }
}

/// Tolerance on `sum == 1` for a distribution to count as normalized.
pub const DISTRIBUTION_TOLERANCE: f64 = 1e-9;

/// Probability over the four classes in fixed class order.
#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
#[cfg_attr(feature = "serde", serde(transparent))]
pub struct ClassDistribution(pub [f64; 4]);

impl ClassDistribution {
    pub fn one_hot(class: GlycemicClass) -> Self {
        let mut p = [0.0; 4];
        p[class.index()] = 1.0;
        ClassDistribution(p)
    }

    /// Empirical distribution of `counts`; `None` when there are no counts.
    pub fn from_counts(counts: &ClassCounts) -> Option<Self> {
        let total = counts.total();
        if total == 0 {
            return None;
        }
        let n = total as f64;
        let mut p = [0.0; 4];
        for (slot, &c) in p.iter_mut().zip(counts.0.iter()) {
            *slot = c as f64 / n;
        }
        Some(ClassDistribution(p))
    }

    pub fn get(&self, class: GlycemicClass) -> f64 {
        self.0[class.index()]
    }

    pub fn sum(&self) -> f64 {
        self.0.iter().sum()
    }

    pub fn is_normalized(&self) -> bool {
        self.0.iter().all(|p| p.is_finite() && *p >= 0.0)
            && libm::fabs(self.sum() - 1.0) <= DISTRIBUTION_TOLERANCE
    }

    /// Argmax; exact ties go to the more severe class.
    pub fn decided(&self) -> GlycemicClass {
        let mut best = 0;
        for i in 1..4 {
            if self.0[i] > self.0[best] {
                best = i;
            }
        }
        GlycemicClass::ALL[best]
    }

    /// `weight * self + (1 - weight) * other`.
    pub fn mix(&self, weight: f64, other: &ClassDistribution) -> ClassDistribution {
        let mut p = [0.0; 4];
        for (i, slot) in p.iter_mut().enumerate() {
            *slot = weight * self.0[i] + (1.0 - weight) * other.0[i];
        }
        ClassDistribution(p)
    }
}

/// Record counts per class in fixed class order.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
#[cfg_attr(feature = "serde", serde(transparent))]
pub struct ClassCounts(pub [u64; 4]);

impl ClassCounts {
    pub fn from_labels<'a, I: IntoIterator<Item = &'a GlycemicClass>>(labels: I) -> Self {
        let mut counts = ClassCounts::default();
        for &c in labels {
            counts.add(c);
        }
        counts
    }

    pub fn add(&mut self, class: GlycemicClass) {
        self.0[class.index()] += 1;
    }

    pub fn remove(&mut self, class: GlycemicClass) {
        self.0[class.index()] -= 1;
    }

    pub fn get(&self, class: GlycemicClass) -> u64 {
        self.0[class.index()]
    }

    pub fn total(&self) -> u64 {
        self.0.iter().sum()
    }

    /// True when at most one class is present.
    pub fn is_pure(&self) -> bool {
        self.0.iter().filter(|&&c| c > 0).count() <= 1
    }

    /// Most frequent class; ties go to the more severe class.
    pub fn majority(&self) -> GlycemicClass {
        let mut best = 0;
        for i in 1..4 {
            if self.0[i] > self.0[best] {
                best = i;
            }
        }
        GlycemicClass::ALL[best]
    }
}

impl core::ops::Add for ClassCounts {
    type Output = ClassCounts;

    fn add(self, rhs: ClassCounts) -> ClassCounts {
        let mut out = self;
        for i in 0..4 {
            out.0[i] += rhs.0[i];
        }
        out
    }
}
