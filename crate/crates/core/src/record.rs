//! Patient records and attribute lookup.

use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

#[cfg(feature = "serde")]
use serde::{Deserialize, Serialize};

use crate::class::GlycemicClass;

/// Whether an attribute is compared numerically or by level equality.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum AttributeKind {
    Numeric,
    Categorical,
}

/// The clinical factors carried by a [`PatientRecord`], in file column order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum Feature {
    Age,
    Sex,
    FamilyHistory,
    PhysicalActivity,
    Bmi,
    Fpg,
    Hba1c,
    #[cfg_attr(feature = "serde", serde(rename = "ogtt_2h"))]
    Ogtt2h,
    RandomGlucose,
    Sbp,
    Dbp,
    Triglycerides,
    Hdl,
    Waist,
    Symptoms,
    BalancedDiet,
    HtnMedication,
}

const BOOL_LEVELS: &[&str] = &["true", "false"];

impl Feature {
    pub const ALL: [Feature; 17] = [
        Feature::Age,
        Feature::Sex,
        Feature::FamilyHistory,
        Feature::PhysicalActivity,
        Feature::Bmi,
        Feature::Fpg,
        Feature::Hba1c,
        Feature::Ogtt2h,
        Feature::RandomGlucose,
        Feature::Sbp,
        Feature::Dbp,
        Feature::Triglycerides,
        Feature::Hdl,
        Feature::Waist,
        Feature::Symptoms,
        Feature::BalancedDiet,
        Feature::HtnMedication,
    ];

    /// Laboratory glucose measurements; at least one is needed for labeling.
    pub const GLYCEMIC: [Feature; 4] = [
        Feature::Fpg,
        Feature::Hba1c,
        Feature::Ogtt2h,
        Feature::RandomGlucose,
    ];

    pub const fn name(self) -> &'static str {
        match self {
            Feature::Age => "age",
            Feature::Sex => "sex",
            Feature::FamilyHistory => "family_history",
            Feature::PhysicalActivity => "physical_activity",
            Feature::Bmi => "bmi",
            Feature::Fpg => "fpg",
            Feature::Hba1c => "hba1c",
            Feature::Ogtt2h => "ogtt_2h",
            Feature::RandomGlucose => "random_glucose",
            Feature::Sbp => "sbp",
            Feature::Dbp => "dbp",
            Feature::Triglycerides => "triglycerides",
            Feature::Hdl => "hdl",
            Feature::Waist => "waist",
            Feature::Symptoms => "symptoms",
            Feature::BalancedDiet => "balanced_diet",
            Feature::HtnMedication => "htn_medication",
        }
    }

    pub fn from_name(name: &str) -> Option<Feature> {
        Feature::ALL.into_iter().find(|f| f.name() == name)
    }

    pub const fn kind(self) -> AttributeKind {
        match self {
            Feature::Sex
            | Feature::FamilyHistory
            | Feature::PhysicalActivity
            | Feature::Symptoms
            | Feature::BalancedDiet
            | Feature::HtnMedication => AttributeKind::Categorical,
            _ => AttributeKind::Numeric,
        }
    }

    pub const fn unit(self) -> &'static str {
        match self {
            Feature::Age => "years",
            Feature::Bmi => "kg/m2",
            Feature::Fpg | Feature::Ogtt2h | Feature::RandomGlucose => "mg/dL",
            Feature::Triglycerides | Feature::Hdl => "mg/dL",
            Feature::Hba1c => "%",
            Feature::Sbp | Feature::Dbp => "mmHg",
            Feature::Waist => "cm",
            _ => "",
        }
    }

    /// Levels of a categorical feature; the first is the "positive" level
    /// (male, true, high). Empty for numeric features.
    pub const fn levels(self) -> &'static [&'static str] {
        match self {
            Feature::Sex => &["male", "female"],
            Feature::PhysicalActivity => &["high", "low"],
            Feature::FamilyHistory
            | Feature::Symptoms
            | Feature::BalancedDiet
            | Feature::HtnMedication => BOOL_LEVELS,
            _ => &[],
        }
    }

    pub fn numeric() -> impl Iterator<Item = Feature> {
        Feature::ALL
            .into_iter()
            .filter(|f| f.kind() == AttributeKind::Numeric)
    }
}

impl fmt::Display for Feature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum Sex {
    Male,
    Female,
}

impl Sex {
    pub const fn as_str(self) -> &'static str {
        match self {
            Sex::Male => "male",
            Sex::Female => "female",
        }
    }

    pub fn parse(s: &str) -> Option<Sex> {
        match s {
            "male" => Some(Sex::Male),
            "female" => Some(Sex::Female),
            _ => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum Activity {
    High,
    Low,
}

impl Activity {
    pub const fn as_str(self) -> &'static str {
        match self {
            Activity::High => "high",
            Activity::Low => "low",
        }
    }

    pub fn parse(s: &str) -> Option<Activity> {
        match s {
            "high" => Some(Activity::High),
            "low" => Some(Activity::Low),
            _ => None,
        }
    }
}

/// An observed attribute value.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Value<'a> {
    Num(f64),
    Cat(&'a str),
}

impl fmt::Display for Value<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Num(x) => write!(f, "{x}"),
            Value::Cat(s) => f.write_str(s),
        }
    }
}

/// Anything a decision tree can be evaluated against.
pub trait Observation {
    /// Value of the named attribute, `None` when missing or unknown.
    fn value(&self, attribute: &str) -> Option<Value<'_>>;
}

/// One patient. Every clinical field may be missing.
#[derive(Clone, Debug, Default, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct PatientRecord {
    pub id: String,
    pub age: Option<f64>,
    pub sex: Option<Sex>,
    pub family_history: Option<bool>,
    pub physical_activity: Option<Activity>,
    pub bmi: Option<f64>,
    pub fpg: Option<f64>,
    pub hba1c: Option<f64>,
    pub ogtt_2h: Option<f64>,
    pub random_glucose: Option<f64>,
    pub sbp: Option<f64>,
    pub dbp: Option<f64>,
    pub triglycerides: Option<f64>,
    pub hdl: Option<f64>,
    pub waist: Option<f64>,
    pub symptoms: Option<bool>,
    pub balanced_diet: Option<bool>,
    pub htn_medication: Option<bool>,
    pub label: Option<GlycemicClass>,
}

/// A record field outside its admissible range.
#[derive(Clone, Debug, PartialEq)]
pub struct FieldViolation {
    pub field: &'static str,
    pub message: String,
}

impl fmt::Display for FieldViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.field, self.message)
    }
}

fn bool_str(b: bool) -> &'static str {
    if b {
        "true"
    } else {
        "false"
    }
}

/// Open/closed admissible range for a numeric field.
#[derive(Clone, Copy, Debug)]
struct Range {
    lo: f64,
    hi: f64,
    closed: bool,
}

impl Range {
    fn contains(&self, x: f64) -> bool {
        if self.closed {
            x >= self.lo && x <= self.hi
        } else {
            x > self.lo && x < self.hi
        }
    }
}

fn admissible_range(feature: Feature) -> Option<Range> {
    let (lo, hi, closed) = match feature {
        Feature::Age => (0.0, 130.0, true),
        Feature::Bmi => (5.0, 100.0, false),
        Feature::Fpg | Feature::Ogtt2h | Feature::RandomGlucose => (20.0, 1000.0, false),
        Feature::Hba1c => (2.0, 20.0, false),
        _ => return None,
    };
    Some(Range { lo, hi, closed })
}

impl PatientRecord {
    pub fn new(id: impl Into<String>) -> Self {
        PatientRecord {
            id: id.into(),
            ..Default::default()
        }
    }

    pub fn numeric(&self, feature: Feature) -> Option<f64> {
        match feature {
            Feature::Age => self.age,
            Feature::Bmi => self.bmi,
            Feature::Fpg => self.fpg,
            Feature::Hba1c => self.hba1c,
            Feature::Ogtt2h => self.ogtt_2h,
            Feature::RandomGlucose => self.random_glucose,
            Feature::Sbp => self.sbp,
            Feature::Dbp => self.dbp,
            Feature::Triglycerides => self.triglycerides,
            Feature::Hdl => self.hdl,
            Feature::Waist => self.waist,
            _ => None,
        }
    }

    fn numeric_slot(&mut self, feature: Feature) -> Option<&mut Option<f64>> {
        Some(match feature {
            Feature::Age => &mut self.age,
            Feature::Bmi => &mut self.bmi,
            Feature::Fpg => &mut self.fpg,
            Feature::Hba1c => &mut self.hba1c,
            Feature::Ogtt2h => &mut self.ogtt_2h,
            Feature::RandomGlucose => &mut self.random_glucose,
            Feature::Sbp => &mut self.sbp,
            Feature::Dbp => &mut self.dbp,
            Feature::Triglycerides => &mut self.triglycerides,
            Feature::Hdl => &mut self.hdl,
            Feature::Waist => &mut self.waist,
            _ => return None,
        })
    }

    /// Sets a numeric feature; ignored for categorical features.
    pub fn set_numeric(&mut self, feature: Feature, value: Option<f64>) {
        if let Some(slot) = self.numeric_slot(feature) {
            *slot = value;
        }
    }

    /// Categorical level as its string form.
    pub fn level(&self, feature: Feature) -> Option<&'static str> {
        match feature {
            Feature::Sex => self.sex.map(Sex::as_str),
            Feature::PhysicalActivity => self.physical_activity.map(Activity::as_str),
            Feature::FamilyHistory => self.family_history.map(bool_str),
            Feature::Symptoms => self.symptoms.map(bool_str),
            Feature::BalancedDiet => self.balanced_diet.map(bool_str),
            Feature::HtnMedication => self.htn_medication.map(bool_str),
            _ => None,
        }
    }

    /// Sets a categorical feature from its level string. Returns false when
    /// the level is not valid for the feature.
    pub fn set_level(&mut self, feature: Feature, level: Option<&str>) -> bool {
        fn parse_bool(s: &str) -> Option<bool> {
            match s {
                "true" => Some(true),
                "false" => Some(false),
                _ => None,
            }
        }
        let Some(level) = level else {
            self.clear(feature);
            return feature.kind() == AttributeKind::Categorical;
        };
        match feature {
            Feature::Sex => Sex::parse(level).map(|v| self.sex = Some(v)).is_some(),
            Feature::PhysicalActivity => Activity::parse(level)
                .map(|v| self.physical_activity = Some(v))
                .is_some(),
            Feature::FamilyHistory => parse_bool(level)
                .map(|v| self.family_history = Some(v))
                .is_some(),
            Feature::Symptoms => parse_bool(level).map(|v| self.symptoms = Some(v)).is_some(),
            Feature::BalancedDiet => parse_bool(level)
                .map(|v| self.balanced_diet = Some(v))
                .is_some(),
            Feature::HtnMedication => parse_bool(level)
                .map(|v| self.htn_medication = Some(v))
                .is_some(),
            _ => false,
        }
    }

    pub fn get(&self, feature: Feature) -> Option<Value<'static>> {
        match feature.kind() {
            AttributeKind::Numeric => self.numeric(feature).map(Value::Num),
            AttributeKind::Categorical => self.level(feature).map(Value::Cat),
        }
    }

    /// Marks a feature as missing.
    pub fn clear(&mut self, feature: Feature) {
        match feature {
            Feature::Sex => self.sex = None,
            Feature::PhysicalActivity => self.physical_activity = None,
            Feature::FamilyHistory => self.family_history = None,
            Feature::Symptoms => self.symptoms = None,
            Feature::BalancedDiet => self.balanced_diet = None,
            Feature::HtnMedication => self.htn_medication = None,
            other => self.set_numeric(other, None),
        }
    }

    pub fn has_glycemic_measurement(&self) -> bool {
        Feature::GLYCEMIC
            .iter()
            .any(|&f| self.numeric(f).is_some())
    }

    /// All range violations, in column order.
    pub fn violations(&self) -> Vec<FieldViolation> {
        let mut out = Vec::new();
        for feature in Feature::numeric() {
            let Some(x) = self.numeric(feature) else {
                continue;
            };
            if !x.is_finite() {
                out.push(FieldViolation {
                    field: feature.name(),
                    message: "must be a finite number".into(),
                });
                continue;
            }
            match admissible_range(feature) {
                Some(r) if !r.contains(x) => out.push(FieldViolation {
                    field: feature.name(),
                    message: if r.closed {
                        alloc::format!("{x} outside [{}, {}] {}", r.lo, r.hi, feature.unit())
                    } else {
                        alloc::format!("{x} outside ({}, {}) {}", r.lo, r.hi, feature.unit())
                    },
                }),
                None if x < 0.0 => out.push(FieldViolation {
                    field: feature.name(),
                    message: alloc::format!("{x} must not be negative"),
                }),
                _ => {}
            }
        }
        if let (Some(s), Some(d)) = (self.sbp, self.dbp) {
            if s <= d {
                out.push(FieldViolation {
                    field: "sbp",
                    message: alloc::format!("systolic {s} must exceed diastolic {d}"),
                });
            }
        }
        out
    }

    pub fn validate(&self) -> Result<(), FieldViolation> {
        match self.violations().into_iter().next() {
            Some(v) => Err(v),
            None => Ok(()),
        }
    }
}

impl Observation for PatientRecord {
    fn value(&self, attribute: &str) -> Option<Value<'_>> {
        Feature::from_name(attribute).and_then(|f| self.get(f))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn feature_names_round_trip() {
        for f in Feature::ALL {
            assert_eq!(Feature::from_name(f.name()), Some(f));
        }
        assert_eq!(Feature::numeric().count(), 11);
    }

    #[test]
    fn lookup_by_attribute_name() {
        let mut r = PatientRecord::new("p1");
        r.fpg = Some(130.0);
        r.sex = Some(Sex::Female);
        r.family_history = Some(true);
        assert_eq!(r.value("fpg"), Some(Value::Num(130.0)));
        assert_eq!(r.value("sex"), Some(Value::Cat("female")));
        assert_eq!(r.value("family_history"), Some(Value::Cat("true")));
        assert_eq!(r.value("hba1c"), None);
        assert_eq!(r.value("cholesterol"), None);
    }

    #[test]
    fn range_invariants() {
        let mut r = PatientRecord::new("p");
        r.bmi = Some(5.0);
        r.hba1c = Some(25.0);
        r.sbp = Some(80.0);
        r.dbp = Some(90.0);
        let fields: Vec<_> = r.violations().iter().map(|v| v.field).collect();
        assert_eq!(fields, ["bmi", "hba1c", "sbp"]);
        r.bmi = Some(27.0);
        r.hba1c = Some(6.0);
        r.dbp = Some(70.0);
        assert!(r.validate().is_ok());
        r.age = Some(130.0);
        assert!(r.validate().is_ok());
        r.age = Some(-1.0);
        assert!(r.validate().is_err());
    }

    #[test]
    fn set_level_rejects_unknown_values() {
        let mut r = PatientRecord::new("p");
        assert!(r.set_level(Feature::Sex, Some("male")));
        assert!(!r.set_level(Feature::Sex, Some("other")));
        assert!(!r.set_level(Feature::Bmi, Some("x")));
        assert!(r.set_level(Feature::Sex, None));
        assert_eq!(r.sex, None);
    }
}
