//! Glycemic labeling by American Diabetes Association criteria.
//!
//! Prediabetes ranges are read as half-open on the continuous scale
//! (FPG 100 up to the diabetic cut-off of 126, HbA1c 5.7 up to 6.5,
//! 2-hour OGTT 140 up to 200) so that every value gets exactly one label.

use crate::class::GlycemicClass;
use crate::cohort::CohortError;
use crate::record::{Activity, PatientRecord};

pub const FPG_DIABETIC: f64 = 126.0;
pub const HBA1C_DIABETIC: f64 = 6.5;
pub const OGTT_DIABETIC: f64 = 200.0;
pub const RANDOM_GLUCOSE_DIABETIC: f64 = 200.0;

pub const FPG_PREDIABETIC: f64 = 100.0;
pub const HBA1C_PREDIABETIC: f64 = 5.7;
pub const OGTT_PREDIABETIC: f64 = 140.0;

pub const BMI_OVERWEIGHT: f64 = 25.0;

fn at_least(value: Option<f64>, threshold: f64) -> bool {
    value.is_some_and(|v| v >= threshold)
}

/// Diabetes risk factors: family history, BMI over 25, antihypertensive
/// medication or low physical activity. Missing values count as absent.
pub fn has_risk_factor(record: &PatientRecord) -> bool {
    record.family_history == Some(true)
        || record.bmi.is_some_and(|b| b > BMI_OVERWEIGHT)
        || record.htn_medication == Some(true)
        || record.physical_activity == Some(Activity::Low)
}

/// Four-way ADA label of a record.
pub fn label_by_ada(record: &PatientRecord) -> Result<GlycemicClass, CohortError> {
    if !record.has_glycemic_measurement() {
        return Err(CohortError::InsufficientGlycemicData {
            id: record.id.clone(),
        });
    }
    let diabetic = at_least(record.fpg, FPG_DIABETIC)
        || at_least(record.hba1c, HBA1C_DIABETIC)
        || at_least(record.ogtt_2h, OGTT_DIABETIC)
        || (record.symptoms == Some(true)
            && at_least(record.random_glucose, RANDOM_GLUCOSE_DIABETIC));
    if diabetic {
        return Ok(GlycemicClass::VerifiedDiabetes);
    }
    let prediabetic = at_least(record.fpg, FPG_PREDIABETIC)
        || at_least(record.hba1c, HBA1C_PREDIABETIC)
        || at_least(record.ogtt_2h, OGTT_PREDIABETIC);
    if prediabetic {
        return Ok(GlycemicClass::Prediabetes);
    }
    if has_risk_factor(record) {
        Ok(GlycemicClass::AtRisk)
    } else {
        Ok(GlycemicClass::NoDiabetes)
    }
}
