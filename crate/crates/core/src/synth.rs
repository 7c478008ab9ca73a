//! Seeded synthetic cohorts drawn from per-group summary statistics.
//!
//! Each group contributes a share of the records. Numeric features are drawn
//! from normal distributions truncated to physiologic ranges and rounded to
//! clinical precision; categorical features are Bernoulli draws of their
//! positive level. Labels come from [`label_by_ada`] applied to the generated
//! values, never from the group a record was drawn from.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
#[cfg(feature = "serde")]
use serde::{Deserialize, Serialize};

use crate::ada::label_by_ada;
use crate::cohort::{CohortDataset, CohortError, DatasetSource};
use crate::record::{AttributeKind, Feature, PatientRecord};

/// Mean and standard deviation of a numeric feature.
#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct Moments {
    pub mean: f64,
    pub sd: f64,
}

const fn m(mean: f64, sd: f64) -> Moments {
    Moments { mean, sd }
}

/// Summary statistics of one population group.
#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct GroupStatistics {
    pub name: String,
    /// Share of the cohort drawn from this group.
    pub proportion: f64,
    pub numeric: BTreeMap<Feature, Moments>,
    /// Probability of each categorical feature's positive level
    /// (male, true, high physical activity).
    pub prevalence: BTreeMap<Feature, f64>,
}

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct CohortStatistics {
    pub groups: Vec<GroupStatistics>,
}

/// Sampling range (exclusive) and rounding precision of numeric features.
fn sampling_spec(feature: Feature) -> (f64, f64, i32) {
    match feature {
        Feature::Age => (0.0, 130.0, 0),
        Feature::Bmi => (5.0, 100.0, 1),
        Feature::Fpg | Feature::Ogtt2h | Feature::RandomGlucose => (20.0, 1000.0, 0),
        Feature::Hba1c => (2.0, 20.0, 1),
        Feature::Sbp => (40.0, 300.0, 0),
        Feature::Dbp => (20.0, 200.0, 0),
        Feature::Triglycerides => (10.0, 2000.0, 0),
        Feature::Hdl => (5.0, 200.0, 0),
        Feature::Waist => (30.0, 250.0, 1),
        _ => (f64::NEG_INFINITY, f64::INFINITY, 3),
    }
}

fn round_to(x: f64, decimals: i32) -> f64 {
    let scale = libm::pow(10.0, decimals as f64);
    libm::round(x * scale) / scale
}

impl CohortStatistics {
    /// Two-group outpatient cohort (117 without, 531 with type 2 diabetes):
    /// age, sex mix, family history, BMI, fasting glucose, HbA1c, blood
    /// pressure, lipids, activity, diet, antihypertensive use, waist and
    /// hyperglycemic symptoms.
    pub fn outpatient_reference() -> Self {
        use Feature::*;
        let group = |name: &str, proportion: f64, numeric: &[(Feature, Moments)], prev: &[(Feature, f64)]| {
            GroupStatistics {
                name: name.into(),
                proportion,
                numeric: numeric.iter().copied().collect(),
                prevalence: prev.iter().copied().collect(),
            }
        };
        CohortStatistics {
            groups: alloc::vec![
                group(
                    "no_diabetes",
                    117.0 / 648.0,
                    &[
                        (Age, m(45.4, 12.6)),
                        (Bmi, m(24.5, 3.2)),
                        (Fpg, m(95.4, 10.3)),
                        (Hba1c, m(5.2, 0.4)),
                        (Sbp, m(120.0, 10.0)),
                        (Dbp, m(80.0, 5.0)),
                        (Triglycerides, m(100.5, 20.30)),
                        (Hdl, m(55.2, 12.1)),
                        (Waist, m(85.4, 7.3)),
                    ],
                    &[
                        (Sex, 0.41),
                        (FamilyHistory, 0.204),
                        (PhysicalActivity, 0.76),
                        (BalancedDiet, 0.65),
                        (HtnMedication, 0.16),
                        (Symptoms, 0.052),
                    ],
                ),
                group(
                    "type2_diabetes",
                    531.0 / 648.0,
                    &[
                        (Age, m(55.2, 14.3)),
                        (Bmi, m(30.2, 4.8)),
                        (Fpg, m(150.2, 35.61)),
                        (Hba1c, m(7.5, 1.2)),
                        (Sbp, m(140.0, 15.0)),
                        (Dbp, m(90.0, 10.0)),
                        (Triglycerides, m(200.10, 60.40)),
                        (Hdl, m(40.3, 10.5)),
                        (Waist, m(105.5, 10.5)),
                    ],
                    &[
                        (Sex, 0.55),
                        (FamilyHistory, 0.685),
                        (PhysicalActivity, 0.36),
                        (BalancedDiet, 0.30),
                        (HtnMedication, 0.50),
                        (Symptoms, 0.457),
                    ],
                ),
            ],
        }
    }

    pub fn validate(&self) -> Result<(), CohortError> {
        let bad = |msg: String| Err(CohortError::InvalidStatistics(msg));
        let Some(first) = self.groups.first() else {
            return bad("no groups".into());
        };
        let mut total = 0.0;
        for g in &self.groups {
            if !(g.proportion.is_finite() && g.proportion >= 0.0) {
                return bad(format!("group `{}`: proportion {} is invalid", g.name, g.proportion));
            }
            total += g.proportion;
            if g.numeric.keys().ne(first.numeric.keys()) {
                return bad(format!(
                    "group `{}` covers different numeric features than `{}`",
                    g.name, first.name
                ));
            }
            for (&f, mo) in &g.numeric {
                if f.kind() != AttributeKind::Numeric {
                    return bad(format!("group `{}`: `{f}` is not numeric", g.name));
                }
                if !(mo.sd.is_finite() && mo.sd >= 0.0) {
                    return bad(format!("group `{}`: `{f}` has sd {}", g.name, mo.sd));
                }
                let (lo, hi, _) = sampling_spec(f);
                if !(mo.mean > lo && mo.mean < hi) {
                    return bad(format!(
                        "group `{}`: `{f}` mean {} outside ({lo}, {hi})",
                        g.name, mo.mean
                    ));
                }
            }
            for (&f, &p) in &g.prevalence {
                if f.kind() != AttributeKind::Categorical {
                    return bad(format!("group `{}`: `{f}` is not categorical", g.name));
                }
                if !(0.0..=1.0).contains(&p) {
                    return bad(format!("group `{}`: `{f}` prevalence {p} outside [0, 1]", g.name));
                }
            }
        }
        if libm::fabs(total - 1.0) > 1e-9 {
            return bad(format!("group proportions sum to {total}"));
        }
        if !first.numeric.contains_key(&Feature::Fpg) && !first.numeric.contains_key(&Feature::Hba1c) {
            return bad("statistics must cover fpg or hba1c".into());
        }
        Ok(())
    }

    /// Records per group for a cohort of `n`, by largest remainder.
    pub fn group_sizes(&self, n: usize) -> Vec<usize> {
        let exact: Vec<f64> = self.groups.iter().map(|g| g.proportion * n as f64).collect();
        let mut sizes: Vec<usize> = exact.iter().map(|&e| libm::floor(e) as usize).collect();
        let mut left = n.saturating_sub(sizes.iter().sum());
        let mut order: Vec<usize> = (0..sizes.len()).collect();
        order.sort_by(|&a, &b| {
            let ra = exact[a] - sizes[a] as f64;
            let rb = exact[b] - sizes[b] as f64;
            rb.total_cmp(&ra).then(a.cmp(&b))
        });
        for &i in order.iter().cycle().take(order.len() * 2) {
            if left == 0 {
                break;
            }
            sizes[i] += 1;
            left -= 1;
        }
        sizes
    }
}

fn truncated_normal(
    rng: &mut ChaCha8Rng,
    feature: Feature,
    moments: Moments,
) -> Result<f64, CohortError> {
    let (lo, hi, decimals) = sampling_spec(feature);
    for _ in 0..10_000 {
        let z: f64 = rng.sample(StandardNormal);
        let x = round_to(moments.mean + moments.sd * z, decimals);
        if x > lo && x < hi {
            return Ok(x);
        }
    }
    Err(CohortError::InvalidStatistics(format!(
        "could not draw `{feature}` inside ({lo}, {hi})"
    )))
}

fn draw_record(
    rng: &mut ChaCha8Rng,
    id: String,
    group: &GroupStatistics,
) -> Result<PatientRecord, CohortError> {
    let mut record = PatientRecord::new(id);
    for (&feature, &moments) in &group.numeric {
        if matches!(feature, Feature::Sbp | Feature::Dbp) {
            continue;
        }
        record.set_numeric(feature, Some(truncated_normal(rng, feature, moments)?));
    }
    match (group.numeric.get(&Feature::Sbp), group.numeric.get(&Feature::Dbp)) {
        (Some(&s), Some(&d)) => {
            let mut drawn = None;
            for _ in 0..1_000 {
                let sbp = truncated_normal(rng, Feature::Sbp, s)?;
                let dbp = truncated_normal(rng, Feature::Dbp, d)?;
                if sbp > dbp {
                    drawn = Some((sbp, dbp));
                    break;
                }
            }
            let (sbp, dbp) = drawn.ok_or_else(|| {
                CohortError::InvalidStatistics("systolic never exceeds diastolic".into())
            })?;
            record.sbp = Some(sbp);
            record.dbp = Some(dbp);
        }
        (Some(&s), None) => record.sbp = Some(truncated_normal(rng, Feature::Sbp, s)?),
        (None, Some(&d)) => record.dbp = Some(truncated_normal(rng, Feature::Dbp, d)?),
        (None, None) => {}
    }
    for (&feature, &p) in &group.prevalence {
        let positive = rng.random_bool(p);
        let levels = feature.levels();
        record.set_level(feature, Some(if positive { levels[0] } else { levels[1] }));
    }
    record.label = Some(label_by_ada(&record)?);
    Ok(record)
}

/// Generates `n` labeled records and reports the group each was drawn from.
pub fn synthesize_with_groups(
    stats: &CohortStatistics,
    n: usize,
    seed: u64,
) -> Result<(CohortDataset, Vec<usize>), CohortError> {
    if n == 0 {
        return Err(CohortError::InvalidStatistics("cohort size must be at least 1".into()));
    }
    stats.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut records = Vec::with_capacity(n);
    let mut groups = Vec::with_capacity(n);
    for (gi, size) in stats.group_sizes(n).into_iter().enumerate() {
        for _ in 0..size {
            let id = format!("S{:05}", records.len() + 1);
            records.push(draw_record(&mut rng, id, &stats.groups[gi])?);
            groups.push(gi);
        }
    }
    Ok((
        CohortDataset::new(records, DatasetSource::Synthetic { seed })?,
        groups,
    ))
}

pub fn synthesize_cohort(
    stats: &CohortStatistics,
    n: usize,
    seed: u64,
) -> Result<CohortDataset, CohortError> {
    synthesize_with_groups(stats, n, seed).map(|(d, _)| d)
}
