//! Evaluation reports: a JSON document and a plain-text rendering with one
//! confusion table per model and one age-band table per model.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use cdss_core::metrics::{AgeBand, ClassMetrics, ConfusionMatrix, Divergence, MetricsError, SubgroupRow};
use cdss_core::{AgreementReport, GlycemicClass};

pub const REPORT_VERSION: u32 = 1;

/// Confusion matrix of one model on one split, with everything derived
/// from it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelEvaluation {
    pub model: String,
    pub split: String,
    pub confusion: ConfusionMatrix,
    pub total: u64,
    pub correct: u64,
    pub accuracy: Option<f64>,
    pub classes: Vec<ClassMetrics>,
    /// `None` when chance agreement is 1.
    pub agreement: Option<AgreementReport>,
    /// Share of records routed without a fallback, for single trees.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub coverage: Option<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub divergences: Vec<Divergence>,
}

impl ModelEvaluation {
    pub fn from_matrix(model: impl Into<String>, split: impl Into<String>, cm: ConfusionMatrix) -> Result<Self, MetricsError> {
        let agreement = match cm.kappa() {
            Ok(k) => Some(k),
            Err(MetricsError::DegenerateMarginals) => None,
            Err(e) => return Err(e),
        };
        Ok(ModelEvaluation {
            model: model.into(),
            split: split.into(),
            total: cm.total(),
            correct: cm.trace(),
            accuracy: cm.accuracy(),
            classes: cm.all_class_metrics()?,
            agreement,
            confusion: cm,
            coverage: None,
            divergences: Vec::new(),
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SubgroupTable {
    pub model: String,
    pub rows: Vec<SubgroupRow>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureSetComparison {
    pub model: String,
    pub set_a: Vec<String>,
    pub set_b: Vec<String>,
    pub concordance_a: f64,
    pub concordance_b: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RankingRow {
    pub criterion: String,
    pub accuracy: f64,
    pub rules: usize,
    pub attributes: usize,
    pub score: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelSummary {
    pub name: String,
    pub nodes: usize,
    pub rules: usize,
    pub depth: usize,
    pub attributes: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub root_split: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetSummary {
    pub source: String,
    pub total: usize,
    pub train: usize,
    pub test: usize,
    /// Class counts in class order for the full cohort, train and test.
    pub class_counts: BTreeMap<String, [u64; 4]>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub report_version: u32,
    pub seeds: BTreeMap<String, u64>,
    pub dataset: DatasetSummary,
    pub ranking: Vec<RankingRow>,
    pub selected_criterion: String,
    pub alpha: f64,
    pub models: Vec<ModelSummary>,
    pub grafts: usize,
    pub evaluations: Vec<ModelEvaluation>,
    pub subgroups: Vec<SubgroupTable>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub feature_sets: Option<FeatureSetComparison>,
}

impl EvaluationReport {
    pub fn evaluation(&self, model: &str) -> Option<&ModelEvaluation> {
        self.evaluations.iter().find(|e| e.model == model)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("reports always serialize");
        s.push('\n');
        s
    }
}

fn pct(x: Option<f64>) -> String {
    x.map_or("-".into(), |v| format!("{:.1}", 100.0 * v))
}

fn ratio(x: Option<f64>) -> String {
    x.map_or("-".into(), |v| format!("{v:.3}"))
}

/// Truth-by-prediction table with per-class "Correct (%)" (recall),
/// sensitivity and specificity, followed by overall accuracy and kappa.
pub fn render_confusion(e: &ModelEvaluation) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{} — {} split (n = {})", e.model, e.split, e.total);
    let _ = write!(out, "{:<20}", "Observations");
    for c in GlycemicClass::ALL {
        let _ = write!(out, "{:>19}", c.display_name());
    }
    let _ = writeln!(out, "{:>13}{:>13}{:>13}", "Correct (%)", "Sensitivity", "Specificity");
    for c in GlycemicClass::ALL {
        let m = &e.classes[c.index()];
        let _ = write!(out, "{:<20}", c.display_name());
        for p in GlycemicClass::ALL {
            let _ = write!(out, "{:>19}", e.confusion.get(c, p));
        }
        let _ = writeln!(
            out,
            "{:>13}{:>13}{:>13}",
            pct(m.sensitivity),
            ratio(m.sensitivity),
            ratio(m.specificity)
        );
    }
    let _ = write!(out, "Overall accuracy {}/{} = {}", e.correct, e.total, ratio(e.accuracy));
    match &e.agreement {
        Some(a) => {
            let _ = writeln!(out, "; kappa = {:.4} (p_o = {:.4}, p_e = {:.4})", a.kappa, a.p_o, a.p_e);
        }
        None => {
            let _ = writeln!(out, "; kappa undefined (chance agreement is 1)");
        }
    }
    if let Some(c) = e.coverage {
        let _ = writeln!(out, "Coverage without fallback: {c:.4}");
    }
    for d in &e.divergences {
        let _ = writeln!(
            out,
            "  flagged: {} {} printed as {} but counts give {}",
            d.class.display_name(),
            d.figure,
            d.reported,
            ratio(d.computed)
        );
    }
    out
}

/// Patients, correct and misclassified counts per age band.
pub fn render_subgroups(t: &SubgroupTable) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{} — diagnostic accuracy by age group", t.model);
    let _ = writeln!(out, "{:<12}{:>10}{:>10}{:>10}", "Age group", "Patients", "Correct", "False");
    for r in &t.rows {
        let _ = writeln!(
            out,
            "{:<12}{:>10}{:>10}{:>10}",
            r.band.label(),
            r.patients,
            r.correct,
            r.misclassified
        );
    }
    out
}

pub fn render_text(r: &EvaluationReport) -> String {
    let mut out = String::new();
    let d = &r.dataset;
    let _ = writeln!(out, "Evaluation report (version {})", r.report_version);
    let _ = writeln!(out, "Cohort: {} ({} records; train {}, test {})", d.source, d.total, d.train, d.test);
    for (name, seed) in &r.seeds {
        let _ = writeln!(out, "  seed[{name}] = {seed}");
    }
    let _ = writeln!(out);
    let _ = writeln!(out, "Algorithm ranking (validation fold)");
    let _ = writeln!(out, "{:<14}{:>10}{:>8}{:>12}{:>10}", "Criterion", "Accuracy", "Rules", "Attributes", "Score");
    for row in &r.ranking {
        let _ = writeln!(
            out,
            "{:<14}{:>10.4}{:>8}{:>12}{:>10.4}",
            row.criterion, row.accuracy, row.rules, row.attributes, row.score
        );
    }
    let _ = writeln!(out, "Selected: {}", r.selected_criterion);
    let _ = writeln!(out);
    for m in &r.models {
        let _ = write!(
            out,
            "{}: {} nodes, {} rules, depth {}, attributes [{}]",
            m.name,
            m.nodes,
            m.rules,
            m.depth,
            m.attributes.join(", ")
        );
        match &m.root_split {
            Some(s) => {
                let _ = writeln!(out, ", root split {s}");
            }
            None => {
                let _ = writeln!(out);
            }
        }
    }
    let _ = writeln!(out, "Grafts applied: {}; blend alpha = {}", r.grafts, r.alpha);
    for e in &r.evaluations {
        let _ = writeln!(out);
        out.push_str(&render_confusion(e));
    }
    for t in &r.subgroups {
        let _ = writeln!(out);
        out.push_str(&render_subgroups(t));
    }
    if let Some(f) = &r.feature_sets {
        let _ = writeln!(out);
        let _ = writeln!(out, "{} — concordance by available features", f.model);
        let _ = writeln!(out, "  Set A [{}]: {:.4}", f.set_a.join(", "), f.concordance_a);
        let _ = writeln!(out, "  Set B [{}]: {:.4}", f.set_b.join(", "), f.concordance_b);
    }
    out
}

/// Band list as `[[lo, hi], ...]` pairs.
pub fn bands_from_pairs(pairs: &[[u32; 2]]) -> Vec<AgeBand> {
    pairs.iter().map(|p| AgeBand::new(p[0], p[1])).collect()
}
