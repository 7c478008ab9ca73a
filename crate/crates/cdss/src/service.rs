//! Diagnosis requests, responses and the hot-swappable model store.
//!
//! A request carries the patient's clinical fields (no id, no label) in
//! fixed units: glucose in mg/dL, HbA1c in percent, BMI in kg/m². Values
//! that look like mmol/L or mmol/mol are rejected with a conversion hint.

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::sync::{Arc, RwLock};

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value as Json};

use cdss_core::hybrid::{blend, check_alpha};
use cdss_core::knowledge::{enumerate_rules, DecisionPath, Fallback, Observed, PathStep};
use cdss_core::record::{Activity, Feature, PatientRecord, Sex};
use cdss_core::GlycemicClass;

use crate::model_io::{digest, load_model, ModelDocument, ModelError};

/// Glucose readings below this are taken to be mmol/L.
const GLUCOSE_MMOL_CUTOFF: f64 = 35.0;
const MG_PER_MMOL_GLUCOSE: f64 = 18.016;

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiagnosisRequest {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub age: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sex: Option<Sex>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub family_history: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub physical_activity: Option<Activity>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bmi: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fpg: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hba1c: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ogtt_2h: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub random_glucose: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sbp: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dbp: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub triglycerides: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hdl: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub waist: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub symptoms: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub balanced_diet: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub htn_medication: Option<bool>,
    /// Blend weight of the served tree against the learned model.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
}

impl DiagnosisRequest {
    pub fn to_record(&self) -> PatientRecord {
        PatientRecord {
            id: "request".into(),
            age: self.age,
            sex: self.sex,
            family_history: self.family_history,
            physical_activity: self.physical_activity,
            bmi: self.bmi,
            fpg: self.fpg,
            hba1c: self.hba1c,
            ogtt_2h: self.ogtt_2h,
            random_glucose: self.random_glucose,
            sbp: self.sbp,
            dbp: self.dbp,
            triglycerides: self.triglycerides,
            hdl: self.hdl,
            waist: self.waist,
            symptoms: self.symptoms,
            balanced_diet: self.balanced_diet,
            htn_medication: self.htn_medication,
            label: None,
        }
    }

    /// Parses a JSON object, reporting every malformed field.
    pub fn from_json(value: &Json) -> Result<Self, ServiceError> {
        let Some(obj) = value.as_object() else {
            return Err(ServiceError::invalid("body", "expected a JSON object"));
        };
        match serde_json::from_value::<DiagnosisRequest>(value.clone()) {
            Ok(r) => Ok(r),
            Err(whole) => {
                let mut errors = Vec::new();
                for (k, v) in obj {
                    let mut single = Map::new();
                    single.insert(k.clone(), v.clone());
                    if let Err(e) = serde_json::from_value::<DiagnosisRequest>(Json::Object(single)) {
                        let message = if e.to_string().starts_with("unknown field") {
                            "unknown field".to_string()
                        } else {
                            e.to_string()
                        };
                        errors.push(FieldError {
                            field: k.clone(),
                            message,
                        });
                    }
                }
                if errors.is_empty() {
                    errors.push(FieldError {
                        field: "body".into(),
                        message: whole.to_string(),
                    });
                }
                Err(ServiceError::Validation(errors))
            }
        }
    }

    /// Semantic checks: ranges, units, at least one glycemic measurement
    /// and a usable alpha.
    pub fn validate(&self, blending_available: bool) -> Result<PatientRecord, ServiceError> {
        let record = self.to_record();
        let mut errors: Vec<FieldError> = Vec::new();
        for f in [Feature::Fpg, Feature::Ogtt2h, Feature::RandomGlucose] {
            if let Some(x) = record.numeric(f) {
                if x.is_finite() && x > 0.0 && x < GLUCOSE_MMOL_CUTOFF {
                    errors.push(FieldError {
                        field: f.name().into(),
                        message: format!(
                            "{x} looks like mmol/L; glucose must be given in mg/dL (about {:.0} mg/dL)",
                            x * MG_PER_MMOL_GLUCOSE
                        ),
                    });
                }
            }
        }
        if let Some(x) = record.hba1c {
            if (20.0..=200.0).contains(&x) {
                errors.push(FieldError {
                    field: "hba1c".into(),
                    message: format!(
                        "{x} looks like mmol/mol; HbA1c must be given in percent (about {:.1} %)",
                        x / 10.929 + 2.15
                    ),
                });
            }
        }
        for v in record.violations() {
            if !errors.iter().any(|e| e.field == v.field) {
                errors.push(FieldError {
                    field: v.field.into(),
                    message: v.message,
                });
            }
        }
        if !record.has_glycemic_measurement() {
            errors.push(FieldError {
                field: "glycemic".into(),
                message: "at least one of fpg, hba1c, ogtt_2h, random_glucose is required".into(),
            });
        }
        if let Some(a) = self.alpha {
            if check_alpha(a).is_err() {
                errors.push(FieldError {
                    field: "alpha".into(),
                    message: format!("{a} is outside [0, 1]"),
                });
            } else if !blending_available && a != 1.0 {
                errors.push(FieldError {
                    field: "alpha".into(),
                    message: "blending needs a learned model and none is loaded".into(),
                });
            }
        }
        if errors.is_empty() {
            Ok(record)
        } else {
            Err(ServiceError::Validation(errors))
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FieldError {
    pub field: String,
    pub message: String,
}

#[derive(Debug, thiserror::Error)]
pub enum ServiceError {
    #[error("invalid request: {}", .0.iter().map(|e| format!("{}: {}", e.field, e.message)).collect::<Vec<_>>().join("; "))]
    Validation(Vec<FieldError>),
    #[error("no model is loaded")]
    NoModelLoaded,
    #[error("no model source is configured")]
    NoModelSource,
    #[error(transparent)]
    Model(#[from] ModelError),
}

impl ServiceError {
    pub fn invalid(field: &str, message: &str) -> Self {
        ServiceError::Validation(vec![FieldError {
            field: field.into(),
            message: message.into(),
        }])
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepView {
    pub node: String,
    pub attribute: String,
    /// Rendered predicate of the branch taken, e.g. `hba1c > 6.5`.
    pub predicate: String,
    pub observed: Option<Json>,
    pub branch: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fallback: Option<String>,
}

fn fallback_name(f: Fallback) -> &'static str {
    match f {
        Fallback::Missing => "missing",
        Fallback::Gap => "gap",
    }
}

impl From<&PathStep> for StepView {
    fn from(s: &PathStep) -> Self {
        StepView {
            node: s.node.clone(),
            attribute: s.attribute.clone(),
            predicate: s.predicate.clone(),
            observed: s.observed.as_ref().map(|o| match o {
                Observed::Num(x) => Json::from(*x),
                Observed::Cat(c) => Json::from(c.as_str()),
            }),
            branch: s.child.clone(),
            fallback: s.fallback.map(|f| fallback_name(f).into()),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FallbackFlag {
    pub node: String,
    pub attribute: String,
    pub reason: String,
    pub branch: String,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Flags {
    /// Default branches taken because a value was missing or fell in a gap.
    pub fallbacks: Vec<FallbackFlag>,
    /// Explanatory labels such as "Elevated HbA1c" or "Overweight".
    pub annotations: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiagnosisResponse {
    pub class: GlycemicClass,
    pub class_name: String,
    /// `[verified_diabetes, prediabetes, at_risk, no_diabetes]`.
    pub distribution: [f64; 4],
    pub path: Vec<StepView>,
    pub leaf: String,
    pub model_version: String,
    pub model_digest: String,
    pub alpha: f64,
    pub flags: Flags,
    /// Path through the learned model when blending.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pm_path: Option<Vec<StepView>>,
}

fn steps(path: &DecisionPath) -> Vec<StepView> {
    path.steps.iter().map(StepView::from).collect()
}

/// The served model with its optional learned companion for blending.
#[derive(Clone, Debug)]
pub struct Snapshot {
    pub model: ModelDocument,
    pub pm: Option<ModelDocument>,
    /// Blend weight used when a request does not set one.
    pub alpha: f64,
    pub digest: String,
}

impl Snapshot {
    pub fn new(model: ModelDocument, pm: Option<ModelDocument>, alpha: f64) -> Result<Self, ServiceError> {
        if check_alpha(alpha).is_err() || (pm.is_none() && alpha != 1.0) {
            return Err(ServiceError::invalid(
                "alpha",
                "default alpha must lie in [0, 1] and be 1 without a learned model",
            ));
        }
        let mut d = digest(&model);
        if let Some(pm) = &pm {
            d.push('+');
            d.push_str(&digest(pm));
        }
        Ok(Snapshot {
            model,
            pm,
            alpha,
            digest: d,
        })
    }

    pub fn diagnose(&self, request: &DiagnosisRequest) -> Result<DiagnosisResponse, ServiceError> {
        let record = request.validate(self.pm.is_some())?;
        let tree = &self.model.tree;
        let alpha = request.alpha.unwrap_or(self.alpha);
        let (class, distribution, path, pm_path) = match &self.pm {
            Some(pm) => {
                let b = blend(tree, &pm.tree, &record, alpha).map_err(|e| ServiceError::invalid("alpha", &e.to_string()))?;
                (b.class, b.distribution, b.ckm_path, Some(b.pm_path))
            }
            None => {
                let p = tree.classify(&record);
                (p.class, p.distribution, p, None)
            }
        };
        let fallbacks = path
            .steps
            .iter()
            .filter_map(|s| {
                s.fallback.map(|f| FallbackFlag {
                    node: s.node.clone(),
                    attribute: s.attribute.clone(),
                    reason: fallback_name(f).into(),
                    branch: s.child.clone(),
                })
            })
            .collect();
        Ok(DiagnosisResponse {
            class,
            class_name: class.display_name().into(),
            distribution: distribution.0,
            path: steps(&path),
            leaf: path.leaf.clone(),
            model_version: tree.model_version().into(),
            model_digest: self.digest.clone(),
            alpha: if self.pm.is_some() { alpha } else { 1.0 },
            flags: Flags {
                fallbacks,
                annotations: path.annotations.clone(),
            },
            pm_path: pm_path.as_ref().map(steps),
        })
    }

    pub fn summary(&self) -> ModelSummaryView {
        let tree = &self.model.tree;
        let mut origins = BTreeMap::new();
        for n in tree.nodes().values() {
            *origins.entry(n.origin.as_str().to_string()).or_insert(0) += 1;
        }
        ModelSummaryView {
            name: self.model.name.clone(),
            model_version: tree.model_version().into(),
            model_digest: self.digest.clone(),
            root: tree.root().into(),
            nodes: tree.nodes().len(),
            leaves: tree.leaf_count(),
            depth: tree.depth(),
            attributes: tree.tested_attributes().into_iter().map(String::from).collect(),
            origins,
            grafts: self.model.graft_log.len(),
            rules: enumerate_rules(tree).iter().map(|r| r.to_string()).collect(),
            pm_loaded: self.pm.is_some(),
            default_alpha: self.alpha,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelSummaryView {
    pub name: Option<String>,
    pub model_version: String,
    pub model_digest: String,
    pub root: String,
    pub nodes: usize,
    pub leaves: usize,
    pub depth: usize,
    pub attributes: Vec<String>,
    pub origins: BTreeMap<String, usize>,
    pub grafts: usize,
    pub rules: Vec<String>,
    pub pm_loaded: bool,
    pub default_alpha: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PathDivergence {
    /// Index of the first step whose branch differs.
    pub step: usize,
    pub node: String,
    pub attribute: String,
    pub base_branch: String,
    pub modified_branch: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WhatIfResponse {
    pub base: DiagnosisResponse,
    pub modified: DiagnosisResponse,
    pub changed_fields: Vec<String>,
    pub class_changed: bool,
    pub divergence: Option<PathDivergence>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WhatIfRequest {
    pub base: Map<String, Json>,
    /// Field overrides; `null` clears a field.
    #[serde(default)]
    pub deltas: Map<String, Json>,
}

fn first_divergence(a: &[StepView], b: &[StepView]) -> Option<PathDivergence> {
    a.iter()
        .zip(b)
        .enumerate()
        .find(|(_, (x, y))| x.node != y.node || x.branch != y.branch)
        .map(|(i, (x, y))| PathDivergence {
            step: i,
            node: x.node.clone(),
            attribute: x.attribute.clone(),
            base_branch: x.branch.clone(),
            modified_branch: y.branch.clone(),
        })
}

fn prefixed(err: ServiceError, prefix: &str) -> ServiceError {
    match err {
        ServiceError::Validation(fields) => ServiceError::Validation(
            fields
                .into_iter()
                .map(|f| FieldError {
                    field: format!("{prefix}.{}", f.field),
                    message: f.message,
                })
                .collect(),
        ),
        other => other,
    }
}

impl Snapshot {
    pub fn whatif(&self, request: &WhatIfRequest) -> Result<WhatIfResponse, ServiceError> {
        let base_json = Json::Object(request.base.clone());
        let mut merged = request.base.clone();
        for (k, v) in &request.deltas {
            if v.is_null() {
                merged.remove(k);
            } else {
                merged.insert(k.clone(), v.clone());
            }
        }
        let base_req = DiagnosisRequest::from_json(&base_json).map_err(|e| prefixed(e, "base"))?;
        let base = self.diagnose(&base_req).map_err(|e| prefixed(e, "base"))?;
        let mod_req = DiagnosisRequest::from_json(&Json::Object(merged)).map_err(|e| prefixed(e, "deltas"))?;
        let modified = self.diagnose(&mod_req).map_err(|e| prefixed(e, "deltas"))?;
        let changed_fields = request
            .deltas
            .iter()
            .filter(|(k, v)| request.base.get(k.as_str()) != Some(*v) && !(v.is_null() && !request.base.contains_key(k.as_str())))
            .map(|(k, _)| k.clone())
            .collect();
        Ok(WhatIfResponse {
            class_changed: base.class != modified.class,
            divergence: first_divergence(&base.path, &modified.path),
            changed_fields,
            base,
            modified,
        })
    }
}

/// Where the store reloads models from.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelSource {
    pub model_path: PathBuf,
    pub pm_path: Option<PathBuf>,
    pub alpha: f64,
}

impl ModelSource {
    pub fn load(&self) -> Result<Snapshot, ServiceError> {
        let model = load_model(&self.model_path)?;
        let pm = self.pm_path.as_deref().map(load_model).transpose()?;
        Snapshot::new(model, pm, self.alpha)
    }
}

/// Current model snapshot behind a lock held only to clone or swap the
/// `Arc`; requests keep using the snapshot they started with.
#[derive(Debug, Default)]
pub struct ModelStore {
    current: RwLock<Option<Arc<Snapshot>>>,
    source: Option<ModelSource>,
}

impl ModelStore {
    pub fn empty() -> Self {
        ModelStore::default()
    }

    pub fn with_snapshot(snapshot: Snapshot) -> Self {
        ModelStore {
            current: RwLock::new(Some(Arc::new(snapshot))),
            source: None,
        }
    }

    pub fn from_source(source: ModelSource) -> Result<Self, ServiceError> {
        let snapshot = source.load()?;
        Ok(ModelStore {
            current: RwLock::new(Some(Arc::new(snapshot))),
            source: Some(source),
        })
    }

    /// Starts without a model; `reload` reads `source` later.
    pub fn unloaded(source: ModelSource) -> Self {
        ModelStore {
            current: RwLock::new(None),
            source: Some(source),
        }
    }

    pub fn snapshot(&self) -> Result<Arc<Snapshot>, ServiceError> {
        self.current
            .read()
            .unwrap_or_else(|p| p.into_inner())
            .clone()
            .ok_or(ServiceError::NoModelLoaded)
    }

    pub fn replace(&self, snapshot: Snapshot) -> Arc<Snapshot> {
        let next = Arc::new(snapshot);
        *self.current.write().unwrap_or_else(|p| p.into_inner()) = Some(next.clone());
        next
    }

    /// Re-reads the configured files. On failure the current model stays.
    pub fn reload(&self) -> Result<Arc<Snapshot>, ServiceError> {
        let source = self.source.as_ref().ok_or(ServiceError::NoModelSource)?;
        let snapshot = source.load()?;
        Ok(self.replace(snapshot))
    }

    pub fn diagnose(&self, request: &DiagnosisRequest) -> Result<DiagnosisResponse, ServiceError> {
        self.snapshot()?.diagnose(request)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use cdss_core::knowledge::reference_ckm;
    use serde_json::json;

    fn store() -> Snapshot {
        Snapshot::new(ModelDocument::new("ckm", reference_ckm()), None, 1.0).unwrap()
    }

    fn req(v: Json) -> DiagnosisRequest {
        DiagnosisRequest::from_json(&v).unwrap()
    }

    #[test]
    fn verified_diabetes_with_three_steps() {
        let r = store()
            .diagnose(&req(json!({"hba1c": 7.0, "fpg": 140, "bmi": 27})))
            .unwrap();
        assert_eq!(r.class, GlycemicClass::VerifiedDiabetes);
        assert_eq!(r.path.len(), 3);
        assert_eq!(r.path[2].predicate, "bmi > 25");
        assert!(r.flags.annotations.contains(&"Overweight".to_string()));
        assert!(r.flags.fallbacks.is_empty());
        assert_eq!(r.distribution, [1.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn field_level_errors() {
        let err = DiagnosisRequest::from_json(&json!({"bmi": "abc", "weight": 3, "fpg": 120})).unwrap_err();
        let ServiceError::Validation(fields) = err else { panic!() };
        let names: Vec<_> = fields.iter().map(|f| f.field.as_str()).collect();
        assert_eq!(names, ["bmi", "weight"]);

        let err = store().diagnose(&req(json!({"bmi": 27}))).unwrap_err();
        assert!(matches!(err, ServiceError::Validation(f) if f[0].field == "glycemic"));

        let err = store().diagnose(&req(json!({"fpg": 7.8}))).unwrap_err();
        let ServiceError::Validation(f) = err else { panic!() };
        assert_eq!(f.len(), 1);
        assert!(f[0].message.contains("mmol/L"), "{}", f[0].message);

        let err = store().diagnose(&req(json!({"hba1c": 7.0, "alpha": 0.5}))).unwrap_err();
        assert!(matches!(err, ServiceError::Validation(f) if f[0].field == "alpha"));
    }

    #[test]
    fn missing_hba1c_is_flagged() {
        let r = store().diagnose(&req(json!({"fpg": 140}))).unwrap();
        assert_eq!(r.class, GlycemicClass::NoDiabetes);
        assert_eq!(r.flags.fallbacks.len(), 1);
        assert_eq!(r.flags.fallbacks[0].reason, "missing");
    }

    #[test]
    fn whatif_bmi_flip() {
        let w = WhatIfRequest {
            base: json!({"hba1c": 7.0, "fpg": 140, "bmi": 27}).as_object().unwrap().clone(),
            deltas: json!({"bmi": 23}).as_object().unwrap().clone(),
        };
        let out = store().whatif(&w).unwrap();
        assert_eq!(out.base.class, GlycemicClass::VerifiedDiabetes);
        assert_eq!(out.modified.class, GlycemicClass::Prediabetes);
        let d = out.divergence.unwrap();
        assert_eq!((d.node.as_str(), d.attribute.as_str()), ("n3", "bmi"));
        assert_eq!(out.changed_fields, ["bmi"]);

        let same = WhatIfRequest {
            base: w.base.clone(),
            deltas: Map::new(),
        };
        let out = store().whatif(&same).unwrap();
        assert_eq!(out.base, out.modified);
        assert!(out.divergence.is_none() && !out.class_changed);

        let bad = WhatIfRequest {
            base: w.base.clone(),
            deltas: json!({"bmi": 500}).as_object().unwrap().clone(),
        };
        assert!(matches!(store().whatif(&bad), Err(ServiceError::Validation(f)) if f[0].field == "deltas.bmi"));
    }

    #[test]
    fn store_swaps_atomically() {
        let s = ModelStore::empty();
        assert!(matches!(s.snapshot(), Err(ServiceError::NoModelLoaded)));
        let old = s.replace(store());
        let held = s.snapshot().unwrap();
        s.replace(store());
        assert!(Arc::ptr_eq(&held, &old));
        assert!(!Arc::ptr_eq(&s.snapshot().unwrap(), &old));
        assert!(matches!(s.reload(), Err(ServiceError::NoModelSource)));
    }
}
