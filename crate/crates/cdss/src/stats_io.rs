//! Cohort statistics documents (`stats_version: 1`).
//!
//! ```json
//! {"stats_version": 1, "groups": [{"name": "diabetic", "proportion": 0.82,
//!   "numeric": {"fpg": {"mean": 150.2, "sd": 35.61}}, "prevalence": {"sex": 0.55}}]}
//! ```

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value as Json;

use cdss_core::synth::{CohortStatistics, GroupStatistics};

pub const STATS_VERSION: u64 = 1;

#[derive(Debug, thiserror::Error)]
pub enum StatsError {
    #[error("stats_version {found} is not supported (expected {STATS_VERSION})")]
    VersionMismatch { found: String },
    #[error("schema violation: {0}")]
    SchemaViolation(String),
    #[error("{0}")]
    Invalid(#[from] cdss_core::CohortError),
    #[error("{path}: {source}")]
    IoFailure {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl StatsError {
    pub fn is_validation(&self) -> bool {
        !matches!(self, StatsError::IoFailure { .. })
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct StatsDoc {
    stats_version: u64,
    groups: Vec<GroupStatistics>,
}

pub fn to_json(stats: &CohortStatistics) -> String {
    let doc = StatsDoc {
        stats_version: STATS_VERSION,
        groups: stats.groups.clone(),
    };
    let mut s = serde_json::to_string_pretty(&doc).expect("statistics always serialize");
    s.push('\n');
    s
}

pub fn from_json(text: &str) -> Result<CohortStatistics, StatsError> {
    let raw: Json = serde_json::from_str(text).map_err(|e| StatsError::SchemaViolation(e.to_string()))?;
    match raw.get("stats_version") {
        Some(v) if v.as_u64() == Some(STATS_VERSION) => {}
        Some(v) => return Err(StatsError::VersionMismatch { found: v.to_string() }),
        None => return Err(StatsError::SchemaViolation("missing field `stats_version`".into())),
    }
    let doc: StatsDoc = serde_json::from_value(raw).map_err(|e| StatsError::SchemaViolation(e.to_string()))?;
    let stats = CohortStatistics { groups: doc.groups };
    stats.validate()?;
    Ok(stats)
}

pub fn load_stats(path: &Path) -> Result<CohortStatistics, StatsError> {
    let text = fs::read_to_string(path).map_err(|source| StatsError::IoFailure {
        path: path.display().to_string(),
        source,
    })?;
    from_json(&text)
}

pub fn save_stats(stats: &CohortStatistics, path: &Path) -> Result<(), StatsError> {
    fs::write(path, to_json(stats)).map_err(|source| StatsError::IoFailure {
        path: path.display().to_string(),
        source,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_round_trips() {
        let stats = CohortStatistics::outpatient_reference();
        assert_eq!(from_json(&to_json(&stats)).unwrap(), stats);
    }

    #[test]
    fn rejects_bad_documents() {
        assert!(matches!(
            from_json(r#"{"stats_version": 2, "groups": []}"#),
            Err(StatsError::VersionMismatch { .. })
        ));
        let negative = to_json(&CohortStatistics::outpatient_reference()).replacen("\"sd\": ", "\"sd\": -", 1);
        assert!(matches!(from_json(&negative), Err(StatsError::Invalid(_))));
    }
}
