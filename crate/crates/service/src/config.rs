use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use aurora_core::events::Condition;
use aurora_core::ingestion::AdmissionPolicy;
use aurora_core::issue::IssueConfig;
use serde::{Deserialize, Serialize};

use crate::error::ServiceError;

/// Service configuration, read from TOML.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ServiceConfig {
    pub bind: String,
    /// JSON Lines corpus of raw posts, re-read at every issue.
    pub corpus_path: Option<PathBuf>,
    /// `code,name` CSV.
    pub registry_path: Option<PathBuf>,
    /// `alias,code` CSV used to locate authors.
    pub gazetteer_path: Option<PathBuf>,
    /// `code,share` CSV; uniform shares when absent.
    pub population_path: Option<PathBuf>,
    /// `start,end,region` CSV of IPv4 ranges.
    pub geo_db_path: Option<PathBuf>,
    pub event_log_path: PathBuf,
    /// Directory holding one JSON file per issue.
    pub issue_dir: Option<PathBuf>,
    /// Region code treated as the central location.
    pub central_location: String,
    /// Relative assignment weights; equal by default.
    pub condition_weights: BTreeMap<Condition, f64>,
    pub seed: Option<u64>,
    pub issue: IssueConfig,
    pub admission: AdmissionPolicy,
    pub fsync: bool,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        Self {
            bind: "127.0.0.1:8080".into(),
            corpus_path: None,
            registry_path: None,
            gazetteer_path: None,
            population_path: None,
            geo_db_path: None,
            event_log_path: PathBuf::from("events.jsonl"),
            issue_dir: None,
            central_location: "RM".into(),
            condition_weights: Condition::ALL.iter().map(|c| (*c, 1.0)).collect(),
            seed: None,
            issue: IssueConfig::default(),
            admission: AdmissionPolicy::default(),
            fsync: true,
        }
    }
}

impl ServiceConfig {
    pub fn from_toml(text: &str) -> Result<Self, ServiceError> {
        let cfg: Self = toml::from_str(text).map_err(|e| ServiceError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self, ServiceError> {
        let text = std::fs::read_to_string(path.as_ref())
            .map_err(|e| ServiceError::Config(format!("{}: {e}", path.as_ref().display())))?;
        Self::from_toml(&text)
    }

    pub fn validate(&self) -> Result<(), ServiceError> {
        if self.condition_weights.values().any(|w| !(w.is_finite() && *w >= 0.0))
            || !self.condition_weights.values().any(|w| *w > 0.0)
        {
            return Err(ServiceError::Config("condition weights must be non-negative with a positive sum".into()));
        }
        if self.issue.period_secs <= 0 || self.issue.pool_window_secs <= 0 {
            return Err(ServiceError::Config("issue period and pool window must be positive".into()));
        }
        self.issue.filter.validate().map_err(|e| ServiceError::Config(e.to_string()))?;
        self.admission.validate().map_err(|e| ServiceError::Config(e.to_string()))?;
        Ok(())
    }
}
