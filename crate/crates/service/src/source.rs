//! Where issue pools come from.

use std::io::BufReader;
use std::path::PathBuf;

use aurora_core::ingestion::{ingest_records, parse_post_stream, AdmissionGate, AdmissionPolicy};
use aurora_core::{Gazetteer, LocationRegistry, MicroPost};

use crate::error::ServiceError;

pub trait PostSource: Send + Sync {
    /// Admitted, located posts available to the next issue.
    fn posts(&self) -> Result<Vec<MicroPost>, ServiceError>;
}

/// Fixed posts, mainly for tests and demos.
pub struct StaticPosts(pub Vec<MicroPost>);

impl PostSource for StaticPosts {
    fn posts(&self) -> Result<Vec<MicroPost>, ServiceError> {
        Ok(self.0.clone())
    }
}

/// JSON Lines corpus re-read and re-admitted on every call, so records
/// appended by a collector appear in later issues.
pub struct CorpusFile {
    pub path: PathBuf,
    pub registry: LocationRegistry,
    pub gazetteer: Gazetteer,
    pub policy: AdmissionPolicy,
}

impl PostSource for CorpusFile {
    fn posts(&self) -> Result<Vec<MicroPost>, ServiceError> {
        let file = std::fs::File::open(&self.path)
            .map_err(|e| ServiceError::Internal(format!("{}: {e}", self.path.display())))?;
        let parsed = parse_post_stream(BufReader::new(file)).map_err(|e| ServiceError::Internal(e.to_string()))?;
        let mut gate = AdmissionGate::new(self.policy.clone());
        Ok(ingest_records(&parsed.records, &self.registry, &self.gazetteer, &mut gate).admitted)
    }
}
