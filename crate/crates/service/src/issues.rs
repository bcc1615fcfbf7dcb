//! Issue generation and storage.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, RwLock};

use aurora_core::issue::{build_issue, grid_floor, on_grid, Issue, IssueConfig, IssueError};
use aurora_core::{FilterError, LocationRegistry, MicroPost, PopulationTable};
use chrono::{DateTime, Utc};
use tracing::{info, warn};

use crate::error::ServiceError;

/// Outcome of a generation request at one grid instant.
#[derive(Clone, Debug)]
pub enum Generated {
    Created(Arc<Issue>),
    /// An issue already exists at this instant.
    Existing(Arc<Issue>),
    /// The pool was empty; no issue exists for this instant.
    Skipped,
}

impl Generated {
    pub fn issue(&self) -> Option<&Arc<Issue>> {
        match self {
            Generated::Created(i) | Generated::Existing(i) => Some(i),
            Generated::Skipped => None,
        }
    }
}

#[derive(Default)]
struct Index {
    by_id: BTreeMap<u64, Arc<Issue>>,
    by_instant: BTreeMap<DateTime<Utc>, u64>,
}

/// Issues keyed by id. Generation is serialized; reads run concurrently.
pub struct IssueStore {
    index: RwLock<Index>,
    writer: Mutex<()>,
    dir: Option<PathBuf>,
}

impl IssueStore {
    pub fn in_memory() -> Self {
        Self { index: RwLock::new(Index::default()), writer: Mutex::new(()), dir: None }
    }

    /// Store persisting one `{id}.json` file per issue under `dir`, loading
    /// any issues already there.
    pub fn open(dir: impl AsRef<Path>) -> Result<Self, ServiceError> {
        let dir = dir.as_ref().to_path_buf();
        std::fs::create_dir_all(&dir).map_err(|e| ServiceError::Config(format!("{}: {e}", dir.display())))?;
        let mut index = Index::default();
        let entries = std::fs::read_dir(&dir).map_err(|e| ServiceError::Internal(e.to_string()))?;
        for entry in entries {
            let path = entry.map_err(|e| ServiceError::Internal(e.to_string()))?.path();
            if path.extension().and_then(|e| e.to_str()) != Some("json") {
                continue;
            }
            let text = std::fs::read_to_string(&path).map_err(|e| ServiceError::Internal(e.to_string()))?;
            match serde_json::from_str::<Issue>(&text) {
                Ok(issue) => {
                    index.by_instant.insert(issue.generated_at, issue.id);
                    index.by_id.insert(issue.id, Arc::new(issue));
                }
                Err(e) => warn!(path = %path.display(), %e, "skipping unreadable issue file"),
            }
        }
        info!(count = index.by_id.len(), dir = %dir.display(), "loaded issues");
        Ok(Self { index: RwLock::new(index), writer: Mutex::new(()), dir: Some(dir) })
    }

    pub fn get(&self, id: u64) -> Option<Arc<Issue>> {
        self.read().by_id.get(&id).cloned()
    }

    pub fn current(&self) -> Option<Arc<Issue>> {
        self.read().by_id.values().next_back().cloned()
    }

    pub fn len(&self) -> usize {
        self.read().by_id.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Builds the issue for grid instant `now` unless one exists. Instants
    /// earlier than the latest issue are refused so ids keep increasing with
    /// generation time.
    pub fn generate(
        &self,
        posts: &[MicroPost],
        registry: &LocationRegistry,
        population: &PopulationTable,
        config: &IssueConfig,
        now: DateTime<Utc>,
    ) -> Result<Generated, ServiceError> {
        if !on_grid(now, config.period_secs) {
            return Err(ServiceError::Internal(format!("{now} is off the issue grid")));
        }
        let _guard = self.writer.lock().unwrap_or_else(|p| p.into_inner());
        let next_id = {
            let index = self.read();
            if let Some(id) = index.by_instant.get(&now) {
                return Ok(Generated::Existing(index.by_id[id].clone()));
            }
            if let Some((latest, _)) = index.by_instant.iter().next_back() {
                if *latest > now {
                    return Err(ServiceError::Internal(format!("{now} precedes the latest issue at {latest}")));
                }
            }
            index.by_id.keys().next_back().map_or(1, |id| id + 1)
        };
        let issue = match build_issue(next_id, posts, registry, population, config, now) {
            Ok(issue) => issue,
            Err(IssueError::Filter(FilterError::EmptySet)) => {
                warn!(%now, "empty pool; issue skipped");
                return Ok(Generated::Skipped);
            }
            Err(e) => return Err(ServiceError::Internal(e.to_string())),
        };
        if let Some(dir) = &self.dir {
            let path = dir.join(format!("{next_id}.json"));
            let json = serde_json::to_vec(&issue).map_err(|e| ServiceError::Internal(e.to_string()))?;
            std::fs::write(&path, json).map_err(|e| ServiceError::Internal(format!("{}: {e}", path.display())))?;
        }
        let issue = Arc::new(issue);
        let mut index = self.index.write().unwrap_or_else(|p| p.into_inner());
        index.by_instant.insert(now, next_id);
        index.by_id.insert(next_id, issue.clone());
        info!(id = next_id, %now, posts = issue.served().len(), "issue generated");
        Ok(Generated::Created(issue))
    }

    /// Start of the next grid slot strictly after `t`.
    pub fn next_slot(t: DateTime<Utc>, period_secs: i64) -> DateTime<Utc> {
        grid_floor(t, period_secs) + chrono::Duration::seconds(period_secs)
    }

    fn read(&self) -> std::sync::RwLockReadGuard<'_, Index> {
        self.index.read().unwrap_or_else(|p| p.into_inner())
    }
}
