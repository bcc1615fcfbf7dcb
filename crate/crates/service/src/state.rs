//! Request-independent service logic shared by the HTTP layer and the scheduler.

use std::net::IpAddr;
use std::sync::Arc;

use aurora_core::events::{Condition, EventLog, EventSource, EventType, InteractionEvent, UaClass};
use aurora_core::issue::{Issue, IssueConfig};
use aurora_core::model::Method;
use aurora_core::{Gazetteer, LocationId, LocationRegistry, MicroPost, PopulationTable};
use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::config::ServiceConfig;
use crate::error::ServiceError;
use crate::geo::{geolocate, CsvRangeGeo, GeoProvider};
use crate::issues::{Generated, IssueStore};
use crate::sessions::{Session, SessionStore};
use crate::source::{CorpusFile, PostSource, StaticPosts};

/// Requested issue: a numeric id or the latest one.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum IssueRef {
    Current,
    Id(u64),
}

impl std::str::FromStr for IssueRef {
    type Err = ServiceError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "current" => Ok(IssueRef::Current),
            _ => s.parse().map(IssueRef::Id).map_err(|_| ServiceError::NotFound(format!("issue `{s}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LocationInfo {
    pub code: LocationId,
    pub name: String,
    pub hue: f64,
}

/// Rendering instructions that differ between conditions.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RenderHints {
    pub condition: Condition,
    /// Posts are grouped under their location.
    pub group_by_location: bool,
    /// Posts are drawn as treemap cells from `layout`.
    pub treemap: bool,
    pub ping_interval_secs: u64,
}

impl RenderHints {
    pub fn for_condition(condition: Condition) -> Self {
        Self {
            condition,
            group_by_location: condition != Condition::Baseline,
            treemap: condition == Condition::Treemap,
            ping_interval_secs: 10,
        }
    }
}

/// Body of `GET /api/issue/{id}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IssuePayload {
    pub issue_id: u64,
    pub generated_at: DateTime<Utc>,
    pub method: Method,
    pub posts: Vec<MicroPost>,
    pub layout: aurora_core::layout::LayoutTree,
    pub locations: Vec<LocationInfo>,
    pub initial_filter: Option<LocationId>,
    pub hints: RenderHints,
}

/// Body of `GET /api/session`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SessionView {
    pub session_id: String,
    pub condition: Condition,
    pub group: aurora_core::events::Group,
    pub ua_class: UaClass,
}

impl From<&Session> for SessionView {
    fn from(s: &Session) -> Self {
        Self { session_id: s.session_id.clone(), condition: s.condition, group: s.group, ua_class: s.user_agent_class }
    }
}

/// What the HTTP layer knows about the caller.
#[derive(Clone, Debug, Default)]
pub struct ClientInfo {
    pub ip: Option<IpAddr>,
    pub user_agent: String,
    pub cookie: Option<String>,
}

/// Session resolved for a request; `created` is set for a fresh assignment.
#[derive(Clone, Debug)]
pub struct Resolved {
    pub session: Session,
    pub created: bool,
}

pub struct Parts {
    pub registry: LocationRegistry,
    pub population: PopulationTable,
    pub source: Arc<dyn PostSource>,
    pub geo: Arc<dyn GeoProvider>,
    pub events: EventLog,
    pub issues: IssueStore,
    pub issue_config: IssueConfig,
    pub central_location: String,
    pub condition_weights: Vec<(Condition, f64)>,
    pub seed: Option<u64>,
}

pub struct AppState {
    pub registry: LocationRegistry,
    pub population: PopulationTable,
    pub issue_config: IssueConfig,
    pub sessions: SessionStore,
    pub issues: IssueStore,
    pub events: EventLog,
    source: Arc<dyn PostSource>,
    geo: Arc<dyn GeoProvider>,
    central_location: String,
}

impl AppState {
    pub fn new(parts: Parts) -> Result<Self, ServiceError> {
        Ok(Self {
            sessions: SessionStore::new(&parts.condition_weights, parts.seed)?,
            registry: parts.registry,
            population: parts.population,
            issue_config: parts.issue_config,
            issues: parts.issues,
            events: parts.events,
            source: parts.source,
            geo: parts.geo,
            central_location: parts.central_location,
        })
    }

    /// Loads every input named by the configuration.
    pub fn from_config(cfg: &ServiceConfig) -> Result<Self, ServiceError> {
        let config_err = |e: aurora_core::ConfigError| ServiceError::Config(e.to_string());
        let population = match &cfg.population_path {
            Some(p) => Some(PopulationTable::from_csv_path(p, None).map_err(config_err)?),
            None => None,
        };
        let registry = match (&cfg.registry_path, &population) {
            (Some(p), _) => LocationRegistry::from_csv_path(p).map_err(config_err)?,
            (None, Some(pop)) => pop.registry().map_err(config_err)?,
            (None, None) => return Err(ServiceError::Config("a registry or population table is required".into())),
        };
        let population = match population {
            Some(pop) => PopulationTable::new(pop.iter().map(|(k, v)| (k.clone(), v)).collect(), Some(&registry))
                .map_err(config_err)?,
            None => PopulationTable::uniform(&registry),
        };
        let gazetteer = match &cfg.gazetteer_path {
            Some(p) => Gazetteer::from_csv_path(p, Some(&registry)).map_err(config_err)?,
            None => Gazetteer::new(),
        };
        let source: Arc<dyn PostSource> = match &cfg.corpus_path {
            Some(path) => Arc::new(CorpusFile {
                path: path.clone(),
                registry: registry.clone(),
                gazetteer,
                policy: cfg.admission.clone(),
            }),
            None => {
                tracing::warn!("no corpus configured; issues will be empty");
                Arc::new(StaticPosts(Vec::new()))
            }
        };
        let geo: Arc<dyn GeoProvider> = match &cfg.geo_db_path {
            Some(p) => Arc::new(CsvRangeGeo::from_path(p)?),
            None => {
                tracing::warn!("no geo database configured; every session is UNKNOWN");
                Arc::new(CsvRangeGeo::default())
            }
        };
        let mut events = EventLog::open(&cfg.event_log_path).map_err(|e| ServiceError::Config(e.to_string()))?;
        if !cfg.fsync {
            events = events.without_fsync();
        }
        let issues = match &cfg.issue_dir {
            Some(dir) => IssueStore::open(dir)?,
            None => IssueStore::in_memory(),
        };
        Self::new(Parts {
            registry,
            population,
            source,
            geo,
            events,
            issues,
            issue_config: cfg.issue.clone(),
            central_location: cfg.central_location.clone(),
            condition_weights: cfg.condition_weights.iter().map(|(c, w)| (*c, *w)).collect(),
            seed: cfg.seed,
        })
    }

    /// Generates the issue for grid instant `now` from the current pool.
    pub fn generate_issue(&self, now: DateTime<Utc>) -> Result<Generated, ServiceError> {
        let posts = self.source.posts()?;
        self.issues.generate(&posts, &self.registry, &self.population, &self.issue_config, now)
    }

    /// Session named by the caller's cookie, or a new one. A new session logs
    /// `session_created`; `log_restored` logs `session_restored` for an
    /// existing one.
    pub fn resolve_session(
        &self,
        client: &ClientInfo,
        log_restored: bool,
        now: DateTime<Utc>,
    ) -> Result<Resolved, ServiceError> {
        if let Some(session) = client.cookie.as_deref().and_then(|c| self.sessions.resolve(c, now)) {
            if log_restored {
                self.log_server(&session, InteractionEvent::new(&session.session_id, EventType::SessionRestored))?;
            }
            return Ok(Resolved { session, created: false });
        }
        let group = geolocate(client.ip, self.geo.as_ref(), &self.central_location);
        let session = self.sessions.assign_condition(group, UaClass::classify(&client.user_agent), now);
        self.log_server(&session, InteractionEvent::new(&session.session_id, EventType::SessionCreated))?;
        Ok(Resolved { session, created: true })
    }

    pub fn lookup_issue(&self, which: IssueRef) -> Result<Arc<Issue>, ServiceError> {
        match which {
            IssueRef::Current => self.issues.current().ok_or_else(|| ServiceError::NotFound("no issue yet".into())),
            IssueRef::Id(id) => self.issues.get(id).ok_or_else(|| ServiceError::NotFound(format!("issue {id}"))),
        }
    }

    /// Issue payload for `session`. A location code marks an initial filter
    /// and logs it as a `location_filter` event.
    pub fn get_issue(
        &self,
        which: IssueRef,
        loc: Option<&str>,
        session: &Session,
    ) -> Result<IssuePayload, ServiceError> {
        let issue = self.lookup_issue(which)?;
        let initial_filter = match loc.filter(|l| !l.is_empty()) {
            Some(code) => {
                Some(self.registry.resolve(code).ok_or_else(|| ServiceError::BadLocation(format!("`{code}`")))?)
            }
            None => None,
        };
        if let Some(loc) = &initial_filter {
            let mut event =
                InteractionEvent::new(&session.session_id, EventType::LocationFilter).with_target(loc.as_str());
            event.issue_id = Some(issue.id);
            event.target_location = Some(loc.clone());
            self.log_server(session, event)?;
        }
        Ok(IssuePayload {
            issue_id: issue.id,
            generated_at: issue.generated_at,
            method: Method::Pm,
            posts: issue.served().posts.clone(),
            layout: issue.layout.clone(),
            locations: self.locations(),
            initial_filter,
            hints: RenderHints::for_condition(session.condition),
        })
    }

    /// Appends client events for their sessions. The batch is checked in full
    /// before anything is written.
    pub fn record_events(&self, events: Vec<InteractionEvent>) -> Result<Vec<u64>, ServiceError> {
        let mut batch = Vec::with_capacity(events.len());
        for mut event in events {
            if matches!(event.event_type, EventType::SessionCreated | EventType::SessionRestored) {
                return Err(ServiceError::BadEvent(format!("{} is server-generated", event.event_type)));
            }
            event.validate()?;
            let session = self.sessions.get(&event.session_id).ok_or(ServiceError::Unauthenticated)?;
            self.fill_target_location(&mut event)?;
            batch.push((event, session.stamp(), EventSource::Client));
        }
        Ok(self.events.append_batch(batch)?.into_iter().map(|e| e.seq).collect())
    }

    pub fn record_event(&self, event: InteractionEvent) -> Result<u64, ServiceError> {
        Ok(self.record_events(vec![event])?[0])
    }

    pub fn locations(&self) -> Vec<LocationInfo> {
        let n = self.registry.len().max(1) as f64;
        self.registry
            .ids()
            .enumerate()
            .map(|(i, id)| LocationInfo {
                code: id.clone(),
                name: self.registry.name(id).unwrap_or(id.as_str()).to_string(),
                hue: i as f64 / n * 360.0,
            })
            .collect()
    }

    fn fill_target_location(&self, event: &mut InteractionEvent) -> Result<(), ServiceError> {
        if event.target_location.is_some() {
            return Ok(());
        }
        let Some(target) = event.target.as_deref() else { return Ok(()) };
        if event.event_type == EventType::LocationFilter {
            let loc = self
                .registry
                .resolve(target)
                .ok_or_else(|| ServiceError::BadEvent(format!("unknown location `{target}`")))?;
            event.target_location = Some(loc);
        } else if let Some(issue) = event.issue_id.and_then(|id| self.issues.get(id)) {
            event.target_location = issue
                .timelines
                .values()
                .flat_map(|t| t.posts.iter())
                .find(|p| p.id == target)
                .and_then(|p| p.location.clone());
        }
        Ok(())
    }

    fn log_server(&self, session: &Session, event: InteractionEvent) -> Result<u64, ServiceError> {
        Ok(self.events.append(event, session.stamp(), EventSource::Server)?.seq)
    }
}
