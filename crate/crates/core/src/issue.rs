//! Scheduled timeline issues.

use std::collections::BTreeMap;

use chrono::{DateTime, Duration, TimeZone, Utc};
use serde::{Deserialize, Serialize};

use crate::diversity::{generate_all, FilterConfig, Pool};
use crate::error::{FilterError, LayoutError};
use crate::layout::{layout_issue, LayoutTree, Rect, Transform, WeightSpec};
use crate::model::{LocationRegistry, Method, MicroPost, PopulationTable, TimeWindow, Timeline};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IssueConfig {
    pub filter: FilterConfig,
    /// Trailing window of posts eligible for an issue.
    pub pool_window_secs: i64,
    /// Grid spacing between issues.
    pub period_secs: i64,
    pub viewport_width: f64,
    pub viewport_height: f64,
    pub retweet_term: Transform,
    pub connectivity_term: Transform,
}

impl Default for IssueConfig {
    fn default() -> Self {
        Self {
            filter: FilterConfig::default(),
            pool_window_secs: 6 * 3600,
            period_secs: 1800,
            viewport_width: 1280.0,
            viewport_height: 720.0,
            retweet_term: Transform::Linear,
            connectivity_term: Transform::Log10,
        }
    }
}

impl IssueConfig {
    pub fn viewport(&self) -> Rect {
        Rect { x: 0.0, y: 0.0, w: self.viewport_width, h: self.viewport_height }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Issue {
    pub id: u64,
    pub generated_at: DateTime<Utc>,
    pub timelines: BTreeMap<Method, Timeline>,
    /// Layout of the PM timeline at the reference viewport.
    pub layout: LayoutTree,
}

impl Issue {
    /// The PM timeline, which is what readers are shown.
    pub fn served(&self) -> &Timeline {
        &self.timelines[&Method::Pm]
    }
}

#[derive(Debug, thiserror::Error)]
pub enum IssueError {
    #[error(transparent)]
    Filter(#[from] FilterError),
    #[error(transparent)]
    Layout(#[from] LayoutError),
    #[error("{0} is not on the {1}-second issue grid")]
    OffGrid(DateTime<Utc>, i64),
}

/// Latest grid instant at or before `t`.
pub fn grid_floor(t: DateTime<Utc>, period_secs: i64) -> DateTime<Utc> {
    let secs = t.timestamp().div_euclid(period_secs) * period_secs;
    Utc.timestamp_opt(secs, 0).single().expect("in range")
}

pub fn on_grid(t: DateTime<Utc>, period_secs: i64) -> bool {
    t.timestamp_subsec_nanos() == 0 && t.timestamp().rem_euclid(period_secs) == 0
}

/// Located posts created in `[now - window, now)`.
pub fn trailing_pool(posts: &[MicroPost], now: DateTime<Utc>, window_secs: i64) -> Pool {
    let start = now - Duration::seconds(window_secs);
    let selected = posts
        .iter()
        .filter(|p| p.location.is_some() && p.created_at >= start && p.created_at < now)
        .cloned()
        .collect();
    Pool::with_window(selected, TimeWindow::new(start, now))
}

/// Builds issue `id` at grid instant `now`. Each issue draws from its own
/// generator stream so reruns reproduce it.
pub fn build_issue(
    id: u64,
    posts: &[MicroPost],
    registry: &LocationRegistry,
    population: &PopulationTable,
    config: &IssueConfig,
    now: DateTime<Utc>,
) -> Result<Issue, IssueError> {
    if !on_grid(now, config.period_secs) {
        return Err(IssueError::OffGrid(now, config.period_secs));
    }
    let pool = trailing_pool(posts, now, config.pool_window_secs);
    let filter = FilterConfig { stream: id.wrapping_mul(16), ..config.filter.clone() };
    let timelines = generate_all(&pool, &filter)?;
    let spec = WeightSpec {
        retweet_term: config.retweet_term,
        connectivity_term: config.connectivity_term,
        population: population.clone(),
    };
    let layout = layout_issue(&timelines[&Method::Pm], config.viewport(), &spec, registry, now)?;
    Ok(Issue { id, generated_at: now, timelines, layout })
}
