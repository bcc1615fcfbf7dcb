//! Per-user dependent variables derived from a replayed event log.

use std::collections::{BTreeMap, BTreeSet};

use chrono::{FixedOffset, NaiveDate};
use serde::{Deserialize, Serialize};

use super::design::Frame;
use crate::error::FitError;
use crate::events::{Condition, EventSource, EventType, Group, LoggedEvent, UaClass};
use crate::model::{LocationId, LocationRegistry};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AnalyticsConfig {
    pub min_dwell_secs: f64,
    /// Fraction of surviving users with the longest dwell to drop.
    pub top_dwell_fraction: f64,
    /// Gaps between consecutive events longer than this do not count as dwell.
    pub idle_gap_secs: f64,
    pub include_retweet_clicks: bool,
    /// Offset of the local calendar used for counting active days.
    pub day_offset_secs: i32,
}

impl Default for AnalyticsConfig {
    fn default() -> Self {
        Self {
            min_dwell_secs: 10.0,
            top_dwell_fraction: 0.05,
            idle_gap_secs: 60.0,
            include_retweet_clicks: true,
            day_offset_secs: -3 * 3600,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UserRecord {
    /// Session id of the user's first session.
    pub user: String,
    pub group: Group,
    pub condition: Condition,
    pub active_days: u32,
    pub dwell_seconds: f64,
    pub distinct_locations: usize,
    pub filter_likelihood: u8,
    pub content_events: usize,
    pub content_events_per_day: f64,
}

/// Users removed by each rule, checked in field order; a user is listed under
/// the first rule that removes it.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Exclusions {
    pub mobile: Vec<String>,
    pub no_client_events: Vec<String>,
    pub unknown_group: Vec<String>,
    pub short_dwell: Vec<String>,
    pub top_dwell: Vec<String>,
}

impl Exclusions {
    pub fn total(&self) -> usize {
        self.mobile.len() + self.no_client_events.len() + self.unknown_group.len() + self.short_dwell.len() + self.top_dwell.len()
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct UserTable {
    /// Sorted by user key.
    pub users: Vec<UserRecord>,
    pub excluded: Exclusions,
}

impl UserTable {
    /// `condition` and `location` factor columns.
    pub fn frame(&self) -> Result<Frame, FitError> {
        Frame::new()
            .with_column("condition", self.users.iter().map(|u| u.condition.as_str()))?
            .with_column("location", self.users.iter().map(|u| u.group.as_str()))
    }

    /// Values of a dependent variable by name.
    pub fn response(&self, name: &str) -> Result<Vec<f64>, FitError> {
        let get: fn(&UserRecord) -> f64 = match name {
            "distinct_locations" => |u| u.distinct_locations as f64,
            "filter_likelihood" => |u| f64::from(u.filter_likelihood),
            "content_events" => |u| u.content_events as f64,
            "content_events_per_day" => |u| u.content_events_per_day,
            "dwell_seconds" => |u| u.dwell_seconds,
            "active_days" => |u| f64::from(u.active_days),
            other => return Err(FitError::UnknownColumn(other.into())),
        };
        Ok(self.users.iter().map(get).collect())
    }
}

fn counts_as_content(t: EventType, include_retweet_clicks: bool) -> bool {
    t.is_content() && (include_retweet_clicks || t != EventType::RetweetClick)
}

/// Number of distinct registered locations behind the user's content events.
pub fn distinct_locations(events: &[&LoggedEvent], registry: &LocationRegistry, include_retweet_clicks: bool) -> usize {
    events
        .iter()
        .filter(|e| counts_as_content(e.event.event_type, include_retweet_clicks))
        .filter_map(|e| e.event.target_location.as_ref())
        .filter(|l| registry.contains(l))
        .collect::<BTreeSet<&LocationId>>()
        .len()
}

/// 1 when the user applied any location filter, including one implied by the URL.
pub fn filter_likelihood(events: &[&LoggedEvent]) -> u8 {
    u8::from(events.iter().any(|e| e.event.event_type == EventType::LocationFilter))
}

pub fn content_event_count(events: &[&LoggedEvent], include_retweet_clicks: bool) -> usize {
    events.iter().filter(|e| counts_as_content(e.event.event_type, include_retweet_clicks)).count()
}

pub fn content_events_per_day(count: usize, active_days: u32) -> f64 {
    if active_days == 0 {
        0.0
    } else {
        count as f64 / f64::from(active_days)
    }
}

/// Sum of gaps between consecutive events that do not exceed `idle_gap_secs`.
/// Events must be in time order.
pub fn dwell_seconds(events: &[&LoggedEvent], idle_gap_secs: f64) -> f64 {
    events
        .windows(2)
        .map(|w| (w[1].server_ts - w[0].server_ts).num_milliseconds() as f64 / 1000.0)
        .filter(|gap| *gap <= idle_gap_secs)
        .sum()
}

pub fn active_days(events: &[&LoggedEvent], day_offset_secs: i32) -> u32 {
    let offset = FixedOffset::east_opt(day_offset_secs).unwrap_or(FixedOffset::east_opt(0).expect("zero offset"));
    events
        .iter()
        .map(|e| e.server_ts.with_timezone(&offset).date_naive())
        .collect::<BTreeSet<NaiveDate>>()
        .len() as u32
}

/// Groups events into users and applies the exclusion rules. The top-dwell
/// cut removes `floor(fraction · n)` of the `n` users left after the other
/// rules, longest dwell first, ties by user key.
pub fn sessionize_and_filter(events: &[LoggedEvent], registry: &LocationRegistry, config: &AnalyticsConfig) -> UserTable {
    let mut by_user: BTreeMap<&str, Vec<&LoggedEvent>> = BTreeMap::new();
    for e in events {
        by_user.entry(e.event.session_id.as_str()).or_default().push(e);
    }

    let mut excluded = Exclusions::default();
    let mut survivors = Vec::new();
    for (user, mut evs) in by_user {
        evs.sort_by_key(|e| (e.server_ts, e.seq));
        let first = &evs[0].stamp;
        let dwell = dwell_seconds(&evs, config.idle_gap_secs);
        let user_key = user.to_string();
        if evs.iter().any(|e| e.stamp.ua_class == UaClass::Mobile) {
            excluded.mobile.push(user_key);
        } else if !evs.iter().any(|e| e.source == EventSource::Client) {
            excluded.no_client_events.push(user_key);
        } else if first.group == Group::Unknown {
            excluded.unknown_group.push(user_key);
        } else if dwell < config.min_dwell_secs {
            excluded.short_dwell.push(user_key);
        } else {
            let days = active_days(&evs, config.day_offset_secs).max(1);
            let content = content_event_count(&evs, config.include_retweet_clicks);
            survivors.push(UserRecord {
                user: user_key,
                group: first.group,
                condition: first.condition,
                active_days: days,
                dwell_seconds: dwell,
                distinct_locations: distinct_locations(&evs, registry, config.include_retweet_clicks),
                filter_likelihood: filter_likelihood(&evs),
                content_events: content,
                content_events_per_day: content_events_per_day(content, days),
            });
        }
    }

    let cut = (config.top_dwell_fraction * survivors.len() as f64).floor() as usize;
    let mut ranked: Vec<usize> = (0..survivors.len()).collect();
    ranked.sort_by(|&a, &b| {
        survivors[b].dwell_seconds.total_cmp(&survivors[a].dwell_seconds).then_with(|| survivors[a].user.cmp(&survivors[b].user))
    });
    let dropped: BTreeSet<usize> = ranked.into_iter().take(cut).collect();
    let mut users = Vec::with_capacity(survivors.len() - cut);
    for (i, u) in survivors.into_iter().enumerate() {
        if dropped.contains(&i) {
            excluded.top_dwell.push(u.user);
        } else {
            users.push(u);
        }
    }
    excluded.top_dwell.sort();
    UserTable { users, excluded }
}
