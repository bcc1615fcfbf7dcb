//! Corpus ingestion: JSON Lines parsing, gazetteer resolution of
//! self-reported locations, admission policies, and local-time partitions.

use std::collections::{BTreeMap, HashSet};
use std::io::BufRead;
use std::sync::OnceLock;

use chrono::{DateTime, FixedOffset, NaiveTime, Timelike, Utc};
use regex::Regex;
use serde::{Deserialize, Serialize};
use tracing::warn;

use crate::error::ConfigError;
use crate::model::{Author, Gazetteer, LocationId, MicroPost, RawPost};

/// Records parsed from a corpus stream, with the number of malformed lines.
#[derive(Debug, Default)]
pub struct ParsedStream {
    pub records: Vec<RawPost>,
    pub skipped: usize,
}

/// Reads line-delimited JSON records. Blank lines are ignored; malformed lines
/// are logged and counted. Only read failures are fatal.
pub fn parse_post_stream<R: BufRead>(reader: R) -> std::io::Result<ParsedStream> {
    let mut out = ParsedStream::default();
    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str::<RawPost>(&line) {
            Ok(rec) => out.records.push(rec),
            Err(err) => {
                warn!(line = lineno + 1, %err, "skipping malformed corpus line");
                out.skipped += 1;
            }
        }
    }
    Ok(out)
}

/// Resolves a profile location by scanning its fragments left to right and
/// returning the first gazetteer hit. Fragments are separated by `,`, `;`,
/// `/` or `|`.
pub fn resolve_location(author: &Author, gazetteer: &Gazetteer) -> Option<LocationId> {
    author
        .self_reported_location
        .split([',', ';', '/', '|'])
        .map(str::trim)
        .filter(|f| !f.is_empty())
        .find_map(|fragment| gazetteer.lookup(fragment).cloned())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdmissionPolicy {
    /// Drop every retweet.
    pub exclude_retweets: bool,
    /// Keep retweets whose retweeting account has a resolved location.
    pub allow_retweets_by_located_accounts: bool,
    /// Drop posts without a resolved location.
    pub require_location: bool,
    pub reject_shouting: bool,
    /// Fraction of uppercase letters among cased letters above which a post
    /// counts as shouting.
    pub shouting_threshold: f64,
    /// Minimum number of cased letters for the shouting test to apply.
    pub shouting_min_letters: usize,
    pub dedupe_within_issue: bool,
}

impl Default for AdmissionPolicy {
    fn default() -> Self {
        Self {
            exclude_retweets: false,
            allow_retweets_by_located_accounts: true,
            require_location: true,
            reject_shouting: true,
            shouting_threshold: 0.9,
            shouting_min_letters: 10,
            dedupe_within_issue: true,
        }
    }
}

impl AdmissionPolicy {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.exclude_retweets && self.allow_retweets_by_located_accounts {
            return Err(ConfigError::BadPolicy(
                "exclude_retweets and allow_retweets_by_located_accounts are mutually exclusive",
            ));
        }
        if !(self.shouting_threshold > 0.0 && self.shouting_threshold <= 1.0) {
            return Err(ConfigError::BadPolicy("shouting_threshold must lie in (0, 1]"));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum RejectReason {
    Retweet,
    NoLocation,
    Shouting,
    Duplicate,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Admission {
    Admitted,
    Rejected(RejectReason),
}

/// Uppercase share of cased letters, or `None` when fewer than `min_letters`
/// cased letters are present.
pub fn uppercase_fraction(text: &str, min_letters: usize) -> Option<f64> {
    let (mut upper, mut cased) = (0usize, 0usize);
    for c in text.chars() {
        if c.is_uppercase() {
            upper += 1;
            cased += 1;
        } else if c.is_lowercase() {
            cased += 1;
        }
    }
    (cased >= min_letters && cased > 0).then(|| upper as f64 / cased as f64)
}

fn url_pattern() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"(?i)\b(?:https?://|www\.)\S+").expect("valid regex"))
}

/// Key used for duplicate-content checks: text with URLs removed and
/// whitespace collapsed.
pub fn content_key(text: &str) -> String {
    url_pattern()
        .replace_all(text, " ")
        .split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
}

/// Applies the stateless checks of `policy`. Location assignment for retweets
/// happens upstream: the retweeter's resolved location is stored on the post.
pub fn admit_post(post: &MicroPost, policy: &AdmissionPolicy) -> Admission {
    if post.is_retweet() {
        if policy.exclude_retweets {
            return Admission::Rejected(RejectReason::Retweet);
        }
        if policy.allow_retweets_by_located_accounts && post.location.is_none() {
            return Admission::Rejected(RejectReason::NoLocation);
        }
    }
    if policy.require_location && post.location.is_none() {
        return Admission::Rejected(RejectReason::NoLocation);
    }
    if policy.reject_shouting {
        if let Some(frac) = uppercase_fraction(&post.text, policy.shouting_min_letters) {
            if frac >= policy.shouting_threshold {
                return Admission::Rejected(RejectReason::Shouting);
            }
        }
    }
    Admission::Admitted
}

/// Admission with an explicit, caller-scoped duplicate-content set.
#[derive(Debug)]
pub struct AdmissionGate {
    policy: AdmissionPolicy,
    seen: HashSet<String>,
}

impl AdmissionGate {
    pub fn new(policy: AdmissionPolicy) -> Self {
        Self { policy, seen: HashSet::new() }
    }

    pub fn policy(&self) -> &AdmissionPolicy {
        &self.policy
    }

    pub fn admit(&mut self, post: &MicroPost) -> Admission {
        let verdict = admit_post(post, &self.policy);
        if verdict != Admission::Admitted || !self.policy.dedupe_within_issue {
            return verdict;
        }
        if self.seen.insert(content_key(&post.text)) {
            Admission::Admitted
        } else {
            Admission::Rejected(RejectReason::Duplicate)
        }
    }

    /// Starts a new issue scope.
    pub fn reset(&mut self) {
        self.seen.clear();
    }
}

// ---------------------------------------------------------------------------
// Time partitions

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimePartition {
    pub name: String,
    #[serde(with = "hhmm")]
    pub start: NaiveTime,
    #[serde(with = "hhmm")]
    pub end: NaiveTime,
    /// Offset from UTC of the wall clock, e.g. `-03:00`.
    #[serde(with = "offset")]
    pub utc_offset: FixedOffset,
}

impl TimePartition {
    pub fn new(name: &str, start: &str, end: &str, utc_offset: &str) -> Result<Self, ConfigError> {
        Ok(Self {
            name: name.to_string(),
            start: hhmm::parse(start)?,
            end: hhmm::parse(end)?,
            utc_offset: offset::parse(utc_offset)?,
        })
    }

    /// Whether the window wraps past midnight.
    pub fn wraps(&self) -> bool {
        self.end <= self.start
    }

    /// Half-open `[start, end)` test on the local wall clock.
    pub fn contains(&self, t: DateTime<Utc>) -> bool {
        let local = t.with_timezone(&self.utc_offset).time();
        if self.wraps() {
            local >= self.start || local < self.end
        } else {
            local >= self.start && local < self.end
        }
    }

    /// The window as UTC second-of-day intervals, split at midnight.
    fn utc_intervals(&self) -> Vec<(i64, i64)> {
        const DAY: i64 = 86_400;
        let shift = -(self.utc_offset.local_minus_utc() as i64);
        let start = (self.start.num_seconds_from_midnight() as i64 + shift).rem_euclid(DAY);
        let mut len = self.end.num_seconds_from_midnight() as i64
            - self.start.num_seconds_from_midnight() as i64;
        if len <= 0 {
            len += DAY;
        }
        let end = start + len;
        if end <= DAY {
            vec![(start, end)]
        } else {
            vec![(start, DAY), (0, end - DAY)]
        }
    }
}

mod hhmm {
    use super::*;
    use serde::{Deserializer, Serializer};

    pub fn parse(s: &str) -> Result<NaiveTime, ConfigError> {
        NaiveTime::parse_from_str(s.trim(), "%H:%M")
            .or_else(|_| NaiveTime::parse_from_str(s.trim(), "%H:%M:%S"))
            .map_err(|_| ConfigError::BadTime(s.to_string()))
    }

    pub fn serialize<S: Serializer>(t: &NaiveTime, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&t.format("%H:%M").to_string())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<NaiveTime, D::Error> {
        let raw = String::deserialize(d)?;
        parse(&raw).map_err(serde::de::Error::custom)
    }
}

mod offset {
    use super::*;
    use serde::{Deserializer, Serializer};

    pub fn parse(s: &str) -> Result<FixedOffset, ConfigError> {
        let s = s.trim();
        if s.eq_ignore_ascii_case("z") || s.eq_ignore_ascii_case("utc") {
            return Ok(FixedOffset::east_opt(0).expect("zero offset"));
        }
        let bad = || ConfigError::BadTime(s.to_string());
        let (sign, rest) = match s.as_bytes().first() {
            Some(b'+') => (1, &s[1..]),
            Some(b'-') => (-1, &s[1..]),
            _ => return Err(bad()),
        };
        let (h, m) = rest.split_once(':').ok_or_else(bad)?;
        let h: i32 = h.parse().map_err(|_| bad())?;
        let m: i32 = m.parse().map_err(|_| bad())?;
        FixedOffset::east_opt(sign * (h * 3600 + m * 60)).ok_or_else(bad)
    }

    pub fn serialize<S: Serializer>(o: &FixedOffset, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&o.to_string())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<FixedOffset, D::Error> {
        let raw = String::deserialize(d)?;
        parse(&raw).map_err(serde::de::Error::custom)
    }
}

/// Non-overlapping set of partitions.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PartitionSet {
    partitions: Vec<TimePartition>,
}

impl PartitionSet {
    pub fn new(partitions: Vec<TimePartition>) -> Result<Self, ConfigError> {
        for (i, a) in partitions.iter().enumerate() {
            for b in &partitions[i + 1..] {
                let overlap = a.utc_intervals().iter().any(|&(s1, e1)| {
                    b.utc_intervals().iter().any(|&(s2, e2)| s1 < e2 && s2 < e1)
                });
                if overlap || a.name == b.name {
                    return Err(ConfigError::OverlappingPartitions(a.name.clone(), b.name.clone()));
                }
            }
        }
        Ok(Self { partitions })
    }

    /// The three election-day windows in Chilean summer time (UTC-3).
    pub fn election_day() -> Self {
        Self::new(vec![
            TimePartition::new("morning-noon", "10:00", "14:30", "-03:00").expect("static"),
            TimePartition::new("afternoon", "14:30", "21:00", "-03:00").expect("static"),
            TimePartition::new("night", "21:00", "02:00", "-03:00").expect("static"),
        ])
        .expect("static partitions do not overlap")
    }

    pub fn from_json(json: &str) -> Result<Self, ConfigError> {
        let parts: Vec<TimePartition> = serde_json::from_str(json)?;
        Self::new(parts)
    }

    pub fn partitions(&self) -> &[TimePartition] {
        &self.partitions
    }

    pub fn locate(&self, t: DateTime<Utc>) -> Option<&TimePartition> {
        self.partitions.iter().find(|p| p.contains(t))
    }
}

#[derive(Debug, Default)]
pub struct Partitioned {
    pub buckets: BTreeMap<String, Vec<MicroPost>>,
    pub dropped: usize,
}

/// Assigns every post to the partition containing its local creation time.
pub fn partition_by_time(posts: Vec<MicroPost>, partitions: &PartitionSet) -> Partitioned {
    let mut out = Partitioned::default();
    for p in partitions.partitions() {
        out.buckets.insert(p.name.clone(), Vec::new());
    }
    for post in posts {
        match partitions.locate(post.created_at) {
            Some(part) => out.buckets.get_mut(&part.name).expect("bucket exists").push(post),
            None => out.dropped += 1,
        }
    }
    out
}

/// Result of running the whole pipeline over raw records.
#[derive(Debug, Default)]
pub struct IngestReport {
    pub admitted: Vec<MicroPost>,
    pub invalid: BTreeMap<&'static str, usize>,
    pub rejected: BTreeMap<String, usize>,
}

/// Validates, geolocates and admits raw records in order. Each post takes the
/// location resolved from its own author's profile (for a retweet, the
/// retweeting account), unless the record already carries one.
pub fn ingest_records(
    records: &[RawPost],
    registry: &crate::model::LocationRegistry,
    gazetteer: &Gazetteer,
    gate: &mut AdmissionGate,
) -> IngestReport {
    let mut report = IngestReport::default();
    for raw in records {
        let mut post = match crate::model::validate_post(raw, registry) {
            Ok(p) => p,
            Err(e) => {
                *report.invalid.entry(e.code()).or_default() += 1;
                continue;
            }
        };
        if post.location.is_none() {
            post.location = resolve_location(&post.author, gazetteer).filter(|l| registry.contains(l));
        }
        match gate.admit(&post) {
            Admission::Admitted => report.admitted.push(post),
            Admission::Rejected(reason) => {
                *report.rejected.entry(format!("{reason:?}")).or_default() += 1;
            }
        }
    }
    report
}
