//! Publication bot: announcements, per-minute retweets, and hourly location
//! digests, composed purely and handed to a pluggable transport.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use chrono::{DateTime, Duration, Timelike, Utc};
use rand::seq::IndexedRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::BotError;
use crate::issue::Issue;
use crate::model::{LocationId, LocationRegistry, MicroPost};

pub const MAX_TEXT_CHARS: usize = 140;
pub const MAX_MENTIONS: usize = 4;
pub const MAX_BASE_URL_CHARS: usize = 80;
const ELLIPSIS: char = '…';

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BotPostKind {
    AnnouncementTweets,
    AnnouncementRetweets,
    Retweet,
    LocationDigest,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TermWeight {
    pub term: String,
    pub weight: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BotPost {
    pub kind: BotPostKind,
    /// Full text as published, including mentions and link.
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub link: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub mentions: Vec<String>,
    /// Ranked digest terms.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub attachment: Option<Vec<TermWeight>>,
    pub scheduled_at: DateTime<Utc>,
    /// Post being retweeted.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target_post: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub location: Option<LocationId>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BotConfig {
    /// Site root without a trailing slash.
    pub base_url: String,
    pub announcement_offset_secs: i64,
    pub announcement_gap_secs: i64,
    pub retweet_interval_secs: i64,
    pub period_secs: i64,
    pub digest_minute: u32,
    pub digest_spacing_secs: i64,
    pub digest_terms: usize,
    pub tweets_lead: String,
    pub retweets_lead: String,
    /// `{name}` is replaced with the location name.
    pub digest_lead: String,
}

impl Default for BotConfig {
    fn default() -> Self {
        Self {
            base_url: "http://localhost:8080".into(),
            announcement_offset_secs: 0,
            announcement_gap_secs: 30,
            retweet_interval_secs: 60,
            period_secs: 1800,
            digest_minute: 45,
            digest_spacing_secs: 3,
            digest_terms: 10,
            tweets_lead: "Nueva edición con tweets destacados de".into(),
            retweets_lead: "Lo más compartido de esta edición:".into(),
            digest_lead: "Lo que se comenta en {name}:".into(),
        }
    }
}

impl BotConfig {
    pub fn validate(&self) -> Result<(), BotError> {
        let bad = |m: &str| Err(BotError::BadConfig(m.into()));
        if self.base_url.chars().count() > MAX_BASE_URL_CHARS {
            return bad("base_url longer than 80 characters");
        }
        if self.retweet_interval_secs <= 0 || self.period_secs <= 0 || self.announcement_gap_secs <= 0 {
            return bad("intervals must be positive");
        }
        if self.announcement_gap_secs >= self.retweet_interval_secs {
            return bad("announcement gap must be shorter than the retweet interval");
        }
        if self.digest_minute >= 60 {
            return bad("digest_minute must lie in 0..60");
        }
        if self.digest_spacing_secs <= 0 {
            return bad("digest spacing must be positive");
        }
        Ok(())
    }

    pub fn issue_link(&self, issue_id: u64) -> String {
        format!("{}/timeline/{issue_id}", self.base_url)
    }

    pub fn location_link(&self, location: &LocationId) -> String {
        format!("{}/#{location}", self.base_url)
    }

    fn announcement_time(&self, issue: &Issue) -> DateTime<Utc> {
        issue.generated_at + Duration::seconds(self.announcement_offset_secs)
    }
}

/// Composes `lead @m1 … @mk link` within 140 characters. Mentions are dropped
/// from the end first, then the lead is shortened with an ellipsis. Returns
/// the text and the mentions that survived.
pub fn compose_text(lead: &str, mentions: &[String], link: Option<&str>) -> (String, Vec<String>) {
    let link_len = link.map_or(0, |l| l.chars().count() + 1);
    let mut kept: Vec<String> = mentions.iter().take(MAX_MENTIONS).cloned().collect();
    let mentions_len = |kept: &[String]| kept.iter().map(|m| m.chars().count() + 2).sum::<usize>();
    let lead_len = lead.chars().count();
    while !kept.is_empty() && lead_len.min(1) + mentions_len(&kept) + link_len > MAX_TEXT_CHARS {
        kept.pop();
    }
    let budget = MAX_TEXT_CHARS.saturating_sub(mentions_len(&kept) + link_len);
    let lead: String = if lead_len <= budget {
        lead.to_string()
    } else if budget == 0 {
        String::new()
    } else {
        let mut s: String = lead.chars().take(budget - 1).collect();
        s.truncate(s.trim_end().len());
        s.push(ELLIPSIS);
        s
    };

    let mut parts: Vec<String> = Vec::new();
    if !lead.is_empty() {
        parts.push(lead);
    }
    parts.extend(kept.iter().map(|m| format!("@{m}")));
    if let Some(l) = link {
        parts.push(l.to_string());
    }
    let mut text = parts.join(" ");
    if text.chars().count() > MAX_TEXT_CHARS {
        // Only reachable when the link alone exceeds the budget.
        text = text.chars().take(MAX_TEXT_CHARS).collect();
    }
    (text, kept)
}

fn sample_handles<R: Rng + ?Sized>(posts: &[&MicroPost], rng: &mut R) -> Vec<String> {
    let handles: BTreeSet<&str> = posts.iter().map(|p| p.author.screen_name.as_str()).collect();
    let handles: Vec<&str> = handles.into_iter().collect();
    handles.choose_multiple(rng, MAX_MENTIONS).map(|h| h.to_string()).collect()
}

/// The two posts published with each issue. Mentions are sampled
/// independently: up to 4 distinct authors of featured posts, and up to 4
/// distinct authors of featured posts that have been retweeted.
pub fn compose_announcements<R: Rng + ?Sized>(issue: &Issue, config: &BotConfig, rng: &mut R) -> [BotPost; 2] {
    let posts: Vec<&MicroPost> = issue.served().posts.iter().collect();
    let retweeted: Vec<&MicroPost> = posts.iter().copied().filter(|p| p.retweet_count > 0).collect();
    let link = config.issue_link(issue.id);
    let at = config.announcement_time(issue);
    let make = |kind, lead: &str, pool: &[&MicroPost], at, rng: &mut R| {
        let (text, mentions) = compose_text(lead, &sample_handles(pool, rng), Some(&link));
        BotPost {
            kind,
            text,
            link: Some(link.clone()),
            mentions,
            attachment: None,
            scheduled_at: at,
            target_post: None,
            location: None,
        }
    };
    let first = make(BotPostKind::AnnouncementTweets, &config.tweets_lead, &posts, at, rng);
    let second = make(
        BotPostKind::AnnouncementRetweets,
        &config.retweets_lead,
        &retweeted,
        at + Duration::seconds(config.announcement_gap_secs),
        rng,
    );
    [first, second]
}

/// One retweet per interval after the announcements, walking the served
/// timeline in order without repeats and stopping before the next issue.
pub fn schedule_retweets(issue: &Issue, config: &BotConfig) -> Vec<BotPost> {
    let start = config.announcement_time(issue);
    let next_issue = issue.generated_at + Duration::seconds(config.period_secs);
    let mut seen = HashSet::new();
    issue
        .served()
        .posts
        .iter()
        .filter(|p| seen.insert(p.id.as_str()))
        .zip(1..)
        .map(|(p, k)| (p, start + Duration::seconds(k * config.retweet_interval_secs)))
        .take_while(|(_, at)| *at < next_issue)
        .map(|(p, at)| BotPost {
            kind: BotPostKind::Retweet,
            text: p.text.chars().take(MAX_TEXT_CHARS).collect(),
            link: None,
            mentions: Vec::new(),
            attachment: None,
            scheduled_at: at,
            target_post: Some(p.id.clone()),
            location: p.location.clone(),
        })
        .collect()
}

/// Lowercasing tokenizer with a stopword list.
#[derive(Clone, Debug)]
pub struct Tokenizer {
    stopwords: HashSet<String>,
    min_len: usize,
}

const SPANISH_STOPWORDS: &str = "a al algo algunas algunos ante antes como con contra cual cuando de del desde donde durante e el ella ellas ellos en entre era eran es esa esas ese eso esos esta estaba estado estan estar estas este esto estos está están fue fueron ha hace hacia han hasta hay la las le les lo los mas me mi mis mucho muy más mí nada ni no nos nosotros o otra otras otro otros para pero poco por porque que quien quienes qué se sea ser si sido sin sobre son su sus también tan te tiene tienen todo todos tu tus tú un una uno unos usted ustedes va van vamos y ya yo él rt via http https co";

impl Default for Tokenizer {
    fn default() -> Self {
        Self::spanish()
    }
}

impl Tokenizer {
    pub fn spanish() -> Self {
        Self::with_stopwords(SPANISH_STOPWORDS.split_whitespace())
    }

    pub fn with_stopwords<I, S>(words: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        Self { stopwords: words.into_iter().map(|w| w.as_ref().to_lowercase()).collect(), min_len: 2 }
    }

    /// Words of at least two characters; URLs and @handles are dropped, `#` is stripped.
    pub fn tokenize(&self, text: &str) -> Vec<String> {
        text.split_whitespace()
            .filter(|w| !w.starts_with('@') && !w.contains("://") && !w.starts_with("www."))
            .flat_map(|w| w.split(|c: char| !c.is_alphanumeric()))
            .map(str::to_lowercase)
            .filter(|w| w.chars().count() >= self.min_len && !w.chars().all(|c| c.is_ascii_digit()))
            .filter(|w| !self.stopwords.contains(w))
            .collect()
    }
}

/// Term counts per location document.
pub type LocationDocuments = BTreeMap<LocationId, BTreeMap<String, usize>>;

pub fn location_documents(posts: &[MicroPost], tokenizer: &Tokenizer) -> LocationDocuments {
    let mut docs = LocationDocuments::new();
    for post in posts {
        let Some(loc) = &post.location else { continue };
        let doc = docs.entry(loc.clone()).or_default();
        for t in tokenizer.tokenize(&post.text) {
            *doc.entry(t).or_default() += 1;
        }
    }
    docs
}

/// Top `k` terms of `location` by `tf · ln(N / (1 + df))`, where `N` counts the
/// location documents and `df` the documents containing the term. Ties break
/// lexicographically.
pub fn tfidf_terms(location: &LocationId, docs: &LocationDocuments, k: usize) -> Result<Vec<TermWeight>, BotError> {
    let doc = docs.get(location).filter(|d| !d.is_empty()).ok_or(BotError::EmptySet)?;
    let n = docs.values().filter(|d| !d.is_empty()).count() as f64;
    let mut scored: Vec<TermWeight> = doc
        .iter()
        .map(|(term, &tf)| {
            let df = docs.values().filter(|d| d.contains_key(term)).count() as f64;
            TermWeight { term: term.clone(), weight: tf as f64 * (n / (1.0 + df)).ln() }
        })
        .collect();
    scored.sort_by(|a, b| b.weight.total_cmp(&a.weight).then_with(|| a.term.cmp(&b.term)));
    scored.truncate(k);
    Ok(scored)
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct DigestBatch {
    pub posts: Vec<BotPost>,
    /// Registered locations with no posts in the hour.
    pub omitted: Vec<LocationId>,
}

/// One digest per active registered location, in registry order, spaced a few
/// seconds apart starting one second after `now`.
pub fn compose_location_digests(
    hour_posts: &[MicroPost],
    registry: &LocationRegistry,
    tokenizer: &Tokenizer,
    config: &BotConfig,
    now: DateTime<Utc>,
) -> Result<DigestBatch, BotError> {
    if now.minute() != config.digest_minute {
        return Err(BotError::WrongMinute { expected: config.digest_minute, actual: now.minute() });
    }
    let docs = location_documents(hour_posts, tokenizer);
    let active: HashSet<&LocationId> = hour_posts.iter().filter_map(|p| p.location.as_ref()).collect();
    let mut batch = DigestBatch::default();
    for location in registry.ids() {
        if !active.contains(location) {
            batch.omitted.push(location.clone());
            continue;
        }
        // A location whose posts are all stopwords still gets its digest.
        let terms = tfidf_terms(location, &docs, config.digest_terms).unwrap_or_default();
        let name = registry.name(location).unwrap_or(location.as_str());
        let link = config.location_link(location);
        let (text, _) = compose_text(&config.digest_lead.replace("{name}", name), &[], Some(&link));
        let at = now + Duration::seconds(1 + config.digest_spacing_secs * batch.posts.len() as i64);
        batch.posts.push(BotPost {
            kind: BotPostKind::LocationDigest,
            text,
            link: Some(link),
            mentions: Vec::new(),
            attachment: Some(terms),
            scheduled_at: at,
            target_post: None,
            location: Some(location.clone()),
        });
    }
    Ok(batch)
}

pub trait Transport {
    fn publish(&mut self, post: &BotPost) -> Result<(), BotError>;
}

/// Dry-run sink writing one JSON object per line.
pub struct FileSink {
    out: BufWriter<File>,
}

impl FileSink {
    pub fn create(path: impl AsRef<Path>) -> Result<Self, BotError> {
        Ok(Self { out: BufWriter::new(File::create(path)?) })
    }
}

impl Transport for FileSink {
    fn publish(&mut self, post: &BotPost) -> Result<(), BotError> {
        serde_json::to_writer(&mut self.out, post).map_err(|e| BotError::Transport(e.to_string()))?;
        self.out.write_all(b"\n")?;
        self.out.flush()?;
        Ok(())
    }
}

#[derive(Debug, Default)]
pub struct MemorySink {
    pub posts: Vec<BotPost>,
}

impl Transport for MemorySink {
    fn publish(&mut self, post: &BotPost) -> Result<(), BotError> {
        self.posts.push(post.clone());
        Ok(())
    }
}

/// Publishes in `scheduled_at` order, retrying each post up to `retries` extra times.
pub fn publish_all<T: Transport + ?Sized>(transport: &mut T, posts: &[BotPost], retries: usize) -> Result<usize, BotError> {
    let mut ordered: Vec<&BotPost> = posts.iter().collect();
    ordered.sort_by_key(|p| p.scheduled_at);
    for post in &ordered {
        let mut attempt = 0;
        loop {
            match transport.publish(post) {
                Ok(()) => break,
                Err(e) if attempt >= retries => return Err(e),
                Err(e) => {
                    tracing::warn!(attempt, error = %e, "publish failed, retrying");
                    attempt += 1;
                }
            }
        }
    }
    Ok(ordered.len())
}

/// Announcements and retweets for one issue period.
pub fn plan_cycle<R: Rng + ?Sized>(issue: &Issue, config: &BotConfig, rng: &mut R) -> Vec<BotPost> {
    let mut posts: Vec<BotPost> = compose_announcements(issue, config, rng).into();
    posts.extend(schedule_retweets(issue, config));
    posts
}
