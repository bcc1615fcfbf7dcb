//! Domain types shared by every subsystem: locations, authors, posts,
//! timelines, and the three configuration tables (location registry,
//! gazetteer, population shares).

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::io::Read;
use std::path::Path;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use unicode_normalization::char::is_combining_mark;
use unicode_normalization::UnicodeNormalization;

use crate::error::{ConfigError, ValidationError};

/// Maximum post length, in Unicode scalar values.
pub const MAX_POST_CHARS: usize = 140;

/// Short uppercase location code (e.g. `RM`, `V`).
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct LocationId(String);

impl LocationId {
    /// Builds a code after checking its shape. Registry membership is checked
    /// separately by [`LocationRegistry::resolve`].
    pub fn new(code: impl Into<String>) -> Result<Self, ConfigError> {
        let code = code.into();
        let code = code.trim().to_string();
        let well_formed = !code.is_empty()
            && code.len() <= 16
            && code
                .chars()
                .all(|c| c.is_ascii_uppercase() || c.is_ascii_digit() || c == '-' || c == '_');
        if well_formed {
            Ok(Self(code))
        } else {
            Err(ConfigError::BadLocationCode(code))
        }
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for LocationId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// Ordered set of known locations. The order fixes hue assignment and the
/// order of location filters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LocationRegistry {
    entries: Vec<(LocationId, String)>,
}

impl LocationRegistry {
    pub fn new(entries: Vec<(LocationId, String)>) -> Result<Self, ConfigError> {
        if entries.len() < 2 {
            return Err(ConfigError::RegistryTooSmall(entries.len()));
        }
        let mut seen = std::collections::HashSet::new();
        for (code, _) in &entries {
            if !seen.insert(code.clone()) {
                return Err(ConfigError::DuplicateLocation(code.to_string()));
            }
        }
        Ok(Self { entries })
    }

    /// Registry whose names equal their codes.
    pub fn from_codes<I, S>(codes: I) -> Result<Self, ConfigError>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let entries = codes
            .into_iter()
            .map(|c| {
                let id = LocationId::new(c)?;
                let name = id.to_string();
                Ok((id, name))
            })
            .collect::<Result<Vec<_>, ConfigError>>()?;
        Self::new(entries)
    }

    /// Reads `code,name` CSV (with header).
    pub fn from_csv_reader<R: Read>(reader: R) -> Result<Self, ConfigError> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let mut entries = Vec::new();
        for row in rdr.records() {
            let row = row?;
            let code = row.get(0).ok_or(ConfigError::MissingColumn("code"))?;
            let name = row.get(1).unwrap_or(code);
            entries.push((LocationId::new(code)?, name.to_string()));
        }
        Self::new(entries)
    }

    pub fn from_csv_path(path: impl AsRef<Path>) -> Result<Self, ConfigError> {
        Self::from_csv_reader(std::fs::File::open(path)?)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = &LocationId> {
        self.entries.iter().map(|(id, _)| id)
    }

    pub fn name(&self, id: &LocationId) -> Option<&str> {
        self.entries.iter().find(|(c, _)| c == id).map(|(_, n)| n.as_str())
    }

    pub fn index_of(&self, id: &LocationId) -> Option<usize> {
        self.entries.iter().position(|(c, _)| c == id)
    }

    pub fn contains(&self, id: &LocationId) -> bool {
        self.index_of(id).is_some()
    }

    /// Looks up a raw code string in the registry.
    pub fn resolve(&self, code: &str) -> Option<LocationId> {
        let code = code.trim();
        self.entries.iter().find(|(c, _)| c.as_str() == code).map(|(c, _)| c.clone())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Author {
    pub id: String,
    pub screen_name: String,
    /// Free-text location from the author's profile.
    pub self_reported_location: String,
    pub followers: u64,
    pub friends: u64,
    pub statuses: u64,
    pub account_created_at: DateTime<Utc>,
}

/// Reference to the original of a retweet.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RetweetRef {
    pub post_id: String,
    pub author_id: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MicroPost {
    pub id: String,
    pub author: Author,
    pub text: String,
    pub created_at: DateTime<Utc>,
    pub retweet_count: u64,
    pub hashtags: Vec<String>,
    pub urls: Vec<String>,
    /// Author ids mentioned in the text.
    pub mentions: Vec<String>,
    pub reply_to: Option<String>,
    pub retweet_of: Option<RetweetRef>,
    pub location: Option<LocationId>,
}

impl MicroPost {
    pub fn is_retweet(&self) -> bool {
        self.retweet_of.is_some()
    }

    /// Serializes back into the line-oriented ingestion record.
    pub fn to_raw(&self) -> RawPost {
        RawPost {
            id: Some(self.id.clone()),
            text: Some(self.text.clone()),
            created_at: Some(self.created_at.to_rfc3339()),
            author: Some(RawAuthor {
                id: Some(self.author.id.clone()),
                screen_name: Some(self.author.screen_name.clone()),
                location: Some(self.author.self_reported_location.clone()),
                followers: Some(self.author.followers as i64),
                friends: Some(self.author.friends as i64),
                statuses: Some(self.author.statuses as i64),
                created_at: Some(self.author.account_created_at.to_rfc3339()),
            }),
            retweet_count: Some(self.retweet_count as i64),
            entities: Some(RawEntities {
                hashtags: self.hashtags.clone(),
                urls: self.urls.clone(),
                mentions: self.mentions.clone(),
            }),
            reply_to_author_id: self.reply_to.clone(),
            retweeted_status: self.retweet_of.as_ref().map(|r| RawRetweet {
                id: Some(r.post_id.clone()),
                author_id: Some(r.author_id.clone()),
            }),
            location: self.location.as_ref().map(|l| l.to_string()),
        }
    }
}

/// Generation method of a timeline.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Method {
    /// Top-s by retweet count.
    Pop,
    /// Greedy entropy maximization.
    Div,
    /// Entropy maximization with location sidelining.
    Pm,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::Pop, Method::Div, Method::Pm];
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::Pop => "POP",
            Method::Div => "DIV",
            Method::Pm => "PM",
        })
    }
}

impl std::str::FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "pop" => Ok(Method::Pop),
            "div" => Ok(Method::Div),
            "pm" => Ok(Method::Pm),
            other => Err(format!("unknown method `{other}`")),
        }
    }
}

/// Closed time interval `[start, end]`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TimeWindow {
    pub start: DateTime<Utc>,
    pub end: DateTime<Utc>,
}

impl TimeWindow {
    pub fn new(start: DateTime<Utc>, end: DateTime<Utc>) -> Self {
        if start <= end {
            Self { start, end }
        } else {
            Self { start: end, end: start }
        }
    }

    pub fn length_seconds(&self) -> f64 {
        (self.end - self.start).num_milliseconds() as f64 / 1000.0
    }

    pub fn contains(&self, t: DateTime<Utc>) -> bool {
        self.start <= t && t <= self.end
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Timeline {
    pub posts: Vec<MicroPost>,
    pub method: Method,
    pub source_window: TimeWindow,
    /// Set when the pool ran out before reaching the requested size.
    pub shortfall: bool,
    /// Number of times the sideline clock had to be advanced because no
    /// location was eligible.
    #[serde(default)]
    pub relaxations: u32,
}

impl Timeline {
    pub fn len(&self) -> usize {
        self.posts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.posts.is_empty()
    }

    pub fn ids(&self) -> Vec<&str> {
        self.posts.iter().map(|p| p.id.as_str()).collect()
    }
}

/// Lowercase, accent-stripped, whitespace-collapsed form used for
/// gazetteer lookups.
pub fn normalize_place(text: &str) -> String {
    let stripped: String = text.nfkd().filter(|c| !is_combining_mark(*c)).collect();
    stripped
        .to_lowercase()
        .split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Gazetteer {
    aliases: HashMap<String, LocationId>,
}

impl Gazetteer {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, alias: &str, location: LocationId) {
        self.aliases.insert(normalize_place(alias), location);
    }

    pub fn lookup(&self, text: &str) -> Option<&LocationId> {
        self.aliases.get(&normalize_place(text))
    }

    pub fn len(&self) -> usize {
        self.aliases.len()
    }

    pub fn is_empty(&self) -> bool {
        self.aliases.is_empty()
    }

    /// Distinct codes referenced by any alias, sorted.
    pub fn codes(&self) -> Vec<LocationId> {
        let mut codes: Vec<_> = self.aliases.values().cloned().collect();
        codes.sort();
        codes.dedup();
        codes
    }

    /// Reads `alias,code` CSV (with header). When a registry is given every
    /// code must belong to it.
    pub fn from_csv_reader<R: Read>(
        reader: R,
        registry: Option<&LocationRegistry>,
    ) -> Result<Self, ConfigError> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let mut gazetteer = Self::new();
        for row in rdr.records() {
            let row = row?;
            let alias = row.get(0).ok_or(ConfigError::MissingColumn("alias"))?;
            let code = row.get(1).ok_or(ConfigError::MissingColumn("code"))?;
            let id = match registry {
                Some(reg) => reg
                    .resolve(code)
                    .ok_or_else(|| ConfigError::UnknownLocation(code.to_string()))?,
                None => LocationId::new(code)?,
            };
            gazetteer.insert(alias, id);
        }
        Ok(gazetteer)
    }

    pub fn from_csv_path(
        path: impl AsRef<Path>,
        registry: Option<&LocationRegistry>,
    ) -> Result<Self, ConfigError> {
        Self::from_csv_reader(std::fs::File::open(path)?, registry)
    }
}

/// Population share per location; shares sum to one.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PopulationTable {
    shares: BTreeMap<LocationId, f64>,
}

impl PopulationTable {
    pub const SUM_TOLERANCE: f64 = 1e-9;

    pub fn new(
        shares: BTreeMap<LocationId, f64>,
        registry: Option<&LocationRegistry>,
    ) -> Result<Self, ConfigError> {
        for (id, share) in &shares {
            if !(share.is_finite() && *share > 0.0 && *share <= 1.0) {
                return Err(ConfigError::BadShare(id.to_string(), *share));
            }
            if let Some(reg) = registry {
                if !reg.contains(id) {
                    return Err(ConfigError::UnknownLocation(id.to_string()));
                }
            }
        }
        if let Some(reg) = registry {
            if let Some(missing) = reg.ids().find(|id| !shares.contains_key(*id)) {
                return Err(ConfigError::MissingShare(missing.to_string()));
            }
        }
        let total: f64 = shares.values().sum();
        if (total - 1.0).abs() > Self::SUM_TOLERANCE {
            return Err(ConfigError::SharesDoNotSumToOne(total));
        }
        Ok(Self { shares })
    }

    /// Equal shares over the registry.
    pub fn uniform(registry: &LocationRegistry) -> Self {
        let share = 1.0 / registry.len() as f64;
        Self {
            shares: registry.ids().map(|id| (id.clone(), share)).collect(),
        }
    }

    /// Reads `code,share` CSV (with header).
    pub fn from_csv_reader<R: Read>(
        reader: R,
        registry: Option<&LocationRegistry>,
    ) -> Result<Self, ConfigError> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let mut shares = BTreeMap::new();
        for row in rdr.records() {
            let row = row?;
            let code = row.get(0).ok_or(ConfigError::MissingColumn("code"))?;
            let share: f64 = row
                .get(1)
                .ok_or(ConfigError::MissingColumn("share"))?
                .parse()
                .map_err(|_| ConfigError::BadShare(code.to_string(), f64::NAN))?;
            shares.insert(LocationId::new(code)?, share);
        }
        Self::new(shares, registry)
    }

    pub fn from_csv_path(
        path: impl AsRef<Path>,
        registry: Option<&LocationRegistry>,
    ) -> Result<Self, ConfigError> {
        Self::from_csv_reader(std::fs::File::open(path)?, registry)
    }

    pub fn share(&self, id: &LocationId) -> Option<f64> {
        self.shares.get(id).copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&LocationId, f64)> {
        self.shares.iter().map(|(k, v)| (k, *v))
    }

    pub fn len(&self) -> usize {
        self.shares.len()
    }

    pub fn is_empty(&self) -> bool {
        self.shares.is_empty()
    }

    /// Registry over the table's codes, in code order.
    pub fn registry(&self) -> Result<LocationRegistry, ConfigError> {
        LocationRegistry::from_codes(self.shares.keys().map(|k| k.to_string()))
    }
}

// ---------------------------------------------------------------------------
// Raw ingestion records

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RawAuthor {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub screen_name: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub location: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub followers: Option<i64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub friends: Option<i64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub statuses: Option<i64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub created_at: Option<String>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RawEntities {
    #[serde(default)]
    pub hashtags: Vec<String>,
    #[serde(default)]
    pub urls: Vec<String>,
    #[serde(default)]
    pub mentions: Vec<String>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RawRetweet {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub author_id: Option<String>,
}

/// One line of the JSON Lines corpus, before validation. Every field is
/// optional here so that missing fields surface as reason-coded errors.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RawPost {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub text: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub created_at: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub author: Option<RawAuthor>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub retweet_count: Option<i64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub entities: Option<RawEntities>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reply_to_author_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub retweeted_status: Option<RawRetweet>,
    /// Already-resolved location code, if any.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub location: Option<String>,
}

fn required<'a>(value: &'a Option<String>, field: &'static str) -> Result<&'a str, ValidationError> {
    match value.as_deref() {
        Some(v) if !v.trim().is_empty() => Ok(v),
        _ => Err(ValidationError::MissingField(field)),
    }
}

fn timestamp(value: &Option<String>, field: &'static str) -> Result<DateTime<Utc>, ValidationError> {
    let raw = required(value, field)?;
    DateTime::parse_from_rfc3339(raw.trim())
        .map(|t| t.with_timezone(&Utc))
        .map_err(|_| ValidationError::MalformedTimestamp(field))
}

fn count(value: Option<i64>, field: &'static str) -> Result<u64, ValidationError> {
    let v = value.unwrap_or(0);
    u64::try_from(v).map_err(|_| ValidationError::NegativeCount(field))
}

fn dedup_preserving(items: &[String]) -> Vec<String> {
    let mut out: Vec<String> = Vec::with_capacity(items.len());
    for item in items {
        let item = item.trim();
        if !item.is_empty() && !out.iter().any(|o| o == item) {
            out.push(item.to_string());
        }
    }
    out
}

/// Validates a raw record into a [`MicroPost`]. An embedded location code must
/// belong to `registry`.
pub fn validate_post(raw: &RawPost, registry: &LocationRegistry) -> Result<MicroPost, ValidationError> {
    let id = required(&raw.id, "id")?.to_string();
    let raw_author = raw.author.as_ref().ok_or(ValidationError::MissingField("author"))?;
    let author = Author {
        id: required(&raw_author.id, "author.id")?.to_string(),
        screen_name: raw_author.screen_name.clone().unwrap_or_default(),
        self_reported_location: raw_author.location.clone().unwrap_or_default(),
        followers: count(raw_author.followers, "author.followers")?,
        friends: count(raw_author.friends, "author.friends")?,
        statuses: count(raw_author.statuses, "author.statuses")?,
        account_created_at: timestamp(&raw_author.created_at, "author.created_at")?,
    };
    let text = raw.text.clone().ok_or(ValidationError::MissingField("text"))?;
    let length = text.chars().count();
    if length > MAX_POST_CHARS {
        return Err(ValidationError::TextTooLong(length));
    }
    let created_at = timestamp(&raw.created_at, "created_at")?;
    let retweet_count = count(raw.retweet_count, "retweet_count")?;
    let entities = raw.entities.clone().unwrap_or_default();
    let retweet_of = match &raw.retweeted_status {
        None => None,
        Some(rt) => Some(RetweetRef {
            post_id: required(&rt.id, "retweeted_status.id")?.to_string(),
            author_id: required(&rt.author_id, "retweeted_status.author_id")?.to_string(),
        }),
    };
    let location = match raw.location.as_deref().map(str::trim) {
        None | Some("") => None,
        Some(code) => Some(
            registry
                .resolve(code)
                .ok_or_else(|| ValidationError::UnknownLocation(code.to_string()))?,
        ),
    };
    Ok(MicroPost {
        id,
        author,
        text,
        created_at,
        retweet_count,
        hashtags: dedup_preserving(&entities.hashtags),
        urls: dedup_preserving(&entities.urls),
        mentions: dedup_preserving(&entities.mentions),
        reply_to: raw.reply_to_author_id.clone().filter(|r| !r.trim().is_empty()),
        retweet_of,
        location,
    })
}
