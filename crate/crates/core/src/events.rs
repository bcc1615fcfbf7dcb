//! Interaction event taxonomy and the append-only JSON Lines event log.

use std::fmt;
use std::fs::{File, OpenOptions};
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Mutex;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::error::EventError;
use crate::model::LocationId;

macro_rules! string_enum {
    ($(#[$meta:meta])* $name:ident { $($variant:ident => $text:literal),+ $(,)? }) => {
        $(#[$meta])*
        #[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
        pub enum $name {
            $(#[serde(rename = $text)] $variant),+
        }

        impl $name {
            pub const ALL: &'static [$name] = &[$($name::$variant),+];

            pub fn as_str(self) -> &'static str {
                match self {
                    $($name::$variant => $text),+
                }
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.as_str())
            }
        }

        impl FromStr for $name {
            type Err = EventError;

            fn from_str(s: &str) -> Result<Self, Self::Err> {
                match s {
                    $($text => Ok($name::$variant),)+
                    other => Err(EventError::BadEvent(format!("unknown {} `{other}`", stringify!($name)))),
                }
            }
        }
    };
}

string_enum!(
    /// Closed set of logged interactions.
    EventType {
        SessionCreated => "session_created",
        SessionRestored => "session_restored",
        TimelineLoaded => "timeline_loaded",
        UiLoaded => "ui_loaded",
        Ping => "ping",
        LocationFilter => "location_filter",
        PostDetail => "post_detail",
        LinkClick => "link_click",
        ReplyClick => "reply_click",
        RetweetClick => "retweet_click",
        FavoriteClick => "favorite_click",
        FollowClick => "follow_click",
    }
);

impl EventType {
    /// Interactions with a post's content.
    pub fn is_content(self) -> bool {
        matches!(
            self,
            EventType::PostDetail
                | EventType::LinkClick
                | EventType::ReplyClick
                | EventType::RetweetClick
                | EventType::FavoriteClick
                | EventType::FollowClick
        )
    }

    pub fn requires_target(self) -> bool {
        self.is_content() || self == EventType::LocationFilter
    }
}

string_enum!(
    /// UI variant shown to a session.
    Condition {
        Baseline => "baseline",
        Clustered => "clustered",
        Treemap => "treemap",
    }
);

string_enum!(
    /// Geographic group of a session.
    Group {
        Rm => "RM",
        NotRm => "NOT-RM",
        Unknown => "UNKNOWN",
    }
);

string_enum!(
    UaClass {
        Desktop => "desktop",
        Mobile => "mobile",
    }
);

string_enum!(
    /// Who produced the event: the server itself or the browser client.
    EventSource {
        Server => "server",
        Client => "client",
    }
);

impl UaClass {
    /// Coarse user-agent classification.
    pub fn classify(user_agent: &str) -> Self {
        let ua = user_agent.to_ascii_lowercase();
        const MOBILE: [&str; 6] = ["mobile", "android", "iphone", "ipad", "ipod", "windows phone"];
        if MOBILE.iter().any(|m| ua.contains(m)) {
            UaClass::Mobile
        } else {
            UaClass::Desktop
        }
    }
}

/// Event as submitted by a client (server fields absent).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InteractionEvent {
    pub session_id: String,
    #[serde(default)]
    pub issue_id: Option<u64>,
    pub event_type: EventType,
    /// Post id, or a location code for `location_filter`.
    #[serde(default)]
    pub target: Option<String>,
    /// Location that produced the targeted post.
    #[serde(default)]
    pub target_location: Option<LocationId>,
    #[serde(default)]
    pub client_ts: Option<DateTime<Utc>>,
}

impl InteractionEvent {
    pub fn new(session_id: impl Into<String>, event_type: EventType) -> Self {
        Self {
            session_id: session_id.into(),
            issue_id: None,
            event_type,
            target: None,
            target_location: None,
            client_ts: None,
        }
    }

    pub fn with_target(mut self, target: impl Into<String>) -> Self {
        self.target = Some(target.into());
        self
    }

    pub fn validate(&self) -> Result<(), EventError> {
        if self.session_id.is_empty() {
            return Err(EventError::BadEvent("empty session_id".into()));
        }
        if self.event_type.requires_target() && self.target.as_deref().is_none_or(str::is_empty) {
            return Err(EventError::BadEvent(format!("{} requires a target", self.event_type)));
        }
        Ok(())
    }
}

/// Session attributes stamped on every logged event.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SessionStamp {
    pub condition: Condition,
    pub group: Group,
    pub ua_class: UaClass,
}

/// One line of the event log.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LoggedEvent {
    pub seq: u64,
    pub server_ts: DateTime<Utc>,
    pub source: EventSource,
    #[serde(flatten)]
    pub stamp: SessionStamp,
    #[serde(flatten)]
    pub event: InteractionEvent,
}

/// Append-only event log. Writes are serialized through one lock, so
/// sequence numbers are strictly increasing in file order.
pub struct EventLog {
    inner: Mutex<LogWriter>,
    path: Option<PathBuf>,
    fsync: bool,
}

struct LogWriter {
    next_seq: u64,
    sink: Box<dyn Write + Send>,
    file: Option<File>,
}

impl EventLog {
    /// Opens `path` for appending, continuing after its highest sequence number.
    pub fn open(path: impl AsRef<Path>) -> Result<Self, EventError> {
        let path = path.as_ref().to_path_buf();
        let next_seq = match File::open(&path) {
            Ok(f) => replay(BufReader::new(f))?.events.last().map_or(1, |e| e.seq + 1),
            Err(e) if e.kind() == io::ErrorKind::NotFound => 1,
            Err(e) => return Err(e.into()),
        };
        let file = OpenOptions::new().create(true).append(true).open(&path)?;
        let sink = Box::new(BufWriter::new(file.try_clone()?));
        Ok(Self {
            inner: Mutex::new(LogWriter { next_seq, sink, file: Some(file) }),
            path: Some(path),
            fsync: true,
        })
    }

    /// Log writing into an arbitrary sink, numbering from 1.
    pub fn from_writer(sink: impl Write + Send + 'static) -> Self {
        Self {
            inner: Mutex::new(LogWriter { next_seq: 1, sink: Box::new(sink), file: None }),
            path: None,
            fsync: false,
        }
    }

    /// Disables fsync after each batch; data still reaches the OS on every append.
    pub fn without_fsync(mut self) -> Self {
        self.fsync = false;
        self
    }

    pub fn path(&self) -> Option<&Path> {
        self.path.as_deref()
    }

    pub fn append(
        &self,
        event: InteractionEvent,
        stamp: SessionStamp,
        source: EventSource,
    ) -> Result<LoggedEvent, EventError> {
        Ok(self.append_batch(vec![(event, stamp, source)])?.pop().expect("one event in, one out"))
    }

    /// Appends events in order and syncs once at the end. Validation happens
    /// before any write, so a bad event rejects the whole batch.
    pub fn append_batch(
        &self,
        batch: Vec<(InteractionEvent, SessionStamp, EventSource)>,
    ) -> Result<Vec<LoggedEvent>, EventError> {
        for (event, _, _) in &batch {
            event.validate()?;
        }
        let mut w = self.inner.lock().unwrap_or_else(|p| p.into_inner());
        let mut out = Vec::with_capacity(batch.len());
        for (event, stamp, source) in batch {
            let logged = LoggedEvent { seq: w.next_seq, server_ts: Utc::now(), source, stamp, event };
            let mut line = serde_json::to_vec(&logged)?;
            line.push(b'\n');
            w.sink.write_all(&line)?;
            w.next_seq += 1;
            out.push(logged);
        }
        w.sink.flush()?;
        if self.fsync {
            if let Some(f) = &w.file {
                f.sync_data()?;
            }
        }
        Ok(out)
    }

    /// Sequence number the next event will receive.
    pub fn next_seq(&self) -> u64 {
        self.inner.lock().unwrap_or_else(|p| p.into_inner()).next_seq
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Replay {
    /// Events sorted by sequence number.
    pub events: Vec<LoggedEvent>,
    /// Lines that failed to parse.
    pub corrupt: usize,
}

/// Reads a JSON Lines log. Blank lines are ignored; unparsable lines are counted.
pub fn replay<R: BufRead>(reader: R) -> Result<Replay, EventError> {
    let mut out = Replay::default();
    for line in reader.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str::<LoggedEvent>(&line) {
            Ok(e) => out.events.push(e),
            Err(_) => out.corrupt += 1,
        }
    }
    out.events.sort_by_key(|e| e.seq);
    Ok(out)
}

pub fn replay_path(path: impl AsRef<Path>) -> Result<Replay, EventError> {
    replay(BufReader::new(File::open(path)?))
}
