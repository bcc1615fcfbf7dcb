//! Cookie sessions with sticky experimental conditions.

use std::collections::HashMap;
use std::sync::{Mutex, RwLock};

use aurora_core::events::{Condition, Group, SessionStamp, UaClass};
use chrono::{DateTime, Utc};
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::ServiceError;

pub const COOKIE_NAME: &str = "at_session";

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Session {
    pub session_id: String,
    pub condition: Condition,
    pub group: Group,
    pub created_at: DateTime<Utc>,
    pub last_seen: DateTime<Utc>,
    pub user_agent_class: UaClass,
}

impl Session {
    pub fn stamp(&self) -> SessionStamp {
        SessionStamp { condition: self.condition, group: self.group, ua_class: self.user_agent_class }
    }
}

/// 32 lowercase hex digits.
pub fn is_well_formed_token(token: &str) -> bool {
    token.len() == 32 && token.bytes().all(|b| b.is_ascii_digit() || (b'a'..=b'f').contains(&b))
}

pub struct SessionStore {
    sessions: RwLock<HashMap<String, Session>>,
    rng: Mutex<ChaCha8Rng>,
    conditions: Vec<Condition>,
    weights: WeightedIndex<f64>,
}

impl SessionStore {
    pub fn new(weights: &[(Condition, f64)], seed: Option<u64>) -> Result<Self, ServiceError> {
        let dist = WeightedIndex::new(weights.iter().map(|w| w.1))
            .map_err(|e| ServiceError::Config(format!("condition weights: {e}")))?;
        let rng = match seed {
            Some(s) => ChaCha8Rng::seed_from_u64(s),
            None => ChaCha8Rng::from_os_rng(),
        };
        Ok(Self {
            sessions: RwLock::new(HashMap::new()),
            rng: Mutex::new(rng),
            conditions: weights.iter().map(|w| w.0).collect(),
            weights: dist,
        })
    }

    /// Live session for `token`, with `last_seen` refreshed.
    pub fn resolve(&self, token: &str, now: DateTime<Utc>) -> Option<Session> {
        if !is_well_formed_token(token) {
            return None;
        }
        let mut map = self.sessions.write().unwrap_or_else(|p| p.into_inner());
        map.get_mut(token).map(|s| {
            s.last_seen = now;
            s.clone()
        })
    }

    pub fn get(&self, token: &str) -> Option<Session> {
        self.sessions.read().unwrap_or_else(|p| p.into_inner()).get(token).cloned()
    }

    /// New session with a weighted random condition and a fresh 128-bit token.
    pub fn assign_condition(&self, group: Group, ua: UaClass, now: DateTime<Utc>) -> Session {
        let (token, condition) = {
            let mut rng = self.rng.lock().unwrap_or_else(|p| p.into_inner());
            let token = format!("{:032x}", rng.random::<u128>());
            (token, self.conditions[self.weights.sample(&mut *rng)])
        };
        let session = Session {
            session_id: token.clone(),
            condition,
            group,
            created_at: now,
            last_seen: now,
            user_agent_class: ua,
        };
        self.sessions.write().unwrap_or_else(|p| p.into_inner()).insert(token, session.clone());
        session
    }

    pub fn len(&self) -> usize {
        self.sessions.read().unwrap_or_else(|p| p.into_inner()).len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}
