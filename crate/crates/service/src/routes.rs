//! HTTP surface.

use std::net::{IpAddr, SocketAddr};
use std::sync::Arc;

use aurora_core::events::{InteractionEvent, UaClass};
use axum::body::Bytes;
use axum::extract::{ConnectInfo, FromRequestParts, Path, Query, State};
use axum::http::header::{CONTENT_TYPE, COOKIE, SET_COOKIE, USER_AGENT};
use axum::http::request::Parts as RequestParts;
use axum::http::{HeaderMap, HeaderValue};
use axum::response::{Html, IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use chrono::Utc;
use serde::Deserialize;
use serde_json::json;

use crate::error::ServiceError;
use crate::sessions::{Session, COOKIE_NAME};
use crate::state::{AppState, ClientInfo, IssuePayload, IssueRef, SessionView};

const COOKIE_MAX_AGE_SECS: u64 = 365 * 24 * 3600;

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/", get(current_page))
        .route("/timeline/{id}", get(timeline_page))
        .route("/api/issue/{id}", get(issue_api))
        .route("/api/events", post(events_api))
        .route("/api/session", get(session_api))
        .route("/healthz", get(healthz))
        .with_state(state)
}

/// Caller address, user agent and session cookie.
pub struct Client(pub ClientInfo);

impl<S: Send + Sync> FromRequestParts<S> for Client {
    type Rejection = std::convert::Infallible;

    async fn from_request_parts(parts: &mut RequestParts, _state: &S) -> Result<Self, Self::Rejection> {
        let forwarded = parts
            .headers
            .get("x-forwarded-for")
            .and_then(|v| v.to_str().ok())
            .and_then(|v| v.split(',').next())
            .and_then(|v| v.trim().parse::<IpAddr>().ok());
        let peer = parts.extensions.get::<ConnectInfo<SocketAddr>>().map(|c| c.0.ip());
        let user_agent = parts.headers.get(USER_AGENT).and_then(|v| v.to_str().ok()).unwrap_or_default().to_string();
        Ok(Client(ClientInfo { ip: forwarded.or(peer), user_agent, cookie: session_cookie(&parts.headers) }))
    }
}

/// Value of the session cookie, if present.
pub fn session_cookie(headers: &HeaderMap) -> Option<String> {
    headers
        .get_all(COOKIE)
        .iter()
        .filter_map(|v| v.to_str().ok())
        .flat_map(|v| v.split(';'))
        .filter_map(|pair| pair.trim().split_once('='))
        .find(|(name, _)| *name == COOKIE_NAME)
        .map(|(_, value)| value.to_string())
}

fn set_cookie(session: &Session) -> (axum::http::HeaderName, HeaderValue) {
    let value = format!(
        "{COOKIE_NAME}={}; Path=/; Max-Age={COOKIE_MAX_AGE_SECS}; HttpOnly; SameSite=Lax",
        session.session_id
    );
    (SET_COOKIE, HeaderValue::from_str(&value).expect("hex token is a valid header value"))
}

#[derive(Debug, Deserialize)]
pub struct LocQuery {
    pub loc: Option<String>,
}

async fn current_page(state: State<Arc<AppState>>, client: Client) -> Result<Response, ServiceError> {
    page(state, IssueRef::Current, client)
}

async fn timeline_page(
    state: State<Arc<AppState>>,
    Path(id): Path<String>,
    client: Client,
) -> Result<Response, ServiceError> {
    page(state, id.parse()?, client)
}

fn page(State(state): State<Arc<AppState>>, which: IssueRef, Client(client): Client) -> Result<Response, ServiceError> {
    state.lookup_issue(which)?;
    let session = state.resolve_session(&client, true, Utc::now())?.session;
    let payload = state.get_issue(which, None, &session)?;
    let html = if session.user_agent_class == UaClass::Mobile {
        render_minimal(&payload)
    } else {
        render_page(&payload, &session)
    };
    Ok(([set_cookie(&session)], Html(html)).into_response())
}

async fn issue_api(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
    Query(q): Query<LocQuery>,
    Client(client): Client,
) -> Result<Response, ServiceError> {
    let which: IssueRef = id.parse()?;
    state.lookup_issue(which)?;
    let resolved = state.resolve_session(&client, false, Utc::now())?;
    let payload = state.get_issue(which, q.loc.as_deref(), &resolved.session)?;
    Ok(([set_cookie(&resolved.session)], Json(payload)).into_response())
}

async fn session_api(State(state): State<Arc<AppState>>, Client(client): Client) -> Result<Response, ServiceError> {
    let resolved = state.resolve_session(&client, true, Utc::now())?;
    let view = SessionView::from(&resolved.session);
    Ok(([set_cookie(&resolved.session)], Json(view)).into_response())
}

/// Accepts one event object or an array of them. A missing `session_id`
/// falls back to the cookie.
async fn events_api(
    State(state): State<Arc<AppState>>,
    Client(client): Client,
    headers: HeaderMap,
    body: Bytes,
) -> Result<Response, ServiceError> {
    let is_json = headers
        .get(CONTENT_TYPE)
        .and_then(|v| v.to_str().ok())
        .is_none_or(|v| v.starts_with("application/json"));
    if !is_json {
        return Err(ServiceError::BadEvent("expected application/json".into()));
    }
    let value: serde_json::Value =
        serde_json::from_slice(&body).map_err(|e| ServiceError::BadEvent(format!("invalid JSON: {e}")))?;
    let (items, single) = match value {
        serde_json::Value::Array(items) => (items, false),
        other => (vec![other], true),
    };
    let mut events = Vec::with_capacity(items.len());
    for mut item in items {
        if let (Some(obj), Some(cookie)) = (item.as_object_mut(), client.cookie.as_ref()) {
            obj.entry("session_id").or_insert_with(|| json!(cookie));
        }
        events.push(serde_json::from_value::<InteractionEvent>(item).map_err(|e| ServiceError::BadEvent(e.to_string()))?);
    }
    let seqs = state.record_events(events)?;
    Ok(if single { Json(json!({ "seq": seqs[0] })) } else { Json(json!({ "seqs": seqs })) }.into_response())
}

async fn healthz(State(state): State<Arc<AppState>>) -> Json<serde_json::Value> {
    Json(json!({
        "status": "ok",
        "issues": state.issues.len(),
        "current": state.issues.current().map(|i| i.id),
        "sessions": state.sessions.len(),
    }))
}

fn escape_html(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&#39;"),
            c => out.push(c),
        }
    }
    out
}

/// Shell page carrying the payload for the client bundle.
fn render_page(payload: &IssuePayload, session: &Session) -> String {
    // `<` is escaped so post text cannot close the script element.
    let data = serde_json::to_string(payload).expect("payload serializes").replace('<', "\\u003c");
    format!(
        "<!doctype html>\n<html lang=\"es\">\n<head>\n<meta charset=\"utf-8\">\n<title>aurora #{id}</title>\n\
         <link rel=\"stylesheet\" href=\"/static/aurora.css\">\n</head>\n\
         <body data-condition=\"{cond}\" data-issue=\"{id}\">\n<div id=\"app\"></div>\n\
         <script id=\"aurora-payload\" type=\"application/json\">{data}</script>\n\
         <script src=\"/static/aurora.js\" defer></script>\n</body>\n</html>\n",
        id = payload.issue_id,
        cond = session.condition,
    )
}

/// Script-free list for mobile browsers.
fn render_minimal(payload: &IssuePayload) -> String {
    let items: String = payload
        .posts
        .iter()
        .map(|p| {
            format!(
                "<li><b>@{}</b> {}</li>\n",
                escape_html(&p.author.screen_name),
                escape_html(&p.text)
            )
        })
        .collect();
    format!(
        "<!doctype html>\n<html lang=\"es\">\n<head>\n<meta charset=\"utf-8\">\n\
         <meta name=\"viewport\" content=\"width=device-width\">\n<title>aurora #{}</title>\n</head>\n\
         <body>\n<ol>\n{items}</ol>\n</body>\n</html>\n",
        payload.issue_id
    )
}
