//! Durable session storage.
//!
//! Sessions are stored as versioned JSON documents. Both backends keep the
//! event log append-only: a write whose event log is shorter than the stored
//! one is refused.

mod file;
mod memory;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::orchestrator::{Session, SessionId, SessionState, SessionSummary};

pub use file::FileStore;
pub use memory::MemoryStore;

pub const SCHEMA_VERSION: u32 = 1;
pub const DEFAULT_PAGE_SIZE: usize = 50;

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("storage I/O error for {context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },
    #[error("cannot serialize session {id}: {message}")]
    Serialize { id: SessionId, message: String },
    #[error("session {id} is corrupt: {message}")]
    Integrity { id: String, message: String },
    #[error("session {id} has unsupported schema_version {version}")]
    UnsupportedVersion { id: String, version: u64 },
    #[error("refusing to shorten event log of session {id} from {stored} to {attempted} entries")]
    LogRegression {
        id: SessionId,
        stored: usize,
        attempted: usize,
    },
    #[error("invalid cursor {0:?}")]
    InvalidCursor(String),
    #[error("page size must be positive")]
    PageSize,
    #[error("store unavailable")]
    Unavailable,
}

/// On-disk document: the session plus its schema version.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoredSession {
    pub schema_version: u32,
    pub session: Session,
}

/// Serializes a session into its stored document form.
pub fn encode(session: &Session) -> Result<String, StoreError> {
    let doc = StoredSession {
        schema_version: SCHEMA_VERSION,
        session: session.clone(),
    };
    serde_json::to_string_pretty(&doc).map_err(|e| StoreError::Serialize {
        id: session.id.clone(),
        message: e.to_string(),
    })
}

/// Parses a stored document; `id` names the record in error messages.
pub fn decode(id: &str, text: &str) -> Result<Session, StoreError> {
    let integrity = |message: String| StoreError::Integrity {
        id: id.to_owned(),
        message,
    };
    let value: serde_json::Value = serde_json::from_str(text).map_err(|e| integrity(e.to_string()))?;
    let version = value
        .get("schema_version")
        .and_then(serde_json::Value::as_u64)
        .ok_or_else(|| integrity("missing schema_version".into()))?;
    if version != u64::from(SCHEMA_VERSION) {
        return Err(StoreError::UnsupportedVersion {
            id: id.to_owned(),
            version,
        });
    }
    let doc: StoredSession = serde_json::from_value(value).map_err(|e| integrity(e.to_string()))?;
    if doc.session.id.to_string() != id {
        return Err(integrity(format!("document holds session {}", doc.session.id)));
    }
    Ok(doc.session)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PageRequest {
    pub cursor: Option<String>,
    pub size: usize,
}

impl Default for PageRequest {
    fn default() -> Self {
        Self {
            cursor: None,
            size: DEFAULT_PAGE_SIZE,
        }
    }
}

impl PageRequest {
    pub fn first(size: usize) -> Self {
        Self { cursor: None, size }
    }

    pub fn after(cursor: impl Into<String>, size: usize) -> Self {
        Self {
            cursor: Some(cursor.into()),
            size,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Page {
    pub items: Vec<SessionSummary>,
    pub next_cursor: Option<String>,
}

/// Sort key for listings: creation time, then id.
type Position = (DateTime<Utc>, SessionId);

fn cursor_for(pos: &Position) -> String {
    format!("{}|{}", pos.0.timestamp_nanos_opt().unwrap_or(i64::MAX), pos.1)
}

fn parse_cursor(cursor: &str) -> Result<Position, StoreError> {
    let bad = || StoreError::InvalidCursor(cursor.to_owned());
    let (nanos, id) = cursor.split_once('|').ok_or_else(bad)?;
    let nanos: i64 = nanos.parse().map_err(|_| bad())?;
    let id: SessionId = id.parse().map_err(|_| bad())?;
    Ok((DateTime::from_timestamp_nanos(nanos), id))
}

/// Pages through summaries already sorted by position.
pub(crate) fn paginate(
    mut rows: Vec<SessionSummary>,
    filter: &dyn Fn(&SessionState) -> bool,
    page: &PageRequest,
) -> Result<Page, StoreError> {
    if page.size == 0 {
        return Err(StoreError::PageSize);
    }
    rows.retain(|s| filter(&s.state));
    rows.sort_by(|a, b| (a.created_at, &a.id).cmp(&(b.created_at, &b.id)));
    let start = match &page.cursor {
        None => 0,
        Some(c) => {
            let after = parse_cursor(c)?;
            rows.partition_point(|s| (s.created_at, &s.id) <= (after.0, &after.1))
        }
    };
    let items: Vec<SessionSummary> = rows.iter().skip(start).take(page.size).cloned().collect();
    let next_cursor = if start + items.len() < rows.len() {
        items.last().map(|s| cursor_for(&(s.created_at, s.id.clone())))
    } else {
        None
    };
    Ok(Page { items, next_cursor })
}

pub trait SessionStore: Send + Sync {
    /// Upsert by id. Durable before returning on the file backend.
    fn put(&self, session: &Session) -> Result<(), StoreError>;

    fn get(&self, id: &SessionId) -> Result<Option<Session>, StoreError>;

    /// One page of summaries whose state satisfies `filter`, ordered by
    /// creation time then id.
    fn list(&self, filter: &dyn Fn(&SessionState) -> bool, page: &PageRequest) -> Result<Page, StoreError>;

    /// Every session whose state satisfies `filter`, in listing order.
    fn load_all(&self, filter: &dyn Fn(&SessionState) -> bool) -> Result<Vec<Session>, StoreError> {
        let mut out = Vec::new();
        let mut req = PageRequest::first(DEFAULT_PAGE_SIZE);
        loop {
            let page = self.list(filter, &req)?;
            for s in &page.items {
                if let Some(full) = self.get(&s.id)? {
                    out.push(full);
                }
            }
            match page.next_cursor {
                Some(c) => req = PageRequest::after(c, DEFAULT_PAGE_SIZE),
                None => return Ok(out),
            }
        }
    }
}

pub fn put_session(store: &dyn SessionStore, session: &Session) -> Result<(), StoreError> {
    store.put(session)
}

pub fn get_session(store: &dyn SessionStore, id: &SessionId) -> Result<Option<Session>, StoreError> {
    store.get(id)
}

pub fn list_sessions(
    store: &dyn SessionStore,
    filter: &dyn Fn(&SessionState) -> bool,
    page: &PageRequest,
) -> Result<Page, StoreError> {
    store.list(filter, page)
}

/// Filter accepting every state.
pub fn any_state(_: &SessionState) -> bool {
    true
}
