use std::collections::HashMap;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::RwLock;

use super::{decode, encode, paginate, Page, PageRequest, SessionStore, StoreError};
use crate::orchestrator::{Session, SessionId, SessionState};

/// In-process store. Documents are kept in serialized form so every read
/// exercises the same decode path as the file backend.
#[derive(Debug, Default)]
pub struct MemoryStore {
    docs: RwLock<HashMap<SessionId, (String, Session)>>,
    offline: AtomicBool,
}

impl MemoryStore {
    pub fn new() -> Self {
        Self::default()
    }

    /// Fault injection: while offline every operation fails with
    /// [`StoreError::Unavailable`].
    pub fn set_offline(&self, offline: bool) {
        self.offline.store(offline, Ordering::SeqCst);
    }

    pub fn len(&self) -> usize {
        self.docs.read().expect("store lock").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn check_online(&self) -> Result<(), StoreError> {
        if self.offline.load(Ordering::SeqCst) {
            Err(StoreError::Unavailable)
        } else {
            Ok(())
        }
    }
}

impl SessionStore for MemoryStore {
    fn put(&self, session: &Session) -> Result<(), StoreError> {
        self.check_online()?;
        let text = encode(session)?;
        let mut docs = self.docs.write().expect("store lock");
        if let Some((_, prev)) = docs.get(&session.id) {
            if session.event_log.len() < prev.event_log.len() {
                return Err(StoreError::LogRegression {
                    id: session.id.clone(),
                    stored: prev.event_log.len(),
                    attempted: session.event_log.len(),
                });
            }
        }
        docs.insert(session.id.clone(), (text, session.clone()));
        Ok(())
    }

    fn get(&self, id: &SessionId) -> Result<Option<Session>, StoreError> {
        self.check_online()?;
        let docs = self.docs.read().expect("store lock");
        docs.get(id).map(|(text, _)| decode(&id.to_string(), text)).transpose()
    }

    fn list(&self, filter: &dyn Fn(&SessionState) -> bool, page: &PageRequest) -> Result<Page, StoreError> {
        self.check_online()?;
        let rows = self
            .docs
            .read()
            .expect("store lock")
            .values()
            .map(|(_, s)| s.summary())
            .collect();
        paginate(rows, filter, page)
    }
}
