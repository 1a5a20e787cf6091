mod common;

use std::fs;
use std::sync::Arc;

use chrono::Duration;
use common::{arb_session, epoch};
use proptest::prelude::*;
use wayfare_core::orchestrator::{EventLogEntry, EventStage, Session, SessionId, SessionState};
use wayfare_core::store::{
    any_state, decode, encode, FileStore, MemoryStore, PageRequest, SessionStore, StoreError, SCHEMA_VERSION,
};

fn with_events(mut s: Session, n: usize) -> Session {
    for i in 0..n {
        s.event_log.push(EventLogEntry {
            timestamp: s.created_at + Duration::milliseconds(i as i64),
            stage: EventStage::Created,
            duration_ms: 1.0,
            detail: format!("event {i}"),
            provider_ms: None,
            question_index: None,
        });
    }
    s
}

fn session(n: usize) -> Session {
    with_events(Session::new(SessionId::random(), epoch()), n)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1_000))]

    #[test]
    fn documents_round_trip(s in arb_session()) {
        let text = encode(&s).unwrap();
        prop_assert_eq!(&decode(&s.id.to_string(), &text).unwrap(), &s);
        let mem = MemoryStore::new();
        mem.put(&s).unwrap();
        prop_assert_eq!(mem.get(&s.id).unwrap().unwrap(), s);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn file_store_round_trips(s in arb_session()) {
        let dir = tempfile::tempdir().unwrap();
        let store = FileStore::open(dir.path()).unwrap();
        store.put(&s).unwrap();
        prop_assert_eq!(&store.get(&s.id).unwrap().unwrap(), &s);
        let reopened = FileStore::open(dir.path()).unwrap();
        prop_assert_eq!(reopened.get(&s.id).unwrap().unwrap(), s);
    }
}

#[test]
fn corrupt_documents_are_integrity_errors() {
    let dir = tempfile::tempdir().unwrap();
    let store = FileStore::open(dir.path()).unwrap();
    let s = session(3);
    store.put(&s).unwrap();
    let path = store.doc_path(&s.id);
    let original = fs::read(&path).unwrap();

    fs::write(&path, &original[..original.len() / 2]).unwrap();
    match store.get(&s.id) {
        Err(StoreError::Integrity { id, .. }) => assert_eq!(id, s.id.to_string()),
        other => panic!("expected integrity error, got {other:?}"),
    }
    fs::write(&path, [0xff, 0xfe, 0x00]).unwrap();
    assert!(matches!(store.get(&s.id), Err(StoreError::Integrity { .. })));

    let text = String::from_utf8(original.clone()).unwrap();
    let bumped = text.replace(
        &format!("\"schema_version\": {SCHEMA_VERSION}"),
        "\"schema_version\": 99",
    );
    fs::write(&path, bumped).unwrap();
    assert!(matches!(
        store.get(&s.id),
        Err(StoreError::UnsupportedVersion { version: 99, .. })
    ));

    let other = SessionId::random();
    fs::write(store.doc_path(&other), &original).unwrap();
    assert!(matches!(store.get(&other), Err(StoreError::Integrity { .. })));
}

#[test]
fn failed_write_keeps_previous_version() {
    let dir = tempfile::tempdir().unwrap();
    let store = FileStore::open(dir.path()).unwrap();
    let v1 = session(2);
    store.put(&v1).unwrap();
    let mut v2 = with_events(v1.clone(), 0);
    v2.event_log.extend(session(40).event_log.into_iter().map(|mut e| {
        e.timestamp = v1.created_at + Duration::seconds(1);
        e
    }));
    v2.state = SessionState::AwaitingQuery;

    for budget in [0u64, 10, 200, 1_000] {
        store.set_write_budget(Some(budget));
        let err = store.put(&v2).unwrap_err();
        assert!(matches!(err, StoreError::Io { .. }), "{err}");
        assert!(err.to_string().contains("storage quota exceeded"));
        assert_eq!(store.get(&v1.id).unwrap().unwrap(), v1);
        let leftovers: Vec<_> = fs::read_dir(store.dir())
            .unwrap()
            .map(|e| e.unwrap().file_name().into_string().unwrap())
            .filter(|n| !n.ends_with(".doc"))
            .collect();
        assert!(leftovers.is_empty(), "{leftovers:?}");
    }
    store.set_write_budget(None);
    store.put(&v2).unwrap();
    assert_eq!(store.get(&v1.id).unwrap().unwrap(), v2);
}

#[test]
fn recovery_promotes_complete_writes_and_drops_torn_ones() {
    use sha2::Digest;
    let dir = tempfile::tempdir().unwrap();
    let v1 = session(1);
    let v2 = with_events(v1.clone(), 0);
    let mut v2 = v2;
    v2.state = SessionState::AwaitingQuery;
    let sessions = {
        let store = FileStore::open(dir.path()).unwrap();
        store.put(&v1).unwrap();
        store.dir().to_path_buf()
    };
    let id = v1.id.to_string();
    let new_doc = encode(&v2).unwrap();
    let intent = serde_json::json!({
        "id": id,
        "len": new_doc.len(),
        "sha256": format!("{:x}", sha2::Sha256::digest(new_doc.as_bytes())),
    });

    // Torn temp file: previous version survives.
    fs::write(sessions.join(format!("{id}.doc.tmp")), &new_doc[..new_doc.len() - 5]).unwrap();
    fs::write(sessions.join(format!("{id}.intent")), intent.to_string()).unwrap();
    let store = FileStore::open(dir.path()).unwrap();
    assert_eq!(store.get(&v1.id).unwrap().unwrap(), v1);
    assert!(!sessions.join(format!("{id}.intent")).exists());
    assert!(!sessions.join(format!("{id}.doc.tmp")).exists());
    drop(store);

    // Complete temp file: promoted.
    fs::write(sessions.join(format!("{id}.doc.tmp")), &new_doc).unwrap();
    fs::write(sessions.join(format!("{id}.intent")), intent.to_string()).unwrap();
    let store = FileStore::open(dir.path()).unwrap();
    assert_eq!(store.get(&v1.id).unwrap().unwrap(), v2);

    // Orphan temp file without an intent: discarded.
    fs::write(sessions.join("orphan.doc.tmp"), "{").unwrap();
    drop(store);
    FileStore::open(dir.path()).unwrap();
    assert!(!sessions.join("orphan.doc.tmp").exists());
}

#[test]
fn event_log_is_append_only() {
    let dir = tempfile::tempdir().unwrap();
    let file = FileStore::open(dir.path()).unwrap();
    let mem = MemoryStore::new();
    let stores: [&dyn SessionStore; 2] = [&file, &mem];
    for store in stores {
        let long = session(5);
        store.put(&long).unwrap();
        let mut short = long.clone();
        short.event_log.truncate(2);
        assert!(matches!(
            store.put(&short),
            Err(StoreError::LogRegression {
                stored: 5,
                attempted: 2,
                ..
            })
        ));
        assert_eq!(store.get(&long.id).unwrap().unwrap(), long);
    }
    // The check also holds for a store opened over existing documents.
    let long = FileStore::open(dir.path())
        .unwrap()
        .load_all(&any_state)
        .unwrap()
        .remove(0);
    let reopened = FileStore::open(dir.path()).unwrap();
    let mut short = long.clone();
    short.event_log.clear();
    assert!(matches!(reopened.put(&short), Err(StoreError::LogRegression { .. })));
}

#[test]
fn offline_memory_store_reports_unavailable() {
    let mem = MemoryStore::new();
    let s = session(1);
    mem.put(&s).unwrap();
    mem.set_offline(true);
    assert!(matches!(mem.get(&s.id), Err(StoreError::Unavailable)));
    assert!(matches!(mem.put(&s), Err(StoreError::Unavailable)));
    mem.set_offline(false);
    assert_eq!(mem.get(&s.id).unwrap().unwrap(), s);
}

#[test]
fn listing_pages_are_stable_and_complete() {
    let dir = tempfile::tempdir().unwrap();
    let file = FileStore::open(dir.path()).unwrap();
    let mem = MemoryStore::new();
    let mut all = Vec::new();
    for i in 0..23 {
        let mut s = Session::new(SessionId::random(), epoch() + Duration::seconds(i % 7));
        if i % 3 == 0 {
            s.state = SessionState::Completed;
        }
        file.put(&s).unwrap();
        mem.put(&s).unwrap();
        all.push(s);
    }
    all.sort_by(|a, b| (a.created_at, &a.id).cmp(&(b.created_at, &b.id)));
    let stores: [&dyn SessionStore; 2] = [&file, &mem];
    for store in stores {
        let mut seen = Vec::new();
        let mut req = PageRequest::first(5);
        loop {
            let page = store.list(&any_state, &req).unwrap();
            assert!(page.items.len() <= 5);
            seen.extend(page.items.iter().map(|s| s.id.clone()));
            match page.next_cursor {
                Some(c) => req = PageRequest::after(c, 5),
                None => break,
            }
        }
        assert_eq!(seen, all.iter().map(|s| s.id.clone()).collect::<Vec<_>>());
        let completed = store
            .load_all(&|st: &SessionState| *st == SessionState::Completed)
            .unwrap();
        assert_eq!(completed.len(), 8);
        assert!(matches!(
            store.list(&any_state, &PageRequest::after("bogus", 5)),
            Err(StoreError::InvalidCursor(_))
        ));
        assert!(matches!(
            store.list(&any_state, &PageRequest::first(0)),
            Err(StoreError::PageSize)
        ));
    }
}

#[test]
fn concurrent_writers_on_distinct_sessions() {
    let dir = tempfile::tempdir().unwrap();
    let store = Arc::new(FileStore::open(dir.path()).unwrap());
    let handles: Vec<_> = (0..8)
        .map(|_| {
            let store = store.clone();
            std::thread::spawn(move || {
                let mut s = session(0);
                for i in 1..=10 {
                    s = with_events(s, 1);
                    s.event_log.last_mut().unwrap().detail = format!("step {i}");
                    store.put(&s).unwrap();
                }
                s
            })
        })
        .collect();
    for h in handles {
        let s = h.join().unwrap();
        assert_eq!(store.get(&s.id).unwrap().unwrap(), s);
    }
}
