//! One document per session under `<data_dir>/sessions/<id>.doc`.
//!
//! A write goes to `<id>.doc.tmp`, is fsynced, recorded in `<id>.intent`
//! (length and digest of the new document), renamed over the live document
//! and the intent removed. Opening the store replays leftover intents: a
//! complete temp file is promoted, anything else is discarded, so the live
//! document is always either the previous or the new version.

use std::collections::HashMap;
use std::fs::{self, File, OpenOptions};
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{decode, encode, paginate, Page, PageRequest, SessionStore, StoreError};
use crate::orchestrator::{Session, SessionId, SessionState};

const DOC_EXT: &str = "doc";
const TMP_EXT: &str = "doc.tmp";
const INTENT_EXT: &str = "intent";

#[derive(Debug, Serialize, Deserialize)]
struct Intent {
    id: String,
    len: u64,
    sha256: String,
}

#[derive(Debug)]
pub struct FileStore {
    dir: PathBuf,
    /// Serializes writers and remembers the stored event-log length per id.
    log_lengths: Mutex<HashMap<SessionId, usize>>,
    /// Remaining bytes writable, for fault injection. `u64::MAX` = unlimited.
    budget: AtomicU64,
}

fn io_err(context: impl Into<String>) -> impl FnOnce(io::Error) -> StoreError {
    let context = context.into();
    move |source| StoreError::Io { context, source }
}

fn digest(bytes: &[u8]) -> String {
    format!("{:x}", Sha256::digest(bytes))
}

/// Writer that fails once the shared byte budget is exhausted.
struct BudgetWriter<'a> {
    inner: File,
    budget: &'a AtomicU64,
}

impl Write for BudgetWriter<'_> {
    fn write(&mut self, buf: &[u8]) -> io::Result<usize> {
        let left = self.budget.load(Ordering::SeqCst);
        if left == 0 && !buf.is_empty() {
            return Err(io::Error::other("storage quota exceeded"));
        }
        let n = (buf.len() as u64).min(left) as usize;
        let written = self.inner.write(&buf[..n])?;
        if left != u64::MAX {
            self.budget.fetch_sub(written as u64, Ordering::SeqCst);
        }
        Ok(written)
    }

    fn flush(&mut self) -> io::Result<()> {
        self.inner.flush()
    }
}

impl FileStore {
    /// Opens (creating if needed) the store rooted at `data_dir` and
    /// recovers any interrupted writes.
    pub fn open(data_dir: impl AsRef<Path>) -> Result<Self, StoreError> {
        let dir = data_dir.as_ref().join("sessions");
        fs::create_dir_all(&dir).map_err(io_err(dir.display().to_string()))?;
        let store = Self {
            dir,
            log_lengths: Mutex::new(HashMap::new()),
            budget: AtomicU64::new(u64::MAX),
        };
        store.recover()?;
        Ok(store)
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    /// Fault injection: limit the total bytes later writes may use.
    pub fn set_write_budget(&self, bytes: Option<u64>) {
        self.budget.store(bytes.unwrap_or(u64::MAX), Ordering::SeqCst);
    }

    pub fn doc_path(&self, id: &SessionId) -> PathBuf {
        self.dir.join(format!("{id}.{DOC_EXT}"))
    }

    fn tmp_path(&self, id: &str) -> PathBuf {
        self.dir.join(format!("{id}.{TMP_EXT}"))
    }

    fn intent_path(&self, id: &str) -> PathBuf {
        self.dir.join(format!("{id}.{INTENT_EXT}"))
    }

    fn sync_dir(&self) -> Result<(), StoreError> {
        File::open(&self.dir)
            .and_then(|d| d.sync_all())
            .map_err(io_err(self.dir.display().to_string()))
    }

    fn recover(&self) -> Result<(), StoreError> {
        let entries = fs::read_dir(&self.dir).map_err(io_err(self.dir.display().to_string()))?;
        for entry in entries.filter_map(Result::ok) {
            let path = entry.path();
            let Some(name) = path.file_name().and_then(|n| n.to_str()) else {
                continue;
            };
            if let Some(id) = name.strip_suffix(&format!(".{INTENT_EXT}")) {
                let tmp = self.tmp_path(id);
                let intent: Option<Intent> = fs::read(&path).ok().and_then(|b| serde_json::from_slice(&b).ok());
                let complete = match (&intent, fs::read(&tmp)) {
                    (Some(i), Ok(bytes)) => i.len == bytes.len() as u64 && i.sha256 == digest(&bytes),
                    _ => false,
                };
                if complete {
                    tracing::info!(id, "promoting interrupted session write");
                    fs::rename(&tmp, self.dir.join(format!("{id}.{DOC_EXT}"))).map_err(io_err(id))?;
                } else {
                    let _ = fs::remove_file(&tmp);
                }
                fs::remove_file(&path).map_err(io_err(id))?;
            } else if let Some(id) = name.strip_suffix(&format!(".{TMP_EXT}")) {
                if !self.intent_path(id).exists() {
                    let _ = fs::remove_file(&path);
                }
            }
        }
        self.sync_dir()
    }

    fn write_file(&self, path: &Path, bytes: &[u8]) -> Result<(), StoreError> {
        let context = path.display().to_string();
        let file = OpenOptions::new()
            .write(true)
            .create(true)
            .truncate(true)
            .open(path)
            .map_err(io_err(&context))?;
        let mut w = BudgetWriter {
            inner: file,
            budget: &self.budget,
        };
        w.write_all(bytes).map_err(io_err(&context))?;
        w.inner.sync_all().map_err(io_err(context))
    }

    fn read_doc(&self, id: &SessionId) -> Result<Option<Session>, StoreError> {
        let path = self.doc_path(id);
        match fs::read(&path) {
            Ok(bytes) => {
                let text = String::from_utf8(bytes).map_err(|_| StoreError::Integrity {
                    id: id.to_string(),
                    message: "document is not UTF-8".into(),
                })?;
                decode(&id.to_string(), &text).map(Some)
            }
            Err(e) if e.kind() == io::ErrorKind::NotFound => Ok(None),
            Err(e) => Err(io_err(path.display().to_string())(e)),
        }
    }
}

impl SessionStore for FileStore {
    fn put(&self, session: &Session) -> Result<(), StoreError> {
        let text = encode(session)?;
        let bytes = text.as_bytes();
        let id = session.id.to_string();
        let mut lengths = self.log_lengths.lock().expect("store lock");
        let stored = match lengths.get(&session.id) {
            Some(n) => Some(*n),
            None => self.read_doc(&session.id).ok().flatten().map(|s| s.event_log.len()),
        };
        if let Some(stored) = stored {
            if session.event_log.len() < stored {
                return Err(StoreError::LogRegression {
                    id: session.id.clone(),
                    stored,
                    attempted: session.event_log.len(),
                });
            }
        }

        let tmp = self.tmp_path(&id);
        let intent_path = self.intent_path(&id);
        let written = self.write_file(&tmp, bytes).and_then(|()| {
            let intent = serde_json::to_vec(&Intent {
                id: id.clone(),
                len: bytes.len() as u64,
                sha256: digest(bytes),
            })
            .expect("intent serializes");
            self.write_file(&intent_path, &intent)
        });
        if let Err(e) = written {
            let _ = fs::remove_file(&tmp);
            let _ = fs::remove_file(&intent_path);
            return Err(e);
        }
        fs::rename(&tmp, self.doc_path(&session.id)).map_err(io_err(&id))?;
        self.sync_dir()?;
        fs::remove_file(&intent_path).map_err(io_err(&id))?;
        lengths.insert(session.id.clone(), session.event_log.len());
        Ok(())
    }

    fn get(&self, id: &SessionId) -> Result<Option<Session>, StoreError> {
        self.read_doc(id)
    }

    fn list(&self, filter: &dyn Fn(&SessionState) -> bool, page: &PageRequest) -> Result<Page, StoreError> {
        let entries = fs::read_dir(&self.dir).map_err(io_err(self.dir.display().to_string()))?;
        let mut rows = Vec::new();
        for entry in entries.filter_map(Result::ok) {
            let path = entry.path();
            let Some(name) = path.file_name().and_then(|n| n.to_str()) else {
                continue;
            };
            let Some(stem) = name.strip_suffix(&format!(".{DOC_EXT}")) else {
                continue;
            };
            let Ok(id) = stem.parse::<SessionId>() else { continue };
            if let Some(s) = self.read_doc(&id)? {
                rows.push(s.summary());
            }
        }
        paginate(rows, filter, page)
    }
}
