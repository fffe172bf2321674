//! Durable session storage.
//!
//! Layout under the data directory:
//!
//! ```text
//! index.json                      every session's metadata, replaced atomically
//! sessions/<id>/spec.json         the frozen task spec
//! sessions/<id>/events.ndjson     append-only event log
//! ```
//!
//! Event lines are fsynced before an append is acknowledged. A trailing
//! partial line can only come from an unacknowledged write and is dropped on
//! load.

use std::collections::BTreeMap;
use std::fs::{self, File, OpenOptions};
use std::io::{Read, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, OnceLock, RwLock};

use chrono::Utc;
use perceptkit_protocol::{
    events_from_ndjson, events_to_ndjson, Ack, CreateSession, EventRecord, ExportBundle, Session, SessionState,
    TaskSpec, TaskView,
};
use serde::{Deserialize, Serialize};

use crate::error::{Result, ServiceError};
use crate::export;
use crate::tracker::Tracker;

/// A finalized session's immutable exports.
#[derive(Debug)]
pub struct Finalized {
    pub bundle: ExportBundle,
    pub events_ndjson: String,
}

struct Open {
    session: Session,
    events: Vec<EventRecord>,
    tracker: Tracker,
    log: File,
}

struct Entry {
    spec: TaskSpec,
    open: Mutex<Open>,
    finalized: OnceLock<Arc<Finalized>>,
}

#[derive(Serialize, Deserialize)]
struct Index {
    sessions: Vec<Session>,
}

pub struct SessionStore {
    root: PathBuf,
    entries: RwLock<BTreeMap<String, Arc<Entry>>>,
    // metadata as last written to index.json; its lock serializes index writes
    index: Mutex<BTreeMap<String, Session>>,
}

fn lock<T>(m: &Mutex<T>) -> std::sync::MutexGuard<'_, T> {
    m.lock().unwrap_or_else(|p| p.into_inner())
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension("tmp");
    let mut f = File::create(&tmp)?;
    f.write_all(bytes)?;
    f.sync_all()?;
    fs::rename(&tmp, path)?;
    if let Some(dir) = path.parent() {
        File::open(dir)?.sync_all()?;
    }
    Ok(())
}

impl SessionStore {
    /// Opens (or creates) a store and reloads every session in it.
    pub fn open(root: impl Into<PathBuf>) -> Result<Self> {
        let root = root.into();
        fs::create_dir_all(root.join("sessions"))?;
        let store = Self {
            root,
            entries: RwLock::new(BTreeMap::new()),
            index: Mutex::new(BTreeMap::new()),
        };
        let index_path = store.root.join("index.json");
        if index_path.exists() {
            let index: Index = serde_json::from_slice(&fs::read(&index_path)?)
                .map_err(|e| ServiceError::Io(format!("index.json: {e}")))?;
            for meta in index.sessions {
                store.load(meta)?;
            }
        }
        Ok(store)
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    fn dir(&self, id: &str) -> PathBuf {
        self.root.join("sessions").join(id)
    }

    fn load(&self, meta: Session) -> Result<()> {
        let dir = self.dir(&meta.id);
        let spec: TaskSpec = serde_json::from_slice(&fs::read(dir.join("spec.json"))?)
            .map_err(|e| ServiceError::Io(format!("{}: spec.json: {e}", meta.id)))?;
        let mut log = OpenOptions::new().read(true).append(true).open(dir.join("events.ndjson"))?;
        let mut text = String::new();
        log.read_to_string(&mut text)?;
        let complete = text.rfind('\n').map_or(0, |i| i + 1);
        if complete < text.len() {
            tracing::warn!(session = %meta.id, "dropping unacknowledged partial event line");
            log.set_len(complete as u64)?;
            log.seek(SeekFrom::End(0))?;
            text.truncate(complete);
        }
        let events = events_from_ndjson(&text)?;
        let tracker = Tracker::replay(&spec, &events)?;
        let mut session = meta.clone();
        session.event_count = events.len() as u64;
        let entry = Entry {
            spec,
            open: Mutex::new(Open {
                session: session.clone(),
                events,
                tracker,
                log,
            }),
            finalized: OnceLock::new(),
        };
        if session.state == SessionState::Finalized {
            let guard = lock(&entry.open);
            let fin = Finalized {
                bundle: export::build(&session, &entry.spec, &guard.events)?,
                events_ndjson: text,
            };
            drop(guard);
            let _ = entry.finalized.set(Arc::new(fin));
        }
        lock(&self.index).insert(meta.id.clone(), meta.clone());
        self.entries
            .write()
            .unwrap_or_else(|p| p.into_inner())
            .insert(meta.id, Arc::new(entry));
        Ok(())
    }

    fn write_index(&self, index: &BTreeMap<String, Session>) -> Result<()> {
        let body = Index {
            sessions: index.values().cloned().collect(),
        };
        write_atomic(
            &self.root.join("index.json"),
            &serde_json::to_vec_pretty(&body).expect("index serializes"),
        )
    }

    fn entry(&self, id: &str) -> Result<Arc<Entry>> {
        self.entries
            .read()
            .unwrap_or_else(|p| p.into_inner())
            .get(id)
            .cloned()
            .ok_or_else(|| ServiceError::NotFound(id.to_string()))
    }

    pub fn create(&self, req: CreateSession) -> Result<Session> {
        req.spec.validate()?;
        let tracker = Tracker::new(&req.spec)?;
        let id = uuid::Uuid::new_v4().simple().to_string();
        let session = Session {
            id: id.clone(),
            task_kind: req.spec.kind(),
            participant_id: req.participant_id,
            state: SessionState::Open,
            created_at: Utc::now(),
            event_count: 0,
        };
        let dir = self.dir(&id);
        fs::create_dir_all(&dir)?;
        write_atomic(&dir.join("spec.json"), &serde_json::to_vec_pretty(&req.spec).expect("spec serializes"))?;
        let log = OpenOptions::new().create(true).read(true).append(true).open(dir.join("events.ndjson"))?;
        log.sync_all()?;
        {
            let mut index = lock(&self.index);
            index.insert(id.clone(), session.clone());
            self.write_index(&index)?;
        }
        let entry = Entry {
            spec: req.spec,
            open: Mutex::new(Open {
                session: session.clone(),
                events: Vec::new(),
                tracker,
                log,
            }),
            finalized: OnceLock::new(),
        };
        self.entries
            .write()
            .unwrap_or_else(|p| p.into_inner())
            .insert(id.clone(), Arc::new(entry));
        tracing::info!(session = %id, kind = session.task_kind.as_str(), "session created");
        Ok(session)
    }

    /// Appends a batch in seq order. Events already stored are accepted again
    /// if identical, so a retried batch is harmless.
    pub fn append(&self, id: &str, events: &[EventRecord]) -> Result<Ack> {
        let entry = self.entry(id)?;
        let mut open = lock(&entry.open);
        if open.session.state == SessionState::Finalized {
            return Err(ServiceError::Finalized(id.to_string()));
        }
        let stored = open.events.len() as u64;
        let mut tracker = open.tracker.clone();
        let mut fresh: Vec<EventRecord> = Vec::new();
        let mut highest = if events.is_empty() { tracker.last_seq } else { 0 };
        for e in events {
            if e.session_id != id {
                return Err(ServiceError::InvalidEvent(format!(
                    "seq {} belongs to session `{}`",
                    e.seq, e.session_id
                )));
            }
            if e.seq >= 1 && e.seq <= tracker.last_seq {
                let earlier = if e.seq <= stored {
                    &open.events[(e.seq - 1) as usize]
                } else {
                    &fresh[(e.seq - stored - 1) as usize]
                };
                if earlier != e {
                    return Err(ServiceError::SeqConflict(e.seq));
                }
            } else {
                tracker = tracker.accept(&entry.spec, e)?;
                fresh.push(e.clone());
            }
            highest = highest.max(e.seq);
        }
        if !fresh.is_empty() {
            open.log.write_all(events_to_ndjson(&fresh).as_bytes())?;
            open.log.sync_data()?;
            open.events.extend(fresh);
            open.tracker = tracker;
            open.session.event_count = open.events.len() as u64;
        }
        Ok(Ack {
            session_id: id.to_string(),
            last_seq: highest,
        })
    }

    /// Finalizes and returns the export. Finalizing again returns the same export.
    pub fn finalize(&self, id: &str) -> Result<Arc<Finalized>> {
        let entry = self.entry(id)?;
        let mut open = lock(&entry.open);
        if let Some(f) = entry.finalized.get() {
            return Ok(f.clone());
        }
        let mut session = open.session.clone();
        session.state = SessionState::Finalized;
        let fin = Arc::new(Finalized {
            bundle: export::build(&session, &entry.spec, &open.events)?,
            events_ndjson: events_to_ndjson(&open.events),
        });
        {
            let mut index = lock(&self.index);
            index.insert(id.to_string(), session.clone());
            self.write_index(&index)?;
        }
        open.session = session;
        let _ = entry.finalized.set(fin.clone());
        tracing::info!(session = %id, events = open.events.len(), "session finalized");
        Ok(fin)
    }

    /// Export of a finalized session, or a snapshot of an open one.
    pub fn export(&self, id: &str) -> Result<ExportBundle> {
        let entry = self.entry(id)?;
        if let Some(f) = entry.finalized.get() {
            return Ok(f.bundle.clone());
        }
        let open = lock(&entry.open);
        export::build(&open.session, &entry.spec, &open.events)
    }

    pub fn events_ndjson(&self, id: &str) -> Result<String> {
        let entry = self.entry(id)?;
        if let Some(f) = entry.finalized.get() {
            return Ok(f.events_ndjson.clone());
        }
        let text = events_to_ndjson(&lock(&entry.open).events);
        Ok(text)
    }

    pub fn view(&self, id: &str) -> Result<TaskView> {
        let entry = self.entry(id)?;
        let open = lock(&entry.open);
        Ok(TaskView {
            session: open.session.clone(),
            spec: entry.spec.clone(),
            progress: open.tracker.progress(&entry.spec),
        })
    }

    pub fn session(&self, id: &str) -> Result<Session> {
        let entry = self.entry(id)?;
        if let Some(f) = entry.finalized.get() {
            return Ok(f.bundle.session.clone());
        }
        let s = lock(&entry.open).session.clone();
        Ok(s)
    }

    /// All sessions, ordered by id.
    pub fn list(&self) -> Vec<Session> {
        let entries: Vec<Arc<Entry>> = self
            .entries
            .read()
            .unwrap_or_else(|p| p.into_inner())
            .values()
            .cloned()
            .collect();
        entries
            .iter()
            .map(|e| match e.finalized.get() {
                Some(f) => f.bundle.session.clone(),
                None => lock(&e.open).session.clone(),
            })
            .collect()
    }
}
