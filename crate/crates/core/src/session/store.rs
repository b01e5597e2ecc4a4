use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex, MutexGuard, RwLock};

use super::{Session, SessionError, SessionState};

/// One session plus its in-flight flag and last committed snapshot.
#[derive(Debug)]
pub struct SessionSlot {
    dir: PathBuf,
    busy: AtomicBool,
    session: Mutex<Session>,
    committed: RwLock<Arc<SessionState>>,
}

impl SessionSlot {
    fn new(session: Session) -> Self {
        let snapshot = Arc::new(session.state().clone());
        Self {
            dir: session.dir().to_path_buf(),
            busy: AtomicBool::new(false),
            session: Mutex::new(session),
            committed: RwLock::new(snapshot),
        }
    }

    /// Last committed state. Never blocks on an in-flight turn.
    pub fn snapshot(&self) -> Arc<SessionState> {
        self.committed.read().expect("snapshot lock").clone()
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn lock(&self) -> MutexGuard<'_, Session> {
        self.session.lock().unwrap_or_else(|e| e.into_inner())
    }
}

/// Exclusive right to mutate one session. Dropping it publishes the current
/// state as the committed snapshot and clears the in-flight flag.
#[derive(Debug)]
pub struct TurnGuard {
    slot: Arc<SessionSlot>,
}

impl TurnGuard {
    pub fn session(&self) -> MutexGuard<'_, Session> {
        self.slot.lock()
    }
}

impl Drop for TurnGuard {
    fn drop(&mut self) {
        let state = Arc::new(self.slot.lock().state().clone());
        *self.slot.committed.write().unwrap_or_else(|e| e.into_inner()) = state;
        self.slot.busy.store(false, Ordering::Release);
    }
}

/// Directory-backed registry of sessions with an in-memory cache in front.
#[derive(Debug)]
pub struct SessionStore {
    root: PathBuf,
    slots: Mutex<HashMap<String, Arc<SessionSlot>>>,
}

fn valid_id(id: &str) -> bool {
    !id.is_empty() && id.len() <= 64 && id.chars().all(|c| c.is_ascii_alphanumeric() || c == '-')
}

impl SessionStore {
    pub fn new(root: impl Into<PathBuf>) -> Result<Self, SessionError> {
        let root = root.into();
        std::fs::create_dir_all(&root)?;
        Ok(Self {
            root,
            slots: Mutex::new(HashMap::new()),
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn create(&self) -> Result<String, SessionError> {
        let id = uuid::Uuid::new_v4().simple().to_string();
        let session = Session::create(self.root.join(&id), &id)?;
        self.slots
            .lock()
            .expect("slot map")
            .insert(id.clone(), Arc::new(SessionSlot::new(session)));
        Ok(id)
    }

    /// Cached slot, loading from disk on a miss.
    pub fn get(&self, id: &str) -> Result<Arc<SessionSlot>, SessionError> {
        let unknown = || SessionError::UnknownSession(id.to_string());
        if !valid_id(id) {
            return Err(unknown());
        }
        let mut slots = self.slots.lock().expect("slot map");
        if let Some(slot) = slots.get(id) {
            return Ok(slot.clone());
        }
        let dir = self.root.join(id);
        if !dir.join(super::STATE_FILE).exists() {
            return Err(unknown());
        }
        let slot = Arc::new(SessionSlot::new(Session::open(dir)?));
        slots.insert(id.to_string(), slot.clone());
        Ok(slot)
    }

    /// Claims the session for one turn, or fails with `TurnInFlight`.
    pub fn begin_turn(&self, id: &str) -> Result<TurnGuard, SessionError> {
        let slot = self.get(id)?;
        if slot
            .busy
            .compare_exchange(false, true, Ordering::AcqRel, Ordering::Acquire)
            .is_err()
        {
            return Err(SessionError::TurnInFlight(id.to_string()));
        }
        Ok(TurnGuard { slot })
    }

    pub fn snapshot(&self, id: &str) -> Result<Arc<SessionState>, SessionError> {
        Ok(self.get(id)?.snapshot())
    }
}
