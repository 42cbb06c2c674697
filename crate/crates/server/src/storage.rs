//! Append-only persistence: one rollout record file, one event log per
//! session, and a session record holding the hidden target.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use mrcad::dataset::rollout_to_line;
use mrcad::design::Design;
use mrcad::game::{GameConfig, Rollout};
use serde::{Deserialize, Serialize};

use crate::session::Event;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionRecord {
    pub id: String,
    pub condition: String,
    pub config: GameConfig,
    pub target: Design,
}

pub trait Storage: Send + Sync {
    fn save_session(&self, record: &SessionRecord) -> std::io::Result<()>;
    fn append_event(&self, session: &str, event: &Event) -> std::io::Result<()>;
    fn append_rollout(&self, rollout: &Rollout) -> std::io::Result<()>;
}

/// Files under one directory: `rollouts.jsonl`, `events/<id>.jsonl`,
/// `sessions/<id>.json`.
#[derive(Debug)]
pub struct FileStorage {
    root: PathBuf,
    lock: Mutex<()>,
}

impl FileStorage {
    pub fn new(root: impl Into<PathBuf>) -> std::io::Result<Self> {
        let root = root.into();
        std::fs::create_dir_all(root.join("events"))?;
        std::fs::create_dir_all(root.join("sessions"))?;
        Ok(FileStorage { root, lock: Mutex::new(()) })
    }

    pub fn rollouts_path(&self) -> PathBuf {
        self.root.join("rollouts.jsonl")
    }

    pub fn events_path(&self, session: &str) -> PathBuf {
        self.root.join("events").join(format!("{session}.jsonl"))
    }

    pub fn session_path(&self, session: &str) -> PathBuf {
        self.root.join("sessions").join(format!("{session}.json"))
    }

    pub fn read_events(&self, session: &str) -> std::io::Result<Vec<Event>> {
        read_jsonl(&self.events_path(session))
    }

    pub fn read_session(&self, session: &str) -> std::io::Result<SessionRecord> {
        let text = std::fs::read_to_string(self.session_path(session))?;
        serde_json::from_str(&text).map_err(std::io::Error::other)
    }
}

fn read_jsonl<T: serde::de::DeserializeOwned>(path: &Path) -> std::io::Result<Vec<T>> {
    std::fs::read_to_string(path)?
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).map_err(std::io::Error::other))
        .collect()
}

fn append_line(path: &Path, line: &str) -> std::io::Result<()> {
    let mut f = std::fs::OpenOptions::new().create(true).append(true).open(path)?;
    writeln!(f, "{line}")
}

impl Storage for FileStorage {
    fn save_session(&self, record: &SessionRecord) -> std::io::Result<()> {
        let _g = self.lock.lock().expect("storage lock");
        let text = serde_json::to_string(record).map_err(std::io::Error::other)?;
        std::fs::write(self.session_path(&record.id), text)
    }

    fn append_event(&self, session: &str, event: &Event) -> std::io::Result<()> {
        let _g = self.lock.lock().expect("storage lock");
        let line = serde_json::to_string(event).map_err(std::io::Error::other)?;
        append_line(&self.events_path(session), &line)
    }

    fn append_rollout(&self, rollout: &Rollout) -> std::io::Result<()> {
        let _g = self.lock.lock().expect("storage lock");
        append_line(&self.rollouts_path(), &rollout_to_line(rollout))
    }
}

/// In-memory storage for tests and ephemeral servers.
#[derive(Debug, Default)]
pub struct MemoryStorage {
    pub sessions: Mutex<Vec<SessionRecord>>,
    pub events: Mutex<Vec<(String, Event)>>,
    pub rollouts: Mutex<Vec<Rollout>>,
}

impl MemoryStorage {
    pub fn events_of(&self, session: &str) -> Vec<Event> {
        self.events
            .lock()
            .expect("storage lock")
            .iter()
            .filter(|(s, _)| s == session)
            .map(|(_, e)| e.clone())
            .collect()
    }
}

impl Storage for MemoryStorage {
    fn save_session(&self, record: &SessionRecord) -> std::io::Result<()> {
        self.sessions.lock().expect("storage lock").push(record.clone());
        Ok(())
    }

    fn append_event(&self, session: &str, event: &Event) -> std::io::Result<()> {
        self.events.lock().expect("storage lock").push((session.to_string(), event.clone()));
        Ok(())
    }

    fn append_rollout(&self, rollout: &Rollout) -> std::io::Result<()> {
        self.rollouts.lock().expect("storage lock").push(rollout.clone());
        Ok(())
    }
}
