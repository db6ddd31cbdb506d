//! Append-only session logs: one JSONL file of [`SessionEvent`]s per
//! session. A crash can leave at most a partial last line, which loading
//! cuts off.

use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::time::SystemTime;

use anyhow::{bail, Context};
use moaplan_core::planner::{PlanningSession, SessionEvent};

#[derive(Debug, Clone)]
pub struct SessionStore {
    dir: PathBuf,
}

/// Session ids become file names, so keep them to a safe alphabet.
pub fn valid_session_id(id: &str) -> bool {
    !id.is_empty() && id.len() <= 128 && id.chars().all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_')
}

#[derive(Debug, Clone)]
pub struct Loaded {
    pub session: PlanningSession,
    pub created: Option<SystemTime>,
    pub updated: Option<SystemTime>,
    /// Bytes of a torn final record that were cut off.
    pub truncated_bytes: u64,
}

impl SessionStore {
    pub fn open(dir: impl Into<PathBuf>) -> anyhow::Result<Self> {
        let dir = dir.into();
        fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
        Ok(SessionStore { dir })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn path(&self, id: &str) -> PathBuf {
        self.dir.join(format!("{id}.jsonl"))
    }

    pub fn exists(&self, id: &str) -> bool {
        valid_session_id(id) && self.path(id).exists()
    }

    /// Writes the session's pending events and syncs them to disk.
    pub fn persist(&self, session: &mut PlanningSession) -> anyhow::Result<()> {
        let events = session.take_events();
        self.append(&session.session_id, &events)
    }

    pub fn append(&self, id: &str, events: &[SessionEvent]) -> anyhow::Result<()> {
        if !valid_session_id(id) {
            bail!("invalid session id {id:?}");
        }
        if events.is_empty() {
            return Ok(());
        }
        let mut buf = Vec::new();
        for e in events {
            serde_json::to_writer(&mut buf, e)?;
            buf.push(b'\n');
        }
        let path = self.path(id);
        let mut f = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&path)
            .with_context(|| format!("opening {}", path.display()))?;
        f.write_all(&buf)?;
        f.sync_data()?;
        Ok(())
    }

    pub fn load(&self, id: &str) -> anyhow::Result<Loaded> {
        if !valid_session_id(id) {
            bail!("invalid session id {id:?}");
        }
        let path = self.path(id);
        let file = File::open(&path).with_context(|| format!("opening {}", path.display()))?;
        let meta = file.metadata()?;
        let mut reader = BufReader::new(file);
        let mut events = Vec::new();
        let mut good_len = 0u64;
        let mut line = String::new();
        let mut lineno = 0;
        let mut torn = false;
        loop {
            line.clear();
            let n = reader.read_line(&mut line)?;
            if n == 0 {
                break;
            }
            lineno += 1;
            // every append ends in a newline, so a line without one was torn
            if !line.ends_with('\n') {
                torn = true;
                break;
            }
            let text = line.trim_end();
            if !text.is_empty() {
                let e: SessionEvent =
                    serde_json::from_str(text).with_context(|| format!("{}:{lineno}", path.display()))?;
                events.push(e);
            }
            good_len += n as u64;
        }
        let truncated_bytes = meta.len() - good_len;
        if torn {
            tracing::warn!(session = id, truncated_bytes, "cutting off torn record");
            OpenOptions::new().write(true).open(&path)?.set_len(good_len)?;
        }
        let session = PlanningSession::from_events(&events).with_context(|| format!("replaying {}", path.display()))?;
        Ok(Loaded {
            session,
            created: meta.created().ok().or_else(|| meta.modified().ok()),
            updated: meta.modified().ok(),
            truncated_bytes,
        })
    }

    /// Session ids with a log in the store, sorted.
    pub fn list(&self) -> anyhow::Result<Vec<String>> {
        let mut ids = Vec::new();
        for entry in fs::read_dir(&self.dir)? {
            let name = entry?.file_name();
            let name = name.to_string_lossy();
            if let Some(id) = name.strip_suffix(".jsonl") {
                if valid_session_id(id) {
                    ids.push(id.to_string());
                }
            }
        }
        ids.sort();
        Ok(ids)
    }
}
