//! Append-only JSON-lines event log, one file per session.

use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use super::session::Event;
use crate::{Error, Result};

#[derive(Clone, Debug)]
pub struct EventStore {
    dir: PathBuf,
}

impl EventStore {
    pub fn open(dir: impl Into<PathBuf>) -> Result<Self> {
        let dir = dir.into();
        fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        Ok(Self { dir })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn path(&self, id: &str) -> PathBuf {
        self.dir.join(format!("{id}.jsonl"))
    }

    /// Appends one event and syncs it to disk before returning.
    pub fn append(&self, id: &str, event: &Event) -> Result<()> {
        let path = self.path(id);
        let mut line = serde_json::to_string(event)?;
        line.push('\n');
        let mut f = OpenOptions::new().create(true).append(true).open(&path).map_err(|e| Error::io(&path, e))?;
        f.write_all(line.as_bytes()).map_err(|e| Error::io(&path, e))?;
        f.sync_data().map_err(|e| Error::io(&path, e))
    }

    /// Events of one session. A torn final line (a crash mid-write, before
    /// the request was acknowledged) is dropped.
    pub fn load(&self, id: &str) -> Result<Vec<Event>> {
        let path = self.path(id);
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let complete = text.ends_with('\n');
        let lines: Vec<&str> = text.lines().filter(|l| !l.trim().is_empty()).collect();
        let mut events = Vec::with_capacity(lines.len());
        for (i, line) in lines.iter().enumerate() {
            match serde_json::from_str(line) {
                Ok(e) => events.push(e),
                Err(_) if i + 1 == lines.len() && !complete => {
                    tracing::warn!(session = id, "dropping torn final log line");
                }
                Err(e) => return Err(e.into()),
            }
        }
        Ok(events)
    }

    /// Ids of every stored session, sorted.
    pub fn ids(&self) -> Result<Vec<String>> {
        let mut ids: Vec<String> = fs::read_dir(&self.dir)
            .map_err(|e| Error::io(&self.dir, e))?
            .filter_map(|e| e.ok())
            .filter_map(|e| {
                let name = e.file_name().into_string().ok()?;
                name.strip_suffix(".jsonl").map(String::from)
            })
            .collect();
        ids.sort();
        Ok(ids)
    }
}
