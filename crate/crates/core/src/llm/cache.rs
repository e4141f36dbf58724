//! Append-only JSON-lines response cache.
//!
//! Each line is one record: key, a short request summary, and the response.
//! A trailing line that fails to parse (an interrupted append) is truncated
//! on open; a bad line anywhere else is an error.

use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{Read, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::{CompletionRequest, LlmError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CacheMode {
    #[default]
    Off,
    /// Serve hits, record misses.
    ReadWrite,
    /// Serve hits; a miss is an error.
    Replay,
}

#[derive(Debug, Serialize, Deserialize)]
struct Record {
    key: String,
    model_id: String,
    max_tokens: u32,
    temperature: f64,
    prompt_chars: usize,
    prompt_head: String,
    response: String,
}

struct Inner {
    file: File,
    entries: HashMap<String, String>,
}

pub struct ResponseCache {
    path: PathBuf,
    inner: Mutex<Inner>,
}

fn io_err(path: &Path, e: std::io::Error) -> LlmError {
    LlmError::Cache(format!("{}: {e}", path.display()))
}

impl ResponseCache {
    pub fn open(path: impl AsRef<Path>) -> Result<Self, LlmError> {
        let path = path.as_ref().to_path_buf();
        let mut file = OpenOptions::new()
            .read(true)
            .append(true)
            .create(true)
            .open(&path)
            .map_err(|e| io_err(&path, e))?;
        let mut bytes = Vec::new();
        file.read_to_end(&mut bytes).map_err(|e| io_err(&path, e))?;

        let mut entries = HashMap::new();
        let mut offset = 0usize;
        let mut lineno = 0usize;
        let mut truncate_at = None;
        let mut needs_newline = false;
        while offset < bytes.len() {
            lineno += 1;
            let end = bytes[offset..]
                .iter()
                .position(|&b| b == b'\n')
                .map(|p| offset + p);
            let line = &bytes[offset..end.unwrap_or(bytes.len())];
            let next = end.map_or(bytes.len(), |e| e + 1);
            let is_last = bytes[next..].iter().all(u8::is_ascii_whitespace);
            if line.iter().all(u8::is_ascii_whitespace) {
                offset = next;
                continue;
            }
            match serde_json::from_slice::<Record>(line) {
                Ok(rec) => {
                    entries.entry(rec.key).or_insert(rec.response);
                    needs_newline = end.is_none();
                }
                Err(_) if is_last => {
                    truncate_at = Some(offset);
                    break;
                }
                Err(e) => {
                    return Err(LlmError::Cache(format!(
                        "{}: corrupt record at line {lineno}: {e}",
                        path.display()
                    )))
                }
            }
            offset = next;
        }
        if let Some(at) = truncate_at {
            file.set_len(at as u64).map_err(|e| io_err(&path, e))?;
            file.seek(SeekFrom::End(0)).map_err(|e| io_err(&path, e))?;
        } else if needs_newline {
            file.write_all(b"\n").map_err(|e| io_err(&path, e))?;
        }
        Ok(ResponseCache {
            path,
            inner: Mutex::new(Inner { file, entries }),
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn len(&self) -> usize {
        self.inner.lock().expect("cache lock").entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn get(&self, key: &str) -> Option<String> {
        self.inner
            .lock()
            .expect("cache lock")
            .entries
            .get(key)
            .cloned()
    }

    /// Appends a record unless the key is already present.
    pub fn insert(&self, key: &str, req: &CompletionRequest, response: &str) -> Result<(), LlmError> {
        let mut inner = self.inner.lock().expect("cache lock");
        if inner.entries.contains_key(key) {
            return Ok(());
        }
        let rec = Record {
            key: key.to_string(),
            model_id: req.model_id.clone(),
            max_tokens: req.max_tokens,
            temperature: req.temperature,
            prompt_chars: req.prompt.chars().count(),
            prompt_head: req.prompt.chars().take(60).collect(),
            response: response.to_string(),
        };
        let mut line = serde_json::to_vec(&rec).map_err(|e| LlmError::Cache(e.to_string()))?;
        line.push(b'\n');
        inner
            .file
            .write_all(&line)
            .and_then(|_| inner.file.flush())
            .map_err(|e| io_err(&self.path, e))?;
        inner.entries.insert(key.to_string(), response.to_string());
        Ok(())
    }
}
