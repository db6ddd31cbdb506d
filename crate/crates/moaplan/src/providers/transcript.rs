//! Line-delimited request/response records and their content hashes.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Kind {
    Chat,
    Embed,
    Vlm,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TranscriptRecord {
    pub kind: Kind,
    pub request_hash: String,
    pub request: Value,
    pub response: Value,
    pub recorded_at_ms: u64,
}

#[derive(Debug, thiserror::Error)]
pub enum TranscriptError {
    #[error("reading transcript {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {message}")]
    Malformed { path: String, line: usize, message: String },
    #[error("{path}:{line}: request {hash} already recorded with a different response")]
    Collision { path: String, line: usize, hash: String },
}

/// JSON with object keys sorted at every level and no insignificant
/// whitespace, independent of how the value was built.
pub fn canonical_json(value: &Value) -> String {
    fn write(v: &Value, out: &mut String) {
        match v {
            Value::Object(map) => {
                let mut keys: Vec<&String> = map.keys().collect();
                keys.sort();
                out.push('{');
                for (i, k) in keys.into_iter().enumerate() {
                    if i > 0 {
                        out.push(',');
                    }
                    out.push_str(&Value::String(k.clone()).to_string());
                    out.push(':');
                    write(&map[k], out);
                }
                out.push('}');
            }
            Value::Array(items) => {
                out.push('[');
                for (i, item) in items.iter().enumerate() {
                    if i > 0 {
                        out.push(',');
                    }
                    write(item, out);
                }
                out.push(']');
            }
            scalar => out.push_str(&scalar.to_string()),
        }
    }
    let mut out = String::new();
    write(value, &mut out);
    out
}

/// Hex SHA-256 over the kind and the canonical request body.
pub fn request_hash(kind: Kind, request: &Value) -> String {
    let mut h = Sha256::new();
    h.update(canonical_json(&serde_json::to_value(kind).unwrap()).as_bytes());
    h.update(b"\n");
    h.update(canonical_json(request).as_bytes());
    hex::encode(h.finalize())
}

pub fn now_ms() -> u64 {
    std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_millis() as u64)
        .unwrap_or(0)
}

/// Responses by (kind, hash). Repeated identical records are allowed; a
/// repeated hash with a different response is a collision.
pub fn load_index(path: &Path) -> Result<HashMap<(Kind, String), Value>, TranscriptError> {
    let p = path.display().to_string();
    let file = File::open(path).map_err(|source| TranscriptError::Io {
        path: p.clone(),
        source,
    })?;
    let mut index = HashMap::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|source| TranscriptError::Io {
            path: p.clone(),
            source,
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: TranscriptRecord = serde_json::from_str(&line).map_err(|e| TranscriptError::Malformed {
            path: p.clone(),
            line: i + 1,
            message: e.to_string(),
        })?;
        let expected = request_hash(rec.kind, &rec.request);
        if rec.request_hash != expected {
            return Err(TranscriptError::Malformed {
                path: p.clone(),
                line: i + 1,
                message: format!("stored hash {} does not match request ({expected})", rec.request_hash),
            });
        }
        match index.get(&(rec.kind, rec.request_hash.clone())) {
            Some(existing) if *existing != rec.response => {
                return Err(TranscriptError::Collision {
                    path: p,
                    line: i + 1,
                    hash: rec.request_hash,
                })
            }
            Some(_) => {}
            None => {
                index.insert((rec.kind, rec.request_hash), rec.response);
            }
        }
    }
    Ok(index)
}
