use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::{Mutex, RwLock};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{CompletionRequest, LlmError};

/// One line of the replay cache file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CacheRecord {
    pub key: String,
    pub model_id: String,
    pub temperature: f64,
    pub prompt: String,
    pub reply: String,
    /// Seconds since the Unix epoch at recording time.
    pub timestamp: u64,
}

/// SHA-256 (hex) over the length-prefixed model id, the temperature with two
/// decimals, and the prompt bytes.
pub fn cache_key(req: &CompletionRequest) -> String {
    let mut hasher = Sha256::new();
    hasher.update((req.model_id.len() as u64).to_le_bytes());
    hasher.update(req.model_id.as_bytes());
    let temperature = format!("{:.2}", req.temperature);
    hasher.update((temperature.len() as u64).to_le_bytes());
    hasher.update(temperature.as_bytes());
    hasher.update(req.prompt.as_bytes());
    hex::encode(hasher.finalize())
}

/// Append-only JSON-lines store of recorded replies. Reads are concurrent;
/// appends are serialized. The first record for a key wins.
#[derive(Debug)]
pub struct ReplayCache {
    path: PathBuf,
    entries: RwLock<HashMap<String, String>>,
    writer: Mutex<Option<File>>,
}

impl ReplayCache {
    /// Loads `path` if it exists. The file is only created on first insert.
    pub fn open(path: impl AsRef<Path>) -> Result<Self, LlmError> {
        let path = path.as_ref().to_path_buf();
        let mut entries = HashMap::new();
        match File::open(&path) {
            Ok(file) => {
                for (lineno, line) in BufReader::new(file).lines().enumerate() {
                    let line = line.map_err(|e| LlmError::Cache(e.to_string()))?;
                    if line.trim().is_empty() {
                        continue;
                    }
                    let record: CacheRecord = serde_json::from_str(&line).map_err(|e| {
                        LlmError::Cache(format!("{}:{}: {e}", path.display(), lineno + 1))
                    })?;
                    entries.entry(record.key).or_insert(record.reply);
                }
            }
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => {}
            Err(e) => return Err(LlmError::Cache(format!("{}: {e}", path.display()))),
        }
        Ok(ReplayCache {
            path,
            entries: RwLock::new(entries),
            writer: Mutex::new(None),
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn len(&self) -> usize {
        self.entries.read().unwrap().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn get(&self, key: &str) -> Option<String> {
        self.entries.read().unwrap().get(key).cloned()
    }

    /// Records `reply` for `req` and returns the reply now stored for its key,
    /// which is the earlier one if another caller got there first.
    pub fn insert(&self, req: &CompletionRequest, reply: String) -> Result<String, LlmError> {
        let key = cache_key(req);
        let mut writer = self.writer.lock().unwrap();
        if let Some(existing) = self.get(&key) {
            return Ok(existing);
        }
        if writer.is_none() {
            if let Some(parent) = self.path.parent().filter(|p| !p.as_os_str().is_empty()) {
                std::fs::create_dir_all(parent).map_err(|e| LlmError::Cache(e.to_string()))?;
            }
            let file = OpenOptions::new()
                .create(true)
                .append(true)
                .open(&self.path)
                .map_err(|e| LlmError::Cache(format!("{}: {e}", self.path.display())))?;
            *writer = Some(file);
        }
        let record = CacheRecord {
            key: key.clone(),
            model_id: req.model_id.clone(),
            temperature: req.temperature,
            prompt: req.prompt.clone(),
            reply: reply.clone(),
            timestamp: SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0),
        };
        let mut line = serde_json::to_string(&record).map_err(|e| LlmError::Cache(e.to_string()))?;
        line.push('\n');
        let file = writer.as_mut().expect("writer opened above");
        file.write_all(line.as_bytes())
            .and_then(|_| file.flush())
            .map_err(|e| LlmError::Cache(e.to_string()))?;
        self.entries.write().unwrap().insert(key, reply.clone());
        Ok(reply)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn req(prompt: &str, t: f64) -> CompletionRequest {
        CompletionRequest::new(prompt, t, "model-x")
    }

    #[test]
    fn key_properties() {
        assert_eq!(cache_key(&req("abc", 0.0)), cache_key(&req("abc", 0.0)));
        assert_ne!(cache_key(&req("abc", 0.0)), cache_key(&req("abd", 0.0)));
        assert_ne!(cache_key(&req("abc", 0.0)), cache_key(&req("abc", 0.25)));
        // two-decimal rendering absorbs float noise
        assert_eq!(cache_key(&req("abc", 0.25)), cache_key(&req("abc", 0.250000001)));
        let mut other = req("abc", 0.0);
        other.model_id = "model-y".into();
        assert_ne!(cache_key(&req("abc", 0.0)), cache_key(&other));
        assert_eq!(cache_key(&req("", 0.0)).len(), 64);
    }

    #[test]
    fn records_persist_and_reload() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("sub/cache.jsonl");
        let cache = ReplayCache::open(&path).unwrap();
        assert!(cache.is_empty());
        let r = req("prompt one", 0.5);
        assert_eq!(cache.insert(&r, "reply A".into()).unwrap(), "reply A");
        assert_eq!(cache.insert(&r, "reply B".into()).unwrap(), "reply A");
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text.lines().count(), 1);
        let record: CacheRecord = serde_json::from_str(text.lines().next().unwrap()).unwrap();
        assert_eq!(record.key, cache_key(&r));
        assert_eq!(record.prompt, "prompt one");
        assert_eq!(record.temperature, 0.5);

        let reloaded = ReplayCache::open(&path).unwrap();
        assert_eq!(reloaded.get(&cache_key(&r)).as_deref(), Some("reply A"));
    }

    #[test]
    fn malformed_line_is_reported() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.jsonl");
        std::fs::write(&path, "{not json}\n").unwrap();
        assert!(matches!(ReplayCache::open(&path), Err(LlmError::Cache(_))));
    }
}
