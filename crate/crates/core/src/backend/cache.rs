//! Append-only response cache.
//!
//! On disk the cache is UTF-8 JSON Lines, one record per scored request:
//!
//! ```text
//! {"key":"<64 hex sha256>","request":"<model>|<question>|<candidates>","logprobs":[-0.1,-2.3],"timestamp":1760000000}
//! ```
//!
//! `key` is [`ScoreRequest::cache_key`]. `logprobs` are written with
//! shortest round-trip formatting, so a reload yields bit-identical values.
//! `timestamp` is Unix seconds at insertion. Later records with the same key
//! override earlier ones on load.

use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex, RwLock};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use super::{BackendError, ScoreRequest, ScoreResult, Scorer};

#[derive(Debug, Serialize, Deserialize)]
struct Record {
    key: String,
    request: String,
    logprobs: Vec<f64>,
    timestamp: u64,
}

#[derive(Debug)]
pub struct ResponseCache {
    path: Option<PathBuf>,
    entries: RwLock<HashMap<String, Vec<f64>>>,
    writer: Mutex<Option<File>>,
}

impl ResponseCache {
    pub fn in_memory() -> Self {
        Self {
            path: None,
            entries: RwLock::new(HashMap::new()),
            writer: Mutex::new(None),
        }
    }

    /// Opens (creating if needed) a cache file and loads its records.
    pub fn open(path: &Path) -> Result<Self, BackendError> {
        let err = |e: std::io::Error| BackendError::Cache(format!("{}: {e}", path.display()));
        let mut entries = HashMap::new();
        if path.exists() {
            let reader = BufReader::new(File::open(path).map_err(err)?);
            for (i, line) in reader.lines().enumerate() {
                let line = line.map_err(err)?;
                if line.trim().is_empty() {
                    continue;
                }
                let record: Record = serde_json::from_str(&line).map_err(|e| {
                    BackendError::Cache(format!("{}:{}: {e}", path.display(), i + 1))
                })?;
                entries.insert(record.key, record.logprobs);
            }
        }
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir).map_err(err)?;
        }
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(err)?;
        Ok(Self {
            path: Some(path.to_path_buf()),
            entries: RwLock::new(entries),
            writer: Mutex::new(Some(file)),
        })
    }

    pub fn path(&self) -> Option<&Path> {
        self.path.as_deref()
    }

    pub fn len(&self) -> usize {
        self.entries.read().expect("cache lock").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn get(&self, key: &str) -> Option<Vec<f64>> {
        self.entries.read().expect("cache lock").get(key).cloned()
    }

    /// Records a result in memory and appends it to the file.
    pub fn put(&self, req: &ScoreRequest, key: String, logprobs: &[f64]) -> Result<(), BackendError> {
        let mut writer = self.writer.lock().expect("cache writer lock");
        if let Some(file) = writer.as_mut() {
            let record = Record {
                key: key.clone(),
                request: req.digest(),
                logprobs: logprobs.to_vec(),
                timestamp: SystemTime::now()
                    .duration_since(UNIX_EPOCH)
                    .map_or(0, |d| d.as_secs()),
            };
            let mut line = serde_json::to_string(&record).map_err(|e| BackendError::Cache(e.to_string()))?;
            line.push('\n');
            file.write_all(line.as_bytes())
                .and_then(|_| file.flush())
                .map_err(|e| BackendError::Cache(e.to_string()))?;
        }
        self.entries
            .write()
            .expect("cache lock")
            .insert(key, logprobs.to_vec());
        Ok(())
    }
}

/// Serves repeated requests from a [`ResponseCache`], counting the calls that
/// reach the wrapped scorer.
pub struct CachedScorer<S> {
    inner: S,
    cache: Arc<ResponseCache>,
    misses: AtomicUsize,
}

impl<S: Scorer> CachedScorer<S> {
    pub fn new(inner: S, cache: Arc<ResponseCache>) -> Self {
        Self {
            inner,
            cache,
            misses: AtomicUsize::new(0),
        }
    }

    /// Number of requests forwarded to the inner backend.
    pub fn backend_calls(&self) -> usize {
        self.misses.load(Ordering::SeqCst)
    }

    pub fn cache(&self) -> &ResponseCache {
        &self.cache
    }

    pub fn inner(&self) -> &S {
        &self.inner
    }
}

impl<S: Scorer> Scorer for CachedScorer<S> {
    fn backend_id(&self) -> String {
        self.inner.backend_id()
    }

    fn score(&self, req: &ScoreRequest) -> Result<ScoreResult, BackendError> {
        req.validate()?;
        let key = req.cache_key();
        if let Some(logprobs) = self.cache.get(&key) {
            return Ok(ScoreResult {
                logprobs,
                backend_id: self.inner.backend_id(),
                cached: true,
            });
        }
        self.misses.fetch_add(1, Ordering::SeqCst);
        let mut res = self.inner.score(req)?;
        res.validate(req)?;
        self.cache.put(req, key, &res.logprobs)?;
        res.cached = false;
        Ok(res)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::mock::{MeanRule, MockScorer, MockWorld};
    use crate::backend::tests::request;
    use proptest::prelude::*;

    fn mock() -> MockScorer {
        MockScorer::new(MockWorld::new(1.3, MeanRule::Midpoint).unwrap())
    }

    #[test]
    fn second_request_is_cached() {
        let scorer = CachedScorer::new(mock(), Arc::new(ResponseCache::in_memory()));
        let a = scorer.score(&request("sys")).unwrap();
        let b = scorer.score(&request("sys")).unwrap();
        assert!(!a.cached);
        assert!(b.cached);
        assert_eq!(a.logprobs, b.logprobs);
        assert_eq!(scorer.backend_calls(), 1);
        assert_eq!(scorer.inner().calls(), 1);
    }

    #[test]
    fn file_cache_survives_reopen() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("nested/cache.jsonl");
        let fresh = {
            let scorer = CachedScorer::new(mock(), Arc::new(ResponseCache::open(&path).unwrap()));
            scorer.score(&request("one")).unwrap();
            scorer.score(&request("two")).unwrap()
        };
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text.lines().count(), 2);
        assert!(text.lines().all(|l| l.starts_with("{\"key\":\"")));

        let scorer = CachedScorer::new(mock(), Arc::new(ResponseCache::open(&path).unwrap()));
        let replay = scorer.score(&request("two")).unwrap();
        assert!(replay.cached);
        assert_eq!(scorer.backend_calls(), 0);
        let bits = |v: &[f64]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&replay.logprobs), bits(&fresh.logprobs));
    }

    #[test]
    fn corrupt_record_reports_line() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.jsonl");
        std::fs::write(&path, "{\"key\":\"a\",\"request\":\"r\",\"logprobs\":[0.0],\"timestamp\":1}\nnot json\n").unwrap();
        let err = ResponseCache::open(&path).unwrap_err().to_string();
        assert!(err.contains(":2:"), "{err}");
    }

    struct Fixed(Vec<f64>);

    impl Scorer for Fixed {
        fn backend_id(&self) -> String {
            "fixed".into()
        }

        fn score(&self, _req: &ScoreRequest) -> Result<ScoreResult, BackendError> {
            Ok(ScoreResult {
                logprobs: self.0.clone(),
                backend_id: "fixed".into(),
                cached: false,
            })
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn reloaded_values_are_bit_identical(lp in proptest::collection::vec(-1e3f64..0.0, 4)) {
            let dir = tempfile::tempdir().unwrap();
            let path = dir.path().join("c.jsonl");
            let fresh = CachedScorer::new(Fixed(lp.clone()), Arc::new(ResponseCache::open(&path).unwrap()))
                .score(&request("p")).unwrap();
            let cached = CachedScorer::new(Fixed(vec![]), Arc::new(ResponseCache::open(&path).unwrap()))
                .score(&request("p")).unwrap();
            prop_assert!(cached.cached);
            for (a, b) in fresh.logprobs.iter().zip(&cached.logprobs) {
                prop_assert_eq!(a.to_bits(), b.to_bits());
            }
        }
    }
}
