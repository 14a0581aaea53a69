//! Keyed request→response store, persisted one entry per line.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::Path;
use std::sync::RwLock;

use serde::{Deserialize, Serialize};

use super::{ChatRequest, GatewayError, RequestDigest, TaskTag};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixtureEntry {
    pub endpoint: String,
    pub digest: RequestDigest,
    pub task_tag: TaskTag,
    pub response: String,
}

/// Entries are namespaced by endpoint so identical prompts sent to
/// different models stay distinct.
#[derive(Debug, Default)]
pub struct FixtureStore {
    entries: RwLock<BTreeMap<(String, RequestDigest), FixtureEntry>>,
}

impl FixtureStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.entries.read().expect("fixture store").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn get(&self, endpoint: &str, digest: &RequestDigest) -> Option<String> {
        self.entries
            .read()
            .expect("fixture store")
            .get(&(endpoint.to_string(), digest.clone()))
            .map(|e| e.response.clone())
    }

    /// Re-inserting the same payload is a no-op; a different payload under
    /// an existing key is a collision.
    pub fn insert_entry(&self, entry: FixtureEntry) -> Result<(), GatewayError> {
        let mut map = self.entries.write().expect("fixture store");
        let key = (entry.endpoint.clone(), entry.digest.clone());
        match map.get(&key) {
            Some(existing) if existing.response != entry.response => Err(GatewayError::FixtureCollision {
                endpoint: entry.endpoint,
                digest: entry.digest,
            }),
            Some(_) => Ok(()),
            None => {
                map.insert(key, entry);
                Ok(())
            }
        }
    }

    pub fn insert(&self, endpoint: &str, request: &ChatRequest, response: &str) -> Result<(), GatewayError> {
        self.insert_entry(FixtureEntry {
            endpoint: endpoint.to_string(),
            digest: request.digest(),
            task_tag: request.task_tag,
            response: response.to_string(),
        })
    }

    /// Merges every entry of `other`, failing on the first collision.
    pub fn merge(&self, other: &FixtureStore) -> Result<(), GatewayError> {
        let entries: Vec<FixtureEntry> = other.entries.read().expect("fixture store").values().cloned().collect();
        for e in entries {
            self.insert_entry(e)?;
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, GatewayError> {
        let raw = fs::read_to_string(path).map_err(|source| GatewayError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let store = Self::new();
        for (i, line) in raw.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let entry: FixtureEntry = serde_json::from_str(line).map_err(|e| GatewayError::MalformedFixture {
                path: path.to_path_buf(),
                line: i + 1,
                message: e.to_string(),
            })?;
            store.insert_entry(entry)?;
        }
        Ok(store)
    }

    /// Writes entries sorted by (endpoint, digest).
    pub fn save(&self, path: &Path) -> Result<(), GatewayError> {
        let io_err = |source| GatewayError::Io {
            path: path.to_path_buf(),
            source,
        };
        if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            fs::create_dir_all(parent).map_err(io_err)?;
        }
        let mut buf = Vec::new();
        for entry in self.entries.read().expect("fixture store").values() {
            buf.extend_from_slice(serde_json::to_string(entry).expect("fixture entry").as_bytes());
            buf.push(b'\n');
        }
        fs::File::create(path).and_then(|mut f| f.write_all(&buf)).map_err(io_err)
    }
}

/// Persists captured `(endpoint, request, response)` triples.
pub fn record_fixtures<'a, I>(captured: I, path: &Path) -> Result<(), GatewayError>
where
    I: IntoIterator<Item = (&'a str, &'a ChatRequest, &'a str)>,
{
    let store = if path.exists() { FixtureStore::load(path)? } else { FixtureStore::new() };
    for (endpoint, request, response) in captured {
        store.insert(endpoint, request, response)?;
    }
    store.save(path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gateway::Gateway;
    use std::sync::Arc;

    fn req(user: &str) -> ChatRequest {
        ChatRequest::new(TaskTag::Evaluation, "sys", user)
    }

    #[test]
    fn record_then_replay_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("fx.jsonl");
        let r = req("question one");
        record_fixtures([("m1", &r, "C")], &path).unwrap();
        let gw = Gateway::replay("m1", Arc::new(FixtureStore::load(&path).unwrap()));
        let resp = gw.complete(&r).unwrap();
        assert_eq!(resp.text, "C");
        assert!(resp.fixture_hit);
    }

    #[test]
    fn altered_prompt_misses() {
        let store = FixtureStore::new();
        store.insert("m1", &req("question one"), "C").unwrap();
        let gw = Gateway::replay("m1", Arc::new(store));
        let missing = req("question one!");
        match gw.complete(&missing) {
            Err(GatewayError::FixtureMissing { digest, .. }) => assert_eq!(digest, missing.digest()),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn empty_store_misses() {
        let gw = Gateway::replay("m1", Arc::new(FixtureStore::new()));
        assert!(matches!(gw.complete(&req("x")), Err(GatewayError::FixtureMissing { .. })));
    }

    #[test]
    fn endpoints_are_separate_namespaces() {
        let store = FixtureStore::new();
        store.insert("m1", &req("q"), "A").unwrap();
        store.insert("m2", &req("q"), "B").unwrap();
        let store = Arc::new(store);
        assert_eq!(Gateway::replay("m2", store.clone()).complete(&req("q")).unwrap().text, "B");
        assert!(Gateway::replay("m3", store).complete(&req("q")).is_err());
    }

    #[test]
    fn collision_with_different_payload_is_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("fx.jsonl");
        let r = req("q");
        record_fixtures([("m1", &r, "A")], &path).unwrap();
        record_fixtures([("m1", &r, "A")], &path).unwrap();
        let err = record_fixtures([("m1", &r, "B")], &path).unwrap_err();
        assert!(matches!(err, GatewayError::FixtureCollision { .. }));
    }

    #[test]
    fn saved_file_is_byte_stable() {
        let dir = tempfile::tempdir().unwrap();
        let store = FixtureStore::new();
        for i in 0..5 {
            store.insert("m", &req(&format!("q{i}")), &format!("r{i}")).unwrap();
        }
        let (a, b) = (dir.path().join("a"), dir.path().join("b"));
        store.save(&a).unwrap();
        FixtureStore::load(&a).unwrap().save(&b).unwrap();
        assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
    }
}
