//! Line-delimited persistence: one canonical JSON object per line, UTF-8,
//! LF terminators.

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::OnceLock;

use serde::de::DeserializeOwned;
use serde::Serialize;
use thiserror::Error;

use super::text::{content_hash, word_count};
use super::{Dialogue, KeywordList, McqItem, Practice, Scenario, TrialRecord, DIALOGUE_TURN_WINDOW};

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: malformed record: {message}")]
    Malformed {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("record `{id}` violates invariant: {rule}")]
    Invariant { id: String, rule: String },
    #[error("duplicate {field} `{value}`")]
    Duplicate { field: &'static str, value: String },
}

/// A persisted corpus type.
pub trait Record: Serialize + DeserializeOwned {
    const KIND: &'static str;

    fn record_id(&self) -> String;

    /// Per-record invariant check.
    fn check(&self) -> Result<(), String>;

    /// Values that must be unique across a corpus, tagged by field name.
    fn unique_keys(&self) -> Vec<(&'static str, String)> {
        vec![("id", self.record_id())]
    }
}

fn default_keywords() -> &'static KeywordList {
    static LIST: OnceLock<KeywordList> = OnceLock::new();
    LIST.get_or_init(KeywordList::default_list)
}

impl Record for Practice {
    const KIND: &'static str = "practice";

    fn record_id(&self) -> String {
        self.id.clone()
    }

    fn check(&self) -> Result<(), String> {
        if self.id.trim().is_empty() {
            return Err("empty id".into());
        }
        Ok(())
    }
}

impl Record for Scenario {
    const KIND: &'static str = "scenario";

    fn record_id(&self) -> String {
        self.id.clone()
    }

    fn check(&self) -> Result<(), String> {
        self.profile.check()?;
        let (lo, hi) = self.domain().default_word_window();
        let words = word_count(&self.text);
        if words < lo || words > hi {
            return Err(format!("word count {words} outside {lo}..={hi}"));
        }
        if let Some(k) = default_keywords().matches(&self.text).first() {
            return Err(format!("blocked keyword `{k}`"));
        }
        if self.text.contains('?') {
            return Err("embedded question mark".into());
        }
        if self.content_hash != content_hash(&self.text) {
            return Err("content_hash does not match text".into());
        }
        Ok(())
    }

    fn unique_keys(&self) -> Vec<(&'static str, String)> {
        vec![("id", self.id.clone()), ("content_hash", self.content_hash.clone())]
    }
}

impl Record for McqItem {
    const KIND: &'static str = "mcq";

    fn record_id(&self) -> String {
        self.id.clone()
    }

    fn check(&self) -> Result<(), String> {
        let k = self.domain.option_count();
        if self.options.len() != k {
            return Err(format!("{} options, expected {k}", self.options.len()));
        }
        for (i, opt) in self.options.iter().enumerate() {
            if opt.label != super::label_for(i) {
                return Err(format!("option {i} labelled {} instead of {}", opt.label, super::label_for(i)));
            }
        }
        let mut ids: Vec<&str> = self.options.iter().map(|o| o.practice_id.as_str()).collect();
        ids.sort_unstable();
        ids.dedup();
        if ids.len() != self.options.len() {
            return Err("option practice ids are not distinct".into());
        }
        if self.correct_practice().is_none() {
            return Err(format!("correct label {} has no option", self.correct_label));
        }
        Ok(())
    }
}

impl Record for Dialogue {
    const KIND: &'static str = "dialogue";

    fn record_id(&self) -> String {
        self.id.clone()
    }

    fn check(&self) -> Result<(), String> {
        self.check_structure(DIALOGUE_TURN_WINDOW)
    }
}

impl Record for TrialRecord {
    const KIND: &'static str = "trial";

    fn record_id(&self) -> String {
        format!("{}/{}", self.model_id, self.mcq_id)
    }

    fn check(&self) -> Result<(), String> {
        TrialRecord::check(self)
    }
}

fn validate_all<T: Record>(items: &[T]) -> Result<(), CorpusError> {
    let mut seen: BTreeMap<&'static str, BTreeMap<String, ()>> = BTreeMap::new();
    for item in items {
        item.check().map_err(|rule| CorpusError::Invariant {
            id: item.record_id(),
            rule,
        })?;
        for (field, value) in item.unique_keys() {
            if seen.entry(field).or_default().insert(value.clone(), ()).is_some() {
                return Err(CorpusError::Duplicate { field, value });
            }
        }
    }
    Ok(())
}

/// Serialises one record to its canonical single-line form.
pub fn to_line<T: Serialize>(item: &T) -> String {
    serde_json::to_string(item).expect("corpus records always serialise")
}

/// Writes `items` one per line after checking every invariant.
pub fn save_corpus<T: Record>(items: &[T], path: &Path) -> Result<(), CorpusError> {
    validate_all(items)?;
    let io_err = |source| CorpusError::Io {
        path: path.to_path_buf(),
        source,
    };
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(io_err)?;
    }
    let mut buf = Vec::new();
    for item in items {
        buf.extend_from_slice(to_line(item).as_bytes());
        buf.push(b'\n');
    }
    let mut file = fs::File::create(path).map_err(io_err)?;
    file.write_all(&buf).map_err(io_err)?;
    Ok(())
}

/// Reads and checks every record. Blank lines are skipped.
pub fn load_corpus<T: Record>(path: &Path) -> Result<Vec<T>, CorpusError> {
    let io_err = |source| CorpusError::Io {
        path: path.to_path_buf(),
        source,
    };
    let file = fs::File::open(path).map_err(io_err)?;
    let mut items = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(io_err)?;
        if line.trim().is_empty() {
            continue;
        }
        let item: T = serde_json::from_str(&line).map_err(|e| CorpusError::Malformed {
            path: path.to_path_buf(),
            line: i + 1,
            message: e.to_string(),
        })?;
        items.push(item);
    }
    validate_all(&items)?;
    Ok(items)
}
