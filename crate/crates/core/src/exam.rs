//! Balanced exam sampling, administration and answer parsing.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::sync::Mutex;

use rand::seq::IndexedRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::io::to_line;
use crate::corpus::{Bloom, McqItem, TrialRecord};
use crate::gateway::{Gateway, GatewayError};
use crate::prompts;

#[derive(Debug, Error)]
pub enum ExamError {
    #[error("only {available} scenarios have all four Bloom variants; {requested} requested")]
    InsufficientCorpus { requested: usize, available: usize },
    #[error("plan references unknown item `{0}`")]
    UnknownItem(String),
    #[error("duplicate model id `{0}` in roster")]
    DuplicateModel(String),
    /// Replay has no recorded answer; unlike transport failures this is
    /// never turned into a null trial.
    #[error(transparent)]
    Fixture(GatewayError),
    #[error("checkpoint {path}: {message}")]
    Checkpoint { path: String, message: String },
}

/// Sampled scenarios; each contributes all four Bloom variants.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExamPlan {
    pub scenario_ids: Vec<String>,
    /// MCQ ids in administration order (sorted).
    pub item_ids: Vec<String>,
}

impl ExamPlan {
    pub fn len(&self) -> usize {
        self.item_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.item_ids.is_empty()
    }
}

/// Samples `n_scenarios` scenarios without replacement among those that
/// have every Bloom level.
pub fn sample_exam<R: Rng + ?Sized>(mcqs: &[McqItem], n_scenarios: usize, rng: &mut R) -> Result<ExamPlan, ExamError> {
    let mut by_scenario: BTreeMap<&str, BTreeMap<Bloom, &str>> = BTreeMap::new();
    for m in mcqs {
        by_scenario.entry(&m.scenario_id).or_default().insert(m.bloom, &m.id);
    }
    let eligible: Vec<&str> = by_scenario
        .iter()
        .filter(|(_, levels)| levels.len() == Bloom::ALL.len())
        .map(|(s, _)| *s)
        .collect();
    if eligible.len() < n_scenarios {
        return Err(ExamError::InsufficientCorpus {
            requested: n_scenarios,
            available: eligible.len(),
        });
    }
    let mut scenario_ids: Vec<String> = eligible.choose_multiple(rng, n_scenarios).map(|s| s.to_string()).collect();
    scenario_ids.sort();
    let mut item_ids: Vec<String> = scenario_ids
        .iter()
        .flat_map(|s| by_scenario[s.as_str()].values().map(|id| id.to_string()))
        .collect();
    item_ids.sort();
    Ok(ExamPlan { scenario_ids, item_ids })
}

fn valid_letter(c: char, n_options: usize) -> bool {
    c.is_ascii_uppercase() && ((c as u8 - b'A') as usize) < n_options
}

/// A lone letter (optionally punctuated) wins; otherwise the first
/// standalone uppercase letter token in range.
pub fn parse_answer(raw: &str, n_options: usize) -> Option<char> {
    let trimmed = raw.trim().trim_matches(|c: char| c.is_ascii_punctuation() || c.is_whitespace());
    let mut chars = trimmed.chars();
    if let (Some(c), None) = (chars.next(), chars.next()) {
        let c = c.to_ascii_uppercase();
        return valid_letter(c, n_options).then_some(c);
    }
    raw.split(|c: char| !c.is_alphanumeric())
        .filter_map(|tok| {
            let mut cs = tok.chars();
            match (cs.next(), cs.next()) {
                (Some(c), None) if valid_letter(c, n_options) => Some(c),
                _ => None,
            }
        })
        .next()
}

fn load_checkpoint(path: &Path) -> Result<Vec<TrialRecord>, ExamError> {
    if !path.exists() {
        return Ok(Vec::new());
    }
    let err = |message: String| ExamError::Checkpoint {
        path: path.display().to_string(),
        message,
    };
    let file = File::open(path).map_err(|e| err(e.to_string()))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| err(e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        // a torn final line from an interrupted run is dropped
        match serde_json::from_str::<TrialRecord>(&line) {
            Ok(t) => out.push(t),
            Err(e) => log::warn!("checkpoint line {} ignored: {e}", i + 1),
        }
    }
    Ok(out)
}

fn administer_one(model_id: &str, item: &McqItem, gateway: &Gateway) -> Result<TrialRecord, ExamError> {
    let n = item.options.len();
    let correct_practice = item.correct_practice().unwrap_or_default().to_string();
    let (chosen_label, raw_response, error) = match gateway.complete(&prompts::evaluation_request(item)) {
        Ok(r) => (parse_answer(&r.text, n), r.text, None),
        Err(e @ GatewayError::FixtureMissing { .. }) => return Err(ExamError::Fixture(e)),
        Err(e) => (None, String::new(), Some(e.to_string())),
    };
    Ok(TrialRecord {
        model_id: model_id.to_string(),
        mcq_id: item.id.clone(),
        scenario_id: item.scenario_id.clone(),
        practice_id: correct_practice,
        bloom: item.bloom,
        domain: item.domain.clone(),
        correct: chosen_label == Some(item.correct_label),
        chosen_label,
        correct_label: item.correct_label,
        raw_response,
        error,
    })
}

/// Administers every plan item to every roster model. Models run
/// concurrently; output is sorted by `(model_id, mcq_id)`. With a
/// checkpoint path, completed pairs are appended as they finish and
/// skipped on the next run.
pub fn administer(
    plan: &ExamPlan,
    mcqs: &[McqItem],
    roster: &[(String, Gateway)],
    checkpoint: Option<&Path>,
) -> Result<Vec<TrialRecord>, ExamError> {
    let by_id: BTreeMap<&str, &McqItem> = mcqs.iter().map(|m| (m.id.as_str(), m)).collect();
    let items: Vec<&McqItem> = plan
        .item_ids
        .iter()
        .map(|id| by_id.get(id.as_str()).copied().ok_or_else(|| ExamError::UnknownItem(id.clone())))
        .collect::<Result<_, _>>()?;
    let mut seen = BTreeSet::new();
    for (m, _) in roster {
        if !seen.insert(m.as_str()) {
            return Err(ExamError::DuplicateModel(m.clone()));
        }
    }

    let wanted: BTreeSet<(&str, &str)> = roster
        .iter()
        .flat_map(|(m, _)| plan.item_ids.iter().map(move |i| (m.as_str(), i.as_str())))
        .collect();
    let mut done: BTreeMap<(String, String), TrialRecord> = BTreeMap::new();
    if let Some(path) = checkpoint {
        for t in load_checkpoint(path)? {
            if wanted.contains(&(t.model_id.as_str(), t.mcq_id.as_str())) {
                done.insert((t.model_id.clone(), t.mcq_id.clone()), t);
            }
        }
    }
    let sink = match checkpoint {
        Some(path) => Some(Mutex::new(
            OpenOptions::new()
                .create(true)
                .append(true)
                .open(path)
                .map_err(|e| ExamError::Checkpoint {
                    path: path.display().to_string(),
                    message: e.to_string(),
                })?,
        )),
        None => None,
    };

    let fresh: Vec<Result<Vec<TrialRecord>, ExamError>> = std::thread::scope(|scope| {
        let handles: Vec<_> = roster
            .iter()
            .map(|(model_id, gateway)| {
                let (items, done, sink) = (&items, &done, &sink);
                scope.spawn(move || -> Result<Vec<TrialRecord>, ExamError> {
                    let mut out = Vec::new();
                    for item in items {
                        if done.contains_key(&(model_id.clone(), item.id.clone())) {
                            continue;
                        }
                        let t = administer_one(model_id, item, gateway)?;
                        if let Some(sink) = sink {
                            let mut f = sink.lock().expect("checkpoint");
                            if let Err(e) = writeln!(f, "{}", to_line(&t)).and_then(|_| f.flush()) {
                                log::warn!("checkpoint write failed: {e}");
                            }
                        }
                        out.push(t);
                    }
                    Ok(out)
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("exam worker panicked")).collect()
    });
    for batch in fresh {
        for t in batch? {
            done.insert((t.model_id.clone(), t.mcq_id.clone()), t);
        }
    }
    Ok(done.into_values().collect())
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ModelAudit {
    pub n_trials: usize,
    pub n_correct: usize,
    pub n_null: usize,
    pub n_errors: usize,
    pub per_bloom: BTreeMap<String, usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AuditReport {
    pub n_trials: usize,
    pub recorded_correct: usize,
    pub recomputed_correct: usize,
    /// Trials whose recorded outcome disagrees with the corpus.
    pub mismatches: Vec<String>,
    pub exposure_balanced: bool,
    pub bloom_balanced: bool,
    pub per_model: BTreeMap<String, ModelAudit>,
}

impl AuditReport {
    pub fn ok(&self) -> bool {
        self.mismatches.is_empty() && self.exposure_balanced && self.bloom_balanced
    }
}

/// Recomputes correctness against the corpus and checks exposure and
/// Bloom balance.
pub fn audit(trials: &[TrialRecord], mcqs: &[McqItem]) -> AuditReport {
    let by_id: BTreeMap<&str, &McqItem> = mcqs.iter().map(|m| (m.id.as_str(), m)).collect();
    let mut report = AuditReport {
        n_trials: trials.len(),
        ..Default::default()
    };
    let mut items_per_model: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
    for t in trials {
        let m = report.per_model.entry(t.model_id.clone()).or_default();
        m.n_trials += 1;
        m.n_correct += usize::from(t.correct);
        m.n_null += usize::from(t.chosen_label.is_none());
        m.n_errors += usize::from(t.error.is_some());
        *m.per_bloom.entry(t.bloom.as_str().to_string()).or_default() += 1;
        report.recorded_correct += usize::from(t.correct);
        items_per_model.entry(&t.model_id).or_default().push(&t.mcq_id);
        match by_id.get(t.mcq_id.as_str()) {
            Some(item) => {
                let recomputed = t.chosen_label == Some(item.correct_label);
                report.recomputed_correct += usize::from(recomputed);
                if recomputed != t.correct || item.bloom != t.bloom {
                    report.mismatches.push(format!("{}/{}", t.model_id, t.mcq_id));
                }
            }
            None => report.mismatches.push(format!("{}/{} (unknown item)", t.model_id, t.mcq_id)),
        }
    }
    for ids in items_per_model.values_mut() {
        ids.sort_unstable();
    }
    let mut sets = items_per_model.values();
    report.exposure_balanced = match sets.next() {
        Some(first) => sets.all(|s| s == first),
        None => true,
    };
    report.bloom_balanced = report.per_model.values().all(|m| {
        let quarter = m.n_trials / 4;
        m.n_trials % 4 == 0 && Bloom::ALL.iter().all(|b| m.per_bloom.get(b.as_str()).copied().unwrap_or(0) == quarter)
    });
    report
}
