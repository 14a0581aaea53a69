//! Guideline text → structured, deduplicated practices.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::text::normalize_field;
use crate::corpus::{Domain, Practice};
use crate::gateway::{Gateway, GatewayError};
use crate::prompts;

/// Attempts at a parseable structure reply before giving up on a chunk.
pub const STRUCTURE_ATTEMPTS: u32 = 3;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParagraphChunk {
    pub index: usize,
    pub text: String,
}

#[derive(Debug, Error)]
pub enum ExtractError {
    #[error("{stage} failed on chunk {chunk}: {source}")]
    Gateway {
        stage: &'static str,
        chunk: usize,
        #[source]
        source: GatewayError,
    },
    #[error("{stage}: unparseable reply for chunk {chunk}: {reply:?}")]
    Unparseable {
        stage: &'static str,
        chunk: usize,
        reply: String,
    },
    #[error("review list line {line}: {message}")]
    Review { line: usize, message: String },
}

/// Splits on blank lines; runs of blank lines count as one boundary.
pub fn split_paragraphs(raw: &str) -> Vec<ParagraphChunk> {
    let mut chunks = Vec::new();
    let mut current: Vec<&str> = Vec::new();
    let flush = |current: &mut Vec<&str>, chunks: &mut Vec<ParagraphChunk>| {
        let text = current.join("\n").trim().to_string();
        if !text.is_empty() {
            chunks.push(ParagraphChunk {
                index: chunks.len(),
                text,
            });
        }
        current.clear();
    };
    for line in raw.lines() {
        if line.trim().is_empty() {
            flush(&mut current, &mut chunks);
        } else {
            current.push(line);
        }
    }
    flush(&mut current, &mut chunks);
    chunks
}

pub fn filter_actionable(chunk: &ParagraphChunk, gateway: &Gateway) -> Result<bool, ExtractError> {
    let reply = gateway
        .complete(&prompts::filter_request(&chunk.text))
        .map_err(|source| ExtractError::Gateway {
            stage: "filter",
            chunk: chunk.index,
            source,
        })?;
    Ok(!prompts::is_skip(&reply.text))
}

/// Structures one chunk. The id is a placeholder until the caller assigns one.
pub fn structure_practice(
    chunk: &ParagraphChunk,
    domain: &Domain,
    id: &str,
    gateway: &Gateway,
) -> Result<Practice, ExtractError> {
    let mut last = String::new();
    for attempt in 0..STRUCTURE_ATTEMPTS {
        let reply = gateway
            .complete(&prompts::structure_request(&chunk.text, attempt))
            .map_err(|source| ExtractError::Gateway {
                stage: "structure",
                chunk: chunk.index,
                source,
            })?;
        if let Some([goal, context, action, timing, person]) = prompts::parse_structure(&reply.text) {
            return Ok(Practice {
                id: id.to_string(),
                domain: domain.clone(),
                goal,
                context,
                action,
                timing,
                person,
                full_description: chunk.text.clone(),
                summary: None,
            });
        }
        last = reply.text;
    }
    Err(ExtractError::Unparseable {
        stage: "structure",
        chunk: chunk.index,
        reply: last,
    })
}

fn suffix(i: usize) -> String {
    // a, b, ..., z, aa, ab, ...
    let mut n = i;
    let mut s = Vec::new();
    loop {
        s.push((b'a' + (n % 26) as u8) as char);
        if n < 26 {
            break;
        }
        n = n / 26 - 1;
    }
    s.iter().rev().collect()
}

/// Replaces a bundled practice by its parts; an atomic practice comes back
/// unchanged. Children get the parent id with a letter suffix.
pub fn split_multi(practice: &Practice, chunk_index: usize, gateway: &Gateway) -> Result<Vec<Practice>, ExtractError> {
    let reply = gateway
        .complete(&prompts::multiplicity_request(practice))
        .map_err(|source| ExtractError::Gateway {
            stage: "split",
            chunk: chunk_index,
            source,
        })?;
    let parts = prompts::parse_multiplicity(&reply.text).ok_or_else(|| ExtractError::Unparseable {
        stage: "split",
        chunk: chunk_index,
        reply: reply.text.clone(),
    })?;
    if parts.len() <= 1 {
        return Ok(vec![practice.clone()]);
    }
    parts
        .iter()
        .enumerate()
        .map(|(i, text)| {
            let chunk = ParagraphChunk {
                index: chunk_index,
                text: text.clone(),
            };
            structure_practice(&chunk, &practice.domain, &format!("{}{}", practice.id, suffix(i)), gateway)
        })
        .collect()
}

/// Non-empty 5W fields, 0..=5.
pub fn clarity_score(p: &Practice) -> u8 {
    p.five_w().iter().filter(|f| !f.trim().is_empty()).count() as u8
}

/// 5W fields with equal normalised text. Fields empty on either side are
/// not counted as shared.
pub fn shared_fields(a: &Practice, b: &Practice) -> u8 {
    a.five_w()
        .iter()
        .zip(b.five_w())
        .filter(|(x, y)| {
            let (x, y) = (normalize_field(x), normalize_field(y));
            !x.is_empty() && x == y
        })
        .count() as u8
}

/// Highest overlap with any practice in `others`.
pub fn similarity_score(p: &Practice, others: &[Practice]) -> u8 {
    others.iter().map(|o| shared_fields(p, o)).max().unwrap_or(0)
}

pub fn keep_decision(clarity: u8, similarity: u8) -> bool {
    clarity >= 4 && similarity <= 2
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Allow,
    Deny,
}

/// Manual review outcome per practice id.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReviewList {
    pub verdicts: BTreeMap<String, Verdict>,
}

impl ReviewList {
    /// One `<practice id> <allow|deny>` pair per line; `#` starts a comment.
    pub fn parse(source: &str) -> Result<Self, ExtractError> {
        let mut verdicts = BTreeMap::new();
        for (i, raw) in source.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let mut parts = line.split_whitespace();
            let (Some(id), Some(v), None) = (parts.next(), parts.next(), parts.next()) else {
                return Err(ExtractError::Review {
                    line: i + 1,
                    message: format!("expected `<id> <allow|deny>`, got {line:?}"),
                });
            };
            let verdict = match v.to_ascii_lowercase().as_str() {
                "allow" => Verdict::Allow,
                "deny" => Verdict::Deny,
                other => {
                    return Err(ExtractError::Review {
                        line: i + 1,
                        message: format!("unknown verdict {other:?}"),
                    })
                }
            };
            verdicts.insert(id.to_string(), verdict);
        }
        Ok(Self { verdicts })
    }

    pub fn denies(&self, id: &str) -> bool {
        self.verdicts.get(id) == Some(&Verdict::Deny)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExtractConfig {
    pub domain: Domain,
    /// Emitted ids are `<prefix>_<nn>` in document order.
    pub id_prefix: String,
    pub summarize: bool,
    #[serde(default)]
    pub review: ReviewList,
}

impl ExtractConfig {
    pub fn new(domain: Domain, id_prefix: impl Into<String>) -> Self {
        Self {
            domain,
            id_prefix: id_prefix.into(),
            summarize: true,
            review: ReviewList::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dropped {
    pub full_description: String,
    pub chunk: usize,
    pub clarity: u8,
    pub similarity: u8,
    pub reason: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Extraction {
    pub practices: Vec<Practice>,
    /// Normalised goal → ids sharing it.
    pub goal_groups: BTreeMap<String, Vec<String>>,
    pub skipped_chunks: Vec<usize>,
    pub dropped: Vec<Dropped>,
    pub denied: Vec<String>,
}

pub fn extract_practices(raw: &str, gateway: &Gateway, config: &ExtractConfig) -> Result<Extraction, ExtractError> {
    let chunks = split_paragraphs(raw);
    let mut out = Extraction::default();

    // structuring is independent per chunk; results are reassembled in order
    let structured: Vec<Result<Option<Vec<Practice>>, ExtractError>> = std::thread::scope(|scope| {
        let handles: Vec<_> = chunks
            .iter()
            .map(|chunk| {
                scope.spawn(move || -> Result<Option<Vec<Practice>>, ExtractError> {
                    if !filter_actionable(chunk, gateway)? {
                        return Ok(None);
                    }
                    let placeholder = format!("chunk{}", chunk.index);
                    let p = structure_practice(chunk, &config.domain, &placeholder, gateway)?;
                    split_multi(&p, chunk.index, gateway).map(Some)
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("extraction worker panicked")).collect()
    });

    let mut candidates: Vec<(usize, Practice)> = Vec::new();
    for (chunk, result) in chunks.iter().zip(structured) {
        match result? {
            None => out.skipped_chunks.push(chunk.index),
            Some(ps) => candidates.extend(ps.into_iter().map(|p| (chunk.index, p))),
        }
    }

    let mut kept: Vec<Practice> = Vec::new();
    for (chunk, p) in candidates {
        let clarity = clarity_score(&p);
        let similarity = similarity_score(&p, &kept);
        if keep_decision(clarity, similarity) {
            kept.push(p);
        } else {
            let reason = if clarity < 4 { "clarity" } else { "redundant" };
            out.dropped.push(Dropped {
                full_description: p.full_description,
                chunk,
                clarity,
                similarity,
                reason: reason.into(),
            });
        }
    }

    for (i, mut p) in kept.into_iter().enumerate() {
        p.id = format!("{}_{:02}", config.id_prefix, i + 1);
        if config.review.denies(&p.id) {
            out.denied.push(p.id);
            continue;
        }
        out.practices.push(p);
    }

    if config.summarize {
        let summaries: Vec<Result<String, ExtractError>> = std::thread::scope(|scope| {
            let handles: Vec<_> = out
                .practices
                .iter()
                .map(|p| {
                    scope.spawn(move || {
                        gateway
                            .complete(&prompts::summary_request(p))
                            .map(|r| r.text.trim().to_string())
                            .map_err(|source| ExtractError::Gateway {
                                stage: "summary",
                                chunk: 0,
                                source,
                            })
                    })
                })
                .collect();
            handles.into_iter().map(|h| h.join().expect("summary worker panicked")).collect()
        });
        for (p, s) in out.practices.iter_mut().zip(summaries) {
            p.summary = Some(s?);
        }
    }

    for p in &out.practices {
        out.goal_groups.entry(normalize_field(&p.goal)).or_default().push(p.id.clone());
    }
    Ok(out)
}
