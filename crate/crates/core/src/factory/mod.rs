//! Practices → profiles, scenarios, Bloom-enriched MCQs and dialogues.

pub mod items;
pub mod profiles;
pub mod run;
pub mod validate;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::gateway::GatewayError;

pub use items::{build_base_mcq, enrich_bloom, generate_dialogue, generate_scenario, RetryCap};
pub use profiles::{generate_profile, ProfilePools};
pub use run::{run_generation, GenerationConfig, GenerationOutput};
pub use validate::{validate_dialogue, validate_enriched, validate_scenario, DedupStore, ValidationRuleSet, Violation};

#[derive(Debug, Error)]
pub enum FactoryError {
    #[error("configuration: {0}")]
    Config(String),
    #[error("practice pool too small for `{scenario}`: need {needed} distractors, have {available}")]
    PoolTooSmall {
        scenario: String,
        needed: usize,
        available: usize,
    },
    #[error("unknown practice `{0}`")]
    UnknownPractice(String),
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error("generation aborted: {failures} failures out of {attempted} units exceeds the {threshold} limit")]
    Aborted {
        failures: usize,
        attempted: usize,
        threshold: f64,
        ledger: Vec<FailureRecord>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Scenario,
    Enrichment,
    Dialogue,
}

/// One unit of work that exhausted its regeneration cap.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FailureRecord {
    pub slot: usize,
    pub practice_id: String,
    pub stage: Stage,
    pub attempts: u32,
    /// Violations from the final attempt.
    pub violations: Vec<String>,
}

/// Independent RNG stream for `(seed, label, index)`.
pub fn derive_rng(seed: u64, label: &str, index: u64) -> ChaCha8Rng {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(label.as_bytes());
    h.update(index.to_le_bytes());
    ChaCha8Rng::from_seed(h.finalize().into())
}
