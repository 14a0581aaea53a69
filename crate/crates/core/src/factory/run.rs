//! Corpus-scale generation: round-robin practice assignment, parallel
//! waves, order-stable assembly and a failure ledger.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::items::{build_base_mcq, dialogue_id, enrich_bloom, generate_dialogue, mcq_id, scenario_attempts, Outcome, RetryCap};
use super::profiles::{generate_profile, ProfilePools};
use super::validate::{ValidationRuleSet, Violation};
use super::{derive_rng, FactoryError, FailureRecord, Stage};
use crate::corpus::{Bloom, Dialogue, Domain, McqItem, Practice, Scenario, DIALOGUE_TURN_WINDOW};
use crate::gateway::Gateway;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationConfig {
    pub domain: Domain,
    pub n_scenarios: usize,
    pub seed: u64,
    pub regeneration_cap: u32,
    /// Abort once failed units exceed this share of attempted units
    /// (checked after `min_units_before_abort` units).
    pub max_failure_rate: f64,
    pub min_units_before_abort: usize,
    /// A practice whose scenarios fail this many times is retired.
    pub retire_after: usize,
    pub fixed_position: bool,
    pub dialogue_window: (usize, usize),
    pub workers: usize,
}

impl GenerationConfig {
    pub fn new(domain: Domain, n_scenarios: usize, seed: u64) -> Self {
        Self {
            domain,
            n_scenarios,
            seed,
            regeneration_cap: 5,
            max_failure_rate: 0.25,
            min_units_before_abort: 20,
            retire_after: 3,
            fixed_position: false,
            dialogue_window: DIALOGUE_TURN_WINDOW,
            workers: 4,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct GenerationOutput {
    pub scenarios: Vec<Scenario>,
    pub mcqs: Vec<McqItem>,
    pub dialogues: Vec<Dialogue>,
    pub ledger: Vec<FailureRecord>,
    /// Practices that stopped receiving scenarios after repeated failures.
    pub retired: Vec<String>,
}

struct Unit {
    scenario: Scenario,
    mcqs: Vec<McqItem>,
    dialogue: Dialogue,
}

fn scenario_id(domain: &Domain, n: usize, width: usize) -> String {
    let letter = domain.as_str().chars().next().unwrap_or('x');
    format!("{letter}{n:0width$}")
}

fn run_unit(
    slot: usize,
    practice: &Practice,
    lookup: &BTreeMap<String, Practice>,
    pool: &[Practice],
    pools: &ProfilePools,
    gateway: &Gateway,
    rules: &ValidationRuleSet,
    config: &GenerationConfig,
) -> Result<Result<Unit, FailureRecord>, FactoryError> {
    let cap = RetryCap(config.regeneration_cap);
    let provisional = format!("slot{slot}");
    let profile = generate_profile(pools, &mut derive_rng(config.seed, "profile", slot as u64))?;
    let scenario = match scenario_attempts(practice, &profile, &provisional, gateway, rules, 0, cap)? {
        Outcome::Done(s, _) => s,
        Outcome::Failed(f) => return Ok(Err(f)),
    };
    let base = build_base_mcq(
        &scenario,
        pool,
        &mut derive_rng(config.seed, "options", slot as u64),
        config.fixed_position,
    )?;
    let mut mcqs = Vec::with_capacity(4);
    for level in Bloom::ALL {
        match enrich_bloom(&base, level, lookup, gateway, cap)? {
            Ok(m) => mcqs.push(m),
            Err(f) => return Ok(Err(f)),
        }
    }
    let dialogue = match generate_dialogue(&scenario, practice, gateway, config.dialogue_window, cap)? {
        Ok(d) => d,
        Err(f) => return Ok(Err(f)),
    };
    Ok(Ok(Unit {
        scenario,
        mcqs,
        dialogue,
    }))
}

fn rename(unit: &mut Unit, id: &str) {
    unit.scenario.id = id.to_string();
    for m in &mut unit.mcqs {
        m.scenario_id = id.to_string();
        m.id = mcq_id(id, m.bloom);
    }
    unit.dialogue.scenario_id = id.to_string();
    unit.dialogue.id = dialogue_id(id);
}

/// Produces exactly `n_scenarios` validated scenarios, each with four Bloom
/// MCQs and one dialogue. Practices are assigned round-robin in input order.
pub fn run_generation(
    practices: &[Practice],
    config: &GenerationConfig,
    gateway: &Gateway,
    rules: &ValidationRuleSet,
) -> Result<GenerationOutput, FactoryError> {
    let mut out = GenerationOutput::default();
    if config.n_scenarios == 0 {
        return Ok(out);
    }
    let pool: Vec<Practice> = practices.iter().filter(|p| p.domain == config.domain).cloned().collect();
    if pool.is_empty() {
        return Err(FactoryError::Config(format!("no practices for domain {}", config.domain)));
    }
    let lookup: BTreeMap<String, Practice> = pool.iter().map(|p| (p.id.clone(), p.clone())).collect();
    let pools = ProfilePools::default_for(&config.domain)?;
    let width = config.n_scenarios.to_string().len().max(4);
    // units validate against an empty store; duplicates are caught at commit
    let detached = rules.detached();

    let mut alive: Vec<usize> = (0..pool.len()).collect();
    let mut cursor = 0usize;
    let mut slot = 0usize;
    let mut attempted = 0usize;
    let mut scenario_failures: BTreeMap<String, usize> = BTreeMap::new();
    let wave_cap = config.workers.max(1) * 4;

    while out.scenarios.len() < config.n_scenarios {
        if alive.is_empty() {
            return Err(FactoryError::Aborted {
                failures: out.ledger.len(),
                attempted,
                threshold: config.max_failure_rate,
                ledger: out.ledger,
            });
        }
        let wave: Vec<(usize, usize)> = (0..(config.n_scenarios - out.scenarios.len()).min(wave_cap))
            .map(|_| {
                let p = alive[cursor % alive.len()];
                cursor += 1;
                slot += 1;
                (slot, p)
            })
            .collect();

        let results: Vec<Result<Result<Unit, FailureRecord>, FactoryError>> = std::thread::scope(|scope| {
            let handles: Vec<_> = wave
                .iter()
                .map(|&(s, p)| {
                    let (pool, lookup, pools, detached) = (&pool, &lookup, &pools, &detached);
                    scope.spawn(move || run_unit(s, &pool[p], lookup, pool, pools, gateway, detached, config))
                })
                .collect();
            handles.into_iter().map(|h| h.join().expect("generation worker panicked")).collect()
        });

        for ((s, p), result) in wave.into_iter().zip(results) {
            attempted += 1;
            let failed = match result? {
                Ok(mut unit) if out.scenarios.len() < config.n_scenarios => {
                    if rules.dedup_store.insert(&unit.scenario.content_hash) {
                        let id = scenario_id(&config.domain, out.scenarios.len() + 1, width);
                        rename(&mut unit, &id);
                        out.scenarios.push(unit.scenario);
                        out.mcqs.extend(unit.mcqs);
                        out.dialogues.push(unit.dialogue);
                        None
                    } else {
                        Some(FailureRecord {
                            slot: s,
                            practice_id: pool[p].id.clone(),
                            stage: Stage::Scenario,
                            attempts: 1,
                            violations: vec![Violation::DuplicateHash {
                                hash: unit.scenario.content_hash.clone(),
                            }
                            .to_string()],
                        })
                    }
                }
                Ok(_) => None,
                Err(mut f) => {
                    f.slot = s;
                    Some(f)
                }
            };
            if let Some(f) = failed {
                log::warn!("slot {s} ({}) failed at {:?}: {:?}", f.practice_id, f.stage, f.violations);
                if f.stage == Stage::Scenario {
                    let n = scenario_failures.entry(f.practice_id.clone()).or_default();
                    *n += 1;
                    if *n >= config.retire_after {
                        alive.retain(|&i| i != p);
                        out.retired.push(f.practice_id.clone());
                    }
                }
                out.ledger.push(f);
            }
        }
        if attempted >= config.min_units_before_abort
            && out.ledger.len() as f64 > config.max_failure_rate * attempted as f64
        {
            return Err(FactoryError::Aborted {
                failures: out.ledger.len(),
                attempted,
                threshold: config.max_failure_rate,
                ledger: out.ledger,
            });
        }
    }
    out.mcqs.sort_by(|a, b| a.id.cmp(&b.id));
    Ok(out)
}
