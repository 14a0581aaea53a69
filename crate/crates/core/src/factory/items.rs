//! Single-item generation steps with bounded regeneration.

use std::collections::BTreeMap;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng;

use super::validate::{validate_dialogue, validate_enriched, validate_scenario, ValidationRuleSet, Violation};
use super::{FactoryError, FailureRecord, Stage};
use crate::corpus::text::content_hash;
use crate::corpus::{label_for, Bloom, Dialogue, McqItem, McqOption, Phase, Practice, Profile, Role, Scenario, Turn};
use crate::gateway::Gateway;
use crate::prompts;

/// Attempts per item before a failure is recorded.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RetryCap(pub u32);

impl Default for RetryCap {
    fn default() -> Self {
        RetryCap(5)
    }
}

pub(crate) enum Outcome<T> {
    Done(T, u32),
    Failed(FailureRecord),
}

fn failure(practice_id: &str, stage: Stage, attempts: u32, violations: &[Violation]) -> FailureRecord {
    FailureRecord {
        slot: 0,
        practice_id: practice_id.to_string(),
        stage,
        attempts,
        violations: violations.iter().map(ToString::to_string).collect(),
    }
}

/// Attempts `first..cap` of scenario generation, validating each against
/// `rules` without touching its dedup store.
pub(crate) fn scenario_attempts(
    practice: &Practice,
    profile: &Profile,
    id: &str,
    gateway: &Gateway,
    rules: &ValidationRuleSet,
    first: u32,
    cap: RetryCap,
) -> Result<Outcome<Scenario>, FactoryError> {
    let mut last = Vec::new();
    for attempt in first..cap.0 {
        let reply = gateway.complete(&prompts::scenario_request(practice, profile, attempt))?;
        let Some((text, key_question)) = prompts::parse_scenario(&reply.text) else {
            last = vec![Violation::Unparseable];
            continue;
        };
        let scenario = Scenario {
            id: id.to_string(),
            practice_id: practice.id.clone(),
            profile: profile.clone(),
            content_hash: content_hash(&text),
            text,
            key_question,
        };
        match validate_scenario(&scenario, rules) {
            Ok(()) => return Ok(Outcome::Done(scenario, attempt + 1)),
            Err(v) => last = v,
        }
    }
    Ok(Outcome::Failed(failure(&practice.id, Stage::Scenario, cap.0, &last)))
}

/// Generates and validates a scenario, regenerating up to `cap` times. The
/// accepted text's hash is added to the rule set's dedup store.
pub fn generate_scenario(
    practice: &Practice,
    profile: &Profile,
    id: &str,
    gateway: &Gateway,
    rules: &ValidationRuleSet,
    cap: RetryCap,
) -> Result<Result<Scenario, FailureRecord>, FactoryError> {
    let mut first = 0;
    loop {
        match scenario_attempts(practice, profile, id, gateway, rules, first, cap)? {
            Outcome::Failed(f) => return Ok(Err(f)),
            Outcome::Done(s, used) => {
                // a concurrent caller may have claimed the hash since validation
                if rules.dedup_store.insert(&s.content_hash) {
                    return Ok(Ok(s));
                }
                first = used;
            }
        }
    }
}

/// Correct practice plus `k - 1` uniformly drawn same-domain distractors.
/// Options keep the original practice descriptions; order is shuffled
/// unless `fixed_position`, which puts the correct option first.
pub fn build_base_mcq<R: Rng + ?Sized>(
    scenario: &Scenario,
    practice_pool: &[Practice],
    rng: &mut R,
    fixed_position: bool,
) -> Result<McqItem, FactoryError> {
    let domain = scenario.domain();
    let k = domain.option_count();
    let correct = practice_pool
        .iter()
        .find(|p| p.id == scenario.practice_id)
        .ok_or_else(|| FactoryError::UnknownPractice(scenario.practice_id.clone()))?;
    let others: Vec<&Practice> = practice_pool
        .iter()
        .filter(|p| p.domain == domain && p.id != correct.id)
        .collect();
    if others.len() < k - 1 {
        return Err(FactoryError::PoolTooSmall {
            scenario: scenario.id.clone(),
            needed: k - 1,
            available: others.len(),
        });
    }
    let mut chosen: Vec<&Practice> = vec![correct];
    chosen.extend(others.choose_multiple(rng, k - 1).copied());
    if !fixed_position {
        chosen.shuffle(rng);
    }
    let options: Vec<McqOption> = chosen
        .iter()
        .enumerate()
        .map(|(i, p)| McqOption {
            label: label_for(i),
            text: p.full_description.clone(),
            practice_id: p.id.clone(),
        })
        .collect();
    let correct_label = options
        .iter()
        .find(|o| o.practice_id == correct.id)
        .map(|o| o.label)
        .expect("correct practice was inserted");
    Ok(McqItem {
        id: format!("{}-base", scenario.id),
        scenario_id: scenario.id.clone(),
        domain,
        bloom: Bloom::Remember,
        scenario_text: scenario.text.clone(),
        stem: prompts::bloom_rule(Bloom::Remember).guiding_question.to_string(),
        options,
        correct_label,
    })
}

pub fn mcq_id(scenario_id: &str, level: Bloom) -> String {
    format!("{scenario_id}-{}", level.as_str())
}

/// Rewrites the options of `base` for `level`. Stem becomes the level's
/// guiding question; scenario, labels and practice ids are preserved.
pub fn enrich_bloom(
    base: &McqItem,
    level: Bloom,
    practices: &BTreeMap<String, Practice>,
    gateway: &Gateway,
    cap: RetryCap,
) -> Result<Result<McqItem, FailureRecord>, FactoryError> {
    let option_practices: Vec<&Practice> = base
        .options
        .iter()
        .map(|o| {
            practices
                .get(&o.practice_id)
                .ok_or_else(|| FactoryError::UnknownPractice(o.practice_id.clone()))
        })
        .collect::<Result<_, _>>()?;
    let correct = base.correct_practice().unwrap_or_default().to_string();
    let mut last = Vec::new();
    for attempt in 0..cap.0 {
        let reply = gateway.complete(&prompts::enrichment_request(base, level, &option_practices, attempt))?;
        let Some(parsed) = prompts::parse_enrichment(&reply.text) else {
            last = vec![Violation::Unparseable];
            continue;
        };
        let revised = McqItem {
            id: mcq_id(&base.scenario_id, level),
            scenario_id: base.scenario_id.clone(),
            domain: base.domain.clone(),
            bloom: level,
            scenario_text: base.scenario_text.clone(),
            stem: prompts::bloom_rule(level).guiding_question.to_string(),
            correct_label: parsed
                .iter()
                .find(|(_, id, _)| *id == correct)
                .map(|(l, _, _)| *l)
                .unwrap_or(base.correct_label),
            options: parsed
                .into_iter()
                .map(|(label, practice_id, text)| McqOption { label, text, practice_id })
                .collect(),
        };
        match validate_enriched(base, &revised) {
            Ok(()) => return Ok(Ok(revised)),
            Err(v) => last = v,
        }
    }
    Ok(Err(failure(&correct, Stage::Enrichment, cap.0, &last)))
}

fn parse_dialogue(reply: &str, id: &str, scenario_id: &str) -> Option<Dialogue> {
    let v = prompts::extract_json(reply)?;
    let turns = v.get("turns").or(Some(&v))?.as_array()?;
    let turns = turns
        .iter()
        .map(|t| {
            let role = match t.get("role")?.as_str()?.to_ascii_lowercase().as_str() {
                "learner" => Role::Learner,
                "expert" => Role::Expert,
                _ => return None,
            };
            let phase = match t.get("phase")?.as_str()?.to_ascii_lowercase().as_str() {
                "understanding" => Phase::Understanding,
                "exploration" => Phase::Exploration,
                "planning" => Phase::Planning,
                "reflection" => Phase::Reflection,
                _ => return None,
            };
            Some(Turn {
                role,
                phase,
                text: t.get("text")?.as_str()?.trim().to_string(),
            })
        })
        .collect::<Option<Vec<_>>>()?;
    Some(Dialogue {
        id: id.to_string(),
        scenario_id: scenario_id.to_string(),
        turns,
    })
}

pub fn dialogue_id(scenario_id: &str) -> String {
    format!("{scenario_id}-dialogue")
}

pub fn generate_dialogue(
    scenario: &Scenario,
    practice: &Practice,
    gateway: &Gateway,
    window: (usize, usize),
    cap: RetryCap,
) -> Result<Result<Dialogue, FailureRecord>, FactoryError> {
    let mut last = Vec::new();
    for attempt in 0..cap.0 {
        let reply = gateway.complete(&prompts::dialogue_request(scenario, practice, attempt))?;
        let Some(d) = parse_dialogue(&reply.text, &dialogue_id(&scenario.id), &scenario.id) else {
            last = vec![Violation::Unparseable];
            continue;
        };
        match validate_dialogue(&d, window) {
            Ok(()) => return Ok(Ok(d)),
            Err(v) => last = v,
        }
    }
    Ok(Err(failure(&practice.id, Stage::Dialogue, cap.0, &last)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{Domain, DIALOGUE_TURN_WINDOW};
    use crate::factory::{derive_rng, generate_profile, ProfilePools};
    use crate::gateway::{Backend, BackendError, ChatRequest, SyntheticBackend};
    use std::sync::Arc;

    pub(crate) fn pool(domain: Domain, n: usize) -> Vec<Practice> {
        (0..n)
            .map(|i| Practice {
                id: format!("P_{i:02}"),
                domain: domain.clone(),
                goal: format!("reach outcome number {i}"),
                context: format!("when situation {i} arises"),
                action: format!("apply technique {i}"),
                timing: "every week".into(),
                person: "Adults".into(),
                full_description: format!("Adults should apply technique {i} when situation {i} arises every week in order to reach outcome number {i}."),
                summary: None,
            })
            .collect()
    }

    fn synthetic() -> Gateway {
        Gateway::live("gen", Arc::new(SyntheticBackend::new("gen").with_leak_rate(0.0)))
    }

    fn teaching_scenario(gw: &Gateway, rules: &ValidationRuleSet) -> (Scenario, Vec<Practice>) {
        let practices = pool(Domain::Teaching, 36);
        let pools = ProfilePools::default_for(&Domain::Teaching).unwrap();
        let profile = generate_profile(&pools, &mut derive_rng(1, "profile", 0)).unwrap();
        let s = generate_scenario(&practices[3], &profile, "t0001", gw, rules, RetryCap::default())
            .unwrap()
            .unwrap();
        (s, practices)
    }

    #[test]
    fn teaching_scenario_is_clean() {
        let gw = synthetic();
        let rules = ValidationRuleSet::for_domain(&Domain::Teaching);
        let (s, practices) = teaching_scenario(&gw, &rules);
        assert!(!s.text.contains('?'));
        assert!(s.text.contains("students"));
        assert!(!s.text.to_lowercase().contains(&practices[3].action.to_lowercase()));
        assert!(rules.dedup_store.contains(&s.content_hash));
    }

    struct AlwaysLeaks;
    impl Backend for AlwaysLeaks {
        fn send(&self, _: &ChatRequest) -> Result<String, BackendError> {
            let text = "The instructor failed to ".to_string() + &"return graded quizzes on time ".repeat(8);
            Ok(serde_json::json!({"scenario": text, "key question from instructor": "x"}).to_string())
        }
    }

    #[test]
    fn persistent_leak_exhausts_cap() {
        let gw = Gateway::live("bad", Arc::new(AlwaysLeaks));
        let rules = ValidationRuleSet::for_domain(&Domain::Teaching);
        let practices = pool(Domain::Teaching, 6);
        let pools = ProfilePools::default_for(&Domain::Teaching).unwrap();
        let profile = generate_profile(&pools, &mut derive_rng(1, "p", 0)).unwrap();
        let f = generate_scenario(&practices[0], &profile, "t1", &gw, &rules, RetryCap(5))
            .unwrap()
            .unwrap_err();
        assert_eq!(f.practice_id, "P_00");
        assert_eq!(f.attempts, 5);
        assert!(f.violations.iter().any(|v| v == "leakage_keyword: failed to"));
    }

    #[test]
    fn base_mcq_layout() {
        let gw = synthetic();
        let rules = ValidationRuleSet::for_domain(&Domain::Teaching);
        let (s, practices) = teaching_scenario(&gw, &rules);
        let a = build_base_mcq(&s, &practices, &mut derive_rng(5, "mcq", 0), false).unwrap();
        assert_eq!(a.options.len(), 5);
        assert_eq!(a.correct_practice(), Some("P_03"));
        let mut ids: Vec<_> = a.options.iter().map(|o| o.practice_id.clone()).collect();
        ids.sort();
        ids.dedup();
        assert_eq!(ids.len(), 5);
        let b = build_base_mcq(&s, &practices, &mut derive_rng(5, "mcq", 0), false).unwrap();
        assert_eq!(a, b);
        let fixed = build_base_mcq(&s, &practices, &mut derive_rng(5, "mcq", 0), true).unwrap();
        assert_eq!(fixed.correct_label, 'A');
        assert!(build_base_mcq(&s, &practices[..4], &mut derive_rng(5, "mcq", 0), false).is_err());
    }

    #[test]
    fn diet_mcq_has_four_options() {
        let practices = pool(Domain::Diet, 10);
        let pools = ProfilePools::default_for(&Domain::Diet).unwrap();
        let profile = generate_profile(&pools, &mut derive_rng(2, "p", 0)).unwrap();
        let rules = ValidationRuleSet::for_domain(&Domain::Diet);
        let s = generate_scenario(&practices[0], &profile, "d0001", &synthetic(), &rules, RetryCap::default())
            .unwrap()
            .unwrap();
        let m = build_base_mcq(&s, &practices, &mut derive_rng(2, "mcq", 0), false).unwrap();
        assert_eq!(m.options.len(), 4);
    }

    #[test]
    fn enrichment_preserves_answer_and_follows_rule() {
        let gw = synthetic();
        let rules = ValidationRuleSet::for_domain(&Domain::Teaching);
        let (s, practices) = teaching_scenario(&gw, &rules);
        let lookup: BTreeMap<String, Practice> = practices.iter().map(|p| (p.id.clone(), p.clone())).collect();
        let base = build_base_mcq(&s, &practices, &mut derive_rng(5, "mcq", 0), false).unwrap();
        for level in Bloom::ALL {
            let e = enrich_bloom(&base, level, &lookup, &gw, RetryCap::default()).unwrap().unwrap();
            assert_eq!(e.correct_label, base.correct_label);
            assert_eq!(e.correct_practice(), base.correct_practice());
            assert_eq!(e.scenario_text, base.scenario_text);
            assert_eq!(e.stem, prompts::bloom_rule(level).guiding_question);
            match level {
                Bloom::Remember => assert!(e.options.iter().all(|o| o.text.starts_with("Instructors should "))),
                Bloom::Analyze => assert!(e.options.iter().all(|o| o.text.contains("(pro)") && o.text.contains("(con)"))),
                _ => {}
            }
        }
    }

    #[test]
    fn dialogue_is_valid() {
        let gw = synthetic();
        let rules = ValidationRuleSet::for_domain(&Domain::Teaching);
        let (s, practices) = teaching_scenario(&gw, &rules);
        let d = generate_dialogue(&s, &practices[3], &gw, DIALOGUE_TURN_WINDOW, RetryCap::default())
            .unwrap()
            .unwrap();
        assert!((20..=30).contains(&d.turns.len()));
    }

    struct ShortDialogue;
    impl Backend for ShortDialogue {
        fn send(&self, _: &ChatRequest) -> Result<String, BackendError> {
            let turns: Vec<_> = (0..14)
                .map(|i| {
                    let phase = ["understanding", "exploration", "planning", "reflection"][i * 4 / 14];
                    serde_json::json!({
                        "role": if i % 2 == 0 { "learner" } else { "expert" },
                        "phase": phase,
                        "text": "Fine. Okay.",
                    })
                })
                .collect();
            Ok(serde_json::json!({ "turns": turns }).to_string())
        }
    }

    #[test]
    fn short_dialogue_rejected() {
        let gw = synthetic();
        let rules = ValidationRuleSet::for_domain(&Domain::Teaching);
        let (s, practices) = teaching_scenario(&gw, &rules);
        let bad = Gateway::live("x", Arc::new(ShortDialogue));
        let f = generate_dialogue(&s, &practices[3], &bad, DIALOGUE_TURN_WINDOW, RetryCap(2))
            .unwrap()
            .unwrap_err();
        assert!(f.violations[0].starts_with("turn_structure: turn count 14"));
    }
}
