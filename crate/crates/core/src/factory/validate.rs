//! Rule-based checks on generated scenarios, enriched MCQs and dialogues.

use std::collections::BTreeSet;
use std::fmt;
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};

use crate::corpus::text::{content_hash, sentence_count, word_count};
use crate::corpus::{Dialogue, Domain, KeywordList, McqItem, Role, Scenario};

/// Terms that name personality traits outright.
pub const TRAIT_TERMS: [&str; 12] = [
    "ocean",
    "openness",
    "conscientiousness",
    "conscientious",
    "extraversion",
    "extraverted",
    "extroverted",
    "introverted",
    "agreeableness",
    "neuroticism",
    "neurotic",
    "personality",
];

/// Evaluative wording rejected in rewritten options.
pub const EVALUATIVE_PHRASES: [&str; 3] = ["best practice always", "the best practice", "always the best"];

/// Content hashes of accepted scenarios. Clones share one store.
#[derive(Debug, Clone, Default)]
pub struct DedupStore {
    inner: Arc<Mutex<BTreeSet<String>>>,
}

impl DedupStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn contains(&self, hash: &str) -> bool {
        self.inner.lock().expect("dedup store").contains(hash)
    }

    /// `false` when the hash was already present.
    pub fn insert(&self, hash: &str) -> bool {
        self.inner.lock().expect("dedup store").insert(hash.to_string())
    }

    pub fn len(&self) -> usize {
        self.inner.lock().expect("dedup store").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone)]
pub struct ValidationRuleSet {
    pub word_window: (usize, usize),
    pub blocked_keywords: KeywordList,
    pub forbid_question_mark: bool,
    pub forbid_trait_mentions: bool,
    trait_terms: KeywordList,
    pub dedup_store: DedupStore,
}

impl ValidationRuleSet {
    pub fn for_domain(domain: &Domain) -> Self {
        Self::new(domain.default_word_window(), KeywordList::default_list(), *domain == Domain::Teaching)
    }

    pub fn new(word_window: (usize, usize), blocked_keywords: KeywordList, forbid_trait_mentions: bool) -> Self {
        assert!(word_window.0 < word_window.1, "word window min must be below max");
        Self {
            word_window,
            blocked_keywords,
            forbid_question_mark: true,
            forbid_trait_mentions,
            trait_terms: KeywordList::new(TRAIT_TERMS),
            dedup_store: DedupStore::new(),
        }
    }

    /// Same rules with a fresh, empty dedup store.
    pub fn detached(&self) -> Self {
        Self {
            dedup_store: DedupStore::new(),
            ..self.clone()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "tag", rename_all = "snake_case")]
pub enum Violation {
    MissingField { field: String },
    WordCount { count: usize, min: usize, max: usize },
    LeakageKeyword { phrase: String },
    EmbeddedQuestion,
    TraitMention { term: String },
    DuplicateHash { hash: String },
    OptionCount { expected: usize, found: usize },
    LabelIntegrity { detail: String },
    PracticeIntegrity { detail: String },
    CorrectLabel { expected: char, found: char },
    EmptyOption { label: char },
    EvaluativeWording { phrase: String },
    Unparseable,
    TurnStructure { detail: String },
    TurnLength { turn: usize, sentences: usize },
}

impl Violation {
    pub fn tag(&self) -> &'static str {
        match self {
            Violation::MissingField { .. } => "missing_field",
            Violation::WordCount { .. } => "word_count",
            Violation::LeakageKeyword { .. } => "leakage_keyword",
            Violation::EmbeddedQuestion => "embedded_question",
            Violation::TraitMention { .. } => "trait_mention",
            Violation::DuplicateHash { .. } => "duplicate_hash",
            Violation::OptionCount { .. } => "option_count",
            Violation::LabelIntegrity { .. } => "label_integrity",
            Violation::PracticeIntegrity { .. } => "practice_integrity",
            Violation::CorrectLabel { .. } => "correct_label",
            Violation::EmptyOption { .. } => "empty_option",
            Violation::EvaluativeWording { .. } => "evaluative_wording",
            Violation::Unparseable => "unparseable",
            Violation::TurnStructure { .. } => "turn_structure",
            Violation::TurnLength { .. } => "turn_length",
        }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let tag = self.tag();
        match self {
            Violation::MissingField { field } => write!(f, "{tag}: {field}"),
            Violation::WordCount { count, min, max } => {
                if count < min {
                    write!(f, "{tag}: {count} < {min}")
                } else {
                    write!(f, "{tag}: {count} > {max}")
                }
            }
            Violation::LeakageKeyword { phrase } => write!(f, "{tag}: {phrase}"),
            Violation::TraitMention { term } => write!(f, "{tag}: {term}"),
            Violation::DuplicateHash { hash } => write!(f, "{tag}: {}", &hash[..hash.len().min(12)]),
            Violation::OptionCount { expected, found } => write!(f, "{tag}: {found} != {expected}"),
            Violation::LabelIntegrity { detail }
            | Violation::PracticeIntegrity { detail }
            | Violation::TurnStructure { detail } => write!(f, "{tag}: {detail}"),
            Violation::CorrectLabel { expected, found } => write!(f, "{tag}: {found} != {expected}"),
            Violation::EmptyOption { label } => write!(f, "{tag}: {label}"),
            Violation::EvaluativeWording { phrase } => write!(f, "{tag}: {phrase}"),
            Violation::TurnLength { turn, sentences } => write!(f, "{tag}: turn {turn} has {sentences} sentences"),
            Violation::EmbeddedQuestion | Violation::Unparseable => f.write_str(tag),
        }
    }
}

/// Every violated rule, in check order. The dedup store is read, not
/// updated.
pub fn validate_scenario(scenario: &Scenario, rules: &ValidationRuleSet) -> Result<(), Vec<Violation>> {
    let mut v = Vec::new();
    for (field, value) in [
        ("id", &scenario.id),
        ("practice_id", &scenario.practice_id),
        ("text", &scenario.text),
        ("key_question", &scenario.key_question),
    ] {
        if value.trim().is_empty() {
            v.push(Violation::MissingField { field: field.into() });
        }
    }
    if let Err(e) = scenario.profile.check() {
        v.push(Violation::MissingField { field: e });
    }
    let count = word_count(&scenario.text);
    let (min, max) = rules.word_window;
    if count < min || count > max {
        v.push(Violation::WordCount { count, min, max });
    }
    for phrase in rules.blocked_keywords.matches(&scenario.text) {
        v.push(Violation::LeakageKeyword { phrase: phrase.into() });
    }
    if rules.forbid_question_mark && scenario.text.contains('?') {
        v.push(Violation::EmbeddedQuestion);
    }
    if rules.forbid_trait_mentions {
        for term in rules.trait_terms.matches(&scenario.text) {
            v.push(Violation::TraitMention { term: term.into() });
        }
    }
    let hash = content_hash(&scenario.text);
    if rules.dedup_store.contains(&hash) {
        v.push(Violation::DuplicateHash { hash });
    }
    if v.is_empty() {
        Ok(())
    } else {
        Err(v)
    }
}

pub fn validate_enriched(base: &McqItem, revised: &McqItem) -> Result<(), Vec<Violation>> {
    let mut v = Vec::new();
    if revised.options.len() != base.options.len() {
        v.push(Violation::OptionCount {
            expected: base.options.len(),
            found: revised.options.len(),
        });
    }
    for (i, opt) in revised.options.iter().enumerate() {
        let expected = crate::corpus::label_for(i);
        if opt.label != expected {
            v.push(Violation::LabelIntegrity {
                detail: format!("position {i} labelled {} instead of {expected}", opt.label),
            });
        }
    }
    for opt in &base.options {
        match revised.options.iter().find(|o| o.practice_id == opt.practice_id) {
            None => v.push(Violation::PracticeIntegrity {
                detail: format!("{} vanished", opt.practice_id),
            }),
            Some(r) if r.label != opt.label => v.push(Violation::LabelIntegrity {
                detail: format!("{} moved from {} to {}", opt.practice_id, opt.label, r.label),
            }),
            Some(_) => {}
        }
    }
    for opt in &revised.options {
        if !base.options.iter().any(|o| o.practice_id == opt.practice_id) {
            v.push(Violation::PracticeIntegrity {
                detail: format!("{} was not in the base item", opt.practice_id),
            });
        }
        if opt.text.trim().is_empty() {
            v.push(Violation::EmptyOption { label: opt.label });
        }
        let lower = opt.text.to_lowercase();
        for phrase in EVALUATIVE_PHRASES {
            if lower.contains(phrase) {
                v.push(Violation::EvaluativeWording { phrase: phrase.into() });
            }
        }
    }
    if revised.correct_label != base.correct_label || revised.correct_practice() != base.correct_practice() {
        v.push(Violation::CorrectLabel {
            expected: base.correct_label,
            found: revised.correct_label,
        });
    }
    if revised.scenario_text != base.scenario_text {
        v.push(Violation::MissingField {
            field: "scenario_text changed".into(),
        });
    }
    if v.is_empty() {
        Ok(())
    } else {
        Err(v)
    }
}

/// Structure plus expert turn length (2 to 4 sentences).
pub fn validate_dialogue(dialogue: &Dialogue, window: (usize, usize)) -> Result<(), Vec<Violation>> {
    let mut v = Vec::new();
    if let Err(detail) = dialogue.check_structure(window) {
        v.push(Violation::TurnStructure { detail });
    }
    for (i, turn) in dialogue.turns.iter().enumerate() {
        if turn.role == Role::Expert {
            let n = sentence_count(&turn.text);
            if !(2..=4).contains(&n) {
                v.push(Violation::TurnLength { turn: i, sentences: n });
            }
        }
    }
    if v.is_empty() {
        Ok(())
    } else {
        Err(v)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{DietProfile, McqOption, Phase, Profile, Turn};
    use crate::Bloom;

    pub(crate) fn diet_profile() -> Profile {
        Profile::Diet(DietProfile {
            name: "Ana".into(),
            age: 40,
            sex: "female".into(),
            health_condition: "hypertension".into(),
            primary_goal: "lower blood pressure".into(),
            cooking_habits: "cooks on weekends".into(),
            food_avoidance: "shellfish".into(),
            traits: vec!["busy".into(), "social".into()],
        })
    }

    fn scenario(text: &str) -> Scenario {
        Scenario {
            id: "d0001".into(),
            practice_id: "DG_01".into(),
            profile: diet_profile(),
            text: text.into(),
            key_question: "What should I change".into(),
            content_hash: content_hash(text),
        }
    }

    const CLEAN_72: &str = "Ana, age 40, manages hypertension and wants to lower blood pressure. \
        Meals get decided when grocery shopping after work, usually on Thursdays. \
        On busy days Ana often chooses a frozen pepperoni pizza and a bag of salted chips. \
        Sometimes Ana picks a bowl of lentil soup or a spinach salad with beans instead. \
        Most evenings end with two cups of water and a late snack of crackers. \
        Weekends usually mean restaurant meals.";

    #[test]
    fn clean_scenario_passes() {
        assert_eq!(word_count(CLEAN_72), 72);
        let rules = ValidationRuleSet::for_domain(&Domain::Diet);
        assert_eq!(validate_scenario(&scenario(CLEAN_72), &rules), Ok(()));
    }

    #[test]
    fn leakage_is_tagged() {
        let text = CLEAN_72.replace("often chooses", "struggles to pick");
        let rules = ValidationRuleSet::for_domain(&Domain::Diet);
        let v = validate_scenario(&scenario(&text), &rules).unwrap_err();
        assert_eq!(v, vec![Violation::LeakageKeyword { phrase: "struggles to".into() }]);
        assert_eq!(v[0].to_string(), "leakage_keyword: struggles to");
    }

    #[test]
    fn short_scenario_reports_count() {
        let text: String = CLEAN_72.split_whitespace().take(45).collect::<Vec<_>>().join(" ");
        let rules = ValidationRuleSet::for_domain(&Domain::Diet);
        let v = validate_scenario(&scenario(&text), &rules).unwrap_err();
        assert_eq!(v[0].to_string(), "word_count: 45 < 50");
    }

    #[test]
    fn all_violations_reported() {
        let text: String = "She failed to eat lunch today? ".repeat(3);
        let rules = ValidationRuleSet::for_domain(&Domain::Diet);
        rules.dedup_store.insert(&content_hash(&text));
        let tags: Vec<&str> = validate_scenario(&scenario(&text), &rules)
            .unwrap_err()
            .iter()
            .map(Violation::tag)
            .collect();
        assert_eq!(tags, ["word_count", "leakage_keyword", "embedded_question", "duplicate_hash"]);
    }

    #[test]
    fn trait_mentions_only_for_teaching() {
        let text = CLEAN_72.replace("often chooses", "with an introverted personality chooses");
        let teaching = ValidationRuleSet::new((40, 120), KeywordList::default_list(), true);
        let v = validate_scenario(&scenario(&text), &teaching).unwrap_err();
        assert!(v.iter().all(|x| x.tag() == "trait_mention"));
        assert_eq!(v.len(), 2);
        assert!(validate_scenario(&scenario(&text), &ValidationRuleSet::for_domain(&Domain::Diet)).is_ok());
    }

    fn mcq(labels_and_ids: &[(char, &str)], correct: char) -> McqItem {
        McqItem {
            id: "d0001-remember".into(),
            scenario_id: "d0001".into(),
            domain: Domain::Teaching,
            bloom: Bloom::Remember,
            scenario_text: "s".into(),
            stem: "q".into(),
            options: labels_and_ids
                .iter()
                .map(|&(l, id)| McqOption {
                    label: l,
                    text: format!("text {id}"),
                    practice_id: id.into(),
                })
                .collect(),
            correct_label: correct,
        }
    }

    #[test]
    fn enriched_checks() {
        let base = mcq(&[('A', "P1"), ('B', "P2"), ('C', "P3"), ('D', "P4"), ('E', "P5")], 'B');
        assert!(validate_enriched(&base, &base).is_ok());

        let dropped = mcq(&[('A', "P1"), ('B', "P2"), ('C', "P3"), ('D', "P4")], 'B');
        let tags: Vec<_> = validate_enriched(&base, &dropped).unwrap_err().iter().map(|v| v.tag()).collect();
        assert!(tags.contains(&"option_count"));

        let swapped = mcq(&[('A', "P1"), ('B', "P3"), ('C', "P2"), ('D', "P4"), ('E', "P5")], 'B');
        let tags: Vec<_> = validate_enriched(&base, &swapped).unwrap_err().iter().map(|v| v.tag()).collect();
        assert!(tags.contains(&"label_integrity"));
        assert!(tags.contains(&"correct_label"));

        let mut empty = base.clone();
        empty.options[3].text = " ".into();
        assert_eq!(validate_enriched(&base, &empty).unwrap_err()[0].tag(), "empty_option");
    }

    fn dialogue(n: usize, expert_text: &str) -> Dialogue {
        let phases = [Phase::Understanding, Phase::Exploration, Phase::Planning, Phase::Reflection];
        Dialogue {
            id: "d".into(),
            scenario_id: "s".into(),
            turns: (0..n)
                .map(|i| Turn {
                    role: if i % 2 == 0 { Role::Learner } else { Role::Expert },
                    phase: phases[(i * 4) / n],
                    text: if i % 2 == 0 { "I see.".into() } else { expert_text.into() },
                })
                .collect(),
        }
    }

    #[test]
    fn dialogue_rules() {
        assert!(validate_dialogue(&dialogue(22, "Good point. Let us try."), (20, 30)).is_ok());
        let v = validate_dialogue(&dialogue(14, "Good point. Let us try."), (20, 30)).unwrap_err();
        assert_eq!(v[0].tag(), "turn_structure");
        let long = "One. Two. Three. Four. Five. Six. Seven. Eight. Nine.";
        let v = validate_dialogue(&dialogue(22, long), (20, 30)).unwrap_err();
        assert!(v.iter().all(|x| x.tag() == "turn_length"));
    }
}
