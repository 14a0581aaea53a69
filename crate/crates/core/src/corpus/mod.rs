//! Pipeline record types and their invariants.
//!
//! Every stage reads and writes these as line-delimited JSON (see [`io`]).
//! Field order in the structs is the on-disk field order, so identical values
//! always serialise to identical bytes.

pub mod io;
pub mod keywords;
pub mod text;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use io::{load_corpus, save_corpus, CorpusError, Record};
pub use keywords::KeywordList;

/// Guideline domain. Unknown names round-trip through `Other`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(from = "String", into = "String")]
pub enum Domain {
    Teaching,
    Diet,
    Caregiving,
    Other(String),
}

impl Domain {
    pub fn as_str(&self) -> &str {
        match self {
            Domain::Teaching => "teaching",
            Domain::Diet => "diet",
            Domain::Caregiving => "caregiving",
            Domain::Other(name) => name,
        }
    }

    /// Options per MCQ: four for diet, five everywhere else.
    pub fn option_count(&self) -> usize {
        match self {
            Domain::Diet => 4,
            _ => 5,
        }
    }

    /// Probability of a correct answer under uniform guessing.
    pub fn chance_level(&self) -> f64 {
        1.0 / self.option_count() as f64
    }

    /// Default scenario word window (inclusive).
    pub fn default_word_window(&self) -> (usize, usize) {
        match self {
            Domain::Teaching => (40, 120),
            _ => (50, 100),
        }
    }
}

impl From<String> for Domain {
    fn from(s: String) -> Self {
        match s.to_ascii_lowercase().as_str() {
            "teaching" => Domain::Teaching,
            "diet" => Domain::Diet,
            "caregiving" => Domain::Caregiving,
            _ => Domain::Other(s),
        }
    }
}

impl From<Domain> for String {
    fn from(d: Domain) -> Self {
        d.as_str().to_string()
    }
}

impl FromStr for Domain {
    type Err = std::convert::Infallible;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(Domain::from(s.to_string()))
    }
}

impl fmt::Display for Domain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// The four Bloom levels used for MCQ enrichment, in taxonomy order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Bloom {
    Remember,
    Understand,
    Apply,
    Analyze,
}

impl Bloom {
    pub const ALL: [Bloom; 4] = [Bloom::Remember, Bloom::Understand, Bloom::Apply, Bloom::Analyze];

    pub fn as_str(self) -> &'static str {
        match self {
            Bloom::Remember => "remember",
            Bloom::Understand => "understand",
            Bloom::Apply => "apply",
            Bloom::Analyze => "analyze",
        }
    }

    pub fn title(self) -> &'static str {
        match self {
            Bloom::Remember => "Remember",
            Bloom::Understand => "Understand",
            Bloom::Apply => "Apply",
            Bloom::Analyze => "Analyze",
        }
    }

    /// Position in the taxonomy, 0 = Remember.
    pub fn rank(self) -> usize {
        self as usize
    }
}

impl FromStr for Bloom {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "remember" => Ok(Bloom::Remember),
            "understand" => Ok(Bloom::Understand),
            "apply" => Ok(Bloom::Apply),
            "analyze" | "analyse" => Ok(Bloom::Analyze),
            other => Err(format!("unknown Bloom level `{other}`")),
        }
    }
}

impl fmt::Display for Bloom {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.title())
    }
}

/// An actionable guideline item structured by the five Ws.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Practice {
    pub id: String,
    pub domain: Domain,
    pub goal: String,
    pub context: String,
    pub action: String,
    pub timing: String,
    pub person: String,
    pub full_description: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub summary: Option<String>,
}

impl Practice {
    /// The 5W fields in fixed order: goal, context, action, timing, person.
    pub fn five_w(&self) -> [&str; 5] {
        [&self.goal, &self.context, &self.action, &self.timing, &self.person]
    }

    pub const FIVE_W_NAMES: [&'static str; 5] = ["goal", "context", "action", "timing", "person"];
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DietProfile {
    pub name: String,
    pub age: u32,
    pub sex: String,
    pub health_condition: String,
    pub primary_goal: String,
    pub cooking_habits: String,
    pub food_avoidance: String,
    pub traits: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TeachingProfile {
    pub instructor_name: String,
    pub discipline: String,
    pub class_name: String,
    pub class_size: u32,
    pub format: String,
    pub years_experience: u32,
    /// Openness, conscientiousness, extraversion, agreeableness,
    /// neuroticism; each on a 1–10 scale.
    pub ocean_scores: Vec<u8>,
    pub narrative_summary: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CaregivingProfile {
    pub caregiver_name: String,
    pub relationship: String,
    pub caregiver_age: u32,
    pub patient_condition: String,
    pub living_situation: String,
    pub care_goal: String,
    pub traits: Vec<String>,
}

/// Synthetic persona a scenario is grounded in.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Profile {
    Diet(DietProfile),
    Teaching(TeachingProfile),
    Caregiving(CaregivingProfile),
    Generic {
        domain: String,
        attributes: BTreeMap<String, String>,
    },
}

impl Profile {
    pub fn domain(&self) -> Domain {
        match self {
            Profile::Diet(_) => Domain::Diet,
            Profile::Teaching(_) => Domain::Teaching,
            Profile::Caregiving(_) => Domain::Caregiving,
            Profile::Generic { domain, .. } => Domain::from(domain.clone()),
        }
    }

    /// Checks required fields for the profile's domain.
    pub fn check(&self) -> Result<(), String> {
        fn req(name: &str, v: &str) -> Result<(), String> {
            if v.trim().is_empty() {
                Err(format!("profile field `{name}` is empty"))
            } else {
                Ok(())
            }
        }
        match self {
            Profile::Diet(p) => {
                req("name", &p.name)?;
                req("sex", &p.sex)?;
                req("health_condition", &p.health_condition)?;
                req("primary_goal", &p.primary_goal)?;
                req("cooking_habits", &p.cooking_habits)?;
                req("food_avoidance", &p.food_avoidance)?;
                if p.traits.len() != 2 {
                    return Err(format!("diet profile needs exactly 2 traits, got {}", p.traits.len()));
                }
                Ok(())
            }
            Profile::Teaching(p) => {
                req("instructor_name", &p.instructor_name)?;
                req("discipline", &p.discipline)?;
                req("class_name", &p.class_name)?;
                req("format", &p.format)?;
                req("narrative_summary", &p.narrative_summary)?;
                if p.class_size == 0 {
                    return Err("class_size must be positive".into());
                }
                if p.ocean_scores.len() != 5 {
                    return Err(format!("ocean_scores needs 5 entries, got {}", p.ocean_scores.len()));
                }
                if p.ocean_scores.iter().any(|s| !(1..=10).contains(s)) {
                    return Err("ocean_scores must lie in 1..=10".into());
                }
                Ok(())
            }
            Profile::Caregiving(p) => {
                req("caregiver_name", &p.caregiver_name)?;
                req("relationship", &p.relationship)?;
                req("patient_condition", &p.patient_condition)?;
                req("living_situation", &p.living_situation)?;
                req("care_goal", &p.care_goal)?;
                if p.traits.len() != 2 {
                    return Err(format!("caregiving profile needs exactly 2 traits, got {}", p.traits.len()));
                }
                Ok(())
            }
            Profile::Generic { domain, attributes } => {
                req("domain", domain)?;
                if attributes.is_empty() {
                    return Err("generic profile has no attributes".into());
                }
                Ok(())
            }
        }
    }
}

/// An implicit-violation vignette bound to one practice and one profile.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Scenario {
    pub id: String,
    pub practice_id: String,
    pub profile: Profile,
    pub text: String,
    pub key_question: String,
    pub content_hash: String,
}

impl Scenario {
    pub fn domain(&self) -> Domain {
        self.profile.domain()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct McqOption {
    pub label: char,
    pub text: String,
    pub practice_id: String,
}

/// One multiple-choice item at one Bloom level.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct McqItem {
    pub id: String,
    pub scenario_id: String,
    pub domain: Domain,
    pub bloom: Bloom,
    pub scenario_text: String,
    pub stem: String,
    pub options: Vec<McqOption>,
    pub correct_label: char,
}

impl McqItem {
    /// Practice id behind the correct option.
    pub fn correct_practice(&self) -> Option<&str> {
        self.options
            .iter()
            .find(|o| o.label == self.correct_label)
            .map(|o| o.practice_id.as_str())
    }

    pub fn option(&self, label: char) -> Option<&McqOption> {
        self.options.iter().find(|o| o.label == label)
    }
}

/// Option letter for position `i` (0 → 'A').
pub fn label_for(i: usize) -> char {
    (b'A' + i as u8) as char
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Learner,
    Expert,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    Understanding,
    Exploration,
    Planning,
    Reflection,
}

impl Phase {
    pub const ALL: [Phase; 4] = [
        Phase::Understanding,
        Phase::Exploration,
        Phase::Planning,
        Phase::Reflection,
    ];
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Turn {
    pub role: Role,
    pub phase: Phase,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dialogue {
    pub id: String,
    pub scenario_id: String,
    pub turns: Vec<Turn>,
}

/// Default dialogue turn window (inclusive).
pub const DIALOGUE_TURN_WINDOW: (usize, usize) = (20, 30);

impl Dialogue {
    /// Structural checks: turn window, strict alternation starting with the
    /// learner, and all four phases present in order.
    pub fn check_structure(&self, window: (usize, usize)) -> Result<(), String> {
        let n = self.turns.len();
        if n < window.0 || n > window.1 {
            return Err(format!("turn count {n} outside {}..={}", window.0, window.1));
        }
        for (i, turn) in self.turns.iter().enumerate() {
            let expected = if i % 2 == 0 { Role::Learner } else { Role::Expert };
            if turn.role != expected {
                return Err(format!("turn {i} should be {expected:?}"));
            }
            if turn.text.trim().is_empty() {
                return Err(format!("turn {i} is empty"));
            }
        }
        let mut seen = Vec::new();
        for turn in &self.turns {
            if seen.last() != Some(&turn.phase) {
                if seen.contains(&turn.phase) {
                    return Err(format!("phase {:?} reappears out of order", turn.phase));
                }
                seen.push(turn.phase);
            }
        }
        if seen != Phase::ALL {
            return Err(format!("phases must run understanding→reflection, got {seen:?}"));
        }
        Ok(())
    }
}

/// One administration of one MCQ to one model.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub model_id: String,
    pub mcq_id: String,
    pub scenario_id: String,
    pub practice_id: String,
    pub bloom: Bloom,
    pub domain: Domain,
    pub chosen_label: Option<char>,
    pub correct_label: char,
    pub correct: bool,
    pub raw_response: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl TrialRecord {
    pub fn check(&self) -> Result<(), String> {
        let expected = self.chosen_label == Some(self.correct_label);
        if self.correct != expected {
            return Err(format!(
                "correct={} disagrees with chosen={:?} vs correct_label={}",
                self.correct, self.chosen_label, self.correct_label
            ));
        }
        Ok(())
    }
}
