//! Prompt text for every model call, plus the parsers for their replies.
//!
//! Scenario, enrichment, evaluation and dialogue templates follow the
//! published wording. Filter, structure, multiplicity and summary prompts
//! are our own; their reply formats are documented on each builder.

use serde_json::Value;

use crate::corpus::{Bloom, Domain, McqItem, Practice, Profile, Scenario};
use crate::gateway::{ChatRequest, TaskTag};

pub const FILTER_SYSTEM: &str = "You screen guideline text for concrete, actionable practices.";
pub const STRUCTURE_SYSTEM: &str = "You convert guideline text into structured practices.";
pub const MULTIPLICITY_SYSTEM: &str = "You decide whether a structured practice bundles several distinct practices.";
pub const SUMMARY_SYSTEM: &str = "You write one-sentence summaries of guideline practices.";
pub const ENRICH_SYSTEM: &str = "You are a helpful assistant that rewrites multiple choice questions \
to align with Bloom\u{2019}s taxonomy levels. Keep the same correct practice ID \
and option labels. Make the language clear and educationally focused.";

/// Sentinel reply meaning "not actionable".
pub const SKIP: &str = "SKIP";

/// Reply: exactly `SKIP`, or `ACTIONABLE: <short label>`.
pub fn filter_request(paragraph: &str) -> ChatRequest {
    let user = format!(
        "Paragraph:\n{paragraph}\n\n\
         If the paragraph recommends no concrete behavior that a person could follow, \
         reply with exactly SKIP. Otherwise reply ACTIONABLE: followed by a short label."
    );
    ChatRequest::new(TaskTag::Generation, FILTER_SYSTEM, user).with_temperature(0.0)
}

pub fn is_skip(reply: &str) -> bool {
    reply.trim().eq_ignore_ascii_case(SKIP)
}

/// Reply: a JSON object with string keys goal, context, action, timing, person.
pub fn structure_request(paragraph: &str, variation: u32) -> ChatRequest {
    let user = format!(
        "Guideline text:\n{paragraph}\n\n\
         Describe the recommended practice using five elements:\n\
         - goal: the outcome the practice serves\n\
         - context: the situation in which it applies\n\
         - action: what the person should do\n\
         - timing: when or how often\n\
         - person: who should do it\n\
         Use an empty string for any element the text does not state.\n\
         Output JSON with keys: \"goal\" \"context\" \"action\" \"timing\" \"person\""
    );
    ChatRequest::new(TaskTag::Generation, STRUCTURE_SYSTEM, user + &variation_suffix(variation)).with_temperature(0.0)
}

/// Fields parsed from a structure reply, in 5W order. Missing keys are empty.
pub fn parse_structure(reply: &str) -> Option<[String; 5]> {
    let v = extract_json(reply)?;
    let obj = v.as_object()?;
    let field = |k: &str| obj.get(k).and_then(Value::as_str).unwrap_or("").trim().to_string();
    Some([field("goal"), field("context"), field("action"), field("timing"), field("person")])
}

/// Reply: `NO`, or `YES` followed by one numbered line per distinct practice.
pub fn multiplicity_request(practice: &Practice) -> ChatRequest {
    let user = format!(
        "Practice:\n{}\n\nGoal: {}\nContext: {}\nAction: {}\nTiming: {}\nPerson: {}\n\n\
         Does this describe more than one distinct practice that could be followed or violated independently? \
         Reply NO if it is a single practice. Otherwise reply YES and then list each distinct practice \
         as a self-contained guideline sentence on its own numbered line:\n1. ...\n2. ...",
        practice.full_description, practice.goal, practice.context, practice.action, practice.timing, practice.person
    );
    ChatRequest::new(TaskTag::Generation, MULTIPLICITY_SYSTEM, user).with_temperature(0.0)
}

/// `None` for an unreadable reply, `Some(vec![])` for NO, otherwise the splits.
pub fn parse_multiplicity(reply: &str) -> Option<Vec<String>> {
    let trimmed = reply.trim();
    let head = trimmed.split_whitespace().next()?.trim_matches(|c: char| !c.is_ascii_alphabetic());
    if head.eq_ignore_ascii_case("no") {
        return Some(Vec::new());
    }
    if !head.eq_ignore_ascii_case("yes") {
        return None;
    }
    let parts: Vec<String> = trimmed
        .lines()
        .filter_map(|line| {
            let line = line.trim();
            let digits = line.chars().take_while(char::is_ascii_digit).count();
            if digits == 0 {
                return None;
            }
            let rest = line[digits..].trim_start_matches(['.', ')', ':']).trim();
            (!rest.is_empty()).then(|| rest.to_string())
        })
        .collect();
    Some(parts)
}

/// Reply: one plain sentence.
pub fn summary_request(practice: &Practice) -> ChatRequest {
    let user = format!(
        "Summarize this practice in one sentence of at most 20 words.\n\nPractice:\n{}",
        practice.full_description
    );
    ChatRequest::new(TaskTag::Generation, SUMMARY_SYSTEM, user).with_temperature(0.0)
}

fn ocean_list(scores: &[u8]) -> String {
    let body = scores.iter().map(u8::to_string).collect::<Vec<_>>().join(", ");
    format!("[{body}]")
}

pub fn experience_description(years: u32) -> String {
    match years {
        0 | 1 => "first year of teaching".into(),
        y if y < 5 => format!("{y} years of teaching experience, still early career"),
        y => format!("{y} years of teaching experience"),
    }
}

fn variation_suffix(variation: u32) -> String {
    if variation == 0 {
        String::new()
    } else {
        format!("\n\nVariation: {variation}")
    }
}

/// Scenario prompt for one practice and profile. `variation > 0` marks a
/// regeneration attempt so that each attempt is a distinct request.
pub fn scenario_request(practice: &Practice, profile: &Profile, variation: u32) -> ChatRequest {
    let (system, user) = match profile {
        Profile::Teaching(p) => (
            "You are an expert in teaching practices and educational analysis. \
You create realistic, detailed teaching dilemmas that reflect \
real classroom challenges."
                .to_string(),
            format!(
                "Based on this practice:\n- Learning Goal: {}\n- Context: {}\n- Timing: {}\n- Action: {}\n\n\
                 Instructor Profile:\n{}\n\n\
                 OCEAN Personality Scores: {}\n\n\
                 Create a realistic teaching dilemma scenario where this instructor \
faces challenges implementing the practice. Requirements:\n\
                 1) 50--100 words (concise, complete)\n\
                 2) Show natural instructor behavior (influenced by profile, \
but without naming traits explicitly)\n\
                 3) Include realistic class details \
({}, {} students, {})\n\
                 4) Show struggle with timing/action\n\
                 5) Include student behaviors and classroom details\n\
                 6) No embedded questions in the scenario text\n\
                 7) Do not mention OCEAN or psychological traits explicitly\n\n\
                 Output JSON with: \"scenario\" \"key question from instructor\"",
                practice.goal,
                practice.context,
                practice.timing,
                practice.action,
                teaching_summary(p),
                ocean_list(&p.ocean_scores),
                p.class_name,
                p.class_size,
                experience_description(p.years_experience),
            ),
        ),
        Profile::Caregiving(p) => (
            "You are a helpful assistant that creates realistic caregiving dilemmas \
based on structured stroke-recovery caregiving practices."
                .to_string(),
            format!(
                "Based on this practice:\n- Goal: {}\n- Context: {}\n- Action: {}\n- Timing: {}\n- Person Characteristic: {}\n\n\
                 Caregiver Profile:\n{}\n\n\
                 IMPORTANT: Show misaligned choices only through behaviors and daily routines,\n\
never by explicitly stating failure.\n\n\
                 Requirements:\n\
                 1) 50--100 words, concise\n\
                 2) Use concrete routines, times and household details\n\
                 3) Neutral language (``chooses'' not ``fails'')\n\
                 4) Include mixed choices (some helpful, some less ideal)\n\
                 5) Include temporal cues (``often,'' ``sometimes'')\n\
                 6) Exclude embedded questions\n\n\
                 Output JSON with: \"scenario\"  \"key question from caregiver\"",
                practice.goal,
                practice.context,
                practice.action,
                practice.timing,
                practice.person,
                serde_json::to_string(p).expect("profile serialises"),
            ),
        ),
        other => (
            "You are a helpful assistant that creates realistic diet dilemmas \
based on structured dietary guidelines practices."
                .to_string(),
            format!(
                "Based on this practice:\n- Goal: {}\n- Context: {}\n- Action: {}\n- Timing: {}\n- Person Characteristic: {}\n\n\
                 Client Profile:\n{}\n\n\
                 IMPORTANT: Show misaligned choices only through behaviors/food items,\n\
never by explicitly stating failure.\n\n\
                 Requirements:\n\
                 1) 50--100 words, concise\n\
                 2) Use concrete foods and quantities\n\
                 3) Neutral language (``chooses'' not ``fails'')\n\
                 4) Include mixed choices (some good, some less ideal)\n\
                 5) Include temporal cues (``often,'' ``sometimes'')\n\
                 6) Exclude embedded questions\n\n\
                 Output JSON with: \"scenario\"  \"key question from client\"",
                practice.goal,
                practice.context,
                practice.action,
                practice.timing,
                practice.person,
                profile_json(other),
            ),
        ),
    };
    ChatRequest::new(TaskTag::Generation, system, user + &variation_suffix(variation))
}

fn profile_json(profile: &Profile) -> String {
    match profile {
        Profile::Diet(p) => serde_json::to_string(p),
        other => serde_json::to_string(other),
    }
    .expect("profile serialises")
}

pub fn teaching_summary(p: &crate::corpus::TeachingProfile) -> String {
    format!(
        "{} teaches {} ({}) as a {} with {} students. {}",
        p.instructor_name,
        p.class_name,
        p.discipline,
        p.format,
        p.class_size,
        p.narrative_summary
    )
}

/// Reply fields `scenario` and the key question, whatever its exact key.
pub fn parse_scenario(reply: &str) -> Option<(String, String)> {
    let v = extract_json(reply)?;
    let obj = v.as_object()?;
    let text = obj.get("scenario")?.as_str()?.trim().to_string();
    let question = obj
        .iter()
        .find(|(k, _)| k.to_ascii_lowercase().contains("question"))
        .and_then(|(_, v)| v.as_str())
        .map(|s| s.trim().to_string())
        .unwrap_or_default();
    Some((text, question))
}

/// Per-level guiding question and option revision rule.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BloomRule {
    pub level: Bloom,
    pub guiding_question: &'static str,
    pub option_rewrite_instruction: &'static str,
}

pub const BLOOM_RULES: [BloomRule; 4] = [
    BloomRule {
        level: Bloom::Remember,
        guiding_question: "Which practice is violated in this scenario?",
        option_rewrite_instruction: "Keep original practice descriptions unchanged.",
    },
    BloomRule {
        level: Bloom::Understand,
        guiding_question: "Which practice best explains why this challenge occurred?",
        option_rewrite_instruction: "Rephrase each option as a cause/effect explanation.",
    },
    BloomRule {
        level: Bloom::Apply,
        guiding_question: "Which practice should be used next time to address the problem?",
        option_rewrite_instruction: "Reframe each option as a forward-looking action.",
    },
    BloomRule {
        level: Bloom::Analyze,
        guiding_question: "Which practice best fits this scenario compared to the others?",
        option_rewrite_instruction: "Expand each option with pros and cons to compare relevance across practices.",
    },
];

pub fn bloom_rule(level: Bloom) -> &'static BloomRule {
    &BLOOM_RULES[level.rank()]
}

/// Domain-specific option rewrite instruction used in the enrichment prompt.
pub fn enrichment_instruction(domain: &Domain, level: Bloom) -> &'static str {
    match (domain, level) {
        (Domain::Teaching, Bloom::Remember) => "\"Instructors should [specific action] to [achieve the goal].\"",
        (Domain::Teaching, Bloom::Understand) => {
            "Explain why the practice matters for the problem, using \
learning_goal and impact_if_not_followed."
        }
        (Domain::Teaching, Bloom::Apply) => {
            "Describe how the practice solves the teaching problem, \
including when and how to implement it."
        }
        (Domain::Teaching, Bloom::Analyze) => {
            "Analyze why this practice is most important, highlighting \
strengths and possible limitations."
        }
        (Domain::Caregiving, Bloom::Remember) => "\"Caregivers should [specific action] to [achieve the goal].\"",
        (Domain::Caregiving, Bloom::Understand) => {
            "Explain why the practice matters for the patient's recovery, using the goal \
and what happens if it is not followed."
        }
        (Domain::Caregiving, Bloom::Apply) => {
            "Describe how the practice solves the caregiving problem, including when and how to carry it out."
        }
        (Domain::Caregiving, Bloom::Analyze) => {
            "Analyze why this practice is most important, highlighting strengths and possible limitations."
        }
        (_, Bloom::Remember) => {
            "Rewrite each option as: \"People should [specific action] to [achieve the goal].\"\n\
Use details from the practice\u{2019}s full_description."
        }
        (_, Bloom::Understand) => {
            "Rewrite each option as a 1\u{2013}2 sentence explanation of \
why this practice matters for health. Use learning_goal \
and impact_if_not_followed."
        }
        (_, Bloom::Apply) => {
            "Rewrite each option as a 1--2 sentence description of how \
this practice helps solve the health problem. Be concrete \
about what to do and when."
        }
        (_, Bloom::Analyze) => {
            "Rewrite each option as a 1--2 sentence analysis of why \
this practice is important. Compare benefits and limitations."
        }
    }
}

/// Enrichment prompt. `practices[i]` describes `base.options[i]`.
///
/// Reply: `{"options": [{"label": "A", "practice_id": "...", "text": "..."}, ...]}`.
pub fn enrichment_request(base: &McqItem, level: Bloom, practices: &[&Practice], variation: u32) -> ChatRequest {
    let rule = bloom_rule(level);
    let mut user = format!(
        "Bloom level: {}\nQuestion: {}\nRevision rule: {}\n{}\n\nScenario:\n{}\n\nOptions:\n",
        level.title(),
        rule.guiding_question,
        rule.option_rewrite_instruction,
        enrichment_instruction(&base.domain, level),
        base.scenario_text
    );
    for (opt, p) in base.options.iter().zip(practices) {
        user.push_str(&format!(
            "{}. ({}) {}\n   Goal: {}\n   Context: {}\n   Action: {}\n   Timing: {}\n   Person: {}\n",
            opt.label, opt.practice_id, opt.text, p.goal, p.context, p.action, p.timing, p.person
        ));
    }
    user.push_str(
        "\nOutput JSON: {\"options\": [{\"label\": \"A\", \"practice_id\": \"...\", \"text\": \"...\"}, ...]} \
         with one entry per option, in the same order.",
    );
    ChatRequest::new(TaskTag::Generation, ENRICH_SYSTEM, user + &variation_suffix(variation))
}

/// `(label, practice_id, text)` triples from an enrichment reply.
pub fn parse_enrichment(reply: &str) -> Option<Vec<(char, String, String)>> {
    let v = extract_json(reply)?;
    let options = v.get("options")?.as_array()?;
    options
        .iter()
        .map(|o| {
            let label = o.get("label")?.as_str()?.trim().chars().next()?;
            let id = o.get("practice_id")?.as_str()?.trim().to_string();
            let text = o.get("text")?.as_str()?.trim().to_string();
            Some((label, id, text))
        })
        .collect()
}

pub fn evaluation_system(domain: &Domain) -> String {
    let letters = match domain.option_count() {
        4 => "A, B, C, or D",
        _ => "A, B, C, D, or E",
    };
    let role = match domain {
        Domain::Diet => "diet assessment".to_string(),
        Domain::Teaching => "educational assessment".to_string(),
        Domain::Caregiving => "caregiving assessment".to_string(),
        Domain::Other(name) => format!("{name} assessment"),
    };
    format!(
        "You are an expert in {role}. Answer the multiple \
choice question by selecting the correct option ({letters}). \
Return only the letter of your choice."
    )
}

pub fn evaluation_request(item: &McqItem) -> ChatRequest {
    let mut user = format!("{}\n\nQuestion: {}\n\nOptions:\n", item.scenario_text, item.stem);
    for opt in &item.options {
        user.push_str(&format!("{}. {}\n", opt.label, opt.text));
    }
    user.push_str("\nSelect the correct answer.");
    ChatRequest::new(TaskTag::Evaluation, evaluation_system(&item.domain), user)
}

/// `(learner_role, domain_expert, domain word, system prompt)`
fn dialogue_roles(domain: &Domain) -> (&'static str, &'static str, &'static str, &'static str) {
    match domain {
        Domain::Teaching => (
            "instructor",
            "pedagogy specialist",
            "teaching",
            "You are an expert in teaching practices and educational analysis",
        ),
        Domain::Caregiving => (
            "caregiver",
            "rehabilitation specialist",
            "caregiving",
            "You are an expert in stroke recovery and family caregiving",
        ),
        _ => (
            "client",
            "nutritionist",
            "diet",
            "You are an expert in nutrition and dietary counseling",
        ),
    }
}

pub fn background(profile: &Profile) -> String {
    match profile {
        Profile::Diet(p) => format!(
            "{}, {} years old, {}. Health condition: {}. Goal: {}. Cooking: {}. Avoids {}. Traits: {}.",
            p.name,
            p.age,
            p.sex,
            p.health_condition,
            p.primary_goal,
            p.cooking_habits,
            p.food_avoidance,
            p.traits.join(", ")
        ),
        Profile::Teaching(p) => format!(
            "{} teaches {} ({} students, {}), {}.",
            p.instructor_name,
            p.class_name,
            p.class_size,
            p.format,
            experience_description(p.years_experience)
        ),
        Profile::Caregiving(p) => format!(
            "{}, {} years old, caring for their {} ({}). Living situation: {}. Goal: {}. Traits: {}.",
            p.caregiver_name,
            p.caregiver_age,
            p.relationship,
            p.patient_condition,
            p.living_situation,
            p.care_goal,
            p.traits.join(", ")
        ),
        Profile::Generic { attributes, .. } => attributes
            .iter()
            .map(|(k, v)| format!("{k}: {v}"))
            .collect::<Vec<_>>()
            .join("; "),
    }
}

/// Dialogue prompt with the four scaffolded phases.
///
/// Reply: `{"turns": [{"role": "learner"|"expert", "phase": "understanding"|"exploration"|"planning"|"reflection", "text": "..."}]}`.
pub fn dialogue_request(scenario: &Scenario, practice: &Practice, variation: u32) -> ChatRequest {
    let (learner, expert, domain, system) = dialogue_roles(&scenario.domain());
    let user = format!(
        "Generate a multi-turn conversation (20-30 turns) between a {learner} \
and a {expert} about a {domain} dilemma.\n\n\
         Background:\n{}\n\n\
         Dilemma:\nScenario: {}\nRelevant Practice: {}\n\n\
         Structured Scaffolding:\n\
         1. Understanding the problem (3-5 turns)\n\
         2. Exploring barriers/solutions (6-10 turns)\n\
         3. Educating and planning strategies (5-7 turns)\n\
         4. Reflection and next steps (3-4 turns)\n\n\
         Conversation Guidelines:\n\
         - 2-4 sentences per turn\n\
         - Learner responses authentic to profile\n\
         - Expert supportive, knowledgeable, encouraging\n\
         - End with learner having a clear, realistic plan\n\n\
         Output JSON: {{\"turns\": [{{\"role\": \"learner\" or \"expert\", \"phase\": \
\"understanding\", \"exploration\", \"planning\" or \"reflection\", \"text\": \"...\"}}]}} \
starting with the {learner} and alternating speakers.",
        background(&scenario.profile),
        scenario.text,
        practice.full_description
    );
    ChatRequest::new(TaskTag::Dialogue, system, user + &variation_suffix(variation))
}

/// Parses the first JSON object or array in `reply`, tolerating code fences
/// and surrounding prose.
pub fn extract_json(reply: &str) -> Option<Value> {
    if let Ok(v) = serde_json::from_str::<Value>(reply.trim()) {
        return Some(v);
    }
    let start = reply.find(['{', '['])?;
    let close = if reply[start..].starts_with('{') { '}' } else { ']' };
    let end = reply.rfind(close)?;
    (end > start).then(|| serde_json::from_str(&reply[start..=end]).ok()).flatten()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn skip_sentinel_is_trimmed_and_case_insensitive() {
        assert!(is_skip("SKIP"));
        assert!(is_skip(" skip \n"));
        assert!(!is_skip("ACTIONABLE: dietary fat guidance"));
        assert!(!is_skip("SKIP this one"));
    }

    #[test]
    fn structure_tolerates_fences_and_missing_keys() {
        let reply = "```json\n{\"goal\": \"g\", \"context\": \"c\", \"action\": \"a\", \"person\": \"p\"}\n```";
        let f = parse_structure(reply).unwrap();
        assert_eq!(f, ["g", "c", "a", "", "p"].map(String::from));
        assert!(parse_structure("no json here").is_none());
    }

    #[test]
    fn multiplicity_formats() {
        assert_eq!(parse_multiplicity("NO"), Some(vec![]));
        assert_eq!(parse_multiplicity("No."), Some(vec![]));
        assert_eq!(
            parse_multiplicity("YES\n1. Choose whole grains.\n2) Limit sodium."),
            Some(vec!["Choose whole grains.".to_string(), "Limit sodium.".to_string()])
        );
        assert_eq!(parse_multiplicity("maybe"), None);
    }

    #[test]
    fn guiding_questions_are_fixed_per_level() {
        for (i, rule) in BLOOM_RULES.iter().enumerate() {
            assert_eq!(rule.level.rank(), i);
        }
        assert_eq!(bloom_rule(Bloom::Remember).guiding_question, "Which practice is violated in this scenario?");
    }

    #[test]
    fn evaluation_prompt_layout() {
        let item = McqItem {
            id: "t0001-remember".into(),
            scenario_id: "t0001".into(),
            domain: Domain::Diet,
            bloom: Bloom::Remember,
            scenario_text: "Scenario body.".into(),
            stem: "Which practice is violated in this scenario?".into(),
            options: ['A', 'B', 'C', 'D']
                .iter()
                .enumerate()
                .map(|(i, &l)| crate::corpus::McqOption {
                    label: l,
                    text: format!("opt{i}"),
                    practice_id: format!("P{i}"),
                })
                .collect(),
            correct_label: 'A',
        };
        let r = evaluation_request(&item);
        assert_eq!(r.temperature, 0.0);
        assert_eq!(r.max_tokens, 32);
        assert!(r.system_prompt.contains("(A, B, C, or D)"));
        assert_eq!(
            r.user_prompt,
            "Scenario body.\n\nQuestion: Which practice is violated in this scenario?\n\nOptions:\nA. opt0\nB. opt1\nC. opt2\nD. opt3\n\nSelect the correct answer."
        );
    }

    #[test]
    fn scenario_reply_key_question_any_key() {
        let (s, q) = parse_scenario(r#"{"scenario": "text", "key question from client": "what now"}"#).unwrap();
        assert_eq!((s.as_str(), q.as_str()), ("text", "what now"));
    }
}
