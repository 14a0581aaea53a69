//! Offline stand-in for a chat model.
//!
//! Replies are a pure function of (backend name, request digest), so a run
//! recorded against it replays byte for byte. It understands every prompt in
//! [`crate::prompts`]: structuring works on guideline sentences of the form
//! `<person> should <action> <context> <timing> in order to <goal>.`, and
//! as an examinee it picks the option sharing the most words with the
//! scenario with probability `skill`, otherwise a pseudo-random letter.

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::json;
use sha2::{Digest, Sha256};

use super::{Backend, BackendError, ChatRequest};
use crate::prompts;

#[derive(Debug, Clone)]
pub struct SyntheticBackend {
    name: String,
    skill: f64,
    /// Probability that a first-attempt scenario leaks a blocked phrase.
    leak_rate: f64,
}

impl SyntheticBackend {
    pub fn new(name: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            skill: 0.8,
            leak_rate: 0.05,
        }
    }

    /// Examinee accuracy knob in [0, 1]; 0 is a uniform guesser.
    pub fn with_skill(mut self, skill: f64) -> Self {
        self.skill = skill.clamp(0.0, 1.0);
        self
    }

    pub fn with_leak_rate(mut self, rate: f64) -> Self {
        self.leak_rate = rate.clamp(0.0, 1.0);
        self
    }

    fn rng(&self, request: &ChatRequest, salt: &str) -> ChaCha8Rng {
        let mut h = Sha256::new();
        h.update(self.name.as_bytes());
        h.update([0]);
        h.update(salt.as_bytes());
        h.update([0]);
        h.update(request.digest().0.as_bytes());
        let bytes: [u8; 32] = h.finalize().into();
        ChaCha8Rng::from_seed(bytes)
    }

    fn reply(&self, r: &ChatRequest) -> String {
        let sys = r.system_prompt.as_str();
        if sys == prompts::FILTER_SYSTEM {
            filter_reply(&r.user_prompt)
        } else if sys == prompts::STRUCTURE_SYSTEM {
            structure_reply(&r.user_prompt)
        } else if sys == prompts::MULTIPLICITY_SYSTEM {
            multiplicity_reply(&r.user_prompt)
        } else if sys == prompts::SUMMARY_SYSTEM {
            summary_reply(&r.user_prompt)
        } else if sys == prompts::ENRICH_SYSTEM {
            enrichment_reply(&r.user_prompt, &mut self.rng(r, "enrich"))
        } else if sys.contains("Return only the letter") {
            self.answer(&r.user_prompt, &mut self.rng(r, "exam"))
        } else if r.user_prompt.starts_with("Generate a multi-turn conversation") {
            dialogue_reply(&r.user_prompt, &mut self.rng(r, "dialogue"))
        } else if r.user_prompt.starts_with("Based on this practice:") {
            let leak = !r.user_prompt.contains("\nVariation: ") && self.rng(r, "leak").random::<f64>() < self.leak_rate;
            scenario_reply(&r.user_prompt, leak, &mut self.rng(r, "scenario"))
        } else {
            "I can only help with the benchmark prompts.".into()
        }
    }

    fn answer(&self, user: &str, rng: &mut ChaCha8Rng) -> String {
        let (scenario, options) = parse_exam(user);
        if options.is_empty() {
            return "I am not sure.".into();
        }
        let knows = rng.random::<f64>() < self.skill;
        let pick = if knows {
            let scen = content_words(&scenario);
            let mut best = (0usize, options[0].0);
            for (label, text) in &options {
                let score = content_words(text).iter().filter(|w| scen.contains(w)).count();
                if score > best.0 {
                    best = (score, *label);
                }
            }
            best.1
        } else {
            options[rng.random_range(0..options.len())].0
        };
        match rng.random_range(0..4) {
            0 => format!("{pick}"),
            1 => format!("{pick}."),
            2 => format!("Answer: {pick}"),
            _ => format!("The correct option is {pick}"),
        }
    }
}

impl Backend for SyntheticBackend {
    fn send(&self, request: &ChatRequest) -> Result<String, BackendError> {
        Ok(self.reply(request))
    }
}

fn between<'a>(s: &'a str, start: &str, end: &str) -> &'a str {
    let Some(i) = s.find(start) else { return "" };
    let rest = &s[i + start.len()..];
    match rest.find(end) {
        Some(j) => &rest[..j],
        None => rest,
    }
}

fn line_value<'a>(s: &'a str, key: &str) -> &'a str {
    s.lines()
        .find_map(|l| l.trim_start().strip_prefix(key))
        .map(str::trim)
        .unwrap_or("")
}

fn content_words(text: &str) -> Vec<String> {
    const STOP: [&str; 14] = [
        "that", "this", "with", "from", "should", "their", "they", "have", "when", "into", "your", "about", "more", "each",
    ];
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|w| w.len() >= 4)
        .map(str::to_lowercase)
        .filter(|w| !STOP.contains(&w.as_str()))
        .collect()
}

fn filter_reply(user: &str) -> String {
    let para = between(user, "Paragraph:\n", "\n\nIf the paragraph");
    if para.to_lowercase().contains(" should ") {
        let label: Vec<&str> = para.split_whitespace().take(5).collect();
        format!("ACTIONABLE: {}", label.join(" "))
    } else {
        prompts::SKIP.into()
    }
}

/// 5W fields of one guideline sentence.
pub fn parse_guideline_sentence(sentence: &str) -> [String; 5] {
    let s = sentence.trim().trim_end_matches('.');
    let Some(i) = s.find(" should ") else {
        return Default::default();
    };
    let person = s[..i].trim().to_string();
    let mut rest = s[i + " should ".len()..].to_string();
    let mut goal = String::new();
    if let Some(j) = rest.find(" in order to ") {
        goal = rest[j + " in order to ".len()..].trim().to_string();
        rest.truncate(j);
    }
    let mut timing = String::new();
    for marker in [" every ", " each ", " daily", " weekly", " once ", " twice ", " at least "] {
        if let Some(j) = rest.find(marker) {
            timing = rest[j..].trim().to_string();
            rest.truncate(j);
            break;
        }
    }
    let mut context = String::new();
    let mut first = None;
    for marker in [" when ", " during ", " while ", " before ", " after ", " at "] {
        if let Some(j) = rest.find(marker) {
            first = Some(first.map_or(j, |f: usize| f.min(j)));
        }
    }
    if let Some(j) = first {
        context = rest[j..].trim().to_string();
        rest.truncate(j);
    }
    [goal, context, rest.trim().to_string(), timing, person]
}

fn structure_reply(user: &str) -> String {
    let text = between(user, "Guideline text:\n", "\n\nDescribe the recommended");
    let sentence = text
        .split_inclusive('.')
        .find(|s| s.contains(" should "))
        .unwrap_or(text);
    let [goal, context, action, timing, person] = parse_guideline_sentence(sentence);
    json!({"goal": goal, "context": context, "action": action, "timing": timing, "person": person}).to_string()
}

fn multiplicity_reply(user: &str) -> String {
    let desc = between(user, "Practice:\n", "\n\nGoal:");
    let parts: Vec<&str> = desc
        .split_inclusive('.')
        .map(str::trim)
        .filter(|s| s.contains(" should "))
        .collect();
    if parts.len() <= 1 {
        return "NO".into();
    }
    let mut out = String::from("YES");
    for (i, p) in parts.iter().enumerate() {
        out.push_str(&format!("\n{}. {}", i + 1, p));
    }
    out
}

fn summary_reply(user: &str) -> String {
    let desc = between(user, "Practice:\n", "\u{0}");
    let words: Vec<&str> = desc.split_whitespace().take(20).collect();
    let mut s = words.join(" ");
    if !s.ends_with('.') {
        s.push('.');
    }
    s
}

const FOODS_LESS: [&str; 10] = [
    "a large bag of salted chips",
    "two glazed donuts",
    "a bowl of instant ramen",
    "a frozen pepperoni pizza",
    "three slices of white toast with butter",
    "a 20-ounce regular soda",
    "a fast-food cheeseburger with fries",
    "a pint of ice cream",
    "a plate of fried chicken",
    "a sweetened coffee drink",
];

const FOODS_GOOD: [&str; 10] = [
    "a cup of plain yogurt with berries",
    "a handful of unsalted almonds",
    "a bowl of lentil soup",
    "grilled salmon with brown rice",
    "an apple with peanut butter",
    "a spinach salad with beans",
    "two boiled eggs",
    "a bowl of oatmeal with banana",
    "steamed broccoli with chicken",
    "a glass of low-fat milk",
];

const STUDENT_BEHAVIORS: [&str; 8] = [
    "Several students scroll on their phones near the back.",
    "A few students in the front row take careful notes.",
    "Many students glance at the clock as the session runs long.",
    "Two students whisper about the upcoming assignment.",
    "Most students stay quiet when a volunteer is requested.",
    "Some students pack their bags before the session ends.",
    "One student asks to repeat the instructions from last week.",
    "A group near the window chats about weekend plans.",
];

const CARE_ROUTINES: [&str; 8] = [
    "Most afternoons the television stays on for several hours.",
    "Sometimes lunch is skipped because the morning runs late.",
    "The walker often stays folded beside the front door.",
    "Evening medication is usually sorted on the kitchen counter.",
    "On weekends a neighbor sometimes stops by with groceries.",
    "Exercise sheets from the clinic sit in a drawer.",
    "Bath time often gets pushed to late evening.",
    "The blood pressure cuff is used now and then.",
];

fn json_field(profile_json: &str, key: &str) -> String {
    serde_json::from_str::<serde_json::Value>(profile_json)
        .ok()
        .and_then(|v| v.get(key).map(|x| x.as_str().map(str::to_string).unwrap_or_else(|| x.to_string())))
        .unwrap_or_default()
}

fn lowercase_first(s: &str) -> String {
    let mut c = s.chars();
    match c.next() {
        Some(f) => f.to_lowercase().collect::<String>() + c.as_str(),
        None => String::new(),
    }
}

fn fill_to_window(sentences: Vec<String>, extra: &[&str], rng: &mut ChaCha8Rng, lo: usize, hi: usize) -> String {
    let mut out = sentences;
    let mut pool: Vec<&str> = extra.to_vec();
    let words = |v: &Vec<String>| v.iter().map(|s| s.split_whitespace().count()).sum::<usize>();
    while words(&out) < lo + 8 && !pool.is_empty() {
        let i = rng.random_range(0..pool.len());
        out.insert(out.len() - 1, pool.swap_remove(i).to_string());
    }
    while words(&out) > hi && out.len() > 2 {
        out.remove(out.len() - 2);
    }
    out.join(" ")
}

fn scenario_reply(user: &str, leak: bool, rng: &mut ChaCha8Rng) -> String {
    let goal = line_value(user, "- Goal:");
    let goal = if goal.is_empty() { line_value(user, "- Learning Goal:") } else { goal };
    let context = line_value(user, "- Context:");
    let timing = line_value(user, "- Timing:");
    let context_clause = if context.is_empty() { "during a typical week".to_string() } else { context.to_string() };
    let timing_clause = if timing.is_empty() { "now and then".to_string() } else { timing.to_string() };

    let (text, question) = if user.contains("Instructor Profile:") {
        let summary = between(user, "Instructor Profile:\n", "\n\nOCEAN");
        let name = summary.split(" teaches ").next().unwrap_or("The instructor").trim();
        let details = between(user, "Include realistic class details \n(", ")\n");
        let details = if details.is_empty() { between(user, "class details (", ")\n") } else { details };
        let mut parts = details.splitn(3, ", ");
        let class = parts.next().unwrap_or("the course");
        let size = parts.next().unwrap_or("many students");
        let exp = parts.next().unwrap_or("some experience");
        let mut s = vec![
            format!("{name} teaches {class} with {size} and has {exp}."),
            format!("The class hopes to {} over the term.", lowercase_first(goal)),
            format!("The moment that matters comes {context_clause}, {timing_clause}."),
            format!(
                "{name} {} moves straight into new slides and covers {} extra topics.",
                ["usually", "often", "sometimes"][rng.random_range(0..3)],
                rng.random_range(2..5)
            ),
        ];
        if leak {
            s.push(format!("{name} struggles to keep the session on track."));
        }
        s.push(format!("The session ends {} minutes late.", rng.random_range(3..15)));
        let text = fill_to_window(s, &STUDENT_BEHAVIORS, rng, 40, 110);
        (text, "How can I fit this into my class without losing coverage".to_string())
    } else if user.contains("Caregiver Profile:") {
        let profile = between(user, "Caregiver Profile:\n", "\n\n");
        let name = json_field(profile, "caregiver_name");
        let rel = json_field(profile, "relationship");
        let cond = json_field(profile, "patient_condition");
        let mut s = vec![
            format!("{name} cares for their {rel}, who is recovering from {cond}."),
            format!("The family wants to {} this season.", lowercase_first(goal)),
            format!("Things get harder {context_clause}, {timing_clause}."),
            format!(
                "{name} {} handles the routine alone and skips the home exercises on {} days a week.",
                ["usually", "often", "sometimes"][rng.random_range(0..3)],
                rng.random_range(2..5)
            ),
        ];
        if leak {
            s.push(format!("{name} fails to keep the schedule."));
        }
        s.push(format!("By evening {name} is tired after {} hours of chores.", rng.random_range(3..8)));
        let text = fill_to_window(s, &CARE_ROUTINES, rng, 50, 95);
        (text, "What can I change at home to help recovery".to_string())
    } else {
        let profile = between(user, "Client Profile:\n", "\n\n");
        let name = json_field(profile, "name");
        let age = json_field(profile, "age");
        let cond = json_field(profile, "health_condition");
        let less = FOODS_LESS.choose_multiple(rng, 2).copied().collect::<Vec<_>>();
        let good = FOODS_GOOD.choose_multiple(rng, 2).copied().collect::<Vec<_>>();
        let mut s = vec![
            format!("{name}, age {age}, manages {cond} and wants to {}.", lowercase_first(goal)),
            format!("Meals get decided {context_clause}, {timing_clause}."),
            format!("On busy days {name} often chooses {} and {}.", less[0], less[1]),
            format!("Sometimes {name} picks {} or {} instead.", good[0], good[1]),
        ];
        if leak {
            s.push(format!("{name} fails to plan meals ahead."));
        }
        s.push(format!(
            "Most evenings end with {} cups of water and a late snack.",
            rng.random_range(1..4)
        ));
        let extra = [
            "Weekend meals are usually eaten at restaurants with friends.",
            "Leftovers sometimes sit in the fridge for days.",
            "Breakfast is often skipped during the work week.",
            "Grocery trips happen once a week after work.",
            "Portions at dinner are usually generous.",
        ];
        let text = fill_to_window(s, &extra, rng, 50, 95);
        (text, "What simple change would help me most".to_string())
    };
    let key = if user.contains("key question from instructor") {
        "key question from instructor"
    } else if user.contains("key question from caregiver") {
        "key question from caregiver"
    } else {
        "key question from client"
    };
    let mut obj = serde_json::Map::new();
    obj.insert("scenario".into(), json!(text));
    obj.insert(key.into(), json!(question));
    serde_json::Value::Object(obj).to_string()
}

struct OptionBlock {
    label: char,
    practice_id: String,
    goal: String,
    action: String,
    timing: String,
}

fn parse_option_blocks(user: &str) -> Vec<OptionBlock> {
    let body = between(user, "\n\nOptions:\n", "\nOutput JSON");
    let mut blocks: Vec<OptionBlock> = Vec::new();
    for line in body.lines() {
        let t = line.trim_start();
        if line.len() > 3 && !line.starts_with(' ') && line.as_bytes()[1] == b'.' {
            let label = line.chars().next().unwrap_or('?');
            let id = between(line, "(", ")").to_string();
            blocks.push(OptionBlock {
                label,
                practice_id: id,
                goal: String::new(),
                action: String::new(),
                timing: String::new(),
            });
        } else if let Some(b) = blocks.last_mut() {
            if let Some(v) = t.strip_prefix("Goal:") {
                b.goal = v.trim().to_string();
            } else if let Some(v) = t.strip_prefix("Action:") {
                b.action = v.trim().to_string();
            } else if let Some(v) = t.strip_prefix("Timing:") {
                b.timing = v.trim().to_string();
            }
        }
    }
    blocks
}

fn enrichment_reply(user: &str, rng: &mut ChaCha8Rng) -> String {
    let level = line_value(user, "Bloom level:");
    let who = if user.contains("\"Instructors should") {
        "Instructors"
    } else if user.contains("\"Caregivers should") {
        "Caregivers"
    } else {
        "People"
    };
    let mut blocks = parse_option_blocks(user);
    // an occasional malformed first attempt exercises the validator
    if !user.contains("\nVariation: ") && rng.random::<f64>() < 0.02 {
        blocks.pop();
    }
    let options: Vec<serde_json::Value> = blocks
        .iter()
        .map(|b| {
            let action = lowercase_first(&b.action);
            let goal = lowercase_first(&b.goal);
            let timing = if b.timing.is_empty() { "regularly".to_string() } else { b.timing.clone() };
            let text = match level {
                "Remember" => format!("{who} should {action} to {goal}."),
                "Understand" => format!("Because the step to {action} was missing, the effort to {goal} lost ground."),
                "Apply" => format!("Next time, {action} {timing} to {goal}."),
                _ => format!(
                    "Taking time to {action} helps {goal} (pro), but it adds planning effort {timing} (con)."
                ),
            };
            json!({"label": b.label.to_string(), "practice_id": b.practice_id, "text": text})
        })
        .collect();
    json!({ "options": options }).to_string()
}

fn dialogue_reply(user: &str, rng: &mut ChaCha8Rng) -> String {
    let practice = line_value(user, "Relevant Practice:");
    let mut counts = [
        rng.random_range(3..=5usize),
        rng.random_range(6..=10usize),
        rng.random_range(5..=7usize),
        rng.random_range(3..=4usize),
    ];
    while counts.iter().sum::<usize>() < 20 {
        counts[1] += 1;
    }
    let phases = ["understanding", "exploration", "planning", "reflection"];
    let learner_lines = [
        "I keep running into the same problem. It feels like nothing changes.",
        "That makes sense to me. I had not thought about it that way.",
        "Time is the hardest part for me. My weeks are already packed.",
        "I tried something similar once. It worked for a little while.",
        "I can start with a small step. Maybe once this week.",
        "That sounds doable. I will write it down tonight.",
    ];
    let expert_lines = [
        "That is a common experience. Let us look at what happens right before it.",
        "You are noticing an important pattern. Small adjustments often matter most here.",
        "One option is to plan ahead for that moment. A short checklist can help.",
        "Consider how this practice fits your routine. We can adapt it together.",
        "A realistic goal is better than a perfect one. Start where you feel confident.",
        "You have a clear plan now. Check in with yourself after the first week.",
    ];
    let mut turns = Vec::new();
    let mut i = 0usize;
    for (phase, &n) in phases.iter().zip(&counts) {
        for _ in 0..n {
            let (role, text) = if i % 2 == 0 {
                ("learner", learner_lines.choose(rng).unwrap().to_string())
            } else {
                let base = expert_lines.choose(rng).unwrap();
                let text = if *phase == "planning" && !practice.is_empty() {
                    format!("{base} The key practice is this: {practice}")
                } else {
                    base.to_string()
                };
                ("expert", text)
            };
            turns.push(json!({"role": role, "phase": phase, "text": text}));
            i += 1;
        }
    }
    json!({ "turns": turns }).to_string()
}

fn parse_exam(user: &str) -> (String, Vec<(char, String)>) {
    let scenario = user.split("\n\nQuestion:").next().unwrap_or("").to_string();
    let body = between(user, "\n\nOptions:\n", "\n\nSelect the correct answer.");
    let options = body
        .lines()
        .filter_map(|l| {
            let mut c = l.chars();
            let label = c.next()?;
            (label.is_ascii_uppercase() && c.next() == Some('.')).then(|| (label, l[2..].trim().to_string()))
        })
        .collect();
    (scenario, options)
}
