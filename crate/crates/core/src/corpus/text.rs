//! Text normalisation, word counting, and content hashing shared by the
//! validators and the corpus invariants.

use sha2::{Digest, Sha256};

/// Whitespace-delimited tokens after trimming. Hyphenated compounds are a
/// single token, as are numbers with units glued on ("2-cup").
pub fn word_count(text: &str) -> usize {
    text.split_whitespace().count()
}

/// Lowercase, collapse whitespace, and strip punctuation from both edges of
/// every token. Used before hashing so cosmetic regeneration differences do
/// not defeat duplicate detection.
pub fn normalize_for_hash(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    for token in text.split_whitespace() {
        let lowered = token.to_lowercase();
        let stripped = lowered.trim_matches(|c: char| !c.is_alphanumeric());
        if stripped.is_empty() {
            continue;
        }
        if !out.is_empty() {
            out.push(' ');
        }
        out.push_str(stripped);
    }
    out
}

/// Hex SHA-256 of the normalised text.
pub fn content_hash(text: &str) -> String {
    let digest = Sha256::digest(normalize_for_hash(text).as_bytes());
    hex::encode(digest)
}

/// Field normalisation for 5W equality: lowercase, collapse whitespace,
/// strip trailing punctuation.
pub fn normalize_field(text: &str) -> String {
    let collapsed = text
        .split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
        .to_lowercase();
    collapsed
        .trim_end_matches(|c: char| c.is_ascii_punctuation())
        .trim_end()
        .to_string()
}

/// Sentence count for dialogue validation: terminal `.`, `!` or `?`
/// followed by whitespace (or end of text) closes a sentence.
pub fn sentence_count(text: &str) -> usize {
    let trimmed = text.trim();
    if trimmed.is_empty() {
        return 0;
    }
    let chars: Vec<char> = trimmed.chars().collect();
    let mut count = 0;
    let mut in_sentence = false;
    for (i, c) in chars.iter().enumerate() {
        if !c.is_whitespace() {
            in_sentence = true;
        }
        if matches!(c, '.' | '!' | '?') {
            let next = chars.get(i + 1);
            if next.is_none_or(|n| n.is_whitespace()) && in_sentence {
                count += 1;
                in_sentence = false;
            }
        }
    }
    if in_sentence {
        // trailing text without terminal punctuation still counts
        let tail_has_word = chars.iter().rev().take_while(|c| !matches!(c, '.' | '!' | '?')).any(|c| c.is_alphanumeric());
        if tail_has_word {
            count += 1;
        }
    }
    count
}
