//! Blocked-phrase lists with word-boundary matching.

use std::path::Path;

use regex::Regex;

const DEFAULT_LIST: &str = include_str!("../../data/blocked_keywords.txt");

/// Case-insensitive phrase list. A phrase matches only when it is bounded by
/// non-word characters (letters, digits and apostrophes count as word
/// characters), so `support` blocks "support" but not "supportive".
#[derive(Debug, Clone)]
pub struct KeywordList {
    phrases: Vec<String>,
    patterns: Vec<Regex>,
}

impl KeywordList {
    pub fn new<I, S>(phrases: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let phrases: Vec<String> = phrases
            .into_iter()
            .map(|p| normalize_apostrophes(&p.into()).trim().to_lowercase())
            .filter(|p| !p.is_empty())
            .collect();
        let patterns = phrases
            .iter()
            .map(|p| {
                let body = p
                    .split_whitespace()
                    .map(regex::escape)
                    .collect::<Vec<_>>()
                    .join(r"\s+");
                Regex::new(&format!(r"(?i)(?:^|[^\p{{L}}\p{{N}}']){body}(?:$|[^\p{{L}}\p{{N}}'])"))
                    .expect("escaped phrase is a valid pattern")
            })
            .collect();
        Self { phrases, patterns }
    }

    /// Parses one phrase per line; blank lines and `#` comments are skipped.
    pub fn parse(source: &str) -> Self {
        Self::new(
            source
                .lines()
                .map(str::trim)
                .filter(|l| !l.is_empty() && !l.starts_with('#')),
        )
    }

    pub fn from_file(path: &Path) -> std::io::Result<Self> {
        Ok(Self::parse(&std::fs::read_to_string(path)?))
    }

    /// The shipped list seeded from the expert-curated leakage examples.
    pub fn default_list() -> Self {
        Self::parse(DEFAULT_LIST)
    }

    pub fn phrases(&self) -> &[String] {
        &self.phrases
    }

    pub fn is_empty(&self) -> bool {
        self.phrases.is_empty()
    }

    /// Every listed phrase occurring in `text`, in list order.
    pub fn matches(&self, text: &str) -> Vec<&str> {
        let text = normalize_apostrophes(text);
        self.phrases
            .iter()
            .zip(&self.patterns)
            .filter(|(_, re)| re.is_match(&text))
            .map(|(p, _)| p.as_str())
            .collect()
    }
}

impl Default for KeywordList {
    fn default() -> Self {
        Self::default_list()
    }
}

fn normalize_apostrophes(s: &str) -> String {
    s.replace(['\u{2019}', '\u{2018}'], "'")
}
