use std::collections::HashSet;

const STOPWORDS: &[&str] = &[
    "a", "about", "after", "among", "an", "and", "are", "as", "at", "be", "between", "by", "during", "effect",
    "effects", "for", "from", "how", "in", "into", "is", "its", "of", "on", "or", "role", "roles", "that", "the",
    "their", "these", "this", "those", "through", "to", "via", "what", "which", "with", "within",
];

fn push_unique(out: &mut Vec<String>, seen: &mut HashSet<String>, term: &str) {
    if seen.insert(term.to_lowercase()) {
        out.push(term.to_string());
    }
}

/// Content words of a research topic, in order, without stopwords or
/// case-insensitive repeats.
pub fn topic_keywords(topic: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut seen = HashSet::new();
    for raw in topic.split(|c: char| c.is_whitespace() || ",;:()[]{}\"".contains(c)) {
        let t = raw.trim_matches(|c: char| !c.is_alphanumeric());
        if t.chars().count() < 2 || STOPWORDS.contains(&t.to_lowercase().as_str()) {
            continue;
        }
        push_unique(&mut out, &mut seen, t);
    }
    out
}

/// Entity-like tokens of a statement: gene and protein symbols such as
/// `GPR153`, `YAP1` or `CEBPB`, found by capitalisation and digits.
/// Hyphenated and slashed compounds are split first.
pub fn entity_terms(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut seen = HashSet::new();
    for raw in text.split(|c: char| c.is_whitespace() || ",;:()[]{}\"/-".contains(c)) {
        let t = raw.trim_matches(|c: char| !c.is_alphanumeric());
        if t.is_empty() {
            continue;
        }
        let upper = t.chars().filter(char::is_ascii_uppercase).count();
        let digit = t.chars().any(|c| c.is_ascii_digit());
        let alpha = t.chars().any(char::is_alphabetic);
        if alpha && (upper >= 2 || (digit && upper >= 1)) {
            push_unique(&mut out, &mut seen, t);
        }
    }
    out
}
