//! Rule-based entity extraction.

use std::sync::OnceLock;

use regex::Regex;

fn quoted_pattern() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r#""([^"]+)"|\u{201C}([^\u{201D}]+)\u{201D}"#).expect("static regex"))
}

fn is_apostrophe(c: char) -> bool {
    c == '\'' || c == '\u{2019}'
}

/// A whitespace token split into (leading symbols stripped?, core, trailing
/// symbols stripped?). The core has apostrophes removed, matching `clean`.
fn split_token(raw: &str) -> (bool, String, bool) {
    let trimmed_start = raw.trim_start_matches(|c: char| !c.is_alphanumeric());
    let core = trimmed_start.trim_end_matches(|c: char| !c.is_alphanumeric());
    let lead = trimmed_start.len() != raw.len();
    let trail = core.len() != trimmed_start.len();
    (lead, core.chars().filter(|&c| !is_apostrophe(c)).collect(), trail)
}

fn is_capitalized_word(core: &str) -> bool {
    let mut chars = core.chars();
    matches!(chars.next(), Some(c) if c.is_uppercase()) && core.chars().all(char::is_alphanumeric)
}

/// Maximal runs of capitalized words plus quoted phrases, deduplicated, in
/// order of first appearance. A run ends at any symbol attached to a word
/// (so "Paris, France" gives two entities).
pub fn extract_entities(claim: &str) -> Vec<String> {
    let mut found: Vec<(usize, String)> = Vec::new();

    for cap in quoted_pattern().captures_iter(claim) {
        let m = cap.get(1).or_else(|| cap.get(2)).expect("one group matches");
        let phrase = m.as_str().trim();
        if phrase.chars().any(char::is_alphanumeric) {
            found.push((m.start(), phrase.to_string()));
        }
    }

    let mut span: Vec<String> = Vec::new();
    let mut span_start = 0;
    let close = |span: &mut Vec<String>, start: usize, found: &mut Vec<(usize, String)>| {
        if !span.is_empty() {
            found.push((start, span.join(" ")));
            span.clear();
        }
    };
    let mut offset = 0;
    for raw in claim.split_whitespace() {
        let pos = offset + claim[offset..].find(raw).expect("token from the same string");
        offset = pos + raw.len();
        let (lead, core, trail) = split_token(raw);
        if is_capitalized_word(&core) {
            if lead {
                close(&mut span, span_start, &mut found);
            }
            if span.is_empty() {
                span_start = pos;
            }
            span.push(core);
            if trail {
                close(&mut span, span_start, &mut found);
            }
        } else {
            close(&mut span, span_start, &mut found);
        }
    }
    close(&mut span, span_start, &mut found);

    found.sort_by_key(|(pos, _)| *pos);
    let mut out: Vec<String> = Vec::new();
    for (_, e) in found {
        if !out.contains(&e) {
            out.push(e);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn examples() {
        assert_eq!(extract_entities("Paris attack kills 12"), vec!["Paris"]);
        assert_eq!(extract_entities("\"blue moon\" happens tonight"), vec!["blue moon"]);
        assert!(extract_entities("nothing capitalized here").is_empty());
    }

    #[test]
    fn spans_and_breaks() {
        assert_eq!(
            extract_entities("Police in New York City say Paris, France is safe"),
            vec!["Police", "New York City", "Paris", "France"]
        );
        assert_eq!(extract_entities("Obama's visit to Obamas"), vec!["Obamas"]);
        assert_eq!(extract_entities("\"Big Ben\" Big Ben"), vec!["Big Ben"]);
        assert_eq!(extract_entities("“Curly Quote” here"), vec!["Curly Quote"]);
    }
}
