// SPDX-License-Identifier: Apache-2.0
//! Lexical helpers shared by routing, retrieval and the guidance registry.
//!
//! Matching is ASCII case-folded. A single-word keyword matches only at word
//! boundaries (so `cache` does not hit `scache`); a multi-word keyword matches
//! as a case-folded substring of the text.

use std::collections::BTreeSet;

/// Words ignored when building retrieval queries.
const STOP_WORDS: &[&str] = &[
    "the", "and", "for", "with", "that", "this", "from", "into", "are", "was", "were", "will",
    "shall", "should", "must", "have", "has", "had", "not", "but", "all", "any", "each", "when",
    "then", "than", "which", "what", "where", "who", "whose", "its", "it's", "been", "being",
    "can", "could", "would", "may", "might", "also", "only", "such", "use", "using", "used",
    "implement", "module", "design", "create", "write", "given", "following", "below", "above",
    "one", "two", "there", "their", "them", "they", "these", "those", "you", "your", "our",
];

fn is_word_char(c: char) -> bool {
    c.is_ascii_alphanumeric() || c == '_'
}

/// Returns true when `keyword` occurs in `text` under the matching rules above.
pub fn contains_keyword(text: &str, keyword: &str) -> bool {
    let kw = keyword.trim().to_ascii_lowercase();
    if kw.is_empty() {
        return false;
    }
    let hay = text.to_ascii_lowercase();
    if kw.contains(char::is_whitespace) {
        return hay.contains(&kw);
    }
    let mut start = 0;
    while let Some(pos) = hay[start..].find(&kw) {
        let at = start + pos;
        let end = at + kw.len();
        let before_ok = hay[..at].chars().next_back().is_none_or(|c| !is_word_char(c));
        let after_ok = hay[end..].chars().next().is_none_or(|c| !is_word_char(c));
        if before_ok && after_ok {
            return true;
        }
        start = at + hay[at..].chars().next().map_or(1, char::len_utf8);
    }
    false
}

/// Lower-cased alphanumeric words of `text`, in order, duplicates kept.
pub fn words(text: &str) -> impl Iterator<Item = String> + '_ {
    text.split(|c: char| !is_word_char(c))
        .filter(|w| !w.is_empty())
        .map(|w| w.to_ascii_lowercase())
}

/// Distinct content words: stop words removed, length at least three.
pub fn content_words(text: &str) -> BTreeSet<String> {
    words(text)
        .filter(|w| w.len() >= 3 && !STOP_WORDS.contains(&w.as_str()))
        .collect()
}

/// True when `name` is a legal (non-escaped) Verilog identifier.
pub fn is_identifier(name: &str) -> bool {
    let mut chars = name.chars();
    match chars.next() {
        Some(c) if c.is_ascii_alphabetic() || c == '_' => {}
        _ => return false,
    }
    chars.all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '$')
        && !crate::verilog::is_reserved(name)
}

/// 64-bit FNV-1a. Stable across platforms and releases, which the
/// standard library hasher is not.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0xcbf2_9ce4_8422_2325u64, |h, b| (h ^ u64::from(*b)).wrapping_mul(0x0000_0100_0000_01b3))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_words_need_boundaries() {
        assert!(contains_keyword("a small Cache", "cache"));
        assert!(!contains_keyword("scache line", "cache"));
        assert!(contains_keyword("uart_tx and spi", "spi"));
        assert!(!contains_keyword("uart_tx", "uart"));
    }

    #[test]
    fn phrases_match_as_substrings() {
        assert!(contains_keyword("Given the Truth  Table", "truth table") == false);
        assert!(contains_keyword("Given the Truth Table", "truth table"));
        assert!(contains_keyword("from the following timing diagram:", "timing diagram"));
    }

    #[test]
    fn content_words_drop_short_and_stop_words() {
        let w = content_words("Implement the 4-bit up counter with an enable");
        assert!(w.contains("counter"));
        assert!(w.contains("enable"));
        assert!(!w.contains("the"));
        assert!(!w.contains("an"));
        assert!(!w.contains("implement"));
    }

    #[test]
    fn identifiers() {
        assert!(is_identifier("TopModule"));
        assert!(is_identifier("_x1$"));
        assert!(!is_identifier("1abc"));
        assert!(!is_identifier("module"));
        assert!(!is_identifier("a-b"));
        assert!(!is_identifier(""));
    }

    #[test]
    fn fnv_reference_values() {
        assert_eq!(fnv1a64(b""), 0xcbf29ce484222325);
        assert_eq!(fnv1a64(b"a"), 0xaf63dc4c8601ec8c);
    }
}
