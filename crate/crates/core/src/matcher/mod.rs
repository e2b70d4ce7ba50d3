//! Substring matching of alt-texts against per-language metadata.
//!
//! [`PatternAutomaton`] is an Aho-Corasick automaton over Unicode scalar
//! values; [`brute_force_match`] is the direct containment check it must
//! agree with; [`AutomatonCache`] compiles each language lazily, at most
//! once per process.

mod automaton;
mod cache;

use serde::{Deserialize, Serialize};

use crate::metadata::MetadataEntrySet;
use crate::text::normalize;
use crate::Result;

pub use automaton::PatternAutomaton;
pub use cache::{AutomatonCache, EntryLoader};

/// Substring containment by default. `WordBoundary` additionally requires
/// the characters around an occurrence to be non-alphanumeric.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MatchMode {
    #[default]
    Substring,
    WordBoundary,
}

fn is_word_char(c: char) -> bool {
    c.is_alphanumeric() || c == '_'
}

pub(crate) fn at_word_boundary(chars: &[char], start: usize, end: usize) -> bool {
    let before = start == 0 || !is_word_char(chars[start - 1]);
    let after = end == chars.len() || !is_word_char(chars[end]);
    before && after
}

pub fn compile_automaton(entries: &MetadataEntrySet, mode: MatchMode) -> Result<PatternAutomaton> {
    PatternAutomaton::compile(entries, mode)
}

/// Entry ids whose pattern occurs in `normalize(text)`, ascending and unique.
pub fn substr_match(text: &str, automaton: &PatternAutomaton) -> Vec<u32> {
    automaton.find_ids_normalized(&normalize(text))
}

/// Reference matcher: tests every entry against the normalized text.
pub fn brute_force_match(text: &str, entries: &MetadataEntrySet, mode: MatchMode) -> Vec<u32> {
    brute_force_patterns(text, entries.entries(), mode)
}

pub fn brute_force_patterns(text: &str, patterns: &[String], mode: MatchMode) -> Vec<u32> {
    let norm = normalize(text);
    let chars: Vec<char> = match mode {
        MatchMode::Substring => Vec::new(),
        MatchMode::WordBoundary => norm.chars().collect(),
    };
    patterns
        .iter()
        .enumerate()
        .filter(|(_, p)| match mode {
            MatchMode::Substring => !p.is_empty() && norm.contains(p.as_str()),
            MatchMode::WordBoundary => occurs_at_boundary(&norm, &chars, p),
        })
        .map(|(i, _)| i as u32)
        .collect()
}

fn occurs_at_boundary(norm: &str, chars: &[char], pattern: &str) -> bool {
    if pattern.is_empty() {
        return false;
    }
    let plen = pattern.chars().count();
    let mut from = 0;
    while let Some(pos) = norm[from..].find(pattern) {
        let byte = from + pos;
        let start = norm[..byte].chars().count();
        if at_word_boundary(chars, start, start + plen) {
            return true;
        }
        from = byte + norm[byte..].chars().next().map_or(1, char::len_utf8);
    }
    false
}
