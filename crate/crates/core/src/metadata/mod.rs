//! Per-language metadata: the visual-concept entry lists that alt-texts are
//! matched against, built from lexicon synsets, corpus unigrams and bigrams,
//! and traffic-ranked page titles.

mod io;
mod ngram;

use std::collections::{BTreeMap, HashMap};
use std::fmt;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::text::normalize;
use crate::{Error, Result};

pub use io::{
    ingest_lexicon, ingest_lexicon_bytes, read_catalog, read_entry_set, write_entry_set,
    ENTRIES_SUFFIX, META_SUFFIX,
};
pub use ngram::{
    count_ngrams, rank_titles, special_tokenizer, tokenize, NgramCounter, Segmenter,
    TokenizerRegistry, WhitespaceSegmenter, SPECIAL_TOKENIZERS,
};

/// Lowercase language key matching `[a-z_]{2,20}`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct LanguageCode(String);

impl LanguageCode {
    pub const OTHER: &'static str = "other";

    pub fn new(code: impl Into<String>) -> Result<Self> {
        let code = code.into();
        let ok = (2..=20).contains(&code.len())
            && code.bytes().all(|b| b.is_ascii_lowercase() || b == b'_');
        if ok {
            Ok(Self(code))
        } else {
            Err(Error::validation(format!("invalid language code `{code}`")))
        }
    }

    pub fn other() -> Self {
        Self(Self::OTHER.to_owned())
    }

    pub fn is_other(&self) -> bool {
        self.0 == Self::OTHER
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl TryFrom<String> for LanguageCode {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        Self::new(s)
    }
}

impl From<LanguageCode> for String {
    fn from(c: LanguageCode) -> String {
        c.0
    }
}

impl fmt::Display for LanguageCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::str::FromStr for LanguageCode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Self::new(s)
    }
}

/// Which of the four sources contributed an entry.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Hash)]
pub struct SourceTags(u8);

impl SourceTags {
    pub const LEXICON: SourceTags = SourceTags(1);
    pub const UNIGRAM: SourceTags = SourceTags(2);
    pub const BIGRAM: SourceTags = SourceTags(4);
    pub const TITLE: SourceTags = SourceTags(8);

    const NAMES: [(SourceTags, &'static str); 4] = [
        (Self::LEXICON, "lexicon"),
        (Self::UNIGRAM, "unigram"),
        (Self::BIGRAM, "bigram"),
        (Self::TITLE, "title"),
    ];

    pub const fn empty() -> Self {
        SourceTags(0)
    }

    pub fn contains(self, other: SourceTags) -> bool {
        self.0 & other.0 == other.0
    }

    pub fn insert(&mut self, other: SourceTags) {
        self.0 |= other.0;
    }

    pub fn union(self, other: SourceTags) -> SourceTags {
        SourceTags(self.0 | other.0)
    }

    pub fn parse(s: &str) -> Result<Self> {
        let mut tags = Self::empty();
        for part in s.split('|').filter(|p| !p.is_empty()) {
            let (tag, _) = Self::NAMES
                .iter()
                .find(|(_, name)| *name == part)
                .ok_or_else(|| Error::validation(format!("unknown source tag `{part}`")))?;
            tags.insert(*tag);
        }
        Ok(tags)
    }
}

impl fmt::Display for SourceTags {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut first = true;
        for (tag, name) in Self::NAMES {
            if self.contains(tag) {
                if !first {
                    f.write_str("|")?;
                }
                f.write_str(name)?;
                first = false;
            }
        }
        Ok(())
    }
}

/// Ordered, deduplicated entries for one language. An entry's position is its
/// id everywhere downstream (automata, count vectors, probabilities).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MetadataEntrySet {
    pub lang: LanguageCode,
    entries: Vec<String>,
    source_tags: Vec<SourceTags>,
}

impl MetadataEntrySet {
    pub fn empty(lang: LanguageCode) -> Self {
        Self {
            lang,
            entries: Vec::new(),
            source_tags: Vec::new(),
        }
    }

    /// Wraps already-normalized entries. Rejects empty and duplicate strings.
    pub fn new(
        lang: LanguageCode,
        entries: Vec<String>,
        source_tags: Vec<SourceTags>,
    ) -> Result<Self> {
        if entries.len() != source_tags.len() {
            return Err(Error::validation(format!(
                "{lang}: {} entries but {} source tag rows",
                entries.len(),
                source_tags.len()
            )));
        }
        let mut seen = std::collections::HashSet::with_capacity(entries.len());
        for (i, e) in entries.iter().enumerate() {
            if e.is_empty() {
                return Err(Error::validation(format!("{lang}: entry {i} is empty")));
            }
            if !seen.insert(e.as_str()) {
                return Err(Error::validation(format!("{lang}: duplicate entry `{e}`")));
            }
        }
        Ok(Self {
            lang,
            entries,
            source_tags,
        })
    }

    pub fn from_entries<I, S>(lang: LanguageCode, entries: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let entries: Vec<String> = entries.into_iter().map(Into::into).collect();
        let tags = vec![SourceTags::empty(); entries.len()];
        Self::new(lang, entries, tags)
    }

    pub fn entries(&self) -> &[String] {
        &self.entries
    }

    pub fn source_tags(&self) -> &[SourceTags] {
        &self.source_tags
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// SHA-256 over the language key and the entry list, hex encoded.
    pub fn content_hash(&self) -> String {
        let mut h = Sha256::new();
        h.update(self.lang.as_str().as_bytes());
        h.update([0]);
        for e in &self.entries {
            h.update(e.as_bytes());
            h.update(b"\n");
        }
        hex(&h.finalize())
    }
}

pub(crate) fn hex(bytes: &[u8]) -> String {
    use std::fmt::Write;
    bytes
        .iter()
        .fold(String::with_capacity(bytes.len() * 2), |mut s, b| {
            let _ = write!(s, "{b:02x}");
            s
        })
}

/// Hash of a whole catalog, stable under map iteration order.
pub fn catalog_hash(catalog: &BTreeMap<LanguageCode, MetadataEntrySet>) -> String {
    let mut h = Sha256::new();
    for set in catalog.values() {
        h.update(set.content_hash().as_bytes());
    }
    hex(&h.finalize())
}

/// Per-source caps; `None` means unbounded.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SourceCaps {
    pub unigram: Option<usize>,
    pub bigram: Option<usize>,
    pub title: Option<usize>,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct MetadataSources<'a> {
    pub lexicon: &'a [String],
    pub unigrams: Option<&'a NgramCounter>,
    pub bigrams: Option<&'a NgramCounter>,
    /// Already ranked, most-trafficked first.
    pub titles: &'a [String],
}

/// Unions the four sources for `lang` in the order lexicon, unigrams,
/// bigrams, titles. First occurrence fixes an entry's position; later
/// occurrences only add source tags.
pub fn build_metadata(
    lang: &LanguageCode,
    sources: &MetadataSources<'_>,
    caps: &SourceCaps,
) -> Result<MetadataEntrySet> {
    for (counter, n) in [(sources.unigrams, 1), (sources.bigrams, 2)] {
        if let Some(c) = counter {
            if &c.lang != lang {
                return Err(Error::validation(format!(
                    "{n}-gram counter is for `{}` but metadata is for `{lang}`",
                    c.lang
                )));
            }
            if c.n != n {
                return Err(Error::validation(format!(
                    "expected a {n}-gram counter, got n={}",
                    c.n
                )));
            }
        }
    }

    let mut index: HashMap<String, usize> = HashMap::new();
    let mut entries = Vec::new();
    let mut tags: Vec<SourceTags> = Vec::new();
    let mut add = |raw: &str, tag: SourceTags| {
        let norm = normalize(raw);
        if norm.is_empty() {
            return;
        }
        match index.get(&norm) {
            Some(&i) => tags[i].insert(tag),
            None => {
                index.insert(norm.clone(), entries.len());
                entries.push(norm);
                tags.push(tag);
            }
        }
    };

    for e in sources.lexicon {
        add(e, SourceTags::LEXICON);
    }
    if let Some(c) = sources.unigrams {
        for (gram, _) in c.top(caps.unigram) {
            add(gram, SourceTags::UNIGRAM);
        }
    }
    if let Some(c) = sources.bigrams {
        for (gram, _) in c.top(caps.bigram) {
            add(gram, SourceTags::BIGRAM);
        }
    }
    let title_cap = caps.title.unwrap_or(usize::MAX);
    for t in sources.titles.iter().take(title_cap) {
        add(t, SourceTags::TITLE);
    }

    MetadataEntrySet::new(lang.clone(), entries, tags)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn en() -> LanguageCode {
        LanguageCode::new("en").unwrap()
    }

    #[test]
    fn language_code_shape() {
        assert!(LanguageCode::new("en").is_ok());
        assert!(LanguageCode::new("zh_classical").is_ok());
        assert!(LanguageCode::new("other").is_ok());
        for bad in ["", "e", "EN", "zh-yue", "a_very_long_language_code", "en1"] {
            assert!(LanguageCode::new(bad).is_err(), "{bad}");
        }
        let parsed: std::result::Result<LanguageCode, _> = serde_json::from_str("\"Fr\"");
        assert!(parsed.is_err());
    }

    #[test]
    fn source_tags_text_round_trip() {
        let t = SourceTags::LEXICON.union(SourceTags::TITLE);
        assert_eq!(t.to_string(), "lexicon|title");
        assert_eq!(SourceTags::parse("lexicon|title").unwrap(), t);
        assert_eq!(SourceTags::parse("").unwrap(), SourceTags::empty());
        assert!(SourceTags::parse("wordnet").is_err());
    }

    #[test]
    fn lexicon_plus_capped_unigrams() {
        let mut uni = NgramCounter::new(en(), 1).unwrap();
        uni.add("cat", 10);
        uni.add("sat", 3);
        let bi = NgramCounter::new(en(), 2).unwrap();
        let lexicon = vec!["cat".to_owned()];
        let set = build_metadata(
            &en(),
            &MetadataSources {
                lexicon: &lexicon,
                unigrams: Some(&uni),
                bigrams: Some(&bi),
                titles: &[],
            },
            &SourceCaps {
                unigram: Some(1),
                bigram: Some(0),
                title: None,
            },
        )
        .unwrap();
        assert_eq!(set.entries(), ["cat"]);
        assert_eq!(
            set.source_tags()[0],
            SourceTags::LEXICON.union(SourceTags::UNIGRAM)
        );
    }

    #[test]
    fn all_sources_empty() {
        let set =
            build_metadata(&en(), &MetadataSources::default(), &SourceCaps::default()).unwrap();
        assert!(set.is_empty());
    }

    #[test]
    fn source_order_and_normalized_dedup() {
        let mut uni = NgramCounter::new(en(), 1).unwrap();
        uni.add("dog", 5);
        uni.add("Cat", 5);
        let mut bi = NgramCounter::new(en(), 2).unwrap();
        bi.add("hot dog", 2);
        let lexicon = vec!["Zebra".to_owned(), "zebra ".to_owned()];
        let titles = vec!["Hot  Dog".to_owned(), "Paris".to_owned()];
        let set = build_metadata(
            &en(),
            &MetadataSources {
                lexicon: &lexicon,
                unigrams: Some(&uni),
                bigrams: Some(&bi),
                titles: &titles,
            },
            &SourceCaps::default(),
        )
        .unwrap();
        // unigram tie at 5 broken lexicographically: cat before dog
        assert_eq!(set.entries(), ["zebra", "cat", "dog", "hot dog", "paris"]);
        assert_eq!(
            set.source_tags()[3],
            SourceTags::BIGRAM.union(SourceTags::TITLE)
        );
    }

    #[test]
    fn mismatched_counter_language_rejected() {
        let de = LanguageCode::new("de").unwrap();
        let uni = NgramCounter::new(de, 1).unwrap();
        let err = build_metadata(
            &en(),
            &MetadataSources {
                unigrams: Some(&uni),
                ..Default::default()
            },
            &SourceCaps::default(),
        );
        assert!(matches!(err, Err(Error::Validation(_))));
    }

    #[test]
    fn entry_set_rejects_duplicates_and_empties() {
        assert!(MetadataEntrySet::from_entries(en(), ["a", "a"]).is_err());
        assert!(MetadataEntrySet::from_entries(en(), ["a", ""]).is_err());
    }

    #[test]
    fn identical_inputs_identical_hash() {
        let a = MetadataEntrySet::from_entries(en(), ["x", "y"]).unwrap();
        let b = MetadataEntrySet::from_entries(en(), ["x", "y"]).unwrap();
        let c = MetadataEntrySet::from_entries(en(), ["y", "x"]).unwrap();
        assert_eq!(a.content_hash(), b.content_hash());
        assert_ne!(a.content_hash(), c.content_hash());
    }
}
