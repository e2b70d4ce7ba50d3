use std::collections::HashMap;
use std::sync::Arc;

use once_cell::sync::Lazy;
use regex::Regex;

use super::LanguageCode;
use crate::text::normalize;
use crate::{Error, Result};

/// Wiki codes whose corpora are written without word spacing, with the
/// community tokenizer each one expects.
pub const SPECIAL_TOKENIZERS: &[(&str, &str)] = &[
    ("bo", "Tibetan Tokenizer"),
    ("dz", "Tibetan Tokenizer"),
    ("ja", "Japanese Tokenizer"),
    ("ryu", "Japanese Tokenizer"),
    ("km", "Khmer Tokenizer"),
    ("lo", "Lao Tokenizer"),
    ("my", "Myanmar Tokenizer"),
    ("th", "Thai Tokenizer"),
    ("zh", "Chinese Tokenizer"),
    ("zh_classical", "Chinese Tokenizer"),
    ("zh_yue", "Chinese Tokenizer"),
];

pub fn special_tokenizer(lang: &LanguageCode) -> Option<&'static str> {
    SPECIAL_TOKENIZERS
        .iter()
        .find(|(code, _)| *code == lang.as_str())
        .map(|(_, name)| *name)
}

/// A word segmenter for one language.
pub trait Segmenter: Send + Sync {
    fn segment(&self, text: &str) -> std::result::Result<Vec<String>, String>;
}

impl<F> Segmenter for F
where
    F: Fn(&str) -> std::result::Result<Vec<String>, String> + Send + Sync,
{
    fn segment(&self, text: &str) -> std::result::Result<Vec<String>, String> {
        self(text)
    }
}

/// Splits on whitespace only. Register it for a special language whose corpus
/// was segmented upstream by an external tokenizer.
#[derive(Debug, Clone, Copy, Default)]
pub struct WhitespaceSegmenter;

impl Segmenter for WhitespaceSegmenter {
    fn segment(&self, text: &str) -> std::result::Result<Vec<String>, String> {
        Ok(text.split_whitespace().map(str::to_owned).collect())
    }
}

#[derive(Clone, Default)]
pub struct TokenizerRegistry {
    segmenters: HashMap<LanguageCode, Arc<dyn Segmenter>>,
}

impl TokenizerRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn register(&mut self, lang: LanguageCode, segmenter: Arc<dyn Segmenter>) -> &mut Self {
        self.segmenters.insert(lang, segmenter);
        self
    }

    pub fn get(&self, lang: &LanguageCode) -> Option<&Arc<dyn Segmenter>> {
        self.segmenters.get(lang)
    }
}

impl std::fmt::Debug for TokenizerRegistry {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let mut langs: Vec<_> = self.segmenters.keys().map(LanguageCode::as_str).collect();
        langs.sort_unstable();
        f.debug_struct("TokenizerRegistry")
            .field("langs", &langs)
            .finish()
    }
}

static SEPARATORS: Lazy<Regex> = Lazy::new(|| Regex::new(r"[\s\p{P}]+").unwrap());

/// Splits `text` into words. Registered languages delegate to their
/// segmenter; a special language without a registration is an error rather
/// than a silent whitespace split.
pub fn tokenize(
    text: &str,
    lang: &LanguageCode,
    registry: &TokenizerRegistry,
) -> Result<Vec<String>> {
    if let Some(seg) = registry.get(lang) {
        return seg
            .segment(text)
            .map(|toks| toks.into_iter().filter(|t| !t.is_empty()).collect())
            .map_err(|message| Error::Segmenter {
                lang: lang.to_string(),
                message,
            });
    }
    if let Some(name) = special_tokenizer(lang) {
        return Err(Error::Segmenter {
            lang: lang.to_string(),
            message: format!("no segmenter registered (expects a {name})"),
        });
    }
    Ok(SEPARATORS
        .split(text)
        .filter(|t| !t.is_empty())
        .map(str::to_owned)
        .collect())
}

/// Occurrence counts of normalized n-token windows (n is 1 or 2). Bigram
/// keys are the two tokens joined by one space.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NgramCounter {
    pub lang: LanguageCode,
    pub n: u8,
    counts: HashMap<String, u64>,
}

impl NgramCounter {
    pub fn new(lang: LanguageCode, n: u8) -> Result<Self> {
        if !(1..=2).contains(&n) {
            return Err(Error::validation(format!(
                "n-gram order must be 1 or 2, got {n}"
            )));
        }
        Ok(Self {
            lang,
            n,
            counts: HashMap::new(),
        })
    }

    pub fn add(&mut self, gram: &str, count: u64) {
        if count > 0 {
            *self.counts.entry(gram.to_owned()).or_insert(0) += count;
        }
    }

    pub fn get(&self, gram: &str) -> u64 {
        self.counts.get(gram).copied().unwrap_or(0)
    }

    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    pub fn total(&self) -> u64 {
        self.counts.values().sum()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, u64)> {
        self.counts.iter().map(|(k, v)| (k.as_str(), *v))
    }

    /// Sums `other` into `self`.
    pub fn merge(&mut self, other: &NgramCounter) -> Result<()> {
        if self.lang != other.lang || self.n != other.n {
            return Err(Error::validation(format!(
                "cannot merge {}-gram/{} into {}-gram/{}",
                other.n, other.lang, self.n, self.lang
            )));
        }
        for (k, v) in &other.counts {
            *self.counts.entry(k.clone()).or_insert(0) += v;
        }
        Ok(())
    }

    /// Highest counts first, ties by ascending gram; at most `cap` items.
    pub fn top(&self, cap: Option<usize>) -> Vec<(&str, u64)> {
        let mut all: Vec<(&str, u64)> = self.iter().collect();
        all.sort_unstable_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
        if let Some(cap) = cap {
            all.truncate(cap);
        }
        all
    }
}

/// Counts n-token windows over `docs`. Each document is normalized before
/// tokenizing, and windows never cross a document boundary.
pub fn count_ngrams<I, S>(
    docs: I,
    lang: &LanguageCode,
    n: u8,
    registry: &TokenizerRegistry,
) -> Result<NgramCounter>
where
    I: IntoIterator<Item = S>,
    S: AsRef<str>,
{
    let mut counter = NgramCounter::new(lang.clone(), n)?;
    for doc in docs {
        let tokens = tokenize(&normalize(doc.as_ref()), lang, registry)?;
        match n {
            1 => {
                for t in &tokens {
                    counter.add(t, 1);
                }
            }
            _ => {
                for w in tokens.windows(2) {
                    counter.add(&format!("{} {}", w[0], w[1]), 1);
                }
            }
        }
    }
    Ok(counter)
}

/// Merges duplicate titles by summing clicks, then sorts by descending
/// clicks with ascending title as the tie-break.
pub fn rank_titles<I, S>(title_traffic: I) -> Vec<String>
where
    I: IntoIterator<Item = (S, u64)>,
    S: Into<String>,
{
    let mut totals: HashMap<String, u64> = HashMap::new();
    for (title, clicks) in title_traffic {
        *totals.entry(title.into()).or_insert(0) += clicks;
    }
    let mut ranked: Vec<(String, u64)> = totals.into_iter().collect();
    ranked.sort_unstable_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    ranked.into_iter().map(|(t, _)| t).collect()
}
