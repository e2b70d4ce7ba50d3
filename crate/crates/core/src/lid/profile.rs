use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs;
use std::io::Write;
use std::path::Path;

use super::LanguageIdentifier;
use crate::metadata::LanguageCode;
use crate::text::normalize;
use crate::{Error, Result};

pub const PROFILE_SUFFIX: &str = ".profile.tsv";

const MAX_ORDER: usize = 3;

/// Character 1..=3-gram frequencies of space-padded normalized text.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CharProfile {
    grams: HashMap<String, u64>,
}

fn char_grams(text: &str, mut f: impl FnMut(&str)) {
    let padded: Vec<char> = format!(" {} ", normalize(text)).chars().collect();
    let mut buf = String::new();
    for n in 1..=MAX_ORDER {
        for w in padded.windows(n) {
            if w.iter().all(|c| *c == ' ') {
                continue;
            }
            buf.clear();
            buf.extend(w);
            f(&buf);
        }
    }
}

impl CharProfile {
    pub fn from_texts<I, S>(texts: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut p = Self::default();
        for t in texts {
            char_grams(t.as_ref(), |g| {
                *p.grams.entry(g.to_owned()).or_insert(0) += 1
            });
        }
        p
    }

    pub fn len(&self) -> usize {
        self.grams.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grams.is_empty()
    }

    /// `gram<TAB>count` lines, most frequent first.
    pub fn write(&self, path: &Path) -> Result<()> {
        let mut rows: Vec<_> = self.grams.iter().collect();
        rows.sort_unstable_by(|a, b| b.1.cmp(a.1).then_with(|| a.0.cmp(b.0)));
        let mut out = Vec::new();
        for (g, c) in rows {
            writeln!(out, "{g}\t{c}").unwrap();
        }
        fs::write(path, out).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut grams = HashMap::new();
        for (i, line) in text.lines().enumerate() {
            if line.is_empty() {
                continue;
            }
            let parsed = line
                .rsplit_once('\t')
                .and_then(|(g, c)| c.parse::<u64>().ok().map(|c| (g, c)));
            let Some((g, c)) = parsed else {
                return Err(Error::Parse {
                    path: path.to_path_buf(),
                    line: i + 1,
                    message: "expected `gram<TAB>count`".into(),
                });
            };
            grams.insert(g.to_owned(), c);
        }
        Ok(Self { grams })
    }
}

struct Scored {
    weights: HashMap<String, f64>,
    norm: f64,
}

/// Cosine similarity between the text's character n-gram vector and each
/// language profile. Confidence is the winner's share of the summed
/// similarities; ties go to the lexicographically first language.
pub struct ProfileClassifier {
    profiles: BTreeMap<LanguageCode, Scored>,
}

impl ProfileClassifier {
    pub fn new(profiles: BTreeMap<LanguageCode, CharProfile>) -> Result<Self> {
        if profiles.is_empty() {
            return Err(Error::validation(
                "LID model unavailable: no language profiles",
            ));
        }
        let profiles = profiles
            .into_iter()
            .map(|(lang, p)| {
                let weights: HashMap<String, f64> =
                    p.grams.into_iter().map(|(g, c)| (g, c as f64)).collect();
                let norm = weights.values().map(|w| w * w).sum::<f64>().sqrt();
                (lang, Scored { weights, norm })
            })
            .collect();
        Ok(Self { profiles })
    }

    /// Loads every `<lang>.profile.tsv` in `dir`.
    pub fn from_dir(dir: &Path) -> Result<Self> {
        let mut profiles = BTreeMap::new();
        let entries = fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
        for entry in entries {
            let entry = entry.map_err(|e| Error::io(dir, e))?;
            let name = entry.file_name();
            let Some(lang) = name.to_str().and_then(|n| n.strip_suffix(PROFILE_SUFFIX)) else {
                continue;
            };
            profiles.insert(LanguageCode::new(lang)?, CharProfile::read(&entry.path())?);
        }
        Self::new(profiles)
    }
}

impl LanguageIdentifier for ProfileClassifier {
    fn identify(&self, text: &str) -> Result<(LanguageCode, f64)> {
        let mut tf: HashMap<String, f64> = HashMap::new();
        char_grams(text, |g| *tf.entry(g.to_owned()).or_insert(0.0) += 1.0);
        let text_norm = tf.values().map(|w| w * w).sum::<f64>().sqrt();
        if text_norm == 0.0 {
            return Ok((LanguageCode::other(), 0.0));
        }

        let mut best: Option<(&LanguageCode, f64)> = None;
        let mut total = 0.0;
        for (lang, profile) in &self.profiles {
            if profile.norm == 0.0 {
                continue;
            }
            let dot: f64 = tf
                .iter()
                .filter_map(|(g, w)| profile.weights.get(g).map(|pw| w * pw))
                .sum();
            let sim = dot / (text_norm * profile.norm);
            total += sim;
            if best.is_none_or(|(_, s)| sim > s) {
                best = Some((lang, sim));
            }
        }
        match best {
            Some((lang, sim)) if sim > 0.0 => Ok((lang.clone(), (sim / total).clamp(0.0, 1.0))),
            _ => Ok((LanguageCode::other(), 0.0)),
        }
    }

    fn supported_langs(&self) -> BTreeSet<LanguageCode> {
        self.profiles.keys().cloned().collect()
    }
}
