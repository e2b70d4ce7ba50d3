//! Language identification and the LID-to-metadata language mapping that
//! yields the merged metadata dictionary `M`.

mod mapping;
mod profile;

use std::collections::{BTreeSet, HashMap};
use std::fs;
use std::path::Path;
use std::sync::Arc;

use crate::corpus::AltTextRecord;
use crate::metadata::LanguageCode;
use crate::{Error, Result};

pub use mapping::{
    build_language_mapping, default_aliases, merge_metadata_by_mapping, read_alias_table,
    LanguageMapping, MergedMetadata, MetadataManifest, METADATA_MANIFEST,
};
pub use profile::{CharProfile, ProfileClassifier, PROFILE_SUFFIX};

/// A language classifier. Implementations must be shareable across threads
/// for concurrent read-only classification.
pub trait LanguageIdentifier: Send + Sync {
    /// Top language and a confidence in `[0, 1]`. Returns `other` with
    /// confidence 0 when there is no evidence.
    fn identify(&self, text: &str) -> Result<(LanguageCode, f64)>;

    fn supported_langs(&self) -> BTreeSet<LanguageCode>;
}

pub fn identify_language(
    text: &str,
    model: &dyn LanguageIdentifier,
) -> Result<(LanguageCode, f64)> {
    model.identify(text)
}

/// Labels produced offline by an external LID model, keyed by record id.
/// File format: `record_id<TAB>lang<TAB>confidence`, one per line.
#[derive(Debug, Clone, Default)]
pub struct LabelTable {
    labels: HashMap<String, (LanguageCode, f64)>,
}

impl LabelTable {
    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut labels = HashMap::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let err = |message: String| Error::Parse {
                path: path.to_path_buf(),
                line: i + 1,
                message,
            };
            let mut parts = line.split('\t');
            let (Some(id), Some(lang), conf) = (parts.next(), parts.next(), parts.next()) else {
                return Err(err("expected `record_id<TAB>lang[<TAB>confidence]`".into()));
            };
            let lang = LanguageCode::new(lang).map_err(|e| err(e.to_string()))?;
            let conf: f64 = match conf {
                Some(c) => c
                    .parse()
                    .map_err(|_| err(format!("bad confidence `{c}`")))?,
                None => 1.0,
            };
            if !(0.0..=1.0).contains(&conf) {
                return Err(err(format!("confidence {conf} outside [0, 1]")));
            }
            labels.insert(id.to_owned(), (lang, conf));
        }
        Ok(Self { labels })
    }

    pub fn insert(&mut self, record_id: impl Into<String>, lang: LanguageCode, confidence: f64) {
        self.labels.insert(record_id.into(), (lang, confidence));
    }

    pub fn get(&self, record_id: &str) -> Option<&(LanguageCode, f64)> {
        self.labels.get(record_id)
    }
}

/// Where record languages come from during the LID stage.
#[derive(Clone)]
pub enum LidSource {
    Model(Arc<dyn LanguageIdentifier>),
    Labels(Arc<LabelTable>),
    /// Records already carry `lang`; the stage only validates.
    Preassigned,
}

/// Assigns `record.lang`. Predictions outside `known` (the keys of `M`) or
/// below `confidence_floor` become `other`; records are never dropped.
pub fn assign_language(
    record: &mut AltTextRecord,
    source: &LidSource,
    known: &BTreeSet<LanguageCode>,
    confidence_floor: f64,
) -> Result<()> {
    let (lang, conf) = match source {
        LidSource::Model(model) => model.identify(&record.text)?,
        LidSource::Labels(table) => table.get(&record.record_id).cloned().ok_or_else(|| {
            Error::validation(format!("no LID label for record `{}`", record.record_id))
        })?,
        LidSource::Preassigned => {
            let lang = record.lang.clone().ok_or_else(|| {
                Error::validation(format!("record `{}` has no lang", record.record_id))
            })?;
            (lang, 1.0)
        }
    };
    let lang = if conf < confidence_floor || !known.contains(&lang) {
        LanguageCode::other()
    } else {
        lang
    };
    record.lang = Some(lang);
    Ok(())
}
