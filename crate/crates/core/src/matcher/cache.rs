use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};

use once_cell::sync::OnceCell;

use super::{MatchMode, PatternAutomaton};
use crate::metadata::{read_entry_set, LanguageCode, MetadataEntrySet};
use crate::{Error, Result};

pub type EntryLoader = dyn Fn(&LanguageCode) -> Result<MetadataEntrySet> + Send + Sync;

type Slot = Arc<OnceCell<Arc<PatternAutomaton>>>;

/// Lazily compiled automata, one per language. Compilation is single-flight
/// per language; concurrent lookups for other languages proceed.
pub struct AutomatonCache {
    loader: Box<EntryLoader>,
    mode: MatchMode,
    disk_dir: Option<PathBuf>,
    slots: Mutex<HashMap<LanguageCode, Slot>>,
    compiled: Mutex<HashMap<LanguageCode, usize>>,
    disk_loads: AtomicUsize,
}

impl AutomatonCache {
    pub fn new<F>(loader: F, mode: MatchMode) -> Self
    where
        F: Fn(&LanguageCode) -> Result<MetadataEntrySet> + Send + Sync + 'static,
    {
        Self {
            loader: Box::new(loader),
            mode,
            disk_dir: None,
            slots: Mutex::new(HashMap::new()),
            compiled: Mutex::new(HashMap::new()),
            disk_loads: AtomicUsize::new(0),
        }
    }

    /// Serves languages from an in-memory `M`.
    pub fn from_sets(sets: Arc<BTreeMap<LanguageCode, MetadataEntrySet>>, mode: MatchMode) -> Self {
        Self::new(
            move |lang| {
                sets.get(lang)
                    .cloned()
                    .ok_or_else(|| Error::validation(format!("no metadata for language `{lang}`")))
            },
            mode,
        )
    }

    /// Reads `<lang>.entries.txt` from `dir` on first use.
    pub fn from_dir(dir: impl Into<PathBuf>, mode: MatchMode) -> Self {
        let dir = dir.into();
        Self::new(move |lang| read_entry_set(&dir, lang), mode)
    }

    /// Persist compiled automata under `dir`, keyed by language and entry
    /// content hash, and reuse them across processes.
    pub fn with_disk_cache(mut self, dir: impl Into<PathBuf>) -> Self {
        self.disk_dir = Some(dir.into());
        self
    }

    pub fn mode(&self) -> MatchMode {
        self.mode
    }

    pub fn get_or_compile(&self, lang: &LanguageCode) -> Result<Arc<PatternAutomaton>> {
        let slot = {
            let mut slots = self.slots.lock().unwrap();
            slots.entry(lang.clone()).or_default().clone()
        };
        slot.get_or_try_init(|| self.build(lang).map(Arc::new))
            .cloned()
    }

    fn build(&self, lang: &LanguageCode) -> Result<PatternAutomaton> {
        let set = (self.loader)(lang)?;
        let hash = set.content_hash();
        let disk_path = self.disk_dir.as_ref().map(|d| {
            d.join(format!(
                "{lang}-{}-{}.wcac",
                &hash[..16],
                mode_tag(self.mode)
            ))
        });
        if let Some(path) = disk_path.as_deref().filter(|p| p.exists()) {
            if let Ok(a) = PatternAutomaton::read_from(path) {
                if a.content_hash() == hash && a.mode() == self.mode && a.lang() == lang {
                    self.disk_loads.fetch_add(1, Ordering::Relaxed);
                    return Ok(a);
                }
            }
        }
        let a = PatternAutomaton::compile(&set, self.mode)?;
        *self
            .compiled
            .lock()
            .unwrap()
            .entry(lang.clone())
            .or_insert(0) += 1;
        if let Some(path) = disk_path {
            write_atomically(&a, &path)?;
        }
        Ok(a)
    }

    /// Number of in-process compilations for `lang`.
    pub fn compilations(&self, lang: &LanguageCode) -> usize {
        self.compiled
            .lock()
            .unwrap()
            .get(lang)
            .copied()
            .unwrap_or(0)
    }

    pub fn total_compilations(&self) -> usize {
        self.compiled.lock().unwrap().values().sum()
    }

    pub fn disk_loads(&self) -> usize {
        self.disk_loads.load(Ordering::Relaxed)
    }
}

fn mode_tag(mode: MatchMode) -> &'static str {
    match mode {
        MatchMode::Substring => "sub",
        MatchMode::WordBoundary => "word",
    }
}

fn write_atomically(a: &PatternAutomaton, path: &Path) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let tmp = path.with_extension(format!("tmp{}", std::process::id()));
    a.write_to(&tmp)?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}
