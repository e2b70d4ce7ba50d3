//! Orchestration of the full recipe: LID, match-count, thresholds, curate
//! and dedup, each a file-to-file stage, plus run manifests, CSV reports and
//! the training-scale planner.
//!
//! Output layout of [`run_pipeline`] under `out`:
//!
//! ```text
//! lid/            shards with `lang` assigned
//! annotated/      shards with `matched_entry_ids`
//! counts/         <lang>.counts.u64le + counts.manifest.json
//! thresholds.json
//! curated/        sampled records, one file per input shard
//! deduped/        after benchmark-overlap removal (when configured)
//! reports/        CSV statistics
//! manifest.json
//! ```

mod plan;
mod report;
mod stages;

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::balancing::ThresholdOptions;
use crate::corpus::{read_jsonl, CuratedRecord};
use crate::counting::CountStore;
use crate::lid::{LabelTable, LidSource, MergedMetadata, ProfileClassifier};
use crate::matcher::MatchMode;
use crate::{Error, LanguageCode, Result};

pub use plan::{plan_training, TrainingPlan};
pub use report::{report_stats, tail_rows, TailRow};
pub use stages::{
    counts_hash, dir_sha256, file_sha256, read_id_list, read_thresholds, shard_inputs,
    stage_curate, stage_dedup, stage_lid, stage_match_count, stage_thresholds, write_thresholds,
    DedupSettings, MatchCountOutput, ShardInput, StageReport,
};

pub const WORKERS_ENV: &str = "WORLDCURATE_WORKERS";
pub const RUN_MANIFEST: &str = "manifest.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LidMode {
    /// Character n-gram profiles from a directory of `<lang>.profile.tsv`.
    Profiles,
    /// Precomputed `record_id<TAB>lang[<TAB>confidence]` labels.
    Labels,
    /// Records already carry `lang`.
    #[default]
    Preassigned,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LidConfig {
    #[serde(default)]
    pub mode: LidMode,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<PathBuf>,
    #[serde(default)]
    pub confidence_floor: f64,
}

impl LidConfig {
    pub fn source(&self) -> Result<LidSource> {
        let path = || {
            self.path
                .as_deref()
                .ok_or_else(|| Error::validation(format!("lid mode {:?} needs a path", self.mode)))
        };
        Ok(match self.mode {
            LidMode::Profiles => LidSource::Model(Arc::new(ProfileClassifier::from_dir(path()?)?)),
            LidMode::Labels => LidSource::Labels(Arc::new(LabelTable::read(path()?)?)),
            LidMode::Preassigned => LidSource::Preassigned,
        })
    }

    fn digest(&self) -> Result<Option<String>> {
        match (&self.path, self.mode) {
            (_, LidMode::Preassigned) | (None, _) => Ok(None),
            (Some(p), LidMode::Profiles) => dir_sha256(p).map(Some),
            (Some(p), LidMode::Labels) => file_sha256(p).map(Some),
        }
    }
}

/// The declarative run description, usually a TOML file. Relative paths
/// are resolved against the file's directory by [`PipelineConfig::load`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    /// Merged metadata directory, as written by `merge-metadata`.
    pub metadata: PathBuf,
    /// Shard files or directories of `*.jsonl` shards.
    pub inputs: Vec<PathBuf>,
    pub out: PathBuf,
    pub t_en: u64,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub workers: Option<usize>,
    #[serde(default)]
    pub match_mode: MatchMode,
    #[serde(default)]
    pub lid: LidConfig,
    #[serde(default)]
    pub thresholds: ThresholdOptions,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dedup: Option<DedupSettings>,
    /// Directory for compiled automata reused across runs.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub automaton_cache: Option<PathBuf>,
}

impl PipelineConfig {
    pub fn from_toml(text: &str, base: &Path) -> Result<Self> {
        let mut cfg: PipelineConfig = toml::from_str(text)
            .map_err(|e| Error::validation(format!("config: {}", e.message())))?;
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut cfg.metadata);
        fix(&mut cfg.out);
        cfg.inputs.iter_mut().for_each(fix);
        if let Some(p) = cfg.lid.path.as_mut() {
            fix(p);
        }
        if let Some(d) = cfg.dedup.as_mut() {
            fix(&mut d.embeddings);
            fix(&mut d.benchmark_hashes);
            if let Some(p) = d.exclusions.as_mut() {
                fix(p);
            }
        }
        if let Some(p) = cfg.automaton_cache.as_mut() {
            fix(p);
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text, path.parent().unwrap_or(Path::new(".")))
    }
}

/// Requested worker count (or all cores), capped by `WORLDCURATE_WORKERS`.
pub fn worker_count(requested: Option<usize>) -> Result<usize> {
    let mut n =
        requested.unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    if let Ok(cap) = std::env::var(WORKERS_ENV) {
        let cap: usize = cap.trim().parse().map_err(|_| {
            Error::validation(format!(
                "{WORKERS_ENV} must be a positive integer, got `{cap}`"
            ))
        })?;
        n = n.min(cap);
    }
    Ok(n.max(1))
}

/// Runs `f` on a dedicated pool of [`worker_count`] threads.
pub fn with_workers<T: Send>(requested: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(worker_count(requested)?)
        .build()
        .map_err(|e| Error::Invariant(format!("cannot start worker pool: {e}")))?;
    Ok(pool.install(f))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileDigest {
    pub name: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DedupSnapshot {
    pub radius: u32,
    pub embeddings_sha256: String,
    pub benchmark_sha256: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub exclusions_sha256: Option<String>,
}

/// Every setting that affects output bytes. Paths and worker counts are
/// left out: they do not change results.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfigSnapshot {
    pub lid_mode: LidMode,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lid_source_sha256: Option<String>,
    pub confidence_floor: f64,
    pub match_mode: MatchMode,
    pub t_en: u64,
    pub seed: u64,
    #[serde(flatten)]
    pub thresholds: ThresholdOptions,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dedup: Option<DedupSnapshot>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub tool_version: String,
    pub complete: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failed_stage: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub config: ConfigSnapshot,
    pub inputs: Vec<FileDigest>,
    pub metadata_hash: Option<String>,
    pub counts_hash: Option<String>,
    pub total_records: Option<u64>,
    pub t_en: u64,
    pub p: Option<f64>,
    pub per_lang_t: BTreeMap<LanguageCode, u64>,
    pub seed: u64,
    pub stages: Vec<StageReport>,
    pub outputs: Vec<FileDigest>,
}

impl RunManifest {
    fn started(config: &PipelineConfig) -> Self {
        Self {
            tool: "worldcurate".into(),
            tool_version: env!("CARGO_PKG_VERSION").into(),
            complete: false,
            failed_stage: None,
            error: None,
            config: ConfigSnapshot {
                lid_mode: config.lid.mode,
                lid_source_sha256: None,
                confidence_floor: config.lid.confidence_floor,
                match_mode: config.match_mode,
                t_en: config.t_en,
                seed: config.seed,
                thresholds: config.thresholds,
                dedup: None,
            },
            inputs: Vec::new(),
            metadata_hash: None,
            counts_hash: None,
            total_records: None,
            t_en: config.t_en,
            p: None,
            per_lang_t: BTreeMap::new(),
            seed: config.seed,
            stages: Vec::new(),
            outputs: Vec::new(),
        }
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: e.line(),
            message: e.to_string(),
        })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let json = serde_json::to_string_pretty(self).expect("manifest serializes");
        fs::write(path, json + "\n").map_err(|e| Error::io(path, e))
    }
}

const STAGE_DIRS: [&str; 6] = [
    "lid",
    "annotated",
    "counts",
    "curated",
    "deduped",
    "reports",
];

/// The same shards, read from `dir` (output of the previous stage).
fn relocate(inputs: &[ShardInput], dir: &Path) -> Vec<ShardInput> {
    inputs
        .iter()
        .map(|s| ShardInput {
            path: dir.join(&s.name),
            ..s.clone()
        })
        .collect()
}

fn digests(inputs: &[ShardInput]) -> Result<Vec<FileDigest>> {
    inputs
        .iter()
        .map(|s| {
            Ok(FileDigest {
                name: s.name.clone(),
                sha256: file_sha256(&s.path)?,
            })
        })
        .collect()
}

/// Annotated records per language, for the size report.
pub fn language_sizes(inputs: &[ShardInput]) -> Result<BTreeMap<LanguageCode, u64>> {
    let mut out = BTreeMap::new();
    for s in inputs {
        for rec in read_jsonl::<crate::corpus::AltTextRecord>(&s.path)? {
            if let Some(lang) = rec.lang {
                *out.entry(lang).or_default() += 1;
            }
        }
    }
    Ok(out)
}

pub fn read_curated(inputs: &[ShardInput]) -> Result<Vec<CuratedRecord>> {
    let mut out = Vec::new();
    for s in inputs {
        out.extend(read_jsonl::<CuratedRecord>(&s.path)?);
    }
    Ok(out)
}

fn execute(config: &PipelineConfig, m: &mut RunManifest) -> Result<()> {
    let out = &config.out;
    let setup = |m: &mut RunManifest| -> Result<_> {
        fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
        for d in STAGE_DIRS {
            let p = out.join(d);
            if p.exists() {
                fs::remove_dir_all(&p).map_err(|e| Error::io(&p, e))?;
            }
        }
        let metadata = MergedMetadata::read(&config.metadata)?;
        m.metadata_hash = Some(metadata.hash());
        let inputs = shard_inputs(&config.inputs)?;
        m.inputs = digests(&inputs)?;
        m.config.lid_source_sha256 = config.lid.digest()?;
        if let Some(d) = &config.dedup {
            m.config.dedup = Some(DedupSnapshot {
                radius: d.radius,
                embeddings_sha256: file_sha256(&d.embeddings)?,
                benchmark_sha256: file_sha256(&d.benchmark_hashes)?,
                exclusions_sha256: d.exclusions.as_deref().map(file_sha256).transpose()?,
            });
        }
        Ok((metadata, inputs))
    };
    let (metadata, inputs) = setup(m).map_err(|e| e.in_stage("setup", None))?;

    let source = config.lid.source().map_err(|e| e.in_stage("lid", None))?;
    let known = metadata.sets.keys().cloned().collect();
    let lid_dir = out.join("lid");
    m.stages.push(stage_lid(
        &inputs,
        &lid_dir,
        &source,
        &known,
        config.lid.confidence_floor,
    )?);

    let annotated_dir = out.join("annotated");
    let counts_dir = out.join("counts");
    let mc = stage_match_count(
        &metadata,
        &relocate(&inputs, &lid_dir),
        &annotated_dir,
        &counts_dir,
        config.match_mode,
        config.automaton_cache.as_deref(),
    )?;
    m.counts_hash = Some(counts_hash(&mc.table));
    m.total_records = Some(mc.report.records_in);
    m.stages.push(mc.report);

    let thresholds = stage_thresholds(
        &counts_dir,
        config.t_en,
        config.thresholds,
        &out.join("thresholds.json"),
    )?;
    m.p = Some(thresholds.p);
    m.per_lang_t = thresholds.per_lang_t.clone();

    let annotated = relocate(&inputs, &annotated_dir);
    let curated_dir = out.join("curated");
    m.stages.push(stage_curate(
        &annotated,
        &thresholds,
        &counts_dir,
        config.seed,
        &curated_dir,
    )?);
    let curated = relocate(&inputs, &curated_dir);

    let report = || -> Result<()> {
        let store = CountStore::open(&counts_dir, Some(&thresholds.metadata_hash))?;
        report_stats(
            &store,
            &thresholds,
            &language_sizes(&annotated)?,
            &read_curated(&curated)?,
            &out.join("reports"),
        )?;
        Ok(())
    };
    report().map_err(|e| e.in_stage("stats", None))?;

    let final_shards = match &config.dedup {
        Some(settings) => {
            let dir = out.join("deduped");
            m.stages
                .push(stage_dedup(&curated, settings, config.seed, &dir)?);
            relocate(&inputs, &dir)
        }
        None => curated,
    };
    m.outputs = digests(&final_shards)?;
    Ok(())
}

/// Runs every stage in order on a pool of `config.workers` threads and
/// writes `manifest.json`. On failure the manifest is still written, with
/// `complete: false` and the failing stage, and the error is returned.
pub fn run_pipeline(config: &PipelineConfig) -> Result<RunManifest> {
    with_workers(config.workers, || {
        let mut m = RunManifest::started(config);
        let result = execute(config, &mut m);
        match &result {
            Ok(()) => m.complete = true,
            Err(e) => {
                if let Error::Stage { stage, .. } = e {
                    m.failed_stage = Some((*stage).to_owned());
                }
                m.error = Some(e.to_string());
            }
        }
        let written = fs::create_dir_all(&config.out)
            .map_err(|e| Error::io(&config.out, e))
            .and_then(|_| m.write(&config.out.join(RUN_MANIFEST)));
        result?;
        written?;
        Ok(m)
    })?
}
