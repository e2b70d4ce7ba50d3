//! Standalone stages. Every stage reads and writes files only, so the CLI
//! subcommands and [`super::run_pipeline`] share these functions and a
//! pipeline can be resumed from any intermediate directory.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::balancing::{
    compute_thresholds, curate_shard, MappedProbabilities, ThresholdOptions, ThresholdTable,
};
use crate::corpus::{
    list_shards, read_jsonl, read_shard, write_jsonl, write_shard, CuratedRecord, ShardFormat,
};
use crate::counting::{count_shard, persist_counts, CountStore, EntryCountTable};
use crate::dedup::{
    apply_exclusions, build_projection, dedup_against_benchmark, read_embeddings, read_hash_file,
    sign_hash, BenchmarkIndex,
};
use crate::lid::{assign_language, LidSource, MergedMetadata};
use crate::matcher::{AutomatonCache, MatchMode};
use crate::metadata::hex;
use crate::rng::DrawStream;
use crate::{Error, LanguageCode, Result};

/// One input shard. `shard_id` is the position of `name` in the sorted list.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ShardInput {
    pub shard_id: u32,
    pub name: String,
    pub path: PathBuf,
}

/// Expands directories to their `*.jsonl` files and assigns shard ids by
/// file name, so ids are independent of the order inputs were given in.
pub fn shard_inputs(paths: &[PathBuf]) -> Result<Vec<ShardInput>> {
    let mut files = Vec::new();
    for p in paths {
        if p.is_dir() {
            files.extend(list_shards(p)?);
        } else {
            files.push(p.clone());
        }
    }
    let mut named: Vec<(String, PathBuf)> = files
        .into_iter()
        .map(|p| {
            let name = p
                .file_name()
                .and_then(|n| n.to_str())
                .ok_or_else(|| {
                    Error::validation(format!("{}: not a shard file name", p.display()))
                })?
                .to_owned();
            Ok((name, p))
        })
        .collect::<Result<_>>()?;
    named.sort();
    if let Some(w) = named.windows(2).find(|w| w[0].0 == w[1].0) {
        return Err(Error::validation(format!(
            "two input shards are named `{}`",
            w[0].0
        )));
    }
    let count = u32::try_from(named.len()).map_err(|_| Error::validation("too many shards"))?;
    Ok((0..count)
        .zip(named)
        .map(|(shard_id, (name, path))| ShardInput {
            shard_id,
            name,
            path,
        })
        .collect())
}

/// Record counts for one stage. `extra` holds stage-specific counters.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageReport {
    pub stage: String,
    pub records_in: u64,
    pub records_out: u64,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub extra: BTreeMap<String, u64>,
}

impl StageReport {
    fn new(stage: &str) -> Self {
        Self {
            stage: stage.to_owned(),
            records_in: 0,
            records_out: 0,
            extra: BTreeMap::new(),
        }
    }

    fn absorb(&mut self, other: StageReport) {
        self.records_in += other.records_in;
        self.records_out += other.records_out;
        for (k, v) in other.extra {
            *self.extra.entry(k).or_default() += v;
        }
    }
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

/// Runs `f` on every shard in parallel and sums the reports in shard order.
fn per_shard<F>(stage: &'static str, inputs: &[ShardInput], f: F) -> Result<StageReport>
where
    F: Fn(&ShardInput) -> Result<StageReport> + Sync,
{
    let parts: Vec<StageReport> = inputs
        .par_iter()
        .map(|s| f(s).map_err(|e| e.in_stage(stage, Some(&s.name))))
        .collect::<Result<_>>()?;
    let mut total = StageReport::new(stage);
    parts.into_iter().for_each(|p| total.absorb(p));
    Ok(total)
}

/// Assigns `lang` to every record; predictions outside `known` go to `other`.
pub fn stage_lid(
    inputs: &[ShardInput],
    out_dir: &Path,
    source: &LidSource,
    known: &BTreeSet<LanguageCode>,
    confidence_floor: f64,
) -> Result<StageReport> {
    create_dir(out_dir).map_err(|e| e.in_stage("lid", None))?;
    per_shard("lid", inputs, |s| {
        let mut shard = read_shard(&s.path, s.shard_id, ShardFormat::Jsonl)?;
        let mut other = 0;
        for rec in &mut shard.records {
            assign_language(rec, source, known, confidence_floor)?;
            other += rec.lang.as_ref().is_some_and(LanguageCode::is_other) as u64;
        }
        write_shard(&shard, &out_dir.join(&s.name))?;
        let n = shard.records.len() as u64;
        Ok(StageReport {
            stage: "lid".into(),
            records_in: n,
            records_out: n,
            extra: [("other".to_owned(), other)].into(),
        })
    })
}

/// Digest of a count table: language codes, lengths and little-endian values.
pub fn counts_hash(table: &EntryCountTable) -> String {
    let mut h = Sha256::new();
    for (lang, counts) in table.iter() {
        h.update(lang.as_str().as_bytes());
        h.update((counts.len() as u64).to_le_bytes());
        for c in counts {
            h.update(c.to_le_bytes());
        }
    }
    hex(&h.finalize())
}

pub struct MatchCountOutput {
    pub table: EntryCountTable,
    pub report: StageReport,
}

/// Stage 1: annotates matches per record and persists merged global counts.
/// Every language of `M` gets a count file, even if no record reached it.
pub fn stage_match_count(
    metadata: &MergedMetadata,
    inputs: &[ShardInput],
    out_shards: &Path,
    out_counts: &Path,
    mode: MatchMode,
    automaton_cache: Option<&Path>,
) -> Result<MatchCountOutput> {
    const STAGE: &str = "match-count";
    create_dir(out_shards).map_err(|e| e.in_stage(STAGE, None))?;
    let mut cache = AutomatonCache::from_sets(Arc::new(metadata.sets.clone()), mode);
    if let Some(dir) = automaton_cache {
        create_dir(dir).map_err(|e| e.in_stage(STAGE, None))?;
        cache = cache.with_disk_cache(dir);
    }
    let known: BTreeSet<LanguageCode> = metadata.sets.keys().cloned().collect();
    let mut partials: Vec<(u32, EntryCountTable, StageReport)> = inputs
        .par_iter()
        .map(|s| {
            let run = || {
                let shard = read_shard(&s.path, s.shard_id, ShardFormat::Jsonl)?;
                let (shard, partial) = count_shard(shard, &known, &cache)?;
                write_shard(&shard, &out_shards.join(&s.name))?;
                let n = shard.records.len() as u64;
                let matched = shard
                    .records
                    .iter()
                    .filter(|r| {
                        r.matched_entry_ids
                            .as_ref()
                            .is_some_and(|ids| !ids.is_empty())
                    })
                    .count() as u64;
                let report = StageReport {
                    stage: STAGE.into(),
                    records_in: n,
                    records_out: n,
                    extra: [("matched".to_owned(), matched)].into(),
                };
                Ok((s.shard_id, partial, report))
            };
            run().map_err(|e: Error| e.in_stage(STAGE, Some(&s.name)))
        })
        .collect::<Result<_>>()?;
    partials.sort_by_key(|(id, ..)| *id);

    let mut table = EntryCountTable::zeros(metadata.sets.iter().map(|(l, s)| (l.clone(), s.len())));
    let mut report = StageReport::new(STAGE);
    for (_, partial, r) in partials {
        table
            .merge_from(&partial)
            .map_err(|e| e.in_stage(STAGE, None))?;
        report.absorb(r);
    }
    persist_counts(&table, out_counts, &metadata.hash(), report.records_in)
        .map_err(|e| e.in_stage(STAGE, None))?;
    Ok(MatchCountOutput { table, report })
}

pub fn write_thresholds(table: &ThresholdTable, path: &Path) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        create_dir(parent)?;
    }
    let json = serde_json::to_string_pretty(table).expect("thresholds serialize");
    fs::write(path, json + "\n").map_err(|e| Error::io(path, e))
}

pub fn read_thresholds(path: &Path) -> Result<ThresholdTable> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        line: e.line(),
        message: e.to_string(),
    })
}

/// Stage 2: `p` from English, `t` for every language, written as JSON.
pub fn stage_thresholds(
    counts_dir: &Path,
    t_en: u64,
    options: ThresholdOptions,
    out: &Path,
) -> Result<ThresholdTable> {
    let run = || {
        let store = CountStore::open(counts_dir, None)?;
        let table = compute_thresholds(&store, t_en, store.metadata_hash(), options)?;
        write_thresholds(&table, out)?;
        Ok(table)
    };
    run().map_err(|e: Error| e.in_stage("thresholds", None))
}

/// Stage 3: per-shard sampling. Output shards keep input names and record order.
pub fn stage_curate(
    inputs: &[ShardInput],
    thresholds: &ThresholdTable,
    counts_dir: &Path,
    seed: u64,
    out_dir: &Path,
) -> Result<StageReport> {
    const STAGE: &str = "curate";
    let setup = || {
        create_dir(out_dir)?;
        let store = CountStore::open(counts_dir, Some(&thresholds.metadata_hash))?;
        MappedProbabilities::new(&store, thresholds)
    };
    let probs = setup().map_err(|e| e.in_stage(STAGE, None))?;
    let draws = DrawStream::new(seed);
    per_shard(STAGE, inputs, |s| {
        let shard = read_shard(&s.path, s.shard_id, ShardFormat::Jsonl)?;
        let curated = curate_shard(&shard, &probs, &draws)?;
        write_jsonl(&out_dir.join(&s.name), &curated)?;
        Ok(StageReport {
            stage: STAGE.into(),
            records_in: shard.records.len() as u64,
            records_out: curated.len() as u64,
            extra: BTreeMap::new(),
        })
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DedupSettings {
    /// Embedding file covering the curated records.
    pub embeddings: PathBuf,
    /// Raw `u64` sign hashes of the evaluation benchmark.
    pub benchmark_hashes: PathBuf,
    #[serde(default)]
    pub radius: u32,
    /// Optional id-per-line list of records to drop (external safety filters).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub exclusions: Option<PathBuf>,
}

pub fn read_id_list(path: &Path) -> Result<HashSet<String>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .map(str::to_owned)
        .collect())
}

/// Benchmark-overlap removal, then the exclusion list. The projection is
/// seeded by `seed` and sized from the embedding file.
pub fn stage_dedup(
    inputs: &[ShardInput],
    settings: &DedupSettings,
    seed: u64,
    out_dir: &Path,
) -> Result<StageReport> {
    const STAGE: &str = "dedup";
    let setup = || -> Result<_> {
        create_dir(out_dir)?;
        let embeddings = read_embeddings(&settings.embeddings)?;
        let dim = embeddings.first().map_or(1, |e| e.vector.len());
        let projection = build_projection(dim, seed)?;
        let hashes: HashMap<String, _> = embeddings
            .par_iter()
            .map(|e| sign_hash(&e.vector, &projection).map(|h| (e.record_id.clone(), h)))
            .collect::<Result<_>>()?;
        let bench = BenchmarkIndex::new(read_hash_file(&settings.benchmark_hashes)?);
        let excluded = match &settings.exclusions {
            Some(p) => read_id_list(p)?,
            None => HashSet::new(),
        };
        Ok((hashes, bench, excluded))
    };
    let (hashes, bench, excluded) = setup().map_err(|e| e.in_stage(STAGE, None))?;
    per_shard(STAGE, inputs, |s| {
        let curated: Vec<CuratedRecord> = read_jsonl(&s.path)?;
        let n = curated.len() as u64;
        let out = dedup_against_benchmark(curated, &hashes, &bench, settings.radius);
        let mut kept = out.kept;
        let excluded_n = apply_exclusions(&mut kept, &excluded);
        write_jsonl(&out_dir.join(&s.name), &kept)?;
        Ok(StageReport {
            stage: STAGE.into(),
            records_in: n,
            records_out: kept.len() as u64,
            extra: [
                ("benchmark_overlap".to_owned(), out.removed as u64),
                ("excluded".to_owned(), excluded_n as u64),
                ("unhashed".to_owned(), out.unhashed as u64),
            ]
            .into(),
        })
    })
}

/// SHA-256 of a file's bytes.
pub fn file_sha256(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(hex(&Sha256::digest(&bytes)))
}

/// SHA-256 over the sorted file names and contents of a directory's files.
pub fn dir_sha256(dir: &Path) -> Result<String> {
    let mut files = Vec::new();
    for entry in fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        if path.is_file() {
            files.push(path);
        }
    }
    files.sort();
    let mut h = Sha256::new();
    for f in files {
        h.update(f.file_name().unwrap().as_encoded_bytes());
        h.update([0]);
        h.update(fs::read(&f).map_err(|e| Error::io(&f, e))?);
    }
    Ok(hex(&h.finalize()))
}
