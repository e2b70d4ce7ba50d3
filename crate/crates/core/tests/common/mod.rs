//! Deterministic synthetic corpora shared by the integration tests.
#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use rand_distr::StandardNormal;
use worldcurate_core::balancing::ThresholdOptions;
use worldcurate_core::corpus::{write_shard, AltTextRecord, Shard};
use worldcurate_core::dedup::{
    build_projection, sign_hash, write_embeddings, write_hash_file, EmbeddingRecord, Hash64,
};
use worldcurate_core::lid::CharProfile;
use worldcurate_core::lid::{build_language_mapping, MergedMetadata};
use worldcurate_core::matcher::MatchMode;
use worldcurate_core::metadata::MetadataEntrySet;
use worldcurate_core::pipeline::{DedupSettings, LidConfig, LidMode, PipelineConfig};
use worldcurate_core::LanguageCode;

pub const LATIN: &str = "abcdefghijklmnopqrstuvwxyz";
pub const CYRILLIC: &str = "абвгдежзийклмнопрстуфхцчшщыэюя";
pub const GREEK: &str = "αβγδεζηθικλμνξοπρστυφχψω";
pub const ARMENIAN: &str = "աբգդեզէըթժիլխծկհձղճմյնշոչպջռսվտրցւփքօֆ";
pub const GEORGIAN: &str = "აბგდევზთიკლმნოპჟრსტუფქღყშჩცძწჭხჯჰ";
pub const HEBREW: &str = "אבגדהוזחטיכלמנסעפצקרשת";

pub fn code(s: &str) -> LanguageCode {
    LanguageCode::new(s).unwrap()
}

#[derive(Debug, Clone, Copy)]
pub struct LangSpec {
    pub code: &'static str,
    pub alphabet: &'static str,
    /// Matched records (before noise).
    pub records: u64,
    pub entries: usize,
    pub zipf_s: f64,
}

/// `round(n * k^-s / Z)` for k = 1..=entries, at least 1 each.
pub fn zipf_counts(n: u64, entries: usize, s: f64) -> Vec<u64> {
    let z: f64 = (1..=entries).map(|k| (k as f64).powf(-s)).sum();
    (1..=entries)
        .map(|k| ((n as f64 * (k as f64).powf(-s) / z).round() as u64).max(1))
        .collect()
}

/// `n` distinct words of exactly `len` letters. Equal lengths mean no word
/// is a substring of another.
pub fn words(alphabet: &str, len: usize, n: usize, rng: &mut impl Rng) -> Vec<String> {
    let chars: Vec<char> = alphabet.chars().collect();
    let mut seen = BTreeSet::new();
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let w: String = (0..len)
            .map(|_| chars[rng.gen_range(0..chars.len())])
            .collect();
        if seen.insert(w.clone()) {
            out.push(w);
        }
    }
    out
}

pub struct Synthetic {
    pub catalog: BTreeMap<LanguageCode, MetadataEntrySet>,
    /// Designed per-entry counts, equal to what matching must find.
    pub counts: BTreeMap<LanguageCode, Vec<u64>>,
    pub records: Vec<AltTextRecord>,
    /// Sample texts per language for building LID profiles.
    pub samples: BTreeMap<LanguageCode, Vec<String>>,
}

/// Each matched record holds exactly one entry followed by digits, so
/// matching reproduces the designed Zipf counts exactly. `noise_per_20`
/// digit-only records per 20 matched ones match nothing.
pub fn zipf_corpus(specs: &[LangSpec], noise_per_20: u64, seed: u64, preassign: bool) -> Synthetic {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut catalog = BTreeMap::new();
    let mut counts = BTreeMap::new();
    let mut samples = BTreeMap::new();
    let mut records = Vec::new();
    for spec in specs {
        let lang = code(spec.code);
        let entries = words(spec.alphabet, 6, spec.entries, &mut rng);
        let c = zipf_counts(spec.records, spec.entries, spec.zipf_s);
        let mut i = 0u64;
        let mut push = |text: String, records: &mut Vec<AltTextRecord>| {
            let mut r = AltTextRecord::new(
                format!("{}-{i:08}", spec.code),
                format!("img/{}/{i}", spec.code),
                text,
            );
            if preassign {
                r = r.with_lang(lang.clone());
            }
            records.push(r);
            i += 1;
        };
        for (e, &n) in entries.iter().zip(&c) {
            for _ in 0..n {
                let tag: u32 = rng.gen();
                push(format!("{e} {tag}"), &mut records);
            }
        }
        let matched: u64 = c.iter().sum();
        for _ in 0..matched * noise_per_20 / 20 {
            let tag: u64 = rng.gen();
            push(format!("{tag}"), &mut records);
        }
        samples.insert(lang.clone(), entries.iter().take(50).cloned().collect());
        catalog.insert(
            lang.clone(),
            MetadataEntrySet::from_entries(lang.clone(), entries).unwrap(),
        );
        counts.insert(lang, c);
    }
    records.shuffle(&mut rng);
    Synthetic {
        catalog,
        counts,
        records,
        samples,
    }
}

/// Splits records round-robin into `n` shards.
pub fn split(records: &[AltTextRecord], n: usize) -> Vec<Shard> {
    let mut parts = vec![Vec::new(); n];
    for (i, r) in records.iter().enumerate() {
        parts[i % n].push(r.clone());
    }
    parts
        .into_iter()
        .enumerate()
        .map(|(i, r)| Shard::new(i as u32, r))
        .collect()
}

pub fn write_shards(records: &[AltTextRecord], n: usize, dir: &Path) {
    for s in split(records, n) {
        write_shard(&s, &dir.join(format!("part-{:03}.jsonl", s.shard_id))).unwrap();
    }
}

pub struct MixedCorpus {
    pub catalog: BTreeMap<LanguageCode, MetadataEntrySet>,
    pub profiles: BTreeMap<LanguageCode, CharProfile>,
    pub records: Vec<AltTextRecord>,
    /// Language each record was generated in.
    pub truth: BTreeMap<String, LanguageCode>,
}

/// Five LID languages in disjoint scripts plus `yi`, a metadata-only
/// language whose records the classifier cannot place. Records carry one
/// or two entries, short filler words and digits; no `lang` is set.
pub fn mixed_corpus(records_per_lang: usize, seed: u64) -> MixedCorpus {
    let langs = [
        ("en", LATIN, 60),
        ("ru", CYRILLIC, 50),
        ("el", GREEK, 40),
        ("hy", ARMENIAN, 35),
        ("ka", GEORGIAN, 30),
        ("yi", HEBREW, 20),
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut catalog = BTreeMap::new();
    let mut profiles = BTreeMap::new();
    let mut records = Vec::new();
    let mut truth = BTreeMap::new();
    for (li, (lang, alphabet, n_entries)) in langs.into_iter().enumerate() {
        let entries = words(alphabet, 5, n_entries, &mut rng);
        let fillers = words(alphabet, 2, 30, &mut rng);
        // Zipf weights over entries; smaller languages get fewer records
        let weights: Vec<f64> = (1..=n_entries).map(|k| (k as f64).powf(-1.1)).collect();
        let dist = rand::distributions::WeightedIndex::new(&weights).unwrap();
        let n_records = records_per_lang / (li + 1);
        for i in 0..n_records {
            let mut parts = vec![fillers[rng.gen_range(0..fillers.len())].clone()];
            let k = match rng.gen_range(0..10) {
                0 => 0,
                1..=2 => 2,
                _ => 1,
            };
            for _ in 0..k {
                parts.push(entries[rng.sample(&dist)].clone());
            }
            parts.push(fillers[rng.gen_range(0..fillers.len())].clone());
            parts.push(format!("{}", rng.gen_range(0..1000)));
            let id = format!("{lang}{i:06}");
            truth.insert(id.clone(), code(lang));
            records.push(AltTextRecord::new(
                id,
                format!("https://img.example/{lang}/{i}.jpg"),
                parts.join(" "),
            ));
        }
        if lang != "yi" {
            let sample: Vec<String> = entries.iter().chain(&fillers).cloned().collect();
            profiles.insert(code(lang), CharProfile::from_texts(&sample));
        }
        catalog.insert(
            code(lang),
            MetadataEntrySet::from_entries(code(lang), entries).unwrap(),
        );
    }
    records.shuffle(&mut rng);
    MixedCorpus {
        catalog,
        profiles,
        records,
        truth,
    }
}

/// Mixed-script corpus on disk: merged metadata, LID profiles, 7 shards,
/// 32-d embeddings and benchmark hashes of every 37th record.
pub struct E2eFixture {
    pub _dir: tempfile::TempDir,
    pub root: PathBuf,
    pub corpus: MixedCorpus,
}

pub fn e2e_fixture() -> E2eFixture {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path().to_path_buf();
    let corpus = mixed_corpus(2400, 11);
    let lid: BTreeSet<LanguageCode> = corpus.profiles.keys().cloned().collect();
    let meta_langs = corpus.catalog.keys().cloned().collect();
    let mapping = build_language_mapping(&lid, &meta_langs, &BTreeMap::new());
    let merged = MergedMetadata::build(&corpus.catalog, mapping).unwrap();
    fs::create_dir_all(root.join("metadata")).unwrap();
    merged.write(&root.join("metadata")).unwrap();
    fs::create_dir_all(root.join("profiles")).unwrap();
    for (lang, p) in &corpus.profiles {
        p.write(&root.join("profiles").join(format!("{lang}.profile.tsv")))
            .unwrap();
    }
    fs::create_dir_all(root.join("shards")).unwrap();
    write_shards(&corpus.records, 7, &root.join("shards"));

    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let emb: Vec<EmbeddingRecord> = corpus
        .records
        .iter()
        .map(|r| EmbeddingRecord {
            record_id: r.record_id.clone(),
            vector: (0..32)
                .map(|_| rng.sample::<f32, _>(StandardNormal))
                .collect(),
        })
        .collect();
    write_embeddings(&root.join("emb.bin"), &emb).unwrap();
    let proj = build_projection(32, 99).unwrap();
    let bench: Vec<Hash64> = emb
        .iter()
        .step_by(37)
        .map(|e| sign_hash(&e.vector, &proj).unwrap())
        .collect();
    write_hash_file(&root.join("bench.u64"), &bench, None).unwrap();
    E2eFixture {
        _dir: dir,
        root,
        corpus,
    }
}

pub fn e2e_config(root: &Path, inputs: Vec<PathBuf>, out: &str, workers: usize) -> PipelineConfig {
    PipelineConfig {
        metadata: root.join("metadata"),
        inputs,
        out: root.join(out),
        t_en: 20,
        seed: 99,
        workers: Some(workers),
        match_mode: MatchMode::Substring,
        lid: LidConfig {
            mode: LidMode::Profiles,
            path: Some(root.join("profiles")),
            confidence_floor: 0.0,
        },
        thresholds: ThresholdOptions::default(),
        dedup: Some(DedupSettings {
            embeddings: root.join("emb.bin"),
            benchmark_hashes: root.join("bench.u64"),
            radius: 1,
            exclusions: None,
        }),
        automaton_cache: None,
    }
}

pub fn tree_bytes(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.insert(
                    p.strip_prefix(dir).unwrap().display().to_string(),
                    fs::read(&p).unwrap(),
                );
            }
        }
    }
    out
}
