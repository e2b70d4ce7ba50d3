//! `worldcurate`: file-to-file stages of the curation pipeline.
//!
//! Every subcommand prints a JSON summary on stdout. Exit codes: 0 success,
//! 1 validation or usage error, 2 I/O error, 3 internal invariant violation.

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Parser, Subcommand};
use serde::Serialize;

use worldcurate_core::balancing::ThresholdOptions;
use worldcurate_core::counting::CountStore;
use worldcurate_core::dedup::{
    build_projection, hash_embeddings, read_embeddings, write_hash_file,
};
use worldcurate_core::lid::{
    build_language_mapping, default_aliases, read_alias_table, CharProfile, LabelTable, LidSource,
    MergedMetadata, ProfileClassifier, PROFILE_SUFFIX,
};
use worldcurate_core::matcher::MatchMode;
use worldcurate_core::metadata::{
    build_metadata, count_ngrams, ingest_lexicon, rank_titles, read_catalog, write_entry_set,
    MetadataSources, SourceCaps, TokenizerRegistry,
};
use worldcurate_core::pipeline::{
    language_sizes, plan_training, read_curated, read_thresholds, report_stats, run_pipeline,
    shard_inputs, stage_curate, stage_dedup, stage_lid, stage_match_count, stage_thresholds,
    with_workers, DedupSettings, PipelineConfig,
};
use worldcurate_core::{Error, LanguageCode, Result};

#[derive(Parser)]
#[command(
    name = "worldcurate",
    version,
    about = "Worldwide image-text data curation"
)]
struct Cli {
    /// Worker threads (default: all cores; capped by WORLDCURATE_WORKERS).
    #[arg(long, global = true)]
    workers: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build one language's metadata entry set from its sources.
    BuildMetadata {
        #[arg(long)]
        lang: LanguageCode,
        /// One lexicon entry per line.
        #[arg(long)]
        lexicon: Option<PathBuf>,
        /// Plain-text corpus, one document per line.
        #[arg(long)]
        corpus: Option<PathBuf>,
        /// `title<TAB>clicks` lines.
        #[arg(long)]
        titles: Option<PathBuf>,
        #[arg(long)]
        unigram_cap: Option<usize>,
        #[arg(long)]
        bigram_cap: Option<usize>,
        #[arg(long)]
        title_cap: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Group per-language entry sets by LID language into the merged dictionary.
    MergeMetadata {
        /// Directory of `<lang>.entries.txt` files.
        #[arg(long)]
        catalog: PathBuf,
        /// Comma-separated LID languages.
        #[arg(long, value_delimiter = ',', required_unless_present = "profiles")]
        lid_langs: Vec<LanguageCode>,
        /// Take LID languages from a profile directory instead.
        #[arg(long, conflicts_with = "lid_langs")]
        profiles: Option<PathBuf>,
        /// `meta_code,lid_code` alias CSV, applied over the built-in aliases.
        #[arg(long)]
        aliases: Option<PathBuf>,
        #[arg(long)]
        no_default_aliases: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Build a character n-gram profile from sample texts (one per line).
    LidProfile {
        #[arg(long)]
        lang: LanguageCode,
        #[arg(long)]
        texts: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Assign a language to every record.
    Lid {
        /// Profile directory (built-in classifier), label TSV file, or `preassigned`.
        #[arg(long)]
        model: String,
        /// Merged metadata directory; predictions outside its languages become `other`.
        #[arg(long)]
        metadata: PathBuf,
        #[arg(long, default_value_t = 0.0)]
        confidence_floor: f64,
        #[arg(long = "in", required = true)]
        input: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Stage 1: annotate matches and write global counts.
    MatchCount {
        #[arg(long)]
        metadata: PathBuf,
        #[arg(long = "in", required = true)]
        input: Vec<PathBuf>,
        #[arg(long)]
        out_shards: PathBuf,
        #[arg(long)]
        out_counts: PathBuf,
        #[arg(long)]
        word_boundary: bool,
        #[arg(long)]
        automaton_cache: Option<PathBuf>,
    },
    /// Stage 2: derive p from t_en and every language's threshold.
    Thresholds {
        #[arg(long)]
        counts: PathBuf,
        #[arg(long)]
        t_en: u64,
        #[arg(long)]
        pin_english: bool,
        #[arg(long)]
        force_global_t: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Stage 3: sample records.
    Curate {
        #[arg(long = "in", required = true)]
        input: Vec<PathBuf>,
        #[arg(long)]
        thresholds: PathBuf,
        #[arg(long)]
        counts: PathBuf,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Compute sign hashes for an embedding file.
    HashEmbeddings {
        #[arg(long)]
        embeddings: PathBuf,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Remove benchmark overlap (and an optional exclusion list).
    Dedup {
        #[arg(long)]
        embeddings: PathBuf,
        #[arg(long)]
        benchmark_hashes: PathBuf,
        #[arg(long)]
        seed: u64,
        #[arg(long, default_value_t = 0)]
        radius: u32,
        #[arg(long)]
        exclusions: Option<PathBuf>,
        #[arg(long = "in", required = true)]
        input: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write CSV reports for a finished run.
    Stats {
        #[arg(long)]
        counts: PathBuf,
        #[arg(long)]
        thresholds: PathBuf,
        #[arg(long, required = true)]
        annotated: Vec<PathBuf>,
        #[arg(long, required = true)]
        curated: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Scale batch size and seen pairs for a given English share.
    PlanTraining {
        #[arg(long)]
        english_share: f64,
        #[arg(long, default_value_t = 32768)]
        base_batch: u64,
        #[arg(long, default_value_t = 12_800_000_000)]
        base_seen_pairs: u64,
    },
    /// Run every stage from a TOML config.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        t_en: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn print<T: Serialize>(value: &T) {
    println!(
        "{}",
        serde_json::to_string_pretty(value).expect("summary serializes")
    );
}

fn read_lines(path: &Path) -> Result<Vec<String>> {
    let text = fs::read_to_string(path).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    Ok(text.lines().map(str::to_owned).collect())
}

fn read_titles(path: &Path) -> Result<Vec<(String, u64)>> {
    let mut out = Vec::new();
    for (i, line) in read_lines(path)?.into_iter().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let parsed = line
            .rsplit_once('\t')
            .and_then(|(t, c)| c.trim().parse().ok().map(|c| (t.to_owned(), c)));
        out.push(parsed.ok_or_else(|| Error::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            message: "expected `title<TAB>clicks`".into(),
        })?);
    }
    Ok(out)
}

fn profile_langs(dir: &Path) -> Result<Vec<LanguageCode>> {
    let mut langs = Vec::new();
    for entry in fs::read_dir(dir).map_err(|e| Error::Io {
        path: dir.to_path_buf(),
        source: e,
    })? {
        let name = entry
            .map_err(|e| Error::Io {
                path: dir.to_path_buf(),
                source: e,
            })?
            .file_name();
        if let Some(lang) = name.to_str().and_then(|n| n.strip_suffix(PROFILE_SUFFIX)) {
            langs.push(LanguageCode::new(lang)?);
        }
    }
    Ok(langs)
}

fn lid_source(model: &str) -> Result<LidSource> {
    let path = Path::new(model);
    Ok(if model == "preassigned" {
        LidSource::Preassigned
    } else if path.is_dir() {
        LidSource::Model(Arc::new(ProfileClassifier::from_dir(path)?))
    } else {
        LidSource::Labels(Arc::new(LabelTable::read(path)?))
    })
}

fn execute(command: Command) -> Result<()> {
    match command {
        Command::BuildMetadata {
            lang,
            lexicon,
            corpus,
            titles,
            unigram_cap,
            bigram_cap,
            title_cap,
            out,
        } => {
            let lexicon = lexicon
                .as_deref()
                .map(ingest_lexicon)
                .transpose()?
                .unwrap_or_default();
            let registry = TokenizerRegistry::new();
            let docs = corpus
                .as_deref()
                .map(read_lines)
                .transpose()?
                .unwrap_or_default();
            let (unigrams, bigrams) = if docs.is_empty() {
                (None, None)
            } else {
                (
                    Some(count_ngrams(&docs, &lang, 1, &registry)?),
                    Some(count_ngrams(&docs, &lang, 2, &registry)?),
                )
            };
            let titles = match titles {
                Some(p) => rank_titles(read_titles(&p)?),
                None => Vec::new(),
            };
            let set = build_metadata(
                &lang,
                &MetadataSources {
                    lexicon: &lexicon,
                    unigrams: unigrams.as_ref(),
                    bigrams: bigrams.as_ref(),
                    titles: &titles,
                },
                &SourceCaps {
                    unigram: unigram_cap,
                    bigram: bigram_cap,
                    title: title_cap,
                },
            )?;
            fs::create_dir_all(&out).map_err(|e| Error::Io {
                path: out.clone(),
                source: e,
            })?;
            write_entry_set(&set, &out)?;
            print(
                &serde_json::json!({ "lang": lang, "entries": set.len(), "content_hash": set.content_hash() }),
            );
        }
        Command::MergeMetadata {
            catalog,
            lid_langs,
            profiles,
            aliases,
            no_default_aliases,
            out,
        } => {
            let catalog = read_catalog(&catalog)?;
            let lid: BTreeSet<LanguageCode> = match profiles {
                Some(dir) => profile_langs(&dir)?.into_iter().collect(),
                None => lid_langs.into_iter().collect(),
            };
            let mut alias_map = if no_default_aliases {
                Default::default()
            } else {
                default_aliases()
            };
            if let Some(p) = aliases {
                alias_map.extend(read_alias_table(&p)?);
            }
            let meta_langs = catalog.keys().cloned().collect();
            let merged = MergedMetadata::build(
                &catalog,
                build_language_mapping(&lid, &meta_langs, &alias_map),
            )?;
            fs::create_dir_all(&out).map_err(|e| Error::Io {
                path: out.clone(),
                source: e,
            })?;
            merged.write(&out)?;
            print(&merged.manifest());
        }
        Command::LidProfile { lang, texts, out } => {
            let profile = CharProfile::from_texts(read_lines(&texts)?);
            fs::create_dir_all(&out).map_err(|e| Error::Io {
                path: out.clone(),
                source: e,
            })?;
            profile.write(&out.join(format!("{lang}{PROFILE_SUFFIX}")))?;
            print(&serde_json::json!({ "lang": lang, "grams": profile.len() }));
        }
        Command::Lid {
            model,
            metadata,
            confidence_floor,
            input,
            out,
        } => {
            let known = MergedMetadata::read(&metadata)?.sets.into_keys().collect();
            let source = lid_source(&model)?;
            print(&stage_lid(
                &shard_inputs(&input)?,
                &out,
                &source,
                &known,
                confidence_floor,
            )?);
        }
        Command::MatchCount {
            metadata,
            input,
            out_shards,
            out_counts,
            word_boundary,
            automaton_cache,
        } => {
            let metadata = MergedMetadata::read(&metadata)?;
            let mode = if word_boundary {
                MatchMode::WordBoundary
            } else {
                MatchMode::Substring
            };
            let out = stage_match_count(
                &metadata,
                &shard_inputs(&input)?,
                &out_shards,
                &out_counts,
                mode,
                automaton_cache.as_deref(),
            )?;
            print(&out.report);
        }
        Command::Thresholds {
            counts,
            t_en,
            pin_english,
            force_global_t,
            out,
        } => {
            let options = ThresholdOptions {
                pin_english,
                force_global_t,
            };
            print(&stage_thresholds(&counts, t_en, options, &out)?);
        }
        Command::Curate {
            input,
            thresholds,
            counts,
            seed,
            out,
        } => {
            let thresholds = read_thresholds(&thresholds)?;
            print(&stage_curate(
                &shard_inputs(&input)?,
                &thresholds,
                &counts,
                seed,
                &out,
            )?);
        }
        Command::HashEmbeddings {
            embeddings,
            seed,
            out,
        } => {
            let records = read_embeddings(&embeddings)?;
            let dim = records.first().map_or(1, |r| r.vector.len());
            let hashes = hash_embeddings(&records, &build_projection(dim, seed)?)?;
            let ids: Vec<String> = records.into_iter().map(|r| r.record_id).collect();
            write_hash_file(&out, &hashes, Some(&ids))?;
            print(&serde_json::json!({ "hashes": hashes.len(), "dim": dim }));
        }
        Command::Dedup {
            embeddings,
            benchmark_hashes,
            seed,
            radius,
            exclusions,
            input,
            out,
        } => {
            let settings = DedupSettings {
                embeddings,
                benchmark_hashes,
                radius,
                exclusions,
            };
            print(&stage_dedup(&shard_inputs(&input)?, &settings, seed, &out)?);
        }
        Command::Stats {
            counts,
            thresholds,
            annotated,
            curated,
            out,
        } => {
            let thresholds = read_thresholds(&thresholds)?;
            let store = CountStore::open(&counts, Some(&thresholds.metadata_hash))?;
            let files = report_stats(
                &store,
                &thresholds,
                &language_sizes(&shard_inputs(&annotated)?)?,
                &read_curated(&shard_inputs(&curated)?)?,
                &out,
            )?;
            print(&files);
        }
        Command::PlanTraining {
            english_share,
            base_batch,
            base_seen_pairs,
        } => print(&plan_training(english_share, base_batch, base_seen_pairs)?),
        Command::Run { .. } => unreachable!("handled in main"),
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run {
            config,
            seed,
            t_en,
            out,
        } => {
            let mut cfg = PipelineConfig::load(&config)?;
            cfg.seed = seed.unwrap_or(cfg.seed);
            cfg.t_en = t_en.unwrap_or(cfg.t_en);
            cfg.out = out.unwrap_or(cfg.out);
            if cli.workers.is_some() {
                cfg.workers = cli.workers;
            }
            print(&run_pipeline(&cfg)?);
            Ok(())
        }
        command => with_workers(cli.workers, || execute(command))?,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let usage = e.use_stderr();
            let _ = e.print();
            return ExitCode::from(if usage { 1 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
