//! Stages 2 and 3: per-language thresholds from one English threshold, entry
//! sampling probabilities, and independent per-entry sampling.
//!
//! The English threshold fixes the tail proportion `p` (share of all matches
//! that land on entries with count `< t`). Every other language gets the
//! threshold whose cumulative count mass lands nearest that same `p`.

use std::collections::BTreeMap;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{CuratedRecord, Shard};
use crate::counting::{CountSource, CountStore, MappedCounts};
use crate::metadata::LanguageCode;
use crate::rng::DrawStream;
use crate::{Error, Result};

/// Share of total count mass held by entries with count strictly below `t`.
pub fn t_to_p(t: u64, counts: &[u64]) -> Result<f64> {
    let total: u64 = counts.iter().sum();
    if total == 0 {
        return Err(Error::validation("t_to_p: counts have zero total"));
    }
    let tail: u64 = counts.iter().filter(|&&c| c < t).sum();
    Ok(tail as f64 / total as f64)
}

/// Sorts the counts ascending, normalizes their running sum by the total,
/// and returns the count at the first index whose cumulative share is
/// closest to `p`. Zero counts carry no mass and are skipped, so the result
/// is always a positive observed count.
pub fn p_to_t(p: f64, counts: &[u64]) -> Result<u64> {
    let mut sorted: Vec<u64> = counts.iter().copied().filter(|&c| c > 0).collect();
    if sorted.is_empty() {
        return Err(Error::validation("p_to_t: counts have zero total"));
    }
    sorted.sort_unstable();
    let total: u64 = sorted.iter().sum();
    let mut cum = 0u64;
    let mut best = (f64::INFINITY, sorted[0]);
    for &c in &sorted {
        cum += c;
        let dist = (cum as f64 / total as f64 - p).abs();
        if dist < best.0 {
            best = (dist, c);
        }
    }
    Ok(best.1)
}

/// Mass of a single entry at count `t`, relative to the language total:
/// the quantization step within which the achieved tail proportion can
/// track `p`.
pub fn entry_mass(t: u64, counts: &[u64]) -> f64 {
    let total: u64 = counts.iter().sum();
    if total == 0 {
        0.0
    } else {
        t as f64 / total as f64
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ThresholdOptions {
    /// Keep `t_en` for English instead of recomputing it through `p_to_t`.
    #[serde(default)]
    pub pin_english: bool,
    /// Ablation: use `t_en` for every language.
    #[serde(default)]
    pub force_global_t: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdTable {
    pub t_en: u64,
    pub p: f64,
    pub per_lang_t: BTreeMap<LanguageCode, u64>,
    pub metadata_hash: String,
    #[serde(flatten)]
    pub options: ThresholdOptions,
}

impl ThresholdTable {
    pub fn get(&self, lang: &LanguageCode) -> Option<u64> {
        self.per_lang_t.get(lang).copied()
    }
}

/// `p = t_to_p(t_en, counts["en"])`, then `t[lang] = p_to_t(p, counts[lang])`
/// for every language, English and `other` included. Languages without a
/// single match have no threshold.
pub fn compute_thresholds(
    counts: &dyn CountSource,
    t_en: u64,
    metadata_hash: &str,
    options: ThresholdOptions,
) -> Result<ThresholdTable> {
    if t_en == 0 {
        return Err(Error::validation("t_en must be positive"));
    }
    let en = LanguageCode::new("en")?;
    if !counts.languages().contains(&en) {
        return Err(Error::validation("counts have no `en` language"));
    }
    let p = t_to_p(t_en, &counts.counts(&en)?)?;
    let mut per_lang_t = BTreeMap::new();
    for lang in counts.languages() {
        let c = counts.counts(&lang)?;
        if c.iter().all(|&x| x == 0) {
            continue;
        }
        let t = if options.force_global_t || (options.pin_english && lang == en) {
            t_en
        } else {
            p_to_t(p, &c)?
        };
        per_lang_t.insert(lang, t);
    }
    Ok(ThresholdTable {
        t_en,
        p,
        per_lang_t,
        metadata_hash: metadata_hash.to_owned(),
        options,
    })
}

/// `t / max(count, t)`: 1.0 for tail entries, `t / count` for head entries.
/// `t` below 1 is treated as 1.
pub fn compute_entry_probs(counts: &[u64], t: u64) -> Vec<f64> {
    let t = t.max(1);
    counts.iter().map(|&c| entry_prob(c, t)).collect()
}

#[inline]
fn entry_prob(count: u64, t: u64) -> f64 {
    t as f64 / count.max(t) as f64
}

/// Per-entry sampling probability lookup.
pub trait ProbabilityLookup: Sync {
    fn prob(&self, lang: &LanguageCode, entry: u32) -> Result<f64>;
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ProbabilityTable {
    pub per_lang: BTreeMap<LanguageCode, Vec<f64>>,
}

impl ProbabilityTable {
    pub fn build(counts: &dyn CountSource, thresholds: &ThresholdTable) -> Result<Self> {
        let mut per_lang = BTreeMap::new();
        for (lang, &t) in &thresholds.per_lang_t {
            per_lang.insert(lang.clone(), compute_entry_probs(&counts.counts(lang)?, t));
        }
        Ok(Self { per_lang })
    }
}

fn missing(lang: &LanguageCode, entry: u32) -> Error {
    Error::validation(format!(
        "no sampling probability for `{lang}` entry {entry}"
    ))
}

impl ProbabilityLookup for ProbabilityTable {
    fn prob(&self, lang: &LanguageCode, entry: u32) -> Result<f64> {
        self.per_lang
            .get(lang)
            .and_then(|v| v.get(entry as usize))
            .copied()
            .ok_or_else(|| missing(lang, entry))
    }
}

/// Probabilities computed on demand from memory-mapped counts, so only the
/// pages holding referenced entries are touched.
pub struct MappedProbabilities {
    thresholds: BTreeMap<LanguageCode, (u64, Arc<MappedCounts>)>,
}

impl MappedProbabilities {
    pub fn new(store: &CountStore, thresholds: &ThresholdTable) -> Result<Self> {
        if store.metadata_hash() != thresholds.metadata_hash {
            return Err(Error::validation(format!(
                "thresholds were computed for metadata {} but counts are for {}",
                thresholds.metadata_hash,
                store.metadata_hash()
            )));
        }
        let mut map = BTreeMap::new();
        for (lang, &t) in &thresholds.per_lang_t {
            map.insert(lang.clone(), (t.max(1), store.get(lang)?));
        }
        Ok(Self { thresholds: map })
    }
}

impl ProbabilityLookup for MappedProbabilities {
    fn prob(&self, lang: &LanguageCode, entry: u32) -> Result<f64> {
        let (t, counts) = self
            .thresholds
            .get(lang)
            .ok_or_else(|| missing(lang, entry))?;
        let c = counts
            .get(entry as usize)
            .ok_or_else(|| missing(lang, entry))?;
        Ok(entry_prob(c, *t))
    }
}

/// Stage 3 on one shard. Matched ids are visited in ascending order and the
/// first entry whose draw falls below its probability admits the record.
pub fn curate_shard(
    shard: &Shard,
    probs: &dyn ProbabilityLookup,
    draws: &DrawStream,
) -> Result<Vec<CuratedRecord>> {
    let mut out = Vec::new();
    for rec in &shard.records {
        let (Some(lang), Some(ids)) = (&rec.lang, &rec.matched_entry_ids) else {
            return Err(Error::validation(format!(
                "shard {}: record `{}` is not annotated with lang and matched_entry_ids",
                shard.shard_id, rec.record_id
            )));
        };
        if ids.is_empty() {
            continue;
        }
        let mut rd = draws.for_record(&rec.record_id);
        for &id in ids {
            let p = probs.prob(lang, id)?;
            let u = rd.draw(id);
            if u < p {
                out.push(CuratedRecord {
                    record: rec.clone(),
                    selected_by_entry: id,
                    sample_draw: u,
                });
                break;
            }
        }
    }
    Ok(out)
}

/// Curates all shards in parallel and concatenates by ascending shard id.
pub fn curate(
    shards: &[Shard],
    probs: &dyn ProbabilityLookup,
    seed: u64,
) -> Result<Vec<CuratedRecord>> {
    let draws = DrawStream::new(seed);
    let mut parts: Vec<(u32, Vec<CuratedRecord>)> = shards
        .par_iter()
        .map(|s| curate_shard(s, probs, &draws).map(|r| (s.shard_id, r)))
        .collect::<Result<_>>()?;
    parts.sort_by_key(|(id, _)| *id);
    Ok(parts.into_iter().flat_map(|(_, r)| r).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::AltTextRecord;
    use crate::counting::EntryCountTable;
    use proptest::prelude::*;

    const FIXTURE: [u64; 5] = [1, 2, 3, 4, 10];

    fn code(s: &str) -> LanguageCode {
        LanguageCode::new(s).unwrap()
    }

    /// Direct transcription of the sort / cumsum / argmin definition,
    /// kept apart from the implementation above.
    fn p_to_t_oracle(p: f64, counts: &[u64]) -> u64 {
        let mut s: Vec<u64> = counts.iter().copied().filter(|&c| c > 0).collect();
        s.sort();
        let total: u64 = s.iter().sum();
        let cum: Vec<f64> = s
            .iter()
            .scan(0u64, |acc, &c| {
                *acc += c;
                Some(*acc as f64 / total as f64)
            })
            .collect();
        let mut arg = 0;
        for i in 1..cum.len() {
            if (cum[i] - p).abs() < (cum[arg] - p).abs() {
                arg = i;
            }
        }
        s[arg]
    }

    #[test]
    fn t_to_p_fixture() {
        assert_eq!(t_to_p(4, &FIXTURE).unwrap(), 0.3);
        assert_eq!(t_to_p(1, &FIXTURE).unwrap(), 0.0);
        assert_eq!(t_to_p(11, &FIXTURE).unwrap(), 1.0);
        assert!(t_to_p(3, &[0, 0]).is_err());
    }

    #[test]
    fn p_to_t_fixture() {
        assert_eq!(p_to_t(0.3, &FIXTURE).unwrap(), 3);
        assert_eq!(p_to_t(1.0, &FIXTURE).unwrap(), 10);
        assert_eq!(p_to_t(0.0, &FIXTURE).unwrap(), 1);
        assert!(p_to_t(0.5, &[]).is_err());
    }

    #[test]
    fn p_to_t_skips_never_matched_entries() {
        assert_eq!(p_to_t(0.0, &[0, 0, 5, 100]).unwrap(), 5);
        assert_eq!(p_to_t(0.3, &[0, 1, 0, 2, 3, 4, 10]).unwrap(), 3);
    }

    #[test]
    fn thresholds_for_scaled_language() {
        let table = EntryCountTable::from_vectors(
            [
                (code("en"), FIXTURE.to_vec()),
                (code("xx"), FIXTURE.iter().map(|c| c * 2).collect()),
            ]
            .into(),
        );
        let t = compute_thresholds(&table, 4, "h", ThresholdOptions::default()).unwrap();
        assert_eq!(t.p, 0.3);
        assert_eq!(t.get(&code("xx")), Some(6));
        assert_eq!(t.get(&code("en")), Some(3));

        let pinned = compute_thresholds(
            &table,
            4,
            "h",
            ThresholdOptions {
                pin_english: true,
                ..Default::default()
            },
        )
        .unwrap();
        assert_eq!(pinned.get(&code("en")), Some(4));
        assert_eq!(pinned.get(&code("xx")), Some(6));

        let global = compute_thresholds(
            &table,
            4,
            "h",
            ThresholdOptions {
                force_global_t: true,
                ..Default::default()
            },
        )
        .unwrap();
        assert_eq!(global.get(&code("xx")), Some(4));
    }

    #[test]
    fn thresholds_need_english() {
        let table = EntryCountTable::from_vectors([(code("de"), vec![1, 2])].into());
        assert!(compute_thresholds(&table, 4, "h", ThresholdOptions::default()).is_err());
    }

    #[test]
    fn silent_languages_get_no_threshold() {
        let table = EntryCountTable::from_vectors(
            [(code("en"), FIXTURE.to_vec()), (code("other"), vec![0, 0])].into(),
        );
        let t = compute_thresholds(&table, 4, "h", ThresholdOptions::default()).unwrap();
        assert_eq!(t.get(&code("other")), None);
    }

    #[test]
    fn single_language_round_trip_within_one_entry() {
        let counts = [3u64, 7, 8, 15, 21, 40, 77, 120];
        let total: u64 = counts.iter().sum();
        for &t_en in &counts {
            let p = t_to_p(t_en, &counts).unwrap();
            let t = p_to_t(p, &counts).unwrap();
            let achieved = t_to_p(t, &counts).unwrap();
            // strict `<` in t_to_p drops the returned entry itself, so the gap is zero or one entry
            let gap = p - achieved;
            let one = t as f64 / total as f64;
            assert!(
                gap.abs() < 1e-12 || (gap - one).abs() < 1e-12,
                "t_en={t_en} t={t}"
            );
        }
    }

    #[test]
    fn entry_probs_fixture() {
        assert_eq!(compute_entry_probs(&FIXTURE, 3), [1.0, 1.0, 1.0, 0.75, 0.3]);
        assert!(compute_entry_probs(&FIXTURE, 10).iter().all(|&p| p == 1.0));
        assert_eq!(compute_entry_probs(&[0, 5], 5), [1.0, 1.0]);
    }

    #[test]
    fn thresholds_json_round_trip() {
        let table = EntryCountTable::from_vectors([(code("en"), FIXTURE.to_vec())].into());
        let t = compute_thresholds(&table, 4, "abc", ThresholdOptions::default()).unwrap();
        let json = serde_json::to_string(&t).unwrap();
        assert!(json.contains("\"pin_english\":false"));
        assert_eq!(serde_json::from_str::<ThresholdTable>(&json).unwrap(), t);
    }

    fn annotated(id: &str, ids: Vec<u32>) -> AltTextRecord {
        AltTextRecord::new(id, "img", "text")
            .with_lang(code("en"))
            .with_matches(ids)
    }

    fn probs(v: Vec<f64>) -> ProbabilityTable {
        ProbabilityTable {
            per_lang: [(code("en"), v)].into(),
        }
    }

    #[test]
    fn tail_only_record_always_selected() {
        let shard = Shard::new(0, vec![annotated("a", vec![1, 3])]);
        let p = probs(vec![0.1, 1.0, 0.1, 1.0]);
        for seed in 0..200 {
            let out = curate(std::slice::from_ref(&shard), &p, seed).unwrap();
            assert_eq!(out.len(), 1);
            assert_eq!(out[0].selected_by_entry, 1);
        }
    }

    #[test]
    fn unmatched_record_excluded() {
        let shard = Shard::new(0, vec![annotated("a", vec![])]);
        assert!(curate(&[shard], &probs(vec![1.0]), 0).unwrap().is_empty());
    }

    #[test]
    fn unannotated_or_unknown_entry_is_an_error() {
        let shard = Shard::new(
            0,
            vec![AltTextRecord::new("a", "i", "t").with_lang(code("en"))],
        );
        assert!(curate(&[shard], &probs(vec![1.0]), 0).is_err());
        let shard = Shard::new(0, vec![annotated("a", vec![7])]);
        assert!(curate(&[shard], &probs(vec![1.0]), 0).is_err());
    }

    #[test]
    fn selection_provenance_is_consistent() {
        let recs: Vec<_> = (0..2000)
            .map(|i| annotated(&format!("r{i}"), vec![0, 2, 3]))
            .collect();
        let p = probs(vec![0.2, 1.0, 0.3, 0.25]);
        let out = curate(&[Shard::new(0, recs)], &p, 5).unwrap();
        for c in &out {
            let ids = c.record.matched_entry_ids.as_ref().unwrap();
            assert!(ids.contains(&c.selected_by_entry));
            assert!(c.sample_draw < p.prob(&code("en"), c.selected_by_entry).unwrap());
        }
    }

    #[test]
    fn output_independent_of_shard_order() {
        let recs: Vec<_> = (0..600)
            .map(|i| annotated(&format!("r{i}"), vec![i % 3, 3]))
            .collect();
        let shards: Vec<Shard> = recs
            .chunks(100)
            .enumerate()
            .map(|(i, c)| Shard::new(i as u32, c.to_vec()))
            .collect();
        let p = probs(vec![0.5, 0.2, 0.1, 0.05]);
        let forward = curate(&shards, &p, 9).unwrap();
        let mut reversed = shards.clone();
        reversed.reverse();
        assert_eq!(curate(&reversed, &p, 9).unwrap(), forward);
    }

    proptest! {
        #[test]
        fn p_to_t_matches_oracle(counts in proptest::collection::vec(0u64..50, 1..40), p in 0.0f64..=1.0) {
            prop_assume!(counts.iter().any(|&c| c > 0));
            prop_assert_eq!(p_to_t(p, &counts).unwrap(), p_to_t_oracle(p, &counts));
        }

        #[test]
        fn lowering_t_never_raises_a_probability(counts in proptest::collection::vec(0u64..1000, 1..30), t in 2u64..500, dt in 1u64..100) {
            let hi = compute_entry_probs(&counts, t);
            let lo = compute_entry_probs(&counts, t.saturating_sub(dt).max(1));
            for (a, b) in lo.iter().zip(&hi) {
                prop_assert!(a <= b);
            }
        }

        #[test]
        fn scaling_counts_scales_threshold(
            base in proptest::collection::btree_set(1u64..10_000, 1..30),
            p in 0.0f64..=1.0,
            k in 2u64..6,
        ) {
            let counts: Vec<u64> = base.into_iter().collect();
            let scaled: Vec<u64> = counts.iter().map(|c| c * k).collect();
            prop_assert_eq!(p_to_t(p, &scaled).unwrap(), k * p_to_t(p, &counts).unwrap());
        }

        #[test]
        fn plateau_free_round_trip_within_one_entry(
            base in proptest::collection::btree_set(1u64..100_000, 2..50),
            t_idx in 0usize..50,
        ) {
            let counts: Vec<u64> = base.into_iter().collect();
            let t_en = counts[t_idx % counts.len()];
            let p = t_to_p(t_en, &counts).unwrap();
            let t = p_to_t(p, &counts).unwrap();
            let achieved = t_to_p(t, &counts).unwrap();
            prop_assert!((achieved - p).abs() <= entry_mass(t, &counts) + 1e-12);
        }
    }
}
