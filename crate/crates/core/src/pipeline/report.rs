//! CSV reports for inspecting head/tail balance after a run.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::balancing::{entry_mass, t_to_p, ThresholdTable};
use crate::corpus::CuratedRecord;
use crate::counting::CountSource;
use crate::{Error, LanguageCode, Result};

/// Achieved tail proportion for one language against the target `p`.
#[derive(Debug, Clone, PartialEq)]
pub struct TailRow {
    pub lang: LanguageCode,
    pub t: u64,
    pub total: u64,
    pub target_p: f64,
    pub achieved_p: f64,
    /// Mass of one entry at the threshold count, `t / total`.
    pub entry_mass: f64,
}

impl TailRow {
    pub fn within_one_entry(&self) -> bool {
        (self.achieved_p - self.target_p).abs() <= self.entry_mass + 1e-12
    }
}

pub fn tail_rows(counts: &dyn CountSource, thresholds: &ThresholdTable) -> Result<Vec<TailRow>> {
    let mut rows = Vec::new();
    for (lang, &t) in &thresholds.per_lang_t {
        let c = counts.counts(lang)?;
        rows.push(TailRow {
            lang: lang.clone(),
            t,
            total: c.iter().sum(),
            target_p: thresholds.p,
            achieved_p: t_to_p(t, &c)?,
            entry_mass: entry_mass(t, &c),
        });
    }
    Ok(rows)
}

/// `[0]` then `[2^k, 2^(k+1))` buckets.
fn histogram(counts: &[u64]) -> BTreeMap<(u64, u64), u64> {
    let mut out = BTreeMap::new();
    for &c in counts {
        let key = if c == 0 {
            (0, 1)
        } else {
            let lo = 1u64 << (63 - c.leading_zeros());
            (lo, lo.saturating_mul(2))
        };
        *out.entry(key).or_default() += 1;
    }
    out
}

fn write(path: &Path, text: String) -> Result<PathBuf> {
    fs::write(path, text).map_err(|e| Error::io(path, e))?;
    Ok(path.to_path_buf())
}

/// Writes `histogram.csv`, `tail.csv`, `sizes.csv` and `head_entries.csv`
/// under `out_dir`, one row block per language. `raw_sizes` is the number of
/// annotated records per language before sampling.
pub fn report_stats(
    counts: &dyn CountSource,
    thresholds: &ThresholdTable,
    raw_sizes: &BTreeMap<LanguageCode, u64>,
    curated: &[CuratedRecord],
    out_dir: &Path,
) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let mut files = Vec::new();
    let langs = counts.languages();

    let mut hist = String::from("lang,count_lo,count_hi,entries\n");
    for lang in &langs {
        for ((lo, hi), n) in histogram(&counts.counts(lang)?) {
            writeln!(hist, "{lang},{lo},{hi},{n}").unwrap();
        }
    }
    files.push(write(&out_dir.join("histogram.csv"), hist)?);

    let mut tail =
        String::from("lang,t,total_matches,target_p,achieved_p,entry_mass,within_one_entry\n");
    for r in tail_rows(counts, thresholds)? {
        writeln!(
            tail,
            "{},{},{},{},{},{},{}",
            r.lang,
            r.t,
            r.total,
            r.target_p,
            r.achieved_p,
            r.entry_mass,
            r.within_one_entry()
        )
        .unwrap();
    }
    files.push(write(&out_dir.join("tail.csv"), tail)?);

    let mut curated_sizes: BTreeMap<&LanguageCode, u64> = BTreeMap::new();
    // (lang, entry) -> (selected by, contained in)
    let mut per_entry: BTreeMap<(&LanguageCode, u32), (u64, u64)> = BTreeMap::new();
    for c in curated {
        let Some(lang) = &c.record.lang else { continue };
        *curated_sizes.entry(lang).or_default() += 1;
        per_entry.entry((lang, c.selected_by_entry)).or_default().0 += 1;
        for &id in c.record.matched_entry_ids.iter().flatten() {
            per_entry.entry((lang, id)).or_default().1 += 1;
        }
    }
    let mut sizes = String::from("lang,raw_records,curated_records,ratio\n");
    for lang in &langs {
        let raw = raw_sizes.get(lang).copied().unwrap_or(0);
        let cur = curated_sizes.get(lang).copied().unwrap_or(0);
        let ratio = if raw == 0 {
            0.0
        } else {
            cur as f64 / raw as f64
        };
        writeln!(sizes, "{lang},{raw},{cur},{ratio}").unwrap();
    }
    files.push(write(&out_dir.join("sizes.csv"), sizes)?);

    // A head entry with count c is kept with probability t/c per record, so
    // t selections are expected among records that match only it.
    let mut head = String::from("lang,entry_index,count,t,expected,selected_by,containing\n");
    for (lang, &t) in &thresholds.per_lang_t {
        for (i, &c) in counts.counts(lang)?.iter().enumerate() {
            if c >= t && c > 0 {
                let (sel, cont) = per_entry.get(&(lang, i as u32)).copied().unwrap_or((0, 0));
                writeln!(head, "{lang},{i},{c},{t},{t},{sel},{cont}").unwrap();
            }
        }
    }
    files.push(write(&out_dir.join("head_entries.csv"), head)?);
    Ok(files)
}
