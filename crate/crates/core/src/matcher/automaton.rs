use std::collections::VecDeque;
use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use super::MatchMode;
use crate::metadata::{LanguageCode, MetadataEntrySet};
use crate::{Error, Result};

const ROOT: u32 = 0;
const NONE: u32 = u32::MAX;
const MAGIC: &[u8; 8] = b"WCAUTOM\0";
const FORMAT_VERSION: u32 = 1;

/// Aho-Corasick automaton over Unicode scalar values. Transitions are stored
/// CSR-style (per-state sorted label slices), with a dense table for ASCII
/// transitions out of the root.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PatternAutomaton {
    lang: LanguageCode,
    mode: MatchMode,
    content_hash: String,
    edge_start: Vec<u32>,
    edge_label: Vec<char>,
    edge_target: Vec<u32>,
    root_ascii: Vec<u32>,
    fail: Vec<u32>,
    /// Pattern that ends exactly at this state, or `NONE`.
    output: Vec<u32>,
    /// Nearest proper-suffix state with an output, or `NONE`.
    dict_link: Vec<u32>,
    /// Pattern lengths in chars.
    pattern_len: Vec<u32>,
}

impl PatternAutomaton {
    /// Compiles `entries` (assumed normalized). Duplicate or empty entries
    /// are rejected.
    pub fn compile(entries: &MetadataEntrySet, mode: MatchMode) -> Result<Self> {
        Self::compile_patterns(
            entries.lang.clone(),
            entries.entries(),
            mode,
            entries.content_hash(),
        )
    }

    pub fn compile_patterns(
        lang: LanguageCode,
        patterns: &[String],
        mode: MatchMode,
        content_hash: String,
    ) -> Result<Self> {
        if patterns.len() >= NONE as usize {
            return Err(Error::validation("too many patterns for one automaton"));
        }
        let mut order: Vec<u32> = (0..patterns.len() as u32).collect();
        order.sort_unstable_by(|&a, &b| patterns[a as usize].cmp(&patterns[b as usize]));

        // Sorted insertion: the shared prefix with the previous pattern is
        // the only part of the trie the next pattern can reuse.
        let mut output: Vec<u32> = vec![NONE];
        let mut edges: Vec<(u32, char, u32)> = Vec::new();
        let mut path: Vec<u32> = vec![ROOT];
        let mut prev: Vec<char> = Vec::new();
        let mut pattern_len = vec![0u32; patterns.len()];
        for &pid in &order {
            let chars: Vec<char> = patterns[pid as usize].chars().collect();
            if chars.is_empty() {
                return Err(Error::validation(format!(
                    "{lang}: empty pattern at entry {pid}"
                )));
            }
            pattern_len[pid as usize] = chars.len() as u32;
            let lcp = prev.iter().zip(&chars).take_while(|(a, b)| a == b).count();
            path.truncate(lcp + 1);
            for &c in &chars[lcp..] {
                let node = output.len() as u32;
                output.push(NONE);
                edges.push((*path.last().unwrap(), c, node));
                path.push(node);
            }
            let end = *path.last().unwrap() as usize;
            if output[end] != NONE {
                return Err(Error::validation(format!(
                    "{lang}: duplicate pattern `{}` (entries {} and {pid})",
                    patterns[pid as usize], output[end]
                )));
            }
            output[end] = pid;
            prev = chars;
        }

        let states = output.len();
        edges.sort_unstable_by_key(|&(p, c, _)| (p, c));
        let mut edge_start = vec![0u32; states + 1];
        for &(p, _, _) in &edges {
            edge_start[p as usize + 1] += 1;
        }
        for i in 0..states {
            edge_start[i + 1] += edge_start[i];
        }
        let edge_label: Vec<char> = edges.iter().map(|e| e.1).collect();
        let edge_target: Vec<u32> = edges.iter().map(|e| e.2).collect();

        let mut root_ascii = vec![NONE; 128];
        for i in edge_start[0]..edge_start[1] {
            let c = edge_label[i as usize];
            if c.is_ascii() {
                root_ascii[c as usize] = edge_target[i as usize];
            }
        }

        let mut a = Self {
            lang,
            mode,
            content_hash,
            edge_start,
            edge_label,
            edge_target,
            root_ascii,
            fail: vec![ROOT; states],
            output,
            dict_link: vec![NONE; states],
            pattern_len,
        };
        a.link();
        Ok(a)
    }

    fn link(&mut self) {
        let mut queue = VecDeque::new();
        for i in self.edges(ROOT) {
            queue.push_back(self.edge_target[i]);
        }
        while let Some(u) = queue.pop_front() {
            for i in self.edges(u) {
                let (c, v) = (self.edge_label[i], self.edge_target[i]);
                queue.push_back(v);
                let mut f = self.fail[u as usize];
                let fv = loop {
                    if let Some(n) = self.goto(f, c) {
                        break n;
                    }
                    if f == ROOT {
                        break ROOT;
                    }
                    f = self.fail[f as usize];
                };
                self.fail[v as usize] = fv;
                self.dict_link[v as usize] = if self.output[fv as usize] != NONE {
                    fv
                } else {
                    self.dict_link[fv as usize]
                };
            }
        }
    }

    fn edges(&self, state: u32) -> std::ops::Range<usize> {
        self.edge_start[state as usize] as usize..self.edge_start[state as usize + 1] as usize
    }

    #[inline]
    fn goto(&self, state: u32, c: char) -> Option<u32> {
        if state == ROOT && c.is_ascii() {
            let t = self.root_ascii[c as usize];
            return (t != NONE).then_some(t);
        }
        let r = self.edges(state);
        let labels = &self.edge_label[r.clone()];
        if labels.len() <= 8 {
            labels
                .iter()
                .position(|&l| l == c)
                .map(|i| self.edge_target[r.start + i])
        } else {
            labels
                .binary_search(&c)
                .ok()
                .map(|i| self.edge_target[r.start + i])
        }
    }

    #[inline]
    fn step(&self, mut state: u32, c: char) -> u32 {
        loop {
            if let Some(n) = self.goto(state, c) {
                return n;
            }
            if state == ROOT {
                return ROOT;
            }
            state = self.fail[state as usize];
        }
    }

    pub fn lang(&self) -> &LanguageCode {
        &self.lang
    }

    pub fn mode(&self) -> MatchMode {
        self.mode
    }

    pub fn pattern_count(&self) -> usize {
        self.pattern_len.len()
    }

    pub fn state_count(&self) -> usize {
        self.fail.len()
    }

    pub fn content_hash(&self) -> &str {
        &self.content_hash
    }

    /// Matched entry ids for text that is already normalized; sorted, unique.
    pub fn find_ids_normalized(&self, text: &str) -> Vec<u32> {
        let mut hits = Vec::new();
        match self.mode {
            MatchMode::Substring => {
                let mut state = ROOT;
                for c in text.chars() {
                    state = self.step(state, c);
                    self.emit(state, |pid| hits.push(pid));
                }
            }
            MatchMode::WordBoundary => {
                let chars: Vec<char> = text.chars().collect();
                let mut state = ROOT;
                for (end, &c) in chars.iter().enumerate() {
                    state = self.step(state, c);
                    self.emit(state, |pid| {
                        let start = end + 1 - self.pattern_len[pid as usize] as usize;
                        if super::at_word_boundary(&chars, start, end + 1) {
                            hits.push(pid);
                        }
                    });
                }
            }
        }
        hits.sort_unstable();
        hits.dedup();
        hits
    }

    #[inline]
    fn emit(&self, state: u32, mut f: impl FnMut(u32)) {
        let mut s = if self.output[state as usize] != NONE {
            state
        } else {
            self.dict_link[state as usize]
        };
        while s != NONE {
            f(self.output[s as usize]);
            s = self.dict_link[s as usize];
        }
    }

    /// Versioned little-endian dump, loadable with [`PatternAutomaton::read_from`].
    pub fn write_to(&self, path: &Path) -> Result<()> {
        let mut buf = Vec::with_capacity(64 + self.fail.len() * 16);
        buf.extend_from_slice(MAGIC);
        put_u32(&mut buf, FORMAT_VERSION);
        buf.push(match self.mode {
            MatchMode::Substring => 0,
            MatchMode::WordBoundary => 1,
        });
        put_str(&mut buf, self.lang.as_str());
        put_str(&mut buf, &self.content_hash);
        put_vec(&mut buf, &self.edge_start);
        put_vec(
            &mut buf,
            &self
                .edge_label
                .iter()
                .map(|&c| c as u32)
                .collect::<Vec<_>>(),
        );
        put_vec(&mut buf, &self.edge_target);
        put_vec(&mut buf, &self.fail);
        put_vec(&mut buf, &self.output);
        put_vec(&mut buf, &self.dict_link);
        put_vec(&mut buf, &self.pattern_len);
        let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(&buf).map_err(|e| Error::io(path, e))
    }

    pub fn read_from(path: &Path) -> Result<Self> {
        let mut bytes = Vec::new();
        fs::File::open(path)
            .and_then(|mut f| f.read_to_end(&mut bytes))
            .map_err(|e| Error::io(path, e))?;
        let bad = |what: &str| Error::validation(format!("{}: {what}", path.display()));
        let mut r = Reader {
            bytes: &bytes,
            pos: 0,
        };
        if r.take(8).ok_or_else(|| bad("truncated header"))? != MAGIC {
            return Err(bad("not an automaton cache file"));
        }
        let version = r.u32().ok_or_else(|| bad("truncated header"))?;
        if version != FORMAT_VERSION {
            return Err(bad(&format!(
                "unsupported automaton format version {version}"
            )));
        }
        let mode = match r.take(1).ok_or_else(|| bad("truncated header"))?[0] {
            0 => MatchMode::Substring,
            1 => MatchMode::WordBoundary,
            m => return Err(bad(&format!("unknown match mode {m}"))),
        };
        let lang = LanguageCode::new(r.string().ok_or_else(|| bad("truncated header"))?)?;
        let content_hash = r
            .string()
            .ok_or_else(|| bad("truncated header"))?
            .to_owned();
        let mut vecs = Vec::with_capacity(7);
        for _ in 0..7 {
            vecs.push(r.vec().ok_or_else(|| bad("truncated body"))?);
        }
        if r.pos != bytes.len() {
            return Err(bad("trailing bytes"));
        }
        let [edge_start, labels, edge_target, fail, output, dict_link, pattern_len]: [Vec<u32>; 7] =
            vecs.try_into().unwrap();
        let edge_label = labels
            .into_iter()
            .map(char::from_u32)
            .collect::<Option<Vec<char>>>()
            .ok_or_else(|| bad("invalid transition label"))?;
        let states = fail.len();
        let edges = edge_target.len();
        let consistent = edge_start.len() == states + 1
            && output.len() == states
            && dict_link.len() == states
            && edge_label.len() == edges
            && edge_start.last().copied() == Some(edges as u32)
            && edge_start.windows(2).all(|w| w[0] <= w[1])
            && edge_target
                .iter()
                .chain(&fail)
                .all(|&s| (s as usize) < states)
            && dict_link
                .iter()
                .all(|&s| s == NONE || (s as usize) < states)
            && output
                .iter()
                .all(|&p| p == NONE || (p as usize) < pattern_len.len());
        if states == 0 || !consistent {
            return Err(bad("inconsistent automaton tables"));
        }
        let mut root_ascii = vec![NONE; 128];
        for i in edge_start[0]..edge_start[1] {
            let c = edge_label[i as usize];
            if c.is_ascii() {
                root_ascii[c as usize] = edge_target[i as usize];
            }
        }
        Ok(Self {
            lang,
            mode,
            content_hash,
            edge_start,
            edge_label,
            edge_target,
            root_ascii,
            fail,
            output,
            dict_link,
            pattern_len,
        })
    }
}

fn put_u32(buf: &mut Vec<u8>, v: u32) {
    buf.extend_from_slice(&v.to_le_bytes());
}

fn put_str(buf: &mut Vec<u8>, s: &str) {
    put_u32(buf, s.len() as u32);
    buf.extend_from_slice(s.as_bytes());
}

fn put_vec(buf: &mut Vec<u8>, v: &[u32]) {
    buf.extend_from_slice(&(v.len() as u64).to_le_bytes());
    for x in v {
        put_u32(buf, *x);
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Option<&'a [u8]> {
        let end = self.pos.checked_add(n)?;
        let s = self.bytes.get(self.pos..end)?;
        self.pos = end;
        Some(s)
    }

    fn u32(&mut self) -> Option<u32> {
        Some(u32::from_le_bytes(self.take(4)?.try_into().ok()?))
    }

    fn string(&mut self) -> Option<&'a str> {
        let n = self.u32()? as usize;
        std::str::from_utf8(self.take(n)?).ok()
    }

    fn vec(&mut self) -> Option<Vec<u32>> {
        let n = u64::from_le_bytes(self.take(8)?.try_into().ok()?) as usize;
        let raw = self.take(n.checked_mul(4)?)?;
        Some(
            raw.chunks_exact(4)
                .map(|c| u32::from_le_bytes(c.try_into().unwrap()))
                .collect(),
        )
    }
}
