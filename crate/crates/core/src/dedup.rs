//! One-pass duplicate removal over n-gram shingles.
//!
//! Documents are visited in order. A document whose shingles were already
//! seen in more than `threshold` of its windows is dropped; otherwise it is
//! kept and its shingles join the index, so the first occurrence always wins.

use std::collections::HashSet;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use xxhash_rust::xxh3::xxh3_64_with_seed;

use crate::error::{Error, Result};
use crate::ingest::Document;
use crate::report::KvReport;

/// Fixed seed for shingle hashing; changing it changes every decision.
pub const SHINGLE_SEED: u64 = 0x5348_494e_474c_4531;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Granularity {
    Document,
    /// Every sentence line is judged on its own; documents keep their
    /// surviving sentences.
    Paragraph,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DedupConfig {
    pub n: usize,
    pub threshold: f64,
    pub granularity: Granularity,
}

impl Default for DedupConfig {
    fn default() -> Self {
        Self {
            n: 5,
            threshold: 0.5,
            granularity: Granularity::Document,
        }
    }
}

impl DedupConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n < 2 {
            return Err(Error::Config(format!("shingle order must be >= 2, got {}", self.n)));
        }
        if !(self.threshold > 0.0 && self.threshold <= 1.0) {
            return Err(Error::Config(format!(
                "dedup threshold must lie in (0, 1], got {}",
                self.threshold
            )));
        }
        Ok(())
    }
}

/// One hash per contiguous window of `n` tokens, case-folded.
pub fn shingles<S: AsRef<str>>(tokens: &[S], n: usize) -> Vec<u64> {
    assert!(n >= 2, "shingle order must be >= 2");
    if tokens.len() < n {
        return Vec::new();
    }
    let folded: Vec<String> = tokens.iter().map(|t| t.as_ref().to_lowercase()).collect();
    let mut buf = Vec::with_capacity(64);
    folded
        .windows(n)
        .map(|window| {
            buf.clear();
            for tok in window {
                buf.extend_from_slice(tok.as_bytes());
                // U+001F never survives basic tokenization
                buf.push(0x1f);
            }
            xxh3_64_with_seed(&buf, SHINGLE_SEED)
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct ShingleIndex {
    seen: HashSet<u64>,
    pub n: usize,
    pub threshold: f64,
}

impl ShingleIndex {
    pub fn new(n: usize, threshold: f64) -> Result<Self> {
        DedupConfig {
            n,
            threshold,
            granularity: Granularity::Document,
        }
        .validate()?;
        Ok(Self {
            seen: HashSet::new(),
            n,
            threshold,
        })
    }

    pub fn from_config(cfg: &DedupConfig) -> Result<Self> {
        Self::new(cfg.n, cfg.threshold)
    }

    pub fn len(&self) -> usize {
        self.seen.len()
    }

    pub fn is_empty(&self) -> bool {
        self.seen.is_empty()
    }

    pub fn contains(&self, hash: u64) -> bool {
        self.seen.contains(&hash)
    }

    /// Share of `hashes` already in the index.
    pub fn overlap(&self, hashes: &[u64]) -> f64 {
        if hashes.is_empty() {
            return 0.0;
        }
        let hits = hashes.iter().filter(|h| self.seen.contains(h)).count();
        hits as f64 / hashes.len() as f64
    }

    pub fn insert_all(&mut self, hashes: &[u64]) {
        self.seen.extend(hashes.iter().copied());
    }

    /// Decides one unit and updates the index. `None` means the unit was too
    /// short to shingle and is kept unconditionally.
    fn judge(&mut self, hashes: &[u64]) -> Option<bool> {
        if hashes.is_empty() {
            return None;
        }
        let keep = self.overlap(hashes) <= self.threshold;
        if keep {
            self.insert_all(hashes);
        }
        Some(keep)
    }

    /// Writes the index as sorted little-endian u64 values.
    pub fn write_spill(&self, path: &Path) -> Result<()> {
        let mut values: Vec<u64> = self.seen.iter().copied().collect();
        values.sort_unstable();
        let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut out = BufWriter::new(file);
        for v in values {
            out.write_all(&v.to_le_bytes()).map_err(|e| Error::io(path, e))?;
        }
        out.flush().map_err(|e| Error::io(path, e))
    }

    /// Adds the hashes of a spill file to the index.
    pub fn load_spill(&mut self, path: &Path) -> Result<()> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        if bytes.len() % 8 != 0 {
            return Err(Error::Corrupt(format!(
                "spill file {} is not a whole number of u64 values",
                path.display()
            )));
        }
        let mut prev = None;
        for chunk in bytes.chunks_exact(8) {
            let v = u64::from_le_bytes(chunk.try_into().expect("chunk of 8"));
            if prev.is_some_and(|p| p >= v) {
                return Err(Error::Corrupt(format!(
                    "spill file {} is not strictly sorted",
                    path.display()
                )));
            }
            prev = Some(v);
            self.seen.insert(v);
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct DedupReport {
    pub input: usize,
    pub kept: usize,
    pub dropped: usize,
    pub too_short_kept: usize,
    /// Paragraph mode only.
    pub sentences_dropped: usize,
}

impl DedupReport {
    pub fn balances(&self) -> bool {
        self.input == self.kept + self.dropped + self.too_short_kept
    }

    pub fn merge(&mut self, other: &DedupReport) {
        self.input += other.input;
        self.kept += other.kept;
        self.dropped += other.dropped;
        self.too_short_kept += other.too_short_kept;
        self.sentences_dropped += other.sentences_dropped;
    }

    pub fn to_kv(&self) -> KvReport {
        let mut kv = KvReport::new();
        kv.push("input", self.input);
        kv.push("kept", self.kept);
        kv.push("dropped", self.dropped);
        kv.push("too_short_kept", self.too_short_kept);
        kv.push("sentences_dropped", self.sentences_dropped);
        kv
    }
}

/// Streams `documents` through `index`. Shingles are computed in parallel;
/// keep/drop decisions are made sequentially in input order.
pub fn dedup_stream(
    documents: Vec<Document>,
    index: &mut ShingleIndex,
    granularity: Granularity,
) -> (Vec<Document>, DedupReport) {
    let n = index.n;
    let mut report = DedupReport::default();
    let mut kept = Vec::new();
    match granularity {
        Granularity::Document => {
            let hashes: Vec<Vec<u64>> = documents
                .par_iter()
                .map(|doc| {
                    let tokens: Vec<String> = doc
                        .sentences
                        .iter()
                        .flat_map(|s| s.tokens().into_owned())
                        .collect();
                    shingles(&tokens, n)
                })
                .collect();
            report.input = documents.len();
            for (doc, h) in documents.into_iter().zip(hashes) {
                match index.judge(&h) {
                    None => {
                        report.too_short_kept += 1;
                        kept.push(doc);
                    }
                    Some(true) => {
                        report.kept += 1;
                        kept.push(doc);
                    }
                    Some(false) => report.dropped += 1,
                }
            }
        }
        Granularity::Paragraph => {
            let hashes: Vec<Vec<Vec<u64>>> = documents
                .par_iter()
                .map(|doc| {
                    doc.sentences
                        .iter()
                        .map(|s| shingles(&s.tokens(), n))
                        .collect()
                })
                .collect();
            report.input = documents.len();
            for (mut doc, per_sentence) in documents.into_iter().zip(hashes) {
                let mut any_shingled = false;
                let mut survivors = Vec::with_capacity(doc.sentences.len());
                for (sentence, h) in doc.sentences.into_iter().zip(per_sentence) {
                    match index.judge(&h) {
                        Some(false) => {
                            any_shingled = true;
                            report.sentences_dropped += 1;
                        }
                        verdict => {
                            any_shingled |= verdict.is_some();
                            survivors.push(sentence);
                        }
                    }
                }
                if !any_shingled {
                    report.too_short_kept += 1;
                    doc.sentences = survivors;
                    kept.push(doc);
                } else if survivors.is_empty() {
                    report.dropped += 1;
                } else {
                    report.kept += 1;
                    doc.sentences = survivors;
                    kept.push(doc);
                }
            }
        }
    }
    (kept, report)
}
