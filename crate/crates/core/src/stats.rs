//! Corpus counts, subword fertility and audits of generated instances.

use std::collections::BTreeMap;
use std::ops::AddAssign;
use std::path::Path;

use crate::error::{Error, Result};
use crate::examplegen::{open_instances, whole_words, PretrainingInstance};
use crate::ingest::Document;
use crate::report::{KvReport, Table};
use crate::tokenizer::{wordpiece_tokenize, DEFAULT_MAX_CHARS};
use crate::vocab::{Vocabulary, CLS_ID, MASK_ID, SEP_ID, UNK_ID};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Counts {
    pub documents: u64,
    pub sentences: u64,
    pub tokens: u64,
}

impl AddAssign for Counts {
    fn add_assign(&mut self, o: Self) {
        self.documents += o.documents;
        self.sentences += o.sentences;
        self.tokens += o.tokens;
    }
}

/// Counts keyed by (language, source). Language totals are derived, so they
/// always equal the sum of their sources.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CorpusStats {
    pub sources: BTreeMap<(String, String), Counts>,
}

impl CorpusStats {
    pub fn add_document(&mut self, doc: &Document) {
        let c = self
            .sources
            .entry((doc.language.clone(), doc.source_id.clone()))
            .or_default();
        c.documents += 1;
        c.sentences += doc.sentences.len() as u64;
        c.tokens += doc.token_count() as u64;
    }

    pub fn merge(&mut self, other: &CorpusStats) {
        for (k, c) in &other.sources {
            *self.sources.entry(k.clone()).or_default() += *c;
        }
    }

    pub fn languages(&self) -> BTreeMap<&str, Counts> {
        let mut out: BTreeMap<&str, Counts> = BTreeMap::new();
        for ((lang, _), c) in &self.sources {
            *out.entry(lang.as_str()).or_default() += *c;
        }
        out
    }

    pub fn total(&self) -> Counts {
        let mut t = Counts::default();
        for c in self.sources.values() {
            t += *c;
        }
        t
    }

    pub fn to_kv(&self) -> KvReport {
        let mut kv = KvReport::new();
        for (lang, c) in self.languages() {
            kv.push(format!("language.{lang}.documents"), c.documents);
            kv.push(format!("language.{lang}.sentences"), c.sentences);
            kv.push(format!("language.{lang}.tokens"), c.tokens);
        }
        for ((_, src), c) in &self.sources {
            kv.push(format!("source.{src}.documents"), c.documents);
            kv.push(format!("source.{src}.sentences"), c.sentences);
            kv.push(format!("source.{src}.tokens"), c.tokens);
        }
        kv
    }

    /// Language rows with their sources indented underneath.
    pub fn to_table(&self) -> Table {
        let mut table = Table::new(["corpus", "documents", "sentences", "tokens"]);
        let row = |name: String, c: &Counts| {
            [name, c.documents.to_string(), c.sentences.to_string(), c.tokens.to_string()]
        };
        for (lang, c) in self.languages() {
            table.row(row(lang.to_string(), &c));
            for ((l, src), c) in &self.sources {
                if l == lang {
                    table.row(row(format!("  {src}"), c));
                }
            }
        }
        table
    }
}

pub fn corpus_stats<'a>(docs: impl IntoIterator<Item = &'a Document>) -> CorpusStats {
    let mut stats = CorpusStats::default();
    for doc in docs {
        stats.add_document(doc);
    }
    stats
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct FertilityCounts {
    pub tokens: u64,
    pub pieces: u64,
    /// Basic tokens that became `[UNK]`.
    pub unknown: u64,
}

impl FertilityCounts {
    pub fn fertility(&self) -> f64 {
        self.pieces as f64 / self.tokens as f64
    }
}

/// Mean WordPiece pieces per basic token, per language.
pub fn fertility<'a>(
    docs: impl IntoIterator<Item = &'a Document>,
    vocab: &Vocabulary,
) -> Result<BTreeMap<String, FertilityCounts>> {
    let mut out: BTreeMap<String, FertilityCounts> = BTreeMap::new();
    for doc in docs {
        let entry = out.entry(doc.language.clone()).or_default();
        for s in &doc.sentences {
            for token in s.tokens().iter() {
                let ids = wordpiece_tokenize(token, vocab, DEFAULT_MAX_CHARS);
                entry.tokens += 1;
                entry.pieces += ids.len() as u64;
                entry.unknown += u64::from(ids == [UNK_ID]);
            }
        }
    }
    out.retain(|_, c| c.tokens > 0);
    if out.is_empty() {
        return Err(Error::Empty("fertility needs at least one token".into()));
    }
    Ok(out)
}

pub fn fertility_kv(f: &BTreeMap<String, FertilityCounts>) -> KvReport {
    let mut kv = KvReport::new();
    for (lang, c) in f {
        kv.push(format!("{lang}.tokens"), c.tokens);
        kv.push(format!("{lang}.pieces"), c.pieces);
        kv.push(format!("{lang}.unknown"), c.unknown);
        kv.push_fraction(format!("{lang}.fertility"), c.fertility());
    }
    kv
}

/// Bucket width of the audit length histogram.
pub const LENGTH_BUCKET: usize = 16;

#[derive(Debug, Clone, Default, PartialEq)]
pub struct AuditReport {
    pub instances: u64,
    pub non_special: u64,
    pub masked: u64,
    pub mask_token: u64,
    pub random: u64,
    /// A random replacement that drew the original id lands here.
    pub unchanged: u64,
    pub random_next: u64,
    /// Lower bucket edge to instance count.
    pub lengths: BTreeMap<usize, u64>,
    pub violations: u64,
    /// The first few violation messages.
    pub examples: Vec<String>,
}

const MAX_EXAMPLES: usize = 20;

impl AuditReport {
    fn share(num: u64, den: u64) -> f64 {
        if den == 0 {
            0.0
        } else {
            num as f64 / den as f64
        }
    }

    pub fn masked_fraction(&self) -> f64 {
        Self::share(self.masked, self.non_special)
    }

    pub fn mask_token_share(&self) -> f64 {
        Self::share(self.mask_token, self.masked)
    }

    pub fn random_share(&self) -> f64 {
        Self::share(self.random, self.masked)
    }

    pub fn unchanged_share(&self) -> f64 {
        Self::share(self.unchanged, self.masked)
    }

    pub fn random_next_share(&self) -> f64 {
        Self::share(self.random_next, self.instances)
    }

    pub fn merge(&mut self, o: &AuditReport) {
        self.instances += o.instances;
        self.non_special += o.non_special;
        self.masked += o.masked;
        self.mask_token += o.mask_token;
        self.random += o.random;
        self.unchanged += o.unchanged;
        self.random_next += o.random_next;
        for (edge, n) in &o.lengths {
            *self.lengths.entry(*edge).or_default() += n;
        }
        self.violations += o.violations;
        let room = MAX_EXAMPLES.saturating_sub(self.examples.len());
        self.examples.extend(o.examples.iter().take(room).cloned());
    }

    fn violation(&mut self, index: u64, msg: impl std::fmt::Display) {
        self.violations += 1;
        if self.examples.len() < MAX_EXAMPLES {
            self.examples.push(format!("instance {index}: {msg}"));
        }
    }

    /// Checks one instance and folds it into the totals.
    pub fn observe(
        &mut self,
        inst: &PretrainingInstance,
        vocab: &Vocabulary,
        max_seq_len: usize,
        max_predictions: usize,
    ) {
        let index = self.instances;
        self.instances += 1;
        self.random_next += u64::from(inst.is_random_next);
        *self.lengths.entry(inst.ids.len() / LENGTH_BUCKET * LENGTH_BUCKET).or_default() += 1;

        let n = inst.ids.len();
        if n != inst.segment_ids.len() {
            self.violation(index, "ids and segment ids differ in length");
            return;
        }
        if n > max_seq_len {
            self.violation(index, format!("length {n} exceeds {max_seq_len}"));
        }
        if let Some(id) = inst.ids.iter().find(|&&id| id as usize >= vocab.len()) {
            self.violation(index, format!("id {id} outside the vocabulary"));
            return;
        }
        if !layout_ok(inst) {
            self.violation(index, "not laid out as [CLS] A [SEP] B [SEP]");
        }
        if inst.masked_positions.len() != inst.masked_labels.len() {
            self.violation(index, "positions and labels differ in length");
            return;
        }
        if inst.masked_positions.len() > max_predictions {
            self.violation(
                index,
                format!("{} predictions exceed {max_predictions}", inst.masked_positions.len()),
            );
        }
        if !inst.masked_positions.windows(2).all(|w| w[0] < w[1]) {
            self.violation(index, "masked positions not strictly ascending");
        }
        if inst.masked_positions.iter().any(|&p| p as usize >= n) {
            self.violation(index, "masked position past the end");
            return;
        }

        let mut original = inst.ids.clone();
        for (&p, &label) in inst.masked_positions.iter().zip(&inst.masked_labels) {
            original[p as usize] = label;
        }
        self.non_special += original.iter().filter(|&&id| !Vocabulary::is_special_id(id)).count() as u64;
        for (&p, &label) in inst.masked_positions.iter().zip(&inst.masked_labels) {
            let shown = inst.ids[p as usize];
            if Vocabulary::is_special_id(label) {
                self.violation(index, format!("position {p} labels a special token"));
                continue;
            }
            self.masked += 1;
            if shown == label {
                self.unchanged += 1;
            } else if shown == MASK_ID {
                self.mask_token += 1;
            } else if Vocabulary::is_special_id(shown) {
                self.violation(index, format!("position {p} replaced by a special token"));
            } else {
                self.random += 1;
            }
        }

        let masked: std::collections::HashSet<usize> =
            inst.masked_positions.iter().map(|&p| p as usize).collect();
        for word in whole_words(&original, vocab) {
            let hit = word.iter().filter(|p| masked.contains(p)).count();
            if hit != 0 && hit != word.len() {
                self.violation(
                    index,
                    format!("word at {:?} partially masked ({hit} of {})", word, word.len()),
                );
            }
        }
    }

    pub fn to_kv(&self) -> KvReport {
        let mut kv = KvReport::new();
        kv.push("instances", self.instances);
        kv.push("non_special_pieces", self.non_special);
        kv.push("masked_pieces", self.masked);
        kv.push_fraction("masked_fraction", self.masked_fraction());
        kv.push_fraction("mask_token_share", self.mask_token_share());
        kv.push_fraction("random_share", self.random_share());
        kv.push_fraction("unchanged_share", self.unchanged_share());
        kv.push_fraction("random_next_share", self.random_next_share());
        for (edge, count) in &self.lengths {
            kv.push(format!("length.{edge:04}"), count);
        }
        kv.push("violations", self.violations);
        kv
    }
}

fn layout_ok(inst: &PretrainingInstance) -> bool {
    let ids = &inst.ids;
    if ids.first() != Some(&CLS_ID) || ids.last() != Some(&SEP_ID) || ids[1..].contains(&CLS_ID) {
        return false;
    }
    let seps: Vec<usize> = ids
        .iter()
        .enumerate()
        .filter(|(_, &id)| id == SEP_ID)
        .map(|(i, _)| i)
        .collect();
    if seps.is_empty() || seps.len() > 2 {
        return false;
    }
    let first_sep = seps[0];
    inst.segment_ids
        .iter()
        .enumerate()
        .all(|(i, &s)| s == u8::from(i > first_sep))
}

/// Audits every instance of `instances` against `vocab`.
pub fn audit_stream<'a>(
    instances: impl IntoIterator<Item = &'a PretrainingInstance>,
    vocab: &Vocabulary,
    max_seq_len: usize,
    max_predictions: usize,
) -> AuditReport {
    let mut report = AuditReport::default();
    for inst in instances {
        report.observe(inst, vocab, max_seq_len, max_predictions);
    }
    report
}

/// Audits an instance file; the file must have been written against `vocab`.
pub fn audit_instances(path: &Path, vocab: &Vocabulary) -> Result<AuditReport> {
    let reader = open_instances(path, Some(vocab.checksum()))?;
    let max_seq_len = reader.header.max_seq_len as usize;
    let max_predictions = reader.header.max_predictions as usize;
    let mut report = AuditReport::default();
    for inst in reader {
        report.observe(&inst?, vocab, max_seq_len, max_predictions);
    }
    Ok(report)
}
