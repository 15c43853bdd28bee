//! Packing documents into segment pairs.
//!
//! Chunk boundaries are drawn once per source and shared by every pass, so
//! each pass yields the same number of instances. Per pass, a fresh substream
//! decides the A/B split, the next-sentence coin and the masking.

use rand::Rng;
use rayon::prelude::*;

use super::{apply_whole_word_masking, MaskingConfig, PretrainingInstance};
use crate::error::Result;
use crate::ingest::Document;
use crate::report::KvReport;
use crate::rng::{substream, StageRng};
use crate::tokenizer::{assemble_pair, wordpiece_tokenize, DEFAULT_MAX_CHARS};
use crate::vocab::Vocabulary;

/// A sentence as WordPiece ids grouped by basic token.
type Words = Vec<Vec<u32>>;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenizedDocument {
    pub sentences: Vec<Words>,
}

impl TokenizedDocument {
    fn sentence_len(&self, i: usize) -> usize {
        self.sentences[i].iter().map(Vec::len).sum()
    }
}

/// WordPiece-tokenizes documents, dropping sentences without pieces and
/// documents without sentences.
pub fn tokenize_documents(docs: &[Document], vocab: &Vocabulary) -> Vec<TokenizedDocument> {
    docs.par_iter()
        .map(|doc| {
            let sentences = doc
                .sentences
                .iter()
                .map(|s| {
                    s.tokens()
                        .iter()
                        .map(|w| wordpiece_tokenize(w, vocab, DEFAULT_MAX_CHARS))
                        .filter(|p| !p.is_empty())
                        .collect::<Words>()
                })
                .filter(|w| !w.is_empty())
                .collect();
            TokenizedDocument { sentences }
        })
        .collect::<Vec<_>>()
        .into_iter()
        .filter(|d| !d.sentences.is_empty())
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Chunk {
    pub doc: usize,
    /// Sentence range `start..end`.
    pub start: usize,
    pub end: usize,
    /// Piece budget for A and B together.
    pub target: usize,
}

fn draw_target(max_num_tokens: usize, cfg: &MaskingConfig, rng: &mut StageRng) -> usize {
    if max_num_tokens > 2 && rng.gen_bool(cfg.short_seq_prob) {
        rng.gen_range(2..=max_num_tokens)
    } else {
        max_num_tokens
    }
}

/// Groups consecutive sentences until their length reaches a target of
/// `max_seq_len - 3` pieces (or, with `short_seq_prob`, a uniform shorter
/// target). A one-sentence chunk needs two words so it can be split.
pub fn plan_chunks(
    docs: &[TokenizedDocument],
    cfg: &MaskingConfig,
    rng: &mut StageRng,
) -> Vec<Chunk> {
    let max_num_tokens = cfg.max_seq_len.saturating_sub(3).max(1);
    let mut chunks = Vec::new();
    for (d, doc) in docs.iter().enumerate() {
        let mut target = draw_target(max_num_tokens, cfg, rng);
        let mut start = 0;
        let mut len = 0;
        for i in 0..doc.sentences.len() {
            len += doc.sentence_len(i);
            let last = i + 1 == doc.sentences.len();
            if len >= target || last {
                let end = i + 1;
                let splittable = end - start >= 2 || doc.sentences[start].len() >= 2;
                if splittable {
                    chunks.push(Chunk {
                        doc: d,
                        start,
                        end,
                        target,
                    });
                }
                start = end;
                len = 0;
                target = draw_target(max_num_tokens, cfg, rng);
            }
        }
    }
    chunks
}

fn flatten<'a>(words: impl IntoIterator<Item = &'a Vec<u32>>) -> Vec<u32> {
    words.into_iter().flatten().copied().collect()
}

fn sentences_ids(doc: &TokenizedDocument, range: std::ops::Range<usize>) -> Vec<u32> {
    flatten(doc.sentences[range].iter().flatten())
}

/// Sentences from `doc` starting at a random index, stopping at `limit`
/// (exclusive) once `target_b` pieces are collected.
fn random_segment(
    doc: &TokenizedDocument,
    candidates: &[std::ops::Range<usize>],
    target_b: usize,
    rng: &mut StageRng,
) -> Vec<u32> {
    let total: usize = candidates.iter().map(|r| r.len()).sum();
    let mut pick = rng.gen_range(0..total);
    let range = candidates
        .iter()
        .find(|r| {
            if pick < r.len() {
                true
            } else {
                pick -= r.len();
                false
            }
        })
        .expect("pick within candidates");
    let mut out = Vec::new();
    for i in range.start + pick..range.end {
        out.extend(doc.sentences[i].iter().flatten());
        if out.len() >= target_b {
            break;
        }
    }
    out
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SourceGeneration {
    pub source_id: String,
    pub documents: usize,
    pub factor: u64,
    /// Instances per pass.
    pub one_pass: usize,
    pub instances: usize,
    pub random_next: usize,
    /// Random-next segments taken from the same document because the source
    /// has only one.
    pub same_document_random: usize,
    pub non_special: usize,
    pub masked: usize,
}

impl SourceGeneration {
    pub fn single_document(&self) -> bool {
        self.documents == 1
    }

    pub fn to_kv(&self) -> KvReport {
        let mut kv = KvReport::new();
        kv.push("documents", self.documents);
        kv.push("factor", self.factor);
        kv.push("one_pass", self.one_pass);
        kv.push("instances", self.instances);
        kv.push("random_next", self.random_next);
        kv.push("single_document", self.single_document());
        kv.push("same_document_random", self.same_document_random);
        kv.push("non_special_pieces", self.non_special);
        kv.push("masked_pieces", self.masked);
        kv
    }
}

/// Instances one pass would yield, without masking.
pub fn count_instances(docs: &[Document], vocab: &Vocabulary, cfg: &MaskingConfig, seed: u64) -> usize {
    let Some(source_id) = docs.first().map(|d| d.source_id.clone()) else {
        return 0;
    };
    let tokenized = tokenize_documents(docs, vocab);
    plan_chunks(&tokenized, cfg, &mut substream(seed, &["chunks", &source_id])).len()
}

fn build_pass(
    docs: &[TokenizedDocument],
    chunks: &[Chunk],
    vocab: &Vocabulary,
    cfg: &MaskingConfig,
    rng: &mut StageRng,
) -> (Vec<PretrainingInstance>, usize) {
    let mut out = Vec::with_capacity(chunks.len());
    let mut same_document = 0;
    for chunk in chunks {
        let doc = &docs[chunk.doc];
        let mut is_random = rng.gen_bool(cfg.random_next_prob);

        let (a, rest) = if chunk.end - chunk.start >= 2 {
            let a_end = rng.gen_range(chunk.start + 1..chunk.end);
            (
                sentences_ids(doc, chunk.start..a_end),
                sentences_ids(doc, a_end..chunk.end),
            )
        } else {
            let words = &doc.sentences[chunk.start];
            let split = rng.gen_range(1..words.len());
            (flatten(&words[..split]), flatten(&words[split..]))
        };

        let b = if is_random {
            let target_b = chunk.target.saturating_sub(a.len()).max(1);
            if docs.len() > 1 {
                let mut other = rng.gen_range(0..docs.len() - 1);
                if other >= chunk.doc {
                    other += 1;
                }
                let all = 0..docs[other].sentences.len();
                random_segment(&docs[other], std::slice::from_ref(&all), target_b, rng)
            } else {
                let outside: Vec<_> = [0..chunk.start, chunk.end..doc.sentences.len()]
                    .into_iter()
                    .filter(|r| !r.is_empty())
                    .collect();
                if outside.is_empty() {
                    // nothing else to draw from: fall back to the true continuation
                    is_random = false;
                    rest
                } else {
                    same_document += 1;
                    random_segment(doc, &outside, target_b, rng)
                }
            }
        } else {
            rest
        };

        let pair = assemble_pair(a, Some(b), vocab, cfg.max_seq_len);
        let mut ids = pair.ids;
        let masked = apply_whole_word_masking(&mut ids, vocab, cfg, rng);
        out.push(PretrainingInstance {
            ids,
            segment_ids: pair.segment_ids,
            masked_positions: masked.positions,
            masked_labels: masked.labels,
            is_random_next: is_random,
        });
    }
    (out, same_document)
}

/// Generates `factor` passes over one source's documents. Passes run in
/// parallel on independent substreams and are returned in pass order.
pub fn build_instances(
    docs: &[Document],
    vocab: &Vocabulary,
    cfg: &MaskingConfig,
    factor: u64,
    seed: u64,
) -> Result<(Vec<PretrainingInstance>, SourceGeneration)> {
    cfg.validate()?;
    if factor == 0 {
        return Err(crate::Error::Config("duplication factor must be at least 1".into()));
    }
    let Some(source_id) = docs.first().map(|d| d.source_id.clone()) else {
        return Ok((Vec::new(), SourceGeneration { factor, ..Default::default() }));
    };
    let tokenized = tokenize_documents(docs, vocab);
    let chunks = plan_chunks(&tokenized, cfg, &mut substream(seed, &["chunks", &source_id]));

    let passes: Vec<(Vec<PretrainingInstance>, usize)> = (0..factor)
        .into_par_iter()
        .map(|pass| {
            let mut rng = substream(seed, &["examples", &source_id, "pass", &pass.to_string()]);
            build_pass(&tokenized, &chunks, vocab, cfg, &mut rng)
        })
        .collect();

    let mut report = SourceGeneration {
        source_id,
        documents: tokenized.len(),
        factor,
        one_pass: chunks.len(),
        ..Default::default()
    };
    let mut instances = Vec::with_capacity(chunks.len() * factor as usize);
    for (pass, same_document) in passes {
        report.same_document_random += same_document;
        instances.extend(pass);
    }
    for inst in &instances {
        report.random_next += usize::from(inst.is_random_next);
        report.non_special += inst.ids.iter().filter(|&&id| !Vocabulary::is_special_id(id)).count();
        report.masked += inst.masked_positions.len();
    }
    report.instances = instances.len();
    Ok((instances, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::Sentence;
    use crate::vocab::{CLS_ID, SEP_ID, SPECIAL_TOKENS};

    fn vocab() -> Vocabulary {
        let mut pieces: Vec<String> = SPECIAL_TOKENS.iter().map(|s| s.to_string()).collect();
        for w in ["the", "cat", "sat", "on", "mat", "a", "dog", "ran", "far", "."] {
            pieces.push(w.into());
        }
        pieces.push("##s".into());
        Vocabulary::from_pieces(pieces).unwrap()
    }

    fn doc(id: &str, sentences: &[&str]) -> Document {
        Document {
            doc_id: id.into(),
            source_id: "src".into(),
            language: "en".into(),
            sentences: sentences.iter().map(|s| Sentence::tokenized(*s)).collect(),
        }
    }

    fn corpus() -> Vec<Document> {
        (0..6)
            .map(|i| {
                doc(
                    &format!("d{i}"),
                    &[
                        "the cat sat on the mat .",
                        "a dog ran far .",
                        "the cats ran .",
                        "a dog sat on a mat .",
                    ],
                )
            })
            .collect()
    }

    fn check_layout(inst: &PretrainingInstance, max_len: usize) {
        assert!(inst.ids.len() <= max_len);
        assert_eq!(inst.ids.len(), inst.segment_ids.len());
        assert_eq!(inst.ids[0], CLS_ID);
        assert_eq!(*inst.ids.last().unwrap(), SEP_ID);
        let seps = inst.ids.iter().filter(|&&i| i == SEP_ID).count();
        assert_eq!(seps, 2);
        assert_eq!(inst.masked_positions.len(), inst.masked_labels.len());
    }

    #[test]
    fn factor_multiplies_one_pass() {
        let v = vocab();
        let cfg = MaskingConfig {
            max_seq_len: 16,
            ..Default::default()
        };
        let docs = corpus();
        let one = count_instances(&docs, &v, &cfg, 7);
        let (inst, report) = build_instances(&docs[..2], &v, &cfg, 2, 7).unwrap();
        assert_eq!(inst.len(), 2 * count_instances(&docs[..2], &v, &cfg, 7));
        assert_eq!(report.one_pass * 2, report.instances);
        let (inst, _) = build_instances(&docs, &v, &cfg, 3, 7).unwrap();
        assert_eq!(inst.len(), 3 * one);
        for i in &inst {
            check_layout(i, 16);
        }
    }

    #[test]
    fn passes_differ() {
        let v = vocab();
        let cfg = MaskingConfig::default();
        let (inst, r) = build_instances(&corpus(), &v, &cfg, 2, 1).unwrap();
        assert_ne!(inst[..r.one_pass], inst[r.one_pass..]);
    }

    #[test]
    fn no_random_next_when_disabled() {
        let v = vocab();
        let cfg = MaskingConfig {
            random_next_prob: 0.0,
            max_seq_len: 12,
            ..Default::default()
        };
        let (inst, _) = build_instances(&corpus(), &v, &cfg, 2, 3).unwrap();
        assert!(!inst.is_empty());
        assert!(inst.iter().all(|i| !i.is_random_next));
    }

    #[test]
    fn deterministic() {
        let v = vocab();
        let cfg = MaskingConfig::default();
        let a = build_instances(&corpus(), &v, &cfg, 2, 11).unwrap();
        let b = build_instances(&corpus(), &v, &cfg, 2, 11).unwrap();
        assert_eq!(a, b);
        let c = build_instances(&corpus(), &v, &cfg, 2, 12).unwrap();
        assert_ne!(a.0, c.0);
    }

    #[test]
    fn single_document_random_next_is_flagged() {
        let v = vocab();
        let cfg = MaskingConfig {
            random_next_prob: 1.0,
            max_seq_len: 10,
            short_seq_prob: 0.0,
            ..Default::default()
        };
        let docs = corpus()[..1].to_vec();
        let (inst, report) = build_instances(&docs, &v, &cfg, 1, 5).unwrap();
        assert!(report.single_document());
        assert!(report.same_document_random > 0);
        assert!(inst.iter().any(|i| i.is_random_next));
        assert_eq!(report.to_kv().get("single_document"), Some("true"));
    }

    #[test]
    fn single_sentence_chunks_split_on_words() {
        let v = vocab();
        let cfg = MaskingConfig {
            random_next_prob: 0.0,
            ..Default::default()
        };
        let docs = vec![doc("x", &["the cat sat on the mat ."])];
        let (inst, _) = build_instances(&docs, &v, &cfg, 1, 0).unwrap();
        assert_eq!(inst.len(), 1);
        check_layout(&inst[0], 128);
        // seven words plus three specials
        assert_eq!(inst[0].ids.len(), 10);
        // a lone one-word sentence cannot form a pair
        let docs = vec![doc("y", &["cat"])];
        assert_eq!(count_instances(&docs, &v, &cfg, 0), 0);
    }

    #[test]
    fn empty_input() {
        let v = vocab();
        let (inst, report) = build_instances(&[], &v, &MaskingConfig::default(), 1, 0).unwrap();
        assert!(inst.is_empty());
        assert_eq!(report.instances, 0);
    }
}
