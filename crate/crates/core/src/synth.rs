//! Deterministic synthetic corpora for tests and fixtures.
//!
//! Sentences are drawn word by word from the bundled language-profile texts,
//! so character statistics match the language while word sequences almost
//! never repeat. Optional noise lines, book boilerplate and verbatim
//! duplicate documents exercise the filter and dedup stages.

use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::{Error, Result};
use crate::filter::LanguageProfiles;
use crate::ingest::{Document, Sentence};
use crate::rng::{substream, StageRng};

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub language: String,
    pub documents: usize,
    pub min_sentences: usize,
    pub max_sentences: usize,
    /// Share of documents that get one noisy sentence.
    pub noise_rate: f64,
    /// Share of documents emitted as a verbatim copy of an earlier one.
    pub duplicate_rate: f64,
    /// Prefix documents with copyright and contents lines.
    pub book: bool,
}

impl SynthConfig {
    pub fn new(language: &str, documents: usize) -> Self {
        Self {
            language: language.to_string(),
            documents,
            min_sentences: 2,
            max_sentences: 8,
            noise_rate: 0.0,
            duplicate_rate: 0.0,
            book: false,
        }
    }
}

const NOISE_FOREIGN: [&str; 8] = [
    "λόγος", "θάλασσα", "город", "книга", "время", "φως", "улица", "ήλιος",
];

struct Lexicon {
    words: Vec<String>,
}

impl Lexicon {
    fn for_language(language: &str) -> Result<Self> {
        let text = LanguageProfiles::bundled_text(language)
            .ok_or_else(|| Error::Config(format!("no bundled text for language `{language}`")))?;
        let words = text
            .split(|c: char| !c.is_alphabetic())
            .filter(|w| !w.is_empty())
            .map(str::to_lowercase)
            .collect();
        Ok(Self { words })
    }

    fn sentence(&self, rng: &mut StageRng) -> String {
        let n = rng.gen_range(5..=16);
        let mut out = String::new();
        for i in 0..n {
            let w = self.words.choose(rng).expect("non-empty lexicon");
            if i == 0 {
                let mut chars = w.chars();
                let first = chars.next().expect("non-empty word");
                out.extend(first.to_uppercase());
                out.push_str(chars.as_str());
            } else {
                out.push(' ');
                out.push_str(w);
            }
            if i + 1 < n && rng.gen_bool(0.08) {
                out.push(',');
            }
        }
        out.push(if rng.gen_bool(0.1) { '?' } else { '.' });
        out
    }
}

fn noise(rng: &mut StageRng, lex: &Lexicon) -> String {
    match rng.gen_range(0..3) {
        0 => lex.sentence(rng).to_uppercase(),
        1 => (0..8)
            .map(|_| rng.gen_range(10..100_000).to_string())
            .collect::<Vec<_>>()
            .join(" "),
        _ => (0..6)
            .map(|_| *NOISE_FOREIGN.choose(rng).expect("non-empty"))
            .collect::<Vec<_>>()
            .join(" "),
    }
}

fn book_front_matter(rng: &mut StageRng) -> Vec<String> {
    let year = rng.gen_range(1950..2020);
    let mut lines = vec![format!("Copyright © {year} Example Press. All rights reserved."), "Contents".into()];
    let chapters = rng.gen_range(2..5);
    for c in 1..=chapters {
        lines.push(format!("Chapter {c} .......... {}", c * 11));
    }
    lines
}

/// Documents with ids `<source_id>-<n>`.
pub fn synth_documents(source_id: &str, cfg: &SynthConfig, seed: u64) -> Result<Vec<Document>> {
    let lex = Lexicon::for_language(&cfg.language)?;
    let mut rng = substream(seed, &["synth", source_id]);
    let mut docs: Vec<Document> = Vec::with_capacity(cfg.documents);
    for n in 0..cfg.documents {
        let doc_id = format!("{source_id}-{n}");
        if !docs.is_empty() && rng.gen_bool(cfg.duplicate_rate) {
            let original = &docs[rng.gen_range(0..docs.len())];
            docs.push(Document {
                doc_id,
                ..original.clone()
            });
            continue;
        }
        let count = rng.gen_range(cfg.min_sentences..=cfg.max_sentences);
        let mut lines: Vec<String> = (0..count).map(|_| lex.sentence(&mut rng)).collect();
        if rng.gen_bool(cfg.noise_rate) {
            let at = rng.gen_range(0..=lines.len());
            lines.insert(at, noise(&mut rng, &lex));
        }
        if cfg.book {
            let mut front = book_front_matter(&mut rng);
            front.extend(lines);
            lines = front;
        }
        docs.push(Document {
            doc_id,
            source_id: source_id.to_string(),
            language: cfg.language.clone(),
            sentences: lines.into_iter().map(Sentence::new).collect(),
        });
    }
    Ok(docs)
}

/// Renders documents as blank-line separated blocks; with `paragraphs`, each
/// document's sentences share one line.
pub fn render_blocks(docs: &[Document], paragraphs: bool) -> String {
    let mut out = String::new();
    for doc in docs {
        if paragraphs {
            let line: Vec<&str> = doc.sentences.iter().map(|s| s.text.as_str()).collect();
            out.push_str(&line.join(" "));
            out.push('\n');
        } else {
            for s in &doc.sentences {
                out.push_str(&s.text);
                out.push('\n');
            }
        }
        out.push('\n');
    }
    out
}

/// Seed of the committed fixture corpora.
pub const FIXTURE_SEED: u64 = 20_240_601;

/// The committed fixture corpora as `(file name, contents)`: two English
/// and three Finnish sources with some noise, book boilerplate and
/// duplicated documents.
pub fn fixture_corpora() -> Result<Vec<(String, String)>> {
    let plan: [(&str, SynthConfig, bool); 5] = [
        (
            "en-wiki",
            SynthConfig {
                noise_rate: 0.05,
                duplicate_rate: 0.02,
                ..SynthConfig::new("en", 300)
            },
            false,
        ),
        (
            "en-books",
            SynthConfig {
                min_sentences: 4,
                max_sentences: 12,
                book: true,
                ..SynthConfig::new("en", 120)
            },
            false,
        ),
        ("fi-news", SynthConfig::new("fi", 45), false),
        (
            "fi-disc",
            SynthConfig {
                noise_rate: 0.05,
                ..SynthConfig::new("fi", 70)
            },
            true,
        ),
        (
            "fi-crawl",
            SynthConfig {
                noise_rate: 0.15,
                duplicate_rate: 0.05,
                ..SynthConfig::new("fi", 150)
            },
            false,
        ),
    ];
    plan.iter()
        .map(|(id, cfg, paragraphs)| {
            let docs = synth_documents(id, cfg, FIXTURE_SEED)?;
            Ok((format!("{id}.txt"), render_blocks(&docs, *paragraphs)))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::filter::{Filter, FilterConfig, Verdict};

    #[test]
    fn deterministic_and_distinct_by_source() {
        let cfg = SynthConfig::new("fi", 20);
        let a = synth_documents("news", &cfg, 1).unwrap();
        assert_eq!(a, synth_documents("news", &cfg, 1).unwrap());
        assert_ne!(a[0].sentences, synth_documents("crawl", &cfg, 1).unwrap()[0].sentences);
    }

    #[test]
    fn clean_text_passes_the_filter() {
        let config = FilterConfig::default();
        let filter = Filter::new(&config, LanguageProfiles::bundled());
        for lang in ["en", "fi"] {
            let docs = synth_documents("s", &SynthConfig::new(lang, 30), 4).unwrap();
            let total: usize = docs.iter().map(|d| d.sentences.len()).sum();
            let kept = docs
                .iter()
                .flat_map(|d| &d.sentences)
                .filter(|s| filter.filter_sentence(s, lang) == Verdict::Keep)
                .count();
            assert!(kept as f64 >= 0.95 * total as f64, "{lang}: {kept} of {total}");
        }
    }

    #[test]
    fn noise_and_duplicates() {
        let cfg = SynthConfig {
            noise_rate: 1.0,
            duplicate_rate: 0.2,
            ..SynthConfig::new("en", 200)
        };
        let docs = synth_documents("web", &cfg, 9).unwrap();
        let copies = docs
            .iter()
            .enumerate()
            .filter(|(i, d)| docs[..*i].iter().any(|e| e.sentences == d.sentences))
            .count();
        assert!(copies > 10);
    }

    #[test]
    fn unknown_language() {
        assert!(synth_documents("x", &SynthConfig::new("sv", 1), 0).is_err());
    }
}
