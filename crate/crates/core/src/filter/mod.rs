//! Sentence- and document-level cleaning: length, character-ratio and
//! language checks, plus boilerplate stripping for book sources.

mod book;
mod langid;

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

pub use book::boilerplate_lines;
pub use langid::{detect_language, ranked_ngrams, LanguageProfile, LanguageProfiles, PROFILE_SIZE};

use crate::error::{Error, Result};
use crate::ingest::{Document, Sentence};
use crate::report::{KvReport, Table};

const EN_ALPHABET: &str = "abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ";
const FI_ALPHABET: &str =
    "abcdefghijklmnopqrstuvwxyzåäöšžABCDEFGHIJKLMNOPQRSTUVWXYZÅÄÖŠŽ";

/// A document is rejected when more than this share of its sentences fail.
pub const MAX_REJECTED_SHARE: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FilterConfig {
    pub min_tokens: usize,
    pub max_uppercase_ratio: f64,
    pub max_digit_ratio: f64,
    pub max_foreign_ratio: f64,
    pub min_lang_confidence: f64,
    /// Documents with fewer surviving sentences are dropped.
    pub min_doc_sentences: usize,
    /// Accepted letters per language; languages without an entry skip the
    /// foreign-character rule.
    pub alphabets: BTreeMap<String, String>,
}

impl Default for FilterConfig {
    fn default() -> Self {
        let mut alphabets = BTreeMap::new();
        alphabets.insert("en".to_string(), EN_ALPHABET.to_string());
        alphabets.insert("fi".to_string(), FI_ALPHABET.to_string());
        Self {
            min_tokens: 3,
            max_uppercase_ratio: 0.3,
            max_digit_ratio: 0.3,
            max_foreign_ratio: 0.1,
            min_lang_confidence: 0.1,
            min_doc_sentences: 1,
            alphabets,
        }
    }
}

impl FilterConfig {
    pub fn validate(&self) -> Result<()> {
        let ratios = [
            ("max_uppercase_ratio", self.max_uppercase_ratio),
            ("max_digit_ratio", self.max_digit_ratio),
            ("max_foreign_ratio", self.max_foreign_ratio),
            ("min_lang_confidence", self.min_lang_confidence),
        ];
        for (name, value) in ratios {
            if !(0.0..=1.0).contains(&value) {
                return Err(Error::Config(format!("{name} must lie in [0, 1], got {value}")));
            }
        }
        if self.min_tokens < 1 {
            return Err(Error::Config("min_tokens must be at least 1".into()));
        }
        Ok(())
    }
}

/// Sentence rules in evaluation order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum SentenceReject {
    Short,
    Uppercase,
    Digits,
    Foreign,
    Language,
}

impl SentenceReject {
    pub const ALL: [SentenceReject; 5] = [
        Self::Short,
        Self::Uppercase,
        Self::Digits,
        Self::Foreign,
        Self::Language,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Short => "short",
            Self::Uppercase => "uppercase",
            Self::Digits => "digits",
            Self::Foreign => "foreign",
            Self::Language => "language",
        }
    }
}

impl fmt::Display for SentenceReject {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DocumentReject {
    MajorityRejected,
    TooFewSentences,
}

impl DocumentReject {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::MajorityRejected => "majority-rejected",
            Self::TooFewSentences => "too-few-sentences",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict<R> {
    Keep,
    Reject(R),
}

/// Ratios used by the sentence rules.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct CharRatios {
    pub uppercase: f64,
    pub digit: f64,
    pub foreign: f64,
}

/// Uppercase letters over letters, digits over non-whitespace characters,
/// and letters outside `alphabet` over letters.
pub fn char_ratios(text: &str, alphabet: Option<&str>) -> CharRatios {
    let (mut letters, mut upper, mut digits, mut chars, mut foreign) = (0usize, 0, 0, 0, 0);
    for c in text.chars().filter(|c| !c.is_whitespace()) {
        chars += 1;
        if c.is_numeric() {
            digits += 1;
        }
        if c.is_alphabetic() {
            letters += 1;
            if c.is_uppercase() {
                upper += 1;
            }
            if alphabet.is_some_and(|a| !a.contains(c)) {
                foreign += 1;
            }
        }
    }
    let frac = |n: usize, d: usize| if d == 0 { 0.0 } else { n as f64 / d as f64 };
    CharRatios {
        uppercase: frac(upper, letters),
        digit: frac(digits, chars),
        foreign: frac(foreign, letters),
    }
}

pub struct Filter<'a> {
    pub config: &'a FilterConfig,
    pub profiles: &'a LanguageProfiles,
}

impl<'a> Filter<'a> {
    pub fn new(config: &'a FilterConfig, profiles: &'a LanguageProfiles) -> Self {
        Self { config, profiles }
    }

    pub fn filter_sentence(&self, sentence: &Sentence, language: &str) -> Verdict<SentenceReject> {
        let cfg = self.config;
        if sentence.tokens().len() < cfg.min_tokens {
            return Verdict::Reject(SentenceReject::Short);
        }
        let ratios = char_ratios(
            &sentence.text,
            cfg.alphabets.get(language).map(String::as_str),
        );
        if ratios.uppercase > cfg.max_uppercase_ratio {
            return Verdict::Reject(SentenceReject::Uppercase);
        }
        if ratios.digit > cfg.max_digit_ratio {
            return Verdict::Reject(SentenceReject::Digits);
        }
        if ratios.foreign > cfg.max_foreign_ratio {
            return Verdict::Reject(SentenceReject::Foreign);
        }
        match detect_language(&sentence.text, self.profiles) {
            Ok((lang, conf)) if lang == language && conf >= cfg.min_lang_confidence => {
                Verdict::Keep
            }
            _ => Verdict::Reject(SentenceReject::Language),
        }
    }

    /// Filters one document. Book sources lose boilerplate lines first; the
    /// survivors go through the sentence rules, and the document is dropped
    /// if too few remain or more than half were rejected.
    pub fn filter_document(&self, doc: &Document, book: bool) -> DocumentOutcome {
        let mut counts = FilterCounts {
            documents_in: 1,
            sentences_in: doc.sentences.len(),
            tokens_in: doc.token_count(),
            ..Default::default()
        };

        let dropped = if book {
            boilerplate_lines(doc.sentences.iter().map(|s| s.text.as_str()))
        } else {
            Vec::new()
        };
        counts.boilerplate = dropped.len();

        let mut kept = Vec::new();
        let mut judged = 0usize;
        for (i, sentence) in doc.sentences.iter().enumerate() {
            if dropped.binary_search(&i).is_ok() {
                continue;
            }
            judged += 1;
            match self.filter_sentence(sentence, &doc.language) {
                Verdict::Keep => kept.push(sentence.clone()),
                Verdict::Reject(reason) => *counts.rejected.entry(reason).or_insert(0) += 1,
            }
        }

        let rejected = judged - kept.len();
        let reason = if kept.len() < self.config.min_doc_sentences.max(1) {
            Some(DocumentReject::TooFewSentences)
        } else if rejected as f64 > MAX_REJECTED_SHARE * judged as f64 {
            Some(DocumentReject::MajorityRejected)
        } else {
            None
        };

        match reason {
            Some(reason) => {
                counts.doc_rejected_sentences = kept.len();
                match reason {
                    DocumentReject::MajorityRejected => counts.documents_majority_rejected = 1,
                    DocumentReject::TooFewSentences => counts.documents_too_few = 1,
                }
                DocumentOutcome {
                    verdict: Verdict::Reject(reason),
                    document: None,
                    counts,
                }
            }
            None => {
                counts.documents_out = 1;
                counts.sentences_out = kept.len();
                counts.tokens_out = kept.iter().map(|s| s.tokens().len()).sum();
                DocumentOutcome {
                    verdict: Verdict::Keep,
                    document: Some(Document {
                        sentences: kept,
                        ..doc.clone()
                    }),
                    counts,
                }
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct DocumentOutcome {
    pub verdict: Verdict<DocumentReject>,
    pub document: Option<Document>,
    pub counts: FilterCounts,
}

/// Additive per-source counters.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct FilterCounts {
    pub documents_in: usize,
    pub documents_out: usize,
    pub documents_majority_rejected: usize,
    pub documents_too_few: usize,
    pub sentences_in: usize,
    pub sentences_out: usize,
    pub tokens_in: usize,
    pub tokens_out: usize,
    pub rejected: BTreeMap<SentenceReject, usize>,
    pub boilerplate: usize,
    /// Sentences that passed their own rules but sat in a rejected document.
    pub doc_rejected_sentences: usize,
}

impl FilterCounts {
    pub fn merge(&mut self, other: &FilterCounts) {
        self.documents_in += other.documents_in;
        self.documents_out += other.documents_out;
        self.documents_majority_rejected += other.documents_majority_rejected;
        self.documents_too_few += other.documents_too_few;
        self.sentences_in += other.sentences_in;
        self.sentences_out += other.sentences_out;
        self.tokens_in += other.tokens_in;
        self.tokens_out += other.tokens_out;
        for (reason, n) in &other.rejected {
            *self.rejected.entry(*reason).or_insert(0) += n;
        }
        self.boilerplate += other.boilerplate;
        self.doc_rejected_sentences += other.doc_rejected_sentences;
    }

    pub fn total_rejections(&self) -> usize {
        self.rejected.values().sum::<usize>() + self.boilerplate + self.doc_rejected_sentences
    }

    pub fn rejected_for(&self, reason: SentenceReject) -> usize {
        self.rejected.get(&reason).copied().unwrap_or(0)
    }

    /// Sentence conservation: in = out + every rejection.
    pub fn balances(&self) -> bool {
        self.sentences_in == self.sentences_out + self.total_rejections()
            && self.documents_in
                == self.documents_out + self.documents_majority_rejected + self.documents_too_few
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct FilterReport {
    pub sources: BTreeMap<String, FilterCounts>,
}

impl FilterReport {
    pub fn record(&mut self, source_id: &str, counts: &FilterCounts) {
        self.sources
            .entry(source_id.to_string())
            .or_default()
            .merge(counts);
    }

    pub fn balances(&self) -> bool {
        self.sources.values().all(FilterCounts::balances)
    }

    pub fn to_kv(&self) -> KvReport {
        let mut kv = KvReport::new();
        for (source, c) in &self.sources {
            let p = format!("source.{source}");
            kv.push(format!("{p}.documents_in"), c.documents_in);
            kv.push(format!("{p}.documents_out"), c.documents_out);
            kv.push(format!("{p}.documents_rejected.majority-rejected"), c.documents_majority_rejected);
            kv.push(format!("{p}.documents_rejected.too-few-sentences"), c.documents_too_few);
            kv.push(format!("{p}.sentences_in"), c.sentences_in);
            kv.push(format!("{p}.sentences_out"), c.sentences_out);
            kv.push(format!("{p}.tokens_in"), c.tokens_in);
            kv.push(format!("{p}.tokens_out"), c.tokens_out);
            for reason in SentenceReject::ALL {
                kv.push(format!("{p}.rejected.{reason}"), c.rejected_for(reason));
            }
            kv.push(format!("{p}.rejected.boilerplate"), c.boilerplate);
            kv.push(format!("{p}.rejected.in-rejected-document"), c.doc_rejected_sentences);
        }
        kv
    }

    pub fn to_table(&self) -> Table {
        let mut header = vec!["source", "sent_in", "sent_out"];
        header.extend(SentenceReject::ALL.iter().map(|r| r.as_str()));
        header.extend(["boilerplate", "doc_drop", "docs_in", "docs_out"]);
        let mut t = Table::new(header);
        for (source, c) in &self.sources {
            let mut row = vec![
                source.clone(),
                c.sentences_in.to_string(),
                c.sentences_out.to_string(),
            ];
            row.extend(SentenceReject::ALL.iter().map(|r| c.rejected_for(*r).to_string()));
            row.extend([
                c.boilerplate.to_string(),
                c.doc_rejected_sentences.to_string(),
                c.documents_in.to_string(),
                c.documents_out.to_string(),
            ]);
            t.row(row);
        }
        t
    }
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;

    fn doc(lang: &str, lines: &[&str]) -> Document {
        Document {
            doc_id: "d".into(),
            source_id: "s".into(),
            language: lang.into(),
            sentences: lines.iter().map(|l| Sentence::tokenized(*l)).collect(),
        }
    }

    fn filter(cfg: &FilterConfig) -> Filter<'_> {
        Filter::new(cfg, LanguageProfiles::bundled())
    }

    #[test]
    fn short_sentence() {
        let cfg = FilterConfig::default();
        assert_eq!(
            filter(&cfg).filter_sentence(&Sentence::tokenized("Hi."), "en"),
            Verdict::Reject(SentenceReject::Short)
        );
    }

    #[test]
    fn shouting() {
        let cfg = FilterConfig::default();
        assert_eq!(
            filter(&cfg).filter_sentence(&Sentence::tokenized("SHOUTING VERY LOUDLY NOW"), "en"),
            Verdict::Reject(SentenceReject::Uppercase)
        );
    }

    #[test]
    fn clean_sentence_is_kept() {
        // uppercase 1/29, digits 0/30, foreign 0/29, language en
        let cfg = FilterConfig::default();
        let s = Sentence::tokenized("This is an ordinary clean sentence.");
        let r = char_ratios(&s.text, Some(EN_ALPHABET));
        assert!((r.uppercase - 1.0 / 29.0).abs() < 1e-12);
        assert_eq!(r.digit, 0.0);
        assert_eq!(r.foreign, 0.0);
        assert_eq!(filter(&cfg).filter_sentence(&s, "en"), Verdict::Keep);
    }

    #[test]
    fn digits_and_foreign() {
        let cfg = FilterConfig::default();
        assert_eq!(
            filter(&cfg).filter_sentence(&Sentence::tokenized("Call 555 1234 567 now"), "en"),
            Verdict::Reject(SentenceReject::Digits)
        );
        assert_eq!(
            filter(&cfg).filter_sentence(&Sentence::tokenized("Привет как дела у тебя"), "en"),
            Verdict::Reject(SentenceReject::Foreign)
        );
    }

    #[test]
    fn wrong_language() {
        let cfg = FilterConfig::default();
        assert_eq!(
            filter(&cfg).filter_sentence(
                &Sentence::tokenized("Tämä lause on kirjoitettu suomeksi eikä englanniksi."),
                "en"
            ),
            Verdict::Reject(SentenceReject::Language)
        );
    }

    #[test]
    fn majority_rejected_document() {
        let cfg = FilterConfig::default();
        let d = doc("en", &["The weather was calm and pleasant all day.", "Hi.", "NO NO NO NO"]);
        let out = filter(&cfg).filter_document(&d, false);
        assert_eq!(out.verdict, Verdict::Reject(DocumentReject::MajorityRejected));
        assert!(out.counts.balances());
        assert_eq!(out.counts.doc_rejected_sentences, 1);
    }

    #[test]
    fn clean_document_kept_whole() {
        let cfg = FilterConfig::default();
        let d = doc(
            "en",
            &[
                "The weather was calm and pleasant all day.",
                "Children walked to the school near the river.",
                "The library opened its doors early in the morning.",
                "Nobody noticed the stranger who entered the shop.",
            ],
        );
        let out = filter(&cfg).filter_document(&d, false);
        assert_eq!(out.verdict, Verdict::Keep);
        assert_eq!(out.document.unwrap().sentences.len(), 4);
    }

    #[test]
    fn book_copyright_dropped_first() {
        let cfg = FilterConfig::default();
        let d = doc(
            "en",
            &[
                "Copyright © 2010 by the author and the publisher.",
                "The weather was calm and pleasant all day.",
                "Children walked to the school near the river.",
            ],
        );
        let out = filter(&cfg).filter_document(&d, true);
        let kept = out.document.unwrap();
        assert_eq!(kept.sentences.len(), 2);
        assert_eq!(out.counts.boilerplate, 1);
        assert!(out.counts.balances());
        // not a book: the copyright line goes through the sentence rules
        let out = filter(&cfg).filter_document(&d, false);
        assert_eq!(out.counts.boilerplate, 0);
    }

    #[test]
    fn refiltering_kept_document_is_identity() {
        let cfg = FilterConfig::default();
        let d = doc(
            "fi",
            &[
                "Hallitus ilmoitti tiistaina uusista suunnitelmista.",
                "Kirjasto on kaupungin vilkkain rakennus iltapäivällä.",
                "OK.",
            ],
        );
        let f = filter(&cfg);
        let first = f.filter_document(&d, true).document.unwrap();
        let second = f.filter_document(&first, true);
        assert_eq!(second.document.unwrap(), first);
    }

    #[test]
    fn config_validation() {
        let mut cfg = FilterConfig::default();
        assert!(cfg.validate().is_ok());
        cfg.max_digit_ratio = 1.5;
        assert!(cfg.validate().is_err());
        let cfg = FilterConfig {
            min_tokens: 0,
            ..Default::default()
        };
        assert!(cfg.validate().is_err());
    }

    fn sentences() -> Vec<Sentence> {
        [
            "The weather was calm and pleasant all day.",
            "THE WEATHER WAS Calm.",
            "Room 101 was on floor 4 of 12.",
            "Hi there.",
            "Café naïve façade élan résumé.",
            "Kirjasto on kaupungin vilkkain rakennus.",
            "Scientists counted 300 nests in 2019.",
            "A B C D E f g h i",
        ]
        .iter()
        .map(|s| Sentence::tokenized(*s))
        .collect()
    }

    proptest! {
        #[test]
        fn tightening_never_keeps_more(
            min_tokens in 1usize..8,
            upper in 0.0f64..1.0,
            digit in 0.0f64..1.0,
            foreign in 0.0f64..1.0,
            conf in 0.0f64..1.0,
            which in 0usize..5,
            delta in 0.0f64..0.5,
        ) {
            let loose = FilterConfig {
                min_tokens,
                max_uppercase_ratio: upper,
                max_digit_ratio: digit,
                max_foreign_ratio: foreign,
                min_lang_confidence: conf,
                ..Default::default()
            };
            let mut tight = loose.clone();
            match which {
                0 => tight.min_tokens += 1,
                1 => tight.max_uppercase_ratio = (upper - delta).max(0.0),
                2 => tight.max_digit_ratio = (digit - delta).max(0.0),
                3 => tight.max_foreign_ratio = (foreign - delta).max(0.0),
                _ => tight.min_lang_confidence = (conf + delta).min(1.0),
            }
            let kept = |cfg: &FilterConfig| {
                let f = filter(cfg);
                sentences().iter().filter(|s| f.filter_sentence(s, "en") == Verdict::Keep).count()
            };
            prop_assert!(kept(&tight) <= kept(&loose));

            let d = doc("en", &sentences().iter().map(|s| s.text.as_str()).collect::<Vec<_>>());
            let dk = |cfg: &FilterConfig| filter(cfg).filter_document(&d, false).counts.sentences_out;
            prop_assert!(dk(&tight) <= dk(&loose));
            prop_assert!(filter(&tight).filter_document(&d, false).counts.balances());
        }
    }
}
