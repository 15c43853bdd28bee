//! Reading raw corpora into canonical documents.

mod basic;
mod segment;

use std::fmt;
use std::fs;
use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use basic::{basic_tokenize, is_cjk, is_punctuation, is_stripped, is_whitespace, normalize_text};
pub use segment::{segment_sentences, Abbreviations};

use crate::error::{Error, Result};
use crate::report::KvReport;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SourceFormat {
    /// One single-sentence document per nonblank line.
    PlainLines,
    /// Blank-line separated documents, one sentence per line.
    DocBlocks,
}

impl FromStr for SourceFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "plain-lines" => Ok(Self::PlainLines),
            "doc-blocks" => Ok(Self::DocBlocks),
            other => Err(Error::Config(format!("unknown source format `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SourceSpec {
    #[serde(rename = "id")]
    pub source_id: String,
    pub language: String,
    pub paths: Vec<PathBuf>,
    pub format: SourceFormat,
    /// Book text gets table-of-contents, copyright and reference stripping.
    #[serde(default)]
    pub book: bool,
    /// Run the sentence splitter over each input line.
    #[serde(default)]
    pub segment: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Sentence {
    pub text: String,
    pub tokens: Option<Vec<String>>,
}

impl Sentence {
    pub fn new(text: impl Into<String>) -> Self {
        Self {
            text: text.into(),
            tokens: None,
        }
    }

    pub fn tokenized(text: impl Into<String>) -> Self {
        let text = text.into();
        let tokens = basic_tokenize(&text);
        Self {
            text,
            tokens: Some(tokens),
        }
    }

    /// Basic tokens, computing them if the sentence has not been tokenized.
    pub fn tokens(&self) -> std::borrow::Cow<'_, [String]> {
        match &self.tokens {
            Some(t) => std::borrow::Cow::Borrowed(t.as_slice()),
            None => std::borrow::Cow::Owned(basic_tokenize(&self.text)),
        }
    }

    pub fn ensure_tokens(&mut self) {
        if self.tokens.is_none() {
            self.tokens = Some(basic_tokenize(&self.text));
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Document {
    pub doc_id: String,
    pub source_id: String,
    pub language: String,
    pub sentences: Vec<Sentence>,
}

impl Document {
    pub fn token_count(&self) -> usize {
        self.sentences.iter().map(|s| s.tokens().len()).sum()
    }

    pub fn tokenize(&mut self) {
        self.sentences.iter_mut().for_each(Sentence::ensure_tokens);
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct IngestReport {
    pub source_id: String,
    pub files: usize,
    pub documents: usize,
    pub sentences: usize,
    pub decode_repairs: usize,
    pub warnings: Vec<String>,
}

impl IngestReport {
    pub fn to_kv(&self) -> KvReport {
        let mut kv = KvReport::new();
        kv.push("files", self.files);
        kv.push("documents", self.documents);
        kv.push("sentences", self.sentences);
        kv.push("decode_repairs", self.decode_repairs);
        kv.push("warnings", self.warnings.len());
        for (i, w) in self.warnings.iter().enumerate() {
            kv.push(format!("warning.{i}"), w);
        }
        kv
    }
}

/// Decodes bytes as UTF-8, replacing each invalid sequence with U+FFFD.
/// Returns the text and the number of repaired sequences.
pub fn decode_lossy(bytes: &[u8]) -> (String, usize) {
    let mut text = String::with_capacity(bytes.len());
    let mut repairs = 0;
    for chunk in bytes.utf8_chunks() {
        text.push_str(chunk.valid());
        if !chunk.invalid().is_empty() {
            text.push(char::REPLACEMENT_CHARACTER);
            repairs += 1;
        }
    }
    (text, repairs)
}

/// Reads every file of a source. Files are decoded in parallel; documents
/// come back in (file, block) order with ids `<source>-<file>-<block>`.
pub fn read_corpus(spec: &SourceSpec) -> Result<(Vec<Document>, IngestReport)> {
    for path in &spec.paths {
        if !path.is_file() {
            return Err(Error::MissingInput {
                source_id: spec.source_id.clone(),
                path: path.clone(),
            });
        }
    }
    let abbreviations = Abbreviations::for_language(&spec.language);
    let per_file: Vec<(Vec<Document>, usize)> = spec
        .paths
        .par_iter()
        .enumerate()
        .map(|(file_idx, path)| {
            let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
            let (text, repairs) = decode_lossy(&bytes);
            Ok((parse_source_text(spec, file_idx, &text, &abbreviations), repairs))
        })
        .collect::<Result<_>>()?;

    let mut report = IngestReport {
        source_id: spec.source_id.clone(),
        files: spec.paths.len(),
        ..Default::default()
    };
    let mut documents = Vec::new();
    for (docs, repairs) in per_file {
        report.decode_repairs += repairs;
        documents.extend(docs);
    }
    report.documents = documents.len();
    report.sentences = documents.iter().map(|d| d.sentences.len()).sum();
    if documents.is_empty() {
        report
            .warnings
            .push(format!("source `{}` produced no documents", spec.source_id));
    }
    Ok((documents, report))
}

/// Splits decoded file text into documents according to the source format.
pub fn parse_source_text(
    spec: &SourceSpec,
    file_idx: usize,
    text: &str,
    abbreviations: &Abbreviations,
) -> Vec<Document> {
    let make_doc = |block_idx: usize, lines: &[&str]| -> Option<Document> {
        let mut sentences = Vec::new();
        for line in lines {
            let norm = normalize_text(line);
            if norm.is_empty() {
                continue;
            }
            if spec.segment {
                sentences.extend(
                    segment_sentences(&norm, abbreviations)
                        .into_iter()
                        .map(Sentence::new),
                );
            } else {
                sentences.push(Sentence::new(norm));
            }
        }
        (!sentences.is_empty()).then(|| Document {
            doc_id: format!("{}-{}-{}", spec.source_id, file_idx, block_idx),
            source_id: spec.source_id.clone(),
            language: spec.language.clone(),
            sentences,
        })
    };

    let mut docs = Vec::new();
    match spec.format {
        SourceFormat::PlainLines => {
            let mut block_idx = 0;
            for line in text.lines() {
                if normalize_text(line).is_empty() {
                    continue;
                }
                if let Some(mut doc) = make_doc(block_idx, &[line]) {
                    // a segmented line is still one document per line
                    if !spec.segment {
                        doc.sentences.truncate(1);
                    }
                    docs.push(doc);
                    block_idx += 1;
                }
            }
        }
        SourceFormat::DocBlocks => {
            let mut block: Vec<&str> = Vec::new();
            let mut block_idx = 0;
            for line in text.lines().chain(std::iter::once("")) {
                if normalize_text(line).is_empty() {
                    if !block.is_empty() {
                        if let Some(doc) = make_doc(block_idx, &block) {
                            docs.push(doc);
                            block_idx += 1;
                        }
                        block.clear();
                    }
                } else {
                    block.push(line);
                }
            }
        }
    }
    docs
}

#[derive(Debug, Clone, PartialEq, Eq)]
struct DocHeader {
    doc_id: String,
    source_id: String,
    language: String,
}

impl fmt::Display for DocHeader {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "#doc id={} source={} lang={}",
            self.doc_id, self.source_id, self.language
        )
    }
}

fn parse_header(line: &str) -> Option<DocHeader> {
    let rest = line.strip_prefix("#doc ")?;
    let (mut id, mut source, mut lang) = (None, None, None);
    for field in rest.split(' ') {
        match field.split_once('=')? {
            ("id", v) => id = Some(v.to_string()),
            ("source", v) => source = Some(v.to_string()),
            ("lang", v) => lang = Some(v.to_string()),
            _ => return None,
        }
    }
    Some(DocHeader {
        doc_id: id?,
        source_id: source?,
        language: lang?,
    })
}

/// Writes documents in the canonical stream format: a `#doc` header line,
/// one sentence per line, and a blank line after each document.
pub fn write_documents<W: Write>(mut out: W, docs: &[Document]) -> std::io::Result<()> {
    for doc in docs {
        let header = DocHeader {
            doc_id: doc.doc_id.clone(),
            source_id: doc.source_id.clone(),
            language: doc.language.clone(),
        };
        writeln!(out, "{header}")?;
        for s in &doc.sentences {
            writeln!(out, "{}", s.text)?;
        }
        writeln!(out)?;
    }
    out.flush()
}

pub fn read_documents<R: BufRead>(input: R) -> Result<Vec<Document>> {
    let mut docs = Vec::new();
    let mut current: Option<Document> = None;
    for (lineno, line) in input.lines().enumerate() {
        let line = line.map_err(|e| Error::io("<document stream>", e))?;
        if line.is_empty() {
            if let Some(doc) = current.take() {
                docs.push(doc);
            }
            continue;
        }
        match current.as_mut() {
            Some(doc) => doc.sentences.push(Sentence::new(line)),
            None => {
                let header = parse_header(&line).ok_or_else(|| {
                    Error::Corrupt(format!(
                        "document stream line {}: expected `#doc` header",
                        lineno + 1
                    ))
                })?;
                current = Some(Document {
                    doc_id: header.doc_id,
                    source_id: header.source_id,
                    language: header.language,
                    sentences: Vec::new(),
                });
            }
        }
    }
    docs.extend(current);
    Ok(docs)
}

pub fn write_documents_file(path: &Path, docs: &[Document]) -> Result<()> {
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write_documents(std::io::BufWriter::new(file), docs).map_err(|e| Error::io(path, e))
}

pub fn read_documents_file(path: &Path) -> Result<Vec<Document>> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_documents(std::io::BufReader::new(file))
}
