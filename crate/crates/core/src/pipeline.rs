//! Manifest-driven stage orchestration.
//!
//! Every stage owns `<output_dir>/<stage>/`. It is built in
//! `<stage>.partial/` and renamed into place only on success, so a failed
//! stage leaves its partial directory behind and never a half-written final
//! one. Each finished stage records a digest of its configuration and input
//! files; with `resume` set, a stage whose digest is unchanged is skipped
//! (and logged as skipped).

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::{SystemTime, UNIX_EPOCH};

use rayon::prelude::*;
use sha2::{Digest, Sha256};

use crate::dedup::{dedup_stream, DedupReport, ShingleIndex};
use crate::error::{Error, Result};
use crate::examplegen::{
    build_instances, count_instances, plan_duplication, write_instances, InstanceHeader,
};
use crate::filter::{Filter, FilterReport, LanguageProfiles};
use crate::ingest::{read_corpus, read_documents_file, write_documents_file, Document};
use crate::manifest::Manifest;
use crate::report::KvReport;
use crate::stats::{audit_instances, corpus_stats, fertility, fertility_kv, AuditReport};
use crate::vocab::{
    convert_to_wordpiece, draw_sample, learn_bpe, plan_sample, MergeRuleList, Piece, Vocabulary,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Stage {
    Ingest,
    Filter,
    Dedup,
    Sample,
    TrainVocab,
    ConvertVocab,
    GenerateExamples,
    Stats,
    Audit,
}

impl Stage {
    pub const ALL: [Stage; 9] = [
        Stage::Ingest,
        Stage::Filter,
        Stage::Dedup,
        Stage::Sample,
        Stage::TrainVocab,
        Stage::ConvertVocab,
        Stage::GenerateExamples,
        Stage::Stats,
        Stage::Audit,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Ingest => "ingest",
            Stage::Filter => "filter",
            Stage::Dedup => "dedup",
            Stage::Sample => "sample",
            Stage::TrainVocab => "train-vocab",
            Stage::ConvertVocab => "convert-vocab",
            Stage::GenerateExamples => "generate-examples",
            Stage::Stats => "stats",
            Stage::Audit => "audit",
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Stage {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Stage::ALL
            .into_iter()
            .find(|st| st.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown stage `{s}`")))
    }
}

pub const DIGEST_FILE: &str = "digest.txt";
pub const RUN_REPORT: &str = "run.kv";
pub const VOCAB_FILE: &str = "vocab.txt";
pub const INSTANCE_EXT: &str = "instances";

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Skip stages whose recorded digest matches.
    pub resume: bool,
    /// Timestamp written to the run report instead of the wall clock.
    pub fixed_clock: Option<String>,
    /// Vocabulary used by generate-examples, stats and audit instead of the
    /// convert-vocab output.
    pub vocab: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StageOutcome {
    pub stage: Stage,
    pub skipped: bool,
    pub digest: String,
}

#[derive(Debug, Clone, Default)]
pub struct RunSummary {
    pub stages: Vec<StageOutcome>,
}

struct Ctx<'a> {
    m: &'a Manifest,
    opts: &'a RunOptions,
    out: &'a Path,
}

impl Ctx<'_> {
    fn stage_dir(&self, stage: Stage) -> PathBuf {
        self.out.join(stage.name())
    }

    fn docs_path(&self, stage: Stage, source_id: &str) -> PathBuf {
        self.stage_dir(stage).join(format!("{source_id}.docs"))
    }

    fn vocab_path(&self) -> PathBuf {
        self.opts
            .vocab
            .clone()
            .unwrap_or_else(|| self.stage_dir(Stage::ConvertVocab).join(VOCAB_FILE))
    }

    fn shard_path(&self, source_id: &str) -> PathBuf {
        self.stage_dir(Stage::GenerateExamples)
            .join(format!("{source_id}.{INSTANCE_EXT}"))
    }

    fn source_docs(&self, stage: Stage) -> Vec<PathBuf> {
        self.m
            .sources
            .iter()
            .map(|s| self.docs_path(stage, &s.source_id))
            .collect()
    }

    /// Files a stage reads. All must exist before it runs.
    fn inputs(&self, stage: Stage) -> Vec<PathBuf> {
        let train = self.stage_dir(Stage::TrainVocab);
        match stage {
            Stage::Ingest => self.m.sources.iter().flat_map(|s| s.paths.clone()).collect(),
            Stage::Filter => self.source_docs(Stage::Ingest),
            Stage::Dedup => self.source_docs(Stage::Filter),
            Stage::Sample => self.source_docs(Stage::Dedup),
            Stage::TrainVocab => vec![self.stage_dir(Stage::Sample).join("sample.txt")],
            Stage::ConvertVocab => vec![
                train.join("alphabet.txt"),
                train.join("merges.txt"),
                train.join("pieces.txt"),
            ],
            Stage::GenerateExamples | Stage::Stats => {
                let mut v = self.source_docs(Stage::Dedup);
                v.push(self.vocab_path());
                v
            }
            Stage::Audit => {
                let mut v: Vec<PathBuf> = self
                    .m
                    .sources
                    .iter()
                    .map(|s| self.shard_path(&s.source_id))
                    .collect();
                v.push(self.vocab_path());
                v
            }
        }
    }

    /// Settings that influence a stage's output.
    fn settings(&self, stage: Stage) -> String {
        let m = self.m;
        let sources: String = m
            .sources
            .iter()
            .map(|s| {
                format!(
                    "source {} {} {:?} book={} segment={}\n",
                    s.source_id, s.language, s.format, s.book, s.segment
                )
            })
            .collect();
        let specific = match stage {
            Stage::Ingest | Stage::ConvertVocab | Stage::Stats | Stage::Audit => String::new(),
            Stage::Filter => toml_of(&m.filter),
            Stage::Dedup => toml_of(&m.dedup),
            Stage::Sample => format!("seed={}\nsample_total={:?}\n", m.seed, m.vocab.sample_total),
            Stage::TrainVocab => toml_of(&m.vocab),
            Stage::GenerateExamples => format!(
                "seed={}\n{}{}",
                m.seed,
                toml_of(&m.masking),
                toml_of(&m.duplication)
            ),
        };
        format!("stage={}\n{sources}{specific}", stage.name())
    }
}

fn toml_of<T: serde::Serialize>(v: &T) -> String {
    toml::to_string(v).expect("settings serialize")
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

fn file_digest(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(hex(&Sha256::digest(&bytes)))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

/// Runs the requested stages in pipeline order. The manifest is validated
/// before anything is written.
pub fn run_pipeline(manifest: &Manifest, stages: &[Stage], opts: &RunOptions) -> Result<RunSummary> {
    manifest.validate()?;
    let mut ordered = stages.to_vec();
    ordered.sort();
    ordered.dedup();

    let out = &manifest.output_dir;
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let ctx = Ctx {
        m: manifest,
        opts,
        out,
    };

    let mut summary = RunSummary::default();
    for stage in ordered {
        let outcome = run_stage(&ctx, stage).map_err(|e| Error::Stage {
            stage: stage.name(),
            source: Box::new(e),
        })?;
        summary.stages.push(outcome);
    }

    let mut kv = KvReport::new();
    let clock = match &opts.fixed_clock {
        Some(c) => c.clone(),
        None => SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0)
            .to_string(),
    };
    kv.push("clock", clock);
    kv.push("seed", manifest.seed);
    for o in &summary.stages {
        kv.push(format!("stage.{}", o.stage), if o.skipped { "skipped" } else { "ran" });
        kv.push(format!("stage.{}.digest", o.stage), &o.digest);
    }
    kv.write(&out.join(RUN_REPORT))?;
    Ok(summary)
}

fn run_stage(ctx: &Ctx<'_>, stage: Stage) -> Result<StageOutcome> {
    let inputs = ctx.inputs(stage);
    let mut descriptor = ctx.settings(stage);
    for path in &inputs {
        if !path.is_file() {
            return Err(Error::Config(format!(
                "missing input {}; run the earlier stages first",
                path.display()
            )));
        }
        let name = path.file_name().map(|n| n.to_string_lossy()).unwrap_or_default();
        descriptor.push_str(&format!("input {name} {}\n", file_digest(path)?));
    }
    let digest = hex(&Sha256::digest(descriptor.as_bytes()));

    let final_dir = ctx.stage_dir(stage);
    if ctx.opts.resume {
        let recorded = fs::read_to_string(final_dir.join(DIGEST_FILE)).ok();
        if recorded.as_deref().map(str::trim) == Some(digest.as_str()) {
            log::info!("{stage}: inputs unchanged, skipping (resume)");
            return Ok(StageOutcome {
                stage,
                skipped: true,
                digest,
            });
        }
    }

    let partial = ctx.out.join(format!("{}.partial", stage.name()));
    if partial.exists() {
        fs::remove_dir_all(&partial).map_err(|e| Error::io(&partial, e))?;
    }
    fs::create_dir_all(&partial).map_err(|e| Error::io(&partial, e))?;
    log::info!("{stage}: running");
    execute(ctx, stage, &partial)?;
    write_text(&partial.join(DIGEST_FILE), &format!("{digest}\n"))?;
    if final_dir.exists() {
        fs::remove_dir_all(&final_dir).map_err(|e| Error::io(&final_dir, e))?;
    }
    fs::rename(&partial, &final_dir).map_err(|e| Error::io(&final_dir, e))?;
    Ok(StageOutcome {
        stage,
        skipped: false,
        digest,
    })
}

fn execute(ctx: &Ctx<'_>, stage: Stage, dir: &Path) -> Result<()> {
    match stage {
        Stage::Ingest => ingest(ctx, dir),
        Stage::Filter => filter(ctx, dir),
        Stage::Dedup => dedup(ctx, dir),
        Stage::Sample => sample(ctx, dir),
        Stage::TrainVocab => train_vocab(ctx, dir),
        Stage::ConvertVocab => convert_vocab(ctx, dir),
        Stage::GenerateExamples => generate(ctx, dir),
        Stage::Stats => stats(ctx, dir),
        Stage::Audit => audit(ctx, dir),
    }
}

fn source_path(dir: &Path, source_id: &str) -> PathBuf {
    dir.join(format!("{source_id}.docs"))
}

fn ingest(ctx: &Ctx<'_>, dir: &Path) -> Result<()> {
    let mut kv = KvReport::new();
    for spec in &ctx.m.sources {
        let (docs, report) = read_corpus(spec)?;
        for w in &report.warnings {
            log::warn!("ingest: {w}");
        }
        write_documents_file(&source_path(dir, &spec.source_id), &docs)?;
        kv.extend(&format!("source.{}", spec.source_id), &report.to_kv());
    }
    kv.write(&dir.join("report.kv"))
}

fn filter(ctx: &Ctx<'_>, dir: &Path) -> Result<()> {
    let filter = Filter::new(&ctx.m.filter, LanguageProfiles::bundled());
    let mut report = FilterReport::default();
    for spec in &ctx.m.sources {
        let docs = read_documents_file(&ctx.docs_path(Stage::Ingest, &spec.source_id))?;
        let outcomes: Vec<_> = docs
            .par_iter()
            .map(|d| filter.filter_document(d, spec.book))
            .collect();
        report.record(&spec.source_id, &Default::default());
        let mut kept = Vec::new();
        for o in outcomes {
            report.record(&spec.source_id, &o.counts);
            kept.extend(o.document);
        }
        write_documents_file(&source_path(dir, &spec.source_id), &kept)?;
    }
    report.to_kv().write(&dir.join("report.kv"))?;
    write_text(&dir.join("report.txt"), &report.to_table().to_string())
}

fn dedup(ctx: &Ctx<'_>, dir: &Path) -> Result<()> {
    let mut index = ShingleIndex::from_config(&ctx.m.dedup)?;
    let mut kv = KvReport::new();
    let mut total = DedupReport::default();
    for spec in &ctx.m.sources {
        let docs = read_documents_file(&ctx.docs_path(Stage::Filter, &spec.source_id))?;
        let (kept, report) = dedup_stream(docs, &mut index, ctx.m.dedup.granularity);
        write_documents_file(&source_path(dir, &spec.source_id), &kept)?;
        kv.extend(&format!("source.{}", spec.source_id), &report.to_kv());
        total.merge(&report);
    }
    kv.extend("total", &total.to_kv());
    kv.push("shingles", index.len());
    index.write_spill(&dir.join("shingles.bin"))?;
    kv.write(&dir.join("report.kv"))
}

fn load_stage_docs(ctx: &Ctx<'_>, stage: Stage) -> Result<Vec<(String, Vec<Document>)>> {
    ctx.m
        .sources
        .iter()
        .map(|s| Ok((s.source_id.clone(), read_documents_file(&ctx.docs_path(stage, &s.source_id))?)))
        .collect()
}

fn sample(ctx: &Ctx<'_>, dir: &Path) -> Result<()> {
    let docs = load_stage_docs(ctx, Stage::Dedup)?;
    let sentences: BTreeMap<String, Vec<String>> = docs
        .par_iter()
        .map(|(id, docs)| {
            let lines = docs
                .iter()
                .flat_map(|d| &d.sentences)
                .map(|s| s.tokens().join(" "))
                .filter(|l| !l.is_empty())
                .collect();
            (id.clone(), lines)
        })
        .collect();

    let mut sizes: BTreeMap<String, Vec<(String, u64)>> = BTreeMap::new();
    for spec in &ctx.m.sources {
        sizes
            .entry(spec.language.clone())
            .or_default()
            .push((spec.source_id.clone(), sentences[&spec.source_id].len() as u64));
    }
    let total = match ctx.m.vocab.sample_total {
        Some(t) => t,
        None => {
            let smallest = sizes
                .values()
                .map(|s| s.iter().map(|(_, c)| c).sum::<u64>())
                .min()
                .unwrap_or(0);
            smallest * sizes.len() as u64
        }
    };
    let quota = plan_sample(&sizes, total)?;
    let picked = draw_sample(sentences, &quota, ctx.m.seed)?;
    let mut text = String::new();
    for line in &picked {
        text.push_str(line);
        text.push('\n');
    }
    write_text(&dir.join("sample.txt"), &text)?;
    quota.to_kv().write(&dir.join("report.kv"))?;
    write_text(&dir.join("report.txt"), &quota.to_table().to_string())
}

fn train_vocab(ctx: &Ctx<'_>, dir: &Path) -> Result<()> {
    let text = read_text(&ctx.stage_dir(Stage::Sample).join("sample.txt"))?;
    let sentences: Vec<Vec<&str>> = text.lines().map(|l| l.split(' ').collect()).collect();
    let outcome = learn_bpe(&sentences, &ctx.m.vocab.bpe())?;
    if outcome.target_unreachable {
        log::warn!(
            "train-vocab: target {} unreachable, vocabulary has {} pieces",
            ctx.m.vocab.target_size,
            outcome.vocab_size()
        );
    }
    let alphabet: String = outcome.merges.alphabet.iter().map(|c| format!("{c}\n")).collect();
    write_text(&dir.join("alphabet.txt"), &alphabet)?;
    write_text(&dir.join("merges.txt"), &outcome.merges.to_text())?;
    let pieces: String = outcome.pieces.iter().map(|p| format!("{p}\n")).collect();
    write_text(&dir.join("pieces.txt"), &pieces)?;

    let mut kv = KvReport::new();
    kv.push("target_size", ctx.m.vocab.target_size);
    kv.push("vocab_size", outcome.vocab_size());
    kv.push("target_unreachable", outcome.target_unreachable);
    kv.push("merges", outcome.merges.merges.len());
    kv.push("alphabet", outcome.merges.alphabet.len());
    kv.push("excluded_chars", outcome.excluded_chars.len());
    kv.push("skipped_words", outcome.skipped_words);
    kv.push("distinct_words", outcome.distinct_words);
    kv.write(&dir.join("report.kv"))
}

fn convert_vocab(ctx: &Ctx<'_>, dir: &Path) -> Result<()> {
    let train = ctx.stage_dir(Stage::TrainVocab);
    let alphabet: Vec<char> = read_text(&train.join("alphabet.txt"))?
        .lines()
        .filter_map(|l| l.chars().next())
        .collect();
    let merges = MergeRuleList::from_text(&read_text(&train.join("merges.txt"))?, alphabet)?;
    let pieces: Vec<Piece> = read_text(&train.join("pieces.txt"))?
        .lines()
        .filter(|l| !l.is_empty())
        .map(Piece::parse_surface)
        .collect();
    let (vocab, report) = convert_to_wordpiece(&merges, &pieces)?;
    vocab.write(&dir.join(VOCAB_FILE))?;
    let mut kv = KvReport::new();
    kv.push("size", vocab.len());
    kv.push("collisions", report.collisions);
    kv.push("checksum", format!("{:016x}", vocab.checksum()));
    kv.write(&dir.join("report.kv"))
}

fn generate(ctx: &Ctx<'_>, dir: &Path) -> Result<()> {
    let vocab = Vocabulary::read(&ctx.vocab_path())?;
    let docs = load_stage_docs(ctx, Stage::Dedup)?;
    let cfg = &ctx.m.masking;
    let seed = ctx.m.seed;

    let counts: Vec<usize> = docs
        .par_iter()
        .map(|(_, d)| count_instances(d, &vocab, cfg, seed))
        .collect();
    let mut one_pass: BTreeMap<String, Vec<(String, u64)>> = BTreeMap::new();
    for (spec, count) in ctx.m.sources.iter().zip(&counts) {
        one_pass
            .entry(spec.language.clone())
            .or_default()
            .push((spec.source_id.clone(), *count as u64));
    }
    let plan = plan_duplication(&one_pass, &ctx.m.duplication.balance_within, ctx.m.duplication.tolerance)?;
    for lang in plan.violations() {
        log::warn!("generate-examples: {lang} total outside the duplication tolerance");
    }
    plan.to_kv().write(&dir.join("plan.kv"))?;
    write_text(&dir.join("plan.txt"), &plan.to_table().to_string())?;

    let header = InstanceHeader::new(cfg.max_seq_len, cfg.max_predictions, vocab.checksum());
    let mut kv = KvReport::new();
    for (source_id, source_docs) in &docs {
        let factor = plan.factor_for(source_id).expect("planned source");
        let (instances, report) = build_instances(source_docs, &vocab, cfg, factor, seed)?;
        let name = format!("{source_id}.{INSTANCE_EXT}");
        write_instances(&dir.join(name), &header, &instances)?;
        kv.extend(&format!("source.{source_id}"), &report.to_kv());
        if report.single_document() && report.same_document_random > 0 {
            log::warn!("generate-examples: `{source_id}` has one document; random-next segments come from the same document");
        }
    }
    kv.write(&dir.join("report.kv"))
}

fn stats(ctx: &Ctx<'_>, dir: &Path) -> Result<()> {
    let vocab = Vocabulary::read(&ctx.vocab_path())?;
    let docs = load_stage_docs(ctx, Stage::Dedup)?;
    let all = docs.iter().flat_map(|(_, d)| d);
    let corpus = corpus_stats(all.clone());
    corpus.to_kv().write(&dir.join("corpus.kv"))?;
    write_text(&dir.join("corpus.txt"), &corpus.to_table().to_string())?;
    match fertility(all, &vocab) {
        Ok(f) => fertility_kv(&f).write(&dir.join("fertility.kv")),
        Err(Error::Empty(_)) => write_text(&dir.join("fertility.kv"), ""),
        Err(e) => Err(e),
    }
}

fn audit(ctx: &Ctx<'_>, dir: &Path) -> Result<()> {
    let vocab = Vocabulary::read(&ctx.vocab_path())?;
    let mut total = AuditReport::default();
    let mut kv = KvReport::new();
    for spec in &ctx.m.sources {
        let report = audit_instances(&ctx.shard_path(&spec.source_id), &vocab)?;
        kv.extend(&format!("source.{}", spec.source_id), &report.to_kv());
        total.merge(&report);
    }
    kv.extend("total", &total.to_kv());
    kv.write(&dir.join("report.kv"))?;
    if total.violations > 0 {
        return Err(Error::Corrupt(format!(
            "{} invariant violations; first: {}",
            total.violations,
            total.examples.first().map(String::as_str).unwrap_or("")
        )));
    }
    Ok(())
}
