use std::io::{self, BufRead, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use bicorpus::manifest::Manifest;
use bicorpus::pipeline::{run_pipeline, RunOptions, Stage, RUN_REPORT};
use bicorpus::report::KvReport;
use bicorpus::stats::audit_instances;
use bicorpus::tokenizer::{pieces_of, tokenize_text, DEFAULT_MAX_CHARS};
use bicorpus::vocab::{read_piece_list, vocab_coverage, Vocabulary};

/// Bilingual pre-training corpus pipeline.
#[derive(Parser, Debug)]
#[command(name = "bicorpus", version, arg_required_else_help = true)]
struct Cli {
    /// Worker threads; defaults to one per core.
    #[arg(long, global = true, env = "BICORPUS_THREADS")]
    threads: Option<usize>,

    /// Print the effective configuration as TOML and exit. Without a
    /// manifest this shows every default.
    #[arg(long, global = true)]
    print_config: bool,

    /// Log verbosity (repeat for more).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,

    #[command(subcommand)]
    command: Option<Command>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Read raw sources into the canonical document stream.
    Ingest(StageArgs),
    /// Apply sentence and document filters.
    Filter(StageArgs),
    /// Drop near-duplicate documents.
    Dedup(StageArgs),
    /// Draw the balanced vocabulary-training sample.
    Sample(StageArgs),
    /// Learn BPE merges from the sample.
    TrainVocab(StageArgs),
    /// Turn the merges into a WordPiece vocabulary.
    ConvertVocab(StageArgs),
    /// Build masked-LM / next-sentence instance shards.
    GenerateExamples(StageArgs),
    /// Corpus statistics and fertility, or vocabulary coverage with
    /// `--reference`.
    Stats(StatsArgs),
    /// Check instance files for invariant violations.
    Audit(AuditArgs),
    /// Run several stages in order (all by default).
    Run(RunArgs),
    /// WordPiece-tokenize stdin, one line at a time.
    Tokenize(TokenizeArgs),
}

#[derive(Args, Debug, Default)]
struct Overrides {
    /// Run manifest (TOML).
    #[arg(long, short)]
    manifest: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    output_dir: Option<PathBuf>,
    /// Vocabulary-training sample size in sentences.
    #[arg(long)]
    sample_total: Option<u64>,
    /// Vocabulary size including special tokens.
    #[arg(long)]
    target_size: Option<usize>,
    #[arg(long)]
    max_seq_len: Option<usize>,
    #[arg(long)]
    max_predictions: Option<usize>,
    #[arg(long)]
    dedup_threshold: Option<f64>,
    /// Duplication balance tolerance.
    #[arg(long)]
    tolerance: Option<f64>,
    /// Skip stages whose inputs and settings are unchanged.
    #[arg(long)]
    resume: bool,
    /// Timestamp recorded in the run report instead of the wall clock.
    #[arg(long)]
    fixed_clock: Option<String>,
    /// Vocabulary for generate-examples, stats and audit.
    #[arg(long)]
    vocab: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct StageArgs {
    #[command(flatten)]
    o: Overrides,
}

#[derive(Args, Debug)]
struct RunArgs {
    #[command(flatten)]
    o: Overrides,
    /// Comma-separated stage subset.
    #[arg(long, value_delimiter = ',')]
    stages: Vec<String>,
}

#[derive(Args, Debug)]
struct StatsArgs {
    #[command(flatten)]
    o: Overrides,
    /// Reference vocabulary; prints the share of its pieces found in
    /// `--vocab`.
    #[arg(long)]
    reference: Vec<PathBuf>,
}

#[derive(Args, Debug)]
struct AuditArgs {
    #[command(flatten)]
    o: Overrides,
    /// Audit these instance files against `--vocab` instead of the
    /// manifest's shards.
    #[arg(long)]
    instances: Vec<PathBuf>,
}

#[derive(Args, Debug)]
struct TokenizeArgs {
    #[arg(long)]
    vocab: PathBuf,
    #[arg(long, default_value_t = DEFAULT_MAX_CHARS)]
    max_chars: usize,
}

impl Overrides {
    fn manifest(&self) -> Result<Manifest> {
        let mut m = match &self.manifest {
            Some(path) => Manifest::load(path)
                .with_context(|| format!("loading manifest {}", path.display()))?,
            None => Manifest::default(),
        };
        if let Some(v) = self.seed {
            m.seed = v;
        }
        if let Some(v) = &self.output_dir {
            m.output_dir = v.clone();
        }
        if let Some(v) = self.sample_total {
            m.vocab.sample_total = Some(v);
        }
        if let Some(v) = self.target_size {
            m.vocab.target_size = v;
        }
        if let Some(v) = self.max_seq_len {
            m.masking.max_seq_len = v;
        }
        if let Some(v) = self.max_predictions {
            m.masking.max_predictions = v;
        }
        if let Some(v) = self.dedup_threshold {
            m.dedup.threshold = v;
        }
        if let Some(v) = self.tolerance {
            m.duplication.tolerance = v;
        }
        Ok(m)
    }

    fn options(&self) -> RunOptions {
        RunOptions {
            resume: self.resume,
            fixed_clock: self.fixed_clock.clone(),
            vocab: self.vocab.clone(),
        }
    }

    fn run(&self, stages: &[Stage]) -> Result<Manifest> {
        if self.manifest.is_none() {
            bail!("--manifest is required");
        }
        let m = self.manifest()?;
        let summary = run_pipeline(&m, stages, &self.options())?;
        for s in &summary.stages {
            let status = if s.skipped { "skipped (resume)" } else { "done" };
            eprintln!("{}: {status}", s.stage);
        }
        Ok(m)
    }
}

fn print_file(path: &Path) -> Result<()> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    print!("{text}");
    Ok(())
}

fn stage_report(m: &Manifest, stage: Stage, file: &str) -> Result<()> {
    print_file(&m.output_dir.join(stage.name()).join(file))
}

fn coverage(vocab: &Path, references: &[PathBuf]) -> Result<()> {
    let ours = read_piece_list(vocab)?;
    for r in references {
        let theirs = read_piece_list(r)?;
        let c = vocab_coverage(&ours, &theirs)?;
        println!("coverage of {}: {:.1}%", r.display(), 100.0 * c);
    }
    Ok(())
}

fn audit_files(vocab: &Path, files: &[PathBuf]) -> Result<bool> {
    let v = Vocabulary::read(vocab)?;
    let mut clean = true;
    for f in files {
        let report = audit_instances(f, &v).with_context(|| format!("auditing {}", f.display()))?;
        println!("# {}", f.display());
        print!("{}", report.to_kv());
        for e in &report.examples {
            eprintln!("violation: {e}");
        }
        clean &= report.violations == 0;
    }
    Ok(clean)
}

fn tokenize(args: &TokenizeArgs) -> Result<()> {
    let vocab = Vocabulary::read(&args.vocab)?;
    let stdin = io::stdin();
    let mut out = io::BufWriter::new(io::stdout().lock());
    for line in stdin.lock().lines() {
        let ids = tokenize_text(&line?, &vocab, args.max_chars);
        writeln!(out, "{}", pieces_of(&ids, &vocab).join(" "))?;
    }
    out.flush()?;
    Ok(())
}

fn overrides(cmd: &Command) -> Option<&Overrides> {
    match cmd {
        Command::Ingest(a)
        | Command::Filter(a)
        | Command::Dedup(a)
        | Command::Sample(a)
        | Command::TrainVocab(a)
        | Command::ConvertVocab(a)
        | Command::GenerateExamples(a) => Some(&a.o),
        Command::Stats(a) => Some(&a.o),
        Command::Audit(a) => Some(&a.o),
        Command::Run(a) => Some(&a.o),
        Command::Tokenize(_) => None,
    }
}

fn single_stage(cmd: &Command) -> Option<Stage> {
    Some(match cmd {
        Command::Ingest(_) => Stage::Ingest,
        Command::Filter(_) => Stage::Filter,
        Command::Dedup(_) => Stage::Dedup,
        Command::Sample(_) => Stage::Sample,
        Command::TrainVocab(_) => Stage::TrainVocab,
        Command::ConvertVocab(_) => Stage::ConvertVocab,
        Command::GenerateExamples(_) => Stage::GenerateExamples,
        _ => return None,
    })
}

fn dispatch(cmd: &Command) -> Result<bool> {
    if let Some(stage) = single_stage(cmd) {
        let m = overrides(cmd).expect("stage command").run(&[stage])?;
        let file = if stage == Stage::GenerateExamples { "plan.txt" } else { "report.kv" };
        stage_report(&m, stage, file)?;
        return Ok(true);
    }
    match cmd {
        Command::Stats(a) if !a.reference.is_empty() => {
            let Some(vocab) = &a.o.vocab else {
                bail!("--reference needs --vocab");
            };
            coverage(vocab, &a.reference)?;
        }
        Command::Stats(a) => {
            let m = a.o.run(&[Stage::Stats])?;
            stage_report(&m, Stage::Stats, "corpus.txt")?;
            stage_report(&m, Stage::Stats, "fertility.kv")?;
        }
        Command::Audit(a) if !a.instances.is_empty() => {
            let Some(vocab) = &a.o.vocab else {
                bail!("--instances needs --vocab");
            };
            return audit_files(vocab, &a.instances);
        }
        Command::Audit(a) => {
            let m = a.o.run(&[Stage::Audit])?;
            stage_report(&m, Stage::Audit, "report.kv")?;
        }
        Command::Run(a) => {
            let stages = if a.stages.is_empty() {
                Stage::ALL.to_vec()
            } else {
                a.stages.iter().map(|s| s.parse()).collect::<Result<_, _>>()?
            };
            let m = a.o.run(&stages)?;
            let run = KvReport::parse(&std::fs::read_to_string(m.output_dir.join(RUN_REPORT))?)?;
            print!("{run}");
        }
        Command::Tokenize(a) => tokenize(a)?,
        _ => unreachable!("stage commands handled above"),
    }
    Ok(true)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();

    match real_main(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn real_main(cli: &Cli) -> Result<bool> {
    if let Some(n) = cli.threads {
        if n == 0 {
            bail!("--threads must be at least 1");
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("configuring the thread pool")?;
    }
    if cli.print_config {
        let m = match cli.command.as_ref().and_then(overrides) {
            Some(o) => o.manifest()?,
            None => Manifest::default(),
        };
        print!("{}", m.to_toml());
        return Ok(true);
    }
    match &cli.command {
        Some(cmd) => dispatch(cmd),
        None => bail!("no command given; see --help"),
    }
}
