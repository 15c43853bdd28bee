use std::fs;
use std::path::{Path, PathBuf};

use bicorpus::manifest::Manifest;
use bicorpus::pipeline::{run_pipeline, RunOptions, Stage};
use bicorpus::report::KvReport;
use bicorpus::Error;

fn fixture_manifest(out: &Path) -> Manifest {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures/manifest.toml");
    let mut m = Manifest::load(&path).unwrap();
    m.output_dir = out.to_path_buf();
    m
}

fn kv(path: PathBuf) -> KvReport {
    KvReport::parse(&fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn full_run_produces_every_report() {
    let dir = tempfile::tempdir().unwrap();
    let m = fixture_manifest(dir.path());
    let opts = RunOptions {
        fixed_clock: Some("0".into()),
        ..Default::default()
    };
    let summary = run_pipeline(&m, &Stage::ALL, &opts).unwrap();
    assert_eq!(summary.stages.len(), Stage::ALL.len());
    for stage in Stage::ALL {
        let d = dir.path().join(stage.name());
        assert!(d.join("digest.txt").is_file(), "{stage}");
        assert!(!dir.path().join(format!("{stage}.partial")).exists());
    }
    let filter = kv(dir.path().join("filter/report.kv"));
    println!("{filter}");
    let dedup = kv(dir.path().join("dedup/report.kv"));
    println!("{dedup}");
    assert_ne!(dedup.get("total.dropped"), Some("0"));
    let train = kv(dir.path().join("train-vocab/report.kv"));
    println!("{train}");
    assert_eq!(train.get("vocab_size"), Some("800"));
    println!("{}", fs::read_to_string(dir.path().join("generate-examples/plan.txt")).unwrap());
    let audit = kv(dir.path().join("audit/report.kv"));
    println!("{audit}");
    assert_eq!(audit.get("total.violations"), Some("0"));
    println!("{}", fs::read_to_string(dir.path().join("stats/corpus.txt")).unwrap());
}

#[test]
fn missing_input_fails_before_writing() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let mut m = fixture_manifest(&out);
    m.sources[0].paths.push(dir.path().join("nope.txt"));
    let err = run_pipeline(&m, &Stage::ALL, &RunOptions::default()).unwrap_err();
    assert!(matches!(err, Error::MissingInput { .. }));
    assert!(!out.exists());
}

#[test]
fn stage_without_inputs_names_itself() {
    let dir = tempfile::tempdir().unwrap();
    let m = fixture_manifest(dir.path());
    let err = run_pipeline(&m, &[Stage::Dedup], &RunOptions::default()).unwrap_err();
    assert!(err.to_string().contains("stage `dedup` failed"), "{err}");
}

#[test]
fn resume_skips_and_rerun_is_identical() {
    let dir = tempfile::tempdir().unwrap();
    let m = fixture_manifest(dir.path());
    let opts = RunOptions {
        fixed_clock: Some("0".into()),
        ..Default::default()
    };
    let upto = [
        Stage::Ingest,
        Stage::Filter,
        Stage::Dedup,
        Stage::Sample,
        Stage::TrainVocab,
        Stage::ConvertVocab,
        Stage::GenerateExamples,
    ];
    run_pipeline(&m, &upto, &opts).unwrap();
    let shard = dir.path().join("generate-examples/fi-news.instances");
    let first = fs::read(&shard).unwrap();

    let resumed = run_pipeline(&m, &upto, &RunOptions { resume: true, ..opts.clone() }).unwrap();
    assert!(resumed.stages.iter().all(|s| s.skipped));

    let again = run_pipeline(&m, &[Stage::GenerateExamples], &opts).unwrap();
    assert!(!again.stages[0].skipped);
    assert_eq!(fs::read(&shard).unwrap(), first);

    let mut changed = m.clone();
    changed.seed += 1;
    let rerun = run_pipeline(&changed, &[Stage::GenerateExamples], &RunOptions { resume: true, ..opts }).unwrap();
    assert!(!rerun.stages[0].skipped);
    assert_ne!(fs::read(&shard).unwrap(), first);
}

#[test]
fn committed_fixtures_match_generator() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures/corpora");
    for (name, text) in bicorpus::synth::fixture_corpora().unwrap() {
        let on_disk = std::fs::read_to_string(dir.join(&name)).unwrap();
        assert!(on_disk == text, "{name} is stale; rerun the make_fixtures example");
    }
}
