use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::{Command, Output, Stdio};

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_bicorpus"));
    c.env_remove("BICORPUS_THREADS");
    c
}

fn fixture_manifest() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/fixtures/manifest.toml")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn print_config_shows_defaults() {
    let o = bin().arg("--print-config").output().unwrap();
    assert!(o.status.success());
    let text = stdout(&o);
    assert!(text.contains("target_size = 80000"), "{text}");
    assert!(text.contains("masked_lm_prob = 0.15"));
    assert!(text.contains("max_seq_len = 128"));
}

#[test]
fn print_config_applies_overrides() {
    let o = bin()
        .args(["generate-examples", "--print-config", "--max-seq-len", "512", "--manifest"])
        .arg(fixture_manifest())
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", stderr(&o));
    let text = stdout(&o);
    assert!(text.contains("max_seq_len = 512"));
    assert!(text.contains("seed = 20240601"));
}

#[test]
fn missing_input_fails_without_output() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = dir.path().join("m.toml");
    fs::write(
        &manifest,
        "[[source]]\nid = \"x\"\nlanguage = \"en\"\npaths = [\"gone.txt\"]\nformat = \"plain-lines\"\n",
    )
    .unwrap();
    let o = bin().arg("run").arg("--manifest").arg(&manifest).output().unwrap();
    assert!(!o.status.success());
    assert!(stderr(&o).contains("gone.txt"), "{}", stderr(&o));
    assert!(!dir.path().join("out").exists());
}

#[test]
fn full_run_then_tools() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let o = bin()
        .args(["--threads", "2", "run", "--fixed-clock", "0", "--manifest"])
        .arg(fixture_manifest())
        .arg("--output-dir")
        .arg(&out)
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("clock=0"));
    for stage in ["ingest", "filter", "dedup", "sample", "train-vocab", "convert-vocab", "generate-examples", "stats", "audit"] {
        assert!(out.join(stage).join("digest.txt").is_file(), "{stage}");
    }

    // a single stage rerun reproduces its shards
    let shard = out.join("generate-examples/en-wiki.instances");
    let before = fs::read(&shard).unwrap();
    let o = bin()
        .args(["generate-examples", "--manifest"])
        .arg(fixture_manifest())
        .arg("--output-dir")
        .arg(&out)
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(fs::read(&shard).unwrap(), before);

    // resume skips and says so
    let o = bin()
        .args(["dedup", "--resume", "--manifest"])
        .arg(fixture_manifest())
        .arg("--output-dir")
        .arg(&out)
        .output()
        .unwrap();
    assert!(o.status.success());
    assert!(stderr(&o).contains("dedup: skipped"), "{}", stderr(&o));

    let vocab = out.join("convert-vocab/vocab.txt");
    let mut child = bin()
        .arg("tokenize")
        .arg("--vocab")
        .arg(&vocab)
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .spawn()
        .unwrap();
    child.stdin.take().unwrap().write_all(b"The library.\n").unwrap();
    let o = child.wait_with_output().unwrap();
    assert!(o.status.success());
    let pieces = stdout(&o);
    let joined: String = pieces
        .split_whitespace()
        .map(|p| p.strip_prefix("##").unwrap_or(p))
        .collect();
    assert_eq!(joined, "Thelibrary.");

    let o = bin()
        .arg("audit")
        .arg("--vocab")
        .arg(&vocab)
        .arg("--instances")
        .arg(&shard)
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("violations=0"));

    // against some other vocabulary the checksum check fires
    let other = dir.path().join("other.txt");
    fs::write(&other, "[PAD]\n[UNK]\n[CLS]\n[SEP]\n[MASK]\na\n").unwrap();
    let o = bin()
        .arg("audit")
        .arg("--vocab")
        .arg(&other)
        .arg("--instances")
        .arg(&shard)
        .output()
        .unwrap();
    assert!(!o.status.success());
    assert!(stderr(&o).contains("vocab-mismatch"), "{}", stderr(&o));
}

#[test]
fn audit_rejects_foreign_files() {
    let dir = tempfile::tempdir().unwrap();
    let vocab = dir.path().join("v.txt");
    fs::write(&vocab, "[PAD]\n[UNK]\n[CLS]\n[SEP]\n[MASK]\na\n").unwrap();
    let junk = dir.path().join("junk.instances");
    fs::write(&junk, b"not an instance file at all").unwrap();
    let o = bin()
        .arg("audit")
        .arg("--vocab")
        .arg(&vocab)
        .arg("--instances")
        .arg(&junk)
        .output()
        .unwrap();
    assert!(!o.status.success());
    assert!(stderr(&o).contains("bad-magic"), "{}", stderr(&o));
}

#[test]
fn coverage_prints_one_decimal() {
    let dir = tempfile::tempdir().unwrap();
    let ours = dir.path().join("ours.txt");
    let theirs = dir.path().join("theirs.txt");
    fs::write(&ours, "[PAD]\na\nb\nc\nd\ne\nf\ng\nz\n").unwrap();
    fs::write(&theirs, "[UNK]\na\nb\nc\nd\ne\nf\ng\nh\n").unwrap();
    let o = bin()
        .arg("stats")
        .arg("--vocab")
        .arg(&ours)
        .arg("--reference")
        .arg(&theirs)
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).trim_end().ends_with(": 87.5%"), "{}", stdout(&o));
}

#[test]
fn thread_count_from_environment() {
    let o = bin()
        .env("BICORPUS_THREADS", "0")
        .arg("--print-config")
        .output()
        .unwrap();
    assert!(!o.status.success());
    assert!(stderr(&o).contains("--threads"));
}
