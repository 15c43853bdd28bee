//! Run manifests: a TOML file naming the sources and every stage setting.
//!
//! ```toml
//! seed = 17
//! output_dir = "out"
//!
//! [[source]]
//! id = "wiki"
//! language = "en"
//! paths = ["corpora/wiki.txt"]
//! format = "doc-blocks"
//!
//! [vocab]
//! target_size = 1000
//!
//! [duplication]
//! balance_within = ["fi"]
//! ```
//!
//! Relative paths resolve against the manifest's directory. Omitted sections
//! take their defaults.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::dedup::DedupConfig;
use crate::error::{Error, Result};
use crate::examplegen::MaskingConfig;
use crate::filter::FilterConfig;
use crate::ingest::SourceSpec;
use crate::vocab::BpeConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VocabParams {
    /// Sentences drawn for vocabulary training, split evenly over languages.
    /// Unset means the largest balanced sample the corpus allows.
    pub sample_total: Option<u64>,
    pub target_size: usize,
    pub min_char_count: u64,
}

impl Default for VocabParams {
    fn default() -> Self {
        let bpe = BpeConfig::default();
        Self {
            sample_total: None,
            target_size: bpe.target_size,
            min_char_count: bpe.min_char_count,
        }
    }
}

impl VocabParams {
    pub fn bpe(&self) -> BpeConfig {
        BpeConfig {
            target_size: self.target_size,
            min_char_count: self.min_char_count,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DuplicationParams {
    pub balance_within: BTreeSet<String>,
    pub tolerance: f64,
}

impl Default for DuplicationParams {
    fn default() -> Self {
        Self {
            balance_within: BTreeSet::new(),
            tolerance: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default, rename = "source")]
    pub sources: Vec<SourceSpec>,
    #[serde(default)]
    pub filter: FilterConfig,
    #[serde(default)]
    pub dedup: DedupConfig,
    #[serde(default)]
    pub vocab: VocabParams,
    #[serde(default)]
    pub masking: MaskingConfig,
    #[serde(default)]
    pub duplication: DuplicationParams,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

impl Default for Manifest {
    fn default() -> Self {
        Self {
            seed: 0,
            output_dir: default_output_dir(),
            sources: Vec::new(),
            filter: FilterConfig::default(),
            dedup: DedupConfig::default(),
            vocab: VocabParams::default(),
            masking: MaskingConfig::default(),
            duplication: DuplicationParams::default(),
        }
    }
}

impl Manifest {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(format!("manifest: {e}")))
    }

    /// Reads a manifest and resolves relative paths against its directory.
    /// Does not validate.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut m = Self::parse(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        m.resolve_paths(base);
        Ok(m)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        let resolve = |p: &Path| if p.is_relative() { base.join(p) } else { p.to_path_buf() };
        self.output_dir = resolve(&self.output_dir);
        for s in &mut self.sources {
            s.paths = s.paths.iter().map(|p| resolve(p)).collect();
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("manifest serializes")
    }

    /// Sources grouped by language, in manifest order within each language.
    pub fn sources_by_language(&self) -> BTreeMap<&str, Vec<&SourceSpec>> {
        let mut out: BTreeMap<&str, Vec<&SourceSpec>> = BTreeMap::new();
        for s in &self.sources {
            out.entry(s.language.as_str()).or_default().push(s);
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        if self.sources.is_empty() {
            return Err(Error::Config("manifest lists no sources".into()));
        }
        let mut ids = BTreeSet::new();
        for s in &self.sources {
            let id_ok = !s.source_id.is_empty()
                && s.source_id
                    .chars()
                    .all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_');
            if !id_ok {
                return Err(Error::Config(format!(
                    "source id `{}` must be non-empty ASCII letters, digits, `-` or `_`",
                    s.source_id
                )));
            }
            if !ids.insert(s.source_id.as_str()) {
                return Err(Error::Config(format!("duplicate source id `{}`", s.source_id)));
            }
            if s.language.is_empty() {
                return Err(Error::Config(format!("source `{}` has no language", s.source_id)));
            }
            if s.paths.is_empty() {
                return Err(Error::Config(format!("source `{}` lists no paths", s.source_id)));
            }
            for p in &s.paths {
                if !p.is_file() {
                    return Err(Error::MissingInput {
                        source_id: s.source_id.clone(),
                        path: p.clone(),
                    });
                }
            }
        }
        self.filter.validate()?;
        self.dedup.validate()?;
        self.masking.validate()?;
        let langs: BTreeSet<&str> = self.sources.iter().map(|s| s.language.as_str()).collect();
        if let Some(l) = self
            .duplication
            .balance_within
            .iter()
            .find(|l| !langs.contains(l.as_str()))
        {
            return Err(Error::Config(format!("balance_within names unknown language `{l}`")));
        }
        if !(0.0..=1.0).contains(&self.duplication.tolerance) {
            return Err(Error::Config("duplication tolerance must be in [0, 1]".into()));
        }
        if self.vocab.sample_total == Some(0) {
            return Err(Error::Config("vocab sample_total must be positive".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const TEXT: &str = r#"
seed = 7
output_dir = "run"

[[source]]
id = "wiki"
language = "en"
paths = ["a.txt"]
format = "doc-blocks"

[[source]]
id = "news"
language = "fi"
paths = ["b.txt"]
format = "plain-lines"
segment = true

[vocab]
target_size = 500

[masking]
max_seq_len = 64

[duplication]
balance_within = ["fi"]
"#;

    #[test]
    fn parse_and_resolve() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("a.txt"), "x\n").unwrap();
        fs::write(dir.path().join("b.txt"), "y\n").unwrap();
        let path = dir.path().join("m.toml");
        fs::write(&path, TEXT).unwrap();
        let m = Manifest::load(&path).unwrap();
        assert_eq!(m.seed, 7);
        assert_eq!(m.output_dir, dir.path().join("run"));
        assert_eq!(m.sources[1].paths[0], dir.path().join("b.txt"));
        assert!(m.sources[1].segment);
        assert_eq!(m.vocab.target_size, 500);
        assert_eq!(m.vocab.min_char_count, 10);
        assert_eq!(m.masking.max_seq_len, 64);
        assert_eq!(m.masking.max_predictions, 20);
        m.validate().unwrap();
        assert_eq!(Manifest::parse(&m.to_toml()).unwrap(), m);
    }

    #[test]
    fn missing_file_fails_validation() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("a.txt"), "x\n").unwrap();
        let path = dir.path().join("m.toml");
        fs::write(&path, TEXT).unwrap();
        let m = Manifest::load(&path).unwrap();
        assert!(matches!(m.validate(), Err(Error::MissingInput { source_id, .. }) if source_id == "news"));
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(Manifest::parse("seed = 1\nbogus = 2\n").is_err());
        assert!(Manifest::parse("[vocab]\ntarget = 2\n").is_err());
    }

    #[test]
    fn defaults_round_trip() {
        let m = Manifest::default();
        assert_eq!(Manifest::parse(&m.to_toml()).unwrap(), m);
    }
}
