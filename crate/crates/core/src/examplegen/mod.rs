//! Masked-LM / next-sentence pre-training instances.

mod duplication;
mod instances;
mod masking;
mod record;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use duplication::{plan_duplication, DuplicationPlan, LanguageTotal, SourceFactor};
pub use instances::{
    build_instances, count_instances, plan_chunks, tokenize_documents, Chunk, SourceGeneration,
    TokenizedDocument,
};
pub use masking::{apply_whole_word_masking, prediction_budget, whole_words, Masked};
pub use record::{
    encode_record, open_instances, read_instances, write_instances, InstanceHeader, InstanceReader,
    InstanceWriter, FORMAT_VERSION, MAGIC,
};

const SHARE_EPSILON: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MaskingConfig {
    pub masked_lm_prob: f64,
    pub mask_token_share: f64,
    pub random_share: f64,
    pub keep_share: f64,
    pub max_predictions: usize,
    pub max_seq_len: usize,
    pub short_seq_prob: f64,
    pub random_next_prob: f64,
}

impl Default for MaskingConfig {
    fn default() -> Self {
        Self {
            masked_lm_prob: 0.15,
            mask_token_share: 0.8,
            random_share: 0.1,
            keep_share: 0.1,
            max_predictions: 20,
            max_seq_len: 128,
            short_seq_prob: 0.1,
            random_next_prob: 0.5,
        }
    }
}

impl MaskingConfig {
    pub fn validate(&self) -> Result<()> {
        let probs = [
            ("masked_lm_prob", self.masked_lm_prob),
            ("mask_token_share", self.mask_token_share),
            ("random_share", self.random_share),
            ("keep_share", self.keep_share),
            ("short_seq_prob", self.short_seq_prob),
            ("random_next_prob", self.random_next_prob),
        ];
        for (name, p) in probs {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::Config(format!("{name} must be in [0, 1], got {p}")));
            }
        }
        let shares = self.mask_token_share + self.random_share + self.keep_share;
        if (shares - 1.0).abs() > SHARE_EPSILON {
            return Err(Error::Config(format!(
                "mask_token_share + random_share + keep_share must be 1, got {shares}"
            )));
        }
        if self.max_predictions == 0 {
            return Err(Error::Config("max_predictions must be at least 1".into()));
        }
        // positions and lengths are stored as u16
        if self.max_seq_len < 3 || self.max_seq_len > u16::MAX as usize {
            return Err(Error::Config(format!(
                "max_seq_len must be in [3, {}], got {}",
                u16::MAX,
                self.max_seq_len
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PretrainingInstance {
    pub ids: Vec<u32>,
    pub segment_ids: Vec<u8>,
    /// Ascending, never pointing at a special token.
    pub masked_positions: Vec<u32>,
    /// Original ids at `masked_positions`.
    pub masked_labels: Vec<u32>,
    pub is_random_next: bool,
}
