use rand::seq::SliceRandom;
use rand::Rng;

use super::MaskingConfig;
use crate::rng::StageRng;
use crate::vocab::{Vocabulary, MASK_ID, SPECIAL_TOKENS};

/// Groups non-special positions into whole words: a word starts at any
/// non-`##` piece, or at a `##` piece that follows a special token.
pub fn whole_words(ids: &[u32], vocab: &Vocabulary) -> Vec<Vec<usize>> {
    let mut words: Vec<Vec<usize>> = Vec::new();
    let mut prev_special = true;
    for (pos, &id) in ids.iter().enumerate() {
        if Vocabulary::is_special_id(id) {
            prev_special = true;
            continue;
        }
        if prev_special || !vocab.is_continuation_id(id) {
            words.push(vec![pos]);
        } else {
            words.last_mut().expect("word open").push(pos);
        }
        prev_special = false;
    }
    words
}

/// `min(max_predictions, max(1, round(masked_lm_prob * non_special)))`.
pub fn prediction_budget(non_special: usize, cfg: &MaskingConfig) -> usize {
    if non_special == 0 {
        return 0;
    }
    let scaled = (cfg.masked_lm_prob * non_special as f64).round() as usize;
    scaled.max(1).min(cfg.max_predictions)
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Masked {
    pub positions: Vec<u32>,
    pub labels: Vec<u32>,
}

/// Whole-word masking in place. Words are visited in random order and taken
/// only if all their pieces fit in the remaining budget. Each piece of a
/// taken word is independently replaced by `[MASK]`, by a random non-special
/// id, or left as is.
pub fn apply_whole_word_masking(
    ids: &mut [u32],
    vocab: &Vocabulary,
    cfg: &MaskingConfig,
    rng: &mut StageRng,
) -> Masked {
    let mut words = whole_words(ids, vocab);
    let non_special: usize = words.iter().map(Vec::len).sum();
    let mut remaining = prediction_budget(non_special, cfg);
    words.shuffle(rng);

    let mut chosen: Vec<(u32, u32)> = Vec::with_capacity(remaining);
    let random_low = SPECIAL_TOKENS.len() as u32;
    let random_high = vocab.len() as u32;
    for word in &words {
        if remaining == 0 {
            break;
        }
        if word.len() > remaining {
            continue;
        }
        remaining -= word.len();
        for &pos in word {
            let original = ids[pos];
            let roll: f64 = rng.gen();
            if roll < cfg.mask_token_share {
                ids[pos] = MASK_ID;
            } else if roll < cfg.mask_token_share + cfg.random_share && random_high > random_low {
                ids[pos] = rng.gen_range(random_low..random_high);
            }
            chosen.push((pos as u32, original));
        }
    }
    chosen.sort_unstable();
    let (positions, labels) = chosen.into_iter().unzip();
    Masked { positions, labels }
}
