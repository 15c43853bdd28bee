//! Brute-force BPE reference shared by the oracle and acceptance tests.

use std::collections::{BTreeSet, HashMap};

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use bicorpus::vocab::{BpeConfig, Piece, WordCounts};

pub struct OracleOutcome {
    pub merges: Vec<(Piece, Piece)>,
    pub pieces: BTreeSet<Piece>,
    pub unreachable: bool,
}

pub fn oracle(counts: &WordCounts, cfg: &BpeConfig) -> OracleOutcome {
    let mut char_freq: HashMap<char, u64> = HashMap::new();
    for (w, f) in counts {
        for c in w.chars() {
            *char_freq.entry(c).or_default() += f;
        }
    }
    let alphabet: BTreeSet<char> = char_freq
        .into_iter()
        .filter(|(_, n)| *n >= cfg.min_char_count)
        .map(|(c, _)| c)
        .collect();
    let mut pieces: BTreeSet<Piece> = BTreeSet::new();
    for c in &alphabet {
        pieces.insert(Piece::initial(c.to_string()));
        pieces.insert(Piece::continuation(c.to_string()));
    }
    let mut words: Vec<(Vec<Piece>, u64)> = counts
        .iter()
        .filter(|(w, _)| w.chars().all(|c| alphabet.contains(&c)))
        .map(|(w, f)| {
            let seg = w
                .chars()
                .enumerate()
                .map(|(i, c)| {
                    if i == 0 {
                        Piece::initial(c.to_string())
                    } else {
                        Piece::continuation(c.to_string())
                    }
                })
                .collect();
            (seg, *f)
        })
        .collect();

    let mut merges = Vec::new();
    let mut unreachable = false;
    while pieces.len() + 5 < cfg.target_size {
        let mut pairs: HashMap<(Piece, Piece), u64> = HashMap::new();
        for (seg, f) in &words {
            for w in seg.windows(2) {
                *pairs.entry((w[0].clone(), w[1].clone())).or_default() += f;
            }
        }
        // highest count; among equals the smallest (left, right)
        let best = pairs
            .into_iter()
            .filter(|(_, n)| *n >= 2)
            .min_by(|(pa, na), (pb, nb)| nb.cmp(na).then_with(|| pa.cmp(pb)));
        let Some(((left, right), _)) = best else {
            unreachable = true;
            break;
        };
        let merged = Piece {
            text: format!("{}{}", left.text, right.text),
            initial: left.initial,
        };
        for (seg, _) in &mut words {
            let mut out = Vec::with_capacity(seg.len());
            let mut i = 0;
            while i < seg.len() {
                if i + 1 < seg.len() && seg[i] == left && seg[i + 1] == right {
                    out.push(merged.clone());
                    i += 2;
                } else {
                    out.push(seg[i].clone());
                    i += 1;
                }
            }
            *seg = out;
        }
        pieces.insert(merged);
        merges.push((left, right));
    }
    OracleOutcome {
        merges,
        pieces,
        unreachable,
    }
}

pub fn random_corpus(rng: &mut ChaCha8Rng) -> WordCounts {
    let letters: Vec<char> = "abcdeäö".chars().collect();
    let alpha = rng.gen_range(2..=letters.len());
    let distinct = rng.gen_range(5..200);
    let lexicon: Vec<String> = (0..distinct)
        .map(|_| {
            let len = rng.gen_range(1..=8);
            (0..len).map(|_| letters[rng.gen_range(0..alpha)]).collect()
        })
        .collect();
    let total = rng.gen_range(10..=1000);
    let mut counts = WordCounts::new();
    for _ in 0..total {
        // skewed toward the front of the lexicon
        let i = (rng.gen::<f64>().powi(2) * lexicon.len() as f64) as usize;
        *counts.entry(lexicon[i].clone()).or_default() += 1;
    }
    counts
}
