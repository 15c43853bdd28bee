//! Joint BPE learning over a word-frequency table.
//!
//! Words are split into characters; the first character of a word is a
//! word-initial piece, the rest are continuation pieces. Each step merges
//! the most frequent adjacent pair, ties going to the lexicographically
//! smallest `(left, right)`. Pair counts are maintained incrementally: every
//! word containing the merged pair is re-segmented and its pair counts are
//! replaced, which gives the same result as recounting from scratch.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashMap, HashSet};
use std::fmt;
use std::sync::Arc;

use rayon::prelude::*;

use super::SPECIAL_TOKENS;
use crate::error::{Error, Result};

/// A subword piece with its position marker.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Piece {
    pub text: String,
    /// Word-initial pieces become bare WordPiece entries, the rest get `##`.
    pub initial: bool,
}

impl Piece {
    pub fn initial(text: impl Into<String>) -> Self {
        Self {
            text: text.into(),
            initial: true,
        }
    }

    pub fn continuation(text: impl Into<String>) -> Self {
        Self {
            text: text.into(),
            initial: false,
        }
    }

    /// WordPiece surface form.
    pub fn surface(&self) -> String {
        if self.initial {
            self.text.clone()
        } else {
            format!("##{}", self.text)
        }
    }

    pub fn parse_surface(s: &str) -> Self {
        match s.strip_prefix("##") {
            Some(rest) if !rest.is_empty() => Self::continuation(rest),
            _ => Self::initial(s),
        }
    }

    fn key(&self) -> (&str, bool) {
        (&self.text, !self.initial)
    }
}

/// Text first, then word-initial before continuation.
impl Ord for Piece {
    fn cmp(&self, other: &Self) -> Ordering {
        self.key().cmp(&other.key())
    }
}

impl PartialOrd for Piece {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for Piece {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.surface())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct MergeRuleList {
    pub alphabet: Vec<char>,
    pub merges: Vec<(Piece, Piece)>,
}

impl MergeRuleList {
    /// One `left right` pair per line, pieces in surface form.
    pub fn to_text(&self) -> String {
        self.merges
            .iter()
            .map(|(l, r)| format!("{l} {r}\n"))
            .collect()
    }

    pub fn from_text(text: &str, alphabet: Vec<char>) -> Result<Self> {
        let mut merges = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            if line.is_empty() {
                continue;
            }
            let (l, r) = line.split_once(' ').ok_or_else(|| {
                Error::Vocab(format!("merge file line {}: expected `left right`", lineno + 1))
            })?;
            merges.push((Piece::parse_surface(l), Piece::parse_surface(r)));
        }
        Ok(Self { alphabet, merges })
    }

    /// Segments a word by replaying the merges in order. Characters outside
    /// the alphabet are kept as single-character pieces.
    pub fn segment(&self, word: &str) -> Vec<Piece> {
        let mut pieces = char_pieces(word);
        for (left, right) in &self.merges {
            apply_merge(&mut pieces, left, right);
        }
        pieces
    }
}

fn char_pieces(word: &str) -> Vec<Piece> {
    word.chars()
        .enumerate()
        .map(|(i, c)| Piece {
            text: c.to_string(),
            initial: i == 0,
        })
        .collect()
}

/// Left-to-right non-overlapping replacement of `left right` by their union.
pub fn apply_merge(pieces: &mut Vec<Piece>, left: &Piece, right: &Piece) {
    let mut i = 0;
    while i + 1 < pieces.len() {
        if &pieces[i] == left && &pieces[i + 1] == right {
            let r = pieces.remove(i + 1);
            pieces[i].text.push_str(&r.text);
        }
        i += 1;
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BpeConfig {
    /// Final vocabulary size including the special tokens.
    pub target_size: usize,
    /// Characters seen fewer times than this are left out of the alphabet;
    /// words containing them do not take part in training.
    pub min_char_count: u64,
}

impl Default for BpeConfig {
    fn default() -> Self {
        Self {
            target_size: 80_000,
            min_char_count: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BpeOutcome {
    pub merges: MergeRuleList,
    /// Distinct pieces: alphabet (both forms of each character) followed by
    /// merge results in creation order.
    pub pieces: Vec<Piece>,
    /// Set when merging ran out of pairs before reaching the target.
    pub target_unreachable: bool,
    pub excluded_chars: Vec<char>,
    pub skipped_words: usize,
    pub distinct_words: usize,
}

impl BpeOutcome {
    pub fn vocab_size(&self) -> usize {
        self.pieces.len() + SPECIAL_TOKENS.len()
    }
}

pub type WordCounts = HashMap<String, u64>;

pub fn word_counts<S: AsRef<str>>(sentences: &[Vec<S>]) -> WordCounts {
    let mut counts = WordCounts::new();
    for sentence in sentences {
        for word in sentence {
            let w = word.as_ref();
            if !w.is_empty() {
                *counts.entry(w.to_string()).or_insert(0) += 1;
            }
        }
    }
    counts
}

/// Alphabet (sorted by code point) and excluded characters.
pub fn alphabet(counts: &WordCounts, min_char_count: u64) -> (Vec<char>, Vec<char>) {
    let mut chars: HashMap<char, u64> = HashMap::new();
    for (word, freq) in counts {
        for c in word.chars() {
            *chars.entry(c).or_insert(0) += freq;
        }
    }
    let mut kept: Vec<char> = Vec::new();
    let mut excluded: Vec<char> = Vec::new();
    for (c, n) in chars {
        if n >= min_char_count {
            kept.push(c);
        } else {
            excluded.push(c);
        }
    }
    kept.sort_unstable();
    excluded.sort_unstable();
    (kept, excluded)
}

pub fn learn_bpe<S: AsRef<str> + Sync>(sentences: &[Vec<S>], cfg: &BpeConfig) -> Result<BpeOutcome> {
    learn_bpe_from_counts(&word_counts(sentences), cfg)
}

type PairId = (u32, u32);

struct Table {
    pieces: Vec<(Arc<str>, bool)>,
    ids: HashMap<(Arc<str>, bool), u32>,
}

impl Table {
    fn intern(&mut self, text: &str, initial: bool) -> (u32, bool) {
        if let Some(&id) = self.ids.get(&(Arc::from(text), initial)) {
            return (id, false);
        }
        let id = self.pieces.len() as u32;
        let text: Arc<str> = Arc::from(text);
        self.pieces.push((text.clone(), initial));
        self.ids.insert((text, initial), id);
        (id, true)
    }

    fn piece(&self, id: u32) -> Piece {
        let (text, initial) = &self.pieces[id as usize];
        Piece {
            text: text.to_string(),
            initial: *initial,
        }
    }

    fn sort_key(&self, id: u32) -> (Arc<str>, bool) {
        let (text, initial) = &self.pieces[id as usize];
        (text.clone(), !initial)
    }
}

#[derive(PartialEq, Eq)]
struct Candidate {
    count: u64,
    pair: PairId,
    key: ((Arc<str>, bool), (Arc<str>, bool)),
}

impl Ord for Candidate {
    fn cmp(&self, other: &Self) -> Ordering {
        self.count
            .cmp(&other.count)
            .then_with(|| other.key.cmp(&self.key))
    }
}

impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

fn word_pairs(symbols: &[u32]) -> impl Iterator<Item = PairId> + '_ {
    symbols.windows(2).map(|w| (w[0], w[1]))
}

pub fn learn_bpe_from_counts(counts: &WordCounts, cfg: &BpeConfig) -> Result<BpeOutcome> {
    let (alpha, excluded) = alphabet(counts, cfg.min_char_count);
    let base = SPECIAL_TOKENS.len() + 2 * alpha.len();
    if cfg.target_size < base {
        return Err(Error::Config(format!(
            "target vocabulary size {} is below the {} specials plus {} alphabet pieces",
            cfg.target_size,
            SPECIAL_TOKENS.len(),
            2 * alpha.len()
        )));
    }

    let mut table = Table {
        pieces: Vec::new(),
        ids: HashMap::new(),
    };
    for &c in &alpha {
        let s = c.to_string();
        table.intern(&s, true);
        table.intern(&s, false);
    }
    let char_ids: HashMap<char, (u32, u32)> = alpha
        .iter()
        .enumerate()
        .map(|(i, &c)| (c, (2 * i as u32, 2 * i as u32 + 1)))
        .collect();

    let mut sorted_words: Vec<(&String, u64)> = counts.iter().map(|(w, f)| (w, *f)).collect();
    sorted_words.sort_unstable();
    let mut skipped_words = 0;
    let mut words: Vec<Vec<u32>> = Vec::new();
    let mut freqs: Vec<u64> = Vec::new();
    for (word, freq) in &sorted_words {
        if !word.chars().all(|c| char_ids.contains_key(&c)) {
            skipped_words += 1;
            continue;
        }
        let symbols = word
            .chars()
            .enumerate()
            .map(|(i, c)| {
                let (initial, continuation) = char_ids[&c];
                if i == 0 {
                    initial
                } else {
                    continuation
                }
            })
            .collect();
        words.push(symbols);
        freqs.push(*freq);
    }

    let (mut pair_counts, mut occurrences) = words
        .par_iter()
        .enumerate()
        .fold(
            || (HashMap::<PairId, u64>::new(), HashMap::<PairId, Vec<usize>>::new()),
            |(mut counts, mut occ), (wi, symbols)| {
                for pair in word_pairs(symbols) {
                    *counts.entry(pair).or_insert(0) += freqs[wi];
                    let list = occ.entry(pair).or_default();
                    if list.last() != Some(&wi) {
                        list.push(wi);
                    }
                }
                (counts, occ)
            },
        )
        .reduce(
            || (HashMap::new(), HashMap::new()),
            |(mut c1, mut o1), (c2, o2)| {
                for (k, v) in c2 {
                    *c1.entry(k).or_insert(0) += v;
                }
                for (k, v) in o2 {
                    o1.entry(k).or_default().extend(v);
                }
                (c1, o1)
            },
        );

    let candidate = |table: &Table, pair: PairId, count: u64| Candidate {
        count,
        pair,
        key: (table.sort_key(pair.0), table.sort_key(pair.1)),
    };
    let mut heap: BinaryHeap<Candidate> = pair_counts
        .iter()
        .filter(|(_, &c)| c >= 2)
        .map(|(&p, &c)| candidate(&table, p, c))
        .collect();

    let mut merges = Vec::new();
    let mut target_unreachable = false;
    while table.pieces.len() + SPECIAL_TOKENS.len() < cfg.target_size {
        let best = loop {
            match heap.pop() {
                None => break None,
                Some(c) if pair_counts.get(&c.pair) == Some(&c.count) && c.count >= 2 => {
                    break Some(c.pair)
                }
                Some(_) => continue,
            }
        };
        let Some((left, right)) = best else {
            target_unreachable = true;
            break;
        };

        let merged_text = format!(
            "{}{}",
            table.pieces[left as usize].0,
            table.pieces[right as usize].0
        );
        let merged_initial = table.pieces[left as usize].1;
        let (merged, _) = table.intern(&merged_text, merged_initial);
        merges.push((table.piece(left), table.piece(right)));

        let mut affected = occurrences.remove(&(left, right)).unwrap_or_default();
        affected.sort_unstable();
        affected.dedup();
        let mut touched: HashSet<PairId> = HashSet::new();
        for wi in affected {
            let symbols = &mut words[wi];
            if !word_pairs(symbols).any(|p| p == (left, right)) {
                continue;
            }
            let freq = freqs[wi];
            for pair in word_pairs(symbols) {
                let c = pair_counts.get_mut(&pair).expect("pair counted");
                *c -= freq;
                touched.insert(pair);
            }
            let mut out = Vec::with_capacity(symbols.len());
            let mut i = 0;
            while i < symbols.len() {
                if i + 1 < symbols.len() && symbols[i] == left && symbols[i + 1] == right {
                    out.push(merged);
                    i += 2;
                } else {
                    out.push(symbols[i]);
                    i += 1;
                }
            }
            *symbols = out;
            for pair in word_pairs(symbols) {
                *pair_counts.entry(pair).or_insert(0) += freq;
                touched.insert(pair);
                let list = occurrences.entry(pair).or_default();
                if list.last() != Some(&wi) {
                    list.push(wi);
                }
            }
        }
        for pair in touched {
            let c = pair_counts[&pair];
            if c == 0 {
                pair_counts.remove(&pair);
            } else if c >= 2 {
                heap.push(candidate(&table, pair, c));
            }
        }
    }

    let pieces = (0..table.pieces.len() as u32).map(|id| table.piece(id)).collect();
    Ok(BpeOutcome {
        merges: MergeRuleList {
            alphabet: alpha,
            merges,
        },
        pieces,
        target_unreachable,
        excluded_chars: excluded,
        skipped_words,
        distinct_words: counts.len(),
    })
}
