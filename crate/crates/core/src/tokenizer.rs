//! Greedy longest-match-first WordPiece tokenization and pair encoding.

use crate::ingest::basic_tokenize;
use crate::vocab::{Vocabulary, CLS_ID, CONTINUATION_PREFIX, SEP_ID, SPECIAL_TOKENS, UNK_ID};

pub const DEFAULT_MAX_CHARS: usize = 100;

/// Splits one basic token into vocabulary pieces. A word longer than
/// `max_chars`, or one with any remainder that no piece matches, becomes a
/// single `[UNK]`.
pub fn wordpiece_tokenize(word: &str, vocab: &Vocabulary, max_chars: usize) -> Vec<u32> {
    let chars: Vec<(usize, char)> = word.char_indices().collect();
    if chars.is_empty() {
        return Vec::new();
    }
    if chars.len() > max_chars {
        return vec![UNK_ID];
    }
    let mut ids = Vec::new();
    let mut start = 0;
    let mut candidate = String::with_capacity(word.len() + 2);
    while start < chars.len() {
        let mut end = chars.len();
        let mut found = None;
        while start < end {
            let from = chars[start].0;
            let to = chars.get(end).map_or(word.len(), |c| c.0);
            candidate.clear();
            if start > 0 {
                candidate.push_str(CONTINUATION_PREFIX);
            }
            candidate.push_str(&word[from..to]);
            if let Some(id) = vocab.id(&candidate) {
                // specials are never matched as word content
                if !Vocabulary::is_special_id(id) {
                    found = Some(id);
                    break;
                }
            }
            end -= 1;
        }
        match found {
            Some(id) => {
                ids.push(id);
                start = end;
            }
            None => return vec![UNK_ID],
        }
    }
    ids
}

pub fn pieces_of(ids: &[u32], vocab: &Vocabulary) -> Vec<String> {
    ids.iter()
        .map(|&id| vocab.piece(id).unwrap_or(SPECIAL_TOKENS[UNK_ID as usize]).to_string())
        .collect()
}

/// WordPiece ids for a sequence of basic tokens.
pub fn tokenize_words<S: AsRef<str>>(words: &[S], vocab: &Vocabulary, max_chars: usize) -> Vec<u32> {
    words
        .iter()
        .flat_map(|w| wordpiece_tokenize(w.as_ref(), vocab, max_chars))
        .collect()
}

/// Basic tokenization followed by WordPiece.
pub fn tokenize_text(text: &str, vocab: &Vocabulary, max_chars: usize) -> Vec<u32> {
    tokenize_words(&basic_tokenize(text), vocab, max_chars)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EncodedPair {
    pub ids: Vec<u32>,
    pub segment_ids: Vec<u8>,
    pub pieces: Vec<String>,
}

/// Removes pieces from the tail of the longer side until both fit in
/// `max_pieces`. Ties shorten `a`.
pub fn truncate_pair(a: &mut Vec<u32>, b: &mut Vec<u32>, max_pieces: usize) {
    while a.len() + b.len() > max_pieces {
        if a.len() >= b.len() {
            a.pop();
        } else {
            b.pop();
        }
    }
}

/// Lays out `[CLS] a [SEP] b [SEP]` (or `[CLS] a [SEP]` without `b`) from
/// WordPiece ids, truncating to `max_len`.
pub fn assemble_pair(
    mut a: Vec<u32>,
    b: Option<Vec<u32>>,
    vocab: &Vocabulary,
    max_len: usize,
) -> EncodedPair {
    let specials = if b.is_some() { 3 } else { 2 };
    assert!(max_len >= specials, "max_len must leave room for the special tokens");
    let mut b_ids = b.clone().unwrap_or_default();
    truncate_pair(&mut a, &mut b_ids, max_len - specials);

    let mut ids = Vec::with_capacity(a.len() + b_ids.len() + specials);
    let mut segment_ids = Vec::with_capacity(ids.capacity());
    ids.push(CLS_ID);
    ids.extend_from_slice(&a);
    ids.push(SEP_ID);
    segment_ids.resize(ids.len(), 0);
    if b.is_some() {
        ids.extend_from_slice(&b_ids);
        ids.push(SEP_ID);
        segment_ids.resize(ids.len(), 1);
    }
    let pieces = pieces_of(&ids, vocab);
    EncodedPair {
        ids,
        segment_ids,
        pieces,
    }
}

pub fn encode_pair<S: AsRef<str>>(
    a: &[S],
    b: Option<&[S]>,
    vocab: &Vocabulary,
    max_len: usize,
) -> EncodedPair {
    let a_ids = tokenize_words(a, vocab, DEFAULT_MAX_CHARS);
    let b_ids = b.map(|b| tokenize_words(b, vocab, DEFAULT_MAX_CHARS));
    assemble_pair(a_ids, b_ids, vocab, max_len)
}

/// Joins pieces back into space-separated words: `##` pieces attach to the
/// preceding piece and special tokens are dropped.
pub fn decode<S: AsRef<str>>(pieces: &[S]) -> String {
    let mut out = String::new();
    for piece in pieces {
        let piece = piece.as_ref();
        if SPECIAL_TOKENS.contains(&piece) {
            continue;
        }
        match piece.strip_prefix(CONTINUATION_PREFIX) {
            Some(rest) if !rest.is_empty() => out.push_str(rest),
            _ => {
                if !out.is_empty() {
                    out.push(' ');
                }
                out.push_str(piece);
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;

    fn vocab(pieces: &[&str]) -> Vocabulary {
        let mut all: Vec<String> = SPECIAL_TOKENS.iter().map(|s| s.to_string()).collect();
        all.extend(pieces.iter().map(|s| s.to_string()));
        Vocabulary::from_pieces(all).unwrap()
    }

    fn wp(word: &str, v: &Vocabulary) -> Vec<String> {
        pieces_of(&wordpiece_tokenize(word, v, DEFAULT_MAX_CHARS), v)
    }

    #[test]
    fn greedy_longest_match() {
        let v = vocab(&["un", "##aff", "##able", "u", "##n", "##a", "##f", "low"]);
        assert_eq!(wp("unaffable", &v), ["un", "##aff", "##able"]);
        assert_eq!(wp("low", &v), ["low"]);
        assert_eq!(wp("xqz", &v), ["[UNK]"]);
        // the whole word fails if any remainder is unmatched
        assert_eq!(wp("unx", &v), ["[UNK]"]);
    }

    #[test]
    fn overlong_word_is_unknown() {
        let v = vocab(&["a", "##a"]);
        assert_eq!(wordpiece_tokenize(&"a".repeat(101), &v, 100), [UNK_ID]);
        assert_eq!(wordpiece_tokenize(&"a".repeat(100), &v, 100).len(), 100);
    }

    #[test]
    fn multibyte_words() {
        let v = vocab(&["hä", "##tä", "ä"]);
        assert_eq!(wp("hätä", &v), ["hä", "##tä"]);
    }

    #[test]
    fn pair_layout() {
        let v = vocab(&["he", "is", "ok", "hi"]);
        let e = encode_pair(&["he", "is"], Some(&["ok"][..]), &v, 6);
        assert_eq!(e.pieces, ["[CLS]", "he", "is", "[SEP]", "ok", "[SEP]"]);
        assert_eq!(e.segment_ids, [0, 0, 0, 0, 1, 1]);
        let single = encode_pair::<&str>(&["hi"], None, &v, 8);
        assert_eq!(single.pieces, ["[CLS]", "hi", "[SEP]"]);
        assert_eq!(single.segment_ids, [0, 0, 0]);
    }

    #[test]
    fn truncation_trims_longer_side() {
        // 10 + 2 pieces with max_len 8 leave 5 slots: a keeps 3, b keeps 2
        let v = vocab(&["w0", "w1", "w2", "w3", "w4", "w5", "w6", "w7", "w8", "w9", "x", "y"]);
        let a: Vec<String> = (0..10).map(|i| format!("w{i}")).collect();
        let b = ["x".to_string(), "y".to_string()];
        let e = encode_pair(&a, Some(&b[..]), &v, 8);
        assert_eq!(e.ids.len(), 8);
        assert_eq!(e.pieces, ["[CLS]", "w0", "w1", "w2", "[SEP]", "x", "y", "[SEP]"]);
    }

    #[test]
    fn decode_rules() {
        assert_eq!(decode(&["un", "##aff", "##able"]), "unaffable");
        assert_eq!(decode(&["[CLS]", "hi", "[SEP]"]), "hi");
        assert_eq!(decode::<&str>(&[]), "");
    }

    fn word_vocab() -> Vocabulary {
        vocab(&[
            "a", "b", "c", "ab", "abc", "##a", "##b", "##c", "##ab", "##bc", "ca", "##ca",
        ])
    }

    proptest! {
        #[test]
        fn covered_words_round_trip(word in "[abc]{1,12}") {
            let v = word_vocab();
            let ids = wordpiece_tokenize(&word, &v, DEFAULT_MAX_CHARS);
            prop_assert!(ids.iter().all(|&id| id == UNK_ID || v.piece(id).is_some()));
            prop_assert!(!ids.contains(&UNK_ID));
            prop_assert_eq!(decode(&pieces_of(&ids, &v)), word);
        }

        #[test]
        fn pair_never_exceeds_max_len(
            a in prop::collection::vec("[abcx]{1,6}", 1..20),
            b in prop::option::of(prop::collection::vec("[abc]{1,6}", 1..20)),
            max_len in 3usize..40,
        ) {
            let v = word_vocab();
            let e = encode_pair(&a, b.as_deref(), &v, max_len);
            prop_assert!(e.ids.len() <= max_len);
            prop_assert_eq!(e.ids.len(), e.segment_ids.len());
            prop_assert_eq!(e.ids.len(), e.pieces.len());
            let first_sep = e.ids.iter().position(|&i| i == SEP_ID).unwrap();
            prop_assert!(e.segment_ids[..=first_sep].iter().all(|&s| s == 0));
            prop_assert!(e.segment_ids[first_sep + 1..].iter().all(|&s| s == 1));
            let untruncated = tokenize_words(&a, &v, 100).len()
                + b.as_ref().map_or(0, |b| tokenize_words(b, &v, 100).len())
                + if b.is_some() { 3 } else { 2 };
            if untruncated <= max_len && !e.ids.contains(&UNK_ID) {
                let expected = match &b {
                    Some(b) => format!("{} {}", a.join(" "), b.join(" ")),
                    None => a.join(" "),
                };
                prop_assert_eq!(decode(&e.pieces), expected);
            }
        }
    }
}
