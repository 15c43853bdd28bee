//! Vocabulary construction: balanced sampling, BPE learning, conversion to
//! WordPiece format, and coverage against reference vocabularies.

mod bpe;
mod sample;

use std::collections::{HashMap, HashSet};
use std::fs;
use std::path::Path;

use sha2::{Digest, Sha256};

pub use bpe::{
    alphabet, apply_merge, learn_bpe, learn_bpe_from_counts, word_counts, BpeConfig, BpeOutcome,
    MergeRuleList, Piece, WordCounts,
};
pub use sample::{draw_sample, plan_sample, reservoir_sample, SampleQuota, SourceQuota};

use crate::error::{Error, Result};

pub const SPECIAL_TOKENS: [&str; 5] = ["[PAD]", "[UNK]", "[CLS]", "[SEP]", "[MASK]"];
pub const PAD_ID: u32 = 0;
pub const UNK_ID: u32 = 1;
pub const CLS_ID: u32 = 2;
pub const SEP_ID: u32 = 3;
pub const MASK_ID: u32 = 4;
pub const CONTINUATION_PREFIX: &str = "##";

/// WordPiece vocabulary; the line number of a piece is its id. The five
/// special tokens always occupy ids 0 to 4.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    pieces: Vec<String>,
    index: HashMap<String, u32>,
}

impl Vocabulary {
    pub fn from_pieces(pieces: Vec<String>) -> Result<Self> {
        for (id, special) in SPECIAL_TOKENS.iter().enumerate() {
            if pieces.get(id).map(String::as_str) != Some(*special) {
                return Err(Error::Vocab(format!("expected {special} at id {id}")));
            }
        }
        let mut index = HashMap::with_capacity(pieces.len());
        for (id, piece) in pieces.iter().enumerate() {
            if piece.is_empty() || piece.contains(['\n', '\r']) {
                return Err(Error::Vocab(format!("invalid piece at id {id}")));
            }
            if index.insert(piece.clone(), id as u32).is_some() {
                return Err(Error::Vocab(format!("duplicate piece `{piece}` at id {id}")));
            }
        }
        Ok(Self { pieces, index })
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_pieces(text.lines().map(str::to_string).collect())
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for p in &self.pieces {
            s.push_str(p);
            s.push('\n');
        }
        s
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    /// First eight bytes (little-endian) of the SHA-256 of the vocab file.
    pub fn checksum(&self) -> u64 {
        let digest = Sha256::digest(self.to_text().as_bytes());
        u64::from_le_bytes(digest[..8].try_into().expect("8 bytes"))
    }

    pub fn len(&self) -> usize {
        self.pieces.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pieces.is_empty()
    }

    pub fn id(&self, piece: &str) -> Option<u32> {
        self.index.get(piece).copied()
    }

    pub fn contains(&self, piece: &str) -> bool {
        self.index.contains_key(piece)
    }

    pub fn piece(&self, id: u32) -> Option<&str> {
        self.pieces.get(id as usize).map(String::as_str)
    }

    pub fn pieces(&self) -> &[String] {
        &self.pieces
    }

    pub fn is_special_id(id: u32) -> bool {
        (id as usize) < SPECIAL_TOKENS.len()
    }

    pub fn is_continuation_id(&self, id: u32) -> bool {
        !Self::is_special_id(id)
            && self
                .piece(id)
                .is_some_and(|p| p.starts_with(CONTINUATION_PREFIX) && p.len() > 2)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ConvertReport {
    pub collisions: usize,
}

/// Rewrites learned pieces into WordPiece form: word-initial pieces bare,
/// continuation pieces with `##`. Layout is specials, then both forms of
/// every alphabet character, then the remaining pieces in the given order.
/// When two pieces rewrite to the same string the earliest is kept.
pub fn convert_to_wordpiece(
    merges: &MergeRuleList,
    pieces: &[Piece],
) -> Result<(Vocabulary, ConvertReport)> {
    let mut out: Vec<String> = SPECIAL_TOKENS.iter().map(|s| s.to_string()).collect();
    let mut owner: HashMap<String, Option<Piece>> =
        out.iter().map(|s| (s.clone(), None)).collect();
    let mut report = ConvertReport::default();

    let alphabet = merges.alphabet.iter().flat_map(|c| {
        [
            Piece::initial(c.to_string()),
            Piece::continuation(c.to_string()),
        ]
    });
    for piece in alphabet.chain(pieces.iter().cloned()) {
        let surface = piece.surface();
        match owner.get(&surface) {
            Some(Some(existing)) if *existing == piece => {}
            Some(_) => report.collisions += 1,
            None => {
                owner.insert(surface.clone(), Some(piece));
                out.push(surface);
            }
        }
    }
    Ok((Vocabulary::from_pieces(out)?, report))
}

/// `[PAD]`-style tokens: the five specials and bracketed reserved entries
/// such as `[unused17]`.
pub fn is_special_token(piece: &str) -> bool {
    SPECIAL_TOKENS.contains(&piece)
        || (piece.len() > 2
            && piece.starts_with('[')
            && piece.ends_with(']')
            && piece[1..piece.len() - 1]
                .chars()
                .all(|c| c.is_ascii_alphanumeric() || c == '_'))
}

/// Share of the reference pieces (specials excluded) that also appear in
/// `vocab`.
pub fn vocab_coverage<A: AsRef<str>, B: AsRef<str>>(vocab: &[A], reference: &[B]) -> Result<f64> {
    let ours: HashSet<&str> = vocab
        .iter()
        .map(AsRef::as_ref)
        .filter(|p| !is_special_token(p))
        .collect();
    let theirs: HashSet<&str> = reference
        .iter()
        .map(AsRef::as_ref)
        .filter(|p| !is_special_token(p))
        .collect();
    if ours.is_empty() || theirs.is_empty() {
        return Err(Error::Empty("coverage needs two non-empty vocabularies".into()));
    }
    let shared = theirs.intersection(&ours).count();
    Ok(shared as f64 / theirs.len() as f64)
}

/// Reads any one-piece-per-line vocabulary file without layout checks.
pub fn read_piece_list(path: &Path) -> Result<Vec<String>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(text
        .lines()
        .filter(|l| !l.is_empty())
        .map(str::to_string)
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn marker_rewriting() {
        let merges = MergeRuleList::default();
        let (v, _) = convert_to_wordpiece(
            &merges,
            &[Piece::initial("un"), Piece::continuation("aff")],
        )
        .unwrap();
        assert!(v.contains("un"));
        assert!(v.contains("##aff"));
    }

    #[test]
    fn alphabet_in_both_forms() {
        let merges = MergeRuleList {
            alphabet: vec!['a'],
            merges: vec![],
        };
        let (v, report) = convert_to_wordpiece(&merges, &[]).unwrap();
        assert_eq!(
            v.pieces(),
            ["[PAD]", "[UNK]", "[CLS]", "[SEP]", "[MASK]", "a", "##a"]
        );
        assert_eq!(report.collisions, 0);
    }

    #[test]
    fn fixed_special_ids() {
        let (v, _) = convert_to_wordpiece(&MergeRuleList::default(), &[]).unwrap();
        assert_eq!(v.id("[PAD]"), Some(PAD_ID));
        assert_eq!(v.id("[UNK]"), Some(UNK_ID));
        assert_eq!(v.id("[MASK]"), Some(MASK_ID));
    }

    #[test]
    fn collisions_keep_earliest() {
        let (v, report) = convert_to_wordpiece(
            &MergeRuleList::default(),
            &[
                Piece::initial("ab"),
                Piece::initial("##x"),
                Piece::continuation("x"),
                Piece::initial("ab"),
            ],
        )
        .unwrap();
        assert_eq!(report.collisions, 1);
        assert_eq!(v.len(), 5 + 2);
    }

    #[test]
    fn learned_pieces_convert_to_target_size() {
        let counts: WordCounts = [("lower", 5u64), ("lowest", 3), ("newer", 4), ("wider", 2)]
            .iter()
            .map(|(w, n)| (w.to_string(), *n))
            .collect();
        let cfg = BpeConfig {
            target_size: 30,
            min_char_count: 1,
        };
        let out = learn_bpe_from_counts(&counts, &cfg).unwrap();
        assert!(!out.target_unreachable);
        let (v, report) = convert_to_wordpiece(&out.merges, &out.pieces).unwrap();
        assert_eq!(report.collisions, 0);
        assert_eq!(v.len(), 30);
        for c in &out.merges.alphabet {
            assert!(v.contains(&c.to_string()));
            assert!(v.contains(&format!("##{c}")));
        }
    }

    #[test]
    fn coverage_arithmetic() {
        let v = ["a", "b", "c"];
        let r = ["a", "b", "d", "e"];
        assert_eq!(vocab_coverage(&v, &r).unwrap(), 0.5);
        assert_eq!(vocab_coverage(&r, &r).unwrap(), 1.0);
        let with_specials = ["[PAD]", "[unused3]", "a", "b", "c"];
        let r2 = ["[UNK]", "[CLS]", "a", "b", "d", "e"];
        assert_eq!(vocab_coverage(&with_specials, &r2).unwrap(), 0.5);
        assert!(vocab_coverage::<&str, &str>(&[], &r).is_err());
    }

    #[test]
    fn file_round_trip_and_checksum() {
        let (v, _) = convert_to_wordpiece(
            &MergeRuleList {
                alphabet: vec!['b', 'ä'],
                merges: vec![],
            },
            &[],
        )
        .unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("vocab.txt");
        v.write(&path).unwrap();
        let text = fs::read_to_string(&path).unwrap();
        assert_eq!(text, "[PAD]\n[UNK]\n[CLS]\n[SEP]\n[MASK]\nb\n##b\nä\n##ä\n");
        let back = Vocabulary::read(&path).unwrap();
        assert_eq!(back, v);
        assert_eq!(back.checksum(), v.checksum());
    }

    #[test]
    fn rejects_bad_layout() {
        assert!(Vocabulary::from_pieces(vec!["a".into()]).is_err());
        let mut p: Vec<String> = SPECIAL_TOKENS.iter().map(|s| s.to_string()).collect();
        p.push("x".into());
        p.push("x".into());
        assert!(Vocabulary::from_pieces(p).is_err());
    }
}
