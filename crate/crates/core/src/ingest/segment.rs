//! Rule-based sentence splitting.
//!
//! A boundary sits after `.`, `!` or `?` when whitespace follows and the next
//! non-space character is an uppercase letter or a digit. A period that ends
//! a known abbreviation, or a single-letter initial, is never a boundary.

use std::collections::HashSet;

const EN_ABBREVIATIONS: &[&str] = &[
    "mr", "mrs", "ms", "dr", "prof", "st", "jr", "sr", "vs", "etc", "e.g", "i.e", "inc", "ltd",
    "co", "corp", "no", "fig", "vol", "pp", "ch", "gen", "col", "capt", "lt", "sgt", "rev", "hon",
    "jan", "feb", "mar", "apr", "aug", "sep", "sept", "oct", "nov", "dec", "u.s", "u.k", "approx",
    "dept", "est", "mt", "ave",
];

const FI_ABBREVIATIONS: &[&str] = &[
    "esim", "ks", "mm", "yms", "jne", "ns", "vrt", "tri", "prof", "klo", "ym", "ts", "eaa", "jaa",
    "ekr", "jkr", "n", "s", "v", "t", "kk", "os", "puh", "nro", "milj", "mrd", "ent", "myöh",
    "tms", "huom", "kts", "lk", "ao", "em", "ko", "po",
];

#[derive(Debug, Clone, Default)]
pub struct Abbreviations {
    words: HashSet<String>,
}

impl Abbreviations {
    pub fn for_language(code: &str) -> Self {
        let list: &[&str] = match code {
            "en" => EN_ABBREVIATIONS,
            "fi" => FI_ABBREVIATIONS,
            _ => &[],
        };
        Self::from_words(list.iter().copied())
    }

    /// Words are matched case-insensitively and without their final period.
    pub fn from_words<'a>(words: impl IntoIterator<Item = &'a str>) -> Self {
        Self {
            words: words
                .into_iter()
                .map(|w| w.trim_end_matches('.').to_lowercase())
                .collect(),
        }
    }

    fn protects(&self, word_before_period: &str) -> bool {
        let mut chars = word_before_period.chars();
        if let (Some(c), None) = (chars.next(), chars.next()) {
            if c.is_alphabetic() {
                return true;
            }
        }
        self.words.contains(&word_before_period.to_lowercase())
    }
}

pub fn segment_sentences(text: &str, abbreviations: &Abbreviations) -> Vec<String> {
    let chars: Vec<(usize, char)> = text.char_indices().collect();
    let mut sentences = Vec::new();
    let mut start = 0usize;

    for (i, &(byte_pos, c)) in chars.iter().enumerate() {
        if !matches!(c, '.' | '!' | '?') {
            continue;
        }
        let Some(&(_, after)) = chars.get(i + 1) else {
            continue;
        };
        if !after.is_whitespace() {
            continue;
        }
        let next = chars[i + 1..].iter().find(|(_, ch)| !ch.is_whitespace());
        let Some(&(_, next_char)) = next else {
            continue;
        };
        if !(next_char.is_uppercase() || next_char.is_ascii_digit()) {
            continue;
        }
        if c == '.' {
            let word_start = chars[..i]
                .iter()
                .rposition(|(_, ch)| ch.is_whitespace())
                .map_or(0, |p| p + 1);
            let word: String = chars[word_start..i]
                .iter()
                .map(|&(_, ch)| ch)
                .collect::<String>();
            let word = word.trim_start_matches(|ch: char| !ch.is_alphanumeric());
            if abbreviations.protects(word) {
                continue;
            }
        }
        let end = byte_pos + c.len_utf8();
        let piece = text[start..end].trim();
        if !piece.is_empty() {
            sentences.push(piece.to_string());
        }
        start = end;
    }
    let tail = text[start..].trim();
    if !tail.is_empty() {
        sentences.push(tail.to_string());
    }
    sentences
}
