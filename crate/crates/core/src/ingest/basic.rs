//! Pre-subword tokenization in the style of BERT's cased `BasicTokenizer`.
//!
//! Text is NFC-normalized, control and format characters are removed,
//! whitespace separates tokens, and every punctuation character and every
//! CJK ideograph becomes a token of its own. Case and diacritics are kept.

use unicode_general_category::{get_general_category, GeneralCategory};
use unicode_normalization::UnicodeNormalization;

pub fn basic_tokenize(sentence: &str) -> Vec<String> {
    let mut tokens = Vec::new();
    let mut current = String::new();
    for c in sentence.nfc() {
        if is_whitespace(c) {
            flush(&mut current, &mut tokens);
        } else if is_stripped(c) {
            continue;
        } else if is_punctuation(c) || is_cjk(c) {
            flush(&mut current, &mut tokens);
            tokens.push(c.to_string());
        } else {
            current.push(c);
        }
    }
    flush(&mut current, &mut tokens);
    tokens
}

/// NFC, control characters removed, whitespace runs collapsed to one space,
/// trimmed. This is the form stored as sentence text after ingestion.
pub fn normalize_text(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    let mut pending_space = false;
    for c in text.nfc() {
        if is_whitespace(c) {
            pending_space = !out.is_empty();
        } else if !is_stripped(c) {
            if pending_space {
                out.push(' ');
                pending_space = false;
            }
            out.push(c);
        }
    }
    out
}

fn flush(current: &mut String, tokens: &mut Vec<String>) {
    if !current.is_empty() {
        tokens.push(std::mem::take(current));
    }
}

pub fn is_whitespace(c: char) -> bool {
    matches!(c, ' ' | '\t' | '\n' | '\r')
        || get_general_category(c) == GeneralCategory::SpaceSeparator
}

/// Control (Cc) and format (Cf) characters, minus the whitespace controls.
pub fn is_stripped(c: char) -> bool {
    if matches!(c, '\t' | '\n' | '\r') {
        return false;
    }
    matches!(
        get_general_category(c),
        GeneralCategory::Control | GeneralCategory::Format
    )
}

/// ASCII non-alphanumeric symbols count as punctuation, as do all Unicode
/// `P*` characters.
pub fn is_punctuation(c: char) -> bool {
    if c.is_ascii() {
        return c.is_ascii_punctuation();
    }
    matches!(
        get_general_category(c),
        GeneralCategory::ConnectorPunctuation
            | GeneralCategory::DashPunctuation
            | GeneralCategory::OpenPunctuation
            | GeneralCategory::ClosePunctuation
            | GeneralCategory::InitialPunctuation
            | GeneralCategory::FinalPunctuation
            | GeneralCategory::OtherPunctuation
    )
}

pub fn is_cjk(c: char) -> bool {
    matches!(c as u32,
        0x4E00..=0x9FFF
        | 0x3400..=0x4DBF
        | 0x20000..=0x2A6DF
        | 0x2A700..=0x2B73F
        | 0x2B740..=0x2B81F
        | 0x2B820..=0x2CEAF
        | 0xF900..=0xFAFF
        | 0x2F800..=0x2FA1F)
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;

    #[test]
    fn splits_punctuation() {
        assert_eq!(basic_tokenize("Hello, world!"), ["Hello", ",", "world", "!"]);
    }

    #[test]
    fn keeps_diacritics_and_case() {
        assert_eq!(basic_tokenize("ei hätää"), ["ei", "hätää"]);
        assert_eq!(basic_tokenize("Åbo ÄÄNI"), ["Åbo", "ÄÄNI"]);
    }

    #[test]
    fn strips_control_characters() {
        assert_eq!(basic_tokenize("a\u{0000}b"), ["ab"]);
        assert_eq!(basic_tokenize("soft\u{00AD}hyphen"), ["softhyphen"]);
    }

    #[test]
    fn empty_input() {
        assert!(basic_tokenize("").is_empty());
        assert!(basic_tokenize(" \t\n").is_empty());
    }

    #[test]
    fn isolates_cjk() {
        assert_eq!(basic_tokenize("ab中文cd"), ["ab", "中", "文", "cd"]);
    }

    #[test]
    fn composes_to_nfc() {
        // "a" + combining diaeresis
        assert_eq!(basic_tokenize("ha\u{0308}ta\u{0308}"), ["hätä"]);
    }

    #[test]
    fn non_ascii_punctuation() {
        assert_eq!(basic_tokenize("«moi»—hei"), ["«", "moi", "»", "—", "hei"]);
    }

    fn spaced_reference(text: &str) -> String {
        let mut spaced = String::new();
        for c in text.nfc() {
            if is_stripped(c) {
                continue;
            }
            if is_punctuation(c) || is_cjk(c) {
                spaced.push(' ');
                spaced.push(c);
                spaced.push(' ');
            } else {
                spaced.push(c);
            }
        }
        spaced
            .split(is_whitespace)
            .filter(|s| !s.is_empty())
            .collect::<Vec<_>>()
            .join(" ")
    }

    proptest! {
        #[test]
        fn rejoin_matches_normalized_input(text in "[a-zA-Zäö0-9 .,!?\u{0}\u{1}\t\n中-]{0,40}") {
            prop_assert_eq!(basic_tokenize(&text).join(" "), spaced_reference(&text));
        }

        #[test]
        fn normalized_text_has_no_controls(text in "\\PC{0,30}|[\u{0}-\u{1f}a ]{0,20}") {
            let norm = normalize_text(&text);
            prop_assert!(!norm.chars().any(is_stripped));
            prop_assert!(!norm.starts_with(' ') && !norm.ends_with(' '));
            prop_assert!(!norm.contains("  "));
        }
    }
}
