//! Boilerplate removal for book text: tables of contents, copyright pages
//! and reference lists.

use std::sync::OnceLock;

use regex::Regex;

struct Patterns {
    copyright: Regex,
    toc_heading: Regex,
    toc_entry: Regex,
    references_heading: Regex,
    reference_entry: Regex,
}

fn patterns() -> &'static Patterns {
    static P: OnceLock<Patterns> = OnceLock::new();
    P.get_or_init(|| Patterns {
        copyright: Regex::new(
            r"(?i)(copyright|©|\(c\)\s*\d{4}|all rights reserved|\bisbn\b|printed in [a-z]|first published|tekijänoikeu|kaikki oikeudet pidätetään)",
        )
        .unwrap(),
        toc_heading: Regex::new(r"(?i)^\s*(table of contents|contents|sisällys|sisällysluettelo)\s*$")
            .unwrap(),
        toc_entry: Regex::new(
            r"(?i)(\.{3,}|…|\s{2,}|\t)\s*\d{1,4}\s*$|^\s*(chapter|part|luku|osa)\s+([0-9]+|[ivxlc]+)\b[^.!?]*\s\d{1,4}\s*$",
        )
        .unwrap(),
        references_heading: Regex::new(
            r"(?i)^\s*(references|bibliography|works cited|notes|lähteet|kirjallisuus|viitteet)\s*$",
        )
        .unwrap(),
        reference_entry: Regex::new(r"^\s*\[\d{1,3}\]\s|(?i)\bdoi:\s*10\.|\bpp\.\s*\d+\s*[-–]\s*\d+").unwrap(),
    })
}

/// Indices of lines to drop. A references heading drops itself and every
/// line after it in the same document.
pub fn boilerplate_lines<'a>(lines: impl IntoIterator<Item = &'a str>) -> Vec<usize> {
    let p = patterns();
    let mut dropped = Vec::new();
    let mut in_references = false;
    for (i, line) in lines.into_iter().enumerate() {
        if in_references || p.references_heading.is_match(line) {
            in_references = true;
            dropped.push(i);
        } else if p.copyright.is_match(line)
            || p.toc_heading.is_match(line)
            || p.toc_entry.is_match(line)
            || p.reference_entry.is_match(line)
        {
            dropped.push(i);
        }
    }
    dropped
}
