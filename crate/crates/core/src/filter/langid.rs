//! Character n-gram language identification with rank-order profiles.
//!
//! Each language profile is the ranked list of its most frequent 1-, 2- and
//! 3-grams (words padded with a space on each side). A text is scored by the
//! out-of-place distance between its own ranking and each profile, with a
//! fixed penalty for n-grams the profile lacks.

use std::collections::HashMap;
use std::sync::OnceLock;

use crate::error::{Error, Result};

pub const PROFILE_SIZE: usize = 2000;
const MAX_ORDER: usize = 3;

const BUNDLED: &[(&str, &str)] = &[
    ("en", include_str!("../../fixtures/profiles/en.txt")),
    ("fi", include_str!("../../fixtures/profiles/fi.txt")),
];

#[derive(Debug, Clone)]
pub struct LanguageProfile {
    pub language: String,
    ranks: HashMap<String, usize>,
}

impl LanguageProfile {
    pub fn from_text(language: impl Into<String>, text: &str) -> Self {
        let ranks = ranked_ngrams(text, PROFILE_SIZE)
            .into_iter()
            .enumerate()
            .map(|(rank, gram)| (gram, rank))
            .collect();
        Self {
            language: language.into(),
            ranks,
        }
    }

    pub fn len(&self) -> usize {
        self.ranks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ranks.is_empty()
    }

    /// Mean out-of-place distance, scaled into [0, 1].
    fn distance(&self, doc: &[String]) -> f64 {
        let penalty = PROFILE_SIZE;
        let total: usize = doc
            .iter()
            .enumerate()
            .map(|(rank, gram)| match self.ranks.get(gram) {
                Some(&r) => r.abs_diff(rank).min(penalty),
                None => penalty,
            })
            .sum();
        total as f64 / (doc.len() * penalty) as f64
    }
}

#[derive(Debug, Clone)]
pub struct LanguageProfiles {
    profiles: Vec<LanguageProfile>,
}

impl LanguageProfiles {
    pub fn new(profiles: Vec<LanguageProfile>) -> Self {
        Self { profiles }
    }

    /// Profiles for `en` and `fi` built from the bundled fixture text.
    pub fn bundled() -> &'static LanguageProfiles {
        static PROFILES: OnceLock<LanguageProfiles> = OnceLock::new();
        PROFILES.get_or_init(|| {
            Self::new(
                BUNDLED
                    .iter()
                    .map(|(code, text)| LanguageProfile::from_text(*code, text))
                    .collect(),
            )
        })
    }

    pub fn bundled_text(language: &str) -> Option<&'static str> {
        BUNDLED
            .iter()
            .find(|(code, _)| *code == language)
            .map(|(_, text)| *text)
    }

    pub fn languages(&self) -> impl Iterator<Item = &str> {
        self.profiles.iter().map(|p| p.language.as_str())
    }

    pub fn push(&mut self, profile: LanguageProfile) {
        self.profiles.retain(|p| p.language != profile.language);
        self.profiles.push(profile);
    }
}

/// Returns the closest language and a confidence in [0, 1]: the gap between
/// the best and second-best scaled distances, relative to the second-best.
pub fn detect_language(text: &str, profiles: &LanguageProfiles) -> Result<(String, f64)> {
    if !text.chars().any(char::is_alphabetic) {
        return Err(Error::Undetectable);
    }
    let doc = ranked_ngrams(text, PROFILE_SIZE);
    let mut scored: Vec<(f64, &str)> = profiles
        .profiles
        .iter()
        .map(|p| (p.distance(&doc), p.language.as_str()))
        .collect();
    scored.sort_by(|a, b| a.0.total_cmp(&b.0).then_with(|| a.1.cmp(b.1)));
    let (best, lang) = *scored
        .first()
        .ok_or_else(|| Error::Config("no language profiles configured".into()))?;
    let confidence = match scored.get(1) {
        Some(&(second, _)) if second > 0.0 => (second - best) / second,
        Some(_) => 0.0,
        None => 1.0,
    };
    Ok((lang.to_string(), confidence.clamp(0.0, 1.0)))
}

/// Most frequent n-grams (n = 1..=3) of the lowercased letter runs in
/// `text`; ties are broken by the n-gram itself so rankings are stable.
pub fn ranked_ngrams(text: &str, limit: usize) -> Vec<String> {
    let mut counts: HashMap<String, usize> = HashMap::new();
    let lower = text.to_lowercase();
    for word in lower.split(|c: char| !c.is_alphabetic()) {
        if word.is_empty() {
            continue;
        }
        let padded: Vec<char> = std::iter::once(' ')
            .chain(word.chars())
            .chain(std::iter::once(' '))
            .collect();
        for n in 1..=MAX_ORDER {
            for window in padded.windows(n) {
                if n == 1 && window[0] == ' ' {
                    continue;
                }
                *counts.entry(window.iter().collect()).or_insert(0) += 1;
            }
        }
    }
    let mut grams: Vec<(String, usize)> = counts.into_iter().collect();
    grams.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    grams.truncate(limit);
    grams.into_iter().map(|(g, _)| g).collect()
}
