use std::collections::{BTreeMap, BTreeSet};

use crate::error::{Error, Result};
use crate::report::{KvReport, Table};

#[derive(Debug, Clone, PartialEq)]
pub struct SourceFactor {
    pub language: String,
    pub source_id: String,
    pub one_pass: u64,
    pub factor: u64,
}

impl SourceFactor {
    pub fn total(&self) -> u64 {
        self.one_pass * self.factor
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LanguageTotal {
    pub balanced: bool,
    pub total: u64,
    /// `|total - reference| / reference`.
    pub deviation: f64,
    pub within_tolerance: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DuplicationPlan {
    pub sources: Vec<SourceFactor>,
    pub languages: BTreeMap<String, LanguageTotal>,
    pub reference: f64,
    pub tolerance: f64,
}

impl DuplicationPlan {
    pub fn factor_for(&self, source_id: &str) -> Option<u64> {
        self.sources
            .iter()
            .find(|s| s.source_id == source_id)
            .map(|s| s.factor)
    }

    /// Languages whose achieved total misses the reference by more than the
    /// tolerance. Not fatal: integer factors cannot always balance.
    pub fn violations(&self) -> Vec<&str> {
        self.languages
            .iter()
            .filter(|(_, t)| !t.within_tolerance)
            .map(|(l, _)| l.as_str())
            .collect()
    }

    pub fn to_kv(&self) -> KvReport {
        let mut kv = KvReport::new();
        kv.push_fraction("reference", self.reference);
        kv.push_fraction("tolerance", self.tolerance);
        for s in &self.sources {
            let p = format!("source.{}", s.source_id);
            kv.push(format!("{p}.language"), &s.language);
            kv.push(format!("{p}.one_pass"), s.one_pass);
            kv.push(format!("{p}.factor"), s.factor);
            kv.push(format!("{p}.total"), s.total());
        }
        for (lang, t) in &self.languages {
            let p = format!("language.{lang}");
            kv.push(format!("{p}.balanced"), t.balanced);
            kv.push(format!("{p}.total"), t.total);
            kv.push_fraction(format!("{p}.deviation"), t.deviation);
            kv.push(format!("{p}.within_tolerance"), t.within_tolerance);
        }
        kv.push("warning", !self.violations().is_empty());
        kv
    }

    pub fn to_table(&self) -> Table {
        let mut table = Table::new(["source", "one-pass", "factor", "instances"]);
        for (lang, t) in &self.languages {
            table.row([lang.clone(), String::new(), String::new(), t.total.to_string()]);
            for s in self.sources.iter().filter(|s| &s.language == lang) {
                table.row([
                    format!("  {}", s.source_id),
                    s.one_pass.to_string(),
                    s.factor.to_string(),
                    s.total().to_string(),
                ]);
            }
        }
        table
    }
}

/// Chooses per-source duplication factors from measured one-pass instance
/// counts. Languages outside `balance_within` keep factor 1 and their mean
/// total is the reference `T`; each balanced source aims at `T / #sources`.
/// When every language is balanced, `T` is the largest one-pass language total.
pub fn plan_duplication(
    one_pass: &BTreeMap<String, Vec<(String, u64)>>,
    balance_within: &BTreeSet<String>,
    tolerance: f64,
) -> Result<DuplicationPlan> {
    if !(0.0..=1.0).contains(&tolerance) {
        return Err(Error::Config(format!("tolerance must be in [0, 1], got {tolerance}")));
    }
    for (lang, sources) in one_pass {
        if sources.is_empty() {
            return Err(Error::Config(format!("language `{lang}` has no sources")));
        }
        if let Some((id, _)) = sources.iter().find(|(_, c)| *c == 0) {
            return Err(Error::Config(format!(
                "source `{id}` yields no instances; cannot plan duplication"
            )));
        }
    }
    if let Some(unknown) = balance_within.iter().find(|l| !one_pass.contains_key(*l)) {
        return Err(Error::Config(format!("cannot balance unknown language `{unknown}`")));
    }

    let raw_total = |sources: &[(String, u64)]| sources.iter().map(|(_, c)| c).sum::<u64>();
    let fixed: Vec<u64> = one_pass
        .iter()
        .filter(|(l, _)| !balance_within.contains(*l))
        .map(|(_, s)| raw_total(s))
        .collect();
    let reference = if fixed.is_empty() {
        one_pass.values().map(|s| raw_total(s)).max().unwrap_or(0) as f64
    } else {
        fixed.iter().sum::<u64>() as f64 / fixed.len() as f64
    };

    let mut sources = Vec::new();
    let mut languages = BTreeMap::new();
    for (lang, srcs) in one_pass {
        let balanced = balance_within.contains(lang);
        let target = reference / srcs.len() as f64;
        let mut total = 0;
        for (id, count) in srcs {
            let factor = if balanced {
                ((target / *count as f64).round() as u64).max(1)
            } else {
                1
            };
            total += count * factor;
            sources.push(SourceFactor {
                language: lang.clone(),
                source_id: id.clone(),
                one_pass: *count,
                factor,
            });
        }
        let deviation = if reference > 0.0 {
            (total as f64 - reference).abs() / reference
        } else {
            0.0
        };
        languages.insert(
            lang.clone(),
            LanguageTotal {
                balanced,
                total,
                deviation,
                within_tolerance: deviation <= tolerance,
            },
        );
    }
    Ok(DuplicationPlan {
        sources,
        languages,
        reference,
        tolerance,
    })
}
