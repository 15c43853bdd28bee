//! Language-balanced sentence sampling.
//!
//! Every language receives the same share of the total. Inside a language,
//! sources are allocated proportionally to their sentence counts using the
//! largest-remainder method so the quotas add up exactly.

use std::collections::BTreeMap;

use rand::Rng;

use crate::error::{Error, Result};
use crate::report::{KvReport, Table};
use crate::rng::{substream, StageRng};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SourceQuota {
    pub language: String,
    pub source_id: String,
    pub available: u64,
    pub quota: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SampleQuota {
    pub sources: Vec<SourceQuota>,
    pub languages: BTreeMap<String, u64>,
}

impl SampleQuota {
    pub fn quota_for(&self, source_id: &str) -> Option<u64> {
        self.sources
            .iter()
            .find(|s| s.source_id == source_id)
            .map(|s| s.quota)
    }

    pub fn total(&self) -> u64 {
        self.sources.iter().map(|s| s.quota).sum()
    }

    pub fn to_kv(&self) -> KvReport {
        let mut kv = KvReport::new();
        for (lang, total) in &self.languages {
            kv.push(format!("language.{lang}.quota"), total);
        }
        for s in &self.sources {
            kv.push(format!("source.{}.language", s.source_id), &s.language);
            kv.push(format!("source.{}.available", s.source_id), s.available);
            kv.push(format!("source.{}.quota", s.source_id), s.quota);
        }
        kv
    }

    pub fn to_table(&self) -> Table {
        let mut t = Table::new(["language / source", "available", "quota"]);
        for (lang, total) in &self.languages {
            let available: u64 = self
                .sources
                .iter()
                .filter(|s| &s.language == lang)
                .map(|s| s.available)
                .sum();
            t.row([lang.clone(), available.to_string(), total.to_string()]);
            for s in self.sources.iter().filter(|s| &s.language == lang) {
                t.row([
                    format!("  {}", s.source_id),
                    s.available.to_string(),
                    s.quota.to_string(),
                ]);
            }
        }
        t
    }
}

/// Splits `total` sentences evenly over languages, then over each
/// language's sources in proportion to their sizes.
///
/// `sizes` maps language code to `(source_id, sentence count)` in source
/// order; ties in the remainder correction go to the earlier source.
pub fn plan_sample(sizes: &BTreeMap<String, Vec<(String, u64)>>, total: u64) -> Result<SampleQuota> {
    if sizes.is_empty() {
        return Err(Error::Config("no languages to sample from".into()));
    }
    let n_lang = sizes.len() as u64;
    if !total.is_multiple_of(n_lang) {
        return Err(Error::Config(format!(
            "sample total {total} is not divisible by the {n_lang} languages"
        )));
    }
    let per_language = total / n_lang;

    let mut sources = Vec::new();
    let mut languages = BTreeMap::new();
    let mut shortfalls = Vec::new();
    for (lang, lang_sources) in sizes {
        let lang_size: u64 = lang_sources.iter().map(|(_, n)| n).sum();
        if lang_size == 0 {
            return Err(Error::Config(format!("language `{lang}` has no sentences")));
        }
        let quotas = largest_remainder(per_language, lang_sources.iter().map(|(_, n)| *n));
        for ((source_id, available), quota) in lang_sources.iter().zip(quotas) {
            if quota > *available {
                shortfalls.push(format!(
                    "{source_id} ({lang}) needs {quota} sentences but has {available}"
                ));
            }
            sources.push(SourceQuota {
                language: lang.clone(),
                source_id: source_id.clone(),
                available: *available,
                quota,
            });
        }
        languages.insert(lang.clone(), per_language);
    }
    if !shortfalls.is_empty() {
        return Err(Error::Shortfall(shortfalls.join("; ")));
    }
    Ok(SampleQuota { sources, languages })
}

/// Hamilton apportionment of `total` over `weights`.
fn largest_remainder(total: u64, weights: impl Iterator<Item = u64>) -> Vec<u64> {
    let weights: Vec<u128> = weights.map(u128::from).collect();
    let sum: u128 = weights.iter().sum();
    let t = u128::from(total);
    let mut quotas: Vec<u64> = weights.iter().map(|w| (t * w / sum) as u64).collect();
    let mut order: Vec<usize> = (0..weights.len()).collect();
    // stable sort keeps earlier sources first among equal remainders
    order.sort_by_key(|&i| std::cmp::Reverse(t * weights[i] % sum));
    let assigned: u64 = quotas.iter().sum();
    for &i in order.iter().take((total - assigned) as usize) {
        quotas[i] += 1;
    }
    quotas
}

/// Uniform sample of exactly `k` items without replacement, returned in
/// stream order.
pub fn reservoir_sample<T, I>(items: I, k: usize, rng: &mut StageRng) -> Result<Vec<T>>
where
    I: IntoIterator<Item = T>,
{
    let mut reservoir: Vec<(usize, T)> = Vec::with_capacity(k);
    let mut seen = 0usize;
    for (i, item) in items.into_iter().enumerate() {
        seen += 1;
        if i < k {
            reservoir.push((i, item));
        } else {
            let j = rng.gen_range(0..=i);
            if j < k {
                reservoir[j] = (i, item);
            }
        }
    }
    if seen < k {
        return Err(Error::Shortfall(format!(
            "stream has {seen} items but the quota is {k}"
        )));
    }
    reservoir.sort_by_key(|(i, _)| *i);
    Ok(reservoir.into_iter().map(|(_, item)| item).collect())
}

/// Draws each source's quota with its own seed-derived substream and
/// concatenates the samples in quota order.
pub fn draw_sample<T, I>(
    mut streams: BTreeMap<String, I>,
    quota: &SampleQuota,
    seed: u64,
) -> Result<Vec<T>>
where
    I: IntoIterator<Item = T>,
{
    let mut out = Vec::with_capacity(quota.total() as usize);
    for sq in &quota.sources {
        let stream = streams.remove(&sq.source_id).ok_or_else(|| {
            Error::Shortfall(format!("no sentence stream for source `{}`", sq.source_id))
        })?;
        let mut rng = substream(seed, &["sample", &sq.source_id]);
        let picked = reservoir_sample(stream, sq.quota as usize, &mut rng)
            .map_err(|e| Error::Shortfall(format!("source `{}`: {e}", sq.source_id)))?;
        out.extend(picked);
    }
    Ok(out)
}
