//! `[INST]`-style prompts and loss masks.
//!
//! A training string is `[INST] {source} [/INST] {target}`. The delimiters
//! are plain text. Masks are character offsets so that any tokenizer can map
//! them onto its own tokens.

use rustc_hash::FxHashMap;
use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, RecordId};
use crate::error::{Error, Result};
use crate::text::is_blank;

pub const INST_OPEN: &str = "[INST]";
pub const INST_CLOSE: &str = "[/INST]";

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Demonstration {
    pub source: String,
    pub target: String,
}

impl Demonstration {
    pub fn new(source: impl Into<String>, target: impl Into<String>) -> Result<Self> {
        let (source, target) = (source.into(), target.into());
        if is_blank(&source) {
            return Err(Error::EmptySource);
        }
        if is_blank(&target) {
            return Err(Error::EmptyTarget);
        }
        Ok(Demonstration { source, target })
    }

    /// Demonstrations from every corpus record, in corpus order.
    pub fn pool_from_corpus(corpus: &Corpus) -> Vec<Demonstration> {
        corpus.pairs().map(|p| Demonstration { source: p.source.clone(), target: p.target.clone() }).collect()
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MaskedExample {
    pub text: String,
    /// Half-open `[start, end)` character ranges excluded from the loss.
    pub mask_spans: Vec<(usize, usize)>,
}

impl MaskedExample {
    /// The characters not covered by any mask span.
    pub fn unmasked(&self) -> String {
        let mut spans = self.mask_spans.iter().peekable();
        let mut out = String::new();
        for (i, c) in self.text.chars().enumerate() {
            while spans.peek().is_some_and(|s| s.1 <= i) {
                spans.next();
            }
            if !spans.peek().is_some_and(|s| s.0 <= i) {
                out.push(c);
            }
        }
        out
    }
}

fn block(source: &str) -> String {
    format!("{INST_OPEN} {source} {INST_CLOSE}")
}

/// `[INST] {source} [/INST] {target}` with the prefix through the space
/// after `[/INST]` masked.
pub fn format_pair(source: &str, target: &str) -> Result<MaskedExample> {
    if is_blank(source) {
        return Err(Error::EmptySource);
    }
    let prefix = format!("{} ", block(source));
    let masked = prefix.chars().count();
    Ok(MaskedExample { text: prefix + target, mask_spans: vec![(0, masked)] })
}

/// Demonstrations one per line followed by the open query block
/// `[INST] {query} [/INST]`.
pub fn build_fewshot(demos: &[Demonstration], query: &str) -> Result<String> {
    if is_blank(query) {
        return Err(Error::EmptyQuery);
    }
    let mut out = String::new();
    for d in demos {
        out.push_str(&block(&d.source));
        out.push(' ');
        out.push_str(&d.target);
        out.push('\n');
    }
    out.push_str(&block(query));
    Ok(out)
}

/// Few-shot prompt from the last `window` (source, translation) pairs of
/// the running document.
pub fn contextual_prompt<S: AsRef<str>, T: AsRef<str>>(
    history: &[(S, T)],
    window: usize,
    query: &str,
) -> Result<String> {
    let start = history.len().saturating_sub(window);
    let demos: Vec<Demonstration> = history[start..]
        .iter()
        .map(|(s, t)| Demonstration { source: s.as_ref().to_owned(), target: t.as_ref().to_owned() })
        .collect();
    build_fewshot(&demos, query)
}

pub trait Similarity {
    fn similarity(&self, a: &str, b: &str) -> f64;
}

/// Cosine between character n-gram count vectors.
#[derive(Clone, Copy, Debug)]
pub struct CharNgramCosine {
    pub n: usize,
}

impl Default for CharNgramCosine {
    fn default() -> Self {
        CharNgramCosine { n: 3 }
    }
}

impl CharNgramCosine {
    fn counts(&self, text: &str) -> FxHashMap<Vec<char>, u64> {
        let chars: Vec<char> = text.chars().collect();
        let mut m = FxHashMap::default();
        if self.n > 0 {
            for w in chars.windows(self.n) {
                *m.entry(w.to_vec()).or_insert(0) += 1;
            }
        }
        m
    }
}

impl Similarity for CharNgramCosine {
    fn similarity(&self, a: &str, b: &str) -> f64 {
        let (ca, cb) = (self.counts(a), self.counts(b));
        let dot: u64 = ca.iter().map(|(g, x)| x * cb.get(g).copied().unwrap_or(0)).sum();
        let norm = |m: &FxHashMap<Vec<char>, u64>| (m.values().map(|v| (v * v) as f64).sum::<f64>()).sqrt();
        let denom = norm(&ca) * norm(&cb);
        if denom == 0.0 {
            0.0
        } else {
            dot as f64 / denom
        }
    }
}

/// The `n` pool entries most similar to `query`, least similar first so the
/// best match sits next to the query. Ties keep pool order.
pub fn select_demos(pool: &[Demonstration], query: &str, n: usize, sim: &dyn Similarity) -> Result<Vec<Demonstration>> {
    if pool.len() < n {
        return Err(Error::PoolTooSmall { pool: pool.len(), requested: n });
    }
    let mut ranked: Vec<(f64, usize)> =
        pool.iter().enumerate().map(|(i, d)| (sim.similarity(&d.source, query), i)).collect();
    ranked.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    Ok(ranked[..n].iter().rev().map(|&(_, i)| pool[i].clone()).collect())
}

/// One line of prompt JSON-lines output.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptRecord {
    pub id: RecordId,
    pub prompt: String,
    pub mask_spans: Vec<(usize, usize)>,
}
