use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{ngram_counts, EvalPair};
use crate::error::{Error, Result};
use crate::text::py_split;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChrfConfig {
    pub char_order: usize,
    /// 0 for chrF, 2 for chrF++.
    pub word_order: usize,
    pub beta: f64,
}

impl ChrfConfig {
    pub const CHRF: ChrfConfig = ChrfConfig { char_order: 6, word_order: 0, beta: 2.0 };
    pub const CHRF_PLUS_PLUS: ChrfConfig = ChrfConfig { char_order: 6, word_order: 2, beta: 2.0 };

    fn orders(&self) -> usize {
        self.char_order + self.word_order
    }
}

impl Default for ChrfConfig {
    fn default() -> Self {
        ChrfConfig::CHRF
    }
}

/// `[hyp, ref, match]` counts per order, character orders first.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct ChrfStats(pub Vec<[u64; 3]>);

impl ChrfStats {
    fn merge(mut self, other: ChrfStats) -> ChrfStats {
        if self.0.is_empty() {
            return other;
        }
        for (a, b) in self.0.iter_mut().zip(&other.0) {
            for i in 0..3 {
                a[i] += b[i];
            }
        }
        self
    }

    pub fn f_score(&self, beta: f64) -> f64 {
        let factor = beta * beta;
        let (mut prec, mut rec, mut eff) = (0.0, 0.0, 0usize);
        for &[n_hyp, n_ref, n_match] in &self.0 {
            if n_hyp > 0 && n_ref > 0 {
                prec += n_match as f64 / n_hyp as f64;
                rec += n_match as f64 / n_ref as f64;
                eff += 1;
            }
        }
        if eff == 0 {
            return 0.0;
        }
        prec /= eff as f64;
        rec /= eff as f64;
        if prec + rec == 0.0 {
            return 0.0;
        }
        100.0 * (1.0 + factor) * prec * rec / (factor * prec + rec)
    }
}

/// Splits one leading or trailing ASCII punctuation mark off each word.
fn split_punctuation(text: &str) -> Vec<&str> {
    let mut out = Vec::new();
    for w in py_split(text) {
        let mut chars = w.chars();
        let (first, last) = (chars.next(), chars.next_back());
        match (first, last) {
            (Some(_), None) => out.push(w),
            (_, Some(l)) if l.is_ascii_punctuation() => {
                let cut = w.len() - l.len_utf8();
                out.extend([&w[..cut], &w[cut..]]);
            }
            (Some(f), _) if f.is_ascii_punctuation() => {
                let cut = f.len_utf8();
                out.extend([&w[..cut], &w[cut..]]);
            }
            _ => out.push(w),
        }
    }
    out
}

struct Side<'a> {
    chars: Vec<char>,
    words: Vec<&'a str>,
}

impl<'a> Side<'a> {
    fn new(text: &'a str, cfg: &ChrfConfig) -> Self {
        let chars = py_split(text).flat_map(str::chars).collect();
        let words = if cfg.word_order > 0 { split_punctuation(text) } else { Vec::new() };
        Side { chars, words }
    }
}

fn match_stats<T: std::hash::Hash + Eq>(hyp: &[T], rf: &[T], n: usize) -> [u64; 3] {
    let h = ngram_counts(hyp, n);
    let r = ngram_counts(rf, n);
    let hyp_count: u64 = h.values().sum();
    let ref_count: u64 = r.values().sum();
    let matches = h.iter().map(|(g, c)| (*c).min(r.get(g).copied().unwrap_or(0))).sum();
    [if r.is_empty() { 0 } else { hyp_count }, ref_count, matches]
}

impl ChrfStats {
    /// Statistics against the reference with the best sentence-level F score.
    pub fn from_pair(pair: &EvalPair, cfg: &ChrfConfig) -> ChrfStats {
        let hyp = Side::new(&pair.hypothesis, cfg);
        let mut best = (-1.0, ChrfStats::default());
        for r in &pair.references {
            let rf = Side::new(r, cfg);
            let mut stats = Vec::with_capacity(cfg.orders());
            for n in 1..=cfg.char_order {
                stats.push(match_stats(&hyp.chars, &rf.chars, n));
            }
            for n in 1..=cfg.word_order {
                stats.push(match_stats(&hyp.words, &rf.words, n));
            }
            let stats = ChrfStats(stats);
            let f = stats.f_score(cfg.beta);
            if f > best.0 {
                best = (f, stats);
            }
        }
        best.1
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ChrfScore {
    pub score: f64,
    pub char_order: usize,
    pub word_order: usize,
    pub beta: f64,
}

impl fmt::Display for ChrfScore {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let plus = "+".repeat(self.word_order);
        write!(f, "chrF{}{plus} = {:.2}", self.beta, self.score)
    }
}

pub fn chrf(pairs: &[EvalPair], cfg: ChrfConfig) -> Result<ChrfScore> {
    if pairs.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let stats = pairs.par_iter().map(|p| ChrfStats::from_pair(p, &cfg)).reduce(ChrfStats::default, ChrfStats::merge);
    Ok(score_from(&stats, cfg))
}

pub fn sentence_chrf(pair: &EvalPair, cfg: ChrfConfig) -> ChrfScore {
    score_from(&ChrfStats::from_pair(pair, &cfg), cfg)
}

fn score_from(stats: &ChrfStats, cfg: ChrfConfig) -> ChrfScore {
    ChrfScore { score: stats.f_score(cfg.beta), char_order: cfg.char_order, word_order: cfg.word_order, beta: cfg.beta }
}
