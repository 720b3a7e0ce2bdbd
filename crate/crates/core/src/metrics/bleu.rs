use std::fmt;
use std::iter::Sum;
use std::ops::{Add, AddAssign};

use rayon::prelude::*;
use rustc_hash::FxHashMap;
use serde::{Deserialize, Serialize};

use super::{ngram_counts, tokenize_13a, EvalPair};
use crate::error::{Error, Result};
use crate::text::py_rstrip;

pub const MAX_NGRAM_ORDER: usize = 4;

/// Treatment of zero n-gram precisions.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Smoothing {
    /// A zero precision zeroes the score.
    None,
    /// The k-th zero precision becomes `1 / (2^k * total)`.
    #[default]
    Exp,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BleuConfig {
    pub smoothing: Smoothing,
    /// Average only over the orders the hypothesis is long enough to have.
    pub effective_order: bool,
}

impl BleuConfig {
    pub const CORPUS: BleuConfig = BleuConfig { smoothing: Smoothing::Exp, effective_order: false };
    pub const SENTENCE: BleuConfig = BleuConfig { smoothing: Smoothing::Exp, effective_order: true };
    pub const UNSMOOTHED: BleuConfig = BleuConfig { smoothing: Smoothing::None, effective_order: false };
}

impl Default for BleuConfig {
    fn default() -> Self {
        BleuConfig::CORPUS
    }
}

/// Sufficient statistics for BLEU. Adding them merges corpora.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub struct BleuStats {
    pub hyp_len: u64,
    pub ref_len: u64,
    pub correct: [u64; MAX_NGRAM_ORDER],
    pub total: [u64; MAX_NGRAM_ORDER],
}

impl Add for BleuStats {
    type Output = BleuStats;

    fn add(mut self, rhs: BleuStats) -> BleuStats {
        self += rhs;
        self
    }
}

impl AddAssign for BleuStats {
    fn add_assign(&mut self, rhs: BleuStats) {
        self.hyp_len += rhs.hyp_len;
        self.ref_len += rhs.ref_len;
        for n in 0..MAX_NGRAM_ORDER {
            self.correct[n] += rhs.correct[n];
            self.total[n] += rhs.total[n];
        }
    }
}

impl Sum for BleuStats {
    fn sum<I: Iterator<Item = BleuStats>>(iter: I) -> Self {
        iter.fold(BleuStats::default(), Add::add)
    }
}

fn tokens(text: &str) -> Vec<String> {
    tokenize_13a(py_rstrip(text))
}

/// Reference length closest to `hyp_len`, preferring the shorter on ties.
fn closest_ref_len(hyp_len: u64, ref_lens: &[u64]) -> u64 {
    let mut best = (u64::MAX, 0);
    for &len in ref_lens {
        let diff = hyp_len.abs_diff(len);
        if diff < best.0 || (diff == best.0 && len < best.1) {
            best = (diff, len);
        }
    }
    best.1
}

impl BleuStats {
    pub fn from_pair(pair: &EvalPair) -> BleuStats {
        let hyp = tokens(&pair.hypothesis);
        let refs: Vec<Vec<String>> = pair.references.iter().map(|r| tokens(r)).collect();
        let ref_lens: Vec<u64> = refs.iter().map(|r| r.len() as u64).collect();
        let mut stats = BleuStats {
            hyp_len: hyp.len() as u64,
            ref_len: closest_ref_len(hyp.len() as u64, &ref_lens),
            ..Default::default()
        };
        for n in 1..=MAX_NGRAM_ORDER {
            let mut max_ref: FxHashMap<&[String], u64> = FxHashMap::default();
            for r in &refs {
                for (g, c) in ngram_counts(r, n) {
                    let e = max_ref.entry(g).or_insert(0);
                    *e = (*e).max(c);
                }
            }
            let hyp_counts = ngram_counts(&hyp, n);
            stats.total[n - 1] = hyp.len().saturating_sub(n - 1) as u64;
            stats.correct[n - 1] = hyp_counts.iter().map(|(g, c)| (*c).min(max_ref.get(g).copied().unwrap_or(0))).sum();
        }
        stats
    }

    pub fn score(&self, cfg: BleuConfig) -> BleuScore {
        let mut out = BleuScore {
            score: 0.0,
            precisions: [0.0; MAX_NGRAM_ORDER],
            brevity_penalty: brevity_penalty(self.hyp_len, self.ref_len),
            hyp_len: self.hyp_len,
            ref_len: self.ref_len,
            stats: *self,
        };
        if self.correct.iter().all(|&c| c == 0) {
            return out;
        }
        let mut smooth = 1.0;
        let mut eff_order = MAX_NGRAM_ORDER;
        for n in 0..MAX_NGRAM_ORDER {
            let total = self.total[n];
            if total == 0 {
                break;
            }
            if cfg.effective_order {
                eff_order = n + 1;
            }
            out.precisions[n] = if self.correct[n] == 0 {
                match cfg.smoothing {
                    Smoothing::Exp => {
                        smooth *= 2.0;
                        100.0 / (smooth * total as f64)
                    }
                    Smoothing::None => 0.0,
                }
            } else {
                100.0 * self.correct[n] as f64 / total as f64
            };
        }
        let log_sum: f64 =
            out.precisions[..eff_order].iter().map(|&p| if p == 0.0 { -9_999_999_999.0 } else { p.ln() }).sum();
        // exp(ln 100) overshoots by a few ulps; keep the documented range
        out.score = (out.brevity_penalty * (log_sum / eff_order as f64).exp()).min(100.0);
        out
    }
}

fn brevity_penalty(hyp_len: u64, ref_len: u64) -> f64 {
    match (hyp_len, ref_len) {
        (h, r) if h >= r => 1.0,
        (0, _) => 0.0,
        (h, r) => (1.0 - r as f64 / h as f64).exp(),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct BleuScore {
    /// In [0, 100].
    pub score: f64,
    /// Percentages for n = 1..4.
    pub precisions: [f64; MAX_NGRAM_ORDER],
    pub brevity_penalty: f64,
    pub hyp_len: u64,
    pub ref_len: u64,
    #[serde(skip)]
    pub stats: BleuStats,
}

impl fmt::Display for BleuScore {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let p = self.precisions;
        let ratio = if self.ref_len == 0 { 0.0 } else { self.hyp_len as f64 / self.ref_len as f64 };
        write!(
            f,
            "BLEU = {:.2} {:.1}/{:.1}/{:.1}/{:.1} (BP = {:.3} ratio = {:.3} hyp_len = {} ref_len = {})",
            self.score, p[0], p[1], p[2], p[3], self.brevity_penalty, ratio, self.hyp_len, self.ref_len
        )
    }
}

/// Corpus BLEU with exponential smoothing, the reference scorer's default.
pub fn corpus_bleu(pairs: &[EvalPair]) -> Result<BleuScore> {
    corpus_bleu_with(pairs, BleuConfig::CORPUS)
}

pub fn corpus_bleu_with(pairs: &[EvalPair], cfg: BleuConfig) -> Result<BleuScore> {
    if pairs.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let stats = pairs.par_iter().map(BleuStats::from_pair).reduce(BleuStats::default, Add::add);
    Ok(stats.score(cfg))
}

/// Sentence BLEU with exponential smoothing and effective order.
pub fn sentence_bleu(pair: &EvalPair) -> BleuScore {
    sentence_bleu_with(pair, BleuConfig::SENTENCE)
}

pub fn sentence_bleu_with(pair: &EvalPair, cfg: BleuConfig) -> BleuScore {
    BleuStats::from_pair(pair).score(cfg)
}
