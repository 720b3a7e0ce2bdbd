//! BLEU, chrF and chrF++ compatible with the sacreBLEU defaults.
//!
//! BLEU uses 13a tokenization and is case-sensitive. Corpus BLEU smooths
//! zero precisions exponentially unless [`BleuConfig::UNSMOOTHED`] is asked
//! for; sentence BLEU also uses effective order. chrF ignores whitespace in
//! character n-grams and picks, per sentence, the reference with the best F
//! score before summing statistics over the corpus.

mod bleu;
mod chrf;
mod tokenize;

use std::hash::Hash;

use rustc_hash::FxHashMap;
use serde::{Deserialize, Serialize};

pub use bleu::{
    corpus_bleu, corpus_bleu_with, sentence_bleu, sentence_bleu_with, BleuConfig, BleuScore, BleuStats, Smoothing,
    MAX_NGRAM_ORDER,
};
pub use chrf::{chrf, sentence_chrf, ChrfConfig, ChrfScore, ChrfStats};
pub use tokenize::{normalize_13a, tokenize_13a};

use crate::error::{Error, Result};

/// A detokenized hypothesis with one or more references.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvalPair {
    pub hypothesis: String,
    pub references: Vec<String>,
}

impl EvalPair {
    pub fn new<S: Into<String>>(
        hypothesis: impl Into<String>,
        references: impl IntoIterator<Item = S>,
    ) -> Result<Self> {
        let references: Vec<String> = references.into_iter().map(Into::into).collect();
        if references.is_empty() {
            return Err(Error::NoReferences);
        }
        Ok(EvalPair { hypothesis: hypothesis.into(), references })
    }

    /// Zips a hypothesis stream with line-aligned reference streams.
    pub fn zip_streams(hypotheses: Vec<String>, reference_streams: Vec<Vec<String>>) -> Result<Vec<EvalPair>> {
        if reference_streams.is_empty() {
            return Err(Error::NoReferences);
        }
        for refs in &reference_streams {
            if refs.len() != hypotheses.len() {
                return Err(Error::LineCountMismatch { hypotheses: hypotheses.len(), references: refs.len() });
            }
        }
        Ok(hypotheses
            .into_iter()
            .enumerate()
            .map(|(i, hypothesis)| EvalPair {
                hypothesis,
                references: reference_streams.iter().map(|s| s[i].clone()).collect(),
            })
            .collect())
    }
}

fn ngram_counts<T: Hash + Eq>(items: &[T], n: usize) -> FxHashMap<&[T], u64> {
    let mut counts = FxHashMap::default();
    if n > 0 && items.len() >= n {
        for w in items.windows(n) {
            *counts.entry(w).or_insert(0) += 1;
        }
    }
    counts
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zip_streams_checks_lengths() {
        let h = vec!["a".to_string(), "b".to_string()];
        let err = EvalPair::zip_streams(h.clone(), vec![vec!["a".into()]]).unwrap_err();
        assert!(matches!(err, Error::LineCountMismatch { hypotheses: 2, references: 1 }));
        let pairs = EvalPair::zip_streams(h, vec![vec!["x".into(), "y".into()], vec!["p".into(), "q".into()]]).unwrap();
        assert_eq!(pairs[1].references, ["y", "q"]);
        assert!(EvalPair::new("a", Vec::<String>::new()).is_err());
    }
}
