//! Oracle selection over decoder n-best lists.
//!
//! For every source sentence the oracle picks the hypothesis that scores
//! best against the reference under a sentence metric, which gives an upper
//! bound on what any reranker could reach. The model-score argmax is
//! reported next to it as the baseline a plain decoder would return.
//!
//! Maximising each sentence independently does not always maximise corpus
//! BLEU, so [`Strategy::CorpusAscent`] refines the choice directly on corpus
//! statistics, starting from the best of the sentence oracle, the baseline
//! and (in a sweep) the previous width's selection.

use std::collections::{BTreeMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::RecordId;
use crate::error::{Error, Result};
use crate::metrics::{sentence_bleu, BleuConfig, BleuScore, BleuStats, EvalPair};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Hypothesis {
    pub text: String,
    /// Decoder model score; higher is better.
    pub score: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NBestList {
    pub id: RecordId,
    #[serde(default)]
    pub source: String,
    pub hypotheses: Vec<Hypothesis>,
}

impl NBestList {
    /// Index of the highest model score, lowest index on ties.
    pub fn model_argmax(&self, width: usize) -> usize {
        let mut best = 0;
        for (i, h) in self.hypotheses.iter().enumerate().take(width).skip(1) {
            if h.score > self.hypotheses[best].score {
                best = i;
            }
        }
        best
    }
}

/// Parses JSON-lines n-best lists. Blank lines are skipped.
pub fn parse_nbest<R: BufRead>(reader: R) -> Result<Vec<NBestList>> {
    let mut out = Vec::new();
    let mut seen = HashSet::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let list: NBestList =
            serde_json::from_str(&line).map_err(|e| Error::Json { line: i + 1, reason: e.to_string() })?;
        if list.hypotheses.is_empty() {
            return Err(Error::EmptyHypotheses(list.id));
        }
        if list.hypotheses.iter().any(|h| !h.score.is_finite()) {
            return Err(Error::NonFiniteScore { record_id: list.id, key: "score".into() });
        }
        if !seen.insert(list.id) {
            return Err(Error::DuplicateId(list.id));
        }
        out.push(list);
    }
    Ok(out)
}

pub fn read_nbest(path: &Path) -> Result<Vec<NBestList>> {
    let f = File::open(path).map_err(|e| Error::io(path, e))?;
    parse_nbest(BufReader::new(f))
}

pub fn write_nbest<W: Write>(lists: &[NBestList], mut out: W) -> Result<()> {
    for l in lists {
        serde_json::to_writer(&mut out, l).map_err(|e| Error::Json { line: 0, reason: e.to_string() })?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

/// References keyed by the line they were read from.
pub fn references_from_lines<I: IntoIterator<Item = String>>(lines: I) -> BTreeMap<RecordId, String> {
    lines.into_iter().enumerate().map(|(i, l)| (i as RecordId, l)).collect()
}

/// A per-sentence quality score; higher is better.
pub trait SentenceMetric: Sync {
    fn score(&self, hypothesis: &str, reference: &str) -> f64;
}

/// Smoothed sentence BLEU, the default oracle metric.
#[derive(Clone, Copy, Debug, Default)]
pub struct SentenceBleu;

impl SentenceMetric for SentenceBleu {
    fn score(&self, hypothesis: &str, reference: &str) -> f64 {
        let pair = EvalPair { hypothesis: hypothesis.to_owned(), references: vec![reference.to_owned()] };
        sentence_bleu(&pair).score
    }
}

impl<F: Fn(&str, &str) -> f64 + Sync> SentenceMetric for F {
    fn score(&self, hypothesis: &str, reference: &str) -> f64 {
        self(hypothesis, reference)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    /// Per-sentence argmax of the sentence metric.
    #[default]
    Sentence,
    /// Coordinate ascent on corpus BLEU.
    CorpusAscent,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Choice {
    pub id: RecordId,
    pub index: usize,
    pub text: String,
    pub metric: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct OracleResult {
    pub width: usize,
    pub choices: Vec<Choice>,
    pub oracle: BleuScore,
    pub baseline: BleuScore,
    /// Lists with fewer hypotheses than `width`.
    pub short_lists: usize,
}

struct Prepared<'a> {
    lists: &'a [NBestList],
    metric: Vec<Vec<f64>>,
    stats: Vec<Vec<BleuStats>>,
}

impl<'a> Prepared<'a> {
    fn new(
        lists: &'a [NBestList],
        references: &'a BTreeMap<RecordId, String>,
        metric: &dyn SentenceMetric,
    ) -> Result<Self> {
        let refs = lists
            .iter()
            .map(|l| references.get(&l.id).map(String::as_str).ok_or(Error::MissingReference(l.id)))
            .collect::<Result<Vec<_>>>()?;
        if let Some(l) = lists.iter().find(|l| l.hypotheses.is_empty()) {
            return Err(Error::EmptyHypotheses(l.id));
        }
        let per: Vec<(Vec<f64>, Vec<BleuStats>)> = lists
            .par_iter()
            .zip(&refs)
            .map(|(l, r)| {
                l.hypotheses
                    .iter()
                    .map(|h| {
                        let pair = EvalPair { hypothesis: h.text.clone(), references: vec![(*r).to_owned()] };
                        (metric.score(&h.text, r), BleuStats::from_pair(&pair))
                    })
                    .unzip()
            })
            .collect();
        let (metric, stats) = per.into_iter().unzip();
        Ok(Prepared { lists, metric, stats })
    }

    fn corpus(&self, picks: &[usize]) -> BleuStats {
        picks.iter().enumerate().map(|(i, &j)| self.stats[i][j]).sum()
    }

    fn sentence_argmax(&self, width: usize) -> Vec<usize> {
        self.metric
            .iter()
            .map(|m| {
                let mut best = 0;
                for (j, &v) in m.iter().enumerate().take(width).skip(1) {
                    if v > m[best] {
                        best = j;
                    }
                }
                best
            })
            .collect()
    }

    fn baseline(&self, width: usize) -> Vec<usize> {
        self.lists.iter().map(|l| l.model_argmax(width)).collect()
    }

    /// Greedy single-sentence swaps that strictly raise corpus BLEU.
    fn ascend(&self, mut picks: Vec<usize>, width: usize) -> Vec<usize> {
        let mut total = self.corpus(&picks);
        let mut best = total.score(BleuConfig::CORPUS).score;
        loop {
            let mut improved = false;
            for (stats, pick) in self.stats.iter().zip(picks.iter_mut()) {
                let base = sub(total, stats[*pick]);
                for (j, &s_j) in stats.iter().enumerate().take(width) {
                    if j == *pick {
                        continue;
                    }
                    let cand = base + s_j;
                    let s = cand.score(BleuConfig::CORPUS).score;
                    if s > best {
                        best = s;
                        total = cand;
                        *pick = j;
                        improved = true;
                    }
                }
            }
            if !improved {
                return picks;
            }
        }
    }

    fn result(&self, width: usize, picks: &[usize]) -> OracleResult {
        let choices = picks
            .iter()
            .enumerate()
            .map(|(i, &j)| Choice {
                id: self.lists[i].id,
                index: j,
                text: self.lists[i].hypotheses[j].text.clone(),
                metric: self.metric[i][j],
            })
            .collect();
        OracleResult {
            width,
            choices,
            oracle: self.corpus(picks).score(BleuConfig::CORPUS),
            baseline: self.corpus(&self.baseline(width)).score(BleuConfig::CORPUS),
            short_lists: self.lists.iter().filter(|l| l.hypotheses.len() < width).count(),
        }
    }

    fn select(&self, width: usize, strategy: Strategy, warm: Option<&[usize]>) -> Vec<usize> {
        let sentence = self.sentence_argmax(width);
        match strategy {
            Strategy::Sentence => sentence,
            Strategy::CorpusAscent => {
                let mut starts = vec![sentence, self.baseline(width)];
                starts.extend(warm.map(<[usize]>::to_vec));
                let start = starts
                    .into_iter()
                    .map(|p| (self.corpus(&p).score(BleuConfig::CORPUS).score, p))
                    .reduce(|a, b| if b.0 > a.0 { b } else { a })
                    .expect("at least one start")
                    .1;
                self.ascend(start, width)
            }
        }
    }
}

fn sub(a: BleuStats, b: BleuStats) -> BleuStats {
    let mut out = a;
    out.hyp_len -= b.hyp_len;
    out.ref_len -= b.ref_len;
    for n in 0..out.correct.len() {
        out.correct[n] -= b.correct[n];
        out.total[n] -= b.total[n];
    }
    out
}

/// Oracle over full lists with the sentence-level strategy.
pub fn oracle_select(
    lists: &[NBestList],
    references: &BTreeMap<RecordId, String>,
    metric: &dyn SentenceMetric,
) -> Result<OracleResult> {
    oracle_select_with(lists, references, metric, usize::MAX, Strategy::Sentence)
}

/// Oracle over the first `width` hypotheses of each list.
pub fn oracle_select_with(
    lists: &[NBestList],
    references: &BTreeMap<RecordId, String>,
    metric: &dyn SentenceMetric,
    width: usize,
    strategy: Strategy,
) -> Result<OracleResult> {
    if width == 0 {
        return Err(Error::InvalidWidth);
    }
    if lists.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let prep = Prepared::new(lists, references, metric)?;
    let picks = prep.select(width, strategy, None);
    Ok(prep.result(width, &picks))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct WidthRow {
    pub width: usize,
    pub oracle_bleu: f64,
    pub baseline_bleu: f64,
    pub short_lists: usize,
}

/// Oracle and baseline corpus BLEU per beam width. Widths are evaluated in
/// ascending order; the returned rows follow the order given.
pub fn beam_width_sweep(
    lists: &[NBestList],
    references: &BTreeMap<RecordId, String>,
    widths: &[usize],
    metric: &dyn SentenceMetric,
    strategy: Strategy,
) -> Result<Vec<WidthRow>> {
    if widths.contains(&0) {
        return Err(Error::InvalidWidth);
    }
    if lists.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let prep = Prepared::new(lists, references, metric)?;
    let mut sorted: Vec<usize> = widths.to_vec();
    sorted.sort_unstable();
    sorted.dedup();
    let mut warm: Option<Vec<usize>> = None;
    let mut rows = BTreeMap::new();
    for w in sorted {
        let picks = prep.select(w, strategy, warm.as_deref());
        let r = prep.result(w, &picks);
        rows.insert(
            w,
            WidthRow {
                width: w,
                oracle_bleu: r.oracle.score,
                baseline_bleu: r.baseline.score,
                short_lists: r.short_lists,
            },
        );
        warm = Some(picks);
    }
    Ok(widths.iter().map(|w| rows[w].clone()).collect())
}

pub fn sweep_tsv(rows: &[WidthRow]) -> String {
    let mut out = String::from("width\toracle_bleu\tbaseline_bleu\n");
    for r in rows {
        out.push_str(&format!("{}\t{:.2}\t{:.2}\n", r.width, r.oracle_bleu, r.baseline_bleu));
    }
    out
}
