//! Cross-validated perplexity scoring and percentile selection.
//!
//! Records are dealt into `k` balanced folds. One character LM is trained per
//! fold on every other fold, and each record is scored only by the model that
//! never saw it. Selection then keeps the least surprising records.
//!
//! Percentiles use the nearest-rank definition: at `q` percent of `n` values
//! exactly `ceil(q * n / 100)` records are kept per group. Ties in surprisal
//! are broken by record id so retained sets are always nested in `q`.

use std::borrow::Cow;
use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::charlm::{CharNGramLM, LmConfig};
use crate::corpus::{keys, Corpus, RecordId, SentencePair};
use crate::error::{Error, Result};

pub const DEFAULT_K: usize = 5;
pub const DEFAULT_SEED: u64 = 0;
pub const DEFAULT_PERCENTILES: [f64; 6] = [20.0, 40.0, 50.0, 60.0, 70.0, 80.0];

/// Separator placed between source and target when both are scored.
pub const SIDE_SEPARATOR: char = '\t';

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FoldPlan {
    k: usize,
    seed: u64,
    assignment: BTreeMap<RecordId, usize>,
}

impl FoldPlan {
    pub fn k(&self) -> usize {
        self.k
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn fold_of(&self, id: RecordId) -> Option<usize> {
        self.assignment.get(&id).copied()
    }

    pub fn len(&self) -> usize {
        self.assignment.len()
    }

    pub fn is_empty(&self) -> bool {
        self.assignment.is_empty()
    }

    pub fn fold_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.k];
        for &f in self.assignment.values() {
            sizes[f] += 1;
        }
        sizes
    }

    /// Ids in `fold`, ascending.
    pub fn members(&self, fold: usize) -> Vec<RecordId> {
        self.assignment.iter().filter(|(_, &f)| f == fold).map(|(&id, _)| id).collect()
    }

    fn check_covers(&self, corpus: &Corpus) -> Result<()> {
        match corpus.ids().find(|id| !self.assignment.contains_key(id)) {
            Some(id) => Err(Error::UnplannedRecord(id)),
            None => Ok(()),
        }
    }
}

/// Shuffles record ids with a seeded ChaCha8 stream and deals them round-robin.
pub fn make_folds(corpus: &Corpus, k: usize, seed: u64) -> Result<FoldPlan> {
    if k < 2 {
        return Err(Error::InvalidFoldCount(k));
    }
    if corpus.len() < k {
        return Err(Error::CorpusTooSmall { size: corpus.len(), k });
    }
    let mut ids: Vec<RecordId> = corpus.ids().collect();
    ids.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let assignment = ids.into_iter().enumerate().map(|(pos, id)| (id, pos % k)).collect();
    Ok(FoldPlan { k, seed, assignment })
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScoreSide {
    Source,
    Target,
    #[default]
    Concatenated,
}

impl ScoreSide {
    pub fn text<'a>(&self, pair: &'a SentencePair) -> Cow<'a, str> {
        match self {
            ScoreSide::Source => Cow::Borrowed(&pair.source),
            ScoreSide::Target => Cow::Borrowed(&pair.target),
            ScoreSide::Concatenated => Cow::Owned(format!("{}{SIDE_SEPARATOR}{}", pair.source, pair.target)),
        }
    }
}

impl FromStr for ScoreSide {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "source" => Ok(ScoreSide::Source),
            "target" => Ok(ScoreSide::Target),
            "concatenated" => Ok(ScoreSide::Concatenated),
            _ => Err(Error::Config(format!("unknown score side `{s}`"))),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct CrossvalOptions {
    pub side: ScoreSide,
    pub lm: LmConfig,
    /// Store log2 probability per character instead of the total.
    pub per_char: bool,
}

/// Which model scored what, recorded from the training path itself.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct CrossvalTrace {
    /// Record ids each fold model was trained on, ascending.
    pub training_ids: Vec<Vec<RecordId>>,
    /// Index of the model that scored each record.
    pub scorer: BTreeMap<RecordId, usize>,
}

impl CrossvalTrace {
    /// Records scored by a model whose training set contained them.
    pub fn leaks(&self) -> Vec<RecordId> {
        self.scorer
            .iter()
            .filter(|(id, &m)| self.training_ids[m].binary_search(id).is_ok())
            .map(|(&id, _)| id)
            .collect()
    }
}

/// Scores every record with the fold model that held it out and stores the
/// result under `logprob`.
pub fn crossval_score(corpus: Corpus, plan: &FoldPlan, opts: &CrossvalOptions) -> Result<(Corpus, CrossvalTrace)> {
    plan.check_covers(&corpus)?;
    let k = plan.k();
    let mut training_ids = vec![Vec::new(); k];
    let mut training_texts: Vec<Vec<Cow<str>>> = vec![Vec::new(); k];
    for rec in corpus.iter() {
        let fold = plan.fold_of(rec.pair.id).expect("plan covers corpus");
        let text = opts.side.text(&rec.pair);
        for m in (0..k).filter(|&m| m != fold) {
            training_ids[m].push(rec.pair.id);
            training_texts[m].push(text.clone());
        }
    }
    for ids in &mut training_ids {
        ids.sort_unstable();
    }
    let models: Vec<CharNGramLM> =
        training_texts.par_iter().map(|texts| CharNGramLM::train(texts, opts.lm)).collect::<Result<_>>()?;
    drop(training_texts);

    let mut corpus = corpus;
    let scored: Vec<Result<(RecordId, usize, f64)>> = corpus
        .records()
        .par_iter()
        .map(|rec| {
            let m = plan.fold_of(rec.pair.id).expect("plan covers corpus");
            let text = opts.side.text(&rec.pair);
            let mut lp = models[m].log_prob(&text)?;
            if opts.per_char {
                lp /= text.chars().count() as f64;
            }
            Ok((rec.pair.id, m, lp))
        })
        .collect();
    let mut scorer = BTreeMap::new();
    for (rec, res) in corpus.records_mut().iter_mut().zip(scored) {
        let (id, m, lp) = res?;
        rec.scores.set(id, keys::LOGPROB, lp)?;
        scorer.insert(id, m);
    }
    Ok((corpus, CrossvalTrace { training_ids, scorer }))
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SelectMode {
    /// Nearest-rank percentile within each fold.
    #[default]
    PerFold,
    /// Nearest-rank percentile over the whole corpus.
    Global,
    /// Mean plus two standard deviations of surprisal within each fold.
    TwoSigma,
}

impl FromStr for SelectMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "per_fold" => Ok(SelectMode::PerFold),
            "global" => Ok(SelectMode::Global),
            "two_sigma" => Ok(SelectMode::TwoSigma),
            _ => Err(Error::Config(format!("unknown selection mode `{s}`"))),
        }
    }
}

fn check_percentile(q: f64) -> Result<()> {
    if q.is_finite() && q > 0.0 && q <= 100.0 {
        Ok(())
    } else {
        Err(Error::InvalidPercentile(q))
    }
}

/// `ceil(q * n / 100)`, guarding against float noise at exact multiples.
pub fn nearest_rank(q: f64, n: usize) -> usize {
    let r = q * n as f64 / 100.0;
    let rounded = r.round();
    let rank = if (r - rounded).abs() < 1e-9 { rounded } else { r.ceil() };
    (rank as usize).clamp(1, n.max(1))
}

fn mean_plus_two_sigma(values: &[f64]) -> f64 {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    mean + 2.0 * var.sqrt()
}

/// Cutoffs over per-fold surprisal collections: one per fold, or a single
/// value in global mode. `q` is ignored in two-sigma mode.
pub fn percentile_threshold(surprisals: &[Vec<f64>], q: f64, mode: SelectMode) -> Result<Vec<f64>> {
    if let Some(i) = surprisals.iter().position(Vec::is_empty) {
        return Err(Error::EmptyFold(i));
    }
    if surprisals.is_empty() {
        return Err(Error::EmptyFold(0));
    }
    let at_rank = |vals: &[f64]| {
        let mut v = vals.to_vec();
        v.sort_by(f64::total_cmp);
        v[nearest_rank(q, v.len()) - 1]
    };
    match mode {
        SelectMode::PerFold => {
            check_percentile(q)?;
            Ok(surprisals.iter().map(|f| at_rank(f)).collect())
        }
        SelectMode::Global => {
            check_percentile(q)?;
            Ok(vec![at_rank(&surprisals.concat())])
        }
        SelectMode::TwoSigma => Ok(surprisals.iter().map(|f| mean_plus_two_sigma(f)).collect()),
    }
}

/// Threshold label used in reports and manifest names.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Threshold {
    Percentile(f64),
    TwoSigma,
}

impl fmt::Display for Threshold {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Threshold::Percentile(q) => write!(f, "{q}"),
            Threshold::TwoSigma => f.write_str("two_sigma"),
        }
    }
}

impl Serialize for Threshold {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Threshold::Percentile(q) => s.serialize_f64(*q),
            Threshold::TwoSigma => s.serialize_str("two_sigma"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Selection {
    pub threshold: Threshold,
    pub cutoffs: Vec<f64>,
    /// Ascending.
    pub retained: Vec<RecordId>,
    /// Ascending.
    pub removed: Vec<RecordId>,
}

impl Selection {
    /// Keeps only retained records, in corpus order.
    pub fn apply(&self, corpus: Corpus) -> Corpus {
        let keep: Vec<_> =
            corpus.into_records().into_iter().filter(|r| self.retained.binary_search(&r.pair.id).is_ok()).collect();
        Corpus::from_records(keep)
    }

    pub fn summary_json(&self) -> String {
        #[derive(Serialize)]
        struct Summary<'a> {
            threshold: Threshold,
            cutoffs: &'a [f64],
            retained: usize,
            removed: usize,
        }
        let s = Summary {
            threshold: self.threshold,
            cutoffs: &self.cutoffs,
            retained: self.retained.len(),
            removed: self.removed.len(),
        };
        serde_json::to_string_pretty(&s).expect("summary serialises")
    }
}

/// Surprisal grouped by fold (or in one group), each entry `(surprisal, id)`
/// sorted ascending.
fn grouped_surprisal(corpus: &Corpus, plan: &FoldPlan, global: bool) -> Result<Vec<Vec<(f64, RecordId)>>> {
    plan.check_covers(corpus)?;
    let mut groups = vec![Vec::new(); if global { 1 } else { plan.k() }];
    for rec in corpus.iter() {
        let id = rec.pair.id;
        let lp = rec
            .scores
            .get(keys::LOGPROB)
            .ok_or_else(|| Error::MissingScore { record_id: id, key: keys::LOGPROB.to_owned() })?;
        let g = if global { 0 } else { plan.fold_of(id).expect("covered") };
        groups[g].push((-lp, id));
    }
    if let Some(i) = groups.iter().position(Vec::is_empty) {
        return Err(Error::EmptyFold(i));
    }
    for g in &mut groups {
        g.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    }
    Ok(groups)
}

fn select_from_groups(groups: &[Vec<(f64, RecordId)>], threshold: Threshold) -> Selection {
    let mut retained = Vec::new();
    let mut removed = Vec::new();
    let mut cutoffs = Vec::with_capacity(groups.len());
    for g in groups {
        let keep = match threshold {
            Threshold::Percentile(q) => nearest_rank(q, g.len()),
            Threshold::TwoSigma => {
                let vals: Vec<f64> = g.iter().map(|e| e.0).collect();
                let cut = mean_plus_two_sigma(&vals);
                g.partition_point(|e| e.0 <= cut)
            }
        };
        cutoffs.push(match threshold {
            Threshold::Percentile(_) => g[keep - 1].0,
            Threshold::TwoSigma => mean_plus_two_sigma(&g.iter().map(|e| e.0).collect::<Vec<_>>()),
        });
        retained.extend(g[..keep].iter().map(|e| e.1));
        removed.extend(g[keep..].iter().map(|e| e.1));
    }
    retained.sort_unstable();
    removed.sort_unstable();
    Selection { threshold, cutoffs, retained, removed }
}

fn threshold_for(q: f64, mode: SelectMode) -> Result<Threshold> {
    if mode == SelectMode::TwoSigma {
        return Ok(Threshold::TwoSigma);
    }
    check_percentile(q)?;
    Ok(Threshold::Percentile(q))
}

/// Selects the least surprising records. In two-sigma mode `q` is ignored.
pub fn select(corpus: &Corpus, plan: &FoldPlan, q: f64, mode: SelectMode) -> Result<Selection> {
    let threshold = threshold_for(q, mode)?;
    let groups = grouped_surprisal(corpus, plan, mode == SelectMode::Global)?;
    Ok(select_from_groups(&groups, threshold))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SelectionSweep {
    pub mode: SelectMode,
    pub selections: Vec<Selection>,
}

impl SelectionSweep {
    /// Threshold and example-count columns with blank BLEU columns for
    /// downstream fill-in.
    pub fn to_tsv(&self) -> String {
        let mut out = String::from("threshold\texamples\tbleu_dev\tbleu_devtest\n");
        for s in &self.selections {
            out.push_str(&format!("{}\t{}\t\t\n", s.threshold, s.retained.len()));
        }
        out
    }

    /// Writes `sweep.tsv`, `sweep.json`, and per threshold
    /// `retained_<t>.txt`, `removed_<t>.txt`, `summary_<t>.json`.
    pub fn write_dir(&self, dir: &Path) -> Result<Vec<std::path::PathBuf>> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let mut written = Vec::new();
        let mut put = |name: String, body: String| -> Result<()> {
            let path = dir.join(name);
            fs::write(&path, body).map_err(|e| Error::io(&path, e))?;
            written.push(path);
            Ok(())
        };
        put("sweep.tsv".into(), self.to_tsv())?;
        put("sweep.json".into(), serde_json::to_string_pretty(&self.summary()).expect("serialises") + "\n")?;
        for s in &self.selections {
            let ids = |v: &[RecordId]| v.iter().map(|id| format!("{id}\n")).collect::<String>();
            put(format!("retained_{}.txt", s.threshold), ids(&s.retained))?;
            put(format!("removed_{}.txt", s.threshold), ids(&s.removed))?;
            put(format!("summary_{}.json", s.threshold), s.summary_json() + "\n")?;
        }
        Ok(written)
    }

    fn summary(&self) -> serde_json::Value {
        let rows: Vec<serde_json::Value> = self
            .selections
            .iter()
            .map(|s| {
                serde_json::json!({
                    "threshold": s.threshold,
                    "cutoffs": s.cutoffs,
                    "retained": s.retained.len(),
                    "removed": s.removed.len(),
                })
            })
            .collect();
        serde_json::json!({ "mode": self.mode, "thresholds": rows })
    }
}

/// One selection per percentile, plus a two-sigma selection when asked.
/// `mode` must be per-fold or global; two-sigma cutoffs are always per fold.
pub fn sweep(
    corpus: &Corpus,
    plan: &FoldPlan,
    percentiles: &[f64],
    mode: SelectMode,
    include_two_sigma: bool,
) -> Result<SelectionSweep> {
    if mode == SelectMode::TwoSigma {
        return Err(Error::Config("sweep mode must be per_fold or global".into()));
    }
    for &q in percentiles {
        check_percentile(q)?;
    }
    let groups = grouped_surprisal(corpus, plan, mode == SelectMode::Global)?;
    let mut selections: Vec<Selection> =
        percentiles.iter().map(|&q| select_from_groups(&groups, Threshold::Percentile(q))).collect();
    if include_two_sigma {
        let folds = if mode == SelectMode::Global { grouped_surprisal(corpus, plan, false)? } else { groups };
        selections.push(select_from_groups(&folds, Threshold::TwoSigma));
    }
    Ok(SelectionSweep { mode, selections })
}
