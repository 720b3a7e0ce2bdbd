//! Heuristic bitext filtering under a declarative [`FilterSpec`].
//!
//! A record is kept only if it passes every active criterion. Every threshold
//! is strict. Rejections are attributed to the first failing criterion in the
//! fixed order lang, bpc, sim, len, len_diff; records flagged by an earlier
//! scoring stage are rejected under their flag before any criterion runs.

use std::collections::BTreeMap;
use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{keys, Corpus, Record, SentencePair};
use crate::error::{Error, Result};
use crate::langid::lang_passes;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LangRequirement {
    pub src_label: String,
    pub tgt_label: String,
    pub min_conf: f64,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputOrder {
    #[default]
    Input,
    /// Most dissimilar pairs first; ties by id.
    SimilarityAscending,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct FilterSpec {
    pub require_langs: Option<LangRequirement>,
    /// Keep when `bpc_sum < max_bpc_sum`.
    pub max_bpc_sum: Option<f64>,
    /// Keep when `sim > min_similarity`.
    pub min_similarity: Option<f64>,
    /// Keep when `|len_src - len_tgt| < max_len_diff` (characters).
    pub max_len_diff: Option<u64>,
    /// Keep when both sides are longer than `min_len` characters.
    pub min_len: Option<u64>,
    /// Keep when both sides are shorter than `max_len` characters.
    pub max_len: Option<u64>,
    pub output_order: OutputOrder,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Criterion {
    Lang,
    Bpc,
    Sim,
    Len,
    LenDiff,
}

impl Criterion {
    pub const ALL: [Criterion; 5] =
        [Criterion::Lang, Criterion::Bpc, Criterion::Sim, Criterion::Len, Criterion::LenDiff];

    pub fn cause(self) -> &'static str {
        match self {
            Criterion::Lang => "lang",
            Criterion::Bpc => "bpc",
            Criterion::Sim => "sim",
            Criterion::Len => "len",
            Criterion::LenDiff => "len_diff",
        }
    }

    /// Score keys this criterion reads.
    pub fn required_keys(self) -> &'static [&'static str] {
        match self {
            Criterion::Lang => &[keys::LANG_SRC_CONF, keys::LANG_TGT_CONF],
            Criterion::Bpc => &[keys::BPC_SUM],
            Criterion::Sim => &[keys::SIM],
            Criterion::Len | Criterion::LenDiff => &[],
        }
    }

    /// Whether `rec` passes. Missing scores fail.
    pub fn passes(self, rec: &Record, spec: &FilterSpec) -> bool {
        let score = |k: &str| rec.scores.get(k);
        match self {
            Criterion::Lang => spec.require_langs.as_ref().is_none_or(|req| {
                let ok = |k| score(k).is_some_and(|m| lang_passes(m, req.min_conf));
                ok(keys::LANG_SRC_CONF) && ok(keys::LANG_TGT_CONF)
            }),
            Criterion::Bpc => spec.max_bpc_sum.is_none_or(|t| score(keys::BPC_SUM).is_some_and(|v| v < t)),
            Criterion::Sim => spec.min_similarity.is_none_or(|t| score(keys::SIM).is_some_and(|v| v > t)),
            Criterion::Len => {
                let l = length_stats(&rec.pair);
                spec.min_len.is_none_or(|m| l.len_src > m && l.len_tgt > m)
                    && spec.max_len.is_none_or(|m| l.len_src < m && l.len_tgt < m)
            }
            Criterion::LenDiff => spec.max_len_diff.is_none_or(|m| length_stats(&rec.pair).len_diff < m),
        }
    }
}

impl FilterSpec {
    pub fn is_active(&self, c: Criterion) -> bool {
        match c {
            Criterion::Lang => self.require_langs.is_some(),
            Criterion::Bpc => self.max_bpc_sum.is_some(),
            Criterion::Sim => self.min_similarity.is_some(),
            Criterion::Len => self.min_len.is_some() || self.max_len.is_some(),
            Criterion::LenDiff => self.max_len_diff.is_some(),
        }
    }

    pub fn active_criteria(&self) -> Vec<Criterion> {
        Criterion::ALL.into_iter().filter(|c| self.is_active(*c)).collect()
    }

    pub fn required_keys(&self) -> Vec<&'static str> {
        self.active_criteria().into_iter().flat_map(|c| c.required_keys().iter().copied()).collect()
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::InvalidSpec(msg));
        if self.active_criteria().is_empty() {
            return fail("no filter criterion set".into());
        }
        if let Some(req) = &self.require_langs {
            if req.src_label.is_empty() || req.tgt_label.is_empty() {
                return fail("language labels must be non-empty".into());
            }
            if !(0.0..=1.0).contains(&req.min_conf) {
                return fail(format!("min_lang_conf {} outside [0, 1]", req.min_conf));
            }
        }
        if let Some(t) = self.max_bpc_sum {
            if !t.is_finite() {
                return fail("max_bpc_sum must be finite".into());
            }
        }
        if let Some(t) = self.min_similarity {
            if !(-1.0..=1.0).contains(&t) {
                return fail(format!("min_similarity {t} outside [-1, 1]"));
            }
        }
        if let (Some(lo), Some(hi)) = (self.min_len, self.max_len) {
            if lo > hi {
                return fail(format!("min_len {lo} exceeds max_len {hi}"));
            }
        }
        Ok(())
    }

    /// First failing criterion, in fixed order.
    pub fn first_failure(&self, rec: &Record) -> Option<Criterion> {
        self.first_failure_in(rec, &Criterion::ALL)
    }

    /// First failing criterion when evaluated in the given order.
    pub fn first_failure_in(&self, rec: &Record, order: &[Criterion]) -> Option<Criterion> {
        order.iter().copied().filter(|c| self.is_active(*c)).find(|c| !c.passes(rec, self))
    }

    pub fn from_config_str(text: &str) -> Result<Self> {
        let flat: FlatFilterSpec = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        let spec = flat.into_spec()?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn to_config_string(&self) -> String {
        let flat = FlatFilterSpec::from(self);
        toml::to_string(&flat).expect("flat spec serialises")
    }
}

/// Flat key-value form used in config files.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FlatFilterSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub src_lang: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tgt_lang: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub min_lang_conf: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_bpc_sum: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub min_similarity: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_len_diff: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub min_len: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_len: Option<u64>,
    #[serde(default)]
    pub output_order: OutputOrder,
}

impl FlatFilterSpec {
    pub fn into_spec(self) -> Result<FilterSpec> {
        let require_langs = match (self.src_lang, self.tgt_lang) {
            (Some(src_label), Some(tgt_label)) => Some(LangRequirement {
                src_label,
                tgt_label,
                min_conf: self.min_lang_conf.unwrap_or(crate::langid::DEFAULT_MIN_CONF),
            }),
            (None, None) if self.min_lang_conf.is_none() => None,
            _ => return Err(Error::Config("src_lang and tgt_lang must be set together".into())),
        };
        Ok(FilterSpec {
            require_langs,
            max_bpc_sum: self.max_bpc_sum,
            min_similarity: self.min_similarity,
            max_len_diff: self.max_len_diff,
            min_len: self.min_len,
            max_len: self.max_len,
            output_order: self.output_order,
        })
    }
}

impl From<&FilterSpec> for FlatFilterSpec {
    fn from(s: &FilterSpec) -> Self {
        FlatFilterSpec {
            src_lang: s.require_langs.as_ref().map(|r| r.src_label.clone()),
            tgt_lang: s.require_langs.as_ref().map(|r| r.tgt_label.clone()),
            min_lang_conf: s.require_langs.as_ref().map(|r| r.min_conf),
            max_bpc_sum: s.max_bpc_sum,
            min_similarity: s.min_similarity,
            max_len_diff: s.max_len_diff,
            min_len: s.min_len,
            max_len: s.max_len,
            output_order: s.output_order,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct LengthStats {
    pub len_src: u64,
    pub len_tgt: u64,
    pub len_diff: u64,
}

/// Character counts of both sides and their absolute difference.
pub fn length_stats(pair: &SentencePair) -> LengthStats {
    let len_src = pair.source.chars().count() as u64;
    let len_tgt = pair.target.chars().count() as u64;
    LengthStats { len_src, len_tgt, len_diff: len_src.abs_diff(len_tgt) }
}

/// Stores `len_src`, `len_tgt` and `len_diff` on every record.
pub fn annotate_lengths(mut corpus: Corpus) -> Corpus {
    for rec in corpus.records_mut() {
        let l = length_stats(&rec.pair);
        let id = rec.pair.id;
        for (k, v) in [(keys::LEN_SRC, l.len_src), (keys::LEN_TGT, l.len_tgt), (keys::LEN_DIFF, l.len_diff)] {
            rec.scores.set(id, k, v as f64).expect("lengths are finite");
        }
    }
    corpus
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FilterReport {
    pub input_count: usize,
    pub kept_count: usize,
    pub rejected_by_cause: BTreeMap<String, usize>,
    pub spec: FilterSpec,
}

impl FilterReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serialises")
    }
}

impl fmt::Display for FilterReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "input:    {}", self.input_count)?;
        writeln!(f, "kept:     {}", self.kept_count)?;
        writeln!(f, "rejected: {}", self.input_count - self.kept_count)?;
        for (cause, n) in &self.rejected_by_cause {
            writeln!(f, "  {cause:<12} {n}")?;
        }
        writeln!(f, "thresholds:")?;
        if let Some(r) = &self.spec.require_langs {
            writeln!(f, "  lang         {}/{} margin >= {}", r.src_label, r.tgt_label, r.min_conf)?;
        }
        if let Some(t) = self.spec.max_bpc_sum {
            writeln!(f, "  bpc_sum      < {t}")?;
        }
        if let Some(t) = self.spec.min_similarity {
            writeln!(f, "  sim          > {t}")?;
        }
        if let Some(t) = self.spec.min_len {
            writeln!(f, "  len          > {t}")?;
        }
        if let Some(t) = self.spec.max_len {
            writeln!(f, "  len          < {t}")?;
        }
        if let Some(t) = self.spec.max_len_diff {
            writeln!(f, "  len_diff     < {t}")?;
        }
        let order = match self.spec.output_order {
            OutputOrder::Input => "input",
            OutputOrder::SimilarityAscending => "similarity_ascending",
        };
        writeln!(f, "order:    {order}")
    }
}

/// Applies `spec` to `corpus`. Fails with `MissingScore` before filtering
/// if any unflagged record lacks a score the spec needs.
pub fn apply_filters(corpus: Corpus, spec: &FilterSpec) -> Result<(Corpus, FilterReport)> {
    spec.validate()?;
    let required = spec.required_keys();
    if let Some((record_id, key)) = corpus.missing_scores(&required).next() {
        return Err(Error::MissingScore { record_id, key: key.to_owned() });
    }
    let causes: Vec<Option<String>> = corpus
        .records()
        .par_iter()
        .map(|rec| match &rec.flag {
            Some(flag) => Some(flag.clone()),
            None => spec.first_failure(rec).map(|c| c.cause().to_owned()),
        })
        .collect();

    let input_count = corpus.len();
    let mut rejected_by_cause = BTreeMap::new();
    let mut kept = Vec::new();
    for (rec, cause) in corpus.into_records().into_iter().zip(causes) {
        match cause {
            Some(c) => *rejected_by_cause.entry(c).or_insert(0) += 1,
            None => kept.push(rec),
        }
    }
    if spec.output_order == OutputOrder::SimilarityAscending {
        kept.sort_by(|a, b| {
            let sa = a.scores.get(keys::SIM).unwrap_or(f64::NEG_INFINITY);
            let sb = b.scores.get(keys::SIM).unwrap_or(f64::NEG_INFINITY);
            sa.total_cmp(&sb).then(a.pair.id.cmp(&b.pair.id))
        });
    }
    let report = FilterReport { input_count, kept_count: kept.len(), rejected_by_cause, spec: spec.clone() };
    Ok((Corpus::from_records(kept), report))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Preset {
    Paracrawl1m,
    Paracrawl3m,
    Paracrawl8m,
}

impl Preset {
    pub const ALL: [Preset; 3] = [Preset::Paracrawl1m, Preset::Paracrawl3m, Preset::Paracrawl8m];

    pub fn name(self) -> &'static str {
        match self {
            Preset::Paracrawl1m => "paracrawl_1m",
            Preset::Paracrawl3m => "paracrawl_3m",
            Preset::Paracrawl8m => "paracrawl_8m",
        }
    }

    pub fn spec(self) -> FilterSpec {
        let (bpc, sim, order) = match self {
            Preset::Paracrawl1m => (3.33, 0.91, OutputOrder::Input),
            Preset::Paracrawl3m => (3.25, 0.85, OutputOrder::SimilarityAscending),
            Preset::Paracrawl8m => (5.0, 0.5, OutputOrder::SimilarityAscending),
        };
        FilterSpec {
            require_langs: Some(LangRequirement {
                src_label: "en".into(),
                tgt_label: "uk".into(),
                min_conf: crate::langid::DEFAULT_MIN_CONF,
            }),
            max_bpc_sum: Some(bpc),
            min_similarity: Some(sim),
            max_len_diff: Some(50),
            min_len: None,
            max_len: None,
            output_order: order,
        }
    }
}

impl std::str::FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Preset::ALL.into_iter().find(|p| p.name() == s).ok_or_else(|| Error::UnknownPreset(s.to_owned()))
    }
}

pub fn preset(name: &str) -> Result<FilterSpec> {
    Ok(name.parse::<Preset>()?.spec())
}
