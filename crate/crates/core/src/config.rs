//! Flat TOML run configuration shared by the pipeline commands.
//!
//! ```toml
//! corpus = "data/paracrawl.tsv"
//! sidecars = ["data/sim.jsonl"]
//! output_dir = "out/filter"
//! preset = "paracrawl_1m"
//! lang_profiles = ["models/en.prof", "models/uk.prof"]
//! src_lm = "models/en.clm"
//! tgt_lm = "models/uk.clm"
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::charlm::{LmConfig, Smoothing};
use crate::corpus::{CorpusInput, ParseMode};
use crate::error::{Error, Result};
use crate::filter::{preset, FilterSpec, FlatFilterSpec, OutputOrder};
use crate::kfold::{CrossvalOptions, ScoreSide, SelectMode, DEFAULT_K, DEFAULT_PERCENTILES, DEFAULT_SEED};

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    /// TSV corpus. Mutually exclusive with `source`/`target`.
    pub corpus: Option<PathBuf>,
    pub source: Option<PathBuf>,
    pub target: Option<PathBuf>,
    #[serde(default)]
    pub sidecars: Vec<PathBuf>,
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub lenient: bool,
    pub seed: Option<u64>,

    pub preset: Option<String>,
    pub src_lang: Option<String>,
    pub tgt_lang: Option<String>,
    pub min_lang_conf: Option<f64>,
    pub max_bpc_sum: Option<f64>,
    pub min_similarity: Option<f64>,
    pub max_len_diff: Option<u64>,
    pub min_len: Option<u64>,
    pub max_len: Option<u64>,
    pub output_order: Option<OutputOrder>,
    #[serde(default)]
    pub lang_profiles: Vec<PathBuf>,
    pub src_lm: Option<PathBuf>,
    pub tgt_lm: Option<PathBuf>,

    pub k: Option<usize>,
    pub lm_order: Option<usize>,
    pub lm_smoothing: Option<String>,
    pub percentiles: Option<Vec<f64>>,
    pub mode: Option<SelectMode>,
    pub two_sigma: Option<bool>,
    pub side: Option<ScoreSide>,
    #[serde(default)]
    pub per_char: bool,
}

impl PipelineConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serialises")
    }

    pub fn parse_mode(&self) -> ParseMode {
        if self.lenient {
            ParseMode::Lenient
        } else {
            ParseMode::Strict
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed.unwrap_or(DEFAULT_SEED)
    }

    pub fn corpus_input(&self) -> Result<CorpusInput> {
        match (&self.corpus, &self.source, &self.target) {
            (Some(p), None, None) => Ok(CorpusInput::Tsv(p.clone())),
            (None, Some(s), Some(t)) => Ok(CorpusInput::MosesPair { source: s.clone(), target: t.clone() }),
            _ => Err(Error::Config("set either `corpus` or both `source` and `target`".into())),
        }
    }

    pub fn output_dir(&self) -> Result<&Path> {
        self.output_dir.as_deref().ok_or_else(|| Error::Config("`output_dir` is required".into()))
    }

    fn has_inline_spec(&self) -> bool {
        self.src_lang.is_some()
            || self.tgt_lang.is_some()
            || self.min_lang_conf.is_some()
            || self.max_bpc_sum.is_some()
            || self.min_similarity.is_some()
            || self.max_len_diff.is_some()
            || self.min_len.is_some()
            || self.max_len.is_some()
    }

    /// The filter spec from exactly one of `preset` or inline thresholds.
    /// `output_order` may override a preset's order.
    pub fn filter_spec(&self) -> Result<FilterSpec> {
        let mut spec = match (&self.preset, self.has_inline_spec()) {
            (Some(_), true) => return Err(Error::Config("set either `preset` or inline thresholds, not both".into())),
            (Some(name), false) => preset(name)?,
            (None, _) => FlatFilterSpec {
                src_lang: self.src_lang.clone(),
                tgt_lang: self.tgt_lang.clone(),
                min_lang_conf: self.min_lang_conf,
                max_bpc_sum: self.max_bpc_sum,
                min_similarity: self.min_similarity,
                max_len_diff: self.max_len_diff,
                min_len: self.min_len,
                max_len: self.max_len,
                output_order: OutputOrder::default(),
            }
            .into_spec()?,
        };
        if let Some(order) = self.output_order {
            spec.output_order = order;
        }
        spec.validate()?;
        Ok(spec)
    }

    pub fn lm_config(&self) -> Result<LmConfig> {
        let mut cfg = LmConfig::default();
        if let Some(order) = self.lm_order {
            cfg.order = order;
        }
        if let Some(s) = &self.lm_smoothing {
            cfg.smoothing = s.parse::<Smoothing>()?;
        }
        Ok(cfg)
    }

    pub fn crossval_options(&self) -> Result<CrossvalOptions> {
        Ok(CrossvalOptions { side: self.side.unwrap_or_default(), lm: self.lm_config()?, per_char: self.per_char })
    }

    pub fn k(&self) -> usize {
        self.k.unwrap_or(DEFAULT_K)
    }

    pub fn percentiles(&self) -> Vec<f64> {
        self.percentiles.clone().unwrap_or_else(|| DEFAULT_PERCENTILES.to_vec())
    }

    pub fn select_mode(&self) -> SelectMode {
        self.mode.unwrap_or_default()
    }

    pub fn include_two_sigma(&self) -> bool {
        self.two_sigma.unwrap_or(true)
    }

    /// Checks that every referenced input exists.
    pub fn validate_paths(&self) -> Result<()> {
        let inputs = [&self.corpus, &self.source, &self.target, &self.src_lm, &self.tgt_lm]
            .into_iter()
            .flatten()
            .chain(&self.sidecars)
            .chain(&self.lang_profiles);
        for p in inputs {
            if !p.exists() {
                return Err(Error::Config(format!("input `{}` does not exist", p.display())));
            }
        }
        Ok(())
    }
}
