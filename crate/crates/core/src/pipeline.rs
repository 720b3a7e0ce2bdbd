//! End-to-end commands behind the CLI. Every command is a pure function of
//! its config and input files; outputs are written in record or id order so
//! they do not depend on the worker count.

use std::fs;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::charlm::{bpc_sum_annotate, CharNGramLM};
use crate::config::PipelineConfig;
use crate::corpus::{
    keys, read_corpus, read_scores_file, write_scores_file, write_tsv_file, Corpus, ReadReport, SidecarReport,
};
use crate::error::{Error, Result};
use crate::filter::{annotate_lengths, apply_filters, FilterReport};
use crate::kfold::{crossval_score, make_folds, sweep, SelectionSweep};
use crate::langid::{annotate_langs, LangIdentifier, LangProfile};
use crate::metrics::{chrf, corpus_bleu, BleuScore, ChrfConfig, ChrfScore, EvalPair};
use crate::oracle::{
    beam_width_sweep, oracle_select_with, read_nbest, references_from_lines, sweep_tsv, SentenceBleu, Strategy,
    WidthRow,
};
use crate::prompt::{
    build_fewshot, contextual_prompt, format_pair, select_demos, CharNgramCosine, Demonstration, PromptRecord,
};

fn write(path: &Path, body: impl AsRef<[u8]>) -> Result<PathBuf> {
    fs::write(path, body).map_err(|e| Error::io(path, e))?;
    Ok(path.to_owned())
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

/// Reads the configured corpus and merges every sidecar onto it.
pub fn load_corpus(cfg: &PipelineConfig) -> Result<(Corpus, ReadReport, Vec<SidecarReport>)> {
    let (mut corpus, read) = read_corpus(&cfg.corpus_input()?, cfg.parse_mode())?;
    let mut sidecars = Vec::new();
    for path in &cfg.sidecars {
        let (c, rep) = read_scores_file(corpus, path)?;
        corpus = c;
        sidecars.push(rep);
    }
    Ok((corpus, read, sidecars))
}

pub fn load_lm(path: &Path) -> Result<CharNGramLM> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    CharNGramLM::from_bytes(&bytes)
}

pub fn load_profile(path: &Path) -> Result<LangProfile> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    LangProfile::parse(&text)
}

#[derive(Debug)]
pub struct FilterOutcome {
    pub report: FilterReport,
    pub written: Vec<PathBuf>,
}

/// Annotates lengths, language margins and BPC (when models are configured),
/// merges sidecars, filters, and writes `kept.tsv`, `kept.scores.jsonl`,
/// `report.json` and `report.txt` to the output directory.
pub fn cmd_filter(cfg: &PipelineConfig) -> Result<FilterOutcome> {
    let spec = cfg.filter_spec()?;
    cfg.validate_paths()?;
    let out_dir = cfg.output_dir()?;
    let (corpus, _, _) = load_corpus(cfg)?;
    let mut corpus = annotate_lengths(corpus);

    if !cfg.lang_profiles.is_empty() {
        let req = spec
            .require_langs
            .as_ref()
            .ok_or_else(|| Error::Config("`lang_profiles` given but no language requirement".into()))?;
        let profiles = cfg.lang_profiles.iter().map(|p| load_profile(p)).collect::<Result<Vec<_>>>()?;
        corpus = annotate_langs(corpus, &LangIdentifier::new(profiles)?, &req.src_label, &req.tgt_label)?;
    }
    match (&cfg.src_lm, &cfg.tgt_lm) {
        (Some(s), Some(t)) => corpus = bpc_sum_annotate(corpus, &load_lm(s)?, &load_lm(t)?)?.0,
        (None, None) => {}
        _ => return Err(Error::Config("`src_lm` and `tgt_lm` must be set together".into())),
    }

    let (kept, report) = apply_filters(corpus, &spec)?;
    create_dir(out_dir)?;
    let mut written = Vec::new();
    let tsv = out_dir.join("kept.tsv");
    write_tsv_file(&kept, &tsv)?;
    written.push(tsv);
    let score_keys = kept.common_score_keys();
    let key_refs: Vec<&str> = score_keys.iter().map(String::as_str).collect();
    let scores = out_dir.join("kept.scores.jsonl");
    write_scores_file(&kept, &key_refs, &scores)?;
    written.push(scores);
    written.push(write(&out_dir.join("report.json"), report.to_json() + "\n")?);
    written.push(write(&out_dir.join("report.txt"), report.to_string())?);
    Ok(FilterOutcome { report, written })
}

#[derive(Debug)]
pub struct SelectOutcome {
    pub sweep: SelectionSweep,
    /// Whether fold models were trained (false when logprobs came from a sidecar).
    pub trained: bool,
    pub written: Vec<PathBuf>,
}

/// Folds, scores (unless every record already has `logprob`), sweeps, and
/// writes `folds.tsv`, `logprob.jsonl` and the sweep manifests.
pub fn cmd_select(cfg: &PipelineConfig) -> Result<SelectOutcome> {
    cfg.validate_paths()?;
    let out_dir = cfg.output_dir()?;
    let opts = cfg.crossval_options()?;
    let (corpus, _, _) = load_corpus(cfg)?;
    let plan = make_folds(&corpus, cfg.k(), cfg.seed())?;
    let has_all = corpus.missing_scores(&[keys::LOGPROB]).next().is_none() && !corpus.is_empty();
    let corpus = if has_all { corpus } else { crossval_score(corpus, &plan, &opts)?.0 };
    let result = sweep(&corpus, &plan, &cfg.percentiles(), cfg.select_mode(), cfg.include_two_sigma())?;

    create_dir(out_dir)?;
    let mut written = result.write_dir(out_dir)?;
    let folds: String = corpus.ids().map(|id| format!("{id}\t{}\n", plan.fold_of(id).expect("planned"))).collect();
    written.push(write(&out_dir.join("folds.tsv"), folds)?);
    let lp = out_dir.join("logprob.jsonl");
    write_scores_file(&corpus, &[keys::LOGPROB], &lp)?;
    written.push(lp);
    Ok(SelectOutcome { sweep: result, trained: !has_all, written })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Metric {
    Bleu,
    Chrf,
    ChrfPlusPlus,
}

impl std::str::FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "bleu" => Ok(Metric::Bleu),
            "chrf" => Ok(Metric::Chrf),
            "chrf++" | "chrfpp" => Ok(Metric::ChrfPlusPlus),
            _ => Err(Error::Config(format!("unknown metric `{s}`"))),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct EvalReport {
    pub sentences: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bleu: Option<BleuScore>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub chrf: Option<ChrfScore>,
    #[serde(rename = "chrf++", skip_serializing_if = "Option::is_none")]
    pub chrf_pp: Option<ChrfScore>,
}

impl EvalReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serialises")
    }
}

impl std::fmt::Display for EvalReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        if let Some(b) = &self.bleu {
            writeln!(f, "{b}")?;
        }
        if let Some(c) = &self.chrf {
            writeln!(f, "{c}")?;
        }
        if let Some(c) = &self.chrf_pp {
            writeln!(f, "{c}")?;
        }
        Ok(())
    }
}

/// Lines of a UTF-8 text file without their terminators.
pub fn read_lines(path: &Path) -> Result<Vec<String>> {
    let f = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    BufReader::new(f).lines().map(|l| l.map_err(|e| Error::io(path, e))).collect()
}

pub fn evaluate(pairs: &[EvalPair], metrics: &[Metric]) -> Result<EvalReport> {
    let mut report = EvalReport { sentences: pairs.len(), ..Default::default() };
    for m in metrics {
        match m {
            Metric::Bleu => report.bleu = Some(corpus_bleu(pairs)?),
            Metric::Chrf => report.chrf = Some(chrf(pairs, ChrfConfig::CHRF)?),
            Metric::ChrfPlusPlus => report.chrf_pp = Some(chrf(pairs, ChrfConfig::CHRF_PLUS_PLUS)?),
        }
    }
    Ok(report)
}

pub fn cmd_eval(hyp: &Path, refs: &[PathBuf], metrics: &[Metric]) -> Result<EvalReport> {
    let hyps = read_lines(hyp)?;
    let streams = refs.iter().map(|r| read_lines(r)).collect::<Result<Vec<_>>>()?;
    evaluate(&EvalPair::zip_streams(hyps, streams)?, metrics)
}

#[derive(Debug)]
pub struct OracleOutcome {
    pub rows: Vec<WidthRow>,
    pub tsv: String,
    /// Per-id choices at the widest width, one JSON object per line.
    pub manifest: String,
}

/// Reference line `i` belongs to n-best id `i`.
pub fn cmd_oracle(nbest: &Path, reference: &Path, widths: &[usize], strategy: Strategy) -> Result<OracleOutcome> {
    let lists = read_nbest(nbest)?;
    let refs = references_from_lines(read_lines(reference)?);
    let rows = beam_width_sweep(&lists, &refs, widths, &SentenceBleu, strategy)?;
    let widest = widths.iter().copied().max().ok_or(Error::InvalidWidth)?;
    let full = oracle_select_with(&lists, &refs, &SentenceBleu, widest, strategy)?;
    let manifest = full.choices.iter().map(|c| serde_json::to_string(c).expect("choice serialises") + "\n").collect();
    Ok(OracleOutcome { tsv: sweep_tsv(&rows), rows, manifest })
}

#[derive(Clone, Debug, PartialEq)]
pub enum PromptMode {
    /// Training strings with loss masks.
    Train,
    /// `n` similarity-selected demonstrations from a pool.
    FewShot { pool: Vec<Demonstration>, n: usize },
    /// The preceding `window` records of the same corpus as context.
    Contextual { window: usize },
}

/// One prompt record per corpus record, in corpus order. Inference prompts
/// are masked in full.
pub fn build_prompts(corpus: &Corpus, mode: &PromptMode) -> Result<Vec<PromptRecord>> {
    let full_mask = |prompt: String, id| {
        let n = prompt.chars().count();
        PromptRecord { id, prompt, mask_spans: vec![(0, n)] }
    };
    let mut out = Vec::with_capacity(corpus.len());
    let pairs: Vec<_> = corpus.pairs().collect();
    for (i, p) in pairs.iter().enumerate() {
        out.push(match mode {
            PromptMode::Train => {
                let ex = format_pair(&p.source, &p.target)?;
                PromptRecord { id: p.id, prompt: ex.text, mask_spans: ex.mask_spans }
            }
            PromptMode::FewShot { pool, n } => {
                let demos = select_demos(pool, &p.source, *n, &CharNgramCosine::default())?;
                full_mask(build_fewshot(&demos, &p.source)?, p.id)
            }
            PromptMode::Contextual { window } => {
                let history: Vec<(&str, &str)> =
                    pairs[..i].iter().map(|q| (q.source.as_str(), q.target.as_str())).collect();
                full_mask(contextual_prompt(&history, *window, &p.source)?, p.id)
            }
        });
    }
    Ok(out)
}

pub fn prompts_jsonl(records: &[PromptRecord]) -> String {
    records.iter().map(|r| serde_json::to_string(r).expect("record serialises") + "\n").collect()
}
