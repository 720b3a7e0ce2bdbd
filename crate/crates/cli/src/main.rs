use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use dragoman::charlm::{CharNGramLM, LmConfig, Smoothing};
use dragoman::config::PipelineConfig;
use dragoman::corpus::read_corpus;
use dragoman::corpus::CorpusInput;
use dragoman::filter::OutputOrder;
use dragoman::kfold::{ScoreSide, SelectMode};
use dragoman::langid::{LangIdentifier, LangProfile};
use dragoman::oracle::Strategy;
use dragoman::pipeline::{self, Metric, PromptMode};
use dragoman::prompt::Demonstration;
use dragoman::{Error, Result, FORMAT_VERSIONS};

#[derive(Parser)]
#[command(name = "dragoman", version, about = "Parallel corpus cleaning and MT evaluation")]
struct Cli {
    /// Worker threads for record-parallel stages.
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Seed for every random choice (fold assignment).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Abort on the first malformed corpus line.
    #[arg(long, global = true, conflicts_with = "lenient")]
    strict: bool,
    /// Skip and count malformed corpus lines.
    #[arg(long, global = true)]
    lenient: bool,
    /// Flat TOML run configuration; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Heuristic filtering with a preset or inline thresholds.
    Filter(FilterArgs),
    /// Cross-validated perplexity selection sweep.
    Select(SelectArgs),
    /// Corpus BLEU, chrF and chrF++.
    Eval(EvalArgs),
    /// Oracle BLEU over n-best lists per beam width.
    Oracle(OracleArgs),
    /// Training strings or few-shot prompts as JSON lines.
    Prompt(PromptArgs),
    /// Character language models.
    #[command(subcommand)]
    Lm(LmCmd),
    /// Language identification profiles.
    #[command(subcommand)]
    Langid(LangidCmd),
    /// Print persisted format versions.
    Version,
}

#[derive(Args, Default)]
struct InputArgs {
    /// TSV corpus (`id<TAB>source<TAB>target`).
    #[arg(long)]
    corpus: Option<PathBuf>,
    /// Source side of a line-aligned file pair.
    #[arg(long, requires = "target")]
    source: Option<PathBuf>,
    #[arg(long, requires = "source")]
    target: Option<PathBuf>,
    /// Score sidecar (JSON lines); repeatable.
    #[arg(long = "sidecar")]
    sidecars: Vec<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct FilterArgs {
    #[command(flatten)]
    input: InputArgs,
    #[arg(long)]
    preset: Option<String>,
    #[arg(long)]
    max_bpc_sum: Option<f64>,
    #[arg(long)]
    min_similarity: Option<f64>,
    #[arg(long)]
    max_len_diff: Option<u64>,
    #[arg(long)]
    min_len: Option<u64>,
    #[arg(long)]
    max_len: Option<u64>,
    #[arg(long, value_enum)]
    order: Option<OrderArg>,
    /// Language profiles for computing language margins inline.
    #[arg(long = "lang-profile")]
    lang_profiles: Vec<PathBuf>,
    #[arg(long)]
    src_lm: Option<PathBuf>,
    #[arg(long)]
    tgt_lm: Option<PathBuf>,
    /// Print the report as JSON instead of text.
    #[arg(long)]
    json: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum OrderArg {
    Input,
    SimilarityAscending,
}

#[derive(Args)]
struct SelectArgs {
    #[command(flatten)]
    input: InputArgs,
    #[arg(long)]
    k: Option<usize>,
    /// Comma-separated percentiles.
    #[arg(long, value_delimiter = ',')]
    percentiles: Option<Vec<f64>>,
    #[arg(long, value_enum)]
    mode: Option<ModeArg>,
    #[arg(long)]
    no_two_sigma: bool,
    #[arg(long, value_enum)]
    side: Option<SideArg>,
    #[arg(long)]
    lm_order: Option<usize>,
    /// `witten_bell`, `add_k` or `add_k:<k>`.
    #[arg(long)]
    lm_smoothing: Option<String>,
    /// Store per-character instead of total log probability.
    #[arg(long)]
    per_char: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    PerFold,
    Global,
}

#[derive(Clone, Copy, ValueEnum)]
enum SideArg {
    Source,
    Target,
    Concatenated,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    hyp: PathBuf,
    /// Reference file; repeat for multiple references.
    #[arg(long = "ref", required = true)]
    refs: Vec<PathBuf>,
    /// Comma-separated: bleu, chrf, chrf++.
    #[arg(long, value_delimiter = ',', default_value = "bleu,chrf,chrf++")]
    metrics: Vec<String>,
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct OracleArgs {
    #[arg(long)]
    nbest: PathBuf,
    #[arg(long = "ref")]
    reference: PathBuf,
    #[arg(long, value_delimiter = ',', required = true)]
    widths: Vec<usize>,
    #[arg(long, value_enum, default_value = "sentence")]
    strategy: StrategyArg,
    /// Directory for `oracle.tsv` and `choices.jsonl`; stdout otherwise.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum StrategyArg {
    Sentence,
    CorpusAscent,
}

#[derive(Args)]
struct PromptArgs {
    /// TSV corpus of queries (sources) and, for training, targets.
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long, value_enum, default_value = "train")]
    mode: PromptModeArg,
    /// TSV corpus of demonstrations for `fewshot`.
    #[arg(long)]
    pool: Option<PathBuf>,
    #[arg(long, default_value_t = 2)]
    shots: usize,
    #[arg(long, default_value_t = 2)]
    window: usize,
    /// Print prompts as plain text separated by blank lines.
    #[arg(long)]
    text: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum PromptModeArg {
    Train,
    Fewshot,
    Contextual,
}

#[derive(Subcommand)]
enum LmCmd {
    /// Train on a text file, one segment per line.
    Train {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, default_value_t = 5)]
        order: usize,
        #[arg(long, default_value = "witten_bell")]
        smoothing: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Print `bpc<TAB>log2prob` per input line.
    Score {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        input: PathBuf,
    },
}

#[derive(Subcommand)]
enum LangidCmd {
    /// Build a profile from a text file, one segment per line.
    Train {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        lang: String,
        #[arg(long, default_value_t = dragoman::langid::DEFAULT_ORDER)]
        order: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Print one JSON classification per input line.
    Classify {
        #[arg(long = "profile", required = true)]
        profiles: Vec<PathBuf>,
        #[arg(long)]
        input: PathBuf,
    },
}

fn base_config(cli: &Cli) -> Result<PipelineConfig> {
    let mut cfg = match &cli.config {
        Some(p) => PipelineConfig::load(p)?,
        None => PipelineConfig::default(),
    };
    if cli.seed.is_some() {
        cfg.seed = cli.seed;
    }
    if cli.strict {
        cfg.lenient = false;
    }
    if cli.lenient {
        cfg.lenient = true;
    }
    Ok(cfg)
}

fn apply_input(cfg: &mut PipelineConfig, input: &InputArgs) {
    if input.corpus.is_some() {
        cfg.corpus = input.corpus.clone();
        cfg.source = None;
        cfg.target = None;
    }
    if input.source.is_some() {
        cfg.source = input.source.clone();
        cfg.target = input.target.clone();
        cfg.corpus = None;
    }
    cfg.sidecars.extend(input.sidecars.iter().cloned());
    if input.out.is_some() {
        cfg.output_dir = input.out.clone();
    }
}

fn set<T: Clone>(slot: &mut Option<T>, v: &Option<T>) {
    if v.is_some() {
        *slot = v.clone();
    }
}

fn stdout_write(s: &str) -> Result<()> {
    let mut out = io::stdout().lock();
    out.write_all(s.as_bytes())?;
    out.flush()?;
    Ok(())
}

fn write_file(path: &Path, body: &str) -> Result<()> {
    fs::write(path, body).map_err(|e| Error::Io { path: path.to_owned(), source: e })
}

fn read_lines(path: &Path) -> Result<Vec<String>> {
    pipeline::read_lines(path)
}

fn run(cli: &Cli) -> Result<()> {
    match &cli.cmd {
        Cmd::Filter(a) => {
            let mut cfg = base_config(cli)?;
            apply_input(&mut cfg, &a.input);
            set(&mut cfg.preset, &a.preset);
            set(&mut cfg.max_bpc_sum, &a.max_bpc_sum);
            set(&mut cfg.min_similarity, &a.min_similarity);
            set(&mut cfg.max_len_diff, &a.max_len_diff);
            set(&mut cfg.min_len, &a.min_len);
            set(&mut cfg.max_len, &a.max_len);
            set(&mut cfg.src_lm, &a.src_lm);
            set(&mut cfg.tgt_lm, &a.tgt_lm);
            if let Some(o) = a.order {
                cfg.output_order = Some(match o {
                    OrderArg::Input => OutputOrder::Input,
                    OrderArg::SimilarityAscending => OutputOrder::SimilarityAscending,
                });
            }
            cfg.lang_profiles.extend(a.lang_profiles.iter().cloned());
            let outcome = pipeline::cmd_filter(&cfg)?;
            if a.json {
                stdout_write(&(outcome.report.to_json() + "\n"))
            } else {
                stdout_write(&outcome.report.to_string())
            }
        }
        Cmd::Select(a) => {
            let mut cfg = base_config(cli)?;
            apply_input(&mut cfg, &a.input);
            set(&mut cfg.k, &a.k);
            set(&mut cfg.percentiles, &a.percentiles);
            set(&mut cfg.lm_order, &a.lm_order);
            set(&mut cfg.lm_smoothing, &a.lm_smoothing);
            if let Some(m) = a.mode {
                cfg.mode = Some(match m {
                    ModeArg::PerFold => SelectMode::PerFold,
                    ModeArg::Global => SelectMode::Global,
                });
            }
            if let Some(s) = a.side {
                cfg.side = Some(match s {
                    SideArg::Source => ScoreSide::Source,
                    SideArg::Target => ScoreSide::Target,
                    SideArg::Concatenated => ScoreSide::Concatenated,
                });
            }
            if a.no_two_sigma {
                cfg.two_sigma = Some(false);
            }
            cfg.per_char |= a.per_char;
            let outcome = pipeline::cmd_select(&cfg)?;
            stdout_write(&outcome.sweep.to_tsv())
        }
        Cmd::Eval(a) => {
            let metrics = a.metrics.iter().map(|m| m.parse::<Metric>()).collect::<Result<Vec<_>>>()?;
            let report = pipeline::cmd_eval(&a.hyp, &a.refs, &metrics)?;
            if a.json {
                stdout_write(&(report.to_json() + "\n"))
            } else {
                stdout_write(&report.to_string())
            }
        }
        Cmd::Oracle(a) => {
            let strategy = match a.strategy {
                StrategyArg::Sentence => Strategy::Sentence,
                StrategyArg::CorpusAscent => Strategy::CorpusAscent,
            };
            let outcome = pipeline::cmd_oracle(&a.nbest, &a.reference, &a.widths, strategy)?;
            match &a.out {
                Some(dir) => {
                    fs::create_dir_all(dir).map_err(|e| Error::Io { path: dir.clone(), source: e })?;
                    write_file(&dir.join("oracle.tsv"), &outcome.tsv)?;
                    write_file(&dir.join("choices.jsonl"), &outcome.manifest)?;
                    stdout_write(&outcome.tsv)
                }
                None => stdout_write(&outcome.tsv),
            }
        }
        Cmd::Prompt(a) => {
            let mode_parse = base_config(cli)?.parse_mode();
            let (corpus, _) = read_corpus(&CorpusInput::Tsv(a.corpus.clone()), mode_parse)?;
            let mode = match a.mode {
                PromptModeArg::Train => PromptMode::Train,
                PromptModeArg::Contextual => PromptMode::Contextual { window: a.window },
                PromptModeArg::Fewshot => {
                    let pool_path =
                        a.pool.as_ref().ok_or_else(|| Error::Config("`--pool` is required for fewshot".into()))?;
                    let (pool, _) = read_corpus(&CorpusInput::Tsv(pool_path.clone()), mode_parse)?;
                    PromptMode::FewShot { pool: Demonstration::pool_from_corpus(&pool), n: a.shots }
                }
            };
            let records = pipeline::build_prompts(&corpus, &mode)?;
            if a.text {
                let body: String = records.iter().map(|r| format!("{}\n\n", r.prompt)).collect();
                stdout_write(&body)
            } else {
                stdout_write(&pipeline::prompts_jsonl(&records))
            }
        }
        Cmd::Lm(LmCmd::Train { input, order, smoothing, out }) => {
            let lines = read_lines(input)?;
            let texts: Vec<&String> = lines.iter().filter(|l| !l.trim().is_empty()).collect();
            let cfg = LmConfig { order: *order, smoothing: smoothing.parse::<Smoothing>()? };
            let model = CharNGramLM::train(&texts, cfg)?;
            fs::write(out, model.to_bytes()).map_err(|e| Error::Io { path: out.clone(), source: e })?;
            Ok(())
        }
        Cmd::Lm(LmCmd::Score { model, input }) => {
            let model = pipeline::load_lm(model)?;
            let mut body = String::new();
            for line in read_lines(input)? {
                let lp = model.log_prob(&line)?;
                body.push_str(&format!("{}\t{}\n", -lp / line.chars().count() as f64, lp));
            }
            stdout_write(&body)
        }
        Cmd::Langid(LangidCmd::Train { input, lang, order, out }) => {
            let lines = read_lines(input)?;
            let profile = LangProfile::train(&lines, lang, *order)?;
            write_file(out, &profile.to_text())
        }
        Cmd::Langid(LangidCmd::Classify { profiles, input }) => {
            let profiles = profiles.iter().map(|p| pipeline::load_profile(p)).collect::<Result<Vec<_>>>()?;
            let ident = LangIdentifier::new(profiles)?;
            let mut body = String::new();
            for (i, line) in read_lines(input)?.iter().enumerate() {
                let c = ident.classify(line)?;
                let row = serde_json::json!({ "line": i + 1, "label": c.label, "confidence": c.confidence });
                body.push_str(&format!("{row}\n"));
            }
            stdout_write(&body)
        }
        Cmd::Version => {
            let mut body = format!("dragoman {}\n", env!("CARGO_PKG_VERSION"));
            for (name, v) in FORMAT_VERSIONS {
                body.push_str(&format!("{name}\t{v}\n"));
            }
            stdout_write(&body)
        }
    }
}

fn report_error(kind: &str, message: &str) {
    let err = serde_json::json!({ "error": kind, "message": message });
    eprintln!("{err}");
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => e.exit(),
        Err(e) => {
            report_error("usage", e.to_string().trim_end());
            return ExitCode::from(2);
        }
    };
    let result = match cli.workers {
        Some(n) => match rayon::ThreadPoolBuilder::new().num_threads(n).build() {
            Ok(pool) => pool.install(|| run(&cli)),
            Err(e) => Err(Error::Config(format!("cannot start {n} workers: {e}"))),
        },
        None => run(&cli),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            report_error(e.kind(), &e.to_string());
            ExitCode::FAILURE
        }
    }
}
