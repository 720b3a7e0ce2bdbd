//! Character n-gram language identification.
//!
//! A profile holds add-one smoothed log relative frequencies of the
//! character n-grams seen in training. N-grams never seen get half the
//! smallest observed probability, which for the usual case of a singleton
//! n-gram is exactly the add-one mass `1 / (N + V)`. Classification averages
//! per-n-gram log probabilities, so scores are comparable across text
//! lengths. Label probabilities are the posterior under a uniform prior,
//! i.e. the softmax of the summed log-likelihoods, and the confidence is the
//! gap between the two most probable labels.
//!
//! Texts are lowercased, right-trimmed and cut to their first
//! [`MAX_CLASSIFY_CHARS`] characters before n-gram extraction.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::io::Write;

use rayon::prelude::*;
use serde::Serialize;

use crate::corpus::{keys, Corpus, Record};
use crate::error::{Error, Result};

pub const PROFILE_VERSION: &str = "v1";
pub const DEFAULT_ORDER: usize = 3;
pub const DEFAULT_MIN_CONF: f64 = 0.5;
pub const MAX_CLASSIFY_CHARS: usize = 1000;

pub const CAUSE_EMPTY: &str = "empty";
pub const CAUSE_SOURCE_LANG: &str = "source_lang";
pub const CAUSE_TARGET_LANG: &str = "target_lang";

#[derive(Clone, Debug, PartialEq)]
pub struct LangProfile {
    language: String,
    order: usize,
    log_freqs: HashMap<String, f64>,
    alphabet_size: usize,
    unseen_log_freq: f64,
}

fn prepare(text: &str, limit: Option<usize>) -> Vec<char> {
    let trimmed = text.trim_end();
    let chars = trimmed.chars().flat_map(char::to_lowercase);
    match limit {
        Some(n) => chars.take(n).collect(),
        None => chars.collect(),
    }
}

fn check_label(language: &str) -> Result<()> {
    if language.is_empty() || language.chars().any(char::is_whitespace) {
        return Err(Error::Config(format!("invalid language label `{language}`")));
    }
    Ok(())
}

impl LangProfile {
    pub fn train<S: AsRef<str>>(texts: &[S], language: &str, order: usize) -> Result<Self> {
        check_label(language)?;
        if order == 0 {
            return Err(Error::InvalidOrder(order));
        }
        let mut counts: HashMap<String, u64> = HashMap::new();
        for text in texts {
            let chars = prepare(text.as_ref(), None);
            for window in chars.windows(order) {
                *counts.entry(window.iter().collect()).or_insert(0) += 1;
            }
        }
        if counts.is_empty() {
            return Err(Error::EmptyTrainingSet);
        }
        let total: u64 = counts.values().sum();
        let denom = (total + counts.len() as u64) as f64;
        let log_freqs = counts.into_iter().map(|(g, c)| (g, ((c + 1) as f64 / denom).ln())).collect();
        Self::from_log_freqs(language.to_owned(), order, log_freqs)
    }

    fn from_log_freqs(language: String, order: usize, log_freqs: HashMap<String, f64>) -> Result<Self> {
        let min = log_freqs.values().copied().fold(f64::INFINITY, f64::min);
        if !min.is_finite() {
            return Err(Error::EmptyTrainingSet);
        }
        let mut alphabet: Vec<char> = log_freqs.keys().flat_map(|g| g.chars()).collect();
        alphabet.sort_unstable();
        alphabet.dedup();
        Ok(LangProfile {
            language,
            order,
            alphabet_size: alphabet.len(),
            unseen_log_freq: min - std::f64::consts::LN_2,
            log_freqs,
        })
    }

    pub fn language(&self) -> &str {
        &self.language
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn alphabet_size(&self) -> usize {
        self.alphabet_size
    }

    pub fn len(&self) -> usize {
        self.log_freqs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.log_freqs.is_empty()
    }

    /// Log relative frequency of an n-gram, or the unseen floor.
    pub fn log_freq(&self, ngram: &str) -> f64 {
        self.log_freqs.get(ngram).copied().unwrap_or(self.unseen_log_freq)
    }

    pub fn unseen_log_freq(&self) -> f64 {
        self.unseen_log_freq
    }

    /// Mean natural-log probability per n-gram of an already prepared text.
    fn score_chars(&self, chars: &[char]) -> f64 {
        if chars.len() < self.order {
            let gram: String = chars.iter().collect();
            return self.log_freq(&gram);
        }
        let mut gram = String::new();
        let mut sum = 0.0;
        let windows = chars.windows(self.order);
        let n = windows.len();
        for w in windows {
            gram.clear();
            gram.extend(w);
            sum += self.log_freq(&gram);
        }
        sum / n as f64
    }

    pub fn write_to<W: Write>(&self, mut out: W) -> Result<()> {
        out.write_all(self.to_text().as_bytes())?;
        out.flush()?;
        Ok(())
    }

    /// Renders the `LANGPROFILE v1` text form, n-grams sorted.
    pub fn to_text(&self) -> String {
        let mut s = format!("LANGPROFILE {PROFILE_VERSION} {} {}\n", self.language, self.order);
        let mut entries: Vec<(&String, &f64)> = self.log_freqs.iter().collect();
        entries.sort_by(|a, b| a.0.cmp(b.0));
        for (gram, lf) in entries {
            let _ = writeln!(s, "{}\t{lf}", escape(gram));
        }
        s
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        let header = lines.next().ok_or_else(|| bad_profile(1, "missing header"))?;
        let parts: Vec<&str> = header.split(' ').collect();
        if parts.len() != 4 || parts[0] != "LANGPROFILE" {
            return Err(bad_profile(1, "bad header"));
        }
        if parts[1] != PROFILE_VERSION {
            return Err(bad_profile(1, &format!("unsupported version `{}`", parts[1])));
        }
        let language = parts[2];
        check_label(language).map_err(|_| bad_profile(1, "bad label"))?;
        let order: usize = parts[3].parse().map_err(|_| bad_profile(1, "bad order"))?;
        if order == 0 {
            return Err(bad_profile(1, "order must be positive"));
        }
        let mut log_freqs = HashMap::new();
        for (i, line) in lines.enumerate() {
            let line_no = i + 2;
            let (gram, value) = line.split_once('\t').ok_or_else(|| bad_profile(line_no, "missing tab"))?;
            let gram = unescape(gram).ok_or_else(|| bad_profile(line_no, "bad escape"))?;
            if gram.chars().count() != order {
                return Err(bad_profile(line_no, "n-gram length differs from order"));
            }
            let lf: f64 = value.parse().map_err(|_| bad_profile(line_no, "bad number"))?;
            if !lf.is_finite() || lf > 0.0 {
                return Err(bad_profile(line_no, "log frequency must be finite and non-positive"));
            }
            if log_freqs.insert(gram, lf).is_some() {
                return Err(bad_profile(line_no, "duplicate n-gram"));
            }
        }
        if log_freqs.is_empty() {
            return Err(bad_profile(1, "no n-grams"));
        }
        let mass: f64 = log_freqs.values().map(|lf| lf.exp()).sum();
        if (mass - 1.0).abs() > 1e-6 {
            return Err(bad_profile(1, "frequencies do not sum to one"));
        }
        Self::from_log_freqs(language.to_owned(), order, log_freqs)
    }
}

fn bad_profile(line: usize, reason: &str) -> Error {
    Error::BadModel(format!("language profile line {line}: {reason}"))
}

fn escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '\\' => out.push_str("\\\\"),
            '\t' => out.push_str("\\t"),
            '\n' => out.push_str("\\n"),
            '\r' => out.push_str("\\r"),
            _ => out.push(c),
        }
    }
    out
}

fn unescape(s: &str) -> Option<String> {
    let mut out = String::with_capacity(s.len());
    let mut chars = s.chars();
    while let Some(c) = chars.next() {
        if c != '\\' {
            out.push(c);
            continue;
        }
        out.push(match chars.next()? {
            '\\' => '\\',
            't' => '\t',
            'n' => '\n',
            'r' => '\r',
            _ => return None,
        });
    }
    Some(out)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Classification {
    pub label: String,
    /// Softmax gap between the best and second-best label, in `[0, 1]`.
    pub confidence: f64,
    /// Length-normalised log-likelihood per label, in profile order.
    pub scores: Vec<(String, f64)>,
    /// Posterior per label: softmax of the summed log-likelihoods.
    pub probs: Vec<(String, f64)>,
}

impl Classification {
    /// Probability of `label` minus the best competing probability. Positive
    /// exactly when `label` wins outright.
    pub fn margin(&self, label: &str) -> Option<f64> {
        let own = self.probs.iter().find(|(l, _)| l == label)?.1;
        let best_other = self.probs.iter().filter(|(l, _)| l != label).map(|(_, p)| *p).fold(0.0, f64::max);
        Some(own - best_other)
    }
}

/// An immutable set of profiles with distinct labels.
#[derive(Clone, Debug)]
pub struct LangIdentifier {
    profiles: Vec<LangProfile>,
}

impl LangIdentifier {
    pub fn new(profiles: Vec<LangProfile>) -> Result<Self> {
        if profiles.len() < 2 {
            return Err(Error::TooFewProfiles(profiles.len()));
        }
        for (i, p) in profiles.iter().enumerate() {
            if profiles[..i].iter().any(|q| q.language == p.language) {
                return Err(Error::Config(format!("duplicate profile for `{}`", p.language)));
            }
        }
        Ok(LangIdentifier { profiles })
    }

    pub fn profiles(&self) -> &[LangProfile] {
        &self.profiles
    }

    pub fn has_label(&self, label: &str) -> bool {
        self.profiles.iter().any(|p| p.language == label)
    }

    pub fn classify(&self, text: &str) -> Result<Classification> {
        let chars = prepare(text, Some(MAX_CLASSIFY_CHARS));
        if chars.iter().all(|c| c.is_whitespace()) {
            return Err(Error::EmptyText);
        }
        let scores: Vec<(String, f64)> =
            self.profiles.iter().map(|p| (p.language.clone(), p.score_chars(&chars))).collect();
        let totals: Vec<f64> = self
            .profiles
            .iter()
            .zip(&scores)
            .map(|(p, (_, s))| s * (chars.len().saturating_sub(p.order) + 1) as f64)
            .collect();
        let max = totals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = totals.iter().map(|t| (t - max).exp()).collect();
        let z: f64 = exps.iter().sum();
        let probs: Vec<(String, f64)> = scores.iter().zip(&exps).map(|((l, _), e)| (l.clone(), e / z)).collect();

        let mut best = 0;
        for (i, (_, p)) in probs.iter().enumerate() {
            if *p > probs[best].1 {
                best = i;
            }
        }
        let runner_up = probs.iter().enumerate().filter(|(i, _)| *i != best).map(|(_, (_, p))| *p).fold(0.0, f64::max);
        Ok(Classification {
            label: probs[best].0.clone(),
            confidence: (probs[best].1 - runner_up).clamp(0.0, 1.0),
            scores,
            probs,
        })
    }
}

/// A language requirement passes when the expected label wins outright and
/// its margin reaches `min_conf`.
pub fn lang_passes(margin: f64, min_conf: f64) -> bool {
    margin > 0.0 && margin >= min_conf
}

fn annotate_record(rec: &mut Record, ident: &LangIdentifier, src_label: &str, tgt_label: &str) -> Result<()> {
    let id = rec.pair.id;
    let src = ident.classify(&rec.pair.source);
    let tgt = ident.classify(&rec.pair.target);
    match (src, tgt) {
        (Ok(s), Ok(t)) => {
            let ms = s.margin(src_label).ok_or_else(|| Error::UnknownLanguage(src_label.to_owned()))?;
            let mt = t.margin(tgt_label).ok_or_else(|| Error::UnknownLanguage(tgt_label.to_owned()))?;
            rec.scores.set(id, keys::LANG_SRC_CONF, ms)?;
            rec.scores.set(id, keys::LANG_TGT_CONF, mt)?;
        }
        (Err(Error::EmptyText), _) | (_, Err(Error::EmptyText)) => {
            rec.flag.get_or_insert_with(|| CAUSE_EMPTY.to_owned());
        }
        (Err(e), _) | (_, Err(e)) => return Err(e),
    }
    Ok(())
}

/// Stores `lang_src_conf` / `lang_tgt_conf` as margins for the expected
/// labels (see [`Classification::margin`]). Records with a blank side are
/// flagged `empty`.
pub fn annotate_langs(mut corpus: Corpus, ident: &LangIdentifier, src_label: &str, tgt_label: &str) -> Result<Corpus> {
    for label in [src_label, tgt_label] {
        if !ident.has_label(label) {
            return Err(Error::UnknownLanguage(label.to_owned()));
        }
    }
    corpus
        .records_mut()
        .par_iter_mut()
        .map(|rec| annotate_record(rec, ident, src_label, tgt_label))
        .collect::<Result<Vec<()>>>()?;
    Ok(corpus)
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct LangFilterReport {
    pub input_count: usize,
    pub kept_count: usize,
    pub rejected_by_cause: BTreeMap<String, usize>,
}

pub fn lang_filter(
    corpus: Corpus,
    ident: &LangIdentifier,
    src_label: &str,
    tgt_label: &str,
    min_conf: f64,
) -> Result<(Corpus, LangFilterReport)> {
    if !(0.0..=1.0).contains(&min_conf) {
        return Err(Error::InvalidSpec(format!("min_conf {min_conf} outside [0, 1]")));
    }
    let annotated = annotate_langs(corpus, ident, src_label, tgt_label)?;
    let mut report = LangFilterReport { input_count: annotated.len(), ..Default::default() };
    let mut kept = Vec::new();
    for rec in annotated.into_records() {
        let cause = if let Some(flag) = &rec.flag {
            Some(flag.clone())
        } else if !lang_passes(rec.scores.get(keys::LANG_SRC_CONF).unwrap_or(-1.0), min_conf) {
            Some(CAUSE_SOURCE_LANG.to_owned())
        } else if !lang_passes(rec.scores.get(keys::LANG_TGT_CONF).unwrap_or(-1.0), min_conf) {
            Some(CAUSE_TARGET_LANG.to_owned())
        } else {
            None
        };
        match cause {
            Some(c) => *report.rejected_by_cause.entry(c).or_insert(0) += 1,
            None => kept.push(rec),
        }
    }
    report.kept_count = kept.len();
    Ok((Corpus::from_records(kept), report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::SentencePair;

    const EN: &[&str] = &[
        "they are planning to host a party next weekend",
        "i enjoy swimming in the ocean and feeling the salty breeze",
        "the weather is nice today and we will go for a walk",
        "she reads a book every evening before going to sleep",
        "this is a simple sentence written in english",
    ];
    const UK: &[&str] = &[
        "вони планують провести вечірку наступного вікенду",
        "мені подобається плавати в океані та відчувати солоний вітер",
        "сьогодні гарна погода і ми підемо на прогулянку",
        "вона читає книжку щовечора перед тим як лягти спати",
        "це просте речення написане українською мовою",
    ];

    fn ident() -> LangIdentifier {
        LangIdentifier::new(vec![LangProfile::train(EN, "en", 3).unwrap(), LangProfile::train(UK, "uk", 3).unwrap()])
            .unwrap()
    }

    #[test]
    fn single_symbol_profile() {
        let p = LangProfile::train(&["aaaa"], "x", 1).unwrap();
        assert_eq!(p.len(), 1);
        assert_eq!(p.log_freq("a"), 0.0);
        assert_eq!(p.alphabet_size(), 1);
    }

    #[test]
    fn bigram_count() {
        let p = LangProfile::train(&["ab"], "x", 2).unwrap();
        assert_eq!(p.len(), 1);
        // one bigram seen once: (1 + 1) / (1 + 1)
        assert_eq!(p.log_freq("ab"), 0.0);
    }

    #[test]
    fn frequencies_normalise() {
        let p = LangProfile::train(UK, "uk", 3).unwrap();
        let mass: f64 = p.log_freqs.values().map(|lf| lf.exp()).sum();
        assert!((mass - 1.0).abs() < 1e-9);
    }

    #[test]
    fn classifies_both_directions() {
        let id = ident();
        assert_eq!(id.classify("Вони планують провести вечірку").unwrap().label, "uk");
        assert_eq!(id.classify("They are planning a party").unwrap().label, "en");
    }

    #[test]
    fn unseen_characters_give_low_confidence() {
        let c = ident().classify("ꙮꙮꙮ ꙮꙮ").unwrap();
        assert!(c.confidence < 0.5, "{c:?}");
        assert!(c.scores.iter().all(|(_, s)| s.is_finite()));
    }

    #[test]
    fn trailing_whitespace_ignored() {
        let id = ident();
        assert_eq!(id.classify("next weekend").unwrap(), id.classify("next weekend \t\n").unwrap());
    }

    #[test]
    fn empty_text_errors() {
        assert!(matches!(ident().classify("  "), Err(Error::EmptyText)));
        assert!(matches!(LangProfile::train(&["", "ab"], "x", 3), Err(Error::EmptyTrainingSet)));
    }

    #[test]
    fn needs_two_profiles() {
        let p = LangProfile::train(EN, "en", 3).unwrap();
        assert!(matches!(LangIdentifier::new(vec![p]), Err(Error::TooFewProfiles(1))));
    }

    #[test]
    fn profile_text_round_trip() {
        let p = LangProfile::train(&["a\tb\\c\nd"], "odd", 2).unwrap();
        let text = p.to_text();
        assert!(text.starts_with("LANGPROFILE v1 odd 2\n"));
        let back = LangProfile::parse(&text).unwrap();
        assert_eq!(back, p);
    }

    #[test]
    fn profile_parser_rejects_garbage() {
        for bad in ["", "LANGPROFILE v2 en 3\nabc\t-1", "LANGPROFILE v1 en 3\nab\t-1", "LANGPROFILE v1 en 1\na\t0.5"] {
            assert!(LangProfile::parse(bad).is_err(), "{bad:?}");
        }
    }

    #[test]
    fn lang_filter_causes() {
        let corpus = Corpus::from_pairs([
            SentencePair::new(0, "we will go for a walk", "ми підемо на прогулянку"),
            SentencePair::new(1, "we will go for a walk", "we will go for a walk"),
            SentencePair::new(2, "ми підемо на прогулянку", "ми підемо на прогулянку"),
            SentencePair::new(3, "we will go for a walk", ""),
        ])
        .unwrap();
        let (kept, report) = lang_filter(corpus, &ident(), "en", "uk", 0.5).unwrap();
        assert_eq!(kept.ids().collect::<Vec<_>>(), [0]);
        assert_eq!(report.rejected_by_cause[CAUSE_TARGET_LANG], 1);
        assert_eq!(report.rejected_by_cause[CAUSE_SOURCE_LANG], 1);
        assert_eq!(report.rejected_by_cause[CAUSE_EMPTY], 1);
        assert!(kept.records()[0].scores.get(keys::LANG_TGT_CONF).unwrap() > 0.5);
    }
}
