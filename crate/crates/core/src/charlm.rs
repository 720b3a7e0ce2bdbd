//! Character n-gram language model with bits-per-character scoring.
//!
//! Texts are padded on the left with a reserved begin-of-text symbol so every
//! character has a full-length context. In a trained model, characters never
//! seen in training map to a single unknown symbol, which is part of the
//! predicted vocabulary and always keeps non-zero probability. A closed model
//! predicts its alphabet only and refuses other characters. No end-of-text
//! symbol is predicted, so BPC divides by the visible character count only.
//!
//! All probabilities are reported in base 2.

use std::fmt;
use std::io::Write;

use rayon::prelude::*;
use rustc_hash::FxHashMap;
use serde::{Deserialize, Serialize};

use crate::corpus::{keys, Corpus, RecordId};
use crate::error::{Error, Result};
use crate::text::is_blank;

/// Highest supported order. N-grams are packed into a `u128` at 21 bits per
/// symbol.
pub const MAX_ORDER: usize = 6;
/// Largest accepted add-k constant; keeps `k * |V|` finite.
pub const MAX_ADD_K: f64 = 1e6;

const BITS: u32 = 21;
const SYM_MASK: u128 = (1 << BITS) - 1;
// Zero bits in a packed history read as begin-of-text padding.
const BOS: u32 = 0;
const UNK: u32 = 1;
const FIRST_CHAR: u32 = 2;

const MAGIC: &[u8; 4] = b"CLM1";
const FORMAT_VERSION: u16 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Smoothing {
    /// Additive smoothing at the highest order only.
    AddK(f64),
    /// Witten-Bell interpolation down to a uniform distribution.
    WittenBell,
}

impl fmt::Display for Smoothing {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Smoothing::AddK(k) => write!(f, "add_k({k})"),
            Smoothing::WittenBell => f.write_str("witten_bell"),
        }
    }
}

impl std::str::FromStr for Smoothing {
    type Err = Error;

    /// Accepts `witten_bell`, `add_k` (k = 1) or `add_k:<k>`.
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "witten_bell" | "wb" => Ok(Smoothing::WittenBell),
            "add_k" => Ok(Smoothing::AddK(1.0)),
            _ => {
                let k = s
                    .strip_prefix("add_k:")
                    .and_then(|k| k.parse::<f64>().ok())
                    .ok_or_else(|| Error::Config(format!("unknown smoothing `{s}`")))?;
                Ok(Smoothing::AddK(k))
            }
        }
    }
}

/// Training hyper-parameters.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LmConfig {
    pub order: usize,
    pub smoothing: Smoothing,
}

impl Default for LmConfig {
    fn default() -> Self {
        LmConfig { order: 5, smoothing: Smoothing::WittenBell }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
struct ContextStats {
    total: u64,
    types: u64,
}

#[derive(Clone, Debug)]
pub struct CharNGramLM {
    order: usize,
    smoothing: Smoothing,
    /// No unknown symbol: characters outside `vocab` have probability zero.
    closed: bool,
    vocab: Vec<char>,
    index: FxHashMap<char, u32>,
    /// `ngrams[m - 1]`: counts of m-grams keyed by packed (context, next).
    ngrams: Vec<FxHashMap<u128, u64>>,
    /// `contexts[m - 1]`: totals and type counts for contexts of length m - 1.
    contexts: Vec<FxHashMap<u128, ContextStats>>,
}

fn validate(order: usize, smoothing: Smoothing) -> Result<()> {
    if order == 0 || order > MAX_ORDER {
        return Err(Error::InvalidOrder(order));
    }
    if let Smoothing::AddK(k) = smoothing {
        if !(k > 0.0 && k <= MAX_ADD_K) {
            return Err(Error::Config(format!("add_k constant must be in (0, {MAX_ADD_K}], got {k}")));
        }
    }
    Ok(())
}

#[inline]
fn suffix(history: u128, len: usize) -> u128 {
    if len == 0 {
        0
    } else {
        history & ((1u128 << (BITS as usize * len)) - 1)
    }
}

#[inline]
fn push(history: u128, sym: u32, keep: usize) -> u128 {
    suffix((history << BITS) | sym as u128, keep)
}

impl CharNGramLM {
    pub fn train<S: AsRef<str>>(texts: &[S], config: LmConfig) -> Result<Self> {
        validate(config.order, config.smoothing)?;
        let mut vocab: Vec<char> = texts.iter().flat_map(|t| t.as_ref().chars()).collect();
        vocab.sort_unstable();
        vocab.dedup();
        if vocab.is_empty() {
            return Err(Error::EmptyTrainingSet);
        }
        let mut model = Self::empty(config.order, config.smoothing, false, vocab);
        let keep = config.order - 1;
        for text in texts {
            let mut history = BOS as u128;
            for c in text.as_ref().chars() {
                let sym = model.index[&c];
                model.count(history, sym);
                history = push(history, sym, keep);
            }
        }
        Ok(model)
    }

    /// A closed model with no observations: every symbol of `alphabet` gets
    /// probability `1 / |alphabet|`.
    pub fn uniform(alphabet: impl IntoIterator<Item = char>) -> Result<Self> {
        let mut vocab: Vec<char> = alphabet.into_iter().collect();
        vocab.sort_unstable();
        vocab.dedup();
        if vocab.is_empty() {
            return Err(Error::EmptyTrainingSet);
        }
        Ok(Self::empty(1, Smoothing::AddK(1.0), true, vocab))
    }

    fn empty(order: usize, smoothing: Smoothing, closed: bool, vocab: Vec<char>) -> Self {
        let index = vocab.iter().enumerate().map(|(i, &c)| (c, i as u32 + FIRST_CHAR)).collect();
        CharNGramLM {
            order,
            smoothing,
            closed,
            vocab,
            index,
            ngrams: vec![FxHashMap::default(); order],
            contexts: vec![FxHashMap::default(); order],
        }
    }

    fn count(&mut self, history: u128, sym: u32) {
        for m in 1..=self.order {
            self.add_count(m, suffix(history, m - 1), sym, 1);
        }
    }

    fn add_count(&mut self, m: usize, ctx: u128, sym: u32, n: u64) {
        let slot = self.ngrams[m - 1].entry((ctx << BITS) | sym as u128).or_insert(0);
        let fresh = *slot == 0;
        *slot += n;
        let stats = self.contexts[m - 1].entry(ctx).or_default();
        stats.total += n;
        if fresh {
            stats.types += 1;
        }
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn smoothing(&self) -> Smoothing {
        self.smoothing
    }

    pub fn vocab(&self) -> &[char] {
        &self.vocab
    }

    pub fn is_closed(&self) -> bool {
        self.closed
    }

    /// Size of the predicted vocabulary, including the unknown symbol of an
    /// open model.
    pub fn predicted_vocab_size(&self) -> usize {
        self.vocab.len() + usize::from(!self.closed)
    }

    fn symbol(&self, c: char) -> u32 {
        self.index.get(&c).copied().unwrap_or(UNK)
    }

    fn prob_sym(&self, history: u128, sym: u32) -> f64 {
        if self.closed && sym == UNK {
            return 0.0;
        }
        let v = self.predicted_vocab_size() as f64;
        match self.smoothing {
            Smoothing::AddK(k) => {
                let m = self.order;
                let ctx = suffix(history, m - 1);
                let total = self.contexts[m - 1].get(&ctx).map_or(0, |s| s.total);
                let c = self.ngrams[m - 1].get(&((ctx << BITS) | sym as u128)).copied().unwrap_or(0);
                (c as f64 + k) / (total as f64 + k * v)
            }
            Smoothing::WittenBell => {
                let mut p = 1.0 / v;
                for m in 1..=self.order {
                    let ctx = suffix(history, m - 1);
                    if let Some(stats) = self.contexts[m - 1].get(&ctx) {
                        let c = self.ngrams[m - 1].get(&((ctx << BITS) | sym as u128)).copied().unwrap_or(0);
                        let t = stats.types as f64;
                        p = (c as f64 + t * p) / (stats.total as f64 + t);
                    }
                }
                p
            }
        }
    }

    fn history_of(&self, context: &str) -> u128 {
        context.chars().fold(BOS as u128, |h, c| push(h, self.symbol(c), self.order - 1))
    }

    /// Probability of `next` after `context`. Only the last `order - 1`
    /// characters of the context matter; shorter contexts are padded with the
    /// begin-of-text symbol. `None` stands for the unknown symbol.
    pub fn prob(&self, context: &str, next: Option<char>) -> f64 {
        let sym = next.map_or(UNK, |c| self.symbol(c));
        self.prob_sym(self.history_of(context), sym)
    }

    /// The full next-character distribution after `context`, vocabulary
    /// order first, then the unknown symbol of an open model.
    pub fn distribution(&self, context: &str) -> Vec<(Option<char>, f64)> {
        let history = self.history_of(context);
        let unk = (!self.closed).then(|| (None, self.prob_sym(history, UNK)));
        self.vocab.iter().map(|&c| (Some(c), self.prob_sym(history, self.index[&c]))).chain(unk).collect()
    }

    pub fn stream(&self) -> LmStream<'_> {
        LmStream { model: self, history: 0, total: 0.0, chars: 0 }
    }

    /// Total log2 probability of `text`.
    pub fn log_prob(&self, text: &str) -> Result<f64> {
        if text.is_empty() {
            return Err(Error::EmptyText);
        }
        if self.closed {
            if let Some(c) = text.chars().find(|c| !self.index.contains_key(c)) {
                return Err(Error::OutOfAlphabet(c));
            }
        }
        let keep = self.order - 1;
        let mut history = 0u128;
        let mut total = 0.0;
        for c in text.chars() {
            let sym = self.symbol(c);
            total += self.prob_sym(history, sym).log2();
            history = push(history, sym, keep);
        }
        Ok(total)
    }

    pub fn bits_per_char(&self, text: &str) -> Result<f64> {
        let lp = self.log_prob(text)?;
        Ok(-lp / text.chars().count() as f64)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.push(self.order as u8);
        out.push(u8::from(self.closed));
        match self.smoothing {
            Smoothing::AddK(k) => {
                out.push(0);
                out.extend_from_slice(&k.to_le_bytes());
            }
            Smoothing::WittenBell => out.push(1),
        }
        out.extend_from_slice(&(self.vocab.len() as u32).to_le_bytes());
        for &c in &self.vocab {
            out.extend_from_slice(&(c as u32).to_le_bytes());
        }
        for (m, table) in self.ngrams.iter().enumerate() {
            let mut entries: Vec<(u128, u64)> = table.iter().map(|(k, v)| (*k, *v)).collect();
            entries.sort_unstable();
            out.extend_from_slice(&(entries.len() as u64).to_le_bytes());
            for (key, count) in entries {
                for pos in (0..=m).rev() {
                    let sym = ((key >> (BITS as usize * pos)) & SYM_MASK) as u32;
                    out.extend_from_slice(&sym.to_le_bytes());
                }
                out.extend_from_slice(&count.to_le_bytes());
            }
        }
        out
    }

    pub fn write_to<W: Write>(&self, mut out: W) -> Result<()> {
        out.write_all(&self.to_bytes())?;
        out.flush()?;
        Ok(())
    }

    /// Decodes a `CLM1` model, validating every field.
    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = ByteReader { bytes, pos: 0 };
        if r.take(4)? != MAGIC {
            return Err(bad("bad magic"));
        }
        let version = u16::from_le_bytes(r.array()?);
        if version != FORMAT_VERSION {
            return Err(bad(format!("unsupported version {version}")));
        }
        let order = r.u8()? as usize;
        let closed = match r.u8()? {
            0 => false,
            1 => true,
            f => return Err(bad(format!("unknown vocabulary flag {f}"))),
        };
        let smoothing = match r.u8()? {
            0 => Smoothing::AddK(f64::from_le_bytes(r.array()?)),
            1 => Smoothing::WittenBell,
            t => return Err(bad(format!("unknown smoothing tag {t}"))),
        };
        validate(order, smoothing).map_err(|e| bad(e.to_string()))?;

        let n_vocab = r.u32()? as usize;
        let mut vocab = Vec::with_capacity(n_vocab.min(r.remaining() / 4));
        for _ in 0..n_vocab {
            let c = char::from_u32(r.u32()?).ok_or_else(|| bad("invalid character in vocabulary"))?;
            if vocab.last().is_some_and(|&last| last >= c) {
                return Err(bad("vocabulary not strictly sorted"));
            }
            vocab.push(c);
        }
        if closed && vocab.is_empty() {
            return Err(bad("closed model with an empty alphabet"));
        }
        let max_sym = FIRST_CHAR as u64 + vocab.len() as u64;
        let mut model = Self::empty(order, smoothing, closed, vocab);

        for m in 1..=order {
            let n = r.u64()?;
            let entry_size = 4 * m + 8;
            if n > (r.remaining() / entry_size) as u64 {
                return Err(bad("truncated count table"));
            }
            for _ in 0..n {
                let mut ctx = 0u128;
                for _ in 0..m - 1 {
                    let sym = r.u32()?;
                    if sym == UNK || sym as u64 >= max_sym {
                        return Err(bad("invalid context symbol"));
                    }
                    ctx = (ctx << BITS) | sym as u128;
                }
                let sym = r.u32()?;
                if sym < FIRST_CHAR || sym as u64 >= max_sym {
                    return Err(bad("invalid predicted symbol"));
                }
                let count = r.u64()?;
                if count == 0 {
                    return Err(bad("zero count"));
                }
                if model.ngrams[m - 1].contains_key(&((ctx << BITS) | sym as u128)) {
                    return Err(bad("duplicate n-gram"));
                }
                let stats = model.contexts[m - 1].get(&ctx).copied().unwrap_or_default();
                if stats.total.checked_add(count).and_then(|t| t.checked_add(stats.types + 1)).is_none() {
                    return Err(bad("count overflow"));
                }
                model.add_count(m, ctx, sym, count);
            }
        }
        if r.remaining() != 0 {
            return Err(bad("trailing bytes"));
        }
        Ok(model)
    }
}

fn bad(msg: impl Into<String>) -> Error {
    Error::BadModel(msg.into())
}

struct ByteReader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> ByteReader<'a> {
    fn remaining(&self) -> usize {
        self.bytes.len() - self.pos
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.remaining() < n {
            return Err(bad("unexpected end of file"));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn array<const N: usize>(&mut self) -> Result<[u8; N]> {
        Ok(self.take(N)?.try_into().expect("length checked"))
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.array()?))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.array()?))
    }
}

/// Incremental scorer: feeding a text character by character gives exactly
/// the same total as [`CharNGramLM::log_prob`].
pub struct LmStream<'a> {
    model: &'a CharNGramLM,
    history: u128,
    total: f64,
    chars: usize,
}

impl LmStream<'_> {
    /// Scores one character and returns its log2 probability, which is
    /// negative infinity for a character outside a closed alphabet.
    pub fn push(&mut self, c: char) -> f64 {
        let sym = self.model.symbol(c);
        let lp = self.model.prob_sym(self.history, sym).log2();
        self.total += lp;
        self.chars += 1;
        self.history = push(self.history, sym, self.model.order - 1);
        lp
    }

    pub fn log_prob(&self) -> f64 {
        self.total
    }

    pub fn chars(&self) -> usize {
        self.chars
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct AnnotateReport {
    pub scored: usize,
    pub flagged: Vec<(RecordId, String)>,
}

/// Cause attached to records with a blank side.
pub const CAUSE_EMPTY: &str = "empty";

/// Adds `bpc_src`, `bpc_tgt` and `bpc_sum` to every record. Records with a
/// blank side are flagged instead of scored.
pub fn bpc_sum_annotate(
    mut corpus: Corpus,
    src_model: &CharNGramLM,
    tgt_model: &CharNGramLM,
) -> Result<(Corpus, AnnotateReport)> {
    let results: Vec<Result<bool>> = corpus
        .records_mut()
        .par_iter_mut()
        .map(|rec| {
            if is_blank(&rec.pair.source) || is_blank(&rec.pair.target) {
                rec.flag.get_or_insert_with(|| CAUSE_EMPTY.to_owned());
                return Ok(false);
            }
            let id = rec.pair.id;
            let src = src_model.bits_per_char(&rec.pair.source)?;
            let tgt = tgt_model.bits_per_char(&rec.pair.target)?;
            rec.scores.set(id, keys::BPC_SRC, src)?;
            rec.scores.set(id, keys::BPC_TGT, tgt)?;
            rec.scores.set(id, keys::BPC_SUM, src + tgt)?;
            Ok(true)
        })
        .collect();
    let mut report = AnnotateReport::default();
    for (rec, res) in corpus.records().iter().zip(results) {
        if res? {
            report.scored += 1;
        } else {
            report.flagged.push((rec.pair.id, CAUSE_EMPTY.to_owned()));
        }
    }
    Ok((corpus, report))
}
