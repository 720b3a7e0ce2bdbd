//! Parallel corpus data model, corpus readers and score sidecars.
//!
//! Two corpus layouts are supported: a single TSV file with
//! `id<TAB>source<TAB>target` per line, and a moses-style pair of
//! line-aligned files where ids are assigned from line numbers. Scores live
//! in JSON-lines sidecars keyed by record id so that independent scorers can
//! be merged onto the same corpus.
//!
//! Text is kept exactly as read. Nothing is trimmed, case-folded or
//! normalised; a side that is blank after trimming makes the line malformed.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::text::is_blank;

pub type RecordId = u64;

/// Well-known score keys.
pub mod keys {
    pub const LANG_SRC_CONF: &str = "lang_src_conf";
    pub const LANG_TGT_CONF: &str = "lang_tgt_conf";
    pub const BPC_SRC: &str = "bpc_src";
    pub const BPC_TGT: &str = "bpc_tgt";
    pub const BPC_SUM: &str = "bpc_sum";
    pub const SIM: &str = "sim";
    pub const LEN_SRC: &str = "len_src";
    pub const LEN_TGT: &str = "len_tgt";
    pub const LEN_DIFF: &str = "len_diff";
    pub const LOGPROB: &str = "logprob";
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SentencePair {
    pub id: RecordId,
    pub source: String,
    pub target: String,
}

impl SentencePair {
    pub fn new(id: RecordId, source: impl Into<String>, target: impl Into<String>) -> Self {
        SentencePair { id, source: source.into(), target: target.into() }
    }
}

/// Named finite scores attached to one record.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ScoreSet {
    entries: BTreeMap<String, f64>,
}

impl ScoreSet {
    pub fn get(&self, key: &str) -> Option<f64> {
        self.entries.get(key).copied()
    }

    /// Inserts or replaces a score. Non-finite values are refused.
    pub fn set(&mut self, id: RecordId, key: &str, value: f64) -> Result<()> {
        if !value.is_finite() {
            return Err(Error::NonFiniteScore { record_id: id, key: key.to_owned() });
        }
        self.entries.insert(key.to_owned(), value);
        Ok(())
    }

    pub fn contains(&self, key: &str) -> bool {
        self.entries.contains_key(key)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, f64)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), *v))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Record {
    pub pair: SentencePair,
    pub scores: ScoreSet,
    /// Cause recorded by a scoring stage that could not handle this record.
    /// Flagged records are rejected by the filters under this cause.
    pub flag: Option<String>,
}

impl Record {
    pub fn id(&self) -> RecordId {
        self.pair.id
    }
}

/// Ordered collection of records with unique ids.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Corpus {
    records: Vec<Record>,
}

impl Corpus {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_pairs(pairs: impl IntoIterator<Item = SentencePair>) -> Result<Self> {
        let mut corpus = Corpus::new();
        let mut seen = HashSet::new();
        for pair in pairs {
            if !seen.insert(pair.id) {
                return Err(Error::DuplicateId(pair.id));
            }
            corpus.records.push(Record { pair, scores: ScoreSet::default(), flag: None });
        }
        Ok(corpus)
    }

    pub(crate) fn from_records(records: Vec<Record>) -> Self {
        Corpus { records }
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn records(&self) -> &[Record] {
        &self.records
    }

    pub fn records_mut(&mut self) -> &mut [Record] {
        &mut self.records
    }

    pub fn into_records(self) -> Vec<Record> {
        self.records
    }

    pub fn iter(&self) -> impl Iterator<Item = &Record> {
        self.records.iter()
    }

    pub fn pairs(&self) -> impl Iterator<Item = &SentencePair> {
        self.records.iter().map(|r| &r.pair)
    }

    pub fn ids(&self) -> impl Iterator<Item = RecordId> + '_ {
        self.records.iter().map(|r| r.pair.id)
    }

    pub fn get(&self, id: RecordId) -> Option<&Record> {
        self.records.iter().find(|r| r.pair.id == id)
    }

    /// `(record, key)` pairs for every listed key absent from an unflagged record.
    pub fn missing_scores<'a>(&'a self, keys: &'a [&'a str]) -> impl Iterator<Item = (RecordId, &'a str)> + 'a {
        self.records
            .iter()
            .filter(|r| r.flag.is_none())
            .flat_map(move |r| keys.iter().filter(|k| !r.scores.contains(k)).map(move |k| (r.pair.id, *k)))
    }

    /// Keys present on every record, sorted.
    pub fn common_score_keys(&self) -> Vec<String> {
        let mut iter = self.records.iter();
        let Some(first) = iter.next() else { return Vec::new() };
        let mut common: Vec<String> = first.scores.iter().map(|(k, _)| k.to_owned()).collect();
        for rec in iter {
            common.retain(|k| rec.scores.contains(k));
        }
        common
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ParseMode {
    /// Abort on the first malformed line.
    #[default]
    Strict,
    /// Skip malformed lines and count them.
    Lenient,
}

/// Where a corpus lives on disk.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum CorpusInput {
    Tsv(PathBuf),
    MosesPair { source: PathBuf, target: PathBuf },
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct ReadReport {
    pub records: usize,
    /// `(line number, reason)` for every skipped line (lenient mode only).
    pub malformed: Vec<(usize, String)>,
}

fn open(path: &Path) -> Result<File> {
    File::open(path).map_err(|e| Error::io(path, e))
}

pub fn read_corpus(input: &CorpusInput, mode: ParseMode) -> Result<(Corpus, ReadReport)> {
    match input {
        CorpusInput::Tsv(path) => read_tsv(BufReader::new(open(path)?), mode),
        CorpusInput::MosesPair { source, target } => {
            let mut src = Vec::new();
            let mut tgt = Vec::new();
            open(source)?.read_to_end(&mut src).map_err(|e| Error::io(source, e))?;
            open(target)?.read_to_end(&mut tgt).map_err(|e| Error::io(target, e))?;
            parse_moses_pair(&src, &tgt, mode)
        }
    }
}

/// Streaming TSV reader yielding one pair per well-formed line.
///
/// In lenient mode malformed lines are skipped and recorded in
/// [`TsvReader::report`]; in strict mode the first one is returned as an
/// error and iteration stops.
pub struct TsvReader<R> {
    inner: R,
    mode: ParseMode,
    line_no: usize,
    buf: Vec<u8>,
    seen: HashSet<RecordId>,
    report: ReadReport,
    done: bool,
}

impl<R: BufRead> TsvReader<R> {
    pub fn new(inner: R, mode: ParseMode) -> Self {
        TsvReader {
            inner,
            mode,
            line_no: 0,
            buf: Vec::new(),
            seen: HashSet::new(),
            report: ReadReport::default(),
            done: false,
        }
    }

    pub fn report(&self) -> &ReadReport {
        &self.report
    }

    pub fn into_report(self) -> ReadReport {
        self.report
    }
}

impl<R: BufRead> Iterator for TsvReader<R> {
    type Item = Result<SentencePair>;

    fn next(&mut self) -> Option<Self::Item> {
        while !self.done {
            self.buf.clear();
            match self.inner.read_until(b'\n', &mut self.buf) {
                Ok(0) => {
                    self.done = true;
                    return None;
                }
                Ok(_) => {}
                Err(e) => {
                    self.done = true;
                    return Some(Err(Error::Stream(e)));
                }
            }
            self.line_no += 1;
            let line = self.buf.strip_suffix(b"\n").unwrap_or(&self.buf);
            let parsed = parse_tsv_line(line).and_then(|pair| {
                if self.seen.insert(pair.id) {
                    Ok(pair)
                } else {
                    Err(format!("duplicate id {}", pair.id))
                }
            });
            match parsed {
                Ok(pair) => {
                    self.report.records += 1;
                    return Some(Ok(pair));
                }
                Err(reason) => match self.mode {
                    ParseMode::Strict => {
                        self.done = true;
                        return Some(Err(Error::MalformedLine { line: self.line_no, reason }));
                    }
                    ParseMode::Lenient => self.report.malformed.push((self.line_no, reason)),
                },
            }
        }
        None
    }
}

fn parse_tsv_line(line: &[u8]) -> Result<SentencePair, String> {
    let line = std::str::from_utf8(line).map_err(|_| "invalid UTF-8".to_owned())?;
    let fields: Vec<&str> = line.split('\t').collect();
    if fields.len() != 3 {
        return Err(format!("expected 3 tab-separated columns, found {}", fields.len()));
    }
    let id_field = fields[0];
    if id_field.is_empty() || !id_field.bytes().all(|b| b.is_ascii_digit()) {
        return Err(format!("invalid id `{id_field}`"));
    }
    let id = id_field.parse::<RecordId>().map_err(|_| format!("id out of range `{id_field}`"))?;
    check_side(fields[1], "source")?;
    check_side(fields[2], "target")?;
    Ok(SentencePair::new(id, fields[1], fields[2]))
}

fn check_side(text: &str, side: &str) -> Result<(), String> {
    if is_blank(text) {
        Err(format!("empty {side}"))
    } else {
        Ok(())
    }
}

pub fn read_tsv<R: BufRead>(reader: R, mode: ParseMode) -> Result<(Corpus, ReadReport)> {
    let mut reader = TsvReader::new(reader, mode);
    let mut records = Vec::new();
    for pair in reader.by_ref() {
        records.push(Record { pair: pair?, scores: ScoreSet::default(), flag: None });
    }
    Ok((Corpus::from_records(records), reader.into_report()))
}

pub fn parse_tsv(bytes: &[u8], mode: ParseMode) -> Result<(Corpus, ReadReport)> {
    read_tsv(bytes, mode)
}

fn split_lines(bytes: &[u8]) -> Vec<&[u8]> {
    if bytes.is_empty() {
        return Vec::new();
    }
    let body = bytes.strip_suffix(b"\n").unwrap_or(bytes);
    body.split(|&b| b == b'\n').collect()
}

/// Parses two line-aligned files; record ids are zero-based line numbers.
pub fn parse_moses_pair(source: &[u8], target: &[u8], mode: ParseMode) -> Result<(Corpus, ReadReport)> {
    let src_lines = split_lines(source);
    let tgt_lines = split_lines(target);
    if src_lines.len() != tgt_lines.len() {
        return Err(Error::AlignmentMismatch { source_lines: src_lines.len(), target_lines: tgt_lines.len() });
    }
    let mut report = ReadReport::default();
    let mut records = Vec::with_capacity(src_lines.len());
    for (i, (s, t)) in src_lines.iter().zip(&tgt_lines).enumerate() {
        let parsed = (|| {
            let s = std::str::from_utf8(s).map_err(|_| "invalid UTF-8 in source".to_owned())?;
            let t = std::str::from_utf8(t).map_err(|_| "invalid UTF-8 in target".to_owned())?;
            check_side(s, "source")?;
            check_side(t, "target")?;
            Ok::<_, String>(SentencePair::new(i as RecordId, s, t))
        })();
        match parsed {
            Ok(pair) => records.push(Record { pair, scores: ScoreSet::default(), flag: None }),
            Err(reason) => match mode {
                ParseMode::Strict => return Err(Error::MalformedLine { line: i + 1, reason }),
                ParseMode::Lenient => report.malformed.push((i + 1, reason)),
            },
        }
    }
    report.records = records.len();
    Ok((Corpus::from_records(records), report))
}

/// Writes `id<TAB>source<TAB>target` lines in corpus order.
pub fn write_tsv<W: Write>(corpus: &Corpus, mut out: W) -> Result<usize> {
    for (i, rec) in corpus.records.iter().enumerate() {
        let p = &rec.pair;
        if [&p.source, &p.target].iter().any(|s| s.contains(['\t', '\n'])) {
            return Err(Error::MalformedLine { line: i + 1, reason: "field contains tab or newline".into() });
        }
        writeln!(out, "{}\t{}\t{}", p.id, p.source, p.target)?;
    }
    out.flush()?;
    Ok(corpus.len())
}

pub fn write_tsv_file(corpus: &Corpus, path: &Path) -> Result<usize> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    write_tsv(corpus, BufWriter::new(file))
}

/// One sidecar row as it appears on disk.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScoreRow {
    pub id: RecordId,
    pub scores: BTreeMap<String, f64>,
}

/// Writes one `{"id":..,"scores":{..}}` line per record, keys in the given order.
///
/// Floats are written in shortest round-trip form, so reading the file back
/// reproduces every value bit for bit.
pub fn write_scores<W: Write>(corpus: &Corpus, keys: &[&str], mut out: W) -> Result<usize> {
    let mut line = String::new();
    for rec in &corpus.records {
        line.clear();
        line.push_str("{\"id\":");
        line.push_str(&rec.pair.id.to_string());
        line.push_str(",\"scores\":{");
        for (i, key) in keys.iter().enumerate() {
            let value = rec
                .scores
                .get(key)
                .ok_or_else(|| Error::MissingScore { record_id: rec.pair.id, key: (*key).to_owned() })?;
            if i > 0 {
                line.push(',');
            }
            line.push_str(&serde_json::to_string(key).expect("string serialisation"));
            line.push(':');
            line.push_str(&serde_json::to_string(&value).expect("finite float serialisation"));
        }
        line.push_str("}}\n");
        out.write_all(line.as_bytes())?;
    }
    out.flush()?;
    Ok(corpus.len())
}

pub fn write_scores_file(corpus: &Corpus, keys: &[&str], path: &Path) -> Result<usize> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    write_scores(corpus, keys, BufWriter::new(file))
}

/// Parses a sidecar, rejecting duplicate ids and non-finite values.
pub fn parse_sidecar<R: BufRead>(reader: R) -> Result<Vec<ScoreRow>> {
    let mut rows = Vec::new();
    let mut seen = HashSet::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let row: ScoreRow =
            serde_json::from_str(&line).map_err(|e| Error::Json { line: i + 1, reason: e.to_string() })?;
        if !seen.insert(row.id) {
            return Err(Error::DuplicateId(row.id));
        }
        if let Some((key, _)) = row.scores.iter().find(|(_, v)| !v.is_finite()) {
            return Err(Error::NonFiniteScore { record_id: row.id, key: key.clone() });
        }
        rows.push(row);
    }
    Ok(rows)
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct SidecarReport {
    pub rows: usize,
    /// Sidecar ids with no matching record.
    pub unknown_ids: Vec<RecordId>,
    /// Records that received no row.
    pub missing_ids: Vec<RecordId>,
}

/// Attaches sidecar scores by id. Existing keys are overwritten, records
/// without a row are left untouched and listed in the report.
pub fn attach_scores(mut corpus: Corpus, rows: Vec<ScoreRow>) -> Result<(Corpus, SidecarReport)> {
    let index: HashMap<RecordId, usize> = corpus.records.iter().enumerate().map(|(i, r)| (r.pair.id, i)).collect();
    let mut report = SidecarReport { rows: rows.len(), ..Default::default() };
    let mut hit = vec![false; corpus.len()];
    for row in rows {
        match index.get(&row.id) {
            Some(&i) => {
                hit[i] = true;
                for (key, value) in &row.scores {
                    corpus.records[i].scores.set(row.id, key, *value)?;
                }
            }
            None => report.unknown_ids.push(row.id),
        }
    }
    report.unknown_ids.sort_unstable();
    report.missing_ids = corpus.records.iter().zip(&hit).filter(|(_, h)| !**h).map(|(r, _)| r.pair.id).collect();
    Ok((corpus, report))
}

pub fn read_scores<R: BufRead>(corpus: Corpus, reader: R) -> Result<(Corpus, SidecarReport)> {
    attach_scores(corpus, parse_sidecar(reader)?)
}

pub fn read_scores_file(corpus: Corpus, path: &Path) -> Result<(Corpus, SidecarReport)> {
    read_scores(corpus, BufReader::new(open(path)?))
}
