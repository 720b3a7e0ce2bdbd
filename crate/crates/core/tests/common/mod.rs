//! Fixture loading and synthetic English-Ukrainian data shared by the
//! integration tests.
#![allow(dead_code)]

use std::collections::{BTreeSet, HashMap};
use std::path::PathBuf;

use dragoman::corpus::{keys, Corpus, RecordId, SentencePair};
use dragoman::filter::{annotate_lengths, FilterSpec, LangRequirement, OutputOrder};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn fixture(rel: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(rel)
}

fn unescape(cell: &str) -> String {
    let mut out = String::with_capacity(cell.len());
    let mut chars = cell.chars();
    while let Some(c) = chars.next() {
        if c != '\\' {
            out.push(c);
            continue;
        }
        match chars.next() {
            Some('t') => out.push('\t'),
            Some('n') => out.push('\n'),
            Some('\\') => out.push('\\'),
            other => panic!("bad escape {other:?}"),
        }
    }
    out
}

/// Rows of a fixture TSV written by `make_goldens.py`.
pub fn fixture_rows(rel: &str) -> Vec<Vec<String>> {
    let text = std::fs::read_to_string(fixture(rel)).expect("fixture readable");
    text.lines().map(|l| l.split('\t').map(unescape).collect()).collect()
}

pub fn goldens() -> serde_json::Value {
    let text = std::fs::read_to_string(fixture("metrics/goldens.json")).expect("goldens readable");
    serde_json::from_str(&text).expect("goldens parse")
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Word-for-word English-Ukrainian glossary.
pub const LEXICON: &[(&str, &str)] = &[
    ("house", "будинок"),
    ("water", "вода"),
    ("city", "місто"),
    ("river", "річка"),
    ("friend", "друг"),
    ("mother", "мати"),
    ("father", "батько"),
    ("child", "дитина"),
    ("school", "школа"),
    ("teacher", "вчитель"),
    ("book", "книга"),
    ("letter", "лист"),
    ("window", "вікно"),
    ("door", "двері"),
    ("table", "стіл"),
    ("bread", "хліб"),
    ("milk", "молоко"),
    ("apple", "яблуко"),
    ("garden", "сад"),
    ("forest", "ліс"),
    ("mountain", "гора"),
    ("sea", "море"),
    ("sun", "сонце"),
    ("moon", "місяць"),
    ("star", "зірка"),
    ("road", "дорога"),
    ("train", "потяг"),
    ("station", "вокзал"),
    ("morning", "ранок"),
    ("evening", "вечір"),
    ("night", "ніч"),
    ("day", "день"),
    ("week", "тиждень"),
    ("year", "рік"),
    ("work", "робота"),
    ("money", "гроші"),
    ("market", "ринок"),
    ("shop", "магазин"),
    ("street", "вулиця"),
    ("country", "країна"),
    ("language", "мова"),
    ("word", "слово"),
    ("song", "пісня"),
    ("music", "музика"),
    ("film", "фільм"),
    ("doctor", "лікар"),
    ("hospital", "лікарня"),
    ("weather", "погода"),
    ("rain", "дощ"),
    ("snow", "сніг"),
    ("wind", "вітер"),
    ("good", "добрий"),
    ("big", "великий"),
    ("small", "малий"),
    ("new", "новий"),
    ("old", "старий"),
    ("green", "зелений"),
    ("quiet", "тихий"),
    ("warm", "теплий"),
    ("cold", "холодний"),
    ("reads", "читає"),
    ("writes", "пише"),
    ("sees", "бачить"),
    ("knows", "знає"),
    ("loves", "любить"),
    ("buys", "купує"),
    ("sells", "продає"),
    ("waits", "чекає"),
    ("builds", "будує"),
    ("opens", "відкриває"),
    ("today", "сьогодні"),
    ("tomorrow", "завтра"),
    ("always", "завжди"),
    ("often", "часто"),
    ("here", "тут"),
    ("there", "там"),
    ("and", "і"),
    ("but", "але"),
    ("very", "дуже"),
    ("not", "не"),
];

/// Greek filler used for wrong-script targets.
pub const GREEK: &[&str] =
    &["σπίτι", "νερό", "πόλη", "ποτάμι", "φίλος", "βιβλίο", "θάλασσα", "ήλιος", "δρόμος", "μέρα"];

fn capitalize(words: &[&str]) -> String {
    let joined = words.join(" ");
    let mut chars = joined.chars();
    match chars.next() {
        Some(c) => c.to_uppercase().chain(chars).collect::<String>() + ".",
        None => String::new(),
    }
}

/// A sentence pair of `min..=max` words. Each target word is dropped with
/// probability `drop`, keeping at least one.
pub fn pair_of_len<R: Rng>(rng: &mut R, min: usize, max: usize, drop: f64) -> (String, String) {
    let n = rng.gen_range(min..=max);
    let idx: Vec<usize> = (0..n).map(|_| rng.gen_range(0..LEXICON.len())).collect();
    let src: Vec<&str> = idx.iter().map(|&i| LEXICON[i].0).collect();
    let mut tgt: Vec<&str> = idx.iter().filter(|_| !rng.gen_bool(drop)).map(|&i| LEXICON[i].1).collect();
    if tgt.is_empty() {
        tgt.push(LEXICON[idx[0]].1);
    }
    (capitalize(&src), capitalize(&tgt))
}

pub fn clean_pair<R: Rng>(rng: &mut R) -> (String, String) {
    pair_of_len(rng, 4, 9, 0.08)
}

pub fn monolingual<R: Rng>(rng: &mut R, n: usize) -> (Vec<String>, Vec<String>) {
    (0..n).map(|_| pair_of_len(rng, 3, 10, 0.0)).unzip()
}

fn bag(text: &str) -> HashMap<String, f64> {
    let mut m = HashMap::new();
    for w in text.split_whitespace() {
        let w: String = w.chars().filter(|c| c.is_alphabetic()).flat_map(char::to_lowercase).collect();
        if !w.is_empty() {
            *m.entry(w).or_insert(0.0) += 1.0;
        }
    }
    m
}

/// Stand-in for an embedding similarity: cosine between the glossary
/// translation of the source and the target, as bags of words.
pub fn glossary_similarity(source: &str, target: &str) -> f64 {
    let gloss: HashMap<&str, &str> = LEXICON.iter().copied().collect();
    let mut translated = HashMap::new();
    for (w, c) in bag(source) {
        if let Some(t) = gloss.get(w.as_str()) {
            *translated.entry(t.to_string()).or_insert(0.0) += c;
        }
    }
    let tgt = bag(target);
    let dot: f64 = translated.iter().map(|(w, c)| c * tgt.get(w).copied().unwrap_or(0.0)).sum();
    let norm = |m: &HashMap<String, f64>| m.values().map(|v| v * v).sum::<f64>().sqrt();
    let denom = norm(&translated) * norm(&tgt);
    if denom == 0.0 {
        0.0
    } else {
        dot / denom
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Injection {
    ShuffledTarget,
    WrongScript,
    LengthExploded,
}

pub struct NoisyCorpus {
    pub corpus: Corpus,
    pub bad: BTreeSet<RecordId>,
    pub kinds: Vec<(RecordId, Injection)>,
    /// `sim` sidecar, one JSON object per record.
    pub sim_sidecar: String,
}

/// `n` pairs of which `n_bad` are corrupted, split evenly over the three
/// injection kinds and placed at random positions. Ids start at 1.
pub fn noisy_corpus(n: usize, n_bad: usize, seed: u64) -> NoisyCorpus {
    let mut rng = rng(seed);
    let clean: Vec<(String, String)> = (0..n).map(|_| clean_pair(&mut rng)).collect();
    let mut positions: Vec<usize> = (0..n).collect();
    positions.shuffle(&mut rng);
    let mut pairs = clean.clone();
    let mut kinds = Vec::new();
    for (j, &pos) in positions[..n_bad].iter().enumerate() {
        let kind = [Injection::ShuffledTarget, Injection::WrongScript, Injection::LengthExploded][j % 3];
        pairs[pos].1 = match kind {
            Injection::ShuffledTarget => {
                let mut other = rng.gen_range(0..n);
                while other == pos {
                    other = rng.gen_range(0..n);
                }
                clean[other].1.clone()
            }
            Injection::WrongScript => {
                let k = rng.gen_range(4..=9);
                let words: Vec<&str> = (0..k).map(|_| *GREEK.choose(&mut rng).unwrap()).collect();
                capitalize(&words)
            }
            Injection::LengthExploded => {
                let t = pairs[pos].1.clone();
                let reps = rng.gen_range(5..=8);
                vec![t; reps].join(" ")
            }
        };
        kinds.push((pos as RecordId + 1, kind));
    }
    let corpus = Corpus::from_pairs(
        pairs.iter().enumerate().map(|(i, (s, t))| SentencePair::new(i as RecordId + 1, s.as_str(), t.as_str())),
    )
    .expect("unique ids");
    let sim_sidecar = corpus
        .pairs()
        .map(|p| {
            serde_json::json!({ "id": p.id, "scores": { "sim": glossary_similarity(&p.source, &p.target) } })
                .to_string()
                + "\n"
        })
        .collect();
    NoisyCorpus { corpus, bad: kinds.iter().map(|k| k.0).collect(), kinds, sim_sidecar }
}

/// `n` clean pairs with ids `1..=n`.
pub fn synthetic_corpus(n: usize, seed: u64) -> Corpus {
    let mut rng = rng(seed);
    Corpus::from_pairs((1..=n as RecordId).map(|id| {
        let (s, t) = clean_pair(&mut rng);
        SentencePair::new(id, s, t)
    }))
    .expect("unique ids")
}

/// Short pairs (2 to 5 words) for the large selection sweep.
pub fn short_corpus(n: usize, seed: u64) -> Corpus {
    let mut rng = rng(seed);
    Corpus::from_pairs((1..=n as RecordId).map(|id| {
        let (s, t) = pair_of_len(&mut rng, 2, 5, 0.05);
        SentencePair::new(id, s, t)
    }))
    .expect("unique ids")
}

/// Clean pairs with lengths and random filter scores, a tenth of them on
/// range edges.
pub fn random_scored(seed: u64, n: usize) -> Corpus {
    let mut rng = rng(seed);
    let mut corpus = synthetic_corpus(n, seed);
    for rec in corpus.records_mut() {
        let id = rec.id();
        for (key, lo, hi) in [
            (keys::LANG_SRC_CONF, -1.0, 1.0),
            (keys::LANG_TGT_CONF, -1.0, 1.0),
            (keys::BPC_SUM, 1.0, 8.0),
            (keys::SIM, 0.0, 1.0),
        ] {
            let v: f64 =
                if rng.gen_bool(0.1) { [lo, hi, (lo + hi) / 2.0][rng.gen_range(0..3)] } else { rng.gen_range(lo..hi) };
            rec.scores.set(id, key, v).unwrap();
        }
    }
    annotate_lengths(corpus)
}

/// Valid filter specs with a random subset of criteria.
pub fn spec_strategy() -> impl Strategy<Value = FilterSpec> {
    (
        proptest::option::of(0.0..1.0f64),
        proptest::option::of(1.0..8.0f64),
        proptest::option::of(0.0..1.0f64),
        proptest::option::of(0u64..40),
        proptest::option::of(0u64..30),
        proptest::option::of(20u64..90),
        any::<bool>(),
    )
        .prop_map(|(lang, bpc, sim, diff, min_len, max_len, asc)| FilterSpec {
            require_langs: lang.map(|c| LangRequirement {
                src_label: "en".into(),
                tgt_label: "uk".into(),
                min_conf: c,
            }),
            max_bpc_sum: bpc,
            min_similarity: sim,
            max_len_diff: diff,
            min_len,
            max_len,
            output_order: if asc { OutputOrder::SimilarityAscending } else { OutputOrder::Input },
        })
        .prop_filter("at least one criterion", |s| s.validate().is_ok())
}
