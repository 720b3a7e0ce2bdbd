use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn dragoman(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dragoman")).current_dir(dir).args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    assert!(o.status.success(), "failed: {}", String::from_utf8_lossy(&o.stderr));
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn error_of(o: &Output) -> (i32, Value) {
    let err = String::from_utf8_lossy(&o.stderr);
    let json: Value = serde_json::from_str(err.trim()).unwrap_or_else(|e| panic!("stderr {err:?} not JSON: {e}"));
    assert!(json["message"].is_string());
    (o.status.code().unwrap(), json)
}

const CORPUS: &str = "\
1\tThe house is old.\tБудинок старий.
2\tWhere is the station?\tДе вокзал?
3\tGood morning.\tДоброго ранку, дорогі друзі, як ви сьогодні почуваєтеся цього чудового ранку?
4\tThe river is quiet.\tРічка тиха.
";

const SIM: &str = "\
{\"id\":1,\"scores\":{\"sim\":0.9}}
{\"id\":2,\"scores\":{\"sim\":0.2}}
{\"id\":3,\"scores\":{\"sim\":0.8}}
{\"id\":4,\"scores\":{\"sim\":0.7}}
";

fn workdir() -> tempfile::TempDir {
    let tmp = tempfile::tempdir().unwrap();
    fs::write(tmp.path().join("corpus.tsv"), CORPUS).unwrap();
    fs::write(tmp.path().join("sim.jsonl"), SIM).unwrap();
    tmp
}

#[test]
fn filter_with_inline_thresholds_and_sidecar() {
    let tmp = workdir();
    let d = tmp.path();
    let args = [
        "filter",
        "--corpus",
        "corpus.tsv",
        "--sidecar",
        "sim.jsonl",
        "--min-similarity",
        "0.5",
        "--max-len-diff",
        "40",
        "--out",
        "f",
        "--json",
    ];
    let report: Value = serde_json::from_str(&stdout(&dragoman(d, &args))).unwrap();
    assert_eq!(report["input_count"], 4);
    assert_eq!(report["kept_count"], 2);
    let kept = fs::read_to_string(d.join("f/kept.tsv")).unwrap();
    let ids: Vec<&str> = kept.lines().map(|l| l.split('\t').next().unwrap()).collect();
    assert_eq!(ids, ["1", "4"]);
    let scores = fs::read_to_string(d.join("f/kept.scores.jsonl")).unwrap();
    let first: Value = serde_json::from_str(scores.lines().next().unwrap()).unwrap();
    assert_eq!(first["scores"]["sim"], 0.9);

    let text = stdout(&dragoman(
        d,
        &["filter", "--corpus", "corpus.tsv", "--sidecar", "sim.jsonl", "--min-similarity", "0.5", "--out", "g"],
    ));
    assert!(text.starts_with("input:    4\nkept:     3\n"), "{text}");
}

#[test]
fn filter_reads_a_config_file() {
    let tmp = workdir();
    let d = tmp.path();
    fs::write(
        d.join("run.toml"),
        "corpus = \"corpus.tsv\"\nsidecars = [\"sim.jsonl\"]\nmin_similarity = 0.75\noutput_dir = \"c\"\n",
    )
    .unwrap();
    let out = stdout(&dragoman(d, &["--config", "run.toml", "filter"]));
    assert!(out.starts_with("input:    4\nkept:     2\n"), "{out}");
    // flags override the file
    let out = stdout(&dragoman(d, &["--config", "run.toml", "filter", "--min-similarity", "0.1"]));
    assert!(out.starts_with("input:    4\nkept:     4\n"), "{out}");
}

#[test]
fn select_prints_the_sweep() {
    let tmp = workdir();
    let d = tmp.path();
    let out = stdout(&dragoman(
        d,
        &[
            "--seed",
            "3",
            "select",
            "--corpus",
            "corpus.tsv",
            "--k",
            "2",
            "--percentiles",
            "50,100",
            "--lm-order",
            "2",
            "--out",
            "s",
        ],
    ));
    let rows: Vec<&str> = out.lines().collect();
    assert_eq!(rows[0], "threshold\texamples\tbleu_dev\tbleu_devtest");
    assert!(rows[1].starts_with("50\t2\t"), "{out}");
    assert!(rows[2].starts_with("100\t4\t"), "{out}");
    assert!(d.join("s/folds.tsv").is_file());
    assert!(d.join("s/logprob.jsonl").is_file());
}

#[test]
fn eval_text_and_json() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    fs::write(d.join("hyp.txt"), "The cat sat on the mat.\nHello there.\n").unwrap();
    fs::write(d.join("ref.txt"), "The cat sat on the mat.\nHello there.\n").unwrap();
    let out = stdout(&dragoman(d, &["eval", "--hyp", "hyp.txt", "--ref", "ref.txt"]));
    assert!(out.starts_with("BLEU = 100.00 "), "{out}");
    assert!(out.contains("chrF2 = 100.00\n") && out.contains("chrF2++ = 100.00\n"), "{out}");
    let json: Value = serde_json::from_str(&stdout(&dragoman(
        d,
        &["eval", "--hyp", "hyp.txt", "--ref", "ref.txt", "--metrics", "bleu", "--json"],
    )))
    .unwrap();
    assert_eq!(json["bleu"]["score"], 100.0);
    assert!(json.get("chrf").is_none());

    fs::write(d.join("short.txt"), "one\n").unwrap();
    let (code, err) = error_of(&dragoman(d, &["eval", "--hyp", "hyp.txt", "--ref", "short.txt"]));
    assert_eq!((code, err["error"].as_str().unwrap()), (1, "line_count_mismatch"));
}

#[test]
fn oracle_writes_outputs() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    fs::write(
        d.join("nbest.jsonl"),
        "{\"id\":0,\"hypotheses\":[{\"text\":\"a b x y\",\"score\":-1},{\"text\":\"a b c d\",\"score\":-2}]}\n",
    )
    .unwrap();
    fs::write(d.join("ref.txt"), "a b c d\n").unwrap();
    let out = stdout(&dragoman(
        d,
        &["oracle", "--nbest", "nbest.jsonl", "--ref", "ref.txt", "--widths", "1,2", "--out", "o"],
    ));
    assert_eq!(out, fs::read_to_string(d.join("o/oracle.tsv")).unwrap());
    assert!(out.lines().nth(2).unwrap().starts_with("2\t100.00\t"), "{out}");
    let choice: Value = serde_json::from_str(fs::read_to_string(d.join("o/choices.jsonl")).unwrap().trim()).unwrap();
    assert_eq!(choice["index"], 1);
}

#[test]
fn prompt_modes() {
    let tmp = workdir();
    let d = tmp.path();
    let out = stdout(&dragoman(d, &["prompt", "--corpus", "corpus.tsv"]));
    let first: Value = serde_json::from_str(out.lines().next().unwrap()).unwrap();
    assert_eq!(first["prompt"], "[INST] The house is old. [/INST] Будинок старий.");
    assert_eq!(first["mask_spans"], serde_json::json!([[0, 33]]));
    let text =
        stdout(&dragoman(d, &["prompt", "--corpus", "corpus.tsv", "--mode", "contextual", "--window", "1", "--text"]));
    assert!(text.starts_with("[INST] The house is old. [/INST]\n\n[INST] The house is old. [/INST] Будинок старий.\n[INST] Where is the station? [/INST]\n\n"), "{text}");
    let (code, err) = error_of(&dragoman(d, &["prompt", "--corpus", "corpus.tsv", "--mode", "fewshot"]));
    assert_eq!((code, err["error"].as_str().unwrap()), (1, "config"));
    let few = stdout(&dragoman(
        d,
        &["prompt", "--corpus", "corpus.tsv", "--mode", "fewshot", "--pool", "corpus.tsv", "--shots", "1"],
    ));
    assert_eq!(few.lines().count(), 4);
}

#[test]
fn lm_and_langid_round_trip_through_files() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    fs::write(d.join("en.txt"), "the house is old\nwhere is the station\nthe river is quiet today\n").unwrap();
    fs::write(d.join("uk.txt"), "будинок старий\nде вокзал\nрічка сьогодні тиха\n").unwrap();
    stdout(&dragoman(d, &["lm", "train", "--input", "en.txt", "--order", "3", "--out", "en.clm"]));
    let scored = stdout(&dragoman(d, &["lm", "score", "--model", "en.clm", "--input", "en.txt"]));
    for line in scored.lines() {
        let cols: Vec<f64> = line.split('\t').map(|c| c.parse().unwrap()).collect();
        assert!(cols[0] > 0.0 && cols[1] < 0.0, "{line}");
    }
    for lang in ["en", "uk"] {
        stdout(&dragoman(
            d,
            &["langid", "train", "--input", &format!("{lang}.txt"), "--lang", lang, "--out", &format!("{lang}.prof")],
        ));
    }
    fs::write(d.join("probe.txt"), "the station is old\nстарий вокзал\n").unwrap();
    let out = stdout(&dragoman(
        d,
        &["langid", "classify", "--profile", "en.prof", "--profile", "uk.prof", "--input", "probe.txt"],
    ));
    let labels: Vec<String> =
        out.lines().map(|l| serde_json::from_str::<Value>(l).unwrap()["label"].as_str().unwrap().to_owned()).collect();
    assert_eq!(labels, ["en", "uk"]);

    fs::write(d.join("junk.clm"), b"not a model").unwrap();
    let (code, err) = error_of(&dragoman(d, &["lm", "score", "--model", "junk.clm", "--input", "en.txt"]));
    assert_eq!((code, err["error"].as_str().unwrap()), (1, "bad_model"));
}

#[test]
fn strict_and_lenient_parsing() {
    let tmp = workdir();
    let d = tmp.path();
    fs::write(d.join("bad.tsv"), format!("{CORPUS}oops\n")).unwrap();
    let (code, err) = error_of(&dragoman(d, &["prompt", "--corpus", "bad.tsv"]));
    assert_eq!((code, err["error"].as_str().unwrap()), (1, "malformed_line"));
    let out = stdout(&dragoman(d, &["--lenient", "prompt", "--corpus", "bad.tsv"]));
    assert_eq!(out.lines().count(), 4);
}

#[test]
fn usage_and_io_errors() {
    let tmp = workdir();
    let d = tmp.path();
    let (code, err) = error_of(&dragoman(d, &["--strict", "--lenient", "version"]));
    assert_eq!((code, err["error"].as_str().unwrap()), (2, "usage"));
    let (code, err) = error_of(&dragoman(d, &["frobnicate"]));
    assert_eq!((code, err["error"].as_str().unwrap()), (2, "usage"));
    let (code, err) = error_of(&dragoman(d, &["eval", "--hyp", "missing.txt", "--ref", "missing.txt"]));
    assert_eq!((code, err["error"].as_str().unwrap()), (1, "io"));
    let (code, err) =
        error_of(&dragoman(d, &["filter", "--corpus", "corpus.tsv", "--preset", "paracrawl_8m", "--out", "x"]));
    assert_eq!((code, err["error"].as_str().unwrap()), (1, "missing_score"));
    let (code, err) = error_of(&dragoman(d, &["filter", "--corpus", "corpus.tsv", "--preset", "nope", "--out", "x"]));
    assert_eq!((code, err["error"].as_str().unwrap()), (1, "unknown_preset"));
}

#[test]
fn version_and_help() {
    let tmp = tempfile::tempdir().unwrap();
    let out = stdout(&dragoman(tmp.path(), &["version"]));
    assert!(out.starts_with("dragoman "), "{out}");
    assert!(out.lines().count() > 1);
    let help = stdout(&dragoman(tmp.path(), &["--help"]));
    assert!(help.contains("filter") && help.contains("oracle"));
}

#[test]
fn output_does_not_depend_on_workers() {
    let tmp = workdir();
    let d = tmp.path();
    let run = |w: &str, out: &str| {
        stdout(&dragoman(
            d,
            &["--workers", w, "--seed", "5", "select", "--corpus", "corpus.tsv", "--k", "2", "--out", out],
        ))
    };
    assert_eq!(run("1", "a"), run("3", "b"));
    for f in ["folds.tsv", "logprob.jsonl"] {
        assert_eq!(fs::read(d.join("a").join(f)).unwrap(), fs::read(d.join("b").join(f)).unwrap());
    }
}
