mod common;

use dragoman::corpus::{Corpus, SentencePair};
use dragoman::pipeline::{build_prompts, PromptMode};
use dragoman::prompt::{
    build_fewshot, contextual_prompt, format_pair, select_demos, CharNgramCosine, Demonstration, Similarity,
    INST_CLOSE, INST_OPEN,
};
use proptest::prelude::*;

fn text() -> impl Strategy<Value = String> {
    "[^\n\r]{1,40}".prop_filter("non-blank", |s| !s.trim().is_empty())
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 1000, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn unmasked_part_is_the_target(src in text(), tgt in "[^\n\r]{0,40}") {
        let ex = format_pair(&src, &tgt).unwrap();
        prop_assert_eq!(ex.unmasked(), tgt.clone());
        prop_assert_eq!(ex.mask_spans.len(), 1);
        let (start, end) = ex.mask_spans[0];
        prop_assert_eq!(start, 0);
        let prefix: String = ex.text.chars().take(end).collect();
        prop_assert_eq!(prefix, format!("{INST_OPEN} {src} {INST_CLOSE} "));
    }

    #[test]
    fn fewshot_ends_with_the_open_query(demos in proptest::collection::vec((text(), text()), 0..5), query in text()) {
        let demos: Vec<Demonstration> = demos.into_iter().map(|(s, t)| Demonstration::new(s, t).unwrap()).collect();
        let p = build_fewshot(&demos, &query).unwrap();
        let expected_tail = format!("{INST_OPEN} {query} {INST_CLOSE}");
        prop_assert!(p.ends_with(&expected_tail));
        prop_assert_eq!(p.lines().count(), demos.len() + 1);
        for (line, d) in p.lines().zip(&demos) {
            prop_assert_eq!(line.to_string(), format!("{INST_OPEN} {} {INST_CLOSE} {}", d.source, d.target));
        }
    }

    #[test]
    fn contextual_uses_the_last_window(hist in proptest::collection::vec((text(), text()), 0..8), window in 0usize..10, query in text()) {
        let p = contextual_prompt(&hist, window, &query).unwrap();
        let used = window.min(hist.len());
        prop_assert_eq!(p.lines().count(), used + 1);
        if used > 0 {
            let first = &hist[hist.len() - used];
            let head = format!("{INST_OPEN} {} {INST_CLOSE} {}", first.0, first.1);
            prop_assert!(p.starts_with(&head));
        }
    }

    #[test]
    fn selected_demos_are_the_most_similar(pool in proptest::collection::vec(text(), 1..12), query in text(), n in 0usize..12) {
        prop_assume!(n <= pool.len());
        let pool: Vec<Demonstration> = pool.into_iter().map(|s| Demonstration::new(s, "t").unwrap()).collect();
        let sim = CharNgramCosine::default();
        let picked = select_demos(&pool, &query, n, &sim).unwrap();
        prop_assert_eq!(picked.len(), n);
        let scores: Vec<f64> = picked.iter().map(|d| sim.similarity(&d.source, &query)).collect();
        prop_assert!(scores.windows(2).all(|w| w[0] <= w[1]));
        let floor = scores.first().copied().unwrap_or(f64::INFINITY);
        let better_left_out = pool.iter().filter(|d| sim.similarity(&d.source, &query) > floor).count();
        prop_assert!(better_left_out <= n);
    }
}

fn corpus() -> Corpus {
    Corpus::from_pairs([
        SentencePair::new(1, "Good morning.", "Доброго ранку."),
        SentencePair::new(2, "Where is the station?", "Де вокзал?"),
        SentencePair::new(3, "The station is there.", "Вокзал там."),
    ])
    .unwrap()
}

#[test]
fn train_prompts_mask_the_instruction() {
    let recs = build_prompts(&corpus(), &PromptMode::Train).unwrap();
    assert_eq!(recs[1].prompt, "[INST] Where is the station? [/INST] Де вокзал?");
    assert_eq!(recs[1].mask_spans, [(0, 37)]);
}

#[test]
fn inference_prompts_are_fully_masked() {
    let pool = Demonstration::pool_from_corpus(&corpus());
    for mode in [PromptMode::FewShot { pool, n: 2 }, PromptMode::Contextual { window: 2 }] {
        for r in build_prompts(&corpus(), &mode).unwrap() {
            assert_eq!(r.mask_spans, [(0, r.prompt.chars().count())]);
            assert!(r.prompt.ends_with(INST_CLOSE));
        }
    }
    let ctx = build_prompts(&corpus(), &PromptMode::Contextual { window: 2 }).unwrap();
    assert_eq!(ctx[0].prompt, "[INST] Good morning. [/INST]");
    assert_eq!(ctx[2].prompt.lines().count(), 3);
}

#[test]
fn blank_inputs_are_errors() {
    assert!(Demonstration::new("a", " ").is_err());
    assert!(Demonstration::new("", "b").is_err());
    assert!(build_fewshot(&[], " \t").is_err());
    let pool = Demonstration::pool_from_corpus(&corpus());
    assert!(build_prompts(&corpus(), &PromptMode::FewShot { pool, n: 4 }).is_err());
}
