#![no_main]

use dragoman::metrics::{sentence_bleu, sentence_chrf, tokenize_13a, ChrfConfig, EvalPair};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    let tokens = tokenize_13a(text);
    assert!(tokens.iter().all(|t| !t.is_empty() && !t.contains(' ')));
    let (hyp, reference) = text.split_once('\t').unwrap_or((text, text));
    let pair = EvalPair::new(hyp, [reference]).unwrap();
    assert!((0.0..=100.0).contains(&sentence_bleu(&pair).score));
    assert!((0.0..=100.0).contains(&sentence_chrf(&pair, ChrfConfig::CHRF_PLUS_PLUS).score));
});
