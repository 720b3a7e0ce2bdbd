#![no_main]

use dragoman::corpus::{parse_tsv, write_tsv, ParseMode};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let strict = parse_tsv(data, ParseMode::Strict);
    let Ok((corpus, _)) = parse_tsv(data, ParseMode::Lenient) else {
        return;
    };
    if let Ok((s, _)) = strict {
        assert_eq!(s, corpus);
    }
    let mut buf = Vec::new();
    write_tsv(&corpus, &mut buf).unwrap();
    assert_eq!(parse_tsv(&buf, ParseMode::Strict).unwrap().0, corpus);
});
