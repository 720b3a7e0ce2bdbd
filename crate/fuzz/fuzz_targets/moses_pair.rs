#![no_main]

use dragoman::corpus::{parse_moses_pair, ParseMode};
use libfuzzer_sys::fuzz_target;

// The input is split at its first NUL byte into source and target files.
fuzz_target!(|data: &[u8]| {
    let cut = data.iter().position(|&b| b == 0).unwrap_or(data.len());
    let (src, tgt) = (&data[..cut], data.get(cut + 1..).unwrap_or(&[]));
    for mode in [ParseMode::Strict, ParseMode::Lenient] {
        if let Ok((corpus, report)) = parse_moses_pair(src, tgt, mode) {
            assert!(corpus.len() + report.malformed.len() <= src.split(|&b| b == b'\n').count());
        }
    }
});
