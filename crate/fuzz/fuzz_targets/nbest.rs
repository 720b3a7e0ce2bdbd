#![no_main]

use dragoman::oracle::{parse_nbest, write_nbest};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(lists) = parse_nbest(data) else {
        return;
    };
    assert!(lists.iter().all(|l| !l.hypotheses.is_empty()));
    let mut buf = Vec::new();
    write_nbest(&lists, &mut buf).unwrap();
    assert_eq!(parse_nbest(&buf[..]).unwrap(), lists);
});
