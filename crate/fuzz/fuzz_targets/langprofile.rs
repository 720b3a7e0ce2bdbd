#![no_main]

use dragoman::langid::LangProfile;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(p) = LangProfile::parse(text) {
        assert_eq!(LangProfile::parse(&p.to_text()).unwrap(), p);
    }
});
