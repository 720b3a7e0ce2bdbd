#![no_main]

use dragoman::charlm::CharNGramLM;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(m) = CharNGramLM::from_bytes(data) else {
        return;
    };
    assert_eq!(CharNGramLM::from_bytes(&m.to_bytes()).unwrap().to_bytes(), m.to_bytes());
    let total: f64 = m.distribution("ab").iter().map(|(_, p)| p).sum();
    assert!((total - 1.0).abs() < 1e-6);
});
