#![no_main]

use dragoman::config::PipelineConfig;
use dragoman::filter::FilterSpec;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(spec) = FilterSpec::from_config_str(text) {
        assert!(spec.validate().is_ok());
        assert_eq!(FilterSpec::from_config_str(&spec.to_config_string()).unwrap(), spec);
    }
    if let Ok(cfg) = PipelineConfig::from_toml(text) {
        let _ = cfg.filter_spec();
        let _ = cfg.crossval_options();
    }
});
