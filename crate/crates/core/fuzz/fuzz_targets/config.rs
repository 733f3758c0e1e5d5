#![no_main]
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(cfg) = tdmix::io::ExperimentConfig::parse(text) {
            let back = tdmix::io::ExperimentConfig::parse(&cfg.format()).expect("formatted configs parse");
            assert_eq!(back.format(), cfg.format());
        }
    }
});
