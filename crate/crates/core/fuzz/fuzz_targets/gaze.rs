#![no_main]
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(g) = tdmix::io::parse_gaze(text) {
            assert!((g.sum() - 1.0).abs() < 1e-9);
        }
    }
});
