#![no_main]
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(img) = tdmix::io::parse_pnm(data) {
        assert!(img.data().iter().all(|v| (0.0..=1.0).contains(v)));
    }
});
