#![no_main]
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(plan) = tdmix::io::parse_plan(text) {
            assert_eq!(tdmix::io::parse_plan(&tdmix::io::format_plan(&plan)).unwrap(), plan);
        }
    }
});
