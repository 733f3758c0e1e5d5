#![no_main]
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(m) = tdmix::io::decode_checkpoint(data) {
        assert_eq!(tdmix::io::encode_checkpoint(&m), data);
    }
});
