#![no_main]
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(d) = tdmix::io::decode_dataset(data) {
        let again = tdmix::io::encode_dataset(&d).expect("decoded datasets re-encode");
        assert_eq!(again, data);
    }
});
