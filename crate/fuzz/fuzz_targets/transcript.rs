#![no_main]
use libfuzzer_sys::fuzz_target;
use semcom_core::protocol::Transcript;

fuzz_target!(|data: &[u8]| {
    if let Ok(log) = Transcript::from_bytes(data) {
        assert_eq!(log.to_bytes(), data);
        let _ = log.messages();
    }
});
