#![no_main]
use libfuzzer_sys::fuzz_target;
use semcom_core::protocol::{payload_bits, SemMessage};

fuzz_target!(|data: &[u8]| {
    let Ok(msg) = SemMessage::deserialize(data) else { return };
    // the parser is strict, so anything it accepts must re-encode to the same bytes
    let bytes = msg.serialize().expect("accepted message re-serializes");
    assert_eq!(bytes, data);
    assert!(payload_bits(&msg) <= 8 * data.len() as u64);
});
