#![no_main]
use libfuzzer_sys::fuzz_target;
use semcom_core::kv::KvConfig;
use semcom_core::saliency::ClassifierConfig;
use semcom_core::vq::CodecConfig;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let Ok(kv) = KvConfig::parse(text) else { return };
    assert_eq!(KvConfig::parse(&kv.to_text()).unwrap(), kv);
    let _ = CodecConfig::from_kv(&kv);
    let _ = ClassifierConfig::from_kv(&kv, 10);
});
