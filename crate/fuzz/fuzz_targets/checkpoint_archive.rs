#![no_main]
use libfuzzer_sys::fuzz_target;
use semcom_core::archive::Archive;
use semcom_core::saliency::TaskModel;
use semcom_core::vq::CodecModel;

fuzz_target!(|data: &[u8]| {
    let Ok(archive) = Archive::from_bytes(data) else { return };
    let again = Archive::from_bytes(&archive.to_bytes().unwrap()).unwrap();
    assert_eq!(again.kind, archive.kind);
    assert_eq!(again.tensors.len(), archive.tensors.len());
    let _ = CodecModel::<f32>::from_archive(&archive);
    let _ = TaskModel::<f32>::from_archive(&archive);
});
