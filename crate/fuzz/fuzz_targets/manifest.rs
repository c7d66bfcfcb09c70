#![no_main]
use std::path::Path;

use libfuzzer_sys::fuzz_target;
use semcom_core::imagecore::{LabeledDataset, Split};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(ds) = LabeledDataset::parse_manifest(text, Path::new("data"), 10, Split::Train) {
        assert!(ds.items.iter().all(|(_, label)| *label < 10));
    }
});
