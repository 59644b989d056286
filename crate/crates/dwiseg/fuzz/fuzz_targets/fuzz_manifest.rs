#![no_main]

use libfuzzer_sys::fuzz_target;

// Dataset manifests arrive from disk before any blob is read, so the parser
// must reject arbitrary bytes without panicking or over-allocating.
fuzz_target!(|data: &[u8]| {
    let _ = dwiseg::data::DatasetManifest::from_slice(data);
});
