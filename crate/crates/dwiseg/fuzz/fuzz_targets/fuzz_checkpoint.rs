#![no_main]

use libfuzzer_sys::fuzz_target;

// The loader promises to validate every length before allocating, so any
// panic or OOM on arbitrary bytes is a bug in the container format code.
fuzz_target!(|data: &[u8]| {
    let _ = dwiseg::model::load_checkpoint_bytes(data);
});
