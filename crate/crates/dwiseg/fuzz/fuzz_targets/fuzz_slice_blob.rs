#![no_main]

use libfuzzer_sys::fuzz_target;

// The first two bytes pick the claimed dimensions so the decoders see both
// matching and mismatching length claims for the same payload.
fuzz_target!(|data: &[u8]| {
    if data.len() < 2 {
        return;
    }
    let height = (data[0] % 32) as usize + 1;
    let width = (data[1] % 32) as usize + 1;
    let blob = &data[2..];
    let _ = dwiseg::data::decode_image_blob(blob, height, width);
    let _ = dwiseg::data::decode_mask_blob(blob, height, width);
});
