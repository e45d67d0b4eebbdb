#![no_main]

use harmonize::model::{decode_blocks, decode_checkpoint, Arch};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let _ = decode_blocks(data);
    let _ = decode_checkpoint(data, &Arch::default());
});
