#![no_main]

use harmonize::dataset::{decode_dataset, encode_dataset};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok((manifest, examples)) = decode_dataset(data) {
        let bytes = encode_dataset(&manifest, &examples);
        let (m2, e2) = decode_dataset(&bytes).unwrap();
        assert_eq!(e2, examples);
        assert_eq!(m2.count, examples.len() as u64);
    }
});
