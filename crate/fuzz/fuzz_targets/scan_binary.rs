#![no_main]

use harmonize::pointcloud::{decode_scan, encode_scan};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(scan) = decode_scan(data) {
        assert_eq!(encode_scan(&scan), data);
    }
});
