#![no_main]

use harmonize::pointcloud::{parse_ascii_scan, write_ascii_scan};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(scan) = parse_ascii_scan(text) {
            let again = parse_ascii_scan(&write_ascii_scan(&scan)).unwrap();
            assert_eq!(again, scan);
        }
    }
});
