#![no_main]

use harmonize::response::parse_curves;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(curves) = parse_curves(text) {
            for c in curves {
                let (lo, hi) = c.curve.range();
                assert!(lo <= hi);
            }
        }
    }
});
