#![no_main]

use libfuzzer_sys::fuzz_target;
use nlgnn::graph::io::parse_features;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(x) = parse_features(text, "fuzz") {
            assert_eq!(x.numel(), x.rows() * x.cols());
        }
    }
});
