#![no_main]

use libfuzzer_sys::fuzz_target;
use nlgnn::graph::io::parse_edges;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(edges) = parse_edges(text, "fuzz") {
            let lines = text.lines().count();
            assert!(edges.iter().all(|e| e.line >= 1 && e.line <= lines));
        }
    }
});
