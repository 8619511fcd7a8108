#![no_main]

use libfuzzer_sys::fuzz_target;
use nlgnn::graph::io::parse_labels;

fuzz_target!(|data: &[u8]| {
    let Some((&c, rest)) = data.split_first() else { return };
    let Ok(text) = std::str::from_utf8(rest) else { return };
    let classes = (c > 0).then_some(c as usize);
    if let Ok(labels) = parse_labels(text, "fuzz", classes) {
        if let Some(c) = classes {
            assert!(labels.iter().all(|&y| y < c));
        }
    }
});
