#![no_main]

use libfuzzer_sys::fuzz_target;
use nlgnn::graph::io::parse_manifest;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(m) = parse_manifest(text, "fuzz") {
            let again = parse_manifest(&m.to_text(), "fuzz").expect("rendered manifest parses");
            assert_eq!(again.classes, m.classes);
            assert_eq!(again.name, m.name);
        }
    }
});
