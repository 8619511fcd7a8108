#![no_main]

use libfuzzer_sys::fuzz_target;
use nlgnn::model::ModelParams;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(p) = ModelParams::from_json(text) {
            let back = ModelParams::from_json(&p.to_json().unwrap()).unwrap();
            assert_eq!(p, back);
        }
    }
});
