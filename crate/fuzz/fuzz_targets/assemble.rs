#![no_main]

//! Input is three sections separated by NUL bytes: edges, features, labels.

use libfuzzer_sys::fuzz_target;
use nlgnn::graph::io::{assemble, parse_edges, parse_features, parse_labels};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let mut parts = text.splitn(3, '\0');
    let (Some(e), Some(f), Some(l)) = (parts.next(), parts.next(), parts.next()) else { return };
    let (Ok(edges), Ok(features), Ok(labels)) =
        (parse_edges(e, "e"), parse_features(f, "f"), parse_labels(l, "l", None))
    else {
        return;
    };
    if let Ok(g) = assemble(&edges, features, labels, None, "e") {
        assert!(g.labels().iter().all(|&y| y < g.num_classes()));
        if let Ok(h) = nlgnn::graph::homophily(&g) {
            assert!((0.0..=1.0).contains(&h));
        }
    }
});
