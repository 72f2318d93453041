#![no_main]

use labelaug::corpus::{build_vocab, parse_records, records_to_split, DataFormat};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    let Ok(records) = parse_records(text, DataFormat::Tsv) else {
        return;
    };
    assert!(!records.is_empty() || text.trim().is_empty());
    let lines: Vec<&str> = records.iter().map(|r| r.text.as_str()).collect();
    if let Ok(vocab) = build_vocab(&lines, 1) {
        let _ = records_to_split(&records, &vocab, &[]);
    }
});
