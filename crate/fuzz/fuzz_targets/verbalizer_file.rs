#![no_main]

use labelaug::verbalizer::parse_verbalizer_text;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(classes) = parse_verbalizer_text(text) {
        assert!(classes.iter().all(|words| !words.is_empty()));
        let again: Vec<String> = classes.iter().map(|w| w.join(",")).collect();
        assert_eq!(parse_verbalizer_text(&again.join("\n")).unwrap(), classes);
    }
});
