#![no_main]

use labelaug::augment::{parse_lexicon_json, SynonymLexicon};
use labelaug::corpus::build_vocab;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    let Ok(raw) = parse_lexicon_json(text) else {
        return;
    };
    let words: Vec<String> = raw
        .iter()
        .flat_map(|(k, v)| std::iter::once(k.clone()).chain(v.iter().cloned()))
        .collect();
    if let Ok(vocab) = build_vocab(&words, 1) {
        let _ = SynonymLexicon::from_words(&raw, &vocab);
    }
});
