#![no_main]

use labelaug::corpus::SyntheticSpec;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(spec) = SyntheticSpec::from_json(text) {
        if spec.validate().is_ok() {
            let cues = spec.active_cues();
            assert_eq!(cues.len(), spec.class_count);
            let _ = spec.lexicon();
        }
    }
});
