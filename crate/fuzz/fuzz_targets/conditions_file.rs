#![no_main]

use labelaug::harness::{ConditionsFile, ExperimentConfig};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(file) = ConditionsFile::from_json(text) {
        let base = ExperimentConfig::default();
        for c in &file.conditions {
            if let Ok(cfg) = base.with_json_overrides(&c.set) {
                let _ = cfg.validate();
            }
        }
    }
});
