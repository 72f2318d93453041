#![no_main]

use labelaug::model::{decode_checkpoint, encode_checkpoint};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(model) = decode_checkpoint(data) {
        // bytes, not values: NaN payloads must survive unchanged
        assert_eq!(encode_checkpoint(&model), data);
    }
});
