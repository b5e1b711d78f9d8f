#![no_main]

use libfuzzer_sys::fuzz_target;
use seqvo::nets::{decode_checkpoint, encode_checkpoint};

fuzz_target!(|data: &[u8]| {
    if let Ok(ck) = decode_checkpoint(data, "fuzz") {
        let bytes = encode_checkpoint(&ck);
        let again = decode_checkpoint(&bytes, "fuzz").expect("re-encoded checkpoint decodes");
        assert_eq!(encode_checkpoint(&again), bytes);
    }
});
