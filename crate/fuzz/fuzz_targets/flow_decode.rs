#![no_main]

use libfuzzer_sys::fuzz_target;
use seqvo::flow::{decode_flow, encode_flow};

fuzz_target!(|data: &[u8]| {
    if let Ok(flow) = decode_flow(data, "fuzz") {
        let bytes = encode_flow(&flow);
        let again = decode_flow(&bytes, "fuzz").expect("re-encoded flow decodes");
        assert_eq!(encode_flow(&again), bytes);
    }
});
