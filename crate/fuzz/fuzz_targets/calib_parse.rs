#![no_main]

use libfuzzer_sys::fuzz_target;
use seqvo::data::parse_calibration;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(calib) = parse_calibration(text, "fuzz") {
        for index in 0..4 {
            let _ = calib.intrinsics(index, 64, 32);
        }
    }
});
