#![no_main]

use libfuzzer_sys::fuzz_target;
use seqvo::data::KvConfig;
use seqvo::train::TrainConfig;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(kv) = KvConfig::parse(text, "fuzz") {
        if let Ok(cfg) = TrainConfig::from_kv(kv, std::path::Path::new(".")) {
            let _ = cfg.validate();
        }
    }
});
