#![no_main]

use libfuzzer_sys::fuzz_target;
use seqvo::data::{format_poses, parse_poses};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(poses) = parse_poses(text, "fuzz") {
        let back = parse_poses(&format_poses(&poses), "fuzz").expect("formatted poses parse");
        assert_eq!(back.len(), poses.len());
    }
});
