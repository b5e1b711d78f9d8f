use std::path::{Path, PathBuf};

use proptest::prelude::*;

use seqvo::data::{parse_intrinsics, parse_poses, KvConfig};
use seqvo::eval::{accumulate_trajectory, ate};
use seqvo::flow::{decode_flow, encode_flow};
use seqvo::geometry::Pose6;
use seqvo::nets::{decode_checkpoint, encode_checkpoint};
use seqvo::train::TrainConfig;
use seqvo::Error;

fn repo(rel: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..").join(rel)
}

#[test]
fn kitti_calibration_fixture() {
    let k = parse_intrinsics(&repo("crates/core/tests/fixtures/calib.txt"), 2, 1241, 376).unwrap();
    assert_eq!((k.fx, k.fy, k.cx, k.cy), (718.856, 718.856, 607.1928, 185.2157));
    match parse_intrinsics(&repo("crates/core/tests/fixtures/calib.txt"), 7, 1241, 376) {
        Err(Error::Parse { field, .. }) => assert_eq!(field, "P7"),
        other => panic!("expected a parse error, got {other:?}"),
    }
}

#[test]
fn fuzz_seeds_decode() {
    let dir = |name: &str| std::fs::read_dir(repo(&format!("fuzz/corpus/{name}"))).unwrap();
    for entry in dir("flow_decode") {
        let path = entry.unwrap().path();
        let bytes = std::fs::read(&path).unwrap();
        let decoded = decode_flow(&bytes, "seed");
        let truncated = path.file_name().unwrap().to_string_lossy().starts_with("truncated");
        assert_eq!(decoded.is_err(), truncated, "{}", path.display());
        if let Ok(f) = decoded {
            assert_eq!(encode_flow(&f), bytes);
        }
    }
    for entry in dir("checkpoint_decode") {
        let bytes = std::fs::read(entry.unwrap().path()).unwrap();
        assert_eq!(encode_checkpoint(&decode_checkpoint(&bytes, "seed").unwrap()), bytes);
    }
    let three = std::fs::read_to_string(repo("fuzz/corpus/poses_parse/three.txt")).unwrap();
    assert_eq!(parse_poses(&three, "seed").unwrap().len(), 3);
    let train = std::fs::read_to_string(repo("fuzz/corpus/kv_parse/train.cfg")).unwrap();
    let cfg = TrainConfig::from_kv(KvConfig::parse(&train, "seed").unwrap(), Path::new(".")).unwrap();
    cfg.validate().unwrap();
}

#[test]
fn shipped_configs_are_valid() {
    for name in ["configs/synthetic.cfg", "configs/kitti.cfg"] {
        TrainConfig::load(&repo(name)).unwrap().validate().unwrap();
    }
}

fn pose() -> impl Strategy<Value = Pose6> {
    (
        -2.0..2.0f64,
        -0.5..0.5f64,
        -2.0..2.0f64,
        -0.2..0.2f64,
        -0.2..0.2f64,
        -0.2..0.2f64,
    )
        .prop_map(|(a, b, c, d, e, f)| Pose6::new(a, b, c, d, e, f))
}

proptest! {
    #[test]
    fn ate_ignores_prediction_scale(rel in proptest::collection::vec(pose(), 4..12), s in 0.05..20.0f64) {
        let gt = accumulate_trajectory(&rel).unwrap();
        let scaled: Vec<Pose6> = rel
            .iter()
            .map(|p| Pose6::new(s * p.tx, s * p.ty, s * p.tz, p.rx, p.ry, p.rz))
            .collect();
        let pred = accumulate_trajectory(&scaled).unwrap();
        prop_assert!(ate(&pred, &gt, 5).unwrap() < 1e-9);
    }
}
