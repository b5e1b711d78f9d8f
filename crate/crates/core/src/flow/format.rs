//! `VOFL` flow files: 4 magic bytes, `u32` LE width, `u32` LE height, then
//! `height * width * 2` little-endian `f32` values, row-major, `u` before `v`.

use std::path::Path;

use super::FlowField;
use crate::error::{Error, Result};

pub const FLOW_MAGIC: &[u8; 4] = b"VOFL";
const HEADER_LEN: usize = 12;

pub fn encode_flow(f: &FlowField) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN + f.data().len() * 4);
    out.extend_from_slice(FLOW_MAGIC);
    out.extend_from_slice(&(f.width() as u32).to_le_bytes());
    out.extend_from_slice(&(f.height() as u32).to_le_bytes());
    for v in f.data() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

/// Parses a flow file image. `source_name` labels errors.
pub fn decode_flow(bytes: &[u8], source_name: &str) -> Result<FlowField> {
    let err = |field: &str, msg: String| Error::parse(source_name, field, None, msg);
    if bytes.len() < 4 {
        return Err(err("magic", format!("file is only {} bytes long", bytes.len())));
    }
    if &bytes[..4] != FLOW_MAGIC {
        return Err(err("magic", format!("expected \"VOFL\", found {:?}", &bytes[..4])));
    }
    if bytes.len() < HEADER_LEN {
        return Err(err("header", "truncated width/height header".into()));
    }
    let word = |at: usize| u32::from_le_bytes(bytes[at..at + 4].try_into().expect("4 bytes"));
    let (width, height) = (word(4) as usize, word(8) as usize);
    let payload_len = width
        .checked_mul(height)
        .and_then(|n| n.checked_mul(8))
        .ok_or_else(|| err("dimensions", format!("{width}x{height} overflows")))?;
    let payload = &bytes[HEADER_LEN..];
    if payload.len() != payload_len {
        return Err(err(
            "payload",
            format!(
                "expected {payload_len} bytes for {width}x{height}, found {}",
                payload.len()
            ),
        ));
    }
    let data: Vec<f32> = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
        .collect();
    if let Some(i) = data.iter().position(|v| !v.is_finite()) {
        return Err(err("payload", format!("non-finite value at index {i}")));
    }
    FlowField::new(width, height, data)
}

pub fn write_flow(path: &Path, f: &FlowField) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    std::fs::write(path, encode_flow(f)).map_err(|e| Error::io(path, e))
}

pub fn load_precomputed_flow(path: &Path) -> Result<FlowField> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_flow(&bytes, &path.display().to_string())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn field_of(err: Error) -> String {
        match err {
            Error::Parse { field, .. } => field,
            other => panic!("expected parse error, got {other}"),
        }
    }

    #[test]
    fn zero_flow_file() {
        let bytes = encode_flow(&FlowField::zeros(4, 4));
        assert_eq!(bytes.len(), 12 + 4 * 4 * 8);
        let f = decode_flow(&bytes, "mem").unwrap();
        assert_eq!((f.width(), f.height()), (4, 4));
        assert!(f.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn malformed_inputs_name_the_field() {
        let good = encode_flow(&FlowField::constant(3, 2, 1.0, -1.0));
        assert_eq!(field_of(decode_flow(&good[..good.len() - 1], "t").unwrap_err()), "payload");
        assert_eq!(field_of(decode_flow(&good[..10], "t").unwrap_err()), "header");
        assert_eq!(field_of(decode_flow(b"VO", "t").unwrap_err()), "magic");
        let mut bad = good.clone();
        bad[0] = b'X';
        assert_eq!(field_of(decode_flow(&bad, "t").unwrap_err()), "magic");
        let mut huge = FLOW_MAGIC.to_vec();
        huge.extend_from_slice(&u32::MAX.to_le_bytes());
        huge.extend_from_slice(&u32::MAX.to_le_bytes());
        assert!(decode_flow(&huge, "t").is_err());
        let mut nan = good;
        nan[12..16].copy_from_slice(&f32::NAN.to_le_bytes());
        assert_eq!(field_of(decode_flow(&nan, "t").unwrap_err()), "payload");
    }

    #[test]
    fn missing_file_is_io_error() {
        assert!(matches!(
            load_precomputed_flow(Path::new("/nonexistent/x.vofl")),
            Err(Error::Io { .. })
        ));
    }

    proptest! {
        #[test]
        fn round_trip_is_bit_exact(
            (w, h, data) in (1usize..6, 1usize..6).prop_flat_map(|(w, h)| {
                (Just(w), Just(h), proptest::collection::vec(
                    proptest::num::f32::NORMAL | proptest::num::f32::SUBNORMAL | proptest::num::f32::ZERO,
                    w * h * 2))
            })
        ) {
            let f = FlowField::new(w, h, data).unwrap();
            let back = decode_flow(&encode_flow(&f), "prop").unwrap();
            prop_assert_eq!(
                back.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
                f.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>()
            );
        }
    }
}
