//! Dataset files.
//!
//! ```text
//! "LHD1" | u16 version | u64 count | u32 manifest length | manifest (UTF-8 JSON)
//! count x (u16 source, u16 target, u16 n, n x (f32 dx, f32 dy, f32 dz, f32 i),
//!          f32 gt_interp, f32 gt_harm, f32 x_norm)
//! ```

use std::path::Path;

use super::{recount, DatasetManifest, Example};
use crate::codec::{Reader, Writer};
use crate::error::{Error, Result};

pub const DATASET_MAGIC: &[u8; 4] = b"LHD1";
const VERSION: u16 = 1;
const MIN_RECORD: usize = 2 + 2 + 2 + 16 + 12;

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

fn encode_examples(examples: &[Example]) -> Vec<u8> {
    let mut w = Writer::default();
    for e in examples {
        w.u16(e.source_id);
        w.u16(e.target_id);
        let n = u16::try_from(e.neighbors.len()).expect("neighborhood larger than u16::MAX");
        w.u16(n);
        for f in &e.neighbors {
            for v in f {
                w.f32(*v);
            }
        }
        w.f32(e.gt_interp);
        w.f32(e.gt_harm);
        w.f32(e.x_norm);
    }
    w.buf
}

/// Encodes the dataset; the manifest's count, pair/bin tables and checksum
/// are recomputed from `examples`.
pub fn encode_dataset(manifest: &DatasetManifest, examples: &[Example]) -> Vec<u8> {
    let payload = encode_examples(examples);
    let (pairs, bins) = recount(examples, manifest.n_bins);
    let manifest = DatasetManifest {
        count: examples.len() as u64,
        pairs,
        bins,
        checksum: format!("{:016x}", fnv1a(&payload)),
        ..manifest.clone()
    };
    let json = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    let mut w = Writer::with_capacity(payload.len() + json.len() + 32);
    w.bytes(DATASET_MAGIC);
    w.u16(VERSION);
    w.u64(examples.len() as u64);
    w.u32(json.len() as u32);
    w.bytes(json.as_bytes());
    w.bytes(&payload);
    w.buf
}

fn unit(v: f32) -> bool {
    (0.0..=1.0).contains(&v)
}

pub fn decode_dataset(bytes: &[u8]) -> Result<(DatasetManifest, Vec<Example>)> {
    if bytes.len() < 4 || &bytes[..4] != DATASET_MAGIC {
        return Err(Error::at_offset(0, "bad magic"));
    }
    let mut r = Reader::new(bytes);
    r.take(4, "magic")?;
    let version = r.u16("version")?;
    if version != VERSION {
        return Err(Error::at_offset(
            4,
            format!("unsupported version {version}"),
        ));
    }
    let count_at = r.offset();
    let count = r.u64("example count")?;
    let len = r.u32("manifest length")? as usize;
    let at = r.offset();
    let text = std::str::from_utf8(r.take(len, "manifest")?)
        .map_err(|e| Error::at_offset(at, format!("manifest is not UTF-8: {e}")))?;
    let manifest: DatasetManifest =
        serde_json::from_str(text).map_err(|e| Error::at_offset(at, format!("manifest: {e}")))?;
    if manifest.n_bins == 0 {
        return Err(Error::Corrupted("manifest declares zero bins".into()));
    }
    let payload_start = r.offset();
    if (count as u128) * (MIN_RECORD as u128) > r.remaining() as u128 {
        return Err(Error::at_offset(
            count_at,
            format!("truncated payload: {count} examples cannot fit"),
        ));
    }
    let mut examples = Vec::with_capacity(count as usize);
    for _ in 0..count {
        let at = r.offset();
        let source_id = r.u16("source id")?;
        let target_id = r.u16("target id")?;
        let n = r.u16("neighbor count")? as usize;
        if n == 0 {
            return Err(Error::at_offset(at, "example without neighbors"));
        }
        let mut neighbors = Vec::with_capacity(n);
        for _ in 0..n {
            let f = [r.f32("dx")?, r.f32("dy")?, r.f32("dz")?, r.f32("i")?];
            if !f[..3].iter().all(|v| v.is_finite()) || !unit(f[3]) {
                return Err(Error::at_offset(at, "invalid neighbor feature"));
            }
            neighbors.push(f);
        }
        let e = Example {
            neighbors,
            source_id,
            target_id,
            gt_interp: r.f32("gt_interp")?,
            gt_harm: r.f32("gt_harm")?,
            x_norm: r.f32("x_norm")?,
        };
        if !(unit(e.gt_interp) && unit(e.gt_harm) && unit(e.x_norm)) {
            return Err(Error::at_offset(at, "ground truth outside [0, 1]"));
        }
        examples.push(e);
    }
    r.expect_end()?;

    if manifest.count != count {
        return Err(Error::Corrupted(format!(
            "header count {count} but manifest count {}",
            manifest.count
        )));
    }
    let sum = format!("{:016x}", fnv1a(&bytes[payload_start..]));
    if sum != manifest.checksum {
        return Err(Error::Corrupted(format!(
            "checksum {sum} does not match manifest {}",
            manifest.checksum
        )));
    }
    let (pairs, bins) = recount(&examples, manifest.n_bins);
    if pairs != manifest.pairs || bins != manifest.bins {
        return Err(Error::Corrupted(
            "pair or bin counts disagree with the examples".into(),
        ));
    }
    Ok((manifest, examples))
}

pub fn save_dataset(path: &Path, manifest: &DatasetManifest, examples: &[Example]) -> Result<()> {
    std::fs::write(path, encode_dataset(manifest, examples)).map_err(|e| Error::io(path, e))
}

pub fn load_dataset(path: &Path) -> Result<(DatasetManifest, Vec<Example>)> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_dataset(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::error::Location;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_examples(n: usize, seed: u64) -> Vec<Example> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| {
                let k = rng.random_range(1..20);
                Example {
                    neighbors: (0..k)
                        .map(|_| {
                            [
                                rng.random_range(-1.0..1.0),
                                rng.random_range(-1.0..1.0),
                                rng.random_range(-1.0..1.0),
                                rng.random(),
                            ]
                        })
                        .collect(),
                    source_id: rng.random_range(0..4),
                    target_id: 2,
                    gt_interp: rng.random(),
                    gt_harm: rng.random(),
                    x_norm: rng.random(),
                }
            })
            .collect()
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let ex = random_examples(10_000, 1);
        let manifest = DatasetManifest::describe(&ex, 10);
        let bytes = encode_dataset(&manifest, &ex);
        let (m, back) = decode_dataset(&bytes).unwrap();
        assert_eq!(back, ex);
        assert_eq!(encode_dataset(&m, &back), bytes);
        let (pairs, bins) = recount(&ex, 10);
        assert_eq!(m.pairs, pairs);
        assert_eq!(m.bins, bins);
        assert_eq!(m.bins.iter().sum::<u64>(), m.count);
    }

    #[test]
    fn truncated_file_reports_offset() {
        let ex = random_examples(20, 2);
        let bytes = encode_dataset(&DatasetManifest::describe(&ex, 10), &ex);
        match decode_dataset(&bytes[..bytes.len() - 3]).unwrap_err() {
            Error::Format {
                location: Location::Offset(_),
                message,
            } => assert!(message.contains("truncated"), "{message}"),
            other => panic!("unexpected {other:?}"),
        }
        assert!(decode_dataset(b"").is_err());
    }

    #[test]
    fn flipped_payload_fails_checksum() {
        let ex = random_examples(20, 3);
        let mut bytes = encode_dataset(&DatasetManifest::describe(&ex, 10), &ex);
        let last = bytes.len() - 1;
        bytes[last - 13] ^= 0x01;
        assert!(matches!(
            decode_dataset(&bytes),
            Err(Error::Corrupted(_)) | Err(Error::Format { .. })
        ));
    }
}
