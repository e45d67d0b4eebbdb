//! Feeds the checked-in fuzz corpus through every parser. Seeds named
//! `valid_*` must parse; everything else must fail cleanly.

use std::path::{Path, PathBuf};

use harmonize::config::Config;
use harmonize::dataset::decode_dataset;
use harmonize::model::decode_blocks;
use harmonize::pointcloud::{decode_scan, parse_ascii_scan};
use harmonize::response::parse_curves;

fn seeds(target: &str) -> Vec<(PathBuf, Vec<u8>)> {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../fuzz/corpus")
        .join(target);
    let mut out: Vec<_> = std::fs::read_dir(&dir)
        .unwrap_or_else(|e| panic!("{}: {e}", dir.display()))
        .map(|e| {
            let p = e.unwrap().path();
            let bytes = std::fs::read(&p).unwrap();
            (p, bytes)
        })
        .collect();
    out.sort();
    assert!(!out.is_empty(), "no seeds for {target}");
    out
}

fn run(target: &str, parse: impl Fn(&[u8]) -> bool) {
    for (path, bytes) in seeds(target) {
        let valid = path
            .file_name()
            .unwrap()
            .to_string_lossy()
            .starts_with("valid_");
        assert_eq!(parse(&bytes), valid, "{}", path.display());
    }
}

fn text(bytes: &[u8]) -> &str {
    std::str::from_utf8(bytes).unwrap_or("")
}

#[test]
fn scan_binary_seeds() {
    run("scan_binary", |b| decode_scan(b).is_ok());
}

#[test]
fn scan_ascii_seeds() {
    run("scan_ascii", |b| parse_ascii_scan(text(b)).is_ok());
}

#[test]
fn curve_seeds() {
    run("curves", |b| parse_curves(text(b)).is_ok());
}

#[test]
fn dataset_seeds() {
    run("dataset", |b| decode_dataset(b).is_ok());
}

#[test]
fn checkpoint_seeds() {
    run("checkpoint", |b| decode_blocks(b).is_ok());
}

#[test]
fn config_seeds() {
    run("config", |b| Config::parse(text(b)).is_ok());
}
