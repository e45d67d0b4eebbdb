//! Training examples built from overlapping corrupted scans.

mod build;
mod io;
mod resample;

pub(crate) use build::features;
pub use build::{
    build_inscan_examples, build_overlap_examples, find_overlap_pairs, sample_indices,
    split_train_val, ExampleParams,
};
pub use io::{decode_dataset, encode_dataset, load_dataset, save_dataset, DATASET_MAGIC};
pub use resample::{stratified_resample, EmptyCell};

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

/// One supervised record: a corrupted source neighborhood around a target
/// location and the two ground truths.
#[derive(Debug, Clone, PartialEq)]
pub struct Example {
    /// `[dx, dy, dz, corrupted intensity]`, offsets relative to the target
    /// location, sorted by distance.
    pub neighbors: Vec<[f32; 4]>,
    pub source_id: u16,
    pub target_id: u16,
    /// Intensity the source sensor would record at the target location.
    pub gt_interp: f32,
    /// True intensity at the target location under the target calibration.
    pub gt_harm: f32,
    pub x_norm: f32,
}

impl Example {
    pub fn is_inscan(&self) -> bool {
        self.source_id == self.target_id
    }

    pub fn pair(&self) -> (u16, u16) {
        (self.source_id, self.target_id)
    }
}

/// Histogram bin of a unit-interval value.
#[inline]
pub fn bin_of(v: f32, n_bins: usize) -> usize {
    ((v.clamp(0.0, 1.0) as f64 * n_bins as f64) as usize).min(n_bins - 1)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairCount {
    pub source: u16,
    pub target: u16,
    pub count: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorruptionRecord {
    pub scan_id: u16,
    pub curve: String,
    pub shift: bool,
}

/// Square evaluation region held out from training.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TileRecord {
    pub scan_id: u16,
    pub x0: f64,
    pub y0: f64,
    pub x1: f64,
    pub y1: f64,
}

impl TileRecord {
    pub fn contains(&self, x: f64, y: f64) -> bool {
        x >= self.x0 && x <= self.x1 && y >= self.y0 && y <= self.y1
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub split: String,
    pub count: u64,
    pub pairs: Vec<PairCount>,
    pub n_bins: usize,
    pub bins: Vec<u64>,
    pub k: usize,
    pub radius: f64,
    pub target_scan: u16,
    pub corruption: Vec<CorruptionRecord>,
    pub eval_tiles: Vec<TileRecord>,
    pub skipped_sparse: u64,
    pub empty_cells: Vec<EmptyCell>,
    /// FNV-1a over the encoded example records, hex.
    pub checksum: String,
}

impl DatasetManifest {
    /// Manifest with counts derived from `examples`; the checksum is filled
    /// in on encode.
    pub fn describe(examples: &[Example], n_bins: usize) -> Self {
        let (pairs, bins) = recount(examples, n_bins);
        Self {
            split: "train".into(),
            count: examples.len() as u64,
            pairs,
            n_bins,
            bins,
            k: examples
                .iter()
                .map(|e| e.neighbors.len())
                .max()
                .unwrap_or(0),
            radius: 1.0,
            target_scan: 0,
            corruption: Vec::new(),
            eval_tiles: Vec::new(),
            skipped_sparse: 0,
            empty_cells: Vec::new(),
            checksum: String::new(),
        }
    }
}

/// Per-pair counts (sorted by pair) and per-bin counts of `gt_harm`.
pub fn recount(examples: &[Example], n_bins: usize) -> (Vec<PairCount>, Vec<u64>) {
    let mut pairs: BTreeMap<(u16, u16), u64> = BTreeMap::new();
    let mut bins = vec![0u64; n_bins.max(1)];
    for e in examples {
        *pairs.entry(e.pair()).or_default() += 1;
        bins[bin_of(e.gt_harm, n_bins.max(1))] += 1;
    }
    let pairs = pairs
        .into_iter()
        .map(|((source, target), count)| PairCount {
            source,
            target,
            count,
        })
        .collect();
    (pairs, bins)
}
