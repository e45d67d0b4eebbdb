use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::Example;
use crate::error::{Error, Result};
use crate::pointcloud::{overlap_count, Neighbor, Scan, SpatialIndex};
use crate::response::{normalize_x, Corruption};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExampleParams {
    pub k: usize,
    pub radius: f64,
    /// Neighborhoods with fewer hits are skipped.
    pub min_neighbors: usize,
}

impl Default for ExampleParams {
    fn default() -> Self {
        Self {
            k: 150,
            radius: 1.0,
            min_neighbors: 10,
        }
    }
}

/// Sources whose overlap with `target_id` reaches `min_overlap` target
/// points, as `(source, target)` pairs.
pub fn find_overlap_pairs(
    scans: &[Scan],
    indexes: &[SpatialIndex],
    target_id: u16,
    min_overlap: usize,
    radius: f64,
) -> Result<Vec<(u16, u16)>> {
    if scans.len() < 2 || scans.len() != indexes.len() {
        return Err(Error::InsufficientOverlap(format!(
            "need at least two indexed scans, got {}",
            scans.len()
        )));
    }
    let target = scans
        .iter()
        .find(|s| s.scan_id == target_id)
        .ok_or_else(|| Error::InsufficientOverlap(format!("no scan with id {target_id}")))?;
    let mut pairs = Vec::new();
    for (scan, idx) in scans.iter().zip(indexes) {
        if scan.scan_id == target_id {
            continue;
        }
        let n = overlap_count(target, idx, radius);
        log::debug!("overlap {} -> {}: {n} points", scan.scan_id, target_id);
        if n >= min_overlap.max(1) {
            pairs.push((scan.scan_id, target_id));
        }
    }
    if pairs.is_empty() {
        return Err(Error::InsufficientOverlap(format!(
            "no source reaches {min_overlap} overlap points with target {target_id}"
        )));
    }
    Ok(pairs)
}

/// Up to `n` of `candidates`, chosen uniformly without replacement and
/// returned in ascending order.
pub fn sample_indices(candidates: &[usize], n: usize, seed: u64) -> Vec<usize> {
    if candidates.len() <= n {
        return candidates.to_vec();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picked: Vec<usize> = index::sample(&mut rng, candidates.len(), n)
        .into_iter()
        .map(|i| candidates[i])
        .collect();
    picked.sort_unstable();
    picked
}

pub(crate) fn features(loc: [f64; 3], hits: &[Neighbor]) -> Vec<[f32; 4]> {
    hits.iter()
        .map(|h| {
            [
                (h.point.x - loc[0]) as f32,
                (h.point.y - loc[1]) as f32,
                (h.point.z - loc[2]) as f32,
                h.point.intensity,
            ]
        })
        .collect()
}

/// Examples for sampled target points: neighborhoods come from the corrupted
/// source; `gt_harm` is the (shift-adjusted) target intensity and
/// `gt_interp` is the source corruption applied to it.
///
/// Returns the examples in `target_points` order and the number of sparse
/// neighborhoods skipped.
pub fn build_overlap_examples(
    target: &Scan,
    target_points: &[usize],
    source_id: u16,
    source_index: &SpatialIndex,
    params: &ExampleParams,
    corruption: &Corruption,
) -> Result<(Vec<Example>, usize)> {
    let built: Vec<Option<Example>> = target_points
        .par_iter()
        .map(|&ti| {
            let p = target.points[ti];
            let loc = p.xyz();
            let hits = source_index.query_knn(loc, params.k, params.radius);
            if hits.len() < params.min_neighbors.max(1) {
                return Ok(None);
            }
            let x_norm = normalize_x(p.x, corruption.x_extent);
            let gt_harm = corruption.shifted(p.intensity as f64, x_norm) as f32;
            let gt_interp = corruption.response.apply(gt_harm as f64)? as f32;
            Ok(Some(Example {
                neighbors: features(loc, &hits),
                source_id,
                target_id: target.scan_id,
                gt_interp,
                gt_harm,
                x_norm: x_norm as f32,
            }))
        })
        .collect::<Result<_>>()?;
    let skipped = built.iter().filter(|e| e.is_none()).count();
    Ok((built.into_iter().flatten().collect(), skipped))
}

/// Same-scan examples: each sampled point is held out of its own
/// neighborhood and both ground truths are its corrupted intensity.
pub fn build_inscan_examples(
    scan: &Scan,
    index: &SpatialIndex,
    points: &[usize],
    params: &ExampleParams,
    x_extent: (f64, f64),
) -> (Vec<Example>, usize) {
    let built: Vec<Option<Example>> = points
        .par_iter()
        .map(|&pi| {
            let p = scan.points[pi];
            let loc = p.xyz();
            let mut hits = index.query_knn(loc, params.k + 1, params.radius);
            hits.retain(|h| h.index != pi);
            hits.truncate(params.k);
            if hits.len() < params.min_neighbors.max(1) {
                return None;
            }
            Some(Example {
                neighbors: features(loc, &hits),
                source_id: scan.scan_id,
                target_id: scan.scan_id,
                gt_interp: p.intensity,
                gt_harm: p.intensity,
                x_norm: normalize_x(p.x, x_extent) as f32,
            })
        })
        .collect();
    let skipped = built.iter().filter(|e| e.is_none()).count();
    (built.into_iter().flatten().collect(), skipped)
}

/// Seeded split into `(train, val)`, each keeping the input order.
pub fn split_train_val(
    examples: Vec<Example>,
    val_fraction: f64,
    seed: u64,
) -> (Vec<Example>, Vec<Example>) {
    let n = examples.len();
    let n_val = ((n as f64) * val_fraction.clamp(0.0, 1.0)).round() as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut is_val = vec![false; n];
    for i in index::sample(&mut rng, n, n_val.min(n)) {
        is_val[i] = true;
    }
    let (mut train, mut val) = (Vec::with_capacity(n - n_val), Vec::with_capacity(n_val));
    for (e, v) in examples.into_iter().zip(is_val) {
        if v {
            val.push(e);
        } else {
            train.push(e);
        }
    }
    (train, val)
}
