//! Error metric, held-out evaluation tiles, the benchmark matrix and
//! raster output.

mod bench;
mod render;
mod report;

pub use bench::{run_benchmark, BenchConfig, BenchInput, SourceTile};
pub use render::{render_tile, save_render, Colormap};
pub use report::{BenchmarkReport, ReportRow, DATASETS, METHODS};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::dataset::TileRecord;
use crate::error::{Error, Result};
use crate::pointcloud::{overlap_mask, Bounds, Scan, SpatialIndex};

/// Mean absolute error.
pub fn mae(pred: &[f64], gt: &[f64]) -> Result<f64> {
    if pred.len() != gt.len() {
        return Err(Error::LengthMismatch(pred.len(), gt.len()));
    }
    if pred.is_empty() {
        return Err(Error::Missing("mae of empty sequences".into()));
    }
    let sum: f64 = pred.iter().zip(gt).map(|(a, b)| (a - b).abs()).sum();
    Ok(sum / pred.len() as f64)
}

/// Bounding boxes of the parts of `scan` that overlap each of `others`.
pub fn overlap_regions(scan: &Scan, others: &[&SpatialIndex], radius: f64) -> Vec<Bounds> {
    others
        .iter()
        .filter_map(|idx| {
            let mask = overlap_mask(scan, idx, radius);
            let mut hit = scan.points.iter().zip(&mask).filter(|(_, m)| **m);
            let first = hit.next()?.0.xyz();
            let mut b = Bounds {
                min: first,
                max: first,
            };
            for (p, _) in hit {
                b.include(p.xyz());
            }
            Some(b)
        })
        .collect()
}

/// A held-out square and the indices of the scan points inside it.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalTile {
    pub record: TileRecord,
    pub indices: Vec<usize>,
}

impl EvalTile {
    pub fn extract(&self, scan: &Scan) -> Scan {
        Scan::new(
            scan.scan_id,
            self.indices.iter().map(|&i| scan.points[i]).collect(),
        )
    }
}

fn tile_bounds(t: &TileRecord) -> Bounds {
    Bounds {
        min: [t.x0, t.y0, f64::NEG_INFINITY],
        max: [t.x1, t.y1, f64::INFINITY],
    }
}

/// Picks a `tile_size` square inside the scan's footprint that shares no
/// area with any of the `overlap` boxes. Candidates lie on a 1 m grid and
/// one holding points is chosen with `seed`.
pub fn extract_eval_tile(
    scan: &Scan,
    overlap: &[Bounds],
    tile_size: f64,
    seed: u64,
) -> Result<EvalTile> {
    let b = scan.bounds().ok_or(Error::EmptyScan)?;
    if !(tile_size > 0.0) {
        return Err(Error::Config(format!(
            "tile size must be positive, got {tile_size}"
        )));
    }
    let span = |a: usize| ((b.max[a] - b.min[a] - tile_size).floor().max(-1.0) + 1.0) as usize;
    let mut candidates = Vec::new();
    for ix in 0..span(0) {
        for iy in 0..span(1) {
            let t = TileRecord {
                scan_id: scan.scan_id,
                x0: b.min[0] + ix as f64,
                y0: b.min[1] + iy as f64,
                x1: b.min[0] + ix as f64 + tile_size,
                y1: b.min[1] + iy as f64 + tile_size,
            };
            let tb = tile_bounds(&t);
            if overlap.iter().all(|o| !o.intersects_xy(&tb)) {
                candidates.push(t);
            }
        }
    }
    candidates.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    for record in candidates {
        let indices: Vec<usize> = scan
            .points
            .iter()
            .enumerate()
            .filter(|(_, p)| record.contains(p.x, p.y))
            .map(|(i, _)| i)
            .collect();
        if !indices.is_empty() {
            return Ok(EvalTile { record, indices });
        }
    }
    Err(Error::NoTile(format!(
        "scan {} has no {tile_size} m square clear of its overlap regions",
        scan.scan_id
    )))
}

/// Panics unless the tile is clear of every overlap box.
pub fn assert_tile_disjoint(tile: &TileRecord, overlap: &[Bounds]) {
    let tb = tile_bounds(tile);
    for o in overlap {
        assert!(
            !o.intersects_xy(&tb),
            "evaluation tile {tile:?} intersects overlap region {o:?}"
        );
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pointcloud::Point;
    use proptest::prelude::*;

    fn grid(x0: f64, x1: f64, id: u16) -> Scan {
        let mut pts = Vec::new();
        let mut x = x0;
        while x <= x1 {
            for j in 0..60 {
                pts.push(Point::new(x, j as f64, 0.0, 0.5));
            }
            x += 1.0;
        }
        Scan::new(id, pts)
    }

    #[test]
    fn mae_examples() {
        assert_eq!(mae(&[0.0, 1.0], &[1.0, 1.0]).unwrap(), 0.5);
        assert_eq!(mae(&[0.3, 0.2], &[0.3, 0.2]).unwrap(), 0.0);
        assert!(matches!(
            mae(&[0.0], &[0.0, 1.0]),
            Err(Error::LengthMismatch(1, 2))
        ));
        assert!(mae(&[], &[]).is_err());
    }

    proptest! {
        #[test]
        fn mae_matches_naive_loop(v in prop::collection::vec((0.0f64..1.0, 0.0f64..1.0), 1..500)) {
            let (a, b): (Vec<f64>, Vec<f64>) = v.into_iter().unzip();
            let mut s = 0.0;
            for i in 0..a.len() {
                s += (a[i] - b[i]).abs();
            }
            let m = mae(&a, &b).unwrap();
            prop_assert!((m - s / a.len() as f64).abs() <= 1e-12);
            prop_assert_eq!(m, mae(&b, &a).unwrap());
        }
    }

    #[test]
    fn fully_overlapped_scan_has_no_tile() {
        let a = grid(0.0, 100.0, 0);
        let b = grid(0.0, 100.0, 1);
        let idx = SpatialIndex::build(&b).unwrap();
        let regions = overlap_regions(&a, &[&idx], 1.0);
        assert!(matches!(
            extract_eval_tile(&a, &regions, 20.0, 1),
            Err(Error::NoTile(_))
        ));
    }

    #[test]
    fn tile_avoids_overlap_and_is_seeded() {
        let a = grid(0.0, 120.0, 0);
        let b = grid(80.0, 200.0, 1);
        let idx = SpatialIndex::build(&b).unwrap();
        let regions = overlap_regions(&a, &[&idx], 1.0);
        assert_eq!(regions.len(), 1);
        let t = extract_eval_tile(&a, &regions, 30.0, 7).unwrap();
        assert_tile_disjoint(&t.record, &regions);
        assert!(t.record.x1 < 79.0);
        assert!(!t.indices.is_empty());
        assert_eq!(t, extract_eval_tile(&a, &regions, 30.0, 7).unwrap());
        let sub = t.extract(&a);
        assert!(sub.points.iter().all(|p| t.record.contains(p.x, p.y)));
    }
}
