use std::cmp::Ordering;
use std::collections::BinaryHeap;

use rayon::prelude::*;

use super::{dist2, Point, Scan};
use crate::error::{Error, Result};

/// One k-NN hit. `index` is the point's position in the indexed scan.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Neighbor {
    pub index: usize,
    pub point: Point,
    pub distance: f64,
}

/// Immutable k-d tree over the points of one scan.
///
/// Nodes live in an implicit balanced layout: the median of `[lo, hi)` sits
/// at `mid = (lo + hi) / 2` with its subtrees in `[lo, mid)` and `(mid, hi)`.
#[derive(Debug, Clone)]
pub struct SpatialIndex {
    coords: Vec<[f64; 3]>,
    ids: Vec<u32>,
    axes: Vec<u8>,
    points: Vec<Point>,
}

/// Heap entry ordered by (squared distance, point index).
#[derive(Clone, Copy)]
struct Hit {
    d2: f64,
    id: u32,
}

impl PartialEq for Hit {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Hit {}

impl PartialOrd for Hit {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Hit {
    fn cmp(&self, other: &Self) -> Ordering {
        self.d2.total_cmp(&other.d2).then(self.id.cmp(&other.id))
    }
}

impl SpatialIndex {
    pub fn build(scan: &Scan) -> Result<Self> {
        if scan.points.is_empty() {
            return Err(Error::EmptyScan);
        }
        assert!(scan.points.len() <= u32::MAX as usize, "scan too large");
        let mut order: Vec<u32> = (0..scan.points.len() as u32).collect();
        let mut axes = vec![0u8; order.len()];
        let pts = &scan.points;
        build_rec(pts, &mut order, &mut axes);
        let coords = order.iter().map(|&i| pts[i as usize].xyz()).collect();
        Ok(Self {
            coords,
            ids: order,
            axes,
            points: scan.points.clone(),
        })
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    /// The indexed points in their original scan order.
    pub fn points(&self) -> &[Point] {
        &self.points
    }

    /// Up to `k` nearest points within `radius`, ascending by distance with
    /// ties broken by lower point index.
    pub fn query_knn(&self, loc: [f64; 3], k: usize, radius: f64) -> Vec<Neighbor> {
        if k == 0 || !(radius > 0.0) {
            return Vec::new();
        }
        let mut heap = BinaryHeap::with_capacity(k + 1);
        self.search(0, self.ids.len(), loc, k, radius * radius, &mut heap);
        let mut hits = heap.into_vec();
        hits.sort_unstable();
        hits.into_iter()
            .map(|h| Neighbor {
                index: h.id as usize,
                point: self.points[h.id as usize],
                distance: h.d2.sqrt(),
            })
            .collect()
    }

    fn search(
        &self,
        lo: usize,
        hi: usize,
        loc: [f64; 3],
        k: usize,
        r2: f64,
        heap: &mut BinaryHeap<Hit>,
    ) {
        if lo >= hi {
            return;
        }
        let mid = (lo + hi) / 2;
        let c = self.coords[mid];
        let hit = Hit {
            d2: dist2(loc, c),
            id: self.ids[mid],
        };
        if hit.d2 <= r2 {
            if heap.len() < k {
                heap.push(hit);
            } else if hit < *heap.peek().unwrap() {
                heap.pop();
                heap.push(hit);
            }
        }
        let axis = self.axes[mid] as usize;
        let delta = loc[axis] - c[axis];
        let (near, far) = if delta < 0.0 {
            ((lo, mid), (mid + 1, hi))
        } else {
            ((mid + 1, hi), (lo, mid))
        };
        self.search(near.0, near.1, loc, k, r2, heap);
        let bound = if heap.len() < k {
            r2
        } else {
            heap.peek().unwrap().d2
        };
        // Equal distances on the far side may still win the index tie-break.
        if delta * delta <= bound {
            self.search(far.0, far.1, loc, k, r2, heap);
        }
    }

    /// True when at least one indexed point lies within `radius` of `loc`.
    pub fn any_within(&self, loc: [f64; 3], radius: f64) -> bool {
        self.any_rec(0, self.ids.len(), loc, radius * radius)
    }

    fn any_rec(&self, lo: usize, hi: usize, loc: [f64; 3], r2: f64) -> bool {
        if lo >= hi {
            return false;
        }
        let mid = (lo + hi) / 2;
        let c = self.coords[mid];
        if dist2(loc, c) <= r2 {
            return true;
        }
        let axis = self.axes[mid] as usize;
        let delta = loc[axis] - c[axis];
        let (near, far) = if delta < 0.0 {
            ((lo, mid), (mid + 1, hi))
        } else {
            ((mid + 1, hi), (lo, mid))
        };
        self.any_rec(near.0, near.1, loc, r2)
            || (delta * delta <= r2 && self.any_rec(far.0, far.1, loc, r2))
    }
}

fn build_rec(pts: &[Point], order: &mut [u32], axes: &mut [u8]) {
    if order.is_empty() {
        return;
    }
    let axis = widest_axis(pts, order);
    let mid = order.len() / 2;
    order.select_nth_unstable_by(mid, |&a, &b| {
        let pa = pts[a as usize].xyz()[axis];
        let pb = pts[b as usize].xyz()[axis];
        pa.total_cmp(&pb).then(a.cmp(&b))
    });
    axes[mid] = axis as u8;
    let (left, rest) = order.split_at_mut(mid);
    let (left_axes, rest_axes) = axes.split_at_mut(mid);
    build_rec(pts, left, left_axes);
    build_rec(pts, &mut rest[1..], &mut rest_axes[1..]);
}

fn widest_axis(pts: &[Point], order: &[u32]) -> usize {
    let mut lo = [f64::INFINITY; 3];
    let mut hi = [f64::NEG_INFINITY; 3];
    for &i in order {
        let p = pts[i as usize].xyz();
        for a in 0..3 {
            lo[a] = lo[a].min(p[a]);
            hi[a] = hi[a].max(p[a]);
        }
    }
    (0..3)
        .max_by(|&a, &b| (hi[a] - lo[a]).total_cmp(&(hi[b] - lo[b])).then(b.cmp(&a)))
        .unwrap()
}

/// Per point of `scan_a`: does `index_b` hold a point within `radius`?
pub fn overlap_mask(scan_a: &Scan, index_b: &SpatialIndex, radius: f64) -> Vec<bool> {
    scan_a
        .points
        .par_iter()
        .map(|p| index_b.any_within(p.xyz(), radius))
        .collect()
}

/// Number of points of `scan_a` with at least one neighbor in `index_b`
/// within `radius`.
pub fn overlap_count(scan_a: &Scan, index_b: &SpatialIndex, radius: f64) -> usize {
    scan_a
        .points
        .par_iter()
        .filter(|p| index_b.any_within(p.xyz(), radius))
        .count()
}
