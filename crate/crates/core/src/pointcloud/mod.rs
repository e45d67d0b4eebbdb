//! Points, scans, k-nearest-neighbor indexing and scan files.

mod index;
mod io;

pub use index::{overlap_count, overlap_mask, Neighbor, SpatialIndex};
pub use io::{
    decode_scan, encode_scan, parse_ascii_scan, read_scan, write_ascii_scan, write_scan,
    ScanFormat, BINARY_HEADER_LEN, BINARY_RECORD_LEN, SCAN_MAGIC,
};

use crate::error::{Error, Result};

/// A LiDAR return: position in meters plus intensity normalized to [0, 1].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Point {
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub intensity: f32,
}

impl Point {
    pub fn new(x: f64, y: f64, z: f64, intensity: f32) -> Self {
        Self { x, y, z, intensity }
    }

    #[inline]
    pub fn xyz(&self) -> [f64; 3] {
        [self.x, self.y, self.z]
    }

    /// Checks the finite-coordinate and unit-intensity invariants.
    pub fn check(&self) -> std::result::Result<(), String> {
        if !(self.x.is_finite() && self.y.is_finite() && self.z.is_finite()) {
            return Err(format!(
                "non-finite coordinate ({}, {}, {})",
                self.x, self.y, self.z
            ));
        }
        if !(0.0..=1.0).contains(&self.intensity) {
            return Err(format!("intensity {} outside [0, 1]", self.intensity));
        }
        Ok(())
    }
}

/// All points captured by one sensor/flight.
#[derive(Debug, Clone, PartialEq)]
pub struct Scan {
    pub scan_id: u16,
    pub points: Vec<Point>,
}

impl Scan {
    pub fn new(scan_id: u16, points: Vec<Point>) -> Self {
        Self { scan_id, points }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        for (index, p) in self.points.iter().enumerate() {
            p.check()
                .map_err(|reason| Error::InvalidPoint { index, reason })?;
        }
        Ok(())
    }

    pub fn intensities(&self) -> Vec<f32> {
        self.points.iter().map(|p| p.intensity).collect()
    }

    /// Axis-aligned bounds, `None` for an empty scan.
    pub fn bounds(&self) -> Option<Bounds> {
        let first = self.points.first()?;
        let mut b = Bounds {
            min: first.xyz(),
            max: first.xyz(),
        };
        for p in &self.points[1..] {
            b.include(p.xyz());
        }
        Some(b)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bounds {
    pub min: [f64; 3],
    pub max: [f64; 3],
}

impl Bounds {
    pub fn include(&mut self, p: [f64; 3]) {
        for a in 0..3 {
            self.min[a] = self.min[a].min(p[a]);
            self.max[a] = self.max[a].max(p[a]);
        }
    }

    pub fn contains_xy(&self, x: f64, y: f64) -> bool {
        x >= self.min[0] && x <= self.max[0] && y >= self.min[1] && y <= self.max[1]
    }

    /// True when the xy footprints share any area (touching edges count).
    pub fn intersects_xy(&self, other: &Bounds) -> bool {
        self.min[0] <= other.max[0]
            && other.min[0] <= self.max[0]
            && self.min[1] <= other.max[1]
            && other.min[1] <= self.max[1]
    }
}

#[inline]
pub(crate) fn dist2(a: [f64; 3], b: [f64; 3]) -> f64 {
    let dx = a[0] - b[0];
    let dy = a[1] - b[1];
    let dz = a[2] - b[2];
    dx * dx + dy * dy + dz * dz
}
