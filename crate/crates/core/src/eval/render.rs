use std::path::Path;

use crate::error::{Error, Result};
use crate::pointcloud::Scan;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Colormap {
    Gray,
    Viridis,
}

impl std::str::FromStr for Colormap {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gray" | "grey" => Ok(Colormap::Gray),
            "viridis" => Ok(Colormap::Viridis),
            other => Err(Error::Config(format!(
                "colormap must be gray or viridis, got '{other}'"
            ))),
        }
    }
}

impl std::fmt::Display for Colormap {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Colormap::Gray => "gray",
            Colormap::Viridis => "viridis",
        })
    }
}

const VIRIDIS: [[f64; 3]; 9] = [
    [68.0, 1.0, 84.0],
    [71.0, 44.0, 122.0],
    [59.0, 81.0, 139.0],
    [44.0, 113.0, 142.0],
    [33.0, 144.0, 141.0],
    [39.0, 173.0, 129.0],
    [92.0, 200.0, 99.0],
    [170.0, 220.0, 50.0],
    [253.0, 231.0, 37.0],
];

impl Colormap {
    pub fn rgb(self, v: f64) -> [u8; 3] {
        let v = v.clamp(0.0, 1.0);
        match self {
            Colormap::Gray => {
                let g = (v * 255.0).round() as u8;
                [g, g, g]
            }
            Colormap::Viridis => {
                let t = v * (VIRIDIS.len() - 1) as f64;
                let i = (t.floor() as usize).min(VIRIDIS.len() - 2);
                let f = t - i as f64;
                let (a, b) = (VIRIDIS[i], VIRIDIS[i + 1]);
                [0, 1, 2].map(|c| (a[c] + f * (b[c] - a[c])).round() as u8)
            }
        }
    }
}

/// Top-down binary PPM (P6) of the scan's footprint: each `cell_size`
/// square shows the mean intensity of its points, empty cells are black.
pub fn render_tile(scan: &Scan, colormap: Colormap, cell_size: f64) -> Result<Vec<u8>> {
    let b = scan.bounds().ok_or(Error::EmptyScan)?;
    if !(cell_size > 0.0) {
        return Err(Error::Config(format!(
            "cell size must be positive, got {cell_size}"
        )));
    }
    let dim = |a: usize| (((b.max[a] - b.min[a]) / cell_size).ceil() as usize).max(1);
    let (w, h) = (dim(0), dim(1));
    let mut sum = vec![0.0f64; w * h];
    let mut count = vec![0u32; w * h];
    for p in &scan.points {
        let cx = (((p.x - b.min[0]) / cell_size) as usize).min(w - 1);
        let cy = (((p.y - b.min[1]) / cell_size) as usize).min(h - 1);
        // Row 0 is the northern edge.
        let cell = (h - 1 - cy) * w + cx;
        sum[cell] += p.intensity as f64;
        count[cell] += 1;
    }
    let mut out = format!("P6\n{w} {h}\n255\n").into_bytes();
    out.reserve(w * h * 3);
    for (s, c) in sum.iter().zip(&count) {
        let px = if *c == 0 {
            [0, 0, 0]
        } else {
            colormap.rgb(s / *c as f64)
        };
        out.extend_from_slice(&px);
    }
    Ok(out)
}

pub fn save_render(scan: &Scan, colormap: Colormap, cell_size: f64, path: &Path) -> Result<()> {
    let bytes = render_tile(scan, colormap, cell_size)?;
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pointcloud::Point;

    fn header(ppm: &[u8]) -> (usize, usize, &[u8]) {
        let mut lines = ppm.splitn(4, |b| *b == b'\n');
        let mut parts = lines
            .by_ref()
            .take(3)
            .flat_map(|l| std::str::from_utf8(l).unwrap().split_whitespace());
        assert_eq!(parts.next(), Some("P6"));
        let w: usize = parts.next().unwrap().parse().unwrap();
        let h: usize = parts.next().unwrap().parse().unwrap();
        let body = &ppm[ppm.len() - w * h * 3..];
        (w, h, body)
    }

    #[test]
    fn dimensions_follow_extent() {
        let scan = Scan::new(
            0,
            vec![
                Point::new(0.0, 0.0, 0.0, 0.2),
                Point::new(10.2, 4.9, 0.0, 0.8),
            ],
        );
        let ppm = render_tile(&scan, Colormap::Gray, 0.5).unwrap();
        let (w, h, body) = header(&ppm);
        assert_eq!((w, h), (21, 10));
        assert_eq!(body.len(), 21 * 10 * 3);
    }

    #[test]
    fn uniform_scan_is_one_color() {
        let pts = (0..400)
            .map(|k| Point::new((k % 20) as f64 * 0.37, (k / 20) as f64 * 0.61, 0.0, 0.6))
            .collect();
        let scan = Scan::new(0, pts);
        for cmap in [Colormap::Gray, Colormap::Viridis] {
            let ppm = render_tile(&scan, cmap, 0.5).unwrap();
            let (_, _, body) = header(&ppm);
            let colors: std::collections::BTreeSet<&[u8]> =
                body.chunks(3).filter(|c| *c != [0, 0, 0]).collect();
            assert_eq!(colors.len(), 1);
            assert_eq!(ppm, render_tile(&scan, cmap, 0.5).unwrap());
        }
    }

    #[test]
    fn colormap_endpoints() {
        assert_eq!(Colormap::Gray.rgb(1.0), [255, 255, 255]);
        assert_eq!(Colormap::Viridis.rgb(0.0), [68, 1, 84]);
        assert_eq!(Colormap::Viridis.rgb(1.0), [253, 231, 37]);
    }

    #[test]
    fn unwritable_path_is_io_error() {
        let scan = Scan::new(0, vec![Point::new(0.0, 0.0, 0.0, 0.5)]);
        let err = save_render(
            &scan,
            Colormap::Gray,
            0.5,
            Path::new("/nonexistent/dir/x.ppm"),
        );
        assert!(matches!(err, Err(Error::Io { .. })));
    }
}
