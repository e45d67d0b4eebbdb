//! Scan files.
//!
//! Binary layout (little-endian):
//!
//! ```text
//! "LHS1" | u16 version = 1 | u16 scan_id | u64 count | count x (f64 x, f64 y, f64 z, f32 intensity)
//! ```
//!
//! ASCII layout: a `# x y z intensity scan_id=<n>` header, then one
//! space-separated `x y z intensity` record per line.

use std::fmt::Write as _;
use std::path::Path;

use super::{Point, Scan};
use crate::codec::{Reader, Writer};
use crate::error::{Error, Result};

pub const SCAN_MAGIC: &[u8; 4] = b"LHS1";
pub const SCAN_VERSION: u16 = 1;
pub const BINARY_HEADER_LEN: usize = 16;
pub const BINARY_RECORD_LEN: usize = 28;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScanFormat {
    Binary,
    Ascii,
}

impl ScanFormat {
    /// `.txt`/`.xyz`/`.asc` are ASCII, everything else binary.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some("txt" | "xyz" | "asc") => ScanFormat::Ascii,
            _ => ScanFormat::Binary,
        }
    }
}

pub fn encode_scan(scan: &Scan) -> Vec<u8> {
    let mut w = Writer::with_capacity(BINARY_HEADER_LEN + BINARY_RECORD_LEN * scan.len());
    w.bytes(SCAN_MAGIC);
    w.u16(SCAN_VERSION);
    w.u16(scan.scan_id);
    w.u64(scan.len() as u64);
    for p in &scan.points {
        w.f64(p.x);
        w.f64(p.y);
        w.f64(p.z);
        w.f32(p.intensity);
    }
    w.buf
}

pub fn decode_scan(bytes: &[u8]) -> Result<Scan> {
    let mut r = Reader::new(bytes);
    if bytes.len() < 4 || &bytes[..4] != SCAN_MAGIC {
        return Err(Error::at_offset(0, "bad magic"));
    }
    r.take(4, "magic")?;
    let version = r.u16("version")?;
    if version != SCAN_VERSION {
        return Err(Error::at_offset(
            4,
            format!("unsupported version {version}"),
        ));
    }
    let scan_id = r.u16("scan id")?;
    let n = r.count(BINARY_RECORD_LEN, "point count")?;
    let mut points = Vec::with_capacity(n);
    for _ in 0..n {
        let at = r.offset();
        let p = Point::new(r.f64("x")?, r.f64("y")?, r.f64("z")?, r.f32("intensity")?);
        p.check().map_err(|m| Error::at_offset(at, m))?;
        points.push(p);
    }
    r.expect_end()?;
    Ok(Scan { scan_id, points })
}

pub fn write_ascii_scan(scan: &Scan) -> String {
    let mut out = String::with_capacity(32 * (scan.len() + 1));
    let _ = writeln!(out, "# x y z intensity scan_id={}", scan.scan_id);
    for p in &scan.points {
        // `{}` prints the shortest representation that parses back exactly.
        let _ = writeln!(out, "{} {} {} {}", p.x, p.y, p.z, p.intensity);
    }
    out
}

pub fn parse_ascii_scan(text: &str) -> Result<Scan> {
    let mut lines = text.lines().enumerate();
    let (_, header) = lines
        .next()
        .ok_or_else(|| Error::at_line(1, "missing header"))?;
    let scan_id = header
        .trim()
        .strip_prefix('#')
        .map(str::split_whitespace)
        .and_then(|mut fields| {
            let names: Vec<_> = fields.by_ref().take(4).collect();
            if names != ["x", "y", "z", "intensity"] {
                return None;
            }
            fields.next()?.strip_prefix("scan_id=")?.parse::<u16>().ok()
        })
        .ok_or_else(|| Error::at_line(1, "expected header '# x y z intensity scan_id=<n>'"))?;

    let mut points = Vec::new();
    for (i, line) in lines {
        let lineno = i + 1;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 4 {
            return Err(Error::at_line(
                lineno,
                format!("expected 4 fields, found {}", fields.len()),
            ));
        }
        let num = |s: &str| {
            s.parse::<f64>()
                .map_err(|_| Error::at_line(lineno, format!("bad number '{s}'")))
        };
        let intensity = fields[3]
            .parse::<f32>()
            .map_err(|_| Error::at_line(lineno, format!("bad number '{}'", fields[3])))?;
        let p = Point::new(num(fields[0])?, num(fields[1])?, num(fields[2])?, intensity);
        p.check().map_err(|m| Error::at_line(lineno, m))?;
        points.push(p);
    }
    Ok(Scan { scan_id, points })
}

pub fn read_scan(path: &Path, format: ScanFormat) -> Result<Scan> {
    match format {
        ScanFormat::Binary => {
            let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
            decode_scan(&bytes)
        }
        ScanFormat::Ascii => {
            let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
            parse_ascii_scan(&text)
        }
    }
}

pub fn write_scan(scan: &Scan, path: &Path, format: ScanFormat) -> Result<()> {
    let bytes = match format {
        ScanFormat::Binary => encode_scan(scan),
        ScanFormat::Ascii => write_ascii_scan(scan).into_bytes(),
    };
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}
