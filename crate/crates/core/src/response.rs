//! Monotone sensor response curves, their inverses, and the spatial
//! brightness shift used to build the "with shift" dataset.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::pointcloud::Scan;

pub const TABLE_LEN: usize = 1024;

/// Maps a true intensity `H` to the intensity `I = f(H)` a sensor records.
#[derive(Debug, Clone, PartialEq)]
pub enum ResponseFunction {
    Gamma {
        gamma: f64,
    },
    /// Logistic curve rescaled so that `f(0) = 0` and `f(1) = 1`.
    SCurve {
        steepness: f64,
        midpoint: f64,
    },
    /// Brightness samples at 1024 uniformly spaced inputs, evaluated by
    /// piecewise-linear interpolation.
    Tabulated {
        samples: Vec<f64>,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct NamedCurve {
    pub name: String,
    pub curve: ResponseFunction,
}

fn check_unit(v: f64) -> Result<()> {
    if (0.0..=1.0).contains(&v) {
        Ok(())
    } else {
        Err(Error::Domain { value: v })
    }
}

#[inline]
fn logistic(t: f64) -> f64 {
    1.0 / (1.0 + (-t).exp())
}

impl ResponseFunction {
    pub fn identity() -> Self {
        ResponseFunction::Gamma { gamma: 1.0 }
    }

    pub fn gamma(gamma: f64) -> Result<Self> {
        let f = ResponseFunction::Gamma { gamma };
        f.validate("gamma")?;
        Ok(f)
    }

    pub fn s_curve(steepness: f64, midpoint: f64) -> Result<Self> {
        let f = ResponseFunction::SCurve {
            steepness,
            midpoint,
        };
        f.validate("s-curve")?;
        Ok(f)
    }

    pub fn tabulated(samples: Vec<f64>) -> Result<Self> {
        let f = ResponseFunction::Tabulated { samples };
        f.validate("tabulated")?;
        Ok(f)
    }

    pub fn is_identity(&self) -> bool {
        matches!(self, ResponseFunction::Gamma { gamma } if *gamma == 1.0)
    }

    /// Checks the curve invariants; `name` labels the error.
    pub fn validate(&self, name: &str) -> Result<()> {
        let fail = |message: String| {
            Err(Error::Curve {
                name: name.to_string(),
                message,
            })
        };
        match self {
            ResponseFunction::Gamma { gamma } => {
                if !(gamma.is_finite() && *gamma > 0.0) {
                    return fail(format!("gamma must be positive, got {gamma}"));
                }
            }
            ResponseFunction::SCurve {
                steepness,
                midpoint,
            } => {
                if !(steepness.is_finite() && *steepness > 0.0 && *steepness <= 500.0) {
                    return fail(format!("steepness must be in (0, 500], got {steepness}"));
                }
                if !(0.0..=1.0).contains(midpoint) {
                    return fail(format!("midpoint must be in [0, 1], got {midpoint}"));
                }
            }
            ResponseFunction::Tabulated { samples } => {
                if samples.len() != TABLE_LEN {
                    return fail(format!(
                        "expected {TABLE_LEN} samples, found {}",
                        samples.len()
                    ));
                }
                if let Some(v) = samples.iter().find(|v| !(0.0..=1.0).contains(*v)) {
                    return fail(format!("sample {v} outside [0, 1]"));
                }
                if samples.windows(2).any(|w| w[1] < w[0]) {
                    return fail("curve not monotone".into());
                }
            }
        }
        Ok(())
    }

    fn eval(&self, h: f64) -> f64 {
        let v = match self {
            ResponseFunction::Gamma { gamma } => {
                if *gamma == 1.0 {
                    h
                } else {
                    h.powf(*gamma)
                }
            }
            ResponseFunction::SCurve {
                steepness,
                midpoint,
            } => {
                let lo = logistic(-steepness * midpoint);
                let hi = logistic(steepness * (1.0 - midpoint));
                (logistic(steepness * (h - midpoint)) - lo) / (hi - lo)
            }
            ResponseFunction::Tabulated { samples } => {
                let t = h * (TABLE_LEN - 1) as f64;
                let i = (t.floor() as usize).min(TABLE_LEN - 2);
                let frac = t - i as f64;
                samples[i] + frac * (samples[i + 1] - samples[i])
            }
        };
        v.clamp(0.0, 1.0)
    }

    /// `I = f(H)`.
    pub fn apply(&self, h: f64) -> Result<f64> {
        check_unit(h)?;
        Ok(self.eval(h))
    }

    /// `[f(0), f(1)]`.
    pub fn range(&self) -> (f64, f64) {
        (self.eval(0.0), self.eval(1.0))
    }

    /// `H = f⁻¹(I)`; flat stretches resolve to their lowest preimage.
    pub fn invert(&self, i: f64) -> Result<f64> {
        let (lo, hi) = self.range();
        if !(i >= lo && i <= hi) {
            return Err(Error::Range { value: i, lo, hi });
        }
        if let ResponseFunction::Gamma { gamma } = self {
            return Ok(if *gamma == 1.0 {
                i
            } else {
                i.powf(1.0 / gamma)
            });
        }
        if lo >= i {
            return Ok(0.0);
        }
        // Invariant: f(a) < i <= f(b).
        let (mut a, mut b) = (0.0f64, 1.0f64);
        for _ in 0..64 {
            let mid = 0.5 * (a + b);
            if self.eval(mid) < i {
                a = mid;
            } else {
                b = mid;
            }
            if b - a <= 1e-8 && self.eval(b) - i <= 1e-8 {
                break;
            }
        }
        Ok(b)
    }
}

impl fmt::Display for ResponseFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ResponseFunction::Gamma { gamma } if *gamma == 1.0 => write!(f, "identity"),
            ResponseFunction::Gamma { gamma } => write!(f, "gamma:{gamma}"),
            ResponseFunction::SCurve {
                steepness,
                midpoint,
            } => write!(f, "scurve:{steepness}:{midpoint}"),
            ResponseFunction::Tabulated { .. } => write!(f, "tabulated"),
        }
    }
}

impl FromStr for ResponseFunction {
    type Err = Error;

    /// Parses `identity`, `gamma:<g>` or `scurve:<steepness>:<midpoint>`.
    fn from_str(spec: &str) -> Result<Self> {
        let bad = || Error::Curve {
            name: spec.to_string(),
            message: "expected identity, gamma:<g> or scurve:<steepness>:<midpoint>".into(),
        };
        let parts: Vec<&str> = spec.trim().split(':').collect();
        let num = |s: &str| s.trim().parse::<f64>().map_err(|_| bad());
        match parts.as_slice() {
            ["identity"] => Ok(Self::identity()),
            ["gamma", g] => Self::gamma(num(g)?),
            ["scurve", k, m] => Self::s_curve(num(k)?, num(m)?),
            _ => Err(bad()),
        }
    }
}

/// Parses a curve file: records of `name <id>`, `samples 1024`, then the
/// samples on one line. Blank lines may separate records.
pub fn parse_curves(text: &str) -> Result<Vec<NamedCurve>> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty());
    let mut curves = Vec::new();
    while let Some((lineno, line)) = lines.next() {
        let name = match line.split_once(char::is_whitespace) {
            Some(("name", rest)) if !rest.trim().is_empty() => rest.trim().to_string(),
            _ => {
                return Err(Error::at_line(lineno, "expected 'name <identifier>'"));
            }
        };
        let curve_err = |message: String| Error::Curve {
            name: name.clone(),
            message,
        };
        let (lineno, line) = lines
            .next()
            .ok_or_else(|| curve_err("missing 'samples' line".into()))?;
        let declared = match line.split_once(char::is_whitespace) {
            Some(("samples", n)) => n.trim().parse::<usize>().ok(),
            _ => None,
        }
        .ok_or_else(|| curve_err(format!("line {lineno}: expected 'samples {TABLE_LEN}'")))?;
        if declared != TABLE_LEN {
            return Err(curve_err(format!(
                "expected {TABLE_LEN} samples, header declares {declared}"
            )));
        }
        let (lineno, line) = lines
            .next()
            .ok_or_else(|| curve_err("missing sample values".into()))?;
        let samples = line
            .split_whitespace()
            .map(|s| s.parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| curve_err(format!("line {lineno}: {e}")))?;
        let curve = ResponseFunction::Tabulated { samples };
        curve.validate(&name)?;
        curves.push(NamedCurve { name, curve });
    }
    Ok(curves)
}

pub fn load_curves(path: &Path) -> Result<Vec<NamedCurve>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_curves(&text)
}

/// Serializes tabulated curves in the curve file format.
pub fn format_curves(curves: &[(String, Vec<f64>)]) -> String {
    let mut out = String::new();
    for (name, samples) in curves {
        out.push_str(&format!("name {name}\nsamples {}\n", samples.len()));
        let row: Vec<String> = samples.iter().map(|v| v.to_string()).collect();
        out.push_str(&row.join(" "));
        out.push_str("\n\n");
    }
    out
}

/// Samples any response function into a 1024-entry table.
pub fn tabulate(f: &ResponseFunction) -> Vec<f64> {
    (0..TABLE_LEN)
        .map(|i| f.eval(i as f64 / (TABLE_LEN - 1) as f64))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ShiftForm {
    /// `m(x) = 1 - s / (1 + e^{l(x-h)})`
    OneMinus,
    /// `m(x) = v + s * sigmoid(l(x-h))`
    Floor,
}

impl FromStr for ShiftForm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "one-minus" => Ok(ShiftForm::OneMinus),
            "floor" => Ok(ShiftForm::Floor),
            other => Err(Error::Config(format!(
                "shift.form must be one-minus or floor, got '{other}'"
            ))),
        }
    }
}

impl fmt::Display for ShiftForm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ShiftForm::OneMinus => "one-minus",
            ShiftForm::Floor => "floor",
        })
    }
}

/// Brightness multiplier along normalized x: darkens the low-x side and
/// returns to unity past the midpoint `h`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShiftParams {
    pub h: f64,
    pub v: f64,
    pub l: f64,
    pub s: f64,
    pub form: ShiftForm,
}

impl Default for ShiftParams {
    fn default() -> Self {
        Self {
            h: 0.5,
            v: 0.3,
            l: 100.0,
            s: 0.5,
            form: ShiftForm::OneMinus,
        }
    }
}

impl ShiftParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if !(self.l > 0.0 && self.l.is_finite()) {
            return bad(format!("shift.l must be positive, got {}", self.l));
        }
        if !(0.0..=1.0).contains(&self.s) {
            return bad(format!("shift.s must be in [0, 1], got {}", self.s));
        }
        if !self.h.is_finite() {
            return bad("shift.h must be finite".into());
        }
        if self.form == ShiftForm::Floor && !(self.v > 0.0 && self.v + self.s <= 1.0) {
            return bad(format!(
                "floor form needs 0 < v and v + s <= 1, got v={} s={}",
                self.v, self.s
            ));
        }
        Ok(())
    }

    pub fn multiplier(&self, x_norm: f64) -> f64 {
        let t = self.l * (x_norm - self.h);
        match self.form {
            ShiftForm::OneMinus => 1.0 - self.s / (1.0 + t.exp()),
            ShiftForm::Floor => self.v + self.s * logistic(t),
        }
    }
}

/// Normalizes `x` into `[0, 1]` over `extent`.
#[inline]
pub fn normalize_x(x: f64, extent: (f64, f64)) -> f64 {
    ((x - extent.0) / (extent.1 - extent.0)).clamp(0.0, 1.0)
}

/// A source scan's synthetic corruption: optional brightness shift followed
/// by the sensor response.
#[derive(Debug, Clone, PartialEq)]
pub struct Corruption {
    pub response: ResponseFunction,
    pub shift: Option<ShiftParams>,
    pub x_extent: (f64, f64),
}

impl Corruption {
    /// Shift-adjusted true intensity `m(x) * H`.
    pub fn shifted(&self, h: f64, x_norm: f64) -> f64 {
        match &self.shift {
            Some(p) => (p.multiplier(x_norm) * h).clamp(0.0, 1.0),
            None => h,
        }
    }

    /// `f(m(x) * H)`.
    pub fn corrupt(&self, h: f64, x_norm: f64) -> Result<f64> {
        self.response.apply(self.shifted(h, x_norm))
    }
}

/// Applies shift then response to every point; geometry and id unchanged.
pub fn corrupt_scan(
    scan: &Scan,
    f: &ResponseFunction,
    shift: Option<&ShiftParams>,
    x_extent: (f64, f64),
) -> Result<Scan> {
    if !(x_extent.1 > x_extent.0) {
        return Err(Error::Config(format!(
            "x extent max must exceed min, got {x_extent:?}"
        )));
    }
    let c = Corruption {
        response: f.clone(),
        shift: shift.copied(),
        x_extent,
    };
    let points = scan
        .points
        .iter()
        .map(|p| {
            let x_norm = normalize_x(p.x, x_extent);
            let i = c.corrupt(p.intensity as f64, x_norm)?;
            Ok(crate::pointcloud::Point {
                intensity: i as f32,
                ..*p
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Scan::new(scan.scan_id, points))
}
