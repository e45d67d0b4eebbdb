use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Below this distance a neighbor is treated as coincident with the query.
pub const DISTANCE_FLOOR: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InterpMethod {
    Nearest,
    /// Inverse-distance weighting, power 2.
    WeightedLinear,
    /// Exact radial-basis interpolation with `φ(r) = r³`.
    CubicRbf,
}

impl InterpMethod {
    pub const ALL: [InterpMethod; 3] = [
        InterpMethod::WeightedLinear,
        InterpMethod::Nearest,
        InterpMethod::CubicRbf,
    ];

    pub fn name(self) -> &'static str {
        match self {
            InterpMethod::Nearest => "nearest",
            InterpMethod::WeightedLinear => "weighted-linear",
            InterpMethod::CubicRbf => "cubic-rbf",
        }
    }
}

impl std::fmt::Display for InterpMethod {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interpolated {
    pub value: f64,
    /// The RBF system was singular and IDW was used instead.
    pub fallback: bool,
}

fn dist(a: [f64; 3], b: [f64; 3]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
}

fn idw(neighbors: &[([f64; 3], f64)], loc: [f64; 3]) -> f64 {
    let (mut num, mut den) = (0.0, 0.0);
    for (p, v) in neighbors {
        let d = dist(*p, loc).max(DISTANCE_FLOOR);
        let w = 1.0 / (d * d);
        num += w * v;
        den += w;
    }
    num / den
}

/// Solves `a x = b` in place by Gaussian elimination with partial pivoting.
/// `None` when a pivot is negligible relative to the matrix scale.
fn solve(mut a: Vec<f64>, mut b: Vec<f64>, n: usize) -> Option<Vec<f64>> {
    let scale = a.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if scale == 0.0 {
        return None;
    }
    for col in 0..n {
        let piv =
            (col..n).max_by(|&i, &j| a[i * n + col].abs().total_cmp(&a[j * n + col].abs()))?;
        if a[piv * n + col].abs() <= 1e-12 * scale {
            return None;
        }
        if piv != col {
            for k in 0..n {
                a.swap(piv * n + k, col * n + k);
            }
            b.swap(piv, col);
        }
        for row in col + 1..n {
            let f = a[row * n + col] / a[col * n + col];
            if f == 0.0 {
                continue;
            }
            for k in col..n {
                a[row * n + k] -= f * a[col * n + k];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let s: f64 = (row + 1..n).map(|k| a[row * n + k] * x[k]).sum();
        x[row] = (b[row] - s) / a[row * n + row];
    }
    x.iter().all(|v| v.is_finite()).then_some(x)
}

/// Intensity at `loc` from `(position, intensity)` neighbors. A neighbor
/// closer than [`DISTANCE_FLOOR`] is returned exactly by every method.
pub fn interpolate(
    method: InterpMethod,
    neighbors: &[([f64; 3], f64)],
    loc: [f64; 3],
) -> Result<Interpolated> {
    if neighbors.is_empty() {
        return Err(Error::Missing(
            "interpolation needs at least one neighbor".into(),
        ));
    }
    let exact = |value| Interpolated {
        value,
        fallback: false,
    };
    let (near_i, near_d) = neighbors
        .iter()
        .enumerate()
        .map(|(i, (p, _))| (i, dist(*p, loc)))
        .min_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)))
        .unwrap();
    if near_d < DISTANCE_FLOOR || neighbors.len() == 1 {
        return Ok(exact(neighbors[near_i].1));
    }
    match method {
        InterpMethod::Nearest => Ok(exact(neighbors[near_i].1)),
        InterpMethod::WeightedLinear => Ok(exact(idw(neighbors, loc))),
        InterpMethod::CubicRbf => {
            let n = neighbors.len();
            let mut a = vec![0.0; n * n];
            for i in 0..n {
                for j in 0..n {
                    a[i * n + j] = dist(neighbors[i].0, neighbors[j].0).powi(3);
                }
            }
            let b = neighbors.iter().map(|(_, v)| *v).collect();
            match solve(a, b, n) {
                Some(c) => {
                    let v: f64 = neighbors
                        .iter()
                        .zip(&c)
                        .map(|((p, _), c)| c * dist(*p, loc).powi(3))
                        .sum();
                    Ok(exact(v.clamp(0.0, 1.0)))
                }
                None => Ok(Interpolated {
                    value: idw(neighbors, loc),
                    fallback: true,
                }),
            }
        }
    }
}
