use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// `H = a I + b`, fit per (source, target) pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AffineHead {
    pub a: f64,
    pub b: f64,
}

impl AffineHead {
    pub fn apply(&self, i: f64) -> f64 {
        self.a * i + self.b
    }
}

/// Least squares through the 2x2 normal equations, on centered sums.
pub fn fit_affine(pairs: &[(f64, f64)]) -> Result<AffineHead> {
    if pairs.len() < 2 {
        return Err(Error::Degenerate(format!(
            "affine fit needs at least two pairs, got {}",
            pairs.len()
        )));
    }
    let n = pairs.len() as f64;
    let mi = pairs.iter().map(|p| p.0).sum::<f64>() / n;
    let mh = pairs.iter().map(|p| p.1).sum::<f64>() / n;
    let (mut sii, mut sih) = (0.0, 0.0);
    for (i, h) in pairs {
        sii += (i - mi) * (i - mi);
        sih += (i - mi) * (h - mh);
    }
    if sii <= f64::EPSILON * n * mi.abs().max(1.0) {
        return Err(Error::Degenerate("constant input intensity".into()));
    }
    let a = sih / sii;
    Ok(AffineHead { a, b: mh - a * mi })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn identity_pairs() {
        let pairs: Vec<_> = (0..20)
            .map(|k| (k as f64 / 19.0, k as f64 / 19.0))
            .collect();
        let h = fit_affine(&pairs).unwrap();
        assert!((h.a - 1.0).abs() < 1e-12 && h.b.abs() < 1e-12);
    }

    #[test]
    fn two_points_interpolate_exactly() {
        let h = fit_affine(&[(0.2, 0.5), (0.6, 0.1)]).unwrap();
        assert!((h.apply(0.2) - 0.5).abs() < 1e-15);
        assert!((h.apply(0.6) - 0.1).abs() < 1e-15);
    }

    #[test]
    fn constant_input_is_degenerate() {
        assert!(matches!(
            fit_affine(&[(0.4, 0.1), (0.4, 0.9), (0.4, 0.3)]),
            Err(Error::Degenerate(_))
        ));
        assert!(fit_affine(&[(0.4, 0.1)]).is_err());
    }

    proptest! {
        #[test]
        fn residuals_are_orthogonal(pairs in prop::collection::vec((0.0f64..1.0, 0.0f64..1.0), 3..200)) {
            prop_assume!(pairs.iter().any(|p| (p.0 - pairs[0].0).abs() > 1e-3));
            let h = fit_affine(&pairs).unwrap();
            let (mut r1, mut ri) = (0.0, 0.0);
            for (i, y) in &pairs {
                let r = h.apply(*i) - y;
                r1 += r;
                ri += r * i;
            }
            prop_assert!(r1.abs() < 1e-9 && ri.abs() < 1e-9);
        }
    }
}
