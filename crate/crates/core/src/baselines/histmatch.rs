use serde::{Deserialize, Serialize};

use crate::dataset::bin_of;

/// CDF matching from a source intensity sample onto a target sample.
///
/// The source CDF is kept per bin and interpolated linearly inside each bin;
/// the target side keeps the full sorted sample, so outputs are always
/// target values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistMatchLut {
    pub n_bins: usize,
    /// Source counts per bin.
    counts: Vec<u64>,
    /// Source points below each bin.
    below: Vec<u64>,
    n_source: u64,
    sorted_target: Vec<f32>,
}

/// Builds the matcher. Panics on empty samples or `n_bins == 0`.
pub fn build_histmatch(source: &[f32], target: &[f32], n_bins: usize) -> HistMatchLut {
    assert!(!source.is_empty() && !target.is_empty(), "empty sample");
    assert!(n_bins > 0, "zero bins");
    let mut counts = vec![0u64; n_bins];
    for &v in source {
        counts[bin_of(v, n_bins)] += 1;
    }
    let below = counts
        .iter()
        .scan(0u64, |acc, &c| {
            let b = *acc;
            *acc += c;
            Some(b)
        })
        .collect();
    let mut sorted_target = target.to_vec();
    sorted_target.sort_by(f32::total_cmp);
    HistMatchLut {
        n_bins,
        counts,
        below,
        n_source: source.len() as u64,
        sorted_target,
    }
}

impl HistMatchLut {
    pub fn apply(&self, i: f64) -> f64 {
        let nb = self.n_bins;
        let b = bin_of(i as f32, nb);
        let (k, c) = (self.below[b] as f64, self.counts[b] as f64);
        let frac = (i.clamp(0.0, 1.0) * nb as f64 - b as f64).clamp(0.0, 1.0);
        let (ns, nt) = (self.n_source as f64, self.sorted_target.len() as f64);
        let mut j = ((k + frac * c) * nt / ns).floor() as usize;
        if c > 0.0 {
            // Stay inside this bin's share of target quantiles.
            let top = ((self.below[b] + self.counts[b]) as u128 * self.sorted_target.len() as u128)
                .saturating_sub(1)
                / self.n_source as u128;
            j = j.min(top as usize);
        }
        self.sorted_target[j.min(self.sorted_target.len() - 1)] as f64
    }

    /// The mapping sampled at `n_bins` bin centers.
    pub fn table(&self) -> Vec<f64> {
        (0..self.n_bins)
            .map(|b| self.apply((b as f64 + 0.5) / self.n_bins as f64))
            .collect()
    }
}

/// L1 distance between the normalized `n_bins` histograms of two samples.
pub fn histogram_l1(a: &[f32], b: &[f32], n_bins: usize) -> f64 {
    let hist = |s: &[f32]| {
        let mut h = vec![0.0; n_bins];
        for &v in s {
            h[bin_of(v, n_bins)] += 1.0 / s.len() as f64;
        }
        h
    };
    hist(a)
        .iter()
        .zip(hist(b))
        .map(|(x, y)| (x - y).abs())
        .sum()
}
