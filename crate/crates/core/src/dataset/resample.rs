use std::collections::BTreeMap;

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{bin_of, Example};

/// A (pair, intensity bin) cell with no examples to draw from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EmptyCell {
    pub source: u16,
    pub target: u16,
    pub bin: usize,
}

/// Balances examples over (source, target) pairs and `gt_harm` bins: every
/// non-empty cell ends up with exactly `per_bin_target` examples, drawn
/// without replacement when the cell is large enough and topped up with
/// replacement otherwise.
///
/// Output is grouped by pair then bin; empty cells are reported.
pub fn stratified_resample(
    examples: &[Example],
    n_bins: usize,
    per_bin_target: usize,
    seed: u64,
) -> (Vec<Example>, Vec<EmptyCell>) {
    assert!(n_bins >= 2, "need at least two bins");
    let mut cells: BTreeMap<(u16, u16), Vec<Vec<usize>>> = BTreeMap::new();
    for (i, e) in examples.iter().enumerate() {
        cells
            .entry(e.pair())
            .or_insert_with(|| vec![Vec::new(); n_bins])[bin_of(e.gt_harm, n_bins)]
        .push(i);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    let mut empty = Vec::new();
    for (&(source, target), bins) in &cells {
        for (bin, members) in bins.iter().enumerate() {
            if members.is_empty() {
                empty.push(EmptyCell {
                    source,
                    target,
                    bin,
                });
                continue;
            }
            if members.len() >= per_bin_target {
                let mut keep: Vec<usize> = index::sample(&mut rng, members.len(), per_bin_target)
                    .into_iter()
                    .collect();
                keep.sort_unstable();
                out.extend(keep.into_iter().map(|j| examples[members[j]].clone()));
            } else {
                out.extend(members.iter().map(|&j| examples[j].clone()));
                for _ in members.len()..per_bin_target {
                    let j = members[rng.random_range(0..members.len())];
                    out.push(examples[j].clone());
                }
            }
        }
    }
    (out, empty)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::recount;
    use proptest::prelude::*;

    fn ex(src: u16, dst: u16, h: f32) -> Example {
        Example {
            neighbors: vec![[0.1, 0.0, 0.0, h]],
            source_id: src,
            target_id: dst,
            gt_interp: h,
            gt_harm: h,
            x_norm: 0.5,
        }
    }

    #[test]
    fn balanced_input_is_unchanged() {
        let input: Vec<Example> = (0..10)
            .flat_map(|b| (0..3).map(move |j| ex(1, 0, (b as f32 + 0.1 + 0.2 * j as f32) / 10.0)))
            .collect();
        let (out, empty) = stratified_resample(&input, 10, 3, 1);
        assert!(empty.is_empty());
        let key = |e: &Example| e.gt_harm.to_bits();
        let mut a: Vec<_> = input.iter().map(key).collect();
        let mut b: Vec<_> = out.iter().map(key).collect();
        a.sort_unstable();
        b.sort_unstable();
        assert_eq!(a, b);
    }

    #[test]
    fn lone_example_is_repeated() {
        let input = vec![ex(2, 0, 0.55)];
        let (out, empty) = stratified_resample(&input, 10, 10, 1);
        assert_eq!(out.len(), 10);
        assert!(out.iter().all(|e| *e == input[0]));
        assert_eq!(empty.len(), 9);
        assert!(empty.iter().all(|c| c.bin != 5));
    }

    proptest! {
        #[test]
        fn non_empty_cells_hit_the_target(
            raw in prop::collection::vec((0u16..3, 0.0f32..=1.0), 1..300),
            target in 1usize..40,
        ) {
            let input: Vec<Example> = raw.iter().map(|&(s, h)| ex(s, 9, h)).collect();
            let (out, empty) = stratified_resample(&input, 10, target, 3);
            let mut cells: BTreeMap<(u16, usize), usize> = BTreeMap::new();
            for e in &out {
                *cells.entry((e.source_id, bin_of(e.gt_harm, 10))).or_default() += 1;
            }
            for (_, n) in &cells {
                prop_assert_eq!(*n, target);
            }
            let (pairs, bins) = recount(&input, 10);
            let nonempty = bins.iter().filter(|&&b| b > 0).count();
            prop_assert!(cells.len() >= nonempty);
            prop_assert_eq!(cells.len() + empty.len(), pairs.len() * 10);
        }
    }
}
