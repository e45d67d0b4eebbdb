use std::collections::BTreeMap;

use rayon::prelude::*;
use serde_json::json;

use super::report::{BenchmarkReport, ReportRow, METHODS};
use crate::baselines::{
    build_histmatch, fit_affine, fit_mlp_head, interpolate, AffineHead, HeadPair, HistMatchLut,
    InterpMethod, MlpHead,
};
use crate::dataset::{features, Example, TileRecord};
use crate::error::{Error, Result};
use crate::model::{forward, Arch, Mode, ModelParams, TrainConfig};
use crate::pointcloud::{Scan, SpatialIndex};

/// One paired source scan and its held-out tile.
pub struct SourceTile<'a> {
    pub corrupted: &'a Scan,
    pub index: &'a SpatialIndex,
    /// Ground-truth intensities, point-aligned with `corrupted`.
    pub truth: &'a Scan,
    pub tile: TileRecord,
}

/// Everything needed to fill one dataset column.
pub struct BenchInput<'a> {
    pub dataset: &'a str,
    /// The target scan as recorded (reference distribution for matching).
    pub target: &'a Scan,
    pub sources: Vec<SourceTile<'a>>,
    pub model: Option<&'a ModelParams>,
    /// Training examples the baseline heads are fit on.
    pub train: &'a [Example],
}

#[derive(Debug, Clone)]
pub struct BenchConfig {
    pub k: usize,
    pub radius: f64,
    pub hist_bins: usize,
    pub arch: Arch,
    /// Optimizer settings for the MLP heads.
    pub head: TrainConfig,
    pub head_val_fraction: f64,
}

/// Stored neighbors of an example as `(offset, intensity)`, nearest first.
fn example_neighbors(e: &Example, k: usize) -> Vec<([f64; 3], f64)> {
    e.neighbors
        .iter()
        .take(k)
        .map(|f| ([f[0] as f64, f[1] as f64, f[2] as f64], f[3] as f64))
        .collect()
}

struct Fitted {
    affine: BTreeMap<(InterpMethod, (u16, u16)), AffineHead>,
    mlp: BTreeMap<InterpMethod, MlpHead>,
    hist: BTreeMap<u16, HistMatchLut>,
}

fn fit_baselines(input: &BenchInput, cfg: &BenchConfig) -> Result<Fitted> {
    let mut affine = BTreeMap::new();
    let mut mlp = BTreeMap::new();
    for method in InterpMethod::ALL {
        let interp: Vec<f64> = input
            .train
            .par_iter()
            .map(|e| Ok(interpolate(method, &example_neighbors(e, cfg.k), [0.0; 3])?.value))
            .collect::<Result<_>>()?;
        let mut by_pair: BTreeMap<(u16, u16), Vec<(f64, f64)>> = BTreeMap::new();
        for (e, i) in input.train.iter().zip(&interp) {
            if !e.is_inscan() {
                by_pair
                    .entry(e.pair())
                    .or_default()
                    .push((*i, e.gt_harm as f64));
            }
        }
        for (pair, pts) in by_pair {
            affine.insert((method, pair), fit_affine(&pts)?);
        }
        let pairs: Vec<HeadPair> = input
            .train
            .iter()
            .zip(&interp)
            .map(|(e, i)| HeadPair {
                i: *i,
                h: e.gt_harm as f64,
                source: e.source_id,
                target: e.target_id,
            })
            .collect();
        log::info!(
            "{}: fitting MLP head on {} pairs ({method})",
            input.dataset,
            pairs.len()
        );
        mlp.insert(
            method,
            fit_mlp_head(&pairs, &cfg.arch, &cfg.head, cfg.head_val_fraction)?,
        );
    }
    let target_i = input.target.intensities();
    let hist = input
        .sources
        .iter()
        .map(|s| {
            let lut = build_histmatch(&s.corrupted.intensities(), &target_i, cfg.hist_bins);
            (s.corrupted.scan_id, lut)
        })
        .collect();
    Ok(Fitted { affine, mlp, hist })
}

/// Per-point absolute errors for the eight methods, in [`METHODS`] order.
type PointErrors = [f64; 8];

fn eval_point(
    input: &BenchInput,
    src: &SourceTile,
    fitted: &Fitted,
    model: &ModelParams,
    cfg: &BenchConfig,
    idx: usize,
) -> Result<Option<(PointErrors, u32)>> {
    let p = src.corrupted.points[idx];
    let loc = p.xyz();
    let hits = src.index.query_knn(loc, cfg.k, cfg.radius);
    if hits.is_empty() {
        return Ok(None);
    }
    let gt = src.truth.points[idx].intensity as f64;
    let s = src.corrupted.scan_id;
    let t = input.target.scan_id;
    let nb: Vec<([f64; 3], f64)> = hits
        .iter()
        .map(|h| (h.point.xyz(), h.point.intensity as f64))
        .collect();
    let mut err = [0.0; 8];
    let mut fallbacks = 0;
    for (m, method) in InterpMethod::ALL.iter().enumerate() {
        let r = interpolate(*method, &nb, loc)?;
        fallbacks += r.fallback as u32;
        let lin = fitted
            .affine
            .get(&(*method, (s, t)))
            .ok_or_else(|| Error::Missing(format!("affine head for pair ({s}, {t})")))?
            .apply(r.value)
            .clamp(0.0, 1.0);
        let mlp = fitted.mlp[method].apply(r.value, s, t)?;
        err[2 * m] = (lin - gt).abs();
        err[2 * m + 1] = (mlp - gt).abs();
    }
    let ex = Example {
        neighbors: features(loc, &hits),
        source_id: s,
        target_id: t,
        gt_interp: 0.0,
        gt_harm: 0.0,
        x_norm: 0.0,
    };
    let (pred, _) = forward(model, &ex, Mode::Eval)?;
    err[6] = (pred.h_x - gt).abs();
    err[7] = (fitted.hist[&s].apply(p.intensity as f64) - gt).abs();
    Ok(Some((err, fallbacks)))
}

/// Fits every baseline on each input's training examples, harmonizes each
/// source tile with all methods from identical `k`-neighborhoods (the point
/// itself included), and reports MAE against ground truth pooled over the
/// tiles of a dataset.
pub fn run_benchmark(inputs: &[BenchInput], cfg: &BenchConfig) -> Result<BenchmarkReport> {
    let mut gaps = Vec::new();
    for input in inputs {
        if input.model.is_none() {
            gaps.push(format!("{}: trained model", input.dataset));
        }
        if input.train.is_empty() {
            gaps.push(format!("{}: training examples", input.dataset));
        }
        if input.sources.is_empty() {
            gaps.push(format!("{}: source tiles", input.dataset));
        }
    }
    if !gaps.is_empty() {
        return Err(Error::Missing(gaps.join(", ")));
    }

    let mut rows = Vec::new();
    let mut details = serde_json::Map::new();
    for input in inputs {
        let model = input.model.unwrap();
        let fitted = fit_baselines(input, cfg)?;
        let mut sums = [0.0; 8];
        let (mut n, mut skipped, mut fallbacks) = (0u64, 0u64, 0u64);
        let mut tiles = Vec::new();
        for src in &input.sources {
            let indices: Vec<usize> = src
                .corrupted
                .points
                .iter()
                .enumerate()
                .filter(|(_, p)| src.tile.contains(p.x, p.y))
                .map(|(i, _)| i)
                .collect();
            let per_point: Vec<Option<(PointErrors, u32)>> = indices
                .par_iter()
                .map(|&i| eval_point(input, src, &fitted, model, cfg, i))
                .collect::<Result<_>>()?;
            for r in &per_point {
                match r {
                    Some((e, f)) => {
                        for (s, v) in sums.iter_mut().zip(e) {
                            *s += v;
                        }
                        n += 1;
                        fallbacks += *f as u64;
                    }
                    None => skipped += 1,
                }
            }
            tiles.push(json!({ "tile": src.tile, "points": indices.len() }));
        }
        if n == 0 {
            return Err(Error::NoTile(format!(
                "{}: evaluation tiles hold no points",
                input.dataset
            )));
        }
        for (k, (interp, harm)) in METHODS.iter().enumerate() {
            rows.push(ReportRow {
                interpolation: interp.to_string(),
                harmonization: harm.to_string(),
                dataset: input.dataset.to_string(),
                mae: sums[k] / n as f64,
                skipped,
            });
        }
        let affine: Vec<_> = fitted
            .affine
            .iter()
            .map(|((m, (s, t)), h)| json!({"interpolation": m, "source": s, "target": t, "a": h.a, "b": h.b}))
            .collect();
        let hist: BTreeMap<String, Vec<f64>> = fitted
            .hist
            .iter()
            .map(|(s, lut)| (s.to_string(), lut.table()))
            .collect();
        let mlp_val: BTreeMap<String, f64> = fitted
            .mlp
            .iter()
            .map(|(m, h)| {
                let best = h
                    .history
                    .iter()
                    .filter(|r| r.split == "val")
                    .map(|r| r.loss_h)
                    .fold(f64::INFINITY, f64::min);
                (m.to_string(), best)
            })
            .collect();
        details.insert(
            input.dataset.to_string(),
            json!({
                "points": n,
                "tiles": tiles,
                "rbf_fallbacks": fallbacks,
                "affine": affine,
                "mlp_best_val_loss": mlp_val,
                "histmatch_tables": hist,
            }),
        );
    }
    details.insert(
        "settings".into(),
        json!({
            "k": cfg.k,
            "radius": cfg.radius,
            "hist_bins": cfg.hist_bins,
            "head": cfg.head,
        }),
    );
    Ok(BenchmarkReport {
        rows,
        details: serde_json::Value::Object(details),
    })
}
