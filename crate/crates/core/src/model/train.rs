use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::net::{backward, forward, Loss, Mode};
use super::optim::{cyclical_lr, Adam, TrainConfig};
use super::{Arch, ModelParams};
use crate::dataset::{features, Example};
use crate::error::{Error, Result};
use crate::pointcloud::{Scan, SpatialIndex};

/// Something [`fit`] can minimize: per-item losses `(ℓ_I, ℓ_H)` and their
/// gradient with respect to the flat parameter vector.
pub trait Objective: Sync {
    type Item: Sync;

    /// Adds the item's gradient into `grad` and returns its losses.
    /// `dropout_seed` is `Some` during training.
    fn loss_grad(
        &self,
        params: &ModelParams,
        item: &Self::Item,
        dropout_seed: Option<u64>,
        grad: &mut [f64],
    ) -> Result<(f64, f64)>;

    fn loss(&self, params: &ModelParams, item: &Self::Item) -> Result<(f64, f64)>;
}

/// The full network on dataset examples.
#[derive(Debug, Clone, Copy)]
pub struct ModelObjective {
    pub loss: Loss,
    pub dropout: f64,
}

impl Objective for ModelObjective {
    type Item = Example;

    fn loss_grad(
        &self,
        params: &ModelParams,
        ex: &Example,
        dropout_seed: Option<u64>,
        grad: &mut [f64],
    ) -> Result<(f64, f64)> {
        let mode = match dropout_seed {
            Some(seed) => Mode::Train {
                dropout: self.dropout,
                seed,
            },
            None => Mode::Eval,
        };
        let (pred, trace) = forward(params, ex, mode)?;
        let (gi, gh) = (ex.gt_interp as f64, ex.gt_harm as f64);
        let d_i = self.loss.derivative(pred.i_x, gi);
        let d_h = self.loss.derivative(pred.h_x, gh);
        backward(params, &trace, d_i, d_h, grad);
        Ok((self.loss.value(pred.i_x, gi), self.loss.value(pred.h_x, gh)))
    }

    fn loss(&self, params: &ModelParams, ex: &Example) -> Result<(f64, f64)> {
        let (pred, _) = forward(params, ex, Mode::Eval)?;
        Ok((
            self.loss.value(pred.i_x, ex.gt_interp as f64),
            self.loss.value(pred.h_x, ex.gt_harm as f64),
        ))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HistoryRow {
    pub epoch: usize,
    pub step: usize,
    pub lr: f64,
    /// Mean per-example losses; `loss_total` is exactly `loss_i + loss_h`.
    pub loss_i: f64,
    pub loss_h: f64,
    pub loss_total: f64,
    /// `"train"` for optimizer steps, `"val"` for end-of-epoch validation.
    pub split: &'static str,
}

impl HistoryRow {
    pub const CSV_HEADER: &'static str = "epoch,step,lr,loss_I,loss_H,loss_total,split";

    pub fn to_csv(rows: &[HistoryRow]) -> String {
        let mut out = String::from(Self::CSV_HEADER);
        out.push('\n');
        for r in rows {
            out.push_str(&format!(
                "{},{},{:e},{},{},{},{}\n",
                r.epoch, r.step, r.lr, r.loss_i, r.loss_h, r.loss_total, r.split
            ));
        }
        out
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Parameters with the lowest validation loss (last epoch's if there is
    /// no validation set).
    pub params: ModelParams,
    pub history: Vec<HistoryRow>,
    pub best_epoch: usize,
    pub best_val: f64,
    /// Set when training stopped early on a non-finite loss or gradient;
    /// `params` then holds the last good state.
    pub diverged: Option<String>,
}

/// splitmix64 finalizer.
fn mix(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn dropout_seed(seed: u64, epoch: usize, step: usize, slot: usize) -> u64 {
    mix(mix(mix(seed ^ 0x9e37_79b9_7f4a_7c15).wrapping_add(epoch as u64)).wrapping_add(step as u64))
        .wrapping_add(slot as u64)
}

fn mean_loss<O: Objective>(obj: &O, params: &ModelParams, items: &[O::Item]) -> Result<(f64, f64)> {
    let parts: Vec<(f64, f64)> = items
        .par_iter()
        .map(|it| obj.loss(params, it))
        .collect::<Result<_>>()?;
    let n = items.len().max(1) as f64;
    let (si, sh) = parts
        .iter()
        .fold((0.0, 0.0), |(a, b), (i, h)| (a + i, b + h));
    Ok((si / n, sh / n))
}

/// Minibatch Adam with the cyclical schedule. Batches are reshuffled every
/// epoch from `cfg.seed`. Per-item gradients are summed in batch order, so
/// results do not depend on the number of worker threads.
pub fn fit<O: Objective>(
    obj: &O,
    init: ModelParams,
    train: &[O::Item],
    val: &[O::Item],
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if train.is_empty() {
        return Err(Error::Missing("no training examples".into()));
    }
    let n_params = init.n_params();
    let steps = train.len().div_ceil(cfg.batch);
    let mut params = init;
    let mut adam = Adam::new(n_params);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut history = Vec::with_capacity(cfg.epochs * (steps + 1));
    let mut best: Option<(f64, usize, ModelParams)> = None;
    let mut diverged = None;

    'epochs: for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut lr = cfg.lr_min;
        for (step, batch) in order.chunks(cfg.batch).enumerate() {
            lr = cyclical_lr(epoch, step, steps, cfg);
            let parts: Vec<(Vec<f64>, f64, f64)> = batch
                .par_iter()
                .enumerate()
                .map(|(slot, &i)| {
                    let mut g = vec![0.0; n_params];
                    let seed = dropout_seed(cfg.seed, epoch, step, slot);
                    let (li, lh) = obj.loss_grad(&params, &train[i], Some(seed), &mut g)?;
                    Ok((g, li, lh))
                })
                .collect::<Result<_>>()?;
            let mut grad = vec![0.0; n_params];
            let (mut si, mut sh) = (0.0, 0.0);
            for (g, li, lh) in &parts {
                for (a, b) in grad.iter_mut().zip(g) {
                    *a += b;
                }
                si += li;
                sh += lh;
            }
            let b = batch.len() as f64;
            let (loss_i, loss_h) = (si / b, sh / b);
            history.push(HistoryRow {
                epoch,
                step,
                lr,
                loss_i,
                loss_h,
                loss_total: loss_i + loss_h,
                split: "train",
            });
            let mut next = params.data.clone();
            if let Err(e) = adam.step(&mut next, &grad, lr) {
                diverged = Some(format!("epoch {epoch} step {step}: {e}"));
                break 'epochs;
            }
            params.data = next;
        }

        let (loss_i, loss_h) = if val.is_empty() {
            let last = history.last().unwrap();
            (last.loss_i, last.loss_h)
        } else {
            mean_loss(obj, &params, val)?
        };
        let total = loss_i + loss_h;
        history.push(HistoryRow {
            epoch,
            step: steps,
            lr,
            loss_i,
            loss_h,
            loss_total: total,
            split: "val",
        });
        log::info!("epoch {epoch}: val ℓ_I {loss_i:.5} ℓ_H {loss_h:.5} (lr {lr:.2e})");
        if !total.is_finite() {
            diverged = Some(format!("epoch {epoch}: validation loss is {total}"));
            break;
        }
        if val.is_empty() || best.as_ref().is_none_or(|(b, _, _)| total < *b) {
            best = Some((total, epoch, params.clone()));
        }
    }

    let (best_val, best_epoch, params) = match best {
        Some(b) => b,
        None => (f64::NAN, 0, params),
    };
    Ok(TrainOutcome {
        params,
        history,
        best_epoch,
        best_val,
        diverged,
    })
}

/// Trains the network from a seeded initialization.
pub fn train(
    train: &[Example],
    val: &[Example],
    arch: Arch,
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    let obj = ModelObjective {
        loss: cfg.loss,
        dropout: cfg.dropout,
    };
    fit(&obj, ModelParams::init(arch, cfg.seed), train, val, cfg)
}

/// Harmonized intensity for every point of `scan` toward `target_id`, using
/// its own `k` nearest points (itself included). Points with no neighbor
/// within `radius` keep their intensity; their count is returned.
pub fn harmonize_points(
    params: &ModelParams,
    scan: &Scan,
    index: &SpatialIndex,
    target_id: u16,
    k: usize,
    radius: f64,
) -> Result<(Vec<f32>, usize)> {
    params.check_id(scan.scan_id)?;
    params.check_id(target_id)?;
    let out: Vec<Option<f32>> = scan
        .points
        .par_iter()
        .map(|p| {
            let loc = p.xyz();
            let hits = index.query_knn(loc, k, radius);
            if hits.is_empty() {
                return Ok(None);
            }
            let ex = Example {
                neighbors: features(loc, &hits),
                source_id: scan.scan_id,
                target_id,
                gt_interp: 0.0,
                gt_harm: 0.0,
                x_norm: 0.0,
            };
            let (pred, _) = forward(params, &ex, Mode::Eval)?;
            Ok(Some(pred.h_x as f32))
        })
        .collect::<Result<_>>()?;
    let missing = out.iter().filter(|v| v.is_none()).count();
    let values = out
        .iter()
        .zip(&scan.points)
        .map(|(v, p)| v.unwrap_or(p.intensity))
        .collect();
    Ok((values, missing))
}

/// [`harmonize_points`] applied to a copy of the scan.
pub fn harmonize_scan(
    params: &ModelParams,
    scan: &Scan,
    index: &SpatialIndex,
    target_id: u16,
    k: usize,
    radius: f64,
) -> Result<(Scan, usize)> {
    let (values, missing) = harmonize_points(params, scan, index, target_id, k, radius)?;
    let mut out = scan.clone();
    for (p, v) in out.points.iter_mut().zip(values) {
        p.intensity = v;
    }
    Ok((out, missing))
}
