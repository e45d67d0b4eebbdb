use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::model::{
    fit, head_backward, head_forward, Arch, HistoryRow, Mode, ModelParams, Objective, TrainConfig,
};

/// One supervised pair for a stand-alone head: an interpolated source
/// intensity and the harmonized ground truth.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HeadPair {
    pub i: f64,
    pub h: f64,
    pub source: u16,
    pub target: u16,
}

/// The network's head and embedding table with no PointNet layers.
pub fn head_arch(arch: &Arch) -> Arch {
    Arch {
        point: Vec::new(),
        post: Vec::new(),
        ..arch.clone()
    }
}

/// `ℓ_H` of the head alone; `ℓ_I` is reported as zero.
#[derive(Debug, Clone, Copy)]
pub struct HeadObjective {
    pub loss: crate::model::Loss,
    pub dropout: f64,
}

impl Objective for HeadObjective {
    type Item = HeadPair;

    fn loss_grad(
        &self,
        params: &ModelParams,
        p: &HeadPair,
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
        let (s, t) = (p.source as usize, p.target as usize);
        let trace = head_forward(params, p.i, s, t, mode);
        let d = self.loss.derivative(trace.out, p.h);
        head_backward(params, &trace, s, t, d, grad);
        Ok((0.0, self.loss.value(trace.out, p.h)))
    }

    fn loss(&self, params: &ModelParams, p: &HeadPair) -> Result<(f64, f64)> {
        let h = head_forward(
            params,
            p.i,
            p.source as usize,
            p.target as usize,
            Mode::Eval,
        )
        .out;
        Ok((0.0, self.loss.value(h, p.h)))
    }
}

#[derive(Debug, Clone)]
pub struct MlpHead {
    pub params: ModelParams,
    pub history: Vec<HistoryRow>,
}

impl MlpHead {
    pub fn apply(&self, i: f64, source: u16, target: u16) -> Result<f64> {
        self.params.check_id(source)?;
        self.params.check_id(target)?;
        Ok(head_forward(
            &self.params,
            i,
            source as usize,
            target as usize,
            Mode::Eval,
        )
        .out)
    }
}

pub const MIN_PAIRS: usize = 100;

/// Trains a head on `pairs` with the network's optimizer settings, holding
/// out a seeded `val_fraction` for model selection.
pub fn fit_mlp_head(
    pairs: &[HeadPair],
    arch: &Arch,
    cfg: &TrainConfig,
    val_fraction: f64,
) -> Result<MlpHead> {
    if pairs.len() < MIN_PAIRS {
        return Err(Error::Missing(format!(
            "MLP head needs at least {MIN_PAIRS} pairs, got {}",
            pairs.len()
        )));
    }
    let init = ModelParams::init(head_arch(arch), cfg.seed);
    for p in pairs {
        init.check_id(p.source)?;
        init.check_id(p.target)?;
    }
    let n_val = ((pairs.len() as f64) * val_fraction.clamp(0.0, 0.5)).round() as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x4d4c_5048);
    let mut is_val = vec![false; pairs.len()];
    for i in index::sample(&mut rng, pairs.len(), n_val) {
        is_val[i] = true;
    }
    let (mut train, mut val) = (Vec::new(), Vec::new());
    for (p, v) in pairs.iter().zip(is_val) {
        if v {
            val.push(*p);
        } else {
            train.push(*p);
        }
    }
    let obj = HeadObjective {
        loss: cfg.loss,
        dropout: cfg.dropout,
    };
    let out = fit(&obj, init, &train, &val, cfg)?;
    if let Some(msg) = out.diverged {
        return Err(Error::Diverged(msg));
    }
    Ok(MlpHead {
        params: out.params,
        history: out.history,
    })
}
