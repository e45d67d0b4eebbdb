//! The harmonization network: a PointNet interpolator over the source
//! neighborhood, a per-sensor embedding dictionary, and an MLP head that
//! maps the interpolated intensity plus the source-target embedding
//! difference to the harmonized intensity.
//!
//! All parameters live in one flat `Vec<f64>`; [`Layout`] names the blocks.
//! Dense weights are stored input-major (`[in][out]`).

mod checkpoint;
mod net;
mod optim;
mod train;

pub use checkpoint::{
    decode_blocks, decode_checkpoint, encode_checkpoint, load_checkpoint, save_checkpoint, Block,
    CHECKPOINT_MAGIC,
};
pub use net::{
    backward, forward, head_backward, head_forward, loss, HeadTrace, Loss, Mode, Prediction, Trace,
};
pub use optim::{cyclical_lr, Adam, TrainConfig};
pub use train::{
    fit, harmonize_points, harmonize_scan, train, HistoryRow, ModelObjective, Objective,
    TrainOutcome,
};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};

pub const DICTIONARY_SIZE: usize = 45;
pub const EMBED_DIM: usize = 3;

/// Layer widths. The defaults are the shipped architecture; tests shrink
/// them for speed.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Arch {
    /// Shared per-point layers, starting at the 4 input features.
    pub point: Vec<usize>,
    /// Layers after the max-pool, ending at 1.
    pub post: Vec<usize>,
    pub head_hidden: usize,
    pub dict_size: usize,
    pub embed_dim: usize,
}

impl Default for Arch {
    fn default() -> Self {
        Self {
            point: vec![4, 64, 128],
            post: vec![128, 64, 1],
            head_hidden: 100,
            dict_size: DICTIONARY_SIZE,
            embed_dim: EMBED_DIM,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DenseRef {
    pub inputs: usize,
    pub outputs: usize,
    pub weight: usize,
    pub bias: usize,
}

/// Offsets of every parameter block inside the flat vector.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Layout {
    pub point: Vec<DenseRef>,
    pub post: Vec<DenseRef>,
    pub embedding: usize,
    pub head: [DenseRef; 2],
    pub len: usize,
}

impl Layout {
    pub fn new(arch: &Arch) -> Self {
        let mut off = 0usize;
        let mut dense = |i: usize, o: usize| {
            let d = DenseRef {
                inputs: i,
                outputs: o,
                weight: off,
                bias: off + i * o,
            };
            off += i * o + o;
            d
        };
        let point = arch.point.windows(2).map(|w| dense(w[0], w[1])).collect();
        let post = arch.post.windows(2).map(|w| dense(w[0], w[1])).collect();
        let h0 = dense(1 + arch.embed_dim, arch.head_hidden);
        let h1 = dense(arch.head_hidden, 1);
        let embedding = off;
        off += arch.dict_size * arch.embed_dim;
        Self {
            point,
            post,
            embedding,
            head: [h0, h1],
            len: off,
        }
    }

    /// `(name, offset, dims)` for every block, in checkpoint order.
    pub fn blocks(&self, arch: &Arch) -> Vec<(String, usize, Vec<usize>)> {
        let mut out = Vec::new();
        let mut push_dense = |prefix: &str, i: usize, d: &DenseRef| {
            out.push((
                format!("{prefix}.{i}.weight"),
                d.weight,
                vec![d.inputs, d.outputs],
            ));
            out.push((format!("{prefix}.{i}.bias"), d.bias, vec![d.outputs]));
        };
        for (i, d) in self.point.iter().enumerate() {
            push_dense("pointnet.shared", i, d);
        }
        for (i, d) in self.post.iter().enumerate() {
            push_dense("pointnet.post", i, d);
        }
        for (i, d) in self.head.iter().enumerate() {
            push_dense("head", i, d);
        }
        out.push((
            "embedding".into(),
            self.embedding,
            vec![arch.dict_size, arch.embed_dim],
        ));
        out
    }
}

/// All learnable parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub arch: Arch,
    pub layout: Layout,
    pub data: Vec<f64>,
}

impl ModelParams {
    pub fn zeros(arch: Arch) -> Self {
        let layout = Layout::new(&arch);
        let data = vec![0.0; layout.len];
        Self { arch, layout, data }
    }

    /// Glorot-uniform weights and biases (the bias shares its layer's bound),
    /// `N(0, 0.1)` embeddings.
    pub fn init(arch: Arch, seed: u64) -> Self {
        let mut p = Self::zeros(arch);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let dense: Vec<DenseRef> = p
            .layout
            .point
            .iter()
            .chain(&p.layout.post)
            .chain(&p.layout.head)
            .copied()
            .collect();
        for d in dense {
            let bound = (6.0 / (d.inputs + d.outputs) as f64).sqrt();
            for w in &mut p.data[d.weight..d.bias + d.outputs] {
                *w = rng.random_range(-bound..bound);
            }
        }
        let normal = Normal::new(0.0, 0.1).unwrap();
        let e = p.layout.embedding;
        for v in &mut p.data[e..e + p.arch.dict_size * p.arch.embed_dim] {
            *v = normal.sample(&mut rng);
        }
        p
    }

    pub fn n_params(&self) -> usize {
        self.data.len()
    }

    pub fn embedding_row(&self, id: usize) -> &[f64] {
        let e = self.layout.embedding + id * self.arch.embed_dim;
        &self.data[e..e + self.arch.embed_dim]
    }

    pub fn check_id(&self, id: u16) -> Result<()> {
        if (id as usize) < self.arch.dict_size {
            Ok(())
        } else {
            Err(Error::Dictionary {
                id: id as usize,
                size: self.arch.dict_size,
            })
        }
    }
}
