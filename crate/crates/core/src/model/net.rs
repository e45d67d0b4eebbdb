//! Forward pass, loss and exact reverse-mode gradients for the fixed graph.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{DenseRef, ModelParams};
use crate::dataset::Example;
use crate::error::Result;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Mode {
    Eval,
    /// Dropout on the head's hidden layer, mask drawn from `seed`.
    Train {
        dropout: f64,
        seed: u64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Loss {
    L1,
    L2,
}

impl std::str::FromStr for Loss {
    type Err = crate::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "l1" => Ok(Loss::L1),
            "l2" => Ok(Loss::L2),
            other => Err(crate::Error::Config(format!(
                "loss must be l1 or l2, got '{other}'"
            ))),
        }
    }
}

impl std::fmt::Display for Loss {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Loss::L1 => "l1",
            Loss::L2 => "l2",
        })
    }
}

impl Loss {
    pub fn value(self, pred: f64, target: f64) -> f64 {
        let d = pred - target;
        match self {
            Loss::L1 => d.abs(),
            Loss::L2 => d * d,
        }
    }

    pub fn derivative(self, pred: f64, target: f64) -> f64 {
        let d = pred - target;
        match self {
            Loss::L1 => {
                if d > 0.0 {
                    1.0
                } else if d < 0.0 {
                    -1.0
                } else {
                    0.0
                }
            }
            Loss::L2 => 2.0 * d,
        }
    }
}

/// `(ℓ_I, ℓ_H, L)` for one prediction, with `L = ℓ_I + ℓ_H`.
pub fn loss(i_x: f64, h_x: f64, gt_i: f64, gt_h: f64, rho: Loss) -> (f64, f64, f64) {
    let li = rho.value(i_x, gt_i);
    let lh = rho.value(h_x, gt_h);
    (li, lh, li + lh)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Prediction {
    /// Interpolated source intensity at the target location.
    pub i_x: f64,
    /// Harmonized intensity.
    pub h_x: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HeadTrace {
    /// `[I_x, e_source - e_target]`.
    pub input: Vec<f64>,
    /// Hidden activations after ReLU, before dropout.
    pub hidden: Vec<f64>,
    /// Inverted-dropout multipliers (`0` or `1 / (1 - p)`).
    pub mask: Option<Vec<f64>>,
    pub out: f64,
}

/// Intermediate values needed to backpropagate one example.
#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    pub n_points: usize,
    /// `point[0]` is the `n x 4` input; `point[l]` the ReLU output of shared
    /// layer `l`, `n x width`.
    pub point: Vec<Vec<f64>>,
    /// Winning point per pooled channel (first index on ties).
    pub argmax: Vec<usize>,
    /// `post[0]` is the pooled vector, then hidden ReLU outputs.
    pub post: Vec<Vec<f64>>,
    pub i_x: f64,
    pub source: usize,
    pub target: usize,
    pub head: HeadTrace,
}

#[inline]
pub(crate) fn sigmoid(t: f64) -> f64 {
    1.0 / (1.0 + (-t).exp())
}

/// `out = b + x W` for one input row.
#[inline]
fn dense_row(data: &[f64], d: &DenseRef, x: &[f64], out: &mut [f64]) {
    let o = d.outputs;
    out.copy_from_slice(&data[d.bias..d.bias + o]);
    let w = &data[d.weight..d.weight + d.inputs * o];
    for (xi, row) in x.iter().zip(w.chunks_exact(o)) {
        if *xi == 0.0 {
            continue;
        }
        for (acc, wv) in out.iter_mut().zip(row) {
            *acc += xi * wv;
        }
    }
}

#[inline]
fn relu_in_place(v: &mut [f64]) {
    for x in v {
        if *x < 0.0 {
            *x = 0.0;
        }
    }
}

/// Accumulates `dW += x ⊗ dz`, `db += dz`; writes `dx = W dz` when asked.
#[inline]
fn dense_back(
    data: &[f64],
    d: &DenseRef,
    x: &[f64],
    dz: &[f64],
    grad: &mut [f64],
    dx: Option<&mut [f64]>,
) {
    let o = d.outputs;
    for (g, v) in grad[d.bias..d.bias + o].iter_mut().zip(dz) {
        *g += v;
    }
    let gw = &mut grad[d.weight..d.weight + d.inputs * o];
    for (xi, grow) in x.iter().zip(gw.chunks_exact_mut(o)) {
        if *xi == 0.0 {
            continue;
        }
        for (g, v) in grow.iter_mut().zip(dz) {
            *g += xi * v;
        }
    }
    if let Some(dx) = dx {
        let w = &data[d.weight..d.weight + d.inputs * o];
        for (out, row) in dx.iter_mut().zip(w.chunks_exact(o)) {
            *out = row.iter().zip(dz).map(|(a, b)| a * b).sum();
        }
    }
}

fn dropout_mask(width: usize, p: f64, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let keep = 1.0 / (1.0 - p);
    (0..width)
        .map(|_| if rng.random::<f64>() < p { 0.0 } else { keep })
        .collect()
}

/// Head: `[I_x, e_s - e_t]` → ReLU hidden (+ dropout) → sigmoid.
pub fn head_forward(
    params: &ModelParams,
    i_x: f64,
    source: usize,
    target: usize,
    mode: Mode,
) -> HeadTrace {
    let [h0, h1] = params.layout.head;
    let es = params.embedding_row(source);
    let et = params.embedding_row(target);
    let mut input = Vec::with_capacity(1 + es.len());
    input.push(i_x);
    input.extend(es.iter().zip(et).map(|(a, b)| a - b));

    let mut hidden = vec![0.0; h0.outputs];
    dense_row(&params.data, &h0, &input, &mut hidden);
    relu_in_place(&mut hidden);
    let mask = match mode {
        Mode::Train { dropout, seed } if dropout > 0.0 => {
            Some(dropout_mask(hidden.len(), dropout, seed))
        }
        _ => None,
    };
    let dropped: Vec<f64> = match &mask {
        Some(m) => hidden.iter().zip(m).map(|(h, m)| h * m).collect(),
        None => hidden.clone(),
    };
    let mut z = [0.0];
    dense_row(&params.data, &h1, &dropped, &mut z);
    HeadTrace {
        input,
        hidden,
        mask,
        out: sigmoid(z[0]),
    }
}

/// Backpropagates `d_out = ∂L/∂H_x` through the head. Accumulates parameter
/// gradients (embedding rows included) and returns `∂L/∂I_x` from this path.
pub fn head_backward(
    params: &ModelParams,
    trace: &HeadTrace,
    source: usize,
    target: usize,
    d_out: f64,
    grad: &mut [f64],
) -> f64 {
    let [h0, h1] = params.layout.head;
    let dz_out = [d_out * trace.out * (1.0 - trace.out)];
    let dropped: Vec<f64> = match &trace.mask {
        Some(m) => trace.hidden.iter().zip(m).map(|(h, m)| h * m).collect(),
        None => trace.hidden.clone(),
    };
    let mut d_hidden = vec![0.0; h0.outputs];
    dense_back(
        &params.data,
        &h1,
        &dropped,
        &dz_out,
        grad,
        Some(&mut d_hidden),
    );
    for (k, dh) in d_hidden.iter_mut().enumerate() {
        let m = trace.mask.as_ref().map_or(1.0, |m| m[k]);
        if trace.hidden[k] <= 0.0 {
            *dh = 0.0;
        } else {
            *dh *= m;
        }
    }
    let mut d_input = vec![0.0; h0.inputs];
    dense_back(
        &params.data,
        &h0,
        &trace.input,
        &d_hidden,
        grad,
        Some(&mut d_input),
    );
    let dim = params.arch.embed_dim;
    let es = params.layout.embedding + source * dim;
    let et = params.layout.embedding + target * dim;
    for j in 0..dim {
        grad[es + j] += d_input[1 + j];
        grad[et + j] -= d_input[1 + j];
    }
    d_input[0]
}

/// Runs the network on one example.
pub fn forward(params: &ModelParams, ex: &Example, mode: Mode) -> Result<(Prediction, Trace)> {
    params.check_id(ex.source_id)?;
    params.check_id(ex.target_id)?;
    let n = ex.neighbors.len();
    assert!(n > 0, "example has no neighbors");
    let layout = &params.layout;

    let mut point = Vec::with_capacity(layout.point.len() + 1);
    point.push(
        ex.neighbors
            .iter()
            .flat_map(|f| f.iter().map(|&v| v as f64))
            .collect::<Vec<f64>>(),
    );
    for d in &layout.point {
        let prev = point.last().unwrap();
        let mut out = vec![0.0; n * d.outputs];
        for (x, o) in prev
            .chunks_exact(d.inputs)
            .zip(out.chunks_exact_mut(d.outputs))
        {
            dense_row(&params.data, d, x, o);
            relu_in_place(o);
        }
        point.push(out);
    }

    let last = point.last().unwrap();
    let width = layout.point.last().map_or(4, |d| d.outputs);
    let mut pooled = last[..width].to_vec();
    let mut argmax = vec![0usize; width];
    for (j, row) in last.chunks_exact(width).enumerate().skip(1) {
        for c in 0..width {
            if row[c] > pooled[c] {
                pooled[c] = row[c];
                argmax[c] = j;
            }
        }
    }

    let mut post = vec![pooled];
    let n_post = layout.post.len();
    let mut z_last = 0.0;
    for (l, d) in layout.post.iter().enumerate() {
        let mut out = vec![0.0; d.outputs];
        dense_row(&params.data, d, post.last().unwrap(), &mut out);
        if l + 1 < n_post {
            relu_in_place(&mut out);
            post.push(out);
        } else {
            z_last = out[0];
        }
    }
    let i_x = sigmoid(z_last);

    let (s, t) = (ex.source_id as usize, ex.target_id as usize);
    let head = head_forward(params, i_x, s, t, mode);
    let pred = Prediction { i_x, h_x: head.out };
    Ok((
        pred,
        Trace {
            n_points: n,
            point,
            argmax,
            post,
            i_x,
            source: s,
            target: t,
            head,
        },
    ))
}

/// Exact gradient of a loss with partials `d_ix = ∂L/∂I_x`, `d_hx = ∂L/∂H_x`
/// with respect to every parameter, accumulated into `grad`.
pub fn backward(params: &ModelParams, trace: &Trace, d_ix: f64, d_hx: f64, grad: &mut [f64]) {
    let layout = &params.layout;
    let d_i_head = head_backward(params, &trace.head, trace.source, trace.target, d_hx, grad);
    let d_i = d_ix + d_i_head;

    // Post-pool MLP, last layer first.
    let mut dz = vec![d_i * trace.i_x * (1.0 - trace.i_x)];
    for (l, d) in layout.post.iter().enumerate().rev() {
        let x = &trace.post[l];
        let mut dx = vec![0.0; d.inputs];
        dense_back(&params.data, d, x, &dz, grad, Some(&mut dx));
        if l > 0 {
            for (g, a) in dx.iter_mut().zip(x) {
                if *a <= 0.0 {
                    *g = 0.0;
                }
            }
        }
        dz = dx;
    }
    let d_pooled = dz;

    // Max-pool routes each channel's gradient to its winning point only.
    let n = trace.n_points;
    let n_layers = layout.point.len();
    if n_layers == 0 {
        return;
    }
    let width = layout.point[n_layers - 1].outputs;
    let mut d_act: Vec<Option<Vec<f64>>> = vec![None; n];
    for (c, &j) in trace.argmax.iter().enumerate() {
        if d_pooled[c] != 0.0 {
            d_act[j].get_or_insert_with(|| vec![0.0; width])[c] += d_pooled[c];
        }
    }
    for (j, slot) in d_act.into_iter().enumerate() {
        let Some(mut da) = slot else { continue };
        for l in (0..n_layers).rev() {
            let d = &layout.point[l];
            let out = &trace.point[l + 1][j * d.outputs..(j + 1) * d.outputs];
            for (g, a) in da.iter_mut().zip(out) {
                if *a <= 0.0 {
                    *g = 0.0;
                }
            }
            let x = &trace.point[l][j * d.inputs..(j + 1) * d.inputs];
            if l > 0 {
                let mut dx = vec![0.0; d.inputs];
                dense_back(&params.data, d, x, &da, grad, Some(&mut dx));
                da = dx;
            } else {
                dense_back(&params.data, d, x, &da, grad, None);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Arch, ModelParams};

    fn example(n: usize, s: u16, t: u16) -> Example {
        Example {
            neighbors: (0..n)
                .map(|j| {
                    let a = j as f32 * 0.7;
                    [
                        a.sin() * 0.5,
                        a.cos() * 0.4,
                        0.05 * j as f32,
                        (j as f32 * 0.13) % 1.0,
                    ]
                })
                .collect(),
            source_id: s,
            target_id: t,
            gt_interp: 0.4,
            gt_harm: 0.6,
            x_norm: 0.5,
        }
    }

    #[test]
    fn loss_examples() {
        assert_eq!(loss(0.3, 0.6, 0.3, 0.6, Loss::L1).2, 0.0);
        let (li, lh, l) = loss(0.3, 0.6, 0.5, 0.6, Loss::L1);
        assert!((li - 0.2).abs() < 1e-15 && lh == 0.0);
        assert_eq!(l, li + lh);
        let (li, lh, l) = loss(0.1, 0.9, 0.4, 0.2, Loss::L2);
        assert_eq!(l, li + lh);
    }

    #[test]
    fn self_pair_has_zero_embedding_difference() {
        let p = ModelParams::init(Arch::default(), 1);
        let (pred, trace) = forward(&p, &example(8, 5, 5), Mode::Eval).unwrap();
        assert_eq!(trace.head.input, vec![pred.i_x, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn outputs_are_probabilities() {
        let p = ModelParams::init(Arch::default(), 2);
        let (pred, _) = forward(&p, &example(20, 1, 3), Mode::Eval).unwrap();
        assert!(pred.i_x > 0.0 && pred.i_x < 1.0);
        assert!(pred.h_x > 0.0 && pred.h_x < 1.0);
    }

    #[test]
    fn unknown_ids_are_rejected() {
        let p = ModelParams::init(Arch::default(), 1);
        assert!(forward(&p, &example(3, 45, 0), Mode::Eval).is_err());
        assert!(forward(&p, &example(3, 0, 99), Mode::Eval).is_err());
    }

    #[test]
    fn eval_ignores_neighbor_order() {
        let p = ModelParams::init(Arch::default(), 4);
        let ex = example(30, 2, 7);
        let mut rev = ex.clone();
        rev.neighbors.reverse();
        rev.neighbors.swap(3, 17);
        let (a, _) = forward(&p, &ex, Mode::Eval).unwrap();
        let (b, _) = forward(&p, &rev, Mode::Eval).unwrap();
        assert_eq!(a.i_x.to_bits(), b.i_x.to_bits());
        assert_eq!(a.h_x.to_bits(), b.h_x.to_bits());
    }

    #[test]
    fn zero_loss_gives_zero_gradient() {
        let p = ModelParams::init(Arch::default(), 5);
        let ex = example(10, 1, 2);
        let (_, trace) = forward(&p, &ex, Mode::Eval).unwrap();
        let mut g = vec![0.0; p.n_params()];
        backward(&p, &trace, 0.0, 0.0, &mut g);
        assert!(g.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn unused_embedding_rows_get_no_gradient() {
        let p = ModelParams::init(Arch::default(), 6);
        let ex = example(10, 1, 2);
        let (_, trace) = forward(&p, &ex, Mode::Eval).unwrap();
        let mut g = vec![0.0; p.n_params()];
        backward(&p, &trace, 0.7, -0.3, &mut g);
        for id in 0..45 {
            let e = p.layout.embedding + id * 3;
            let row = &g[e..e + 3];
            if id == 1 || id == 2 {
                assert!(row.iter().any(|v| *v != 0.0));
            } else {
                assert!(row.iter().all(|v| *v == 0.0), "row {id}");
            }
        }
        // The source and target rows receive opposite gradients.
        let e1 = p.layout.embedding + 3;
        let e2 = p.layout.embedding + 6;
        for j in 0..3 {
            assert_eq!(g[e1 + j], -g[e2 + j]);
        }
    }

    #[test]
    fn dropout_mask_is_replayed_by_seed() {
        let p = ModelParams::init(Arch::default(), 7);
        let ex = example(6, 1, 2);
        let mode = Mode::Train {
            dropout: 0.3,
            seed: 11,
        };
        let (a, ta) = forward(&p, &ex, mode).unwrap();
        let (b, tb) = forward(&p, &ex, mode).unwrap();
        assert_eq!(a, b);
        assert_eq!(ta, tb);
        let mask = ta.head.mask.unwrap();
        assert!(mask
            .iter()
            .all(|m| *m == 0.0 || (*m - 1.0 / 0.7).abs() < 1e-15));
        assert!(mask.iter().any(|m| *m == 0.0));
    }

    #[test]
    fn small_network_matches_finite_differences() {
        let arch = Arch {
            point: vec![4, 5, 6],
            post: vec![6, 4, 1],
            head_hidden: 7,
            ..Arch::default()
        };
        let mut p = ModelParams::init(arch, 8);
        for (j, v) in p.data.iter_mut().enumerate() {
            *v += 0.01 * ((j * 7919) % 13) as f64 / 13.0;
        }
        let ex = example(9, 3, 4);
        let mode = Mode::Train {
            dropout: 0.3,
            seed: 2,
        };
        let total = |p: &ModelParams| {
            let (pred, _) = forward(p, &ex, mode).unwrap();
            loss(pred.i_x, pred.h_x, 0.4, 0.6, Loss::L2).2
        };
        let (pred, trace) = forward(&p, &ex, mode).unwrap();
        let mut g = vec![0.0; p.n_params()];
        backward(
            &p,
            &trace,
            Loss::L2.derivative(pred.i_x, 0.4),
            Loss::L2.derivative(pred.h_x, 0.6),
            &mut g,
        );
        for j in 0..p.n_params() {
            let mut q = p.clone();
            q.data[j] += 1e-5;
            let up = total(&q);
            q.data[j] -= 2e-5;
            let down = total(&q);
            let fd = (up - down) / 2e-5;
            assert!(
                (fd - g[j]).abs() <= 1e-3 * fd.abs().max(g[j].abs()) + 1e-9,
                "param {j}: {fd} vs {}",
                g[j]
            );
        }
    }
}
