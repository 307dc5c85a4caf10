//! Parameterized building blocks. Each layer stores indices into the
//! model's [`ParamStore`] and is applied to the vars bound on a tape.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{concat, AutodiffError, ParamStore, Tensor, Var};

#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) enum Init {
    /// Uniform with variance `2 / fan_in`, for layers followed by a ReLU.
    He,
    /// Uniform with variance `1 / (3 fan_in)`.
    Default,
    Zero,
}

fn init_tensor(rng: &mut ChaCha8Rng, rows: usize, cols: usize, init: Init) -> Tensor {
    let bound = match init {
        Init::He => (6.0 / rows as f64).sqrt(),
        Init::Default => (1.0 / rows as f64).sqrt(),
        Init::Zero => 0.0,
    };
    let data = (0..rows * cols)
        .map(|_| if bound > 0.0 { rng.random_range(-bound..bound) } else { 0.0 })
        .collect();
    Tensor::new(&[rows, cols], data).expect("sizes match")
}

fn ones_like_rows(x: &Tensor) -> Tensor {
    let mut shape = x.shape().to_vec();
    *shape.last_mut().unwrap() = 1;
    Tensor::filled(&shape, 1.0)
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct Linear {
    w: usize,
    b: usize,
}

impl Linear {
    pub fn new(store: &mut ParamStore, rng: &mut ChaCha8Rng, name: &str, inp: usize, out: usize, init: Init) -> Self {
        let w = store.add(format!("{name}.w"), init_tensor(rng, inp, out, init));
        let b = store.add(format!("{name}.b"), Tensor::zeros(&[1, out]));
        Self { w, b }
    }

    /// `x W + b` over the last axis of a rank-2 or rank-3 input.
    pub fn apply<'t>(&self, p: &[Var<'t>], x: Var<'t>) -> Result<Var<'t>, AutodiffError> {
        let y = x.matmul(p[self.w])?;
        let ones = ones_like_rows(&x.value());
        let ones = x.tape().constant(ones);
        y.add(ones.matmul(p[self.b])?)
    }
}

fn norm_relu(x: Var<'_>, groups: usize) -> Result<Var<'_>, AutodiffError> {
    Ok(x.group_norm(groups)?.relu())
}

/// Two-layer perceptron with ReLU after each layer.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Mlp {
    l1: Linear,
    l2: Linear,
}

impl Mlp {
    pub fn new(store: &mut ParamStore, rng: &mut ChaCha8Rng, name: &str, inp: usize, hidden: usize, out: usize) -> Self {
        Self {
            l1: Linear::new(store, rng, &format!("{name}.l1"), inp, hidden, Init::He),
            l2: Linear::new(store, rng, &format!("{name}.l2"), hidden, out, Init::He),
        }
    }

    pub fn apply<'t>(&self, p: &[Var<'t>], x: Var<'t>) -> Result<Var<'t>, AutodiffError> {
        Ok(self.l2.apply(p, self.l1.apply(p, x)?.relu())?.relu())
    }
}

/// Temporal 1-D convolution stack over `[batch, steps, channels]`.
///
/// Two kernel-3, stride-2 convolutions (the second degrades to kernel 1
/// when fewer than three steps remain), then a flattening linear layer.
#[derive(Debug, Clone)]
pub(crate) struct ConvEncoder {
    c1: Linear,
    c2: Linear,
    out: Linear,
    taps1: Vec<Vec<usize>>,
    taps2: Vec<Vec<usize>>,
    len2: usize,
    channels: usize,
}

fn conv_taps(len: usize, kernel: usize, stride: usize) -> (Vec<Vec<usize>>, usize) {
    let out_len = (len - kernel) / stride + 1;
    let taps = (0..kernel)
        .map(|j| (0..out_len).map(|t| t * stride + j).collect())
        .collect();
    (taps, out_len)
}

impl ConvEncoder {
    pub fn new(
        store: &mut ParamStore,
        rng: &mut ChaCha8Rng,
        name: &str,
        steps: usize,
        in_ch: usize,
        channels: usize,
        out: usize,
    ) -> Self {
        assert!(steps >= 3, "conv encoder needs at least 3 steps");
        let (taps1, len1) = conv_taps(steps, 3, 2);
        let (taps2, len2) = if len1 >= 3 { conv_taps(len1, 3, 2) } else { conv_taps(len1, 1, 1) };
        let c1 = Linear::new(store, rng, &format!("{name}.conv1"), 3 * in_ch, channels, Init::He);
        let c2 = Linear::new(store, rng, &format!("{name}.conv2"), taps2.len() * channels, channels, Init::He);
        let out = Linear::new(store, rng, &format!("{name}.out"), len2 * channels, out, Init::Default);
        Self {
            c1,
            c2,
            out,
            taps1,
            taps2,
            len2,
            channels,
        }
    }

    fn conv<'t>(p: &[Var<'t>], x: Var<'t>, taps: &[Vec<usize>], layer: &Linear) -> Result<Var<'t>, AutodiffError> {
        let cols = taps.iter().map(|t| x.gather(1, t)).collect::<Result<Vec<_>, _>>()?;
        let unfolded = if cols.len() == 1 { cols[0] } else { concat(&cols, 2)? };
        Ok(layer.apply(p, unfolded)?.relu())
    }

    /// `[batch, steps, in_ch] -> [batch, out]`
    pub fn apply<'t>(&self, p: &[Var<'t>], x: Var<'t>) -> Result<Var<'t>, AutodiffError> {
        let batch = x.shape()[0];
        let y = Self::conv(p, x, &self.taps1, &self.c1)?;
        let y = Self::conv(p, y, &self.taps2, &self.c2)?;
        let flat = y.reshape(&[batch, self.len2 * self.channels])?;
        self.out.apply(p, flat)
    }
}

/// Three linear layers with a residual connection after the second:
/// `r = relu(GN(L2 relu(GN(L1 x))) + x)`, output `L3 r`.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Header {
    l1: Linear,
    l2: Linear,
    l3: Linear,
    groups: usize,
}

impl Header {
    pub fn new(store: &mut ParamStore, rng: &mut ChaCha8Rng, name: &str, d: usize, out: usize, groups: usize, final_init: Init) -> Self {
        Self {
            l1: Linear::new(store, rng, &format!("{name}.l1"), d, d, Init::He),
            l2: Linear::new(store, rng, &format!("{name}.l2"), d, d, Init::He),
            l3: Linear::new(store, rng, &format!("{name}.l3"), d, out, final_init),
            groups,
        }
    }

    pub fn apply<'t>(&self, p: &[Var<'t>], x: Var<'t>) -> Result<Var<'t>, AutodiffError> {
        let y = norm_relu(self.l1.apply(p, x)?, self.groups)?;
        let y = self.l2.apply(p, y)?.group_norm(self.groups)?;
        let r = y.add(x)?.relu();
        self.l3.apply(p, r)
    }
}

/// Multi-head scaled dot-product attention with per-query key sets.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Mha {
    wq: Linear,
    wk: Linear,
    wv: Linear,
    wo: Linear,
    heads: usize,
    d: usize,
}

pub(crate) struct MhaOutput<'t> {
    pub out: Var<'t>,
    /// Per head, `[queries, keys]` weights; masked entries are exactly zero.
    pub weights: Vec<Tensor>,
}

impl Mha {
    pub fn new(store: &mut ParamStore, rng: &mut ChaCha8Rng, name: &str, dq: usize, dkv: usize, d: usize, heads: usize) -> Self {
        Self {
            wq: Linear::new(store, rng, &format!("{name}.q"), dq, d, Init::Default),
            wk: Linear::new(store, rng, &format!("{name}.k"), dkv, d, Init::Default),
            wv: Linear::new(store, rng, &format!("{name}.v"), dkv, d, Init::Default),
            wo: Linear::new(store, rng, &format!("{name}.o"), d, d, Init::Default),
            heads,
            d,
        }
    }

    /// `q: [n, dq]`, `kv: [m, dkv]`; query `i` attends only to the rows in
    /// `allowed[i]`. Queries with no keys get an all-zero output.
    pub fn apply<'t>(
        &self,
        p: &[Var<'t>],
        q: Var<'t>,
        kv: Option<Var<'t>>,
        allowed: &[Vec<usize>],
    ) -> Result<MhaOutput<'t>, AutodiffError> {
        let tape = q.tape();
        let n = q.shape()[0];
        let Some(kv) = kv else {
            return Ok(MhaOutput {
                out: tape.constant(Tensor::zeros(&[n, self.d])),
                weights: Vec::new(),
            });
        };
        let m = kv.shape()[0];
        let mut mask = vec![f64::NEG_INFINITY; n * m];
        let mut keep = vec![0.0; n * self.d];
        for (i, keys) in allowed.iter().enumerate() {
            if keys.is_empty() {
                // unmasked dummy row, zeroed after the output projection
                mask[i * m..(i + 1) * m].iter_mut().for_each(|v| *v = 0.0);
                continue;
            }
            for &j in keys {
                mask[i * m + j] = 0.0;
            }
            keep[i * self.d..(i + 1) * self.d].iter_mut().for_each(|v| *v = 1.0);
        }
        let mask = tape.constant(Tensor::new(&[n, m], mask)?);
        let qp = self.wq.apply(p, q)?;
        let kp = self.wk.apply(p, kv)?;
        let vp = self.wv.apply(p, kv)?;
        let dh = self.d / self.heads;
        let scale = 1.0 / (dh as f64).sqrt();
        let mut outs = Vec::with_capacity(self.heads);
        let mut weights = Vec::with_capacity(self.heads);
        for h in 0..self.heads {
            let (a, b) = (h * dh, (h + 1) * dh);
            let qh = if self.heads == 1 { qp } else { qp.slice(1, a, b)? };
            let kh = if self.heads == 1 { kp } else { kp.slice(1, a, b)? };
            let vh = if self.heads == 1 { vp } else { vp.slice(1, a, b)? };
            let att = qh.matmul(kh.transpose()?)?.scale(scale).add(mask)?.softmax();
            weights.push(att.to_tensor());
            outs.push(att.matmul(vh)?);
        }
        let joined = if outs.len() == 1 { outs[0] } else { concat(&outs, 1)? };
        let out = self.wo.apply(p, joined)?.mul(tape.constant(Tensor::new(&[n, self.d], keep)?))?;
        Ok(MhaOutput { out, weights })
    }
}
