use rand::Rng;

use super::Tensor;
use crate::error::{Error, Result};

/// Train mode applies dropout; eval mode is deterministic.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// Destination for embedding-row gradients.
pub trait RowGradSink {
    fn row_mut(&mut self, id: u32) -> &mut [f32];
}

impl RowGradSink for Tensor {
    fn row_mut(&mut self, id: u32) -> &mut [f32] {
        Tensor::row_mut(self, id as usize)
    }
}

/// Looks up one embedding row per id. Id 0 always yields a zero row.
pub fn embedding_forward(ids: &[u32], table: &Tensor) -> Result<Tensor> {
    let rows = table.num_rows();
    let width = table.row_width();
    if ids.is_empty() {
        return Err(Error::Shape("empty id sequence".into()));
    }
    let mut out = Tensor::zeros(&[ids.len(), width]);
    for (t, &id) in ids.iter().enumerate() {
        if id as usize >= rows {
            return Err(Error::IdOutOfRange { id, rows });
        }
        if id != 0 {
            out.row_mut(t).copy_from_slice(table.row(id as usize));
        }
    }
    Ok(out)
}

/// Scatters upstream row gradients into the table gradient, summing repeated
/// ids. The empty-space row never receives gradient.
pub fn embedding_backward(ids: &[u32], upstream: &Tensor, grad: &mut impl RowGradSink) {
    for (t, &id) in ids.iter().enumerate() {
        if id == 0 {
            continue;
        }
        let src = upstream.row(t);
        for (g, &u) in grad.row_mut(id).iter_mut().zip(src) {
            *g += u;
        }
    }
}

/// Which frame won the max for each filter, and whether it passed the ReLU.
#[derive(Debug, Clone)]
pub struct MaxPoolCache {
    best_frame: Vec<usize>,
    active: Vec<bool>,
}

/// Valid 1-D convolution over time, ReLU, then max over all frames.
///
/// `x` is `[T, d1]`, `weight` is `[k, d1, F]`, `bias` is `[F]`; the result
/// has one value per filter.
pub fn conv1d_maxpool_forward(x: &Tensor, weight: &Tensor, bias: &Tensor) -> Result<(Tensor, MaxPoolCache)> {
    let (seq, width) = (x.num_rows(), x.row_width());
    let ws = weight.shape();
    if ws.len() != 3 || ws[1] != width || bias.len() != ws[2] {
        return Err(Error::Shape(format!(
            "conv kernel {ws:?} / bias {:?} do not fit input width {width}",
            bias.shape()
        )));
    }
    let (k, filters) = (ws[0], ws[2]);
    if seq < k {
        return Err(Error::SequenceTooShort { t: seq, k });
    }
    let xd = x.data();
    let wd = weight.data();
    let mut best = vec![f32::NEG_INFINITY; filters];
    let mut best_frame = vec![0usize; filters];
    let mut z = vec![0f32; filters];
    for s in 0..=seq - k {
        z.copy_from_slice(bias.data());
        for j in 0..k {
            let xrow = &xd[(s + j) * width..(s + j + 1) * width];
            for (c, &xv) in xrow.iter().enumerate() {
                if xv == 0.0 {
                    continue;
                }
                let wrow = &wd[(j * width + c) * filters..(j * width + c + 1) * filters];
                for (zf, &wv) in z.iter_mut().zip(wrow) {
                    *zf += xv * wv;
                }
            }
        }
        for f in 0..filters {
            if z[f] > best[f] {
                best[f] = z[f];
                best_frame[f] = s;
            }
        }
    }
    let active: Vec<bool> = best.iter().map(|&v| v > 0.0).collect();
    let out: Vec<f32> = best.iter().map(|&v| v.max(0.0)).collect();
    Ok((Tensor::from_vec(&[filters], out)?, MaxPoolCache { best_frame, active }))
}

pub fn conv1d_maxpool_backward(
    x: &Tensor,
    weight: &Tensor,
    cache: &MaxPoolCache,
    upstream: &[f32],
    dx: &mut Tensor,
    dweight: &mut Tensor,
    dbias: &mut Tensor,
) {
    let width = x.row_width();
    let ws = weight.shape();
    let (k, filters) = (ws[0], ws[2]);
    let xd = x.data();
    let wd = weight.data();
    for f in 0..filters {
        if !cache.active[f] || upstream[f] == 0.0 {
            continue;
        }
        let g = upstream[f];
        let s = cache.best_frame[f];
        dbias.data_mut()[f] += g;
        for j in 0..k {
            for c in 0..width {
                let wi = (j * width + c) * filters + f;
                let xi = (s + j) * width + c;
                dweight.data_mut()[wi] += g * xd[xi];
                dx.data_mut()[xi] += g * wd[wi];
            }
        }
    }
}

/// Hidden states `h_0..h_T` (row 0 is the zero initial state).
#[derive(Debug, Clone)]
pub struct RnnCache {
    hidden: Vec<f32>,
    width: usize,
}

/// `h_t = tanh(x_t Wxh + h_{t-1} Whh + b)`, `h_0 = 0`; returns `h_T`.
pub fn rnn_forward(x: &Tensor, wxh: &Tensor, whh: &Tensor, bias: &Tensor) -> Result<(Tensor, RnnCache)> {
    let (seq, d_in) = (x.num_rows(), x.row_width());
    let d_h = bias.len();
    if wxh.shape() != [d_in, d_h] || whh.shape() != [d_h, d_h] {
        return Err(Error::Shape(format!(
            "rnn weights {:?}/{:?} do not fit input {d_in} and hidden {d_h}",
            wxh.shape(),
            whh.shape()
        )));
    }
    let mut hidden = vec![0f32; (seq + 1) * d_h];
    let mut a = vec![0f32; d_h];
    for t in 0..seq {
        a.copy_from_slice(bias.data());
        for (c, &xv) in x.row(t).iter().enumerate() {
            if xv != 0.0 {
                for (ai, &w) in a.iter_mut().zip(wxh.row(c)) {
                    *ai += xv * w;
                }
            }
        }
        let (prev, next) = hidden.split_at_mut((t + 1) * d_h);
        let prev = &prev[t * d_h..];
        for (r, &hv) in prev.iter().enumerate() {
            for (ai, &w) in a.iter_mut().zip(whh.row(r)) {
                *ai += hv * w;
            }
        }
        for (h, &ai) in next[..d_h].iter_mut().zip(&a) {
            *h = ai.tanh();
        }
    }
    let last = hidden[seq * d_h..].to_vec();
    Ok((Tensor::from_vec(&[d_h], last)?, RnnCache { hidden, width: d_h }))
}

/// Backpropagation through time for [`rnn_forward`].
#[allow(clippy::too_many_arguments)]
pub fn rnn_backward(
    x: &Tensor,
    wxh: &Tensor,
    whh: &Tensor,
    cache: &RnnCache,
    upstream: &[f32],
    dx: &mut Tensor,
    dwxh: &mut Tensor,
    dwhh: &mut Tensor,
    dbias: &mut Tensor,
) {
    let d_h = cache.width;
    let seq = x.num_rows();
    let mut dh = upstream.to_vec();
    let mut da = vec![0f32; d_h];
    for t in (0..seq).rev() {
        let h_t = &cache.hidden[(t + 1) * d_h..(t + 2) * d_h];
        let h_prev = &cache.hidden[t * d_h..(t + 1) * d_h];
        for i in 0..d_h {
            da[i] = dh[i] * (1.0 - h_t[i] * h_t[i]);
        }
        for (b, &g) in dbias.data_mut().iter_mut().zip(&da) {
            *b += g;
        }
        let xrow = x.row(t);
        for (c, &xv) in xrow.iter().enumerate() {
            let grow = dwxh.row_mut(c);
            for (g, &d) in grow.iter_mut().zip(&da) {
                *g += xv * d;
            }
            let wrow = wxh.row(c);
            dx.row_mut(t)[c] += wrow.iter().zip(&da).map(|(w, d)| w * d).sum::<f32>();
        }
        for (r, &hv) in h_prev.iter().enumerate() {
            let grow = dwhh.row_mut(r);
            for (g, &d) in grow.iter_mut().zip(&da) {
                *g += hv * d;
            }
            dh[r] = whh.row(r).iter().zip(&da).map(|(w, d)| w * d).sum();
        }
    }
}

/// `h W + b` for a single input vector.
pub fn dense_forward(h: &[f32], weight: &Tensor, bias: &Tensor) -> Result<Vec<f32>> {
    if weight.shape() != [h.len(), bias.len()] {
        return Err(Error::Shape(format!(
            "dense weight {:?} does not fit input {} and output {}",
            weight.shape(),
            h.len(),
            bias.len()
        )));
    }
    let mut out = bias.data().to_vec();
    for (i, &hv) in h.iter().enumerate() {
        for (o, &w) in out.iter_mut().zip(weight.row(i)) {
            *o += hv * w;
        }
    }
    Ok(out)
}

pub fn dense_backward(h: &[f32], weight: &Tensor, dlogits: &[f32], dh: &mut [f32], dweight: &mut Tensor, dbias: &mut Tensor) {
    for (b, &g) in dbias.data_mut().iter_mut().zip(dlogits) {
        *b += g;
    }
    for (i, &hv) in h.iter().enumerate() {
        for (w, &g) in dweight.row_mut(i).iter_mut().zip(dlogits) {
            *w += hv * g;
        }
        dh[i] += weight.row(i).iter().zip(dlogits).map(|(w, g)| w * g).sum::<f32>();
    }
}

/// Numerically stable softmax (max-subtracted).
pub fn softmax(logits: &[f32]) -> Vec<f32> {
    let max = logits.iter().copied().fold(f32::NEG_INFINITY, f32::max);
    let mut out: Vec<f32> = logits.iter().map(|&z| (z - max).exp()).collect();
    let sum: f32 = out.iter().sum();
    for p in &mut out {
        *p /= sum;
    }
    out
}

/// Dense layer followed by softmax.
pub fn dense_softmax(h: &[f32], weight: &Tensor, bias: &Tensor) -> Result<Vec<f32>> {
    Ok(softmax(&dense_forward(h, weight, bias)?))
}

/// Inverted dropout. Returns the output and the per-entry multiplier
/// (0 or `1/(1-rate)`) needed for the backward pass.
pub fn dropout<R: Rng + ?Sized>(x: &[f32], rate: f32, mode: Mode, rng: &mut R) -> Result<(Vec<f32>, Vec<f32>)> {
    if !(0.0..1.0).contains(&rate) {
        return Err(Error::InvalidArgument(format!("dropout rate {rate} outside [0, 1)")));
    }
    if mode == Mode::Eval || rate == 0.0 {
        return Ok((x.to_vec(), vec![1.0; x.len()]));
    }
    let scale = 1.0 / (1.0 - rate);
    let mask: Vec<f32> = x
        .iter()
        .map(|_| if rng.gen::<f32>() < rate { 0.0 } else { scale })
        .collect();
    let out = x.iter().zip(&mask).map(|(v, m)| v * m).collect();
    Ok((out, mask))
}
