//! Text classifiers assembled from the layers in [`crate::nn`]: TextCNN,
//! a single-layer tanh RNN, and a mean-of-embeddings baseline.

mod checkpoint;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

pub use checkpoint::{decode_checkpoint, encode_checkpoint, read_checkpoint, write_checkpoint, CHECKPOINT_MAGIC};

use crate::corpus::{EncodedDocument, PAD_ID};
use crate::error::{Error, Result};
use crate::nn::{self, Mode, ParamRole, ParamTensor, RowGradSink, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ModelKind {
    TextCnn,
    SimpleRnn,
    MeanPool,
}

impl ModelKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::TextCnn => "textcnn",
            ModelKind::SimpleRnn => "simplernn",
            ModelKind::MeanPool => "meanpool",
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "textcnn" => Ok(ModelKind::TextCnn),
            "simplernn" => Ok(ModelKind::SimpleRnn),
            "meanpool" => Ok(ModelKind::MeanPool),
            other => Err(Error::InvalidArgument(format!("unknown model kind `{other}`"))),
        }
    }
}

/// Architecture hyperparameters.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    pub kind: ModelKind,
    /// Number of real keywords D; the embedding table has D + 1 rows.
    pub num_keywords: usize,
    pub embed_dim: usize,
    /// Recurrent state width (simplernn only).
    pub hidden_dim: usize,
    pub num_classes: usize,
    pub seq_len: usize,
    /// Convolution widths (textcnn only).
    pub kernel_sizes: Vec<usize>,
    /// Filters per kernel width (textcnn only).
    pub filters: usize,
    /// Dropout applied to the representation fed to the output layer.
    pub dropout: f32,
}

impl ModelConfig {
    pub fn textcnn(num_keywords: usize, embed_dim: usize, kernel_sizes: Vec<usize>, filters: usize, num_classes: usize, seq_len: usize) -> Self {
        Self {
            kind: ModelKind::TextCnn,
            num_keywords,
            embed_dim,
            hidden_dim: 0,
            num_classes,
            seq_len,
            kernel_sizes,
            filters,
            dropout: 0.5,
        }
    }

    pub fn simplernn(num_keywords: usize, embed_dim: usize, hidden_dim: usize, num_classes: usize, seq_len: usize) -> Self {
        Self {
            kind: ModelKind::SimpleRnn,
            num_keywords,
            embed_dim,
            hidden_dim,
            num_classes,
            seq_len,
            kernel_sizes: Vec::new(),
            filters: 0,
            dropout: 0.5,
        }
    }

    pub fn meanpool(num_keywords: usize, embed_dim: usize, num_classes: usize, seq_len: usize) -> Self {
        Self {
            kind: ModelKind::MeanPool,
            num_keywords,
            embed_dim,
            hidden_dim: 0,
            num_classes,
            seq_len,
            kernel_sizes: Vec::new(),
            filters: 0,
            dropout: 0.5,
        }
    }

    /// Same architecture over a different dictionary size.
    pub fn with_num_keywords(&self, num_keywords: usize) -> Self {
        Self {
            num_keywords,
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidArgument(msg));
        if self.num_keywords < 1 {
            return bad("dictionary must hold at least one keyword".into());
        }
        if self.num_classes < 2 {
            return bad(format!("need at least 2 classes, got {}", self.num_classes));
        }
        if self.embed_dim < 1 || self.seq_len < 1 {
            return bad("embedding width and sequence length must be positive".into());
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad(format!("dropout rate {} outside [0, 1)", self.dropout));
        }
        match self.kind {
            ModelKind::TextCnn => {
                if self.kernel_sizes.is_empty() || self.filters < 1 || self.kernel_sizes.contains(&0) {
                    return bad("textcnn needs kernel sizes and filters".into());
                }
                let mut sorted = self.kernel_sizes.clone();
                sorted.sort_unstable();
                sorted.dedup();
                if sorted.len() != self.kernel_sizes.len() {
                    return bad("kernel sizes must be distinct".into());
                }
                let kmax = *sorted.last().unwrap();
                if self.seq_len < kmax {
                    return Err(Error::SequenceTooShort { t: self.seq_len, k: kmax });
                }
            }
            ModelKind::SimpleRnn => {
                if self.hidden_dim < 1 {
                    return bad("simplernn needs a hidden width".into());
                }
            }
            ModelKind::MeanPool => {}
        }
        Ok(())
    }

    /// Width of the vector fed to the output layer.
    pub fn repr_dim(&self) -> usize {
        match self.kind {
            ModelKind::TextCnn => self.kernel_sizes.len() * self.filters,
            ModelKind::SimpleRnn => self.hidden_dim,
            ModelKind::MeanPool => self.embed_dim,
        }
    }

    /// Parameter count. The embedding term is `D * d1` (D real keywords),
    /// so the bias-free count of a simplernn is
    /// `D*d1 + d2*d1 + d2*d2 + d2*K`.
    pub fn count_params(&self, include_bias: bool) -> u64 {
        let d = self.num_keywords as u64;
        let d1 = self.embed_dim as u64;
        let k = self.num_classes as u64;
        let embedding = d * d1;
        let (body, body_bias) = match self.kind {
            ModelKind::TextCnn => {
                let f = self.filters as u64;
                let w: u64 = self.kernel_sizes.iter().map(|&ks| ks as u64 * d1 * f).sum();
                (w, self.kernel_sizes.len() as u64 * f)
            }
            ModelKind::SimpleRnn => {
                let d2 = self.hidden_dim as u64;
                (d2 * d1 + d2 * d2, d2)
            }
            ModelKind::MeanPool => (0, 0),
        };
        let out = self.repr_dim() as u64 * k;
        let mut total = embedding + body + out;
        if include_bias {
            total += body_bias + k;
        }
        total
    }

    /// Parameter names and shapes in storage order.
    pub fn param_layout(&self) -> Vec<(String, ParamRole, Vec<usize>)> {
        let d1 = self.embed_dim;
        let mut out = vec![("embedding".to_owned(), ParamRole::Embedding, vec![self.num_keywords + 1, d1])];
        match self.kind {
            ModelKind::TextCnn => {
                for &k in &self.kernel_sizes {
                    out.push((format!("conv{k}.weight"), ParamRole::Weight, vec![k, d1, self.filters]));
                    out.push((format!("conv{k}.bias"), ParamRole::Bias, vec![self.filters]));
                }
            }
            ModelKind::SimpleRnn => {
                let d2 = self.hidden_dim;
                out.push(("rnn.wxh".to_owned(), ParamRole::Weight, vec![d1, d2]));
                out.push(("rnn.whh".to_owned(), ParamRole::Weight, vec![d2, d2]));
                out.push(("rnn.bias".to_owned(), ParamRole::Bias, vec![d2]));
            }
            ModelKind::MeanPool => {}
        }
        out.push(("dense.weight".to_owned(), ParamRole::Weight, vec![self.repr_dim(), self.num_classes]));
        out.push(("dense.bias".to_owned(), ParamRole::Bias, vec![self.num_classes]));
        out
    }
}

/// A classifier: configuration plus its named parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    config: ModelConfig,
    params: Vec<ParamTensor>,
}

/// Intermediate values of one forward pass, kept for the backward pass.
#[derive(Debug, Clone)]
pub struct ForwardTrace {
    ids: Vec<u32>,
    embedded: Tensor,
    body: BodyTrace,
    dropped: Vec<f32>,
    mask: Vec<f32>,
    pub probs: Vec<f32>,
}

#[derive(Debug, Clone)]
enum BodyTrace {
    Conv(Vec<nn::MaxPoolCache>),
    Rnn(nn::RnnCache),
    Mean { count: usize },
}

/// Gradient buffers for one model. Embedding gradients are kept per touched
/// row so per-worker buffers stay small.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    width: usize,
    embedding_rows: BTreeMap<u32, Vec<f32>>,
    dense: Vec<Tensor>,
}

impl RowGradSink for Gradients {
    fn row_mut(&mut self, id: u32) -> &mut [f32] {
        let width = self.width;
        self.embedding_rows.entry(id).or_insert_with(|| vec![0.0; width])
    }
}

impl Gradients {
    pub fn zeros(model: &Model) -> Self {
        Self {
            width: model.config.embed_dim,
            embedding_rows: BTreeMap::new(),
            dense: model.params[1..].iter().map(|p| Tensor::zeros(p.value.shape())).collect(),
        }
    }

    /// Adds `other` into `self`.
    pub fn accumulate(&mut self, other: &Gradients) {
        for (id, row) in &other.embedding_rows {
            let dst = self.row_mut(*id);
            for (d, s) in dst.iter_mut().zip(row) {
                *d += s;
            }
        }
        for (dst, src) in self.dense.iter_mut().zip(&other.dense) {
            for (d, s) in dst.data_mut().iter_mut().zip(src.data()) {
                *d += s;
            }
        }
    }

    /// Dense gradient for parameter `index` (in model storage order).
    pub fn to_dense(&self, model: &Model, index: usize) -> Tensor {
        if index == 0 {
            let mut t = Tensor::zeros(model.params[0].value.shape());
            for (id, row) in &self.embedding_rows {
                t.row_mut(*id as usize).copy_from_slice(row);
            }
            t
        } else {
            self.dense[index - 1].clone()
        }
    }
}

impl Model {
    /// Seeded initialization: embeddings uniform in (-0.05, 0.05) with the
    /// empty-space row at zero, weights uniform in +-1/sqrt(fan_in), biases
    /// zero.
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let params = config
            .param_layout()
            .into_iter()
            .map(|(name, role, shape)| {
                let mut value = Tensor::zeros(&shape);
                match role {
                    ParamRole::Embedding => {
                        let w = shape[1];
                        for v in value.data_mut()[w..].iter_mut() {
                            *v = rng.gen_range(-0.05..0.05);
                        }
                    }
                    ParamRole::Weight => {
                        let fan_in: usize = shape[..shape.len() - 1].iter().product();
                        let bound = 1.0 / (fan_in as f32).sqrt();
                        for v in value.data_mut() {
                            *v = rng.gen_range(-bound..bound);
                        }
                    }
                    ParamRole::Bias => {}
                }
                ParamTensor::new(name, role, value)
            })
            .collect();
        Ok(Self { config, params })
    }

    /// All parameters zero.
    pub fn zeros(config: ModelConfig) -> Result<Self> {
        config.validate()?;
        let params = config
            .param_layout()
            .into_iter()
            .map(|(name, role, shape)| ParamTensor::new(name, role, Tensor::zeros(&shape)))
            .collect();
        Ok(Self { config, params })
    }

    /// Assembles a model from explicit parameter values, checked against the
    /// layout implied by `config`.
    pub fn from_params(config: ModelConfig, values: Vec<(String, Tensor)>) -> Result<Self> {
        config.validate()?;
        let layout = config.param_layout();
        if layout.len() != values.len() {
            return Err(Error::Shape(format!("expected {} parameters, got {}", layout.len(), values.len())));
        }
        let mut params = Vec::with_capacity(layout.len());
        for ((name, role, shape), (got_name, value)) in layout.into_iter().zip(values) {
            if name != got_name || value.shape() != shape.as_slice() {
                return Err(Error::Shape(format!(
                    "parameter `{got_name}` {:?} does not match expected `{name}` {shape:?}",
                    value.shape()
                )));
            }
            params.push(ParamTensor::new(name, role, value));
        }
        let mut model = Self { config, params };
        model.params[0].value.row_mut(0).fill(0.0);
        Ok(model)
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn params(&self) -> &[ParamTensor] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [ParamTensor] {
        &mut self.params
    }

    pub fn param(&self, name: &str) -> Option<&ParamTensor> {
        self.params.iter().find(|p| p.name == name)
    }

    pub fn param_mut(&mut self, name: &str) -> Option<&mut ParamTensor> {
        self.params.iter_mut().find(|p| p.name == name)
    }

    pub(crate) fn set_dropout(&mut self, rate: f32) {
        self.config.dropout = rate;
    }

    fn check_doc(&self, doc: &EncodedDocument) -> Result<()> {
        if doc.ids.len() != self.config.seq_len {
            return Err(Error::Shape(format!(
                "document length {} does not match model sequence length {}",
                doc.ids.len(),
                self.config.seq_len
            )));
        }
        Ok(())
    }

    /// Forward pass keeping everything needed by [`Model::backward`].
    pub fn forward<R: Rng + ?Sized>(&self, doc: &EncodedDocument, mode: Mode, rng: &mut R) -> Result<ForwardTrace> {
        self.check_doc(doc)?;
        let table = &self.params[0].value;
        let embedded = nn::embedding_forward(&doc.ids, table)?;
        let (repr, body) = match self.config.kind {
            ModelKind::TextCnn => {
                let mut repr = Vec::with_capacity(self.config.repr_dim());
                let mut caches = Vec::with_capacity(self.config.kernel_sizes.len());
                for i in 0..self.config.kernel_sizes.len() {
                    let (out, cache) = nn::conv1d_maxpool_forward(
                        &embedded,
                        &self.params[1 + 2 * i].value,
                        &self.params[2 + 2 * i].value,
                    )?;
                    repr.extend_from_slice(out.data());
                    caches.push(cache);
                }
                (repr, BodyTrace::Conv(caches))
            }
            ModelKind::SimpleRnn => {
                let (h, cache) = nn::rnn_forward(&embedded, &self.params[1].value, &self.params[2].value, &self.params[3].value)?;
                (h.into_data(), BodyTrace::Rnn(cache))
            }
            ModelKind::MeanPool => {
                let width = self.config.embed_dim;
                let mut sum = vec![0f32; width];
                let mut count = 0;
                for (t, &id) in doc.ids.iter().enumerate() {
                    if id != PAD_ID {
                        count += 1;
                        for (s, &v) in sum.iter_mut().zip(embedded.row(t)) {
                            *s += v;
                        }
                    }
                }
                if count > 0 {
                    let inv = 1.0 / count as f32;
                    for s in &mut sum {
                        *s *= inv;
                    }
                }
                (sum, BodyTrace::Mean { count })
            }
        };
        let (dropped, mask) = nn::dropout(&repr, self.config.dropout, mode, rng)?;
        let n = self.params.len();
        let probs = nn::dense_softmax(&dropped, &self.params[n - 2].value, &self.params[n - 1].value)?;
        Ok(ForwardTrace {
            ids: doc.ids.clone(),
            embedded,
            body,
            dropped,
            mask,
            probs,
        })
    }

    /// Backpropagates `dlogits` (gradient w.r.t. the pre-softmax scores)
    /// through the trace, adding into `grads`.
    pub fn backward(&self, trace: &ForwardTrace, dlogits: &[f32], grads: &mut Gradients) {
        let n = self.params.len();
        let mut ddropped = vec![0f32; trace.dropped.len()];
        {
            let (dw, db) = grads.dense[n - 3..].split_at_mut(1);
            nn::dense_backward(&trace.dropped, &self.params[n - 2].value, dlogits, &mut ddropped, &mut dw[0], &mut db[0]);
        }
        let drepr: Vec<f32> = ddropped.iter().zip(&trace.mask).map(|(g, m)| g * m).collect();
        let mut demb = Tensor::zeros(trace.embedded.shape());
        match &trace.body {
            BodyTrace::Conv(caches) => {
                let f = self.config.filters;
                for (i, cache) in caches.iter().enumerate() {
                    let (dw_slot, rest) = grads.dense[2 * i..].split_at_mut(1);
                    nn::conv1d_maxpool_backward(
                        &trace.embedded,
                        &self.params[1 + 2 * i].value,
                        cache,
                        &drepr[i * f..(i + 1) * f],
                        &mut demb,
                        &mut dw_slot[0],
                        &mut rest[0],
                    );
                }
            }
            BodyTrace::Rnn(cache) => {
                let (dwxh, rest) = grads.dense.split_at_mut(1);
                let (dwhh, rest) = rest.split_at_mut(1);
                nn::rnn_backward(
                    &trace.embedded,
                    &self.params[1].value,
                    &self.params[2].value,
                    cache,
                    &drepr,
                    &mut demb,
                    &mut dwxh[0],
                    &mut dwhh[0],
                    &mut rest[0],
                );
            }
            BodyTrace::Mean { count } => {
                if *count > 0 {
                    let inv = 1.0 / *count as f32;
                    for (t, &id) in trace.ids.iter().enumerate() {
                        if id != PAD_ID {
                            for (d, &g) in demb.row_mut(t).iter_mut().zip(&drepr) {
                                *d = g * inv;
                            }
                        }
                    }
                }
            }
        }
        nn::embedding_backward(&trace.ids, &demb, grads);
    }

    /// Class probabilities in eval mode.
    pub fn predict_proba(&self, doc: &EncodedDocument) -> Result<Vec<f32>> {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        Ok(self.forward(doc, Mode::Eval, &mut rng)?.probs)
    }

    /// [`Model::predict_proba`] over many documents, in parallel.
    pub fn predict_batch(&self, docs: &[EncodedDocument]) -> Result<Vec<Vec<f32>>> {
        docs.par_iter().map(|d| self.predict_proba(d)).collect()
    }

    /// Copies reduced gradients into the parameters' `grad` buffers, scaled.
    pub fn load_gradients(&mut self, grads: &Gradients, scale: f32) {
        let emb = &mut self.params[0].grad;
        emb.fill(0.0);
        for (id, row) in &grads.embedding_rows {
            if *id == PAD_ID {
                continue;
            }
            for (d, s) in emb.row_mut(*id as usize).iter_mut().zip(row) {
                *d = s * scale;
            }
        }
        for (p, g) in self.params[1..].iter_mut().zip(&grads.dense) {
            for (d, s) in p.grad.data_mut().iter_mut().zip(g.data()) {
                *d = s * scale;
            }
        }
    }
}
