//! Loss, optimizer and the mini-batch training loop with early stopping.

mod adadelta;

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

pub use adadelta::{adadelta_step, AdaDeltaConfig, OptimizerState};

use crate::corpus::EncodedDocument;
use crate::error::{Error, Result};
use crate::models::{Gradients, Model};
use crate::nn::Mode;

/// Documents per gradient work unit. Fixed so that the reduction order, and
/// therefore the result, does not depend on the number of threads.
const GRAD_CHUNK: usize = 8;

/// Probabilities below this are clamped before taking the log.
pub const PROB_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainSpec {
    pub batch_size: usize,
    pub rho: f32,
    pub epsilon: f32,
    pub weight_decay: f32,
    pub dropout_rate: f32,
    pub max_epochs: usize,
    pub patience: usize,
    pub val_fraction: f64,
    pub seed: u64,
}

impl Default for TrainSpec {
    fn default() -> Self {
        Self {
            batch_size: 128,
            rho: 0.95,
            epsilon: 1e-5,
            weight_decay: 5e-4,
            dropout_rate: 0.5,
            max_epochs: 200,
            patience: 10,
            val_fraction: 0.1,
            seed: 0,
        }
    }
}

impl TrainSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidArgument(m.to_owned()));
        if self.batch_size == 0 {
            return bad("batch_size must be positive");
        }
        if !(self.rho > 0.0 && self.rho < 1.0) {
            return bad("rho must lie in (0, 1)");
        }
        if !(self.epsilon > 0.0) {
            return bad("epsilon must be positive");
        }
        if !(self.weight_decay >= 0.0) {
            return bad("weight_decay must be non-negative");
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return bad("dropout rate must lie in [0, 1)");
        }
        if !(0.0..1.0).contains(&self.val_fraction) {
            return bad("val_fraction must lie in [0, 1)");
        }
        if self.patience == 0 {
            return bad("patience must be at least 1");
        }
        Ok(())
    }

    pub fn optimizer(&self) -> AdaDeltaConfig {
        AdaDeltaConfig {
            rho: self.rho,
            epsilon: self.epsilon,
            weight_decay: self.weight_decay,
        }
    }
}

/// Mixes several integers into one RNG seed (splitmix64 finalizer).
pub(crate) fn derive_seed(parts: &[u64]) -> u64 {
    let mut h: u64 = 0x9E37_79B9_7F4A_7C15;
    for &p in parts {
        h ^= p.wrapping_add(0x9E37_79B9_7F4A_7C15).wrapping_add(h << 6).wrapping_add(h >> 2);
        let mut z = h;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        h = z ^ (z >> 31);
    }
    h
}

/// `-ln p[y]` for a 1-based class id, with `p[y]` clamped at [`PROB_FLOOR`].
pub fn cross_entropy(probs: &[f32], label: u32) -> Result<f64> {
    let y = label as usize;
    if y == 0 || y > probs.len() {
        return Err(Error::InvalidArgument(format!("class {label} outside 1..={}", probs.len())));
    }
    Ok(-(probs[y - 1] as f64).max(PROB_FLOOR).ln())
}

/// Mean of per-document losses.
pub fn mean_of(losses: &[f64]) -> f64 {
    if losses.is_empty() {
        return 0.0;
    }
    losses.iter().sum::<f64>() / losses.len() as f64
}

/// Eval-mode mean cross-entropy over `docs`.
pub fn mean_loss(model: &Model, docs: &[EncodedDocument]) -> Result<f64> {
    let losses = docs
        .par_iter()
        .map(|d| cross_entropy(&model.predict_proba(d)?, d.label))
        .collect::<Result<Vec<_>>>()?;
    Ok(mean_of(&losses))
}

/// Index of the largest probability; ties go to the smallest index.
pub fn argmax(probs: &[f32]) -> usize {
    let mut best = 0;
    for (i, &p) in probs.iter().enumerate() {
        if p > probs[best] {
            best = i;
        }
    }
    best
}

/// Fraction of documents whose arg-max class equals the label.
pub fn evaluate_accuracy(model: &Model, docs: &[EncodedDocument]) -> Result<f64> {
    if docs.is_empty() {
        return Err(Error::InvalidArgument("cannot evaluate accuracy on zero documents".into()));
    }
    let correct = docs
        .par_iter()
        .map(|d| Ok(usize::from(argmax(&model.predict_proba(d)?) + 1 == d.label as usize)))
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .sum::<usize>();
    Ok(correct as f64 / docs.len() as f64)
}

/// Seeded per-class split into (training, validation) document positions,
/// both ascending. Each class contributes `floor(n_c * val_fraction)`
/// documents to validation.
pub fn stratified_split(labels: &[u32], val_fraction: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut classes: Vec<u32> = labels.to_vec();
    classes.sort_unstable();
    classes.dedup();
    let mut train = Vec::new();
    let mut val = Vec::new();
    for class in classes {
        let mut members: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == class).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(&[seed, 0x5711, class as u64]));
        members.shuffle(&mut rng);
        let n_val = (members.len() as f64 * val_fraction).floor() as usize;
        val.extend_from_slice(&members[..n_val]);
        train.extend_from_slice(&members[n_val..]);
    }
    train.sort_unstable();
    val.sort_unstable();
    (train, val)
}

/// Per-document loss gradient w.r.t. the logits: `p - onehot(y)`.
fn loss_and_dlogits(probs: &[f32], label: u32) -> Result<(f64, Vec<f32>)> {
    let loss = cross_entropy(probs, label)?;
    let mut d = probs.to_vec();
    d[label as usize - 1] -= 1.0;
    Ok((loss, d))
}

/// Loss and summed gradients for a set of documents. Dropout randomness for
/// each document is drawn from `seed_of(position)`.
pub fn batch_gradients(
    model: &Model,
    docs: &[&EncodedDocument],
    mode: Mode,
    seed_of: impl Fn(usize) -> u64 + Sync,
) -> Result<(f64, Gradients)> {
    let partials = docs
        .par_chunks(GRAD_CHUNK)
        .enumerate()
        .map(|(c, chunk)| {
            let mut grads = Gradients::zeros(model);
            let mut loss = 0.0;
            for (j, doc) in chunk.iter().enumerate() {
                let mut rng = ChaCha8Rng::seed_from_u64(seed_of(c * GRAD_CHUNK + j));
                let trace = model.forward(doc, mode, &mut rng)?;
                let (l, dlogits) = loss_and_dlogits(&trace.probs, doc.label)?;
                model.backward(&trace, &dlogits, &mut grads);
                loss += l;
            }
            Ok((loss, grads))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut iter = partials.into_iter();
    let (mut loss, mut grads) = iter.next().unwrap_or_else(|| (0.0, Gradients::zeros(model)));
    for (l, g) in iter {
        loss += l;
        grads.accumulate(&g);
    }
    Ok((loss, grads))
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_acc: f64,
    pub best: bool,
}

/// One record per completed epoch.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainLog {
    pub epochs: Vec<EpochRecord>,
}

impl TrainLog {
    /// `epoch<TAB>train_loss<TAB>val_acc<TAB>best_flag` per line.
    pub fn to_tsv(&self) -> String {
        let mut out = String::new();
        for r in &self.epochs {
            writeln!(out, "{}\t{}\t{}\t{}", r.epoch, r.train_loss, r.val_acc, u8::from(r.best)).unwrap();
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut epochs = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let f: Vec<&str> = line.split('\t').collect();
            let err = || Error::parse("training log", i + 1, format!("bad record {line:?}"));
            if f.len() != 4 {
                return Err(err());
            }
            epochs.push(EpochRecord {
                epoch: f[0].parse().map_err(|_| err())?,
                train_loss: f[1].parse().map_err(|_| err())?,
                val_acc: f[2].parse().map_err(|_| err())?,
                best: match f[3] {
                    "1" => true,
                    "0" => false,
                    _ => return Err(err()),
                },
            });
        }
        Ok(Self { epochs })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_tsv()).map_err(|e| Error::io(path, e))
    }

    pub fn best_epoch(&self) -> Option<&EpochRecord> {
        self.epochs.iter().rev().find(|r| r.best)
    }
}

/// Trains `model` on `docs` with AdaDelta, returning the parameters from
/// the epoch with the highest validation accuracy.
///
/// A stratified `val_fraction` of the documents is held out for model
/// selection. When that leaves the validation split empty, accuracy on the
/// training split is used instead. Training stops after `patience` epochs
/// without a strict improvement, or at `max_epochs`.
pub fn train(mut model: Model, docs: &[EncodedDocument], spec: &TrainSpec) -> Result<(Model, TrainLog)> {
    spec.validate()?;
    if docs.is_empty() {
        return Err(Error::InvalidArgument("training corpus is empty".into()));
    }
    let k = model.config().num_classes;
    if let Some(d) = docs.iter().find(|d| d.label == 0 || d.label as usize > k) {
        return Err(Error::InvalidArgument(format!("label {} outside 1..={k}", d.label)));
    }
    model.set_dropout(spec.dropout_rate);

    let labels: Vec<u32> = docs.iter().map(|d| d.label).collect();
    let (train_idx, val_idx) = stratified_split(&labels, spec.val_fraction, spec.seed);
    for class in 1..=k as u32 {
        if !train_idx.iter().any(|&i| labels[i] == class) {
            return Err(Error::MissingClass { class });
        }
    }
    let val_docs: Vec<EncodedDocument> = if val_idx.is_empty() {
        train_idx.iter().map(|&i| docs[i].clone()).collect()
    } else {
        val_idx.iter().map(|&i| docs[i].clone()).collect()
    };

    let opt = spec.optimizer();
    let mut state = OptimizerState::new(model.params());
    let mut log = TrainLog::default();
    let mut best_model = model.clone();
    let mut best_acc = f64::NEG_INFINITY;
    let mut stale = 0;
    let mut order = train_idx.clone();

    for epoch in 1..=spec.max_epochs {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(&[spec.seed, 0xE90C, epoch as u64]));
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        for batch in order.chunks(spec.batch_size) {
            let batch_docs: Vec<&EncodedDocument> = batch.iter().map(|&i| &docs[i]).collect();
            let (loss, grads) = batch_gradients(&model, &batch_docs, crate::nn::Mode::Train, |j| {
                derive_seed(&[spec.seed, 0xD80F, epoch as u64, batch[j] as u64])
            })?;
            loss_sum += loss;
            model.load_gradients(&grads, 1.0 / batch.len() as f32);
            adadelta_step(model.params_mut(), &mut state, &opt)?;
        }
        let val_acc = evaluate_accuracy(&model, &val_docs)?;
        let improved = val_acc > best_acc;
        if improved {
            best_acc = val_acc;
            best_model = model.clone();
            stale = 0;
        } else {
            stale += 1;
        }
        log.epochs.push(EpochRecord {
            epoch,
            train_loss: loss_sum / order.len() as f64,
            val_acc,
            best: improved,
        });
        if stale >= spec.patience {
            break;
        }
    }
    for p in best_model.params_mut() {
        p.zero_grad();
    }
    Ok((best_model, log))
}
