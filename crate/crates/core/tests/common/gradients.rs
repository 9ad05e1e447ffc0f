//! Central finite-difference gradient checks.
//!
//! Error metric: max |analytic - numeric| divided by the infinity norm of
//! the gradient (per tensor for single layers, over all parameters for whole
//! models). Elementwise relative error is meaningless for entries that are
//! zero up to f32 rounding.

use dictscreen::corpus::EncodedDocument;
use dictscreen::models::{Model, ModelConfig, ModelKind};
use dictscreen::nn::{
    conv1d_maxpool_backward, conv1d_maxpool_forward, dense_backward, dense_forward, dense_softmax, dropout,
    embedding_backward, embedding_forward, rnn_backward, rnn_forward, Mode, Tensor,
};
use dictscreen::training::{argmax, batch_gradients, cross_entropy};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const STEP: f32 = 1e-3;
const TOL: f64 = 1e-3;
const MODEL_STEP: f32 = 1e-2;
/// Disagreement between the h and 2h quotients, relative to the gradient
/// scale, above which a coordinate is treated as sitting on a kink.
const KINK: f64 = 1e-2;

fn random(shape: &[usize], scale: f32, rng: &mut ChaCha8Rng) -> Tensor {
    let n = shape.iter().product();
    Tensor::from_vec(shape, (0..n).map(|_| rng.gen_range(-scale..scale)).collect()).unwrap()
}

/// Three-point central difference.
fn numeric(values: &mut [f32], mut loss: impl FnMut(&[f32]) -> f64) -> Vec<f64> {
    (0..values.len())
        .map(|i| {
            let orig = values[i];
            values[i] = orig + STEP;
            let up = loss(values);
            values[i] = orig - STEP;
            let down = loss(values);
            values[i] = orig;
            (up - down) / (2.0 * STEP as f64)
        })
        .collect()
}

/// Five-point central difference, with truncation error O(h^4) so a larger
/// step divides f32 rounding in the loss further down. Returns `None` where
/// the h and 2h quotients disagree, which only happens when a ReLU or max
/// switches inside the stencil.
fn numeric_5pt(values: &mut [f32], step: f32, scale: f64, mut loss: impl FnMut(&[f32]) -> f64) -> Vec<Option<f64>> {
    (0..values.len())
        .map(|i| {
            let orig = values[i];
            let mut at = |delta: f32| {
                values[i] = orig + delta;
                loss(values)
            };
            let (p1, m1, p2, m2) = (at(step), at(-step), at(2.0 * step), at(-2.0 * step));
            values[i] = orig;
            let h = step as f64;
            let (d1, d2) = ((p1 - m1) / (2.0 * h), (p2 - m2) / (4.0 * h));
            if (d1 - d2).abs() > KINK * scale {
                return None;
            }
            Some((8.0 * (p1 - m1) - (p2 - m2)) / (12.0 * h))
        })
        .collect()
}

fn rel_error(analytic: &[f32], numeric: &[f64]) -> f64 {
    assert_eq!(analytic.len(), numeric.len());
    let norm = analytic
        .iter()
        .map(|&a| (a as f64).abs())
        .chain(numeric.iter().map(|n| n.abs()))
        .fold(0.0, f64::max);
    if norm == 0.0 {
        return 0.0;
    }
    let diff = analytic
        .iter()
        .zip(numeric)
        .map(|(&a, n)| (a as f64 - n).abs())
        .fold(0.0, f64::max);
    diff / norm
}

fn check(failures: &mut Vec<String>, name: &str, analytic: &[f32], numeric: &[f64]) {
    let err = rel_error(analytic, numeric);
    if err > TOL {
        failures.push(format!("{name}: relative error {err:.2e}"));
    }
    if !numeric.iter().any(|n| n.abs() > 1e-3) {
        failures.push(format!("{name}: gradient vanished, check is vacuous"));
    }
}

fn dot(r: &[f32], out: &[f32]) -> f64 {
    r.iter().zip(out).map(|(&a, &b)| a as f64 * b as f64).sum()
}

pub fn embedding_layer(failures: &mut Vec<String>) {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let ids = [2u32, 0, 4, 2, 1];
    let mut table = random(&[5, 3], 1.0, &mut rng);
    let r = random(&[5, 3], 1.0, &mut rng);
    let mut grad = Tensor::zeros(&[5, 3]);
    embedding_backward(&ids, &r, &mut grad);
    let shape = table.shape().to_vec();
    let num = numeric(table.data_mut(), |v| {
        let t = Tensor::from_vec(&shape, v.to_vec()).unwrap();
        dot(r.data(), embedding_forward(&ids, &t).unwrap().data())
    });
    check(failures, "embedding", grad.data(), &num);
    if grad.row(0).iter().any(|&g| g != 0.0) {
        failures.push("embedding: empty-space row received gradient".into());
    }
}

pub fn conv_maxpool_layer(failures: &mut Vec<String>) {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for k in [1usize, 2, 3] {
        let (t, w, f) = (6, 3, 4);
        let mut x = random(&[t, w], 1.0, &mut rng);
        let mut weight = random(&[k, w, f], 1.0, &mut rng);
        let mut bias = random(&[f], 0.5, &mut rng);
        let r: Vec<f32> = (0..f).map(|_| rng.gen_range(-1.0..1.0)).collect();

        let (_, cache) = conv1d_maxpool_forward(&x, &weight, &bias).unwrap();
        let (mut dx, mut dw, mut db) = (Tensor::zeros(&[t, w]), Tensor::zeros(&[k, w, f]), Tensor::zeros(&[f]));
        conv1d_maxpool_backward(&x, &weight, &cache, &r, &mut dx, &mut dw, &mut db);

        let (xs, ws, bs) = (x.clone(), weight.clone(), bias.clone());
        let loss = |x: &Tensor, w: &Tensor, b: &Tensor| dot(&r, conv1d_maxpool_forward(x, w, b).unwrap().0.data());
        let num_x = numeric(x.data_mut(), |v| loss(&Tensor::from_vec(&[t, w], v.to_vec()).unwrap(), &ws, &bs));
        let num_w = numeric(weight.data_mut(), |v| loss(&xs, &Tensor::from_vec(&[k, w, f], v.to_vec()).unwrap(), &bs));
        let num_b = numeric(bias.data_mut(), |v| loss(&xs, &ws, &Tensor::from_vec(&[f], v.to_vec()).unwrap()));
        check(failures, &format!("conv{k} input"), dx.data(), &num_x);
        check(failures, &format!("conv{k} weight"), dw.data(), &num_w);
        check(failures, &format!("conv{k} bias"), db.data(), &num_b);
    }
}

pub fn rnn_layer(failures: &mut Vec<String>) {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let (t, d_in, d_h) = (5, 3, 4);
    let mut x = random(&[t, d_in], 1.0, &mut rng);
    let mut wxh = random(&[d_in, d_h], 0.6, &mut rng);
    let mut whh = random(&[d_h, d_h], 0.6, &mut rng);
    let mut bias = random(&[d_h], 0.3, &mut rng);
    let r: Vec<f32> = (0..d_h).map(|_| rng.gen_range(-1.0..1.0)).collect();

    let (_, cache) = rnn_forward(&x, &wxh, &whh, &bias).unwrap();
    let mut dx = Tensor::zeros(&[t, d_in]);
    let (mut dwxh, mut dwhh, mut db) = (Tensor::zeros(&[d_in, d_h]), Tensor::zeros(&[d_h, d_h]), Tensor::zeros(&[d_h]));
    rnn_backward(&x, &wxh, &whh, &cache, &r, &mut dx, &mut dwxh, &mut dwhh, &mut db);

    let (xs, as_, hs, bs) = (x.clone(), wxh.clone(), whh.clone(), bias.clone());
    let loss = |x: &Tensor, a: &Tensor, h: &Tensor, b: &Tensor| dot(&r, rnn_forward(x, a, h, b).unwrap().0.data());
    let t_of = |shape: &[usize], v: &[f32]| Tensor::from_vec(shape, v.to_vec()).unwrap();
    let num_x = numeric(x.data_mut(), |v| loss(&t_of(&[t, d_in], v), &as_, &hs, &bs));
    let num_a = numeric(wxh.data_mut(), |v| loss(&xs, &t_of(&[d_in, d_h], v), &hs, &bs));
    let num_h = numeric(whh.data_mut(), |v| loss(&xs, &as_, &t_of(&[d_h, d_h], v), &bs));
    let num_b = numeric(bias.data_mut(), |v| loss(&xs, &as_, &hs, &t_of(&[d_h], v)));
    check(failures, "rnn input", dx.data(), &num_x);
    check(failures, "rnn wxh", dwxh.data(), &num_a);
    check(failures, "rnn whh", dwhh.data(), &num_h);
    check(failures, "rnn bias", db.data(), &num_b);
}

pub fn dense_layer(failures: &mut Vec<String>) {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let (n, k) = (5, 3);
    let mut h: Vec<f32> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let mut w = random(&[n, k], 1.0, &mut rng);
    let mut b = random(&[k], 1.0, &mut rng);
    let r: Vec<f32> = (0..k).map(|_| rng.gen_range(-1.0..1.0)).collect();

    let (mut dh, mut dw, mut db) = (vec![0.0; n], Tensor::zeros(&[n, k]), Tensor::zeros(&[k]));
    dense_backward(&h, &w, &r, &mut dh, &mut dw, &mut db);
    let (hs, ws, bs) = (h.clone(), w.clone(), b.clone());
    let num_h = numeric(&mut h, |v| dot(&r, &dense_forward(v, &ws, &bs).unwrap()));
    let num_w = numeric(w.data_mut(), |v| {
        dot(&r, &dense_forward(&hs, &Tensor::from_vec(&[n, k], v.to_vec()).unwrap(), &bs).unwrap())
    });
    let num_b = numeric(b.data_mut(), |v| {
        dot(&r, &dense_forward(&hs, &ws, &Tensor::from_vec(&[k], v.to_vec()).unwrap()).unwrap())
    });
    check(failures, "dense input", &dh, &num_h);
    check(failures, "dense weight", dw.data(), &num_w);
    check(failures, "dense bias", db.data(), &num_b);
}

pub fn softmax_cross_entropy(failures: &mut Vec<String>) {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let (n, k) = (4, 3);
    let h: Vec<f32> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let mut w = random(&[n, k], 1.0, &mut rng);
    let b = random(&[k], 1.0, &mut rng);
    for label in 1..=k as u32 {
        let p = dense_softmax(&h, &w, &b).unwrap();
        let dlogits: Vec<f32> = p
            .iter()
            .enumerate()
            .map(|(i, &pi)| pi - if i + 1 == label as usize { 1.0 } else { 0.0 })
            .collect();
        let (mut dh, mut dw, mut db) = (vec![0.0; n], Tensor::zeros(&[n, k]), Tensor::zeros(&[k]));
        dense_backward(&h, &w, &dlogits, &mut dh, &mut dw, &mut db);
        let num = numeric(w.data_mut(), |v| {
            let t = Tensor::from_vec(&[n, k], v.to_vec()).unwrap();
            cross_entropy(&dense_softmax(&h, &t, &b).unwrap(), label).unwrap()
        });
        check(failures, "softmax cross-entropy", dw.data(), &num);
    }
}

pub fn dropout_layer(failures: &mut Vec<String>) {
    let mut x: Vec<f32> = (0..20).map(|i| i as f32 * 0.1 - 1.0).collect();
    let r: Vec<f32> = (0..20).map(|i| ((i * 7) % 5) as f32 - 2.0).collect();
    let run = |v: &[f32]| {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        dropout(v, 0.5, Mode::Train, &mut rng).unwrap()
    };
    let (_, mask) = run(&x);
    let analytic: Vec<f32> = r.iter().zip(&mask).map(|(a, m)| a * m).collect();
    let num = numeric(&mut x, |v| dot(&r, &run(v).0));
    check(failures, "dropout", &analytic, &num);
}

fn tiny_configs() -> Vec<ModelConfig> {
    let (d, t, k) = (5, 4, 3);
    let mut out = vec![
        ModelConfig::textcnn(d, 3, vec![2, 3], 2, k, t),
        ModelConfig::simplernn(d, 3, 3, k, t),
        ModelConfig::meanpool(d, 3, k, t),
    ];
    for c in &mut out {
        c.dropout = 0.5;
    }
    out
}

/// Replaces the small default initialization with O(1) weights so the loss
/// varies well above f32 rounding under a 1e-3 perturbation.
fn scaled_model(config: ModelConfig, seed: u64) -> Model {
    let mut model = Model::new(config, seed).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for p in model.params_mut() {
        for v in p.value.data_mut() {
            *v = rng.gen_range(-0.8..0.8);
        }
    }
    model.params_mut()[0].value.row_mut(0).fill(0.0);
    model
}

/// Whole-model check; returns one line per failing coordinate group.
pub fn model_check(mode: Mode) -> Vec<String> {
    let docs = [
        EncodedDocument::from_ids(vec![1, 3, 3, 5], 2),
        EncodedDocument::from_ids(vec![4, 2, 0, 0], 3),
        EncodedDocument::from_ids(vec![5, 0, 0, 0], 1),
    ];
    let mut failures = Vec::new();
    let (mut kinks_seen, mut coords_seen) = (0usize, 0usize);
    for config in tiny_configs() {
        let kind = config.kind;
        for seed in 0..8u64 {
            for (j, doc) in docs.iter().enumerate() {
                let mut model = scaled_model(config.clone(), 100 * seed + j as u64);
                // Label each document with the model's own prediction so
                // p >= 1/K and f32 rounding in -ln p stays small.
                let mut doc = doc.clone();
                doc.label = argmax(&model.predict_proba(&doc).unwrap()) as u32 + 1;
                let doc = &doc;
                let drop_seed = 77 + seed;
                let (_, grads) = batch_gradients(&model, &[doc], mode, |_| drop_seed).unwrap();
                let analytic: Vec<Tensor> = (0..model.params().len()).map(|i| grads.to_dense(&model, i)).collect();
                let scale = analytic
                    .iter()
                    .flat_map(|t| t.data())
                    .fold(0f64, |m, &g| m.max((g as f64).abs()));
                if scale <= 1e-3 {
                    failures.push(format!("{kind}: vanishing gradient"));
                }

                let mut kinks = 0;
                for (index, a) in analytic.iter().enumerate() {
                    let name = model.params()[index].name.clone();
                    let mut values = model.params()[index].value.data().to_vec();
                    let num = numeric_5pt(&mut values, MODEL_STEP, scale, |v| {
                        model.params_mut()[index].value.data_mut().copy_from_slice(v);
                        let mut rng = ChaCha8Rng::seed_from_u64(drop_seed);
                        let trace = model.forward(doc, mode, &mut rng).unwrap();
                        cross_entropy(&trace.probs, doc.label).unwrap()
                    });
                    model.params_mut()[index].value.data_mut().copy_from_slice(&values);
                    for (&g, n) in a.data().iter().zip(&num) {
                        match n {
                            None => kinks += 1,
                            Some(n) => {
                                let err = (g as f64 - n).abs() / scale;
                                if err > TOL {
                                    failures.push(format!("{kind} seed {seed} doc {j} {name}: {err:.2e}"));
                                }
                            }
                        }
                    }
                }
                if kind != ModelKind::TextCnn && kinks > 0 {
                    failures.push(format!("{kind} is smooth but {kinks} kinks were flagged"));
                }
                kinks_seen += kinks;
                coords_seen += analytic.iter().map(Tensor::len).sum::<usize>();
            }
        }
    }
    if kinks_seen * 50 > coords_seen {
        failures.push(format!("{kinks_seen} of {coords_seen} coordinates on kinks"));
    }
    failures
}

/// Every single-layer check.
pub fn layer_checks() -> Vec<String> {
    let mut failures = Vec::new();
    embedding_layer(&mut failures);
    conv_maxpool_layer(&mut failures);
    rnn_layer(&mut failures);
    dense_layer(&mut failures);
    softmax_cross_entropy(&mut failures);
    dropout_layer(&mut failures);
    failures
}
