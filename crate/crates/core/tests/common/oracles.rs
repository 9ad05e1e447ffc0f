//! Reference implementations shared by the integration tests.

use std::sync::Arc;

use dictscreen::corpus::{Corpus, Dictionary, EncodedDocument};
use dictscreen::models::{Model, ModelConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn dictionary(n: usize) -> Arc<Dictionary> {
    Arc::new(Dictionary::from_keywords((1..=n).map(|i| format!("k{i}"))).unwrap())
}

pub fn random_corpus(rng: &mut ChaCha8Rng, num_keywords: usize, n_docs: usize, seq_len: usize, classes: u32) -> Corpus {
    let docs = (0..n_docs)
        .map(|_| {
            let len = rng.gen_range(1..=seq_len);
            let mut ids: Vec<u32> = (0..len)
                .map(|_| if rng.gen_bool(0.1) { 0 } else { rng.gen_range(1..=num_keywords as u32) })
                .collect();
            ids.resize(seq_len, 0);
            EncodedDocument::from_ids(ids, rng.gen_range(1..=classes))
        })
        .collect();
    Corpus::new(dictionary(num_keywords), docs, seq_len).unwrap()
}

/// Overwrites the default initialization with larger weights so predictions
/// move noticeably under ablation.
pub fn scrambled(config: ModelConfig, seed: u64) -> Model {
    let mut model = Model::new(config, seed).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xABCD);
    for p in model.params_mut() {
        for v in p.value.data_mut() {
            *v = rng.gen_range(-1.0..1.0);
        }
    }
    model.params_mut()[0].value.row_mut(0).fill(0.0);
    model
}

/// Straight transcription of the definition: every keyword against every
/// document, ablation by replacing the keyword with the empty-space id.
pub fn dense_cpe(model: &Model, corpus: &Corpus) -> Vec<f64> {
    let docs = corpus.docs();
    let n = docs.len();
    (1..=corpus.dictionary().num_keywords() as u32)
        .map(|d| {
            let mut total = 0.0f64;
            for doc in docs {
                let blanked: Vec<u32> = doc.ids.iter().map(|&id| if id == d { 0 } else { id }).collect();
                let p = model.predict_proba(doc).unwrap();
                let q = model.predict_proba(&EncodedDocument::from_ids(blanked, doc.label)).unwrap();
                let mut dist = 0.0f64;
                for k in 0..p.len() {
                    dist += (p[k] as f64 - q[k] as f64).powi(2);
                }
                total += dist;
            }
            total / n as f64
        })
        .collect()
}

pub fn gamma_half_integer(x2: u32) -> f64 {
    // Gamma(x2 / 2) for positive integer x2, exact up to rounding.
    if x2.is_multiple_of(2) {
        (1..x2 / 2).map(f64::from).product()
    } else {
        let mut g = std::f64::consts::PI.sqrt();
        let mut a = 0.5;
        while a < x2 as f64 / 2.0 - 0.25 {
            g *= a;
            a += 1.0;
        }
        g
    }
}

pub fn t_density(x: f64, df: u32) -> f64 {
    let nu = df as f64;
    let c = gamma_half_integer(df + 1) / ((nu * std::f64::consts::PI).sqrt() * gamma_half_integer(df));
    c * (1.0 + x * x / nu).powf(-(nu + 1.0) / 2.0)
}

pub fn adaptive_simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    fn simpson(f: &dyn Fn(f64) -> f64, a: f64, fa: f64, b: f64, fb: f64) -> (f64, f64, f64) {
        let m = 0.5 * (a + b);
        let fm = f(m);
        (m, fm, (b - a) / 6.0 * (fa + 4.0 * fm + fb))
    }
    #[allow(clippy::too_many_arguments)]
    fn recurse(f: &dyn Fn(f64) -> f64, a: f64, fa: f64, b: f64, fb: f64, whole: f64, m: f64, fm: f64, tol: f64, depth: u32) -> f64 {
        let (lm, flm, left) = simpson(f, a, fa, m, fm);
        let (rm, frm, right) = simpson(f, m, fm, b, fb);
        let delta = left + right - whole;
        if depth == 0 || delta.abs() <= 15.0 * tol {
            return left + right + delta / 15.0;
        }
        recurse(f, a, fa, m, fm, left, lm, flm, tol / 2.0, depth - 1) + recurse(f, m, fm, b, fb, right, rm, frm, tol / 2.0, depth - 1)
    }
    let (fa, fb) = (f(a), f(b));
    let (m, fm, whole) = simpson(f, a, fa, b, fb);
    recurse(f, a, fa, b, fb, whole, m, fm, tol, 50)
}

/// `1 - 2 * integral_0^|t| f(x) dx` by quadrature of the density.
pub fn quadrature_p(t: f64, df: u32) -> f64 {
    1.0 - 2.0 * adaptive_simpson(&|x| t_density(x, df), 0.0, t.abs(), 1e-14)
}

