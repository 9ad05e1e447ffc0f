use rayon::prelude::*;

use super::{ScoreTable, Scorer};
use crate::corpus::{ablate, Corpus, KeywordId};
use crate::error::{Error, Result};
use crate::models::Model;

/// `sum_k (p_k - q_k)^2`, accumulated in f64 in class order.
pub fn squared_distance(p: &[f32], q: &[f32]) -> f64 {
    p.iter()
        .zip(q)
        .map(|(&a, &b)| {
            let d = a as f64 - b as f64;
            d * d
        })
        .sum()
}

pub(crate) fn check_compatible(model: &Model, corpus: &Corpus) -> Result<()> {
    let cfg = model.config();
    if cfg.num_keywords != corpus.dictionary().num_keywords() {
        return Err(Error::DictionaryMismatch {
            expected: cfg.num_keywords,
            actual: corpus.dictionary().num_keywords(),
        });
    }
    if cfg.seq_len != corpus.seq_len() {
        return Err(Error::Shape(format!(
            "model sequence length {} differs from corpus length {}",
            cfg.seq_len,
            corpus.seq_len()
        )));
    }
    Ok(())
}

/// Ablation importance for every keyword:
/// `score(d) = (1/N) * sum_i || f(X_i) - f(X_i with d blanked) ||^2`.
///
/// Documents without `d` are unchanged by the ablation and contribute
/// exactly zero, so only the posting list of `d` is visited. Baseline
/// probabilities are computed once.
pub fn cpe_scores(model: &Model, corpus: &Corpus) -> Result<ScoreTable> {
    check_compatible(model, corpus)?;
    let docs = corpus.docs();
    let baseline = model.predict_batch(docs)?;
    let n = docs.len();
    let num_keywords = corpus.dictionary().num_keywords() as KeywordId;
    let scores = (1..=num_keywords)
        .into_par_iter()
        .map(|d| {
            let mut total = 0.0f64;
            for &i in corpus.index().postings(d) {
                let i = i as usize;
                let shifted = model.predict_proba(&ablate(&docs[i], d)?)?;
                total += squared_distance(&baseline[i], &shifted);
            }
            Ok(if n == 0 { 0.0 } else { total / n as f64 })
        })
        .collect::<Result<Vec<f64>>>()?;
    ScoreTable::new(Scorer::Cpe, n, scores)
}
