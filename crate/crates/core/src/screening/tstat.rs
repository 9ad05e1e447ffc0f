use rayon::prelude::*;
use statrs::function::beta::beta_reg;

use super::cpe::check_compatible;
use super::{ScoreTable, Scorer};
use crate::corpus::{ablate, Corpus, KeywordId};
use crate::error::{Error, Result};
use crate::models::Model;

/// Two-sided p-value `P(|T| >= |t|)` for Student's t with `df` degrees of
/// freedom, via the regularized incomplete beta function
/// `I_{df/(df+t^2)}(df/2, 1/2)`.
pub fn student_t_two_sided_p(t: f64, df: f64) -> Result<f64> {
    if !(df >= 1.0) {
        return Err(Error::InvalidArgument(format!("degrees of freedom {df} < 1")));
    }
    if !t.is_finite() {
        return Err(Error::InvalidArgument(format!("t statistic {t} is not finite")));
    }
    if t == 0.0 {
        return Ok(1.0);
    }
    let x = df / (df + t * t);
    Ok(beta_reg(df / 2.0, 0.5, x).clamp(0.0, 1.0))
}

/// Paired t-test p-value for one class given the per-document differences.
/// Fewer than two pairs, or zero spread with zero mean, give 1; zero spread
/// with a non-zero mean gives 0.
fn paired_p_value(diffs: &[f64]) -> Result<f64> {
    let n = diffs.len();
    if n < 2 {
        return Ok(1.0);
    }
    // identical differences have zero spread exactly; the floating-point
    // variance would leave rounding residue
    if diffs.iter().all(|&d| d == diffs[0]) {
        return Ok(if diffs[0] == 0.0 { 1.0 } else { 0.0 });
    }
    let mean = diffs.iter().sum::<f64>() / n as f64;
    let var = diffs.iter().map(|d| (d - mean) * (d - mean)).sum::<f64>() / (n - 1) as f64;
    let sd = var.sqrt();
    let t = mean / (sd / (n as f64).sqrt());
    student_t_two_sided_p(t, (n - 1) as f64)
}

/// Smallest per-class paired t-test p-value. `diffs[i][k]` is the shift of
/// class `k`'s probability for document `i`.
pub fn min_class_p_value(diffs: &[Vec<f64>], num_classes: usize) -> Result<f64> {
    let mut best = 1.0f64;
    let mut column = Vec::with_capacity(diffs.len());
    for k in 0..num_classes {
        column.clear();
        column.extend(diffs.iter().map(|row| row[k]));
        best = best.min(paired_p_value(&column)?);
    }
    Ok(best)
}

/// Per keyword, a paired t-test per class on `p_i - p_i^(d)` over the
/// documents that contain the keyword; the score is the smallest p-value
/// (lower is more important). Documents without the keyword have identical
/// pairs and are not included.
pub fn tstat_scores(model: &Model, corpus: &Corpus) -> Result<ScoreTable> {
    check_compatible(model, corpus)?;
    let docs = corpus.docs();
    let baseline = model.predict_batch(docs)?;
    let k = model.config().num_classes;
    let num_keywords = corpus.dictionary().num_keywords() as KeywordId;
    let scores = (1..=num_keywords)
        .into_par_iter()
        .map(|d| {
            let mut diffs = Vec::new();
            for &i in corpus.index().postings(d) {
                let i = i as usize;
                let shifted = model.predict_proba(&ablate(&docs[i], d)?)?;
                diffs.push(baseline[i].iter().zip(&shifted).map(|(&a, &b)| a as f64 - b as f64).collect::<Vec<_>>());
            }
            min_class_p_value(&diffs, k)
        })
        .collect::<Result<Vec<f64>>>()?;
    ScoreTable::new(Scorer::TStat, docs.len(), scores)
}
