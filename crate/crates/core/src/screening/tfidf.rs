use super::{ScoreTable, Scorer};
use crate::corpus::{Corpus, PAD_ID};
use crate::error::{Error, Result};

/// `TF(d) * ln(N / DF(d))` with TF the raw occurrence count over the corpus.
/// Keywords that never occur score 0.
pub fn tfidf_scores(corpus: &Corpus) -> Result<ScoreTable> {
    if corpus.is_empty() {
        return Err(Error::InvalidArgument("tf-idf needs at least one document".into()));
    }
    let d = corpus.dictionary().num_keywords();
    let mut tf = vec![0u64; d + 1];
    for doc in corpus.docs() {
        for &id in doc.ids.iter().filter(|&&id| id != PAD_ID) {
            tf[id as usize] += 1;
        }
    }
    let n = corpus.len() as f64;
    let scores = (1..=d)
        .map(|id| {
            let df = corpus.index().doc_freq(id as u32);
            if df == 0 {
                0.0
            } else {
                tf[id] as f64 * (n / df as f64).ln()
            }
        })
        .collect();
    ScoreTable::new(Scorer::TfIdf, corpus.len(), scores)
}
