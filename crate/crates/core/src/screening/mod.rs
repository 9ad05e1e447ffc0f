//! Keyword importance scoring and dictionary selection.
//!
//! The main scorer ablates each keyword from every document containing it
//! and measures how far the benchmark model's class-probability vector moves
//! (mean squared L2 distance over the scoring documents). TF-IDF and a paired
//! t-test on the same probability shifts are provided for comparison.

mod cpe;
mod tfidf;
mod tstat;

use std::fmt;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::str::FromStr;

pub use cpe::{cpe_scores, squared_distance};
pub use tfidf::tfidf_scores;
pub use tstat::{min_class_p_value, student_t_two_sided_p, tstat_scores};

use crate::corpus::{Corpus, Dictionary, KeywordId, KeywordSet};
use crate::error::{Error, Result};
use crate::models::Model;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Scorer {
    Cpe,
    TfIdf,
    TStat,
}

impl Scorer {
    pub fn as_str(self) -> &'static str {
        match self {
            Scorer::Cpe => "cpe",
            Scorer::TfIdf => "tfidf",
            Scorer::TStat => "tstat",
        }
    }

    pub fn direction(self) -> Direction {
        match self {
            Scorer::Cpe | Scorer::TfIdf => Direction::HigherIsImportant,
            Scorer::TStat => Direction::LowerIsImportant,
        }
    }

    /// Runs this scorer. TF-IDF ignores the model.
    pub fn score(self, model: &Model, corpus: &Corpus) -> Result<ScoreTable> {
        match self {
            Scorer::Cpe => cpe_scores(model, corpus),
            Scorer::TfIdf => tfidf_scores(corpus),
            Scorer::TStat => tstat_scores(model, corpus),
        }
    }
}

impl fmt::Display for Scorer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Scorer {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cpe" => Ok(Scorer::Cpe),
            "tfidf" => Ok(Scorer::TfIdf),
            "tstat" => Ok(Scorer::TStat),
            other => Err(Error::InvalidArgument(format!("unknown scorer `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    HigherIsImportant,
    LowerIsImportant,
}

impl Direction {
    pub fn as_str(self) -> &'static str {
        match self {
            Direction::HigherIsImportant => "higher_is_important",
            Direction::LowerIsImportant => "lower_is_important",
        }
    }
}

/// One score per real keyword id (1..=D).
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreTable {
    scorer: Scorer,
    n_docs: usize,
    scores: Vec<f64>,
}

impl ScoreTable {
    /// `scores[i]` belongs to keyword id `i + 1`.
    pub fn new(scorer: Scorer, n_docs: usize, scores: Vec<f64>) -> Result<Self> {
        for (i, &s) in scores.iter().enumerate() {
            let ok = match scorer {
                Scorer::Cpe | Scorer::TfIdf => s.is_finite() && s >= 0.0,
                Scorer::TStat => (0.0..=1.0).contains(&s),
            };
            if !ok {
                return Err(Error::InvalidArgument(format!("{scorer} score {s} for keyword {} out of range", i + 1)));
            }
        }
        Ok(Self { scorer, n_docs, scores })
    }

    pub fn scorer(&self) -> Scorer {
        self.scorer
    }

    pub fn direction(&self) -> Direction {
        self.scorer.direction()
    }

    /// Number of documents the scores were computed over.
    pub fn n_docs(&self) -> usize {
        self.n_docs
    }

    /// Number of scored keywords (D).
    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }

    pub fn get(&self, id: KeywordId) -> Option<f64> {
        (id as usize).checked_sub(1).and_then(|i| self.scores.get(i)).copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = (KeywordId, f64)> + '_ {
        self.scores.iter().enumerate().map(|(i, &s)| (i as KeywordId + 1, s))
    }

    /// Keyword ids from most to least important; equal scores keep the
    /// smaller id first.
    pub fn ranked(&self) -> Vec<KeywordId> {
        let mut ids: Vec<KeywordId> = (1..=self.scores.len() as KeywordId).collect();
        let dir = self.direction();
        ids.sort_by(|&a, &b| {
            let (sa, sb) = (self.scores[a as usize - 1], self.scores[b as usize - 1]);
            let ord = match dir {
                Direction::HigherIsImportant => sb.total_cmp(&sa),
                Direction::LowerIsImportant => sa.total_cmp(&sb),
            };
            ord.then(a.cmp(&b))
        });
        ids
    }

    /// Tab-separated `id keyword score`, most important first, under a
    /// `#scorer=<name> direction=<dir> n_docs=<N>` header.
    pub fn to_tsv(&self, dict: &Dictionary) -> Result<String> {
        if dict.num_keywords() != self.len() {
            return Err(Error::DictionaryMismatch {
                expected: self.len(),
                actual: dict.num_keywords(),
            });
        }
        let mut out = String::new();
        writeln!(out, "#scorer={} direction={} n_docs={}", self.scorer, self.direction().as_str(), self.n_docs).unwrap();
        for id in self.ranked() {
            let kw = dict.keyword(id).expect("id within dictionary");
            writeln!(out, "{id}\t{kw}\t{:e}", self.scores[id as usize - 1]).unwrap();
        }
        Ok(out)
    }

    pub fn write(&self, path: &Path, dict: &Dictionary) -> Result<()> {
        fs::write(path, self.to_tsv(dict)?).map_err(|e| Error::io(path, e))
    }

    /// Reads a score file, checking it covers every keyword of `dict` once.
    pub fn read(path: &Path, dict: &Dictionary) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, dict).map_err(|(line, msg)| Error::parse(path, line, msg))
    }

    fn parse(text: &str, dict: &Dictionary) -> std::result::Result<Self, (usize, String)> {
        let mut lines = text.lines();
        let header = lines.next().ok_or((1, "empty score file".to_string()))?;
        let mut scorer = None;
        let mut n_docs = None;
        for field in header.trim_start_matches('#').split_whitespace() {
            match field.split_once('=') {
                Some(("scorer", v)) => scorer = v.parse::<Scorer>().ok(),
                Some(("n_docs", v)) => n_docs = v.parse::<usize>().ok(),
                _ => {}
            }
        }
        let (scorer, n_docs) = scorer.zip(n_docs).ok_or((1, "bad header".to_string()))?;
        let mut scores = vec![None; dict.num_keywords()];
        for (i, line) in lines.enumerate() {
            let lineno = i + 2;
            let f: Vec<&str> = line.split('\t').collect();
            if f.len() != 3 {
                return Err((lineno, "expected id<TAB>keyword<TAB>score".into()));
            }
            let id: usize = f[0].parse().map_err(|_| (lineno, "bad id".to_string()))?;
            if id == 0 || id > scores.len() || dict.keyword(id as KeywordId) != Some(f[1]) {
                return Err((lineno, format!("keyword {:?} does not match dictionary id {id}", f[1])));
            }
            if scores[id - 1].is_some() {
                return Err((lineno, format!("duplicate id {id}")));
            }
            scores[id - 1] = Some(f[2].parse::<f64>().map_err(|_| (lineno, "bad score".to_string()))?);
        }
        let scores = scores
            .into_iter()
            .enumerate()
            .map(|(i, s)| s.ok_or((0, format!("keyword id {} missing", i + 1))))
            .collect::<std::result::Result<Vec<_>, _>>()?;
        ScoreTable::new(scorer, n_docs, scores).map_err(|e| (0, e.to_string()))
    }
}

/// The `k` most important keywords plus the empty-space token.
pub fn select_top_k(table: &ScoreTable, k: usize) -> Result<KeywordSet> {
    if k > table.len() {
        return Err(Error::InvalidArgument(format!("cannot keep {k} of {} keywords", table.len())));
    }
    Ok(KeywordSet::from_ids(table.ranked().into_iter().take(k)))
}

/// Keywords whose score reaches `threshold` (>= when higher is important,
/// <= otherwise), plus the empty-space token.
pub fn select_by_threshold(table: &ScoreTable, threshold: f64) -> Result<KeywordSet> {
    if threshold.is_nan() {
        return Err(Error::InvalidArgument("threshold is NaN".into()));
    }
    let dir = table.direction();
    Ok(KeywordSet::from_ids(table.iter().filter_map(|(id, s)| {
        let keep = match dir {
            Direction::HigherIsImportant => s >= threshold,
            Direction::LowerIsImportant => s <= threshold,
        };
        keep.then_some(id)
    })))
}
