//! Labelled text ingestion, dictionary construction, fixed-length encoding,
//! keyword ablation and post-screening re-encoding.

mod dictionary;
mod document;
mod index;
mod ingest;
mod tokenize;

use std::collections::BTreeSet;
use std::sync::Arc;

pub use dictionary::Dictionary;
pub use document::{ablate, encode, reencode_screened, EncodedDocument};
pub use index::InvertedIndex;
pub use ingest::{read_encoded, read_labeled_csv, write_encoded, write_labeled_csv, RawDocument};
pub use tokenize::{tokenize, Tokenizer};

use crate::error::{Error, Result};

pub type KeywordId = u32;

/// Id of the empty-space token.
pub const PAD_ID: KeywordId = 0;
/// Surface form of the empty-space token in dictionary files.
pub const PAD_TOKEN: &str = "<pad>";

/// A set of keyword ids that always contains the empty-space token.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct KeywordSet(BTreeSet<KeywordId>);

impl KeywordSet {
    pub fn pad_only() -> Self {
        Self(BTreeSet::from([PAD_ID]))
    }

    pub fn from_ids(ids: impl IntoIterator<Item = KeywordId>) -> Self {
        let mut set: BTreeSet<_> = ids.into_iter().collect();
        set.insert(PAD_ID);
        Self(set)
    }

    pub fn contains(&self, id: KeywordId) -> bool {
        self.0.contains(&id)
    }

    /// Ids in ascending order, empty-space token first.
    pub fn iter(&self) -> impl Iterator<Item = KeywordId> + '_ {
        self.0.iter().copied()
    }

    /// Size including the empty-space token.
    pub fn len(&self) -> usize {
        self.0.len()
    }

    /// Number of real keywords in the set.
    pub fn num_keywords(&self) -> usize {
        self.0.len() - 1
    }

    pub fn is_empty(&self) -> bool {
        self.num_keywords() == 0
    }
}

/// Encoded documents over one dictionary, with their inverted index.
#[derive(Debug, Clone)]
pub struct Corpus {
    dictionary: Arc<Dictionary>,
    docs: Vec<EncodedDocument>,
    index: InvertedIndex,
    seq_len: usize,
}

impl Corpus {
    pub fn new(dictionary: Arc<Dictionary>, docs: Vec<EncodedDocument>, seq_len: usize) -> Result<Self> {
        if seq_len == 0 {
            return Err(Error::InvalidArgument("sequence length must be at least 1".into()));
        }
        let rows = dictionary.len();
        for doc in &docs {
            if doc.ids.len() != seq_len {
                return Err(Error::Shape(format!(
                    "document has {} positions, corpus length is {seq_len}",
                    doc.ids.len()
                )));
            }
            if let Some(&id) = doc.ids.iter().find(|&&id| id as usize >= rows) {
                return Err(Error::IdOutOfRange { id, rows });
            }
        }
        let index = InvertedIndex::build(&docs);
        Ok(Self {
            dictionary,
            docs,
            index,
            seq_len,
        })
    }

    /// Tokenized documents encoded against `dictionary`.
    pub fn encode_raw(dictionary: Arc<Dictionary>, raw: &[RawDocument], seq_len: usize) -> Result<Self> {
        let docs = raw
            .iter()
            .map(|r| encode(&r.tokens, &dictionary, seq_len, r.label))
            .collect();
        Self::new(dictionary, docs, seq_len)
    }

    pub fn dictionary(&self) -> &Arc<Dictionary> {
        &self.dictionary
    }

    pub fn docs(&self) -> &[EncodedDocument] {
        &self.docs
    }

    pub fn index(&self) -> &InvertedIndex {
        &self.index
    }

    pub fn seq_len(&self) -> usize {
        self.seq_len
    }

    pub fn len(&self) -> usize {
        self.docs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.docs.is_empty()
    }

    /// Sub-corpus over the given document positions, in that order.
    pub fn subset(&self, positions: &[usize]) -> Result<Self> {
        let docs = positions.iter().map(|&i| self.docs[i].clone()).collect();
        Self::new(Arc::clone(&self.dictionary), docs, self.seq_len)
    }

    /// Re-encodes every document over the screened dictionary: dropped
    /// keywords are removed, survivors are compacted and renumbered.
    pub fn screened(&self, kept: &KeywordSet) -> Result<Corpus> {
        let (dict, remap) = self.dictionary.screened(kept);
        let docs = self
            .docs
            .iter()
            .map(|doc| {
                let mut d = reencode_screened(doc, kept, self.seq_len);
                for id in &mut d.ids {
                    *id = remap[*id as usize].expect("kept id has a new id");
                }
                d
            })
            .collect();
        Corpus::new(Arc::new(dict), docs, self.seq_len)
    }

    /// Mean number of non-pad tokens per document.
    pub fn mean_effective_length(&self) -> f64 {
        mean_effective_length(&self.docs)
    }
}

pub fn mean_effective_length(docs: &[EncodedDocument]) -> f64 {
    if docs.is_empty() {
        return 0.0;
    }
    docs.iter().map(|d| d.true_length as f64).sum::<f64>() / docs.len() as f64
}
