use super::{Dictionary, KeywordId, KeywordSet, PAD_ID};
use crate::error::{Error, Result};

/// Fixed-length id sequence for one labelled document.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct EncodedDocument {
    pub ids: Vec<KeywordId>,
    /// Number of positions holding a real keyword.
    pub true_length: usize,
    /// Class id, 1-based.
    pub label: u32,
}

impl EncodedDocument {
    /// Wraps an id sequence, computing the effective length.
    pub fn from_ids(ids: Vec<KeywordId>, label: u32) -> Self {
        let true_length = ids.iter().filter(|&&id| id != PAD_ID).count();
        Self {
            ids,
            true_length,
            label,
        }
    }

    pub fn seq_len(&self) -> usize {
        self.ids.len()
    }

    pub fn contains(&self, id: KeywordId) -> bool {
        self.ids.contains(&id)
    }
}

/// Maps the first `seq_len` tokens to ids. Unknown tokens become the
/// empty-space token in place; short documents are right-padded.
pub fn encode<S: AsRef<str>>(tokens: &[S], dict: &Dictionary, seq_len: usize, label: u32) -> EncodedDocument {
    let mut ids: Vec<KeywordId> = tokens
        .iter()
        .take(seq_len)
        .map(|t| dict.id(t.as_ref()).unwrap_or(PAD_ID))
        .collect();
    ids.resize(seq_len, PAD_ID);
    EncodedDocument::from_ids(ids, label)
}

/// Copy of `doc` with every occurrence of `keyword` replaced by the
/// empty-space token.
pub fn ablate(doc: &EncodedDocument, keyword: KeywordId) -> Result<EncodedDocument> {
    if keyword == PAD_ID {
        return Err(Error::InvalidArgument("cannot ablate the empty-space token".into()));
    }
    let mut out = doc.clone();
    let mut removed = 0;
    for id in out.ids.iter_mut().filter(|id| **id == keyword) {
        *id = PAD_ID;
        removed += 1;
    }
    out.true_length -= removed;
    Ok(out)
}

/// Drops ids outside `kept`, shifts the survivors left (order preserved) and
/// pads back to `seq_len`. Empty-space positions are always kept.
pub fn reencode_screened(doc: &EncodedDocument, kept: &KeywordSet, seq_len: usize) -> EncodedDocument {
    let mut ids: Vec<KeywordId> = doc.ids.iter().copied().filter(|&id| kept.contains(id)).collect();
    ids.truncate(seq_len);
    ids.resize(seq_len, PAD_ID);
    EncodedDocument::from_ids(ids, doc.label)
}
