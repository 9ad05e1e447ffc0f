use super::{EncodedDocument, KeywordId, PAD_ID};

/// Keyword id -> strictly increasing list of documents containing it.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct InvertedIndex {
    postings: Vec<Vec<u32>>,
}

static EMPTY: [u32; 0] = [];

impl InvertedIndex {
    pub fn build(docs: &[EncodedDocument]) -> Self {
        let mut postings: Vec<Vec<u32>> = Vec::new();
        let mut seen: Vec<KeywordId> = Vec::new();
        for (i, doc) in docs.iter().enumerate() {
            seen.clear();
            seen.extend(doc.ids.iter().copied().filter(|&id| id != PAD_ID));
            seen.sort_unstable();
            seen.dedup();
            for &id in &seen {
                let id = id as usize;
                if id >= postings.len() {
                    postings.resize_with(id + 1, Vec::new);
                }
                postings[id].push(i as u32);
            }
        }
        Self { postings }
    }

    /// Documents containing `id`; empty when the keyword never occurs.
    pub fn postings(&self, id: KeywordId) -> &[u32] {
        self.postings.get(id as usize).map_or(&EMPTY[..], Vec::as_slice)
    }

    /// Document frequency of `id`.
    pub fn doc_freq(&self, id: KeywordId) -> usize {
        self.postings(id).len()
    }

    /// Ids that occur in at least one document, ascending.
    pub fn keywords(&self) -> impl Iterator<Item = KeywordId> + '_ {
        self.postings
            .iter()
            .enumerate()
            .filter(|(_, p)| !p.is_empty())
            .map(|(id, _)| id as KeywordId)
    }

    pub fn num_entries(&self) -> usize {
        self.postings.iter().filter(|p| !p.is_empty()).count()
    }

    pub fn is_empty(&self) -> bool {
        self.num_entries() == 0
    }

    /// Total number of (document, distinct keyword) incidences.
    pub fn num_incidences(&self) -> usize {
        self.postings.iter().map(Vec::len).sum()
    }
}
