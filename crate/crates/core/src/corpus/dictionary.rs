use std::collections::HashMap;
use std::fs;
use std::io::Write;
use std::path::Path;

use super::{KeywordId, KeywordSet, PAD_ID, PAD_TOKEN};
use crate::error::{Error, Result};

/// Bidirectional keyword/id map. Id 0 is the reserved empty-space token.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Dictionary {
    entries: Vec<String>,
    index: HashMap<String, KeywordId>,
}

impl Default for Dictionary {
    fn default() -> Self {
        Self::from_keywords(Vec::<String>::new()).expect("empty dictionary is valid")
    }
}

impl Dictionary {
    /// Builds a dictionary from keywords in id order (ids start at 1).
    pub fn from_keywords<S: Into<String>>(keywords: impl IntoIterator<Item = S>) -> Result<Self> {
        let mut entries = vec![PAD_TOKEN.to_owned()];
        let mut index = HashMap::new();
        for kw in keywords {
            let kw: String = kw.into();
            if kw.is_empty() || kw == PAD_TOKEN || kw.contains(['\n', '\r']) {
                return Err(Error::InvalidArgument(format!("invalid keyword {kw:?}")));
            }
            let id = entries.len() as KeywordId;
            if index.insert(kw.clone(), id).is_some() {
                return Err(Error::InvalidArgument(format!("duplicate keyword {kw:?}")));
            }
            entries.push(kw);
        }
        Ok(Self { entries, index })
    }

    /// Counts token frequencies and keeps every token seen at least
    /// `min_count` times, most frequent first. Equal counts keep first-seen
    /// order. `max_size` caps the total number of entries, the empty-space
    /// token included.
    pub fn build<I, T>(streams: I, min_count: usize, max_size: Option<usize>) -> Result<Self>
    where
        I: IntoIterator,
        I::Item: IntoIterator<Item = T>,
        T: AsRef<str>,
    {
        if min_count == 0 {
            return Err(Error::InvalidArgument("min_count must be at least 1".into()));
        }
        // token -> (count, first-seen rank)
        let mut counts: HashMap<String, (usize, usize)> = HashMap::new();
        for stream in streams {
            for tok in stream {
                let tok = tok.as_ref();
                if tok.is_empty() || tok == PAD_TOKEN {
                    continue;
                }
                let next = counts.len();
                match counts.get_mut(tok) {
                    Some(entry) => entry.0 += 1,
                    None => {
                        counts.insert(tok.to_owned(), (1, next));
                    }
                }
            }
        }
        let mut ranked: Vec<(String, usize, usize)> = counts
            .into_iter()
            .filter(|(_, (c, _))| *c >= min_count)
            .map(|(t, (c, first))| (t, c, first))
            .collect();
        ranked.sort_by(|a, b| b.1.cmp(&a.1).then(a.2.cmp(&b.2)));
        if let Some(max) = max_size {
            ranked.truncate(max.saturating_sub(1));
        }
        Self::from_keywords(ranked.into_iter().map(|(t, _, _)| t))
    }

    /// Number of entries including the empty-space token.
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    /// Number of real keywords (D).
    pub fn num_keywords(&self) -> usize {
        self.entries.len() - 1
    }

    pub fn is_empty(&self) -> bool {
        self.num_keywords() == 0
    }

    pub fn id(&self, keyword: &str) -> Option<KeywordId> {
        self.index.get(keyword).copied()
    }

    pub fn keyword(&self, id: KeywordId) -> Option<&str> {
        self.entries.get(id as usize).map(String::as_str)
    }

    /// Keywords in id order, starting with the empty-space token.
    pub fn entries(&self) -> &[String] {
        &self.entries
    }

    /// The full id set, empty-space token included.
    pub fn all_ids(&self) -> KeywordSet {
        KeywordSet::from_ids(0..self.len() as KeywordId)
    }

    /// Restricts the dictionary to `kept`. Surviving keywords keep their
    /// relative order and receive dense new ids. Returns the new dictionary
    /// and an old-id -> new-id table (`None` for dropped ids).
    pub fn screened(&self, kept: &KeywordSet) -> (Dictionary, Vec<Option<KeywordId>>) {
        let mut remap = vec![None; self.len()];
        remap[PAD_ID as usize] = Some(PAD_ID);
        let mut keywords = Vec::new();
        for id in kept.iter().filter(|&id| id != PAD_ID && (id as usize) < self.len()) {
            keywords.push(self.entries[id as usize].clone());
            remap[id as usize] = Some(keywords.len() as KeywordId);
        }
        let dict = Dictionary::from_keywords(keywords).expect("subset of a valid dictionary");
        (dict, remap)
    }

    /// One keyword per line; line 0 holds `<pad>`.
    pub fn write(&self, path: &Path) -> Result<()> {
        let mut buf = Vec::new();
        for e in &self.entries {
            writeln!(buf, "{e}").expect("write to vec");
        }
        fs::write(path, buf).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut lines = text.lines();
        match lines.next() {
            Some(PAD_TOKEN) => {}
            _ => return Err(Error::parse(path, 1, "first line must be `<pad>`")),
        }
        Self::from_keywords(lines.map(str::to_owned)).map_err(|e| Error::parse(path, 0, e.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn min_count_threshold() {
        let toks = [vec!["a", "b", "a", "a"]];
        let d = Dictionary::build(toks, 2, None).unwrap();
        assert_eq!(d.entries(), &["<pad>", "a"]);
    }

    #[test]
    fn tie_break_and_truncation() {
        let toks = [vec!["a", "b"], vec!["b", "a"]];
        let d = Dictionary::build(toks, 1, Some(2)).unwrap();
        assert_eq!(d.entries(), &["<pad>", "a"]);
        let d = Dictionary::build([vec!["b", "a", "a", "b", "c"]], 1, None).unwrap();
        assert_eq!(d.entries(), &["<pad>", "b", "a", "c"]);
    }

    #[test]
    fn empty_corpus_gives_pad_only() {
        let d = Dictionary::build(Vec::<Vec<String>>::new(), 1, None).unwrap();
        assert_eq!(d.len(), 1);
        assert_eq!(d.num_keywords(), 0);
        assert!(Dictionary::build([vec!["x"]], 0, None).is_err());
    }

    #[test]
    fn ids_are_inverse() {
        let d = Dictionary::from_keywords(["x", "y", "z"]).unwrap();
        for (i, kw) in d.entries().iter().enumerate().skip(1) {
            assert_eq!(d.id(kw), Some(i as KeywordId));
            assert_eq!(d.keyword(i as KeywordId), Some(kw.as_str()));
        }
        assert_eq!(d.id("<pad>"), None);
        assert!(Dictionary::from_keywords(["x", "x"]).is_err());
        assert!(Dictionary::from_keywords([""]).is_err());
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("dict.txt");
        let d = Dictionary::from_keywords(["héllo", "wörld", "新闻"]).unwrap();
        d.write(&path).unwrap();
        assert_eq!(fs::read_to_string(&path).unwrap(), "<pad>\nhéllo\nwörld\n新闻\n");
        assert_eq!(Dictionary::read(&path).unwrap(), d);
    }

    #[test]
    fn screening_remaps_densely() {
        let d = Dictionary::from_keywords(["a", "b", "c", "d"]).unwrap();
        let kept = KeywordSet::from_ids([0, 2, 4]);
        let (small, remap) = d.screened(&kept);
        assert_eq!(small.entries(), &["<pad>", "b", "d"]);
        assert_eq!(remap, vec![Some(0), None, Some(1), None, Some(2)]);
    }
}
