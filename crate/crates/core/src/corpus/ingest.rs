use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::{EncodedDocument, KeywordId, Tokenizer};
use crate::error::{Error, Result};

/// A labelled document after tokenization, before encoding.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawDocument {
    pub label: u32,
    pub tokens: Vec<String>,
}

/// Reads a header-less `class_index,title,description` CSV (the layout of
/// the public AG's News and DBPedia releases). Title and description are
/// joined with one space before tokenizing. Class indices are 1-based.
pub fn read_labeled_csv(path: &Path, tokenizer: &Tokenizer) -> Result<Vec<RawDocument>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_path(path)
        .map_err(|e| match e.into_kind() {
            csv::ErrorKind::Io(io) => Error::io(path, io),
            other => Error::parse(path, 0, format!("{other:?}")),
        })?;
    let mut docs = Vec::new();
    for (line, record) in reader.records().enumerate() {
        let record = record?;
        let label_field = record.get(0).unwrap_or("").trim();
        let label: u32 = label_field
            .parse()
            .map_err(|_| Error::parse(path, line + 1, format!("bad class index {label_field:?}")))?;
        if label == 0 {
            return Err(Error::parse(path, line + 1, "class index is 1-based"));
        }
        if record.len() < 2 {
            return Err(Error::parse(path, line + 1, "expected class_index,title,description"));
        }
        let text = record.iter().skip(1).collect::<Vec<_>>().join(" ");
        docs.push(RawDocument {
            label,
            tokens: tokenizer.tokenize(&text),
        });
    }
    Ok(docs)
}

/// Writes records in the ingestion CSV layout.
pub fn write_labeled_csv(path: &Path, rows: &[(u32, String, String)]) -> Result<()> {
    let mut writer = csv::WriterBuilder::new()
        .has_headers(false)
        .from_path(path)
        .map_err(|e| match e.into_kind() {
            csv::ErrorKind::Io(io) => Error::io(path, io),
            other => Error::parse(path, 0, format!("{other:?}")),
        })?;
    for (label, title, desc) in rows {
        writer.write_record([label.to_string().as_str(), title, desc])?;
    }
    writer.flush().map_err(|e| Error::io(path, e))
}

/// Persists encoded documents: a `#seq_len=T n_docs=N` header, then one
/// `label<TAB>id id ...` line per document.
pub fn write_encoded(path: &Path, docs: &[EncodedDocument], seq_len: usize) -> Result<()> {
    let mut out = String::new();
    writeln!(out, "#seq_len={seq_len} n_docs={}", docs.len()).unwrap();
    for doc in docs {
        write!(out, "{}\t", doc.label).unwrap();
        for (i, id) in doc.ids.iter().enumerate() {
            if i > 0 {
                out.push(' ');
            }
            write!(out, "{id}").unwrap();
        }
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

pub fn read_encoded(path: &Path) -> Result<(Vec<EncodedDocument>, usize)> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| Error::parse(path, 1, "missing header"))?;
    let mut seq_len = None;
    let mut n_docs = None;
    for field in header.trim_start_matches('#').split_whitespace() {
        match field.split_once('=') {
            Some(("seq_len", v)) => seq_len = v.parse::<usize>().ok(),
            Some(("n_docs", v)) => n_docs = v.parse::<usize>().ok(),
            _ => {}
        }
    }
    let (seq_len, n_docs) = match (seq_len, n_docs) {
        (Some(t), Some(n)) => (t, n),
        _ => return Err(Error::parse(path, 1, "header must carry seq_len and n_docs")),
    };
    let mut docs = Vec::with_capacity(n_docs);
    for (i, line) in lines.enumerate() {
        let lineno = i + 2;
        let (label, ids) = line
            .split_once('\t')
            .ok_or_else(|| Error::parse(path, lineno, "expected label<TAB>ids"))?;
        let label: u32 = label.parse().map_err(|_| Error::parse(path, lineno, "bad label"))?;
        let ids = ids
            .split(' ')
            .map(|s| s.parse::<KeywordId>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|_| Error::parse(path, lineno, "bad keyword id"))?;
        if ids.len() != seq_len {
            return Err(Error::parse(path, lineno, format!("expected {seq_len} ids, found {}", ids.len())));
        }
        docs.push(EncodedDocument::from_ids(ids, label));
    }
    if docs.len() != n_docs {
        return Err(Error::parse(path, 0, format!("expected {n_docs} documents, found {}", docs.len())));
    }
    Ok((docs, seq_len))
}
