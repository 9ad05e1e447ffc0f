/// How raw text is split into keywords.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub enum Tokenizer {
    /// Lowercase, split on whitespace, strip leading and trailing punctuation.
    #[default]
    Standard,
    /// Text is already segmented; tokens are joined by `separator` and are
    /// taken verbatim (only surrounding whitespace is trimmed). Used for
    /// languages without space-delimited words.
    PreTokenized { separator: String },
}

impl Tokenizer {
    pub fn tokenize(&self, text: &str) -> Vec<String> {
        match self {
            Tokenizer::Standard => tokenize(text),
            Tokenizer::PreTokenized { separator } => text
                .split(separator.as_str())
                .map(str::trim)
                .filter(|t| !t.is_empty() && *t != super::PAD_TOKEN)
                .map(str::to_owned)
                .collect(),
        }
    }
}

/// Lowercased, whitespace-split tokens with leading/trailing punctuation
/// removed. Tokens that are pure punctuation disappear.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split_whitespace()
        .map(|raw| raw.trim_matches(|c: char| !c.is_alphanumeric()))
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}
