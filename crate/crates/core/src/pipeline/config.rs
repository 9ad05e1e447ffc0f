//! Flat `key = value` experiment configuration.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use crate::corpus::Tokenizer;
use crate::error::{Error, Result};
use crate::models::{ModelConfig, ModelKind};
use crate::screening::Scorer;
use crate::training::TrainSpec;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Selection {
    TopK(usize),
    Threshold(f64),
}

impl Selection {
    /// Name of the per-selection output subdirectory.
    pub fn dir_name(&self, scorer: Scorer) -> String {
        match self {
            Selection::TopK(k) => format!("{scorer}_top{k}"),
            Selection::Threshold(t) => format!("{scorer}_thr{t:e}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Validation,
    Test,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Validation => "validation",
            Split::Test => "test",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        match s {
            "train" => Some(Split::Train),
            "validation" => Some(Split::Validation),
            "test" => Some(Split::Test),
            _ => None,
        }
    }
}

/// Architecture settings; dictionary size and class count come from data.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelSpec {
    pub kind: ModelKind,
    pub seq_len: usize,
    pub embed_dim: usize,
    pub hidden_dim: usize,
    pub kernel_sizes: Vec<usize>,
    pub filters: usize,
    pub num_classes: Option<usize>,
}

impl ModelSpec {
    pub fn to_config(&self, num_keywords: usize, num_classes: usize) -> ModelConfig {
        match self.kind {
            ModelKind::TextCnn => ModelConfig::textcnn(
                num_keywords,
                self.embed_dim,
                self.kernel_sizes.clone(),
                self.filters,
                num_classes,
                self.seq_len,
            ),
            ModelKind::SimpleRnn => {
                ModelConfig::simplernn(num_keywords, self.embed_dim, self.hidden_dim, num_classes, self.seq_len)
            }
            ModelKind::MeanPool => ModelConfig::meanpool(num_keywords, self.embed_dim, num_classes, self.seq_len),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub dataset: String,
    pub train_path: PathBuf,
    pub test_path: PathBuf,
    pub tokenizer: Tokenizer,
    pub min_count: usize,
    pub max_dict_size: Option<usize>,
    pub model: ModelSpec,
    pub train: TrainSpec,
    pub scorer: Scorer,
    pub selection: Selection,
    pub score_split: Split,
    pub trr_split: Split,
    pub sweep_k: Vec<usize>,
    pub seed: u64,
    pub out_dir: Option<PathBuf>,
}

impl ExperimentConfig {
    /// A config with defaults for everything except the data paths.
    pub fn new(dataset: impl Into<String>, train_path: PathBuf, test_path: PathBuf) -> Self {
        Self {
            dataset: dataset.into(),
            train_path,
            test_path,
            tokenizer: Tokenizer::Standard,
            min_count: 1,
            max_dict_size: None,
            model: ModelSpec {
                kind: ModelKind::TextCnn,
                seq_len: 50,
                embed_dim: 128,
                hidden_dim: 64,
                kernel_sizes: vec![3, 4, 5],
                filters: 100,
                num_classes: None,
            },
            train: TrainSpec::default(),
            scorer: Scorer::Cpe,
            selection: Selection::TopK(1000),
            score_split: Split::Train,
            trr_split: Split::Train,
            sweep_k: Vec::new(),
            seed: 0,
            out_dir: None,
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::parse(&text, base)
    }

    /// Parses config text. Relative paths resolve against `base_dir`.
    pub fn parse(text: &str, base_dir: &Path) -> Result<Self> {
        let mut cfg = Self::new("", PathBuf::new(), PathBuf::new());
        let (mut top_k, mut threshold) = (None, None);
        let mut separator = None;
        let mut seen = std::collections::HashSet::new();
        let resolve = |v: &str| {
            let p = PathBuf::from(v);
            if p.is_absolute() {
                p
            } else {
                base_dir.join(p)
            }
        };
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let bad = |msg: String| Error::Config(format!("line {}: {msg}", i + 1));
            let (key, value) = line.split_once('=').ok_or_else(|| bad("expected `key = value`".into()))?;
            let (key, value) = (key.trim(), value.trim());
            if !seen.insert(key.to_owned()) {
                return Err(bad(format!("duplicate key `{key}`")));
            }
            let num = |v: &str| v.parse::<usize>().map_err(|_| bad(format!("`{key}` expects an integer")));
            let real = |v: &str| v.parse::<f64>().map_err(|_| bad(format!("`{key}` expects a number")));
            match key {
                "dataset" => cfg.dataset = value.to_owned(),
                "train_path" => cfg.train_path = resolve(value),
                "test_path" => cfg.test_path = resolve(value),
                "out_dir" => cfg.out_dir = Some(resolve(value)),
                "tokenizer" => match value {
                    "standard" => cfg.tokenizer = Tokenizer::Standard,
                    "pretokenized" => {
                        cfg.tokenizer = Tokenizer::PreTokenized {
                            separator: " ".into(),
                        }
                    }
                    _ => return Err(bad(format!("unknown tokenizer `{value}`"))),
                },
                "separator" => separator = Some(unquote(value)),
                "min_count" => cfg.min_count = num(value)?,
                "max_dict_size" => cfg.max_dict_size = Some(num(value)?),
                "model" => cfg.model.kind = value.parse()?,
                "seq_len" => cfg.model.seq_len = num(value)?,
                "embed_dim" => cfg.model.embed_dim = num(value)?,
                "hidden_dim" => cfg.model.hidden_dim = num(value)?,
                "filters" => cfg.model.filters = num(value)?,
                "num_classes" => cfg.model.num_classes = Some(num(value)?),
                "kernel_sizes" => cfg.model.kernel_sizes = usize_list(value).map_err(bad)?,
                "dropout" => cfg.train.dropout_rate = real(value)? as f32,
                "batch_size" => cfg.train.batch_size = num(value)?,
                "rho" => cfg.train.rho = real(value)? as f32,
                "epsilon" => cfg.train.epsilon = real(value)? as f32,
                "weight_decay" => cfg.train.weight_decay = real(value)? as f32,
                "max_epochs" => cfg.train.max_epochs = num(value)?,
                "patience" => cfg.train.patience = num(value)?,
                "val_fraction" => cfg.train.val_fraction = real(value)?,
                "scorer" => cfg.scorer = value.parse()?,
                "top_k" => top_k = Some(num(value)?),
                "threshold" => threshold = Some(real(value)?),
                "sweep_k" => cfg.sweep_k = usize_list(value).map_err(bad)?,
                "score_split" => {
                    cfg.score_split = match Split::parse(value) {
                        Some(s @ (Split::Train | Split::Validation)) => s,
                        _ => return Err(bad("score_split must be `train` or `validation`".into())),
                    }
                }
                "trr_split" => {
                    cfg.trr_split = match Split::parse(value) {
                        Some(s @ (Split::Train | Split::Test)) => s,
                        _ => return Err(bad("trr_split must be `train` or `test`".into())),
                    }
                }
                "seed" => cfg.seed = value.parse().map_err(|_| bad("`seed` expects an integer".into()))?,
                _ => return Err(bad(format!("unknown key `{key}`"))),
            }
        }
        if let Some(sep) = separator {
            match &mut cfg.tokenizer {
                Tokenizer::PreTokenized { separator } => *separator = sep,
                Tokenizer::Standard => return Err(Error::Config("`separator` requires tokenizer = pretokenized".into())),
            }
        }
        cfg.selection = match (top_k, threshold) {
            (Some(k), None) => Selection::TopK(k),
            (None, Some(t)) => Selection::Threshold(t),
            (None, None) => return Err(Error::Config("one of `top_k` or `threshold` is required".into())),
            (Some(_), Some(_)) => return Err(Error::Config("`top_k` and `threshold` are mutually exclusive".into())),
        };
        if cfg.train_path.as_os_str().is_empty() || cfg.test_path.as_os_str().is_empty() {
            return Err(Error::Config("`train_path` and `test_path` are required".into()));
        }
        if cfg.dataset.is_empty() {
            cfg.dataset = cfg
                .train_path
                .file_stem()
                .map_or_else(|| "dataset".into(), |s| s.to_string_lossy().into_owned());
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let mut probe = self.train.clone();
        probe.seed = self.seed;
        probe.validate()?;
        self.model.to_config(1, self.model.num_classes.unwrap_or(2)).validate()?;
        if self.min_count == 0 {
            return Err(Error::Config("min_count must be at least 1".into()));
        }
        if let Selection::Threshold(t) = self.selection {
            if t.is_nan() {
                return Err(Error::Config("threshold is NaN".into()));
            }
        }
        Ok(())
    }

    /// Training spec with the experiment seed applied.
    pub fn train_spec(&self) -> TrainSpec {
        TrainSpec {
            seed: self.seed,
            ..self.train.clone()
        }
    }

    /// Canonical text of every setting that affects the benchmark model and
    /// the score files. Selection, sweep and output location are excluded.
    pub fn base_text(&self) -> String {
        let mut s = String::new();
        let mut kv = |k: &str, v: String| writeln!(s, "{k} = {v}").unwrap();
        kv("dataset", self.dataset.clone());
        kv("train_path", self.train_path.display().to_string());
        kv("test_path", self.test_path.display().to_string());
        match &self.tokenizer {
            Tokenizer::Standard => kv("tokenizer", "standard".into()),
            Tokenizer::PreTokenized { separator } => {
                kv("tokenizer", "pretokenized".into());
                kv("separator", format!("{separator:?}"));
            }
        }
        kv("min_count", self.min_count.to_string());
        kv("max_dict_size", self.max_dict_size.map_or("none".into(), |v| v.to_string()));
        let m = &self.model;
        kv("model", m.kind.to_string());
        kv("seq_len", m.seq_len.to_string());
        kv("embed_dim", m.embed_dim.to_string());
        kv("hidden_dim", m.hidden_dim.to_string());
        kv("kernel_sizes", join(&m.kernel_sizes));
        kv("filters", m.filters.to_string());
        kv("num_classes", m.num_classes.map_or("auto".into(), |v| v.to_string()));
        let t = &self.train;
        kv("dropout", t.dropout_rate.to_string());
        kv("batch_size", t.batch_size.to_string());
        kv("rho", t.rho.to_string());
        kv("epsilon", t.epsilon.to_string());
        kv("weight_decay", t.weight_decay.to_string());
        kv("max_epochs", t.max_epochs.to_string());
        kv("patience", t.patience.to_string());
        kv("val_fraction", t.val_fraction.to_string());
        kv("score_split", self.score_split.as_str().into());
        kv("trr_split", self.trr_split.as_str().into());
        kv("seed", self.seed.to_string());
        s
    }

    /// Short hex digest of [`base_text`](Self::base_text).
    pub fn base_digest(&self) -> String {
        let hash = Sha256::digest(self.base_text().as_bytes());
        hex::encode(&hash[..8])
    }
}

fn join(v: &[usize]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
}

fn usize_list(v: &str) -> std::result::Result<Vec<usize>, String> {
    v.split(',')
        .map(|p| p.trim().parse::<usize>().map_err(|_| format!("bad integer list `{v}`")))
        .collect()
}

fn unquote(v: &str) -> String {
    let inner = v.strip_prefix('"').and_then(|s| s.strip_suffix('"')).unwrap_or(v);
    inner.replace("\\t", "\t")
}
