//! End-to-end screening experiments with resumable, persisted stages.
//!
//! Output directory layout:
//!
//! ```text
//! config.txt                  canonical base settings (checked on resume)
//! dictionary.txt  train.ids  test.ids
//! benchmark.ckpt  benchmark.log
//! scores_<scorer>.tsv
//! <scorer>_top<K>/            one directory per selection
//!     dictionary.txt  train.ids  test.ids
//!     reduced.ckpt  reduced.log
//!     report.tsv  report.txt
//! sweep_<scorer>.tsv  sweep_<scorer>.txt
//! manifest.txt
//! ```
//!
//! Files are written under a `.partial` name and renamed once complete, so a
//! stage counts as done exactly when its outputs exist.

mod config;
mod synth;

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use sha2::{Digest, Sha256};

pub use config::{ExperimentConfig, ModelSpec, Selection, Split};
pub use synth::{make_synthetic, word, write_synthetic, Row, SynthDataset, SynthSpec};

use crate::corpus::{read_encoded, read_labeled_csv, write_encoded, Corpus, Dictionary, KeywordSet};
use crate::error::{Error, Result};
use crate::metrics::{build_report, parse_reports, reports_to_table, reports_to_tsv, CompressionReport, RunSummary};
use crate::models::{read_checkpoint, write_checkpoint, Model, ModelConfig};
use crate::screening::{select_by_threshold, select_top_k, ScoreTable, Scorer};
use crate::training::{derive_seed, evaluate_accuracy, stratified_split, train, TrainLog};

/// How many times each stage did real work (as opposed to loading).
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct StageCounters {
    pub ingest: usize,
    pub train: usize,
    pub score: usize,
    pub screen: usize,
    pub retrain: usize,
    pub report: usize,
}

struct Data {
    train: Corpus,
    test: Corpus,
    num_classes: usize,
}

struct Reduced {
    model: Model,
    train: Corpus,
    test: Corpus,
}

pub struct Experiment {
    config: ExperimentConfig,
    out: PathBuf,
    counters: StageCounters,
    data: Option<Data>,
    benchmark: Option<Model>,
    scores: HashMap<Scorer, ScoreTable>,
    kept: HashMap<String, KeywordSet>,
    reduced: HashMap<String, Reduced>,
}

fn partial_path(path: &Path) -> PathBuf {
    let mut name = path.file_name().unwrap_or_default().to_os_string();
    name.push(".partial");
    path.with_file_name(name)
}

/// Writes through `<path>.partial` and renames on success.
fn commit(path: &Path, write: impl FnOnce(&Path) -> Result<()>) -> Result<()> {
    let partial = partial_path(path);
    write(&partial)?;
    fs::rename(&partial, path).map_err(|e| Error::io(path, e))
}

fn commit_text(path: &Path, text: &str) -> Result<()> {
    commit(path, |p| fs::write(p, text).map_err(|e| Error::io(p, e)))
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn test_fingerprint(test: &Corpus) -> String {
    let labels: Vec<u8> = test.docs().iter().flat_map(|d| d.label.to_le_bytes()).collect();
    format!("{}:{}", test.len(), &sha256_hex(&labels)[..16])
}

fn same_architecture(a: &ModelConfig, b: &ModelConfig) -> bool {
    let mut a = a.clone();
    a.dropout = b.dropout;
    a == *b
}

impl Experiment {
    /// Opens (or creates) the output directory for `config`. An existing
    /// directory must have been created with the same base settings.
    pub fn open(config: ExperimentConfig) -> Result<Self> {
        config.validate()?;
        let out = config
            .out_dir
            .clone()
            .ok_or_else(|| Error::Config("no output directory given".into()))?;
        fs::create_dir_all(&out).map_err(|e| Error::io(&out, e))?;
        let stamp = out.join("config.txt");
        let base = config.base_text();
        match fs::read_to_string(&stamp) {
            Ok(existing) if existing != base => {
                return Err(Error::Config(format!(
                    "{} holds artifacts of a different experiment",
                    out.display()
                )))
            }
            Ok(_) => {}
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => commit_text(&stamp, &base)?,
            Err(e) => return Err(Error::io(&stamp, e)),
        }
        Ok(Self {
            config,
            out,
            counters: StageCounters::default(),
            data: None,
            benchmark: None,
            scores: HashMap::new(),
            kept: HashMap::new(),
            reduced: HashMap::new(),
        })
    }

    pub fn config(&self) -> &ExperimentConfig {
        &self.config
    }

    pub fn out_dir(&self) -> &Path {
        &self.out
    }

    pub fn counters(&self) -> StageCounters {
        self.counters
    }

    fn in_stage<T>(&mut self, name: &'static str, f: impl FnOnce(&mut Self) -> Result<T>) -> Result<T> {
        f(self).map_err(|e| match e {
            e @ Error::Stage { .. } => e,
            e => Error::Stage {
                stage: name,
                source: Box::new(e),
            },
        })
    }

    fn selection_dir(&self, sel: Selection) -> PathBuf {
        self.out.join(sel.dir_name(self.config.scorer))
    }

    fn model_config(&self, num_keywords: usize, num_classes: usize) -> ModelConfig {
        let mut c = self.config.model.to_config(num_keywords, num_classes);
        c.dropout = self.config.train.dropout_rate;
        c
    }

    fn init_seed(&self) -> u64 {
        derive_seed(&[self.config.seed, 0x1417])
    }

    /// Builds the dictionary and encodes both splits.
    pub fn ingest(&mut self) -> Result<()> {
        if self.data.is_some() {
            return Ok(());
        }
        self.in_stage("ingest", |exp| {
            let (dict_path, train_path, test_path) =
                (exp.out.join("dictionary.txt"), exp.out.join("train.ids"), exp.out.join("test.ids"));
            let seq_len = exp.config.model.seq_len;
            let (dict, train_docs, test_docs) = if dict_path.exists() && train_path.exists() && test_path.exists() {
                let dict = Arc::new(Dictionary::read(&dict_path)?);
                let (train_docs, t1) = read_encoded(&train_path)?;
                let (test_docs, t2) = read_encoded(&test_path)?;
                if t1 != seq_len || t2 != seq_len {
                    return Err(Error::Config("persisted encodings use a different seq_len".into()));
                }
                (dict, train_docs, test_docs)
            } else {
                let cfg = &exp.config;
                let raw_train = read_labeled_csv(&cfg.train_path, &cfg.tokenizer)?;
                let raw_test = read_labeled_csv(&cfg.test_path, &cfg.tokenizer)?;
                let dict = Dictionary::build(raw_train.iter().map(|d| &d.tokens), cfg.min_count, cfg.max_dict_size)?;
                let dict = Arc::new(dict);
                let train = Corpus::encode_raw(Arc::clone(&dict), &raw_train, seq_len)?;
                let test = Corpus::encode_raw(Arc::clone(&dict), &raw_test, seq_len)?;
                commit(&dict_path, |p| dict.write(p))?;
                commit(&train_path, |p| write_encoded(p, train.docs(), seq_len))?;
                commit(&test_path, |p| write_encoded(p, test.docs(), seq_len))?;
                exp.counters.ingest += 1;
                (dict, train.docs().to_vec(), test.docs().to_vec())
            };
            if dict.num_keywords() == 0 {
                return Err(Error::InvalidArgument("dictionary is empty".into()));
            }
            let max_label = train_docs.iter().map(|d| d.label).max().unwrap_or(0) as usize;
            let num_classes = exp.config.model.num_classes.unwrap_or(max_label);
            if num_classes < 2 {
                return Err(Error::InvalidArgument(format!("need at least two classes, found {num_classes}")));
            }
            if let Some(d) = train_docs.iter().chain(&test_docs).find(|d| d.label as usize > num_classes) {
                return Err(Error::InvalidArgument(format!("label {} exceeds class count {num_classes}", d.label)));
            }
            exp.data = Some(Data {
                train: Corpus::new(Arc::clone(&dict), train_docs, seq_len)?,
                test: Corpus::new(dict, test_docs, seq_len)?,
                num_classes,
            });
            Ok(())
        })
    }

    fn data(&self) -> &Data {
        self.data.as_ref().expect("ingest ran")
    }

    /// Trains (or loads) the full-dictionary benchmark model.
    pub fn train_benchmark(&mut self) -> Result<&Model> {
        if self.benchmark.is_none() {
            self.ingest()?;
            self.in_stage("train", |exp| {
                let data = exp.data();
                let config = exp.model_config(data.train.dictionary().num_keywords(), data.num_classes);
                let ckpt = exp.out.join("benchmark.ckpt");
                let model = if ckpt.exists() {
                    let model = read_checkpoint(&ckpt)?;
                    if !same_architecture(model.config(), &config) {
                        return Err(Error::Config("benchmark checkpoint does not match the config".into()));
                    }
                    model
                } else {
                    let init = Model::new(config, exp.init_seed())?;
                    let (model, log) = train(init, data.train.docs(), &exp.config.train_spec())?;
                    commit(&exp.out.join("benchmark.log"), |p| log.write(p))?;
                    commit(&ckpt, |p| write_checkpoint(p, &model))?;
                    exp.counters.train += 1;
                    model
                };
                exp.benchmark = Some(model);
                Ok(())
            })?;
        }
        Ok(self.benchmark.as_ref().expect("benchmark trained"))
    }

    fn scoring_corpus(&self) -> Result<Corpus> {
        let train = &self.data().train;
        match self.config.score_split {
            Split::Validation => {
                let labels: Vec<u32> = train.docs().iter().map(|d| d.label).collect();
                let (_, val) = stratified_split(&labels, self.config.train.val_fraction, self.config.seed);
                if val.is_empty() {
                    return Err(Error::InvalidArgument("validation split is empty".into()));
                }
                train.subset(&val)
            }
            _ => Ok(train.clone()),
        }
    }

    /// Scores every keyword with the configured scorer.
    pub fn score(&mut self) -> Result<&ScoreTable> {
        let scorer = self.config.scorer;
        if !self.scores.contains_key(&scorer) {
            self.train_benchmark()?;
            self.in_stage("score", |exp| {
                let path = exp.out.join(format!("scores_{scorer}.tsv"));
                let dict = Arc::clone(exp.data().train.dictionary());
                let table = if path.exists() {
                    let table = ScoreTable::read(&path, &dict)?;
                    if table.scorer() != scorer || table.len() != dict.num_keywords() {
                        return Err(Error::Config(format!("{} does not match the dictionary", path.display())));
                    }
                    table
                } else {
                    let corpus = exp.scoring_corpus()?;
                    let model = exp.benchmark.as_ref().expect("benchmark trained");
                    let table = scorer.score(model, &corpus)?;
                    commit(&path, |p| table.write(p, &dict))?;
                    exp.counters.score += 1;
                    table
                };
                exp.scores.insert(scorer, table);
                Ok(())
            })?;
        }
        Ok(&self.scores[&scorer])
    }

    /// Selects the screened dictionary and persists it.
    pub fn screen(&mut self, sel: Selection) -> Result<&KeywordSet> {
        let key = sel.dir_name(self.config.scorer);
        if !self.kept.contains_key(&key) {
            self.score()?;
            self.in_stage("screen", |exp| {
                let dir = exp.selection_dir(sel);
                fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
                let path = dir.join("dictionary.txt");
                let full = Arc::clone(exp.data().train.dictionary());
                let kept = if path.exists() {
                    let screened = Dictionary::read(&path)?;
                    let ids = screened.entries()[1..].iter().map(|kw| {
                        full.id(kw)
                            .ok_or_else(|| Error::Config(format!("screened keyword `{kw}` not in the dictionary")))
                    });
                    KeywordSet::from_ids(ids.collect::<Result<Vec<_>>>()?)
                } else {
                    let table = &exp.scores[&exp.config.scorer];
                    let kept = match sel {
                        Selection::TopK(k) => select_top_k(table, k)?,
                        Selection::Threshold(t) => select_by_threshold(table, t)?,
                    };
                    let (screened, _) = full.screened(&kept);
                    commit(&path, |p| screened.write(p))?;
                    exp.counters.screen += 1;
                    kept
                };
                exp.kept.insert(sel.dir_name(exp.config.scorer), kept);
                Ok(())
            })?;
        }
        Ok(&self.kept[&key])
    }

    /// Re-encodes the corpus over the screened dictionary and trains a fresh
    /// model on it with the benchmark's training settings.
    pub fn retrain(&mut self, sel: Selection) -> Result<&Model> {
        let key = sel.dir_name(self.config.scorer);
        if !self.reduced.contains_key(&key) {
            self.screen(sel)?;
            self.in_stage("retrain", |exp| {
                let kept = &exp.kept[&key];
                if kept.num_keywords() == 0 {
                    return Err(Error::InvalidArgument("screened dictionary is empty".into()));
                }
                let data = exp.data();
                let train_r = data.train.screened(kept)?;
                let test_r = data.test.screened(kept)?;
                let config = exp.model_config(kept.num_keywords(), data.num_classes);
                let dir = exp.selection_dir(sel);
                let ckpt = dir.join("reduced.ckpt");
                let seq_len = train_r.seq_len();
                let model = if ckpt.exists() {
                    let model = read_checkpoint(&ckpt)?;
                    if !same_architecture(model.config(), &config) {
                        return Err(Error::Config("reduced checkpoint does not match the config".into()));
                    }
                    model
                } else {
                    commit(&dir.join("train.ids"), |p| write_encoded(p, train_r.docs(), seq_len))?;
                    commit(&dir.join("test.ids"), |p| write_encoded(p, test_r.docs(), seq_len))?;
                    let init = Model::new(config, exp.init_seed())?;
                    let (model, log) = train(init, train_r.docs(), &exp.config.train_spec())?;
                    commit(&dir.join("reduced.log"), |p| log.write(p))?;
                    commit(&ckpt, |p| write_checkpoint(p, &model))?;
                    exp.counters.retrain += 1;
                    model
                };
                exp.reduced.insert(
                    key.clone(),
                    Reduced {
                        model,
                        train: train_r,
                        test: test_r,
                    },
                );
                Ok(())
            })?;
        }
        Ok(&self.reduced[&key].model)
    }

    /// Evaluates both models on the test split and writes the report.
    pub fn report(&mut self, sel: Selection) -> Result<CompressionReport> {
        let dir = self.selection_dir(sel);
        let path = dir.join("report.tsv");
        if path.exists() {
            return self.in_stage("report", |_| {
                let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
                let mut reports = parse_reports(&text)?;
                match reports.len() {
                    1 => Ok(reports.remove(0)),
                    n => Err(Error::parse(&path, 0, format!("expected one report, found {n}"))),
                }
            });
        }
        self.retrain(sel)?;
        self.in_stage("report", |exp| {
            let data = exp.data();
            let reduced = &exp.reduced[&sel.dir_name(exp.config.scorer)];
            let benchmark = exp.benchmark.as_ref().expect("benchmark trained");
            let (len_before, len_after) = match exp.config.trr_split {
                Split::Test => (data.test.mean_effective_length(), reduced.test.mean_effective_length()),
                _ => (data.train.mean_effective_length(), reduced.train.mean_effective_length()),
            };
            let full = RunSummary {
                config: benchmark.config().clone(),
                test_accuracy: evaluate_accuracy(benchmark, data.test.docs())?,
                test_fingerprint: test_fingerprint(&data.test),
                mean_length: len_before,
            };
            let small = RunSummary {
                config: reduced.model.config().clone(),
                test_accuracy: evaluate_accuracy(&reduced.model, reduced.test.docs())?,
                test_fingerprint: test_fingerprint(&reduced.test),
                mean_length: len_after,
            };
            let report = build_report(&full, &small, &exp.config.dataset, exp.config.scorer, &exp.config.base_digest())?;
            let reports = std::slice::from_ref(&report);
            commit_text(&dir.join("report.txt"), &reports_to_table(reports))?;
            commit_text(&path, &reports_to_tsv(reports)?)?;
            exp.counters.report += 1;
            Ok(report)
        })
    }

    /// All stages for the configured selection.
    pub fn run(&mut self) -> Result<CompressionReport> {
        self.report(self.config.selection)
    }

    /// One report per dictionary size, sharing the benchmark and scores.
    pub fn sweep(&mut self, ks: &[usize]) -> Result<Vec<CompressionReport>> {
        if ks.is_empty() {
            return Err(Error::InvalidArgument("no dictionary sizes to sweep".into()));
        }
        let reports = ks
            .iter()
            .map(|&k| self.report(Selection::TopK(k)))
            .collect::<Result<Vec<_>>>()?;
        let stem = format!("sweep_{}", self.config.scorer);
        commit_text(&self.out.join(format!("{stem}.tsv")), &reports_to_tsv(&reports)?)?;
        commit_text(&self.out.join(format!("{stem}.txt")), &reports_to_table(&reports))?;
        Ok(reports)
    }

    /// Training log of the benchmark model, if it has been trained.
    pub fn benchmark_log(&self) -> Result<TrainLog> {
        let path = self.out.join("benchmark.log");
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        TrainLog::parse(&text)
    }

    /// Rewrites `manifest.txt`: one `sha256  relative/path` line per artifact.
    pub fn write_manifest(&self) -> Result<()> {
        let mut files = Vec::new();
        collect_files(&self.out, &mut files)?;
        files.sort();
        let mut text = String::new();
        for path in files {
            let rel = path.strip_prefix(&self.out).expect("under out dir");
            let name = rel.to_string_lossy().replace('\\', "/");
            if name == "manifest.txt" || name.ends_with(".partial") {
                continue;
            }
            let bytes = fs::read(&path).map_err(|e| Error::io(&path, e))?;
            text.push_str(&format!("{}  {name}\n", sha256_hex(&bytes)));
        }
        commit_text(&self.out.join("manifest.txt"), &text)
    }
}

fn collect_files(dir: &Path, out: &mut Vec<PathBuf>) -> Result<()> {
    for entry in fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        if path.is_dir() {
            collect_files(&path, out)?;
        } else {
            out.push(path);
        }
    }
    Ok(())
}

/// Runs every stage for the configured selection and refreshes the manifest.
pub fn run_experiment(config: &ExperimentConfig) -> Result<CompressionReport> {
    let mut exp = Experiment::open(config.clone())?;
    let report = exp.run()?;
    exp.write_manifest()?;
    Ok(report)
}

/// Runs one top-K selection per entry of `ks`, scoring only once.
pub fn sweep_k(config: &ExperimentConfig, ks: &[usize]) -> Result<Vec<CompressionReport>> {
    let mut exp = Experiment::open(config.clone())?;
    let reports = exp.sweep(ks)?;
    exp.write_manifest()?;
    Ok(reports)
}
