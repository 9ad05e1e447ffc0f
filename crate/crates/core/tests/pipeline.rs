//! End-to-end experiment runs on small synthetic corpora.

use std::fs;
use std::path::{Path, PathBuf};

use dictscreen::corpus::Dictionary;
use dictscreen::models::ModelKind;
use dictscreen::pipeline::{
    make_synthetic, run_experiment, sweep_k, write_synthetic, Experiment, ExperimentConfig, Selection, Split, StageCounters,
    SynthSpec,
};
use dictscreen::screening::{ScoreTable, Scorer};
use dictscreen::Error;
use sha2::{Digest, Sha256};
use tempfile::TempDir;

fn small_spec(seed: u64) -> SynthSpec {
    SynthSpec {
        classes: 2,
        docs_per_class: 120,
        test_docs_per_class: 40,
        vocab_size: 60,
        planted_per_class: 5,
        doc_len: 12,
        noise_rate: 0.5,
        seed,
    }
}

fn setup(spec: &SynthSpec) -> (TempDir, ExperimentConfig) {
    let dir = TempDir::new().unwrap();
    write_synthetic(&dir.path().join("data"), &make_synthetic(spec).unwrap()).unwrap();
    let mut cfg = ExperimentConfig::new("toy", dir.path().join("data/train.csv"), dir.path().join("data/test.csv"));
    cfg.model.kind = ModelKind::MeanPool;
    cfg.model.seq_len = 12;
    cfg.model.embed_dim = 8;
    cfg.train.batch_size = 32;
    cfg.train.max_epochs = 8;
    cfg.train.patience = 3;
    cfg.selection = Selection::TopK(20);
    cfg.seed = 3;
    cfg.out_dir = Some(dir.path().join("out"));
    (dir, cfg)
}

fn read(path: impl AsRef<Path>) -> Vec<u8> {
    fs::read(path.as_ref()).unwrap_or_else(|e| panic!("{}: {e}", path.as_ref().display()))
}

fn out(cfg: &ExperimentConfig) -> PathBuf {
    cfg.out_dir.clone().unwrap()
}

#[test]
fn keeping_every_keyword_is_a_no_op() {
    let (_dir, mut cfg) = setup(&small_spec(1));
    let d = {
        let mut exp = Experiment::open(cfg.clone()).unwrap();
        exp.ingest().unwrap();
        Dictionary::read(&out(&cfg).join("dictionary.txt")).unwrap().num_keywords()
    };
    cfg.selection = Selection::TopK(d);
    let report = run_experiment(&cfg).unwrap();
    assert_eq!(report.k_kept, d);
    assert_eq!((report.drr, report.trr, report.prr), (0.0, 0.0, 0.0));
    let dir = out(&cfg).join(format!("cpe_top{d}"));
    assert_eq!(read(dir.join("train.ids")), read(out(&cfg).join("train.ids")));
    assert_eq!(read(dir.join("dictionary.txt")), read(out(&cfg).join("dictionary.txt")));
    // same corpus, same initialization, same seed
    assert_eq!(report.benchmark_acc, report.reduced_acc);
}

#[test]
fn runs_are_byte_identical() {
    let (dir, cfg) = setup(&small_spec(2));
    let mut second = cfg.clone();
    second.out_dir = Some(dir.path().join("out2"));
    let a = run_experiment(&cfg).unwrap();
    let b = run_experiment(&second).unwrap();
    assert_eq!(a, b);
    for file in ["benchmark.ckpt", "benchmark.log", "scores_cpe.tsv", "cpe_top20/reduced.ckpt", "cpe_top20/report.tsv", "cpe_top20/report.txt", "manifest.txt"] {
        assert_eq!(read(out(&cfg).join(file)), read(out(&second).join(file)), "{file}");
    }
}

#[test]
fn stages_resume_from_artifacts() {
    let (_dir, cfg) = setup(&small_spec(3));
    let report_path = out(&cfg).join("cpe_top20/report.tsv");
    let mut exp = Experiment::open(cfg.clone()).unwrap();
    let first = exp.run().unwrap();
    assert_eq!(
        exp.counters(),
        StageCounters { ingest: 1, train: 1, score: 1, screen: 1, retrain: 1, report: 1 }
    );
    let original = read(&report_path);

    fs::remove_file(&report_path).unwrap();
    fs::remove_file(out(&cfg).join("cpe_top20/report.txt")).unwrap();
    let mut again = Experiment::open(cfg.clone()).unwrap();
    assert_eq!(again.run().unwrap(), first);
    assert_eq!(again.counters(), StageCounters { report: 1, ..Default::default() });
    assert_eq!(read(&report_path), original);

    // a finished report is simply loaded
    let mut third = Experiment::open(cfg).unwrap();
    assert_eq!(third.run().unwrap(), first);
    assert_eq!(third.counters(), StageCounters::default());
}

#[test]
fn screened_dictionary_on_disk_matches_selection() {
    let (_dir, cfg) = setup(&small_spec(4));
    run_experiment(&cfg).unwrap();
    let full = Dictionary::read(&out(&cfg).join("dictionary.txt")).unwrap();
    let table = ScoreTable::read(&out(&cfg).join("scores_cpe.tsv"), &full).unwrap();
    let mut expected: Vec<u32> = table.ranked()[..20].to_vec();
    expected.sort_unstable();
    let words: Vec<&str> = expected.iter().map(|&id| full.keyword(id).unwrap()).collect();
    let screened = Dictionary::read(&out(&cfg).join("cpe_top20/dictionary.txt")).unwrap();
    assert_eq!(&screened.entries()[1..], words.as_slice());
}

#[test]
fn sweep_scores_once() {
    let (_dir, cfg) = setup(&small_spec(5));
    let mut exp = Experiment::open(cfg.clone()).unwrap();
    let reports = exp.sweep(&[5, 10, 30]).unwrap();
    let c = exp.counters();
    assert_eq!((c.train, c.score, c.screen, c.retrain, c.report), (1, 1, 3, 3, 3));
    assert_eq!(reports.iter().map(|r| r.k_kept).collect::<Vec<_>>(), [5, 10, 30]);
    assert!(reports.windows(2).all(|w| w[0].prr > w[1].prr));
    assert!(reports.windows(2).all(|w| w[0].drr > w[1].drr));
    let table = fs::read_to_string(out(&cfg).join("sweep_cpe.tsv")).unwrap();
    assert_eq!(table.lines().count(), 2 + 3);

    // the free function reuses everything already on disk
    let again = sweep_k(&cfg, &[5, 10, 30]).unwrap();
    assert_eq!(again, reports);
    assert!(sweep_k(&cfg, &[]).is_err());
}

#[test]
fn sweep_accuracy_grows_with_dictionary_size() {
    // K = 2 keeps a fraction of the planted words, K = 10 keeps most of them
    let ks = [2, 5, 10];
    let mut mean = [0.0; 3];
    for seed in 1..=5 {
        let (_dir, mut cfg) = setup(&small_spec(seed));
        cfg.seed = seed;
        for (m, r) in mean.iter_mut().zip(sweep_k(&cfg, &ks).unwrap()) {
            *m += r.reduced_acc / 5.0;
        }
    }
    // allowance for seed noise, two test documents' worth per seed
    let noise = 2.0 / 80.0;
    assert!(mean.windows(2).all(|w| w[1] >= w[0] - noise), "{mean:?}");
    assert!(mean[2] > mean[0], "{mean:?}");
}

#[test]
fn failures_name_their_stage() {
    let (dir, cfg) = setup(&small_spec(6));
    let mut missing = cfg.clone();
    missing.train_path = dir.path().join("nope.csv");
    missing.out_dir = Some(dir.path().join("missing"));
    let err = run_experiment(&missing).unwrap_err();
    assert_eq!(err.stage(), Some("ingest"), "{err}");
    assert!(err.to_string().contains("ingest"));

    let mut too_many = cfg.clone();
    too_many.selection = Selection::TopK(10_000);
    let err = run_experiment(&too_many).unwrap_err();
    assert_eq!(err.stage(), Some("screen"), "{err}");

    // earlier stages were persisted before the failure
    assert!(out(&cfg).join("benchmark.ckpt").exists());
    assert!(out(&cfg).join("scores_cpe.tsv").exists());
}

#[test]
fn partial_files_are_ignored_and_excluded() {
    let (_dir, cfg) = setup(&small_spec(7));
    fs::create_dir_all(out(&cfg)).unwrap();
    fs::write(out(&cfg).join("benchmark.ckpt.partial"), b"truncated").unwrap();
    run_experiment(&cfg).unwrap();
    let manifest = fs::read_to_string(out(&cfg).join("manifest.txt")).unwrap();
    assert!(!manifest.contains(".partial"));
    for line in manifest.lines() {
        let (digest, name) = line.split_once("  ").unwrap();
        assert_eq!(digest, hex::encode(Sha256::digest(read(out(&cfg).join(name)))), "{name}");
    }
    for name in ["dictionary.txt", "benchmark.ckpt", "scores_cpe.tsv", "cpe_top20/reduced.ckpt", "cpe_top20/report.tsv"] {
        assert!(manifest.lines().any(|l| l.ends_with(&format!("  {name}"))), "{name} missing from manifest");
    }
}

#[test]
fn output_directory_is_tied_to_its_config() {
    let (_dir, cfg) = setup(&small_spec(8));
    Experiment::open(cfg.clone()).unwrap();
    let mut other = cfg.clone();
    other.seed += 1;
    assert!(matches!(Experiment::open(other), Err(Error::Config(_))));
    // selection is not part of the base settings
    let mut other = cfg;
    other.selection = Selection::Threshold(1e-4);
    other.scorer = Scorer::TfIdf;
    Experiment::open(other).unwrap();
}

#[test]
fn alternative_scorers_and_splits() {
    let (_dir, mut cfg) = setup(&small_spec(9));
    cfg.score_split = Split::Validation;
    cfg.trr_split = Split::Test;
    for (scorer, selection) in [
        (Scorer::TfIdf, Selection::TopK(15)),
        (Scorer::TStat, Selection::Threshold(0.05)),
        (Scorer::Cpe, Selection::Threshold(1e-6)),
    ] {
        cfg.scorer = scorer;
        cfg.selection = selection;
        let report = run_experiment(&cfg).unwrap();
        assert_eq!(report.scorer, scorer);
        assert!((0.0..=1.0).contains(&report.prr) && (0.0..=1.0).contains(&report.trr));
        let dir = out(&cfg).join(selection.dir_name(scorer));
        assert!(dir.join("report.txt").exists(), "{}", dir.display());
    }
    let n_val = (120.0f64 * 0.1).floor() as usize * 2;
    let full = Dictionary::read(&out(&cfg).join("dictionary.txt")).unwrap();
    assert_eq!(ScoreTable::read(&out(&cfg).join("scores_cpe.tsv"), &full).unwrap().n_docs(), n_val);
}

#[test]
fn noise_free_corpus_is_learned_perfectly() {
    let spec = SynthSpec {
        noise_rate: 0.0,
        ..small_spec(10)
    };
    let (_dir, mut cfg) = setup(&spec);
    cfg.train.max_epochs = 30;
    cfg.train.patience = 30;
    cfg.selection = Selection::TopK(10);
    let report = run_experiment(&cfg).unwrap();
    assert_eq!(report.benchmark_acc, 1.0);
    // without noise only the 10 planted words exist
    assert_eq!(report.drr, 0.0);
}

#[test]
fn config_file_round_trip() {
    let (dir, cfg) = setup(&small_spec(11));
    let text = String::from(
        "dataset = toy\ntrain_path = data/train.csv\ntest_path = data/test.csv\nout_dir = out\nmodel = meanpool\nseq_len = 12\nembed_dim = 8\nbatch_size = 32\nmax_epochs = 8\npatience = 3\ntop_k = 20\nseed = 3\n"
    );
    let path = dir.path().join("exp.cfg");
    fs::write(&path, text).unwrap();
    let loaded = ExperimentConfig::load(&path).unwrap();
    assert_eq!(loaded, cfg);
}
