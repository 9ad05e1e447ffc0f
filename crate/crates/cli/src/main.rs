use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use dictscreen::metrics::{percent, reports_to_table};
use dictscreen::pipeline::{make_synthetic, write_synthetic, Experiment, ExperimentConfig, Selection, SynthSpec};
use dictscreen::screening::Scorer;

#[derive(Parser)]
#[command(name = "dictscreen", version, about = "Dictionary screening for text classifiers")]
struct Cli {
    /// Experiment config file (`key = value` lines).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory; overrides `out_dir` from the config.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Random seed; overrides `seed` from the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone, Default)]
struct SelectArgs {
    /// Scorer to rank keywords with (cpe, tfidf, tstat).
    #[arg(long)]
    scorer: Option<Scorer>,
    /// Keep the K most important keywords.
    #[arg(long, conflicts_with = "threshold")]
    top_k: Option<usize>,
    /// Keep keywords whose score passes this threshold.
    #[arg(long)]
    threshold: Option<f64>,
}

#[derive(Subcommand)]
enum Command {
    /// Build the dictionary and encode both splits.
    Ingest,
    /// Train the benchmark model.
    Train,
    /// Score every keyword with the benchmark model.
    Score(SelectArgs),
    /// Select the screened dictionary.
    Screen(SelectArgs),
    /// Retrain on the screened dictionary.
    Retrain(SelectArgs),
    /// Evaluate both models and write the comparison report.
    Report(SelectArgs),
    /// Run every stage.
    RunAll(SelectArgs),
    /// Report for several dictionary sizes, scoring once.
    Sweep {
        #[arg(long)]
        scorer: Option<Scorer>,
        /// Comma-separated dictionary sizes; defaults to `sweep_k`.
        #[arg(long, value_delimiter = ',')]
        k: Vec<usize>,
    },
    /// Write a planted-keyword dataset (train.csv, test.csv, planted.txt).
    Synth {
        #[arg(long, default_value_t = 2)]
        classes: usize,
        #[arg(long, default_value_t = 1000)]
        docs_per_class: usize,
        #[arg(long, default_value_t = 250)]
        test_docs_per_class: usize,
        #[arg(long, default_value_t = 500)]
        vocab: usize,
        #[arg(long, default_value_t = 10)]
        planted: usize,
        #[arg(long, default_value_t = 30)]
        doc_len: usize,
        #[arg(long, default_value_t = 0.5)]
        noise: f64,
    },
}

fn load_config(cli: &Cli, select: &SelectArgs) -> Result<ExperimentConfig> {
    let path = cli.config.as_ref().context("--config is required for this command")?;
    let mut cfg = ExperimentConfig::load(path).with_context(|| format!("reading {}", path.display()))?;
    if let Some(out) = &cli.out {
        cfg.out_dir = Some(out.clone());
    }
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(scorer) = select.scorer {
        cfg.scorer = scorer;
    }
    match (select.top_k, select.threshold) {
        (Some(k), _) => cfg.selection = Selection::TopK(k),
        (None, Some(t)) => cfg.selection = Selection::Threshold(t),
        (None, None) => {}
    }
    Ok(cfg)
}

fn run(cli: Cli) -> Result<()> {
    let select = match &cli.command {
        Command::Score(s) | Command::Screen(s) | Command::Retrain(s) | Command::Report(s) | Command::RunAll(s) => s.clone(),
        Command::Sweep { scorer, .. } => SelectArgs {
            scorer: *scorer,
            ..Default::default()
        },
        _ => SelectArgs::default(),
    };

    if let Command::Synth {
        classes,
        docs_per_class,
        test_docs_per_class,
        vocab,
        planted,
        doc_len,
        noise,
    } = cli.command
    {
        let out = cli.out.context("synth needs --out")?;
        let spec = SynthSpec {
            classes,
            docs_per_class,
            test_docs_per_class,
            vocab_size: vocab,
            planted_per_class: planted,
            doc_len,
            noise_rate: noise,
            seed: cli.seed.unwrap_or(0),
        };
        write_synthetic(&out, &make_synthetic(&spec)?)?;
        println!("wrote {}", out.display());
        return Ok(());
    }

    let cfg = load_config(&cli, &select)?;
    let sel = cfg.selection;
    let mut exp = Experiment::open(cfg)?;
    match &cli.command {
        Command::Ingest => {
            exp.ingest()?;
            println!("dictionary and encodings in {}", exp.out_dir().display());
        }
        Command::Train => {
            exp.train_benchmark()?;
            let log = exp.benchmark_log().ok();
            if let Some(best) = log.as_ref().and_then(|l| l.best_epoch()) {
                println!("benchmark: best epoch {} val acc {}%", best.epoch, percent(best.val_acc));
            }
        }
        Command::Score(_) => {
            let n = exp.score()?.len();
            println!("scored {n} keywords");
        }
        Command::Screen(_) => {
            let n = exp.screen(sel)?.num_keywords();
            println!("kept {n} keywords");
        }
        Command::Retrain(_) => {
            exp.retrain(sel)?;
            println!("reduced model trained");
        }
        Command::Report(_) | Command::RunAll(_) => {
            let report = exp.report(sel)?;
            print!("{}", reports_to_table(std::slice::from_ref(&report)));
        }
        Command::Sweep { k, .. } => {
            let ks = if k.is_empty() { exp.config().sweep_k.clone() } else { k.clone() };
            if ks.is_empty() {
                bail!("no dictionary sizes: pass --k or set sweep_k");
            }
            let reports = exp.sweep(&ks)?;
            print!("{}", reports_to_table(&reports));
        }
        Command::Synth { .. } => unreachable!(),
    }
    exp.write_manifest()?;
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
