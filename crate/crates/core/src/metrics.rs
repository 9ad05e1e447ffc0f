//! Reduction ratios, accuracy deltas, and the comparison report.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::corpus::{mean_effective_length, EncodedDocument};
use crate::error::{Error, Result};
use crate::models::{ModelConfig, ModelKind};
use crate::screening::Scorer;

/// Parameter reduction ratio `1 - params(reduced) / params(full)`, bias
/// terms excluded. The configurations may differ only in dictionary size.
pub fn prr(full: &ModelConfig, reduced: &ModelConfig) -> Result<f64> {
    let mut a = full.with_num_keywords(0);
    let mut b = reduced.with_num_keywords(0);
    a.dropout = 0.0;
    b.dropout = 0.0;
    if a != b {
        return Err(Error::InvalidArgument("configurations differ beyond dictionary size".into()));
    }
    let before = full.count_params(false) as f64;
    Ok(1.0 - reduced.count_params(false) as f64 / before)
}

/// Dictionary reduction ratio over real keywords.
pub fn drr(full: usize, reduced: usize) -> Result<f64> {
    if full == 0 {
        return Err(Error::InvalidArgument("full dictionary has no keywords".into()));
    }
    if reduced > full {
        return Err(Error::InvalidArgument(format!("reduced dictionary ({reduced}) larger than full ({full})")));
    }
    Ok(1.0 - reduced as f64 / full as f64)
}

/// Reduction in mean effective (non-pad) sequence length.
pub fn trr(before: &[EncodedDocument], after: &[EncodedDocument]) -> Result<f64> {
    if before.len() != after.len() {
        return Err(Error::InvalidArgument(format!(
            "corpora differ in size ({} vs {})",
            before.len(),
            after.len()
        )));
    }
    ratio_of_means(mean_effective_length(before), mean_effective_length(after))
}

fn ratio_of_means(before: f64, after: f64) -> Result<f64> {
    if before == 0.0 {
        return Err(Error::InvalidArgument("mean sequence length before screening is zero".into()));
    }
    Ok(1.0 - after / before)
}

/// What one trained model contributes to a report.
#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub config: ModelConfig,
    pub test_accuracy: f64,
    /// Identifies the held-out documents (count and labels).
    pub test_fingerprint: String,
    /// Mean effective length of the corpus Trr is measured on.
    pub mean_length: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompressionReport {
    pub model_kind: ModelKind,
    pub dataset: String,
    pub scorer: Scorer,
    /// Keywords kept in the screened dictionary.
    pub k_kept: usize,
    pub config_digest: String,
    pub benchmark_acc: f64,
    pub reduced_acc: f64,
    pub delta_acc: f64,
    pub prr: f64,
    pub drr: f64,
    pub trr: f64,
}

pub fn build_report(
    benchmark: &RunSummary,
    reduced: &RunSummary,
    dataset: &str,
    scorer: Scorer,
    config_digest: &str,
) -> Result<CompressionReport> {
    if benchmark.test_fingerprint != reduced.test_fingerprint {
        return Err(Error::InvalidArgument("benchmark and reduced runs were evaluated on different test sets".into()));
    }
    Ok(CompressionReport {
        model_kind: benchmark.config.kind,
        dataset: dataset.to_owned(),
        scorer,
        k_kept: reduced.config.num_keywords,
        config_digest: config_digest.to_owned(),
        benchmark_acc: benchmark.test_accuracy,
        reduced_acc: reduced.test_accuracy,
        delta_acc: benchmark.test_accuracy - reduced.test_accuracy,
        prr: prr(&benchmark.config, &reduced.config)?,
        drr: drr(benchmark.config.num_keywords, reduced.config.num_keywords)?,
        trr: ratio_of_means(benchmark.mean_length, reduced.mean_length)?,
    })
}

/// Column names of the machine-readable report.
pub const REPORT_COLUMNS: [&str; 10] =
    ["model", "dataset", "benchmark_acc", "reduced_acc", "delta_acc", "prr", "drr", "trr", "scorer", "K"];

/// Percentage with two decimals, without a negative zero.
pub fn percent(v: f64) -> String {
    let s = format!("{:.2}", v * 100.0);
    if s == "-0.00" {
        "0.00".to_owned()
    } else {
        s
    }
}

/// Tab-separated reports at full precision. All rows must share a config
/// digest, which is written as a leading `#config_digest=` line.
pub fn reports_to_tsv(reports: &[CompressionReport]) -> Result<String> {
    let digest = reports.first().map_or("", |r| r.config_digest.as_str());
    if reports.iter().any(|r| r.config_digest != digest) {
        return Err(Error::InvalidArgument("reports in one file must share a config digest".into()));
    }
    let mut out = String::new();
    writeln!(out, "#config_digest={digest}").unwrap();
    writeln!(out, "{}", REPORT_COLUMNS.join("\t")).unwrap();
    for r in reports {
        writeln!(
            out,
            "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
            r.model_kind, r.dataset, r.benchmark_acc, r.reduced_acc, r.delta_acc, r.prr, r.drr, r.trr, r.scorer, r.k_kept
        )
        .unwrap();
    }
    Ok(out)
}

pub fn parse_reports(text: &str) -> Result<Vec<CompressionReport>> {
    let err = |line: usize, msg: &str| Error::parse("report", line, msg.to_owned());
    let mut lines = text.lines();
    let digest = lines
        .next()
        .and_then(|l| l.strip_prefix("#config_digest="))
        .ok_or_else(|| err(1, "missing #config_digest line"))?;
    if lines.next() != Some(REPORT_COLUMNS.join("\t").as_str()) {
        return Err(err(2, "unexpected column header"));
    }
    let mut out = Vec::new();
    for (i, line) in lines.enumerate() {
        let n = i + 3;
        let f: Vec<&str> = line.split('\t').collect();
        if f.len() != REPORT_COLUMNS.len() {
            return Err(err(n, "wrong number of columns"));
        }
        let num = |s: &str| s.parse::<f64>().map_err(|_| err(n, "bad number"));
        let r = CompressionReport {
            model_kind: f[0].parse()?,
            dataset: f[1].to_owned(),
            benchmark_acc: num(f[2])?,
            reduced_acc: num(f[3])?,
            delta_acc: num(f[4])?,
            prr: num(f[5])?,
            drr: num(f[6])?,
            trr: num(f[7])?,
            scorer: f[8].parse()?,
            k_kept: f[9].parse().map_err(|_| err(n, "bad K"))?,
            config_digest: digest.to_owned(),
        };
        if r.delta_acc != r.benchmark_acc - r.reduced_acc {
            return Err(err(n, "delta_acc is not benchmark_acc - reduced_acc"));
        }
        out.push(r);
    }
    Ok(out)
}

/// Aligned plain-text table, values in percent with two decimals.
pub fn reports_to_table(reports: &[CompressionReport]) -> String {
    let header = ["Model", "Dataset", "Benchmark Acc", "Reduced Acc", "dAcc", "Prr", "Drr", "Trr", "Scorer", "K"];
    let rows: Vec<Vec<String>> = reports
        .iter()
        .map(|r| {
            vec![
                r.model_kind.to_string(),
                r.dataset.clone(),
                percent(r.benchmark_acc),
                percent(r.reduced_acc),
                percent(r.delta_acc),
                percent(r.prr),
                percent(r.drr),
                percent(r.trr),
                r.scorer.to_string(),
                r.k_kept.to_string(),
            ]
        })
        .collect();
    let mut widths: Vec<usize> = header.iter().map(|h| h.len()).collect();
    for row in &rows {
        for (w, cell) in widths.iter_mut().zip(row) {
            *w = (*w).max(cell.chars().count());
        }
    }
    let mut out = String::new();
    let line = |cells: &[String], out: &mut String| {
        let parts: Vec<String> = cells
            .iter()
            .zip(&widths)
            .enumerate()
            .map(|(i, (c, &w))| if i < 2 || i == 8 { format!("{c:<w$}") } else { format!("{c:>w$}") })
            .collect();
        writeln!(out, "{}", parts.join("  ").trim_end()).unwrap();
    };
    line(&header.map(String::from), &mut out);
    let rule: Vec<String> = widths.iter().map(|&w| "-".repeat(w)).collect();
    writeln!(out, "{}", rule.join("  ")).unwrap();
    for row in &rows {
        line(row, &mut out);
    }
    out.push_str("All values except K in %.\n");
    out
}

pub fn write_reports(dir: &Path, stem: &str, reports: &[CompressionReport]) -> Result<()> {
    let tsv = dir.join(format!("{stem}.tsv"));
    fs::write(&tsv, reports_to_tsv(reports)?).map_err(|e| Error::io(&tsv, e))?;
    let txt = dir.join(format!("{stem}.txt"));
    fs::write(&txt, reports_to_table(reports)).map_err(|e| Error::io(&txt, e))
}
