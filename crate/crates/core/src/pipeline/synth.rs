//! Planted-keyword corpora with known ground-truth importance.

use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::corpus::write_labeled_csv;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct SynthSpec {
    pub classes: usize,
    pub docs_per_class: usize,
    pub test_docs_per_class: usize,
    pub vocab_size: usize,
    pub planted_per_class: usize,
    pub doc_len: usize,
    /// Probability that a token is drawn from the shared noise words.
    pub noise_rate: f64,
    pub seed: u64,
}

impl Default for SynthSpec {
    /// The standard two-class fixture.
    fn default() -> Self {
        Self {
            classes: 2,
            docs_per_class: 1000,
            test_docs_per_class: 250,
            vocab_size: 500,
            planted_per_class: 10,
            doc_len: 30,
            noise_rate: 0.5,
            seed: 0,
        }
    }
}

/// One CSV row: label, title, description.
pub type Row = (u32, String, String);

#[derive(Debug, Clone, PartialEq)]
pub struct SynthDataset {
    pub train: Vec<Row>,
    pub test: Vec<Row>,
    /// Planted words per class, class 1 first.
    pub planted: Vec<Vec<String>>,
}

impl SynthDataset {
    pub fn planted_words(&self) -> impl Iterator<Item = &str> {
        self.planted.iter().flatten().map(String::as_str)
    }
}

pub fn word(i: usize) -> String {
    format!("w{i:04}")
}

pub fn make_synthetic(spec: &SynthSpec) -> Result<SynthDataset> {
    let bad = |m: String| Err(Error::InvalidArgument(m));
    if spec.classes < 2 {
        return bad("need at least two classes".into());
    }
    if spec.planted_per_class == 0 || spec.doc_len == 0 || spec.docs_per_class == 0 {
        return bad("planted words, document length and documents per class must be positive".into());
    }
    if spec.planted_per_class * spec.classes >= spec.vocab_size {
        return bad(format!(
            "{} planted words per class over {} classes leave no noise words in a vocabulary of {}",
            spec.planted_per_class, spec.classes, spec.vocab_size
        ));
    }
    if !(0.0..=1.0).contains(&spec.noise_rate) {
        return bad(format!("noise rate {} outside [0, 1]", spec.noise_rate));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut order: Vec<usize> = (0..spec.vocab_size).collect();
    order.shuffle(&mut rng);
    let (planted_idx, noise_idx) = order.split_at(spec.planted_per_class * spec.classes);
    let planted: Vec<Vec<String>> = planted_idx
        .chunks(spec.planted_per_class)
        .map(|c| c.iter().map(|&i| word(i)).collect())
        .collect();
    let noise: Vec<String> = noise_idx.iter().map(|&i| word(i)).collect();

    let draw = |class: usize, rng: &mut ChaCha8Rng| -> Row {
        let tokens: Vec<&str> = (0..spec.doc_len)
            .map(|_| {
                if rng.gen::<f64>() < spec.noise_rate {
                    noise[rng.gen_range(0..noise.len())].as_str()
                } else {
                    let own = &planted[class];
                    own[rng.gen_range(0..own.len())].as_str()
                }
            })
            .collect();
        let cut = tokens.len().min(3);
        (class as u32 + 1, tokens[..cut].join(" "), tokens[cut..].join(" "))
    };
    let split = |per_class: usize, rng: &mut ChaCha8Rng| {
        let mut rows = Vec::with_capacity(per_class * spec.classes);
        for _ in 0..per_class {
            for class in 0..spec.classes {
                rows.push(draw(class, rng));
            }
        }
        rows
    };
    let train = split(spec.docs_per_class, &mut rng);
    let test = split(spec.test_docs_per_class, &mut rng);
    Ok(SynthDataset { train, test, planted })
}

/// Writes `train.csv`, `test.csv` and `planted.txt` (one class per line).
pub fn write_synthetic(dir: &Path, data: &SynthDataset) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_labeled_csv(&dir.join("train.csv"), &data.train)?;
    write_labeled_csv(&dir.join("test.csv"), &data.test)?;
    let planted: String = data.planted.iter().map(|ws| ws.join(" ") + "\n").collect();
    let path = dir.join("planted.txt");
    fs::write(&path, planted).map_err(|e| Error::io(&path, e))
}
