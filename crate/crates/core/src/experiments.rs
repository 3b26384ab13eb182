//! Synthetic datasets and the labeled-fraction sweep.

use std::collections::BTreeMap;
use std::path::Path;

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::compile::{compile, CompileOptions};
use crate::data::{Dataset, IdxImages, UNLABELED};
use crate::error::{Error, Result};
use crate::heads::HeadKind;
use crate::nn::{train, TrainConfig};
use crate::rules::RuleAst;
use crate::scalar::Scalar;
use crate::schema::{Concept, ConceptSchema};

pub const TOY_IMPLICATION_RULE: &str = "c1 = 2 AND c2 = 2 -> y = 2\n";
pub const TOY_IFF_RULE: &str = "y = 2 <-> (c1 = 2 AND c2 = 2)\n";

pub fn toy_schema() -> ConceptSchema {
    ConceptSchema::new(vec![
        Concept::new("y", &["1", "2"]),
        Concept::new("c1", &["1", "2"]),
        Concept::new("c2", &["1", "2", "3"]),
        Concept::new("c3", &["1", "2", "3"]),
    ])
    .expect("static schema")
}

/// Heights .25/.5/.25, half-open `[lo, hi)`.
fn stripe(v: f64) -> i32 {
    if v < 0.25 {
        1
    } else if v < 0.75 {
        2
    } else {
        3
    }
}

/// Labels `(y, c1, c2, c3)` of a toy point.
pub fn toy_labels(x1: f64, x2: f64) -> [i32; 4] {
    let c1 = if x1 > 0.5 { 2 } else { 1 };
    let c2 = stripe(x2);
    let c3 = stripe(x1.max(x2));
    let y = if c1 == 2 && c2 == 2 { 2 } else { 1 };
    [y, c1, c2, c3]
}

/// `n` points uniform in the unit square, fully labeled.
pub fn gen_toy(n: usize, seed: u64) -> Dataset<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut features = Array2::zeros((n, 2));
    let mut labels = Array2::zeros((n, 4));
    for r in 0..n {
        let (x1, x2): (f64, f64) = (rng.gen(), rng.gen());
        features[[r, 0]] = x1;
        features[[r, 1]] = x2;
        for (j, l) in toy_labels(x1, x2).into_iter().enumerate() {
            labels[[r, j]] = l;
        }
    }
    Dataset { features, labels }
}

pub const DIGITS_RULE: &str =
    "y = 1 <-> ((digit IN {1, 3, 5, 7, 9} AND color = blue) OR (digit IN {0, 2, 4, 6, 8} AND color = white))\n";

/// Digit 0 is the tenth outcome.
pub fn digits_schema() -> ConceptSchema {
    ConceptSchema::new(vec![
        Concept::new("y", &["1", "2"]),
        Concept::new("digit", &["1", "2", "3", "4", "5", "6", "7", "8", "9", "0"]),
        Concept::new("color", &["white", "blue"]),
    ])
    .expect("static schema")
}

pub fn digit_outcome(digit: u8) -> i32 {
    if digit == 0 {
        10
    } else {
        digit as i32
    }
}

pub fn digits_target(digit: u8, blue: bool) -> i32 {
    if (digit % 2 == 1) == blue {
        1
    } else {
        2
    }
}

/// Picks `n` random images and colors each white or blue with equal odds.
///
/// Features are two 28×28 channels scaled to `[0, 1]`: white digits appear
/// in both, blue digits only in the second.
pub fn gen_colored_digits(images: &IdxImages, labels: &[u8], n: usize, seed: u64) -> Result<Dataset<f64>> {
    if labels.len() != images.count {
        return Err(Error::Dataset(format!(
            "{} images but {} labels",
            images.count,
            labels.len()
        )));
    }
    if n > images.count {
        return Err(Error::Dataset(format!("asked for {n} images, file has {}", images.count)));
    }
    if let Some(bad) = labels.iter().find(|&&l| l > 9) {
        return Err(Error::Dataset(format!("digit label {bad} out of range")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..images.count).collect();
    order.shuffle(&mut rng);
    let size = images.rows * images.cols;
    let mut features = Array2::zeros((n, 2 * size));
    let mut out = Array2::zeros((n, 3));
    for (r, &k) in order[..n].iter().enumerate() {
        let blue = rng.gen_bool(0.5);
        for (j, &px) in images.image(k).iter().enumerate() {
            let v = px as f64 / 255.0;
            if !blue {
                features[[r, j]] = v;
            }
            features[[r, size + j]] = v;
        }
        let digit = labels[k];
        out[[r, 0]] = digits_target(digit, blue);
        out[[r, 1]] = digit_outcome(digit);
        out[[r, 2]] = if blue { 2 } else { 1 };
    }
    Ok(Dataset { features, labels: out })
}

/// `⌈fraction · n⌉`, tolerant of rounding in the product.
fn kept_count(fraction: f64, n: usize) -> usize {
    ((fraction * n as f64) - 1e-9).ceil().clamp(0.0, n as f64) as usize
}

/// Keeps `⌈fractions[i] · n⌉` randomly chosen labels of concept `i`.
pub fn mask_labels<S: Scalar>(data: &Dataset<S>, fractions: &[f64], seed: u64) -> Result<Dataset<S>> {
    if fractions.len() != data.concept_count() {
        return Err(Error::Config(format!(
            "{} fractions for {} concepts",
            fractions.len(),
            data.concept_count()
        )));
    }
    if let Some(f) = fractions.iter().find(|f| !(0.0..=1.0).contains(*f)) {
        return Err(Error::Config(format!("labeled fraction {f} outside [0, 1]")));
    }
    let n = data.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = data.clone();
    for (i, &f) in fractions.iter().enumerate() {
        let mut rows: Vec<usize> = (0..n).collect();
        rows.shuffle(&mut rng);
        for &r in &rows[kept_count(f, n)..] {
            out.labels[[r, i]] = UNLABELED;
        }
    }
    Ok(out)
}

/// Same fraction for every concept.
pub fn mask_all_labels<S: Scalar>(data: &Dataset<S>, fraction: f64, seed: u64) -> Result<Dataset<S>> {
    mask_labels(data, &vec![fraction; data.concept_count()], seed)
}

/// Seeded split, stratified by the labels of `stratify` (unlabeled rows
/// form their own stratum). Returns `(train, test)`.
pub fn train_test_split<S: Scalar>(
    data: &Dataset<S>,
    test_fraction: f64,
    stratify: Option<usize>,
    seed: u64,
) -> (Dataset<S>, Dataset<S>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut strata: BTreeMap<i32, Vec<usize>> = BTreeMap::new();
    for r in 0..data.len() {
        let key = stratify.map_or(0, |c| data.labels[[r, c]]);
        strata.entry(key).or_default().push(r);
    }
    let mut train_rows = Vec::new();
    let mut test_rows = Vec::new();
    for rows in strata.values_mut() {
        rows.shuffle(&mut rng);
        let k = (test_fraction * rows.len() as f64).round() as usize;
        test_rows.extend_from_slice(&rows[..k]);
        train_rows.extend_from_slice(&rows[k..]);
    }
    train_rows.sort_unstable();
    test_rows.sort_unstable();
    (data.subset(&train_rows), data.subset(&test_rows))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepHead {
    /// Admissible-state head with the rule.
    As,
    /// Admissible-state head without rules: a full joint distribution.
    JointNoRules,
    Independent,
}

impl SweepHead {
    pub const ALL: [SweepHead; 3] = [SweepHead::As, SweepHead::JointNoRules, SweepHead::Independent];

    pub fn name(&self) -> &'static str {
        match self {
            SweepHead::As => "as",
            SweepHead::JointNoRules => "joint",
            SweepHead::Independent => "independent",
        }
    }
}

impl std::str::FromStr for SweepHead {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "as" => Ok(SweepHead::As),
            "joint" | "joint_no_rules" => Ok(SweepHead::JointNoRules),
            "independent" => Ok(SweepHead::Independent),
            other => Err(format!("unknown sweep head `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    pub fractions: Vec<f64>,
    pub seeds: Vec<u64>,
    pub heads: Vec<SweepHead>,
    pub train: TrainConfig,
    pub test_fraction: f64,
    /// Concept whose metrics are reported.
    pub concept: usize,
    /// Worker threads; 0 uses rayon's default.
    pub jobs: usize,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            fractions: vec![0.01, 0.05, 0.1, 0.5],
            seeds: (0..5).collect(),
            heads: SweepHead::ALL.to_vec(),
            train: TrainConfig {
                hidden: vec![128],
                epochs: 20,
                ..TrainConfig::default()
            },
            test_fraction: 0.2,
            concept: 0,
            jobs: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub head: String,
    pub fraction: f64,
    pub seed: u64,
    pub concept: String,
    pub f1: f64,
    pub accuracy: f64,
}

/// Trains every (head, fraction, seed) combination and scores the held-out
/// split. Only training labels are masked.
///
/// Rows come back ordered by head, fraction, then seed, independent of the
/// number of worker threads.
pub fn run_sweep<S: Scalar>(
    schema: &ConceptSchema,
    rule: &RuleAst,
    data: &Dataset<S>,
    config: &SweepConfig,
) -> Result<Vec<SweepRow>> {
    if config.concept >= schema.len() {
        return Err(Error::Config(format!("report concept {} out of range", config.concept)));
    }
    let mut heads = Vec::new();
    for &h in &config.heads {
        let compiled = match h {
            SweepHead::As => compile(schema, rule, CompileOptions::with_head(HeadKind::AdmissibleState))?,
            SweepHead::JointNoRules => compile(
                schema,
                &RuleAst::ConstTrue,
                CompileOptions::with_head(HeadKind::AdmissibleState),
            )?,
            SweepHead::Independent => compile(schema, rule, CompileOptions::with_head(HeadKind::Independent))?,
        };
        heads.push((h, compiled.head_in::<S>()?));
    }

    let runs: Vec<(usize, f64, u64)> = (0..heads.len())
        .flat_map(|h| {
            config
                .fractions
                .iter()
                .flat_map(move |&f| config.seeds.iter().map(move |&s| (h, f, s)))
        })
        .collect();

    let run_one = |&(h, fraction, seed): &(usize, f64, u64)| -> Result<SweepRow> {
        let (name, head) = &heads[h];
        let (train_set, test_set) = train_test_split(data, config.test_fraction, Some(0), seed);
        let train_set = mask_all_labels(&train_set, fraction, seed.wrapping_add(1))?;
        let tc = TrainConfig {
            seed,
            ..config.train.clone()
        };
        let model = train(&tc, &train_set, head.clone())?.model;
        let metrics = model
            .evaluate(&test_set)
            .into_iter()
            .find(|m| m.concept == config.concept)
            .ok_or_else(|| Error::Dataset("no labeled test entries for the reported concept".into()))?;
        log::info!(
            "sweep {} fraction {fraction} seed {seed}: f1 {:.4}",
            name.name(),
            metrics.f1
        );
        Ok(SweepRow {
            head: name.name().to_string(),
            fraction,
            seed,
            concept: metrics.name,
            f1: metrics.f1,
            accuracy: metrics.accuracy,
        })
    };

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.jobs)
        .build()
        .map_err(|e| Error::Config(e.to_string()))?;
    pool.install(|| runs.par_iter().map(run_one).collect())
}

pub fn write_sweep_csv(path: impl AsRef<Path>, rows: &[SweepRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_sweep_csv(path: impl AsRef<Path>) -> Result<Vec<SweepRow>> {
    let mut r = csv::Reader::from_path(path)?;
    Ok(r.deserialize().collect::<std::result::Result<_, _>>()?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepMean {
    pub head: String,
    pub fraction: f64,
    pub runs: usize,
    pub mean_f1: f64,
    pub mean_accuracy: f64,
}

/// Mean F1 and accuracy per (head, fraction), in first-appearance order.
pub fn aggregate_sweep(rows: &[SweepRow]) -> Vec<SweepMean> {
    let mut out: Vec<SweepMean> = Vec::new();
    for r in rows {
        match out.iter_mut().find(|m| m.head == r.head && m.fraction == r.fraction) {
            Some(m) => {
                m.runs += 1;
                m.mean_f1 += r.f1;
                m.mean_accuracy += r.accuracy;
            }
            None => out.push(SweepMean {
                head: r.head.clone(),
                fraction: r.fraction,
                runs: 1,
                mean_f1: r.f1,
                mean_accuracy: r.accuracy,
            }),
        }
    }
    for m in &mut out {
        m.mean_f1 /= m.runs as f64;
        m.mean_accuracy /= m.runs as f64;
    }
    out
}
