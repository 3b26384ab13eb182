//! `rulehead` command-line front end.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use rulehead::compile::{compile_text, CompileOptions, Compiled};
use rulehead::data::{read_idx_images, read_idx_labels, Dataset};
use rulehead::experiments::{
    aggregate_sweep, digits_schema, gen_colored_digits, gen_toy, run_sweep, toy_schema,
    write_sweep_csv, SweepConfig, SweepHead, DIGITS_RULE, TOY_IFF_RULE, TOY_IMPLICATION_RULE,
};
use rulehead::metrics::ConceptMetrics;
use rulehead::nn::{print_metrics, train, write_training_log, Checkpoint, Model, TrainConfig};
use rulehead::rules::parse_rules;
use rulehead::{ConceptSchema, Error, HeadKind, Scalar};

#[derive(Parser)]
#[command(name = "rulehead", version, about = "Compile expert rules into constrained output heads")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Compile a schema and rules into head artifacts.
    Compile(CompileArgs),
    /// Train a network with a compiled head.
    Train(TrainArgs),
    /// Per-concept accuracy and F1 of a trained checkpoint.
    Eval(EvalArgs),
    /// Labeled-fraction sweep over the as, joint and independent heads.
    Sweep(SweepArgs),
    /// Write the two-feature toy dataset with its schema and rules.
    GenToy(GenToyArgs),
    /// Write the colored-digits dataset from IDX files.
    GenDigits(GenDigitsArgs),
}

#[derive(Clone, Copy, Default, ValueEnum)]
enum Precision {
    F32,
    #[default]
    F64,
}

#[derive(Args)]
struct CompileArgs {
    #[arg(long)]
    schema: PathBuf,
    #[arg(long)]
    rules: PathBuf,
    /// base, as, vertex, constraints or independent.
    #[arg(long, default_value = "as")]
    head: HeadKind,
    /// Merge outcomes the rules never distinguish.
    #[arg(long)]
    reduce: bool,
    /// Largest joint state space to enumerate.
    #[arg(long)]
    budget: Option<u64>,
    /// Largest CNF clause count.
    #[arg(long)]
    clause_budget: Option<usize>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct TrainArgs {
    /// Directory written by `compile`.
    #[arg(long)]
    artifacts: PathBuf,
    /// CSV with feature columns followed by one label column per concept.
    #[arg(long)]
    data: PathBuf,
    /// Training config JSON; defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_enum, default_value_t)]
    precision: Precision,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    artifacts: PathBuf,
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    data: PathBuf,
    /// Also write the metrics as CSV.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    /// Dataset CSV; needs --schema and --rules.
    #[arg(long, requires_all = ["schema", "rules"], conflicts_with_all = ["idx_images", "idx_labels"])]
    data: Option<PathBuf>,
    #[arg(long)]
    schema: Option<PathBuf>,
    #[arg(long)]
    rules: Option<PathBuf>,
    /// Build the colored-digits dataset from IDX files instead.
    #[arg(long, requires = "idx_labels")]
    idx_images: Option<PathBuf>,
    #[arg(long, requires = "idx_images")]
    idx_labels: Option<PathBuf>,
    /// Images sampled for the colored-digits dataset.
    #[arg(long, default_value_t = 5000)]
    samples: usize,
    /// Seed of the colored-digits sampling.
    #[arg(long, default_value_t = 0)]
    data_seed: u64,
    #[arg(long, value_delimiter = ',', default_values_t = [0.01, 0.05, 0.1, 0.5])]
    fractions: Vec<f64>,
    /// Runs seeds 0..N.
    #[arg(long, default_value_t = 5)]
    seeds: u64,
    #[arg(long, value_delimiter = ',', default_values_t = ["as".to_string(), "joint".into(), "independent".into()])]
    heads: Vec<String>,
    /// Training config JSON; its seed is replaced per run.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value_t = 0.2)]
    test_fraction: f64,
    /// Concept whose metrics are reported.
    #[arg(long, default_value_t = 0)]
    concept: usize,
    /// Worker threads; 0 uses all cores.
    #[arg(long, default_value_t = 0)]
    jobs: usize,
    #[arg(long, value_enum, default_value_t)]
    precision: Precision,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct GenToyArgs {
    #[arg(long, default_value_t = 1000)]
    n: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct GenDigitsArgs {
    #[arg(long)]
    images: PathBuf,
    #[arg(long)]
    labels: PathBuf,
    #[arg(long, default_value_t = 5000)]
    n: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("RULEHEAD_LOG", "warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let result = match cli.command {
        Command::Compile(a) => cmd_compile(a),
        Command::Train(a) => cmd_train(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Sweep(a) => cmd_sweep(a),
        Command::GenToy(a) => cmd_gen_toy(a),
        Command::GenDigits(a) => cmd_gen_digits(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::NonFiniteLoss { .. } => ExitCode::from(3),
                _ => ExitCode::from(2),
            }
        }
    }
}

fn cmd_compile(a: CompileArgs) -> Result<(), Error> {
    let schema = ConceptSchema::load(&a.schema)?;
    let rules = fs::read_to_string(&a.rules)?;
    let mut options = CompileOptions {
        head: a.head,
        reduce: a.reduce,
        ..CompileOptions::default()
    };
    if let Some(b) = a.budget {
        options.enumeration_budget = b;
    }
    if let Some(b) = a.clause_budget {
        options.clause_budget = b;
    }
    let compiled = compile_text(&schema, &rules, options)?;
    compiled.save(&a.out)?;
    log::info!("artifacts written to {}", a.out.display());
    println!("{}", serde_json::to_string_pretty(&compiled.report())?);
    Ok(())
}

fn cmd_train(a: TrainArgs) -> Result<(), Error> {
    let compiled = Compiled::load(&a.artifacts)?;
    let mut config = match &a.config {
        Some(p) => TrainConfig::load(p)?,
        None => TrainConfig::default(),
    };
    if let Some(seed) = a.seed {
        config.seed = seed;
    }
    fs::create_dir_all(&a.out)?;
    match a.precision {
        Precision::F32 => train_as::<f32>(&compiled, &config, &a.data, &a.out),
        Precision::F64 => train_as::<f64>(&compiled, &config, &a.data, &a.out),
    }
}

fn train_as<S: Scalar>(compiled: &Compiled, config: &TrainConfig, data: &Path, out: &Path) -> Result<(), Error> {
    let data = Dataset::<S>::load_csv(data, compiled.schema())?;
    let outcome = train(config, &data, compiled.head_in::<S>()?)?;
    outcome.model.checkpoint().save(out.join("checkpoint.json"))?;
    write_training_log(out.join("training_log.csv"), compiled.schema(), &outcome.log)?;
    log::info!("checkpoint and log written to {}", out.display());
    if let Some(last) = outcome.log.last() {
        println!("epochs {} final loss {:.6}", last.epoch, last.loss);
    }
    Ok(())
}

fn cmd_eval(a: EvalArgs) -> Result<(), Error> {
    let compiled = Compiled::load(&a.artifacts)?;
    let checkpoint = Checkpoint::load(&a.checkpoint)?;
    let model = Model::from_checkpoint(&checkpoint, compiled.head.clone())?;
    let data = Dataset::<f64>::load_csv(&a.data, compiled.schema())?;
    let input = model.network.layers[0].weights.nrows();
    if data.feature_dim() != input {
        return Err(Error::Dimension(format!(
            "dataset has {} features, checkpoint expects {input}",
            data.feature_dim()
        )));
    }
    let metrics = model.evaluate(&data);
    print_metrics(&mut std::io::stdout().lock(), &metrics)?;
    if let Some(path) = &a.out {
        write_metrics_csv(path, &metrics)?;
    }
    Ok(())
}

fn write_metrics_csv(path: &Path, metrics: &[ConceptMetrics]) -> Result<(), Error> {
    let mut w = csv::Writer::from_path(path)?;
    for m in metrics {
        w.serialize(m)?;
    }
    w.flush()?;
    Ok(())
}

fn cmd_sweep(a: SweepArgs) -> Result<(), Error> {
    let (schema, rules, data) = match (&a.data, &a.idx_images, &a.idx_labels) {
        (Some(data), _, _) => {
            let schema = ConceptSchema::load(a.schema.as_ref().expect("required by clap"))?;
            let rules = fs::read_to_string(a.rules.as_ref().expect("required by clap"))?;
            let data = Dataset::<f64>::load_csv(data, &schema)?;
            (schema, rules, data)
        }
        (None, Some(images), Some(labels)) => {
            let data = gen_colored_digits(&read_idx_images(images)?, &read_idx_labels(labels)?, a.samples, a.data_seed)?;
            (digits_schema(), DIGITS_RULE.to_string(), data)
        }
        _ => return Err(Error::Config("sweep needs --data or --idx-images with --idx-labels".into())),
    };
    let rule = parse_rules(&rules, &schema)?;
    let heads = a
        .heads
        .iter()
        .map(|h| h.parse::<SweepHead>())
        .collect::<Result<Vec<_>, _>>()
        .map_err(Error::Config)?;
    let mut config = SweepConfig {
        fractions: a.fractions.clone(),
        seeds: (0..a.seeds).collect(),
        heads,
        test_fraction: a.test_fraction,
        concept: a.concept,
        jobs: a.jobs,
        ..SweepConfig::default()
    };
    if let Some(p) = &a.config {
        config.train = TrainConfig::load(p)?;
    }
    let rows = match a.precision {
        Precision::F32 => run_sweep(&schema, &rule, &data.cast::<f32>(), &config)?,
        Precision::F64 => run_sweep(&schema, &rule, &data, &config)?,
    };
    write_sweep_csv(&a.out, &rows)?;
    let mut out = std::io::stdout().lock();
    writeln!(out, "{:<12} {:>9} {:>5} {:>9} {:>9}", "head", "fraction", "runs", "mean_f1", "mean_acc")?;
    for m in aggregate_sweep(&rows) {
        writeln!(
            out,
            "{:<12} {:>9} {:>5} {:>9.4} {:>9.4}",
            m.head, m.fraction, m.runs, m.mean_f1, m.mean_accuracy
        )?;
    }
    Ok(())
}

fn write_bundle(out: &Path, schema: &ConceptSchema, data: &Dataset<f64>, rules: &[(&str, &str)]) -> Result<(), Error> {
    fs::create_dir_all(out)?;
    data.save_csv(out.join("data.csv"), schema)?;
    fs::write(out.join("schema.json"), schema.to_json())?;
    for (name, text) in rules {
        fs::write(out.join(name), text)?;
    }
    Ok(())
}

fn cmd_gen_toy(a: GenToyArgs) -> Result<(), Error> {
    if a.n == 0 {
        return Err(Error::Config("n must be positive".into()));
    }
    let data = gen_toy(a.n, a.seed);
    write_bundle(
        &a.out,
        &toy_schema(),
        &data,
        &[("rules_implication.txt", TOY_IMPLICATION_RULE), ("rules_iff.txt", TOY_IFF_RULE)],
    )
}

fn cmd_gen_digits(a: GenDigitsArgs) -> Result<(), Error> {
    let images = read_idx_images(&a.images)?;
    let labels = read_idx_labels(&a.labels)?;
    let data = gen_colored_digits(&images, &labels, a.n, a.seed)?;
    write_bundle(&a.out, &digits_schema(), &data, &[("rules.txt", DIGITS_RULE)])
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn definition_is_consistent() {
        Cli::command().debug_assert();
    }

    #[test]
    fn sweep_defaults() {
        let cli = Cli::try_parse_from(["rulehead", "sweep", "--idx-images", "a", "--idx-labels", "b", "--out", "o"]).unwrap();
        let Command::Sweep(a) = cli.command else { panic!() };
        assert_eq!(a.fractions, vec![0.01, 0.05, 0.1, 0.5]);
        assert_eq!((a.seeds, a.heads.len()), (5, 3));
        assert!(Cli::try_parse_from(["rulehead", "sweep", "--data", "d", "--out", "o"]).is_err());
    }
}
