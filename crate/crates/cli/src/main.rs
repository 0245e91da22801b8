use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use fae::dataset::{load_schema_files, load_tables, load_with_layout, EncodedDataset, Schema};
use fae::fae::FaeConfig;
use fae::harness::{evaluate, run_on, train_method, ExperimentConfig};
use fae::model::{Method, SavedModel};
use fae::{Error, Result};

/// Fairness-aware ensemble training, prediction and experiments.
#[derive(Debug, Parser)]
#[command(name = "fae", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Train one method on a dataset and save the model as JSON.
    Train(TrainArgs),
    /// Write per-row scores and predictions of a saved model.
    Predict(ApplyArgs),
    /// Score a saved model on labelled data.
    Evaluate(ApplyArgs),
    /// Run the repeated-split experiment and print the report.
    Experiment(ExperimentArgs),
}

#[derive(Debug, Args)]
struct Training {
    /// Boundary tolerance on |EQOP|.
    #[arg(long)]
    epsilon: Option<f64>,
    /// Boosting rounds per AdaBoost member.
    #[arg(long)]
    rounds: Option<usize>,
    /// Training seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Use the sensitive attribute as a feature (true or false).
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    include_sa: Option<bool>,
}

impl Training {
    fn apply(&self, cfg: &mut FaeConfig) {
        if let Some(e) = self.epsilon {
            cfg.epsilon = e;
        }
        if let Some(r) = self.rounds {
            cfg.rounds = r;
        }
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
    }
}

#[derive(Debug, Args)]
struct TrainArgs {
    /// Dataset schema (TOML).
    #[arg(long)]
    schema: PathBuf,
    /// Data files; defaults to the files listed in the schema.
    #[arg(long, num_args = 1..)]
    dataset: Vec<PathBuf>,
    #[arg(long, default_value = "fae")]
    method: Method,
    /// Where to write the model.
    #[arg(long)]
    model: PathBuf,
    #[command(flatten)]
    training: Training,
}

#[derive(Debug, Args)]
struct ApplyArgs {
    /// Saved model (JSON).
    #[arg(long)]
    model: PathBuf,
    /// Data files in the model's schema layout; defaults to the schema's files.
    #[arg(long, num_args = 1..)]
    dataset: Vec<PathBuf>,
    /// Output file; standard output when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ExperimentArgs {
    /// Experiment config (TOML).
    #[arg(long, required_unless_present = "schema")]
    config: Option<PathBuf>,
    /// Dataset schema, used with default settings when no config is given.
    #[arg(long)]
    schema: Option<PathBuf>,
    /// Data files replacing the schema's.
    #[arg(long, num_args = 1..)]
    dataset: Vec<PathBuf>,
    /// Methods to run, comma separated.
    #[arg(long, value_delimiter = ',')]
    method: Vec<Method>,
    /// Number of splits; runs split indices 0..N.
    #[arg(long)]
    splits: Option<u64>,
    /// Also write the comma-separated report here.
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    training: Training,
}

fn load_schema(path: &Path, include_sa: Option<bool>) -> Result<Schema> {
    let mut schema = Schema::from_file(path)?;
    if let Some(flag) = include_sa {
        schema.include_sensitive = flag;
    }
    Ok(schema)
}

fn load_training(schema: &Schema, files: &[PathBuf]) -> Result<EncodedDataset> {
    if files.is_empty() {
        load_schema_files(schema)
    } else {
        load_tables(files, schema)
    }
}

fn write_output(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(path) => fs::write(path, text).map_err(|e| Error::Io {
            path: path.to_path_buf(),
            source: e,
        }),
        None => io::stdout().write_all(text.as_bytes()).map_err(|e| Error::Io {
            path: PathBuf::from("<stdout>"),
            source: e,
        }),
    }
}

fn train(args: TrainArgs) -> Result<()> {
    let schema = load_schema(&args.schema, args.training.include_sa)?;
    let mut data = load_training(&schema, &args.dataset)?;
    data.standardize()?;
    let mut cfg = FaeConfig::default();
    args.training.apply(&mut cfg);
    cfg.validate()?;
    let classifier = train_method(args.method, &data, &cfg, fae::baselines::EASY_ENSEMBLE_BAGS)?;
    let saved = SavedModel::new(schema, data.layout.clone(), data.standardizer.clone(), classifier);
    saved.save(&args.model)?;
    eprintln!(
        "trained {} on {} rows, saved to {}",
        args.method,
        data.len(),
        args.model.display()
    );
    Ok(())
}

fn load_applied(args: &ApplyArgs) -> Result<(SavedModel, EncodedDataset)> {
    let saved = SavedModel::load(&args.model)?;
    let files = if args.dataset.is_empty() {
        saved.schema.data_paths()
    } else {
        args.dataset.clone()
    };
    let data = load_with_layout(&files, &saved.schema, &saved.layout, saved.standardizer.as_ref())?;
    Ok((saved, data))
}

fn predict(args: ApplyArgs) -> Result<()> {
    let (saved, data) = load_applied(&args)?;
    let model = &saved.classifier;
    let scores = model.scores(data.features.view())?;
    let labels = model.predict(data.features.view(), &data.groups)?;
    let mut text = String::from("row,group,score,prediction\n");
    for i in 0..data.len() {
        let group = match data.groups[i] {
            fae::dataset::Group::Protected => "protected",
            fae::dataset::Group::NonProtected => "non_protected",
        };
        text.push_str(&format!("{},{},{},{}\n", data.source_rows[i], group, scores[i], labels[i]));
    }
    write_output(args.out.as_deref(), &text)
}

fn evaluate_cmd(args: ApplyArgs) -> Result<()> {
    let (saved, data) = load_applied(&args)?;
    let eval = evaluate(&saved.classifier, &data)?;
    let text = serde_json::to_string_pretty(&eval).map_err(|e| Error::Data(e.to_string()))? + "\n";
    eprintln!(
        "{}: B.ACC {:.2}%  EQOP {:.2} pp on {} rows",
        saved.classifier.method,
        100.0 * eval.balanced_accuracy,
        100.0 * eval.eqop,
        data.len()
    );
    write_output(args.out.as_deref(), &text)
}

fn experiment(args: ExperimentArgs) -> Result<()> {
    let mut cfg = match (&args.config, &args.schema) {
        (Some(path), _) => ExperimentConfig::from_file(path)?,
        (None, Some(schema)) => ExperimentConfig::new(schema),
        (None, None) => unreachable!("clap requires one of --config and --schema"),
    };
    if args.config.is_some() {
        if let Some(schema) = &args.schema {
            cfg.schema = schema.clone();
        }
    }
    if !args.method.is_empty() {
        cfg.methods = args.method.clone();
    }
    if let Some(n) = args.splits {
        cfg.splits = (0..n).collect();
    }
    if args.training.include_sa.is_some() {
        cfg.include_sensitive = args.training.include_sa;
    }
    args.training.apply(&mut cfg.fae);
    cfg.validate()?;
    let schema = cfg.load_schema()?;
    let data = load_training(&schema, &args.dataset)?;
    let report = run_on(&data, &cfg.display_name(&schema), &cfg)?;
    if let Some(path) = &args.out {
        write_output(Some(path), &report.to_csv()?)?;
    }
    write_output(None, &report.to_table())
}

fn exit_code(err: &Error) -> u8 {
    match err {
        Error::UndefinedMetric(_) => 3,
        Error::InvalidArgument(_) => 1,
        _ => 2,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let outcome = match cli.command {
        Command::Train(a) => train(a),
        Command::Predict(a) => predict(a),
        Command::Evaluate(a) => evaluate_cmd(a),
        Command::Experiment(a) => experiment(a),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
