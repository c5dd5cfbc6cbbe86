use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use kgc::experiment::{
    self, artifacts, DataSource, ExperimentConfig, Strategy, StrategyKind,
};
use kgc::metrics;
use kgc::sampler::plan_training;
use kgc::schedule::{ScheduleParams, ScoreTable};
use kgc::seed::SeedSpec;
use kgc::synth::Geometry;
use kgc::trainer::{Architecture, Checkpoint, Hyperparams};
use kgc::{Error, Result};

#[derive(Parser)]
#[command(name = "kgc", version, about = "Knowledge-guided curriculum sampling toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic train/test dataset and write manifests
    Synth(SynthArgs),
    /// Emit per-epoch probabilities and permutations for inspection
    Plan(PlanArgs),
    /// Train and evaluate a single run
    Train(ExperimentArgs),
    /// Run the full protocol for one strategy
    Run(ExperimentArgs),
    /// Run the full protocol for several strategies on shared data and seeds
    Compare(CompareArgs),
    /// Evaluate a predictions file (`id,label,score`)
    Metrics(MetricsArgs),
}

#[derive(Args, Clone)]
struct DataArgs {
    /// Score table (flat TOML `label = score`); defaults to the elbow table
    #[arg(long)]
    scores: Option<PathBuf>,
    /// Training manifest; synthetic data is generated when omitted
    #[arg(long)]
    manifest: Option<PathBuf>,
    /// Test manifest (required with --manifest)
    #[arg(long)]
    test_manifest: Option<PathBuf>,
    #[arg(long, default_value_t = SeedSpec::default().master_seed)]
    seed: u64,
    #[command(flatten)]
    geometry: GeometryArgs,
}

#[derive(Args, Clone)]
struct GeometryArgs {
    #[arg(long, default_value_t = Geometry::default().dim)]
    dim: usize,
    #[arg(long, default_value_t = Geometry::default().sigma)]
    sigma: f64,
    /// Margin of a score-100 subtype
    #[arg(long, default_value_t = Geometry::default().max_margin)]
    max_margin: f64,
    /// Distance of the normal class mean from the origin
    #[arg(long, default_value_t = Geometry::default().normal_margin)]
    normal_margin: f64,
}

impl GeometryArgs {
    fn geometry(&self) -> Geometry {
        Geometry {
            dim: self.dim,
            sigma: self.sigma,
            max_margin: self.max_margin,
            normal_margin: self.normal_margin,
        }
    }
}

#[derive(Args, Clone)]
struct ScheduleArgs {
    /// Total epochs E
    #[arg(long, default_value_t = 60)]
    epochs: usize,
    /// Transition epoch L (default E/2)
    #[arg(long)]
    transition_epoch: Option<usize>,
    /// External per-sample weights (`id,weight`), for --strategy external
    #[arg(long)]
    external: Option<PathBuf>,
}

#[derive(Copy, Clone, ValueEnum)]
enum ArchArg {
    Linear,
    Mlp,
}

#[derive(Args, Clone)]
struct ModelArgs {
    #[arg(long, value_enum, default_value = "mlp")]
    arch: ArchArg,
    #[arg(long, default_value_t = 32)]
    hidden: usize,
    #[arg(long, default_value_t = Hyperparams::default().learning_rate)]
    lr: f64,
    #[arg(long, default_value_t = Hyperparams::default().batch_size)]
    batch_size: usize,
    #[arg(long, default_value_t = 0.0)]
    momentum: f64,
}

#[derive(Args)]
struct SynthArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct PlanArgs {
    #[arg(long, default_value = "curriculum")]
    strategy: String,
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    schedule: ScheduleArgs,
    /// Run index used to select the sampler streams
    #[arg(long, default_value_t = 0)]
    run: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ExperimentArgs {
    #[arg(long, default_value = "curriculum")]
    strategy: String,
    #[command(flatten)]
    common: CommonExperimentArgs,
}

#[derive(Args)]
struct CompareArgs {
    /// Comma-separated strategies
    #[arg(long, value_delimiter = ',', default_value = "uniform,curriculum,anti")]
    strategies: Vec<String>,
    #[command(flatten)]
    common: CommonExperimentArgs,
}

#[derive(Args)]
struct CommonExperimentArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    schedule: ScheduleArgs,
    #[command(flatten)]
    model: ModelArgs,
    /// Training repeats R
    #[arg(long, default_value_t = 5)]
    repeats: usize,
    /// Balanced test subsamples K per run
    #[arg(long, default_value_t = 5)]
    test_repeats: usize,
    /// Negatives per balanced test subsample
    #[arg(long, default_value_t = 100)]
    test_negatives: usize,
    /// Evaluate on the whole test set instead of balanced subsamples
    #[arg(long)]
    full_test: bool,
    #[arg(long, default_value_t = metrics::DEFAULT_THRESHOLD)]
    threshold: f64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct MetricsArgs {
    #[arg(long)]
    predictions: PathBuf,
    #[arg(long, default_value_t = metrics::DEFAULT_THRESHOLD)]
    threshold: f64,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn load_scores(data: &DataArgs) -> Result<ScoreTable> {
    match &data.scores {
        Some(path) => artifacts::load_scores(path),
        None => Ok(ScoreTable::elbow_default()),
    }
}

fn data_source(data: &DataArgs) -> Result<DataSource> {
    match (&data.manifest, &data.test_manifest) {
        (Some(train), Some(test)) => Ok(DataSource::Manifest {
            train: train.clone(),
            test: test.clone(),
        }),
        (None, None) => Ok(DataSource::Synthetic(data.geometry.geometry())),
        _ => Err(Error::Config(
            "--manifest and --test-manifest must be given together".into(),
        )),
    }
}

fn schedule_params(args: &ScheduleArgs) -> Result<ScheduleParams> {
    match args.transition_epoch {
        Some(l) => ScheduleParams::new(args.epochs, l),
        None => ScheduleParams::with_default_transition(args.epochs),
    }
}

fn strategy(name: &str, schedule: &ScheduleArgs) -> Result<Strategy> {
    Ok(match name.parse::<StrategyKind>()? {
        StrategyKind::Uniform => Strategy::Uniform,
        StrategyKind::Curriculum => Strategy::Curriculum,
        StrategyKind::Anti => Strategy::Anti,
        StrategyKind::External => {
            let path = schedule.external.as_ref().ok_or_else(|| {
                Error::Config("--strategy external needs --external <file>".into())
            })?;
            Strategy::External(artifacts::load_external_weights(path)?)
        }
    })
}

fn experiment_config(strategy: Strategy, args: &CommonExperimentArgs) -> Result<ExperimentConfig> {
    let architecture = match args.model.arch {
        ArchArg::Linear => Architecture::Linear,
        ArchArg::Mlp => Architecture::Mlp {
            hidden: args.model.hidden,
        },
    };
    Ok(ExperimentConfig {
        strategy,
        scores: load_scores(&args.data)?,
        schedule: schedule_params(&args.schedule)?,
        architecture,
        hyper: Hyperparams {
            learning_rate: args.model.lr,
            batch_size: args.model.batch_size,
            momentum: args.model.momentum,
        },
        data: data_source(&args.data)?,
        train_repeats: args.repeats,
        test_repeats: args.test_repeats,
        test_negatives: args.test_negatives,
        full_test: args.full_test,
        threshold: args.threshold,
        seed: SeedSpec::new(args.data.seed),
    })
}

fn cmd_synth(args: &SynthArgs) -> Result<()> {
    let scores = load_scores(&args.data)?;
    let source = DataSource::Synthetic(args.data.geometry.geometry());
    let (train, test) = source.load(&scores, SeedSpec::new(args.data.seed))?;
    artifacts::save_manifest(&args.out.join("train.csv"), &train)?;
    artifacts::save_manifest(&args.out.join("test.csv"), &test)?;
    artifacts::save_scores(&args.out.join("scores.toml"), &scores)?;
    println!(
        "wrote {} training and {} test samples to {}",
        train.len(),
        test.len(),
        args.out.display()
    );
    Ok(())
}

fn cmd_plan(args: &PlanArgs) -> Result<()> {
    let scores = load_scores(&args.data)?;
    let seed = SeedSpec::new(args.data.seed);
    let train = match &args.data.manifest {
        Some(path) => artifacts::load_manifest(path, &scores)?,
        None => data_source(&args.data)?.load(&scores, seed)?.0,
    };
    let params = schedule_params(&args.schedule)?;
    let schedule = strategy(&args.strategy, &args.schedule)?.schedule(&train, &scores, params)?;
    let plans = plan_training(&schedule, seed, args.run)?;
    let ids: Vec<String> = train.records.iter().map(|r| r.id.clone()).collect();
    artifacts::write_file(&args.out.join("probabilities.csv"), |w| {
        artifacts::write_probabilities(w, &schedule, &ids)
    })?;
    artifacts::write_file(&args.out.join("plan.csv"), |w| {
        artifacts::write_plan(w, &plans, &ids)
    })?;
    println!(
        "wrote {} epochs x {} samples to {}",
        plans.len(),
        ids.len(),
        args.out.display()
    );
    Ok(())
}

fn cmd_train(args: &ExperimentArgs) -> Result<()> {
    let config = experiment_config(strategy(&args.strategy, &args.common.schedule)?, &args.common)?;
    config.validate()?;
    let (train, test) = config.data.load(&config.scores, config.seed)?;
    let outcome = experiment::single_run(&config, &train, &test, 0)?;
    let out = &args.common.out;
    artifacts::write_file(&out.join("model.json"), |w| {
        w.write_all(Checkpoint::new(outcome.model.clone()).to_json().as_bytes())
    })?;
    artifacts::write_file(&out.join("train_log.jsonl"), |w| {
        artifacts::write_train_log(w, &outcome.report.train_log)
    })?;
    let predictions: Vec<metrics::Prediction> = test
        .records
        .iter()
        .zip(&outcome.test_scores)
        .map(|(r, &score)| metrics::Prediction {
            id: r.id.clone(),
            label: r.positive,
            score,
        })
        .collect();
    artifacts::write_file(&out.join("predictions.csv"), |w| {
        metrics::write_predictions(&predictions, w)
    })?;
    artifacts::write_eval(out, "metrics", &outcome.report.full_test)?;
    let aggregate = experiment::AggregateReport::from_runs(config.strategy.name(), vec![outcome.report]);
    artifacts::write_aggregate(out, &aggregate)?;
    print!("{}", experiment::Comparison { rows: vec![aggregate] }.table());
    Ok(())
}

fn cmd_run(args: &ExperimentArgs) -> Result<()> {
    let config = experiment_config(strategy(&args.strategy, &args.common.schedule)?, &args.common)?;
    let report = experiment::run(&config)?;
    artifacts::write_aggregate(&args.common.out, &report)?;
    print!("{}", experiment::Comparison { rows: vec![report] }.table());
    Ok(())
}

fn cmd_compare(args: &CompareArgs) -> Result<()> {
    let configs = args
        .strategies
        .iter()
        .map(|name| experiment_config(strategy(name, &args.common.schedule)?, &args.common))
        .collect::<Result<Vec<_>>>()?;
    let comparison = experiment::compare(&configs)?;
    artifacts::write_comparison(&args.common.out, &comparison)?;
    print!("{}", comparison.table());
    Ok(())
}

fn cmd_metrics(args: &MetricsArgs) -> Result<()> {
    let file = std::fs::File::open(&args.predictions).map_err(|e| Error::Io {
        path: args.predictions.clone(),
        source: e,
    })?;
    let preds = metrics::read_predictions(std::io::BufReader::new(file), &args.predictions.display().to_string())?;
    let scores: Vec<f64> = preds.iter().map(|p| p.score).collect();
    let labels: Vec<bool> = preds.iter().map(|p| p.label).collect();
    let report = metrics::evaluate(&scores, &labels, args.threshold)?;
    if let Some(out) = &args.out {
        artifacts::write_eval(out, "metrics", &report)?;
    }
    print!("{}", metrics::report_text(&report));
    Ok(())
}

fn error_record(kind: &str, message: &str) -> String {
    json!({ "error": { "kind": kind, "message": message } }).to_string()
}

fn dispatch(command: &Command) -> Result<()> {
    match command {
        Command::Synth(a) => cmd_synth(a),
        Command::Plan(a) => cmd_plan(a),
        Command::Train(a) => cmd_train(a),
        Command::Run(a) => cmd_run(a),
        Command::Compare(a) => cmd_compare(a),
        Command::Metrics(a) => cmd_metrics(a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            eprintln!("{}", error_record("Usage", e.to_string().trim()));
            return ExitCode::from(2);
        }
    };
    match dispatch(&cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", error_record(e.kind(), &e.to_string()));
            ExitCode::FAILURE
        }
    }
}
