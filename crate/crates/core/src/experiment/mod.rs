//! Experiment runner: schedule -> sampler -> trainer -> metrics, repeated over
//! training runs and balanced test subsamples, then aggregated.
//!
//! Random streams per run `r` (see [`crate::seed`]):
//! * `(Sampler, r, epoch)`: epoch permutations;
//! * `(ModelInit, r, 0)`: weight initialisation;
//! * `(Subsample, r, k)`: negatives drawn for test subsample `k`;
//! * `(TrainData | TestData, class, 0)`: synthetic data, shared by all runs.
//!
//! None of these depend on the strategy, so strategies compared under one
//! master seed see identical data, initial weights and test subsets; only the
//! epoch order differs.

pub mod artifacts;

use std::collections::HashMap;
use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::{self, EvalReport};
use crate::sampler::{plan_training, EpochPlan};
use crate::schedule::{
    reverse_scores, ExternalProbabilities, InitialProbabilities, ScheduleParams, ScheduleState,
    ScoreTable, UniformProbabilities,
};
use crate::seed::{Purpose, SeedSpec};
use crate::synth::{self, ClassProfile, Dataset, Geometry, Split};
use crate::trainer::{self, Architecture, Hyperparams, Model, TrainLog};

/// Per-sample external weights keyed by sample id.
pub type ExternalWeights = HashMap<String, f64>;

#[derive(Debug, Clone, PartialEq)]
pub enum Strategy {
    /// Random shuffling: `1/N` at every epoch.
    Uniform,
    /// Score-proportional start, decaying to uniform by the transition epoch.
    Curriculum,
    /// Same as `Curriculum` with every score `s` replaced by `100 - s`.
    Anti,
    /// Start from weights produced elsewhere; the same decay applies.
    External(ExternalWeights),
}

impl Strategy {
    pub fn name(&self) -> &'static str {
        match self {
            Strategy::Uniform => "uniform",
            Strategy::Curriculum => "curriculum",
            Strategy::Anti => "anti",
            Strategy::External(_) => "external",
        }
    }

    /// Epoch-1 schedule for `train` under this strategy.
    pub fn schedule(
        &self,
        train: &Dataset,
        scores: &ScoreTable,
        params: ScheduleParams,
    ) -> Result<ScheduleState> {
        let labels = train.fine_labels();
        match self {
            Strategy::Uniform => UniformProbabilities.schedule(&labels, params),
            Strategy::Curriculum => scores.schedule(&labels, params),
            Strategy::Anti => reverse_scores(scores)?.schedule(&labels, params),
            Strategy::External(weights) => {
                let aligned = train
                    .records
                    .iter()
                    .map(|r| {
                        weights.get(&r.id).copied().ok_or_else(|| {
                            Error::Config(format!("no external weight for sample `{}`", r.id))
                        })
                    })
                    .collect::<Result<Vec<f64>>>()?;
                ExternalProbabilities(aligned).schedule(&labels, params)
            }
        }
    }
}

/// Strategy names accepted on the command line. `external` needs weights and
/// is resolved by the caller.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum StrategyKind {
    Uniform,
    Curriculum,
    Anti,
    External,
}

impl FromStr for StrategyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "uniform" | "baseline" => Ok(StrategyKind::Uniform),
            "curriculum" => Ok(StrategyKind::Curriculum),
            "anti" | "anti-curriculum" => Ok(StrategyKind::Anti),
            "external" => Ok(StrategyKind::External),
            other => Err(Error::Config(format!("unknown strategy `{other}`"))),
        }
    }
}

impl fmt::Display for StrategyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            StrategyKind::Uniform => "uniform",
            StrategyKind::Curriculum => "curriculum",
            StrategyKind::Anti => "anti",
            StrategyKind::External => "external",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum DataSource {
    /// Class counts of the elbow cohort, placed by `geometry`.
    Synthetic(Geometry),
    Manifest { train: PathBuf, test: PathBuf },
}

impl DataSource {
    pub fn load(&self, scores: &ScoreTable, seed: SeedSpec) -> Result<(Dataset, Dataset)> {
        match self {
            DataSource::Synthetic(geometry) => {
                let train = synth::generate(
                    &ClassProfile::train_default(scores, *geometry)?,
                    seed,
                    Split::Train,
                )?;
                let test = synth::generate(
                    &ClassProfile::test_default(scores, *geometry)?,
                    seed,
                    Split::Test,
                )?;
                Ok((train, test))
            }
            DataSource::Manifest { train, test } => Ok((
                artifacts::load_manifest(train, scores)?,
                artifacts::load_manifest(test, scores)?,
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub strategy: Strategy,
    /// Expert difficulty table; also places the synthetic classes.
    pub scores: ScoreTable,
    pub schedule: ScheduleParams,
    pub architecture: Architecture,
    pub hyper: Hyperparams,
    pub data: DataSource,
    pub train_repeats: usize,
    pub test_repeats: usize,
    /// Negatives per balanced test subsample; all positives are always used.
    pub test_negatives: usize,
    /// Evaluate once on the whole test set instead of on subsamples.
    pub full_test: bool,
    pub threshold: f64,
    pub seed: SeedSpec,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            strategy: Strategy::Curriculum,
            scores: ScoreTable::elbow_default(),
            schedule: ScheduleParams::default(),
            architecture: Architecture::default(),
            hyper: Hyperparams::default(),
            data: DataSource::Synthetic(Geometry::default()),
            train_repeats: 5,
            test_repeats: 5,
            test_negatives: 100,
            full_test: false,
            threshold: metrics::DEFAULT_THRESHOLD,
            seed: SeedSpec::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn with_strategy(&self, strategy: Strategy) -> Self {
        ExperimentConfig {
            strategy,
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.train_repeats == 0 || self.test_repeats == 0 {
            return Err(Error::Config("repeats must be at least 1".into()));
        }
        if !self.full_test && self.test_negatives == 0 {
            return Err(Error::Config("test subsample needs at least one negative".into()));
        }
        self.hyper.validate()
    }

    fn validate_against(&self, test: &Dataset) -> Result<()> {
        let available = test.len() - test.n_positive();
        if !self.full_test && self.test_negatives > available {
            return Err(Error::Config(format!(
                "test subsample wants {} negatives, only {available} available",
                self.test_negatives
            )));
        }
        Ok(())
    }
}

/// All positives plus `negatives` distinct negatives, ascending indices.
pub fn balanced_subsample(test: &Dataset, negatives: usize, seed: SeedSpec, run: u64, k: u64) -> Result<Vec<usize>> {
    let (pos, neg): (Vec<usize>, Vec<usize>) = (0..test.len()).partition(|&i| test.records[i].positive);
    if negatives > neg.len() {
        return Err(Error::Config(format!(
            "requested {negatives} negatives, only {} available",
            neg.len()
        )));
    }
    let mut rng = seed.stream(Purpose::Subsample, run, k);
    let mut chosen: Vec<usize> = rand::seq::index::sample(&mut rng, neg.len(), negatives)
        .into_iter()
        .map(|j| neg[j])
        .collect();
    chosen.extend(pos);
    chosen.sort_unstable();
    Ok(chosen)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub run: usize,
    pub train_log: TrainLog,
    /// Whole test set (source of the exported ROC curve).
    pub full_test: EvalReport,
    /// Reports that enter the aggregate: one per subsample, or the full-test
    /// report when subsampling is off.
    pub evaluations: Vec<EvalReport>,
}

/// Everything a single training run produces.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub plans: Vec<EpochPlan>,
    pub model: Model,
    pub test_scores: Vec<f64>,
    pub report: RunReport,
}

/// Trains and evaluates run `run` of `config`.
pub fn single_run(config: &ExperimentConfig, train: &Dataset, test: &Dataset, run: usize) -> Result<RunOutcome> {
    let r = run as u64;
    let schedule = config.strategy.schedule(train, &config.scores, config.schedule)?;
    let plans = plan_training(&schedule, config.seed, r)?;
    let mut init_rng = config.seed.stream(Purpose::ModelInit, r, 0);
    let model = Model::init(config.architecture, train.dim, &mut init_rng);
    let (model, train_log) = trainer::train(model, train, &plans, &config.hyper)?;
    let test_scores = trainer::predict_scores(&model, test)?;
    let labels = test.labels();
    let full_test = metrics::evaluate(&test_scores, &labels, config.threshold)?;
    let evaluations = if config.full_test {
        vec![full_test.clone()]
    } else {
        (0..config.test_repeats as u64)
            .map(|k| {
                let idx = balanced_subsample(test, config.test_negatives, config.seed, r, k)?;
                let s: Vec<f64> = idx.iter().map(|&i| test_scores[i]).collect();
                let y: Vec<bool> = idx.iter().map(|&i| labels[i]).collect();
                metrics::evaluate(&s, &y, config.threshold)
            })
            .collect::<Result<Vec<_>>>()?
    };
    Ok(RunOutcome {
        plans,
        model,
        test_scores,
        report: RunReport {
            run,
            train_log,
            full_test,
            evaluations,
        },
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
}

pub const STD_CONVENTION: &str = "sample standard deviation (n - 1 denominator; 0 when n = 1)";

impl MeanStd {
    pub fn of(values: &[f64]) -> Self {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let std = if values.len() < 2 {
            0.0
        } else {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        };
        MeanStd { mean, std }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateReport {
    pub strategy: String,
    pub std_convention: String,
    pub n_evaluations: usize,
    pub accuracy: MeanStd,
    pub auc: MeanStd,
    pub average_precision: MeanStd,
    pub f1: MeanStd,
    pub runs: Vec<RunReport>,
}

impl AggregateReport {
    pub fn from_runs(strategy: &str, runs: Vec<RunReport>) -> Self {
        let evals: Vec<&EvalReport> = runs.iter().flat_map(|r| &r.evaluations).collect();
        let column = |f: fn(&EvalReport) -> f64| MeanStd::of(&evals.iter().map(|e| f(e)).collect::<Vec<_>>());
        AggregateReport {
            strategy: strategy.to_string(),
            std_convention: STD_CONVENTION.to_string(),
            n_evaluations: evals.len(),
            accuracy: column(|e| e.accuracy),
            auc: column(|e| e.auc),
            average_precision: column(|e| e.average_precision),
            f1: column(|e| e.f1),
            runs,
        }
    }
}

/// Runs every training repeat of `config` on already-loaded data.
pub fn run_with_data(config: &ExperimentConfig, train: &Dataset, test: &Dataset) -> Result<AggregateReport> {
    config.validate()?;
    config.validate_against(test)?;
    let runs = (0..config.train_repeats)
        .into_par_iter()
        .map(|r| single_run(config, train, test, r).map(|o| o.report))
        .collect::<Result<Vec<_>>>()?;
    Ok(AggregateReport::from_runs(config.strategy.name(), runs))
}

pub fn run(config: &ExperimentConfig) -> Result<AggregateReport> {
    config.validate()?;
    let (train, test) = config.data.load(&config.scores, config.seed)?;
    run_with_data(config, &train, &test)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub rows: Vec<AggregateReport>,
}

impl Comparison {
    /// Table with one row per strategy: mean ± std of Accuracy, AUC,
    /// Average Precision and F1 score.
    pub fn table(&self) -> String {
        let headers = ["Accuracy", "AUC", "Average Precision", "F1 score"];
        let name_width = self
            .rows
            .iter()
            .map(|r| r.strategy.len())
            .chain(["Strategy".len()])
            .max()
            .unwrap_or(8);
        let cell = |m: &MeanStd| format!("{:.4} ± {:.4}", m.mean, m.std);
        let mut out = format!("{:<name_width$}", "Strategy");
        for h in headers {
            out.push_str(&format!(" | {h:<17}"));
        }
        out.push('\n');
        out.push_str(&"-".repeat(name_width));
        for _ in headers {
            out.push_str(&format!("-+-{}", "-".repeat(17)));
        }
        out.push('\n');
        for row in &self.rows {
            out.push_str(&format!("{:<name_width$}", row.strategy));
            for m in [&row.accuracy, &row.auc, &row.average_precision, &row.f1] {
                out.push_str(&format!(" | {:<17}", cell(m)));
            }
            out.push('\n');
        }
        if let Some(first) = self.rows.first() {
            out.push_str(&format!(
                "\nmean ± std over {} evaluations per strategy; std = {}\n",
                first.n_evaluations, first.std_convention
            ));
        }
        out
    }
}

/// Runs configs that differ only in strategy on shared data and seeds.
pub fn compare(configs: &[ExperimentConfig]) -> Result<Comparison> {
    let first = configs
        .first()
        .ok_or_else(|| Error::Config("nothing to compare".into()))?;
    let reference = first.with_strategy(Strategy::Uniform);
    for (i, c) in configs.iter().enumerate().skip(1) {
        if c.with_strategy(Strategy::Uniform) != reference {
            return Err(Error::UnfairComparison(format!(
                "config {i} ({}) differs from config 0 in more than its strategy",
                c.strategy.name()
            )));
        }
    }
    first.validate()?;
    let (train, test) = first.data.load(&first.scores, first.seed)?;
    let rows = configs
        .iter()
        .map(|c| run_with_data(c, &train, &test))
        .collect::<Result<Vec<_>>>()?;
    Ok(Comparison { rows })
}
