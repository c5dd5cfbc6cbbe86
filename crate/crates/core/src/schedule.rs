//! Knowledge-guided sampling schedule.
//!
//! Each fine-grained class carries an expert difficulty score (1 = hardest,
//! 100 = easiest). Epoch-1 sampling probabilities are proportional to the
//! score of each sample's class. Every sample then gets its own decay factor
//!
//! ```text
//! lambda_i = ((1/N) / p_i(1)) ^ (1/L)
//! ```
//!
//! and for epochs `2..=L` its probability is multiplied by `lambda_i` once per
//! epoch. From epoch `L + 1` on every probability is assigned `1/N` directly.
//!
//! The update is applied verbatim, so `p_i(L)` is `p_i(1) * lambda_i^(L-1)`,
//! one factor of `lambda_i` short of `1/N`; the remaining step is taken at
//! epoch `L + 1`. Vectors for epochs `>= 2` generally do not sum to one.
//! Consumers that sample from them ([`crate::sampler`]) renormalise.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::compensated_sum;

/// Fine-grained label of the non-fracture class. Samples with this label are
/// the negatives of the binary task.
pub const NORMAL_LABEL: &str = "normal";

pub const MIN_SCORE: u32 = 1;
pub const MAX_SCORE: u32 = 100;

/// Fine-grained class label (`normal`, `a`, ..., `f` by default).
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct FineLabel(String);

impl FineLabel {
    pub fn new(value: impl Into<String>) -> Self {
        FineLabel(value.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    pub fn is_normal(&self) -> bool {
        self.0 == NORMAL_LABEL
    }
}

impl fmt::Display for FineLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for FineLabel {
    fn from(s: &str) -> Self {
        FineLabel::new(s)
    }
}

/// Difficulty score per fine label, each in `1..=100`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(transparent)]
pub struct ScoreTable {
    entries: BTreeMap<FineLabel, u32>,
}

impl ScoreTable {
    pub fn new<I, L>(entries: I) -> Result<Self>
    where
        I: IntoIterator<Item = (L, u32)>,
        L: Into<FineLabel>,
    {
        let mut map = BTreeMap::new();
        for (label, score) in entries {
            let label = label.into();
            if !(MIN_SCORE..=MAX_SCORE).contains(&score) {
                return Err(Error::InvalidScore {
                    label: label.0,
                    score: i64::from(score),
                });
            }
            map.insert(label, score);
        }
        if map.is_empty() {
            return Err(Error::EmptyScoreTable);
        }
        Ok(ScoreTable { entries: map })
    }

    /// Radiologist-assigned difficulty of the six elbow fracture subtypes
    /// plus the normal class.
    pub fn elbow_default() -> Self {
        ScoreTable::new([
            ("normal", 30),
            ("a", 30),
            ("b", 30),
            ("c", 70),
            ("d", 40),
            ("e", 90),
            ("f", 10),
        ])
        .expect("default table is valid")
    }

    pub fn score(&self, label: &FineLabel) -> Result<u32> {
        self.entries
            .get(label)
            .copied()
            .ok_or_else(|| Error::UnknownFineLabel(label.0.clone()))
    }

    pub fn contains(&self, label: &FineLabel) -> bool {
        self.entries.contains_key(label)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&FineLabel, u32)> {
        self.entries.iter().map(|(l, &s)| (l, s))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Renders the table in the same flat `label = score` form accepted by
    /// [`FromStr`].
    pub fn to_toml_string(&self) -> String {
        let mut out = String::new();
        for (label, score) in self.iter() {
            out.push_str(&format!("{} = {}\n", toml_key(label.as_str()), score));
        }
        out
    }
}

fn toml_key(key: &str) -> String {
    let bare = !key.is_empty()
        && key
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-');
    if bare {
        key.to_string()
    } else {
        toml::Value::String(key.to_string()).to_string()
    }
}

/// Parses a flat TOML table of `label = score` pairs. Comments (`#`) and
/// blank lines are allowed; nested tables and non-integer values are not.
impl FromStr for ScoreTable {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let raw: BTreeMap<String, toml::Value> = toml::from_str(s).map_err(|e| Error::Parse {
            path: "<score table>".into(),
            message: e.to_string(),
        })?;
        let mut entries = Vec::with_capacity(raw.len());
        for (label, value) in raw {
            let score = value.as_integer().ok_or_else(|| Error::Parse {
                path: "<score table>".into(),
                message: format!("score for `{label}` is not an integer"),
            })?;
            if !(i64::from(MIN_SCORE)..=i64::from(MAX_SCORE)).contains(&score) {
                return Err(Error::InvalidScore { label, score });
            }
            entries.push((FineLabel(label), score as u32));
        }
        ScoreTable::new(entries)
    }
}

/// Anti-curriculum transform: every score `s` becomes `100 - s`.
pub fn reverse_scores(scores: &ScoreTable) -> Result<ScoreTable> {
    let mut entries = BTreeMap::new();
    for (label, score) in scores.iter() {
        if score >= MAX_SCORE {
            return Err(Error::ReversalOutOfRange(label.0.clone()));
        }
        entries.insert(label.clone(), MAX_SCORE - score);
    }
    Ok(ScoreTable { entries })
}

/// `p_i = s(f_i) / sum_j s(f_j)`, in input order.
///
/// The score sum is accumulated in integers, so every probability is a single
/// correctly-rounded division.
pub fn init_probabilities(labels: &[FineLabel], scores: &ScoreTable) -> Result<Vec<f64>> {
    if labels.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let per_sample = labels
        .iter()
        .map(|l| scores.score(l))
        .collect::<Result<Vec<u32>>>()?;
    let total: u64 = per_sample.iter().map(|&s| u64::from(s)).sum();
    let total = total as f64;
    Ok(per_sample.iter().map(|&s| f64::from(s) / total).collect())
}

/// Per-sample decay factor `((1/N) / p_init)^(1/L)`.
pub fn compute_lambda(p_init: f64, n_samples: usize, transition_epoch: usize) -> Result<f64> {
    if !(p_init.is_finite() && p_init > 0.0 && p_init <= 1.0) {
        return Err(Error::InvalidProbability(p_init));
    }
    if n_samples == 0 {
        return Err(Error::EmptyDataset);
    }
    if transition_epoch == 0 {
        return Err(Error::InvalidScheduleParams {
            total: 0,
            transition: 0,
        });
    }
    let ratio = 1.0 / (n_samples as f64 * p_init);
    if transition_epoch == 1 {
        Ok(ratio)
    } else {
        Ok(ratio.powf(1.0 / transition_epoch as f64))
    }
}

/// Total epochs `E` and transition epoch `L`, with `1 <= L <= E`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScheduleParams {
    total_epochs: usize,
    transition_epoch: usize,
}

impl ScheduleParams {
    pub fn new(total_epochs: usize, transition_epoch: usize) -> Result<Self> {
        if transition_epoch == 0 || transition_epoch > total_epochs {
            return Err(Error::InvalidScheduleParams {
                total: total_epochs,
                transition: transition_epoch,
            });
        }
        Ok(ScheduleParams {
            total_epochs,
            transition_epoch,
        })
    }

    /// `L = E / 2` (at least 1).
    pub fn with_default_transition(total_epochs: usize) -> Result<Self> {
        ScheduleParams::new(total_epochs, (total_epochs / 2).max(1))
    }

    pub fn total_epochs(&self) -> usize {
        self.total_epochs
    }

    pub fn transition_epoch(&self) -> usize {
        self.transition_epoch
    }
}

impl Default for ScheduleParams {
    fn default() -> Self {
        ScheduleParams {
            total_epochs: 60,
            transition_epoch: 30,
        }
    }
}

/// Per-sample sampling probabilities at a given epoch, plus the constants
/// that drive their update.
#[derive(Debug, Clone, PartialEq)]
pub struct ScheduleState {
    params: ScheduleParams,
    initial_probs: Vec<f64>,
    lambdas: Vec<f64>,
    current_epoch: usize,
    current_probs: Vec<f64>,
}

/// Tolerance on `sum(initial_probs) == 1`.
pub const NORMALIZATION_TOLERANCE: f64 = 1e-9;

impl ScheduleState {
    /// Builds the epoch-1 state from already-normalised initial probabilities.
    pub fn new(initial_probs: Vec<f64>, params: ScheduleParams) -> Result<Self> {
        if initial_probs.is_empty() {
            return Err(Error::EmptyDataset);
        }
        if let Some(&bad) = initial_probs
            .iter()
            .find(|p| !(p.is_finite() && **p > 0.0))
        {
            return Err(Error::InvalidProbability(bad));
        }
        let total = compensated_sum(initial_probs.iter().copied());
        if (total - 1.0).abs() > NORMALIZATION_TOLERANCE {
            return Err(Error::InvalidProbability(total));
        }
        let n = initial_probs.len();
        let lambdas = initial_probs
            .iter()
            .map(|&p| compute_lambda(p, n, params.transition_epoch))
            .collect::<Result<Vec<_>>>()?;
        Ok(ScheduleState {
            params,
            current_probs: initial_probs.clone(),
            initial_probs,
            lambdas,
            current_epoch: 1,
        })
    }

    /// Curriculum state from class scores.
    pub fn from_scores(
        labels: &[FineLabel],
        scores: &ScoreTable,
        params: ScheduleParams,
    ) -> Result<Self> {
        ScheduleState::new(init_probabilities(labels, scores)?, params)
    }

    /// Uniform `1/N` at every epoch.
    pub fn uniform(n_samples: usize, params: ScheduleParams) -> Result<Self> {
        if n_samples == 0 {
            return Err(Error::EmptyDataset);
        }
        ScheduleState::new(vec![1.0 / n_samples as f64; n_samples], params)
    }

    pub fn params(&self) -> ScheduleParams {
        self.params
    }

    pub fn n_samples(&self) -> usize {
        self.initial_probs.len()
    }

    pub fn current_epoch(&self) -> usize {
        self.current_epoch
    }

    pub fn initial_probs(&self) -> &[f64] {
        &self.initial_probs
    }

    pub fn lambdas(&self) -> &[f64] {
        &self.lambdas
    }

    pub fn current_probs(&self) -> &[f64] {
        &self.current_probs
    }

    pub fn is_final_epoch(&self) -> bool {
        self.current_epoch >= self.params.total_epochs
    }

    /// Moves to the next epoch in place.
    pub fn advance(&mut self) -> Result<()> {
        if self.is_final_epoch() {
            return Err(Error::ScheduleExhausted(self.current_epoch));
        }
        self.current_epoch += 1;
        if self.current_epoch <= self.params.transition_epoch {
            for (p, &lambda) in self.current_probs.iter_mut().zip(&self.lambdas) {
                *p *= lambda;
            }
        } else {
            let uniform = 1.0 / self.n_samples() as f64;
            self.current_probs.iter_mut().for_each(|p| *p = uniform);
        }
        Ok(())
    }

    /// Successor state for the next epoch.
    pub fn advance_epoch(&self) -> Result<Self> {
        let mut next = self.clone();
        next.advance()?;
        Ok(next)
    }
}

/// Normalises arbitrary strictly positive per-sample weights (for example the
/// output of another curriculum method) and builds a schedule from them.
pub fn from_external_probabilities(probs: &[f64], params: ScheduleParams) -> Result<ScheduleState> {
    ScheduleState::new(normalize_positive(probs)?, params)
}

pub(crate) fn normalize_positive(weights: &[f64]) -> Result<Vec<f64>> {
    if weights.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if let Some(&bad) = weights.iter().find(|w| !(w.is_finite() && **w > 0.0)) {
        return Err(Error::InvalidProbability(bad));
    }
    let total = compensated_sum(weights.iter().copied());
    if !total.is_finite() {
        return Err(Error::InvalidProbability(total));
    }
    Ok(weights.iter().map(|w| w / total).collect())
}

/// Source of epoch-1 probabilities. The per-epoch update applies unchanged
/// whatever the source.
pub trait InitialProbabilities {
    fn initial_probabilities(&self, labels: &[FineLabel]) -> Result<Vec<f64>>;

    fn schedule(&self, labels: &[FineLabel], params: ScheduleParams) -> Result<ScheduleState> {
        ScheduleState::new(self.initial_probabilities(labels)?, params)
    }
}

impl InitialProbabilities for ScoreTable {
    fn initial_probabilities(&self, labels: &[FineLabel]) -> Result<Vec<f64>> {
        init_probabilities(labels, self)
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct UniformProbabilities;

impl InitialProbabilities for UniformProbabilities {
    fn initial_probabilities(&self, labels: &[FineLabel]) -> Result<Vec<f64>> {
        if labels.is_empty() {
            return Err(Error::EmptyDataset);
        }
        Ok(vec![1.0 / labels.len() as f64; labels.len()])
    }
}

/// Per-sample weights supplied by an outside method, aligned with the
/// training set order.
#[derive(Debug, Clone, PartialEq)]
pub struct ExternalProbabilities(pub Vec<f64>);

impl InitialProbabilities for ExternalProbabilities {
    fn initial_probabilities(&self, labels: &[FineLabel]) -> Result<Vec<f64>> {
        if self.0.len() != labels.len() {
            return Err(Error::LengthMismatch(format!(
                "{} external probabilities for {} samples",
                self.0.len(),
                labels.len()
            )));
        }
        normalize_positive(&self.0)
    }
}
