//! Per-epoch weighted permutations.
//!
//! A permutation is drawn by weighted sampling without replacement: the first
//! position picks item `i` with probability `w_i / sum(w)`, each later
//! position picks among the remaining items proportionally to their weights.
//! This is realised with order-statistic keys: item `i` gets
//! `k_i = ln(u_i) / w_i` (the log of `u_i^(1/w_i)`) with `u_i ~ U(0, 1)`,
//! and items are emitted by decreasing key. Equal keys are broken by
//! ascending index.

use rand::RngCore;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::compensated_sum;
use crate::schedule::ScheduleState;
use crate::seed::{open_unit, Purpose, SeedSpec};

/// Sample order for one epoch (1-based).
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct EpochPlan {
    pub epoch: usize,
    pub order: Vec<usize>,
}

impl EpochPlan {
    pub fn is_permutation_of(&self, n: usize) -> bool {
        is_permutation(&self.order, n)
    }
}

pub fn is_permutation(order: &[usize], n: usize) -> bool {
    if order.len() != n {
        return false;
    }
    let mut seen = vec![false; n];
    for &i in order {
        if i >= n || seen[i] {
            return false;
        }
        seen[i] = true;
    }
    true
}

/// Rescales strictly positive weights to sum to one.
pub fn normalize_weights(weights: &[f64]) -> Result<Vec<f64>> {
    if weights.is_empty() {
        return Err(Error::EmptyDataset);
    }
    for (index, &weight) in weights.iter().enumerate() {
        if !(weight.is_finite() && weight > 0.0) {
            return Err(Error::InvalidWeight { index, weight });
        }
    }
    let total = compensated_sum(weights.iter().copied());
    Ok(weights.iter().map(|w| w / total).collect())
}

/// Draws one permutation of `0..weights.len()`.
pub fn sample_permutation(weights: &[f64], rng: &mut impl RngCore) -> Result<Vec<usize>> {
    let normalized = normalize_weights(weights)?;
    let mut keyed: Vec<(f64, usize)> = normalized
        .iter()
        .enumerate()
        .map(|(i, &w)| (open_unit(rng).ln() / w, i))
        .collect();
    keyed.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    Ok(keyed.into_iter().map(|(_, i)| i).collect())
}

/// Builds the whole curriculum: for every epoch, sample a permutation from
/// the schedule's current probabilities, then advance the schedule.
///
/// Epoch `e` of run `run` uses stream `(Sampler, run, e)`.
pub fn plan_training(schedule: &ScheduleState, seed: SeedSpec, run: u64) -> Result<Vec<EpochPlan>> {
    if schedule.current_epoch() != 1 {
        return Err(Error::Config(format!(
            "plan_training needs an epoch-1 schedule, got epoch {}",
            schedule.current_epoch()
        )));
    }
    let total = schedule.params().total_epochs();
    let mut per_epoch = Vec::with_capacity(total);
    let mut state = schedule.clone();
    loop {
        per_epoch.push((state.current_epoch(), state.current_probs().to_vec()));
        if state.is_final_epoch() {
            break;
        }
        state.advance()?;
    }
    per_epoch
        .into_par_iter()
        .map(|(epoch, probs)| {
            let mut rng = seed.stream(Purpose::Sampler, run, epoch as u64);
            let order = sample_permutation(&probs, &mut rng)?;
            Ok(EpochPlan { epoch, order })
        })
        .collect()
}
