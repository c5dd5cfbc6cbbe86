//! Knowledge-guided curriculum scheduling.
//!
//! Expert difficulty scores per fine-grained class set the epoch-1 sampling
//! probability of every training sample. The probabilities then decay
//! geometrically, sample by sample, towards uniform and are held uniform after
//! a transition epoch. Each epoch the training set is permuted by weighted
//! sampling without replacement under those probabilities.
//!
//! Around that core sits a small experiment harness: a synthetic data
//! generator whose class margins follow the difficulty scores, a natively
//! implemented classifier trained by SGD in plan order, and binary
//! classification metrics.

pub mod error;
pub mod experiment;
pub mod metrics;
mod numeric;
pub mod sampler;
pub mod schedule;
pub mod seed;
pub mod synth;
pub mod trainer;

pub use error::{Error, Result};
pub use numeric::{compensated_sum, sigmoid};
