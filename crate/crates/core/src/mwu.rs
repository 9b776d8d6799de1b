//! Exponential-weights kernel shared by the bucket-internal weights, the
//! external level pairs and the bootstrap's two-choice combiners.
//!
//! All weights live in the natural-log domain. A weight `w` is stored as
//! `ln w`; an update with loss `l`, range `r` and rate `eta` subtracts
//! `eta * l / r`.

use rand::Rng;

use crate::error::{Error, Result};

/// Log-weights are never pushed below this value (`exp(-745)` is the
/// smallest subnormal double).
pub const LOG_WEIGHT_FLOOR: f64 = -745.0;

// Once the largest weight sinks this far, every weight is shifted back up.
pub(crate) const REBASE_THRESHOLD: f64 = LOG_WEIGHT_FLOOR + 45.0;

#[inline]
pub fn penalize(log_weight: f64, eta: f64, loss: f64, range: f64) -> f64 {
    (log_weight - eta * loss / range).max(LOG_WEIGHT_FLOOR)
}

/// Draws an index with probability proportional to `exp(log_weight)`.
/// Returns `None` on an empty sequence.
pub fn sample_log_weighted<I, R>(log_weights: I, rng: &mut R) -> Option<usize>
where
    I: Iterator<Item = f64> + Clone,
    R: Rng + ?Sized,
{
    let max = log_weights.clone().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return None;
    }
    let total: f64 = log_weights.clone().map(|lw| (lw - max).exp()).sum();
    let target = rng.gen::<f64>() * total;
    let mut acc = 0.0;
    let mut last = 0;
    for (i, lw) in log_weights.enumerate() {
        acc += (lw - max).exp();
        last = i;
        if target < acc {
            return Some(i);
        }
    }
    Some(last)
}

/// `(eta_internal, eta_external)` for a bucket of `bucket_size` entries and
/// blocks of `block_len` days. `ln |B|` is floored at 1.
pub fn learning_rates(bucket_size: usize, block_len: u64) -> (f64, f64) {
    let len = block_len.max(1) as f64;
    let log_size = (bucket_size.max(1) as f64).ln().max(1.0);
    ((log_size / len).sqrt(), (2.0 / len).sqrt())
}

/// Plain MWU over a fixed set of options.
#[derive(Debug, Clone, PartialEq)]
pub struct MwuState {
    log_weights: Vec<f64>,
    eta: f64,
}

impl MwuState {
    pub fn uniform(len: usize, eta: f64) -> Result<Self> {
        Self::from_log_weights(vec![0.0; len], eta)
    }

    pub fn from_log_weights(log_weights: Vec<f64>, eta: f64) -> Result<Self> {
        if !(eta > 0.0 && eta.is_finite()) {
            return Err(Error::Config(format!("learning rate must be positive and finite, got {eta}")));
        }
        if log_weights.iter().any(|w| w.is_nan() || *w == f64::INFINITY) {
            return Err(Error::Config("log-weights must be finite or -inf".into()));
        }
        let log_weights = log_weights.into_iter().map(|w| w.max(LOG_WEIGHT_FLOOR)).collect();
        Ok(MwuState { log_weights, eta })
    }

    /// Rate `sqrt(ln n / horizon)` used for a full-information run.
    pub fn tuned_rate(len: usize, horizon: u64) -> f64 {
        ((len.max(2) as f64).ln() / horizon.max(1) as f64).sqrt()
    }

    pub fn len(&self) -> usize {
        self.log_weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.log_weights.is_empty()
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    pub fn log_weights(&self) -> &[f64] {
        &self.log_weights
    }

    pub fn reset(&mut self) {
        self.log_weights.iter_mut().for_each(|w| *w = 0.0);
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<usize> {
        sample_log_weighted(self.log_weights.iter().copied(), rng)
            .ok_or_else(|| Error::Config("cannot sample from an empty weight vector".into()))
    }

    pub fn probabilities(&self) -> Vec<f64> {
        let max = self.log_weights.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let raw: Vec<f64> = self.log_weights.iter().map(|w| (w - max).exp()).collect();
        let total: f64 = raw.iter().sum();
        raw.into_iter().map(|p| p / total).collect()
    }

    /// Applies one round of losses. Each loss must satisfy `|loss| <= range`;
    /// signed losses are allowed.
    pub fn update(&mut self, losses: &[f64], range: f64) -> Result<()> {
        if losses.len() != self.log_weights.len() {
            return Err(Error::Contract(format!(
                "expected {} losses, got {}",
                self.log_weights.len(),
                losses.len()
            )));
        }
        if !(range > 0.0 && range.is_finite()) {
            return Err(Error::Contract(format!("loss range must be positive, got {range}")));
        }
        if let Some(bad) = losses.iter().find(|l| !(l.abs() <= range)) {
            return Err(Error::Contract(format!("loss {bad} exceeds range {range}")));
        }
        for (w, &l) in self.log_weights.iter_mut().zip(losses) {
            *w = penalize(*w, self.eta, l, range);
        }
        let max = self.log_weights.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if max < REBASE_THRESHOLD {
            self.log_weights.iter_mut().for_each(|w| *w = (*w - max).max(LOG_WEIGHT_FLOOR));
        }
        Ok(())
    }
}
