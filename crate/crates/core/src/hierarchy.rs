//! The hierarchical learner: daily predictions mixed across levels, weight
//! updates, and bucket maintenance at block boundaries.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::learner::{LossView, Learner, WORDS_PER_ENTRY, WORD_OVERHEAD};
use crate::mwu::{learning_rates, penalize, sample_log_weighted, REBASE_THRESHOLD};
use crate::pool::{update_buckets, PoolSet, SamplingTrace, UniformSampler, UpdateReport};
use crate::seeds::{derive_seed, rng_from, tag, Rng64};
use crate::types::{ExpertId, HierarchyConfig};

/// Which loss drives the big weight of pair `i − 1`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExternalFeedback {
    /// Loss of the level-`i` internal sample `e_i`, the option the big
    /// weight stands for.
    #[default]
    LevelSample,
    /// Loss of the mixed prediction `preds_i`.
    Composite,
}

/// One day's draws: `samples[i]` is bucket `i`'s internal pick and
/// `preds[i]` the mixed prediction up to level `i`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Predictions {
    pub samples: Vec<ExpertId>,
    pub preds: Vec<ExpertId>,
}

impl Predictions {
    pub fn played(&self) -> ExpertId {
        *self.preds.last().expect("at least one level")
    }
}

pub fn get_predictions<R: Rng + ?Sized>(pools: &PoolSet, rng: &mut R) -> Result<Predictions> {
    let levels = pools.buckets().len();
    let mut samples = Vec::with_capacity(levels);
    let mut preds: Vec<ExpertId> = Vec::with_capacity(levels);
    for (i, bucket) in pools.buckets().iter().enumerate() {
        let idx = sample_log_weighted(bucket.entries().iter().map(|e| e.log_weight), rng)
            .ok_or_else(|| Error::Invariant(format!("bucket {i} is empty")))?;
        let e_i = bucket.entries()[idx].expert;
        samples.push(e_i);
        let pick = if i == 0 || rng.gen::<f64>() < pools.weights().prob_big(i - 1) { e_i } else { preds[i - 1] };
        preds.push(pick);
    }
    Ok(Predictions { samples, preds })
}

fn rebase_pair(big: &mut f64, small: &mut f64) {
    let max = big.max(*small);
    if max < REBASE_THRESHOLD {
        *big -= max;
        *small -= max;
    }
}

/// Applies one day of losses: entry losses and internal weights in every
/// bucket, then the external pairs.
pub fn update_weights(
    pools: &mut PoolSet,
    config: &HierarchyConfig,
    day: &Predictions,
    losses: &LossView<'_>,
    feedback: ExternalFeedback,
) -> Result<()> {
    let levels = config.levels();
    let (buckets, weights) = pools.parts_mut();
    for (i, bucket) in buckets.iter_mut().enumerate() {
        let (eta, _) = learning_rates(bucket.len(), config.block_size(i));
        let mut max = f64::NEG_INFINITY;
        for entry in bucket.entries_mut() {
            let l = losses.get(entry.expert)?;
            entry.loss += l;
            entry.log_weight = penalize(entry.log_weight, eta, l, 1.0);
            max = max.max(entry.log_weight);
        }
        if max < REBASE_THRESHOLD {
            for entry in bucket.entries_mut() {
                entry.log_weight -= max;
            }
        }
    }
    for i in 0..levels {
        let (_, eta) = learning_rates(1, config.block_size(i));
        let pred_loss = losses.get(day.preds[i])?;
        if i >= 1 {
            let big_loss = match feedback {
                ExternalFeedback::LevelSample => losses.get(day.samples[i])?,
                ExternalFeedback::Composite => pred_loss,
            };
            let (_, eta_prev) = learning_rates(1, config.block_size(i - 1));
            let big = weights.big_mut(i - 1);
            *big = penalize(*big, eta_prev, big_loss, 1.0);
        }
        if i + 1 < levels {
            let small = weights.small_mut(i);
            *small = penalize(*small, eta, pred_loss, 1.0);
        }
    }
    for pair in 0..weights.len() {
        let (mut big, mut small) = (weights.log_big(pair), weights.log_small(pair));
        rebase_pair(&mut big, &mut small);
        weights.set(pair, big, small);
    }
    Ok(())
}

/// Memory charged to a hierarchy with `levels` levels and `entries` pool
/// entries: 4 words per entry, two per external pair, one per block size.
pub fn hierarchy_words(levels: usize, entries: usize) -> usize {
    WORDS_PER_ENTRY * entries + 2 * levels.saturating_sub(1) + (levels + 1) + WORD_OVERHEAD
}

/// The hierarchical learner. Sampling and MWU draws use separate seeds so
/// that the pools depend only on the sampling seed and the stream.
pub struct Hierarchy {
    config: HierarchyConfig,
    feedback: ExternalFeedback,
    pools: PoolSet,
    sampler: UniformSampler,
    mwu_rng: Rng64,
    trace: SamplingTrace,
    reports: Vec<UpdateReport>,
    day: u64,
    query: Vec<ExpertId>,
    today: Option<Predictions>,
}

impl Hierarchy {
    pub fn new(config: HierarchyConfig, seed: u64) -> Result<Self> {
        Self::with_seeds(
            config,
            derive_seed(seed, tag::SAMPLING, 0),
            derive_seed(seed, tag::MWU, 0),
        )
    }

    pub fn with_seeds(config: HierarchyConfig, sampling_seed: u64, mwu_seed: u64) -> Result<Self> {
        let mut pools = PoolSet::new(config.levels());
        let mut sampler = UniformSampler::new(rng_from(sampling_seed), config.n());
        let mut trace = SamplingTrace::default();
        let report = update_buckets(&mut pools, &config, 0, &mut sampler, Some(&mut trace))?;
        let query = pools.tracked_experts();
        Ok(Hierarchy {
            config,
            feedback: ExternalFeedback::default(),
            pools,
            sampler,
            mwu_rng: rng_from(mwu_seed),
            trace,
            reports: vec![report],
            day: 0,
            query,
            today: None,
        })
    }

    pub fn with_feedback(mut self, feedback: ExternalFeedback) -> Self {
        self.feedback = feedback;
        self
    }

    pub fn config(&self) -> &HierarchyConfig {
        &self.config
    }

    pub fn pools(&self) -> &PoolSet {
        &self.pools
    }

    pub fn day(&self) -> u64 {
        self.day
    }

    /// Every bucket update so far, starting with the initialization at day 0.
    pub fn reports(&self) -> &[UpdateReport] {
        &self.reports
    }

    pub fn trace(&self) -> &SamplingTrace {
        &self.trace
    }

    /// Today's draws, once `play` has been called.
    pub fn predictions(&self) -> Option<&Predictions> {
        self.today.as_ref()
    }
}

impl Learner for Hierarchy {
    fn num_experts(&self) -> usize {
        self.config.n()
    }

    fn horizon(&self) -> u64 {
        self.config.horizon()
    }

    fn play(&mut self) -> Result<ExpertId> {
        if self.day >= self.config.horizon() {
            return Err(Error::Horizon { day: self.day, horizon: self.config.horizon() });
        }
        let p = get_predictions(&self.pools, &mut self.mwu_rng)?;
        let played = p.played();
        self.today = Some(p);
        Ok(played)
    }

    fn query_set(&self) -> &[ExpertId] {
        &self.query
    }

    fn observe(&mut self, losses: &LossView<'_>) -> Result<()> {
        let today = self.today.take().ok_or_else(|| Error::Contract("observe called before play".into()))?;
        update_weights(&mut self.pools, &self.config, &today, losses, self.feedback)?;
        self.day += 1;
        let t = self.day;
        // No block starts at the horizon, so the last boundary is skipped.
        if t % self.config.block_size(0) == 0 && t < self.config.horizon() {
            let report = update_buckets(&mut self.pools, &self.config, t, &mut self.sampler, Some(&mut self.trace))?;
            self.reports.push(report);
            self.query = self.pools.tracked_experts();
        }
        Ok(())
    }

    fn words(&self) -> usize {
        hierarchy_words(self.config.levels(), self.pools.entry_count())
    }

    fn entries(&self) -> usize {
        self.pools.entry_count()
    }

    fn sampling_trace(&self) -> Option<&SamplingTrace> {
        Some(&self.trace)
    }
}
