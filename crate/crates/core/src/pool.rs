//! Bucket maintenance at block boundaries: ε-dominance eviction, weight
//! resets, forwarding of survivors to higher levels, and sampling of fresh
//! experts.
//!
//! Pool evolution depends only on the sampled experts and the loss stream,
//! never on the MWU randomness, so a [`SamplingTrace`] is enough to replay
//! it exactly.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seeds::Rng64;
use crate::types::{ArrivalStamp, Bucket, ExpertId, HierarchyConfig, LevelWeights, PoolEntry};

/// `candidate` ε-dominates `target` when it arrived strictly earlier and its
/// loss since arrival is at most `(1 + ε)` times the target's.
#[inline]
pub fn dominates(candidate: &PoolEntry, target: &PoolEntry, epsilon: f64) -> bool {
    candidate.arrival < target.arrival && candidate.loss <= (1.0 + epsilon) * target.loss
}

/// Largest level `k'` whose block size divides `t`. Requires `t ≡ 0 (mod T_0)`.
pub fn top_touched_level(config: &HierarchyConfig, t: u64) -> usize {
    (0..config.levels()).rev().find(|&i| t % config.block_size(i) == 0).unwrap_or(0)
}

/// `τ`: the latest day `<= t` that is a multiple of `T_{k'+1}`, where
/// `T_k` is the horizon.
pub fn last_boundary(config: &HierarchyConfig, t: u64, top: usize) -> u64 {
    let next = config.block_size(top + 1);
    (t / next) * next
}

/// Upper bound `ln(T) / ln(1 + ε) + 1` on entries that can survive one
/// eviction pass among those up for eviction.
pub fn survivor_bound(config: &HierarchyConfig) -> f64 {
    let eps = config.epsilon();
    if eps <= 0.0 {
        return f64::INFINITY;
    }
    (config.horizon() as f64).ln() / eps.ln_1p() + 1.0
}

/// Number of entries at or after `boundary`.
pub fn post_eviction_bound_check(bucket: &Bucket, boundary: ArrivalStamp) -> usize {
    bucket.entries().iter().filter(|e| e.arrival >= boundary).count()
}

/// Removes every entry at or after `boundary` that is ε-dominated by some
/// entry of the pre-eviction pool. Returns the number removed.
///
/// Entries are sorted by arrival, so "dominated by someone earlier" is a
/// comparison against the running minimum loss of the prefix.
pub fn evict(bucket: &mut Bucket, boundary: ArrivalStamp, epsilon: f64) -> usize {
    let before = bucket.entries.len();
    let mut prefix_min = f64::INFINITY;
    let mut keep = Vec::with_capacity(before);
    for entry in &bucket.entries {
        let dominated = entry.arrival >= boundary && prefix_min <= (1.0 + epsilon) * entry.loss;
        keep.push(!dominated);
        prefix_min = prefix_min.min(entry.loss);
    }
    let mut flags = keep.into_iter();
    bucket.entries.retain(|_| flags.next().unwrap());
    before - bucket.entries.len()
}

/// One sampled expert as recorded during an update.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SampleRecord {
    pub day: u64,
    pub level: usize,
    pub expert: ExpertId,
    pub stamp: ArrivalStamp,
}

/// Every expert sampled over a run, in draw order.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SamplingTrace {
    pub records: Vec<SampleRecord>,
}

impl SamplingTrace {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Samples drawn into `level` at `day`, in slot order.
    pub fn at(&self, day: u64, level: usize) -> impl Iterator<Item = &SampleRecord> {
        self.records.iter().filter(move |r| r.day == day && r.level == level)
    }
}

/// Source of the `m` experts sampled into a bucket.
pub trait SampleSource {
    fn draw(&mut self, day: u64, level: usize, slot: u32) -> Result<ExpertId>;
}

/// Uniform sampling with replacement over `[0, n)`.
pub struct UniformSampler {
    rng: Rng64,
    n: usize,
}

impl UniformSampler {
    pub fn new(rng: Rng64, n: usize) -> Self {
        UniformSampler { rng, n }
    }
}

impl SampleSource for UniformSampler {
    fn draw(&mut self, _day: u64, _level: usize, _slot: u32) -> Result<ExpertId> {
        Ok(ExpertId::new(self.rng.gen_range(0..self.n)))
    }
}

/// Replays a recorded trace, checking that draws happen in the same order.
pub struct TraceReplay<'a> {
    records: &'a [SampleRecord],
    pos: usize,
}

impl<'a> TraceReplay<'a> {
    pub fn new(trace: &'a SamplingTrace) -> Self {
        TraceReplay { records: &trace.records, pos: 0 }
    }

    pub fn exhausted(&self) -> bool {
        self.pos == self.records.len()
    }
}

impl SampleSource for TraceReplay<'_> {
    fn draw(&mut self, day: u64, level: usize, slot: u32) -> Result<ExpertId> {
        let rec = self
            .records
            .get(self.pos)
            .ok_or_else(|| Error::Trace(format!("trace ended before day {day}, level {level}")))?;
        if rec.day != day || rec.level != level || rec.stamp.seq != slot {
            return Err(Error::Trace(format!(
                "expected draw (day {day}, level {level}, slot {slot}), trace has (day {}, level {}, slot {})",
                rec.day, rec.level, rec.stamp.seq
            )));
        }
        self.pos += 1;
        Ok(rec.expert)
    }
}

/// What one call to [`update_buckets`] did.
#[derive(Debug, Clone, PartialEq)]
pub struct UpdateReport {
    pub day: u64,
    /// `k'`, the highest level updated.
    pub top_level: usize,
    /// `τ`; entries at or after `(τ, Sampled)` were up for eviction.
    pub tau: u64,
    pub evicted: Vec<usize>,
    /// Per updated level: survivors among the entries up for eviction.
    pub survivors: Vec<usize>,
}

/// All buckets plus the external level weights.
#[derive(Debug, Clone, PartialEq)]
pub struct PoolSet {
    buckets: Vec<Bucket>,
    weights: LevelWeights,
}

impl PoolSet {
    pub fn new(levels: usize) -> Self {
        PoolSet { buckets: (0..levels).map(Bucket::new).collect(), weights: LevelWeights::new(levels) }
    }

    pub fn from_parts(buckets: Vec<Bucket>, weights: LevelWeights) -> Self {
        PoolSet { buckets, weights }
    }

    pub fn buckets(&self) -> &[Bucket] {
        &self.buckets
    }

    pub fn bucket(&self, level: usize) -> &Bucket {
        &self.buckets[level]
    }

    pub fn weights(&self) -> &LevelWeights {
        &self.weights
    }

    #[cfg(test)]
    pub(crate) fn weights_mut(&mut self) -> &mut LevelWeights {
        &mut self.weights
    }

    pub(crate) fn parts_mut(&mut self) -> (&mut [Bucket], &mut LevelWeights) {
        (&mut self.buckets, &mut self.weights)
    }

    pub fn entry_count(&self) -> usize {
        self.buckets.iter().map(Bucket::len).sum()
    }

    /// Sorted, de-duplicated experts referenced by any entry.
    pub fn tracked_experts(&self) -> Vec<ExpertId> {
        let mut ids: Vec<ExpertId> =
            self.buckets.iter().flat_map(|b| b.entries().iter().map(|e| e.expert)).collect();
        ids.sort_unstable();
        ids.dedup();
        ids
    }

    /// Adds a day of losses to every entry, in bucket then entry order.
    pub fn accumulate<F>(&mut self, mut loss_of: F) -> Result<()>
    where
        F: FnMut(ExpertId) -> Result<f64>,
    {
        for bucket in &mut self.buckets {
            for entry in &mut bucket.entries {
                entry.loss += loss_of(entry.expert)?;
            }
        }
        Ok(())
    }
}

/// Block-boundary maintenance at day `t`.
///
/// Levels `0..=k'` are evicted and reset; survivors of lower levels are
/// copied upward; each updated level then receives `m` fresh samples.
/// Every sample is appended to `trace` when one is given.
pub fn update_buckets(
    pools: &mut PoolSet,
    config: &HierarchyConfig,
    t: u64,
    sampler: &mut dyn SampleSource,
    mut trace: Option<&mut SamplingTrace>,
) -> Result<UpdateReport> {
    let t0 = config.block_size(0);
    if t % t0 != 0 {
        return Err(Error::Contract(format!("bucket update at day {t}, not a multiple of T_0 = {t0}")));
    }
    if pools.buckets.len() != config.levels() {
        return Err(Error::Contract(format!(
            "{} buckets for a {}-level configuration",
            pools.buckets.len(),
            config.levels()
        )));
    }
    let top = top_touched_level(config, t);
    let tau = last_boundary(config, t, top);
    let boundary = ArrivalStamp::half_day(tau);
    let eps = config.epsilon();

    let mut evicted = Vec::with_capacity(top + 1);
    let mut survivors = Vec::with_capacity(top + 1);
    for level in 0..=top {
        let bucket = &mut pools.buckets[level];
        evicted.push(evict(bucket, boundary, eps));
        survivors.push(post_eviction_bound_check(bucket, boundary));
        for entry in &mut bucket.entries {
            entry.log_weight = 0.0;
        }
        if level > 0 {
            pools.weights.reset(level - 1);
        }
    }

    // Top-down, so each level copies lower pools before they receive their
    // own forwards: copies come from post-eviction, pre-sampling pools.
    for level in (1..=top).rev() {
        let copies: Vec<ExpertId> =
            pools.buckets[..level].iter().flat_map(|b| b.entries().iter().map(|e| e.expert)).collect();
        let bucket = &mut pools.buckets[level];
        for (seq, expert) in copies.into_iter().enumerate() {
            bucket.push(PoolEntry::fresh(expert, ArrivalStamp::forwarded(t, seq as u32)))?;
        }
    }

    for level in 0..=top {
        for slot in 0..config.m() as u32 {
            let expert = sampler.draw(t, level, slot)?;
            if expert.index() >= config.n() {
                return Err(Error::Trace(format!("sampled expert {expert} outside universe of {}", config.n())));
            }
            let stamp = ArrivalStamp::sampled(t, slot);
            pools.buckets[level].push(PoolEntry::fresh(expert, stamp))?;
            if let Some(trace) = trace.as_deref_mut() {
                trace.records.push(SampleRecord { day: t, level, expert, stamp });
            }
        }
    }

    for level in 0..=top {
        mark_protection(&mut pools.buckets[level], config, t);
    }

    Ok(UpdateReport { day: t, top_level: top, tau, evicted, survivors })
}

/// Entries of level `i` that arrived before the half-day after the last
/// `T_{i+1}` boundary cannot be up for eviction until the next one.
fn mark_protection(bucket: &mut Bucket, config: &HierarchyConfig, t: u64) {
    let period = config.block_size(bucket.level + 1);
    let last = (t / period) * period;
    let next = last + period;
    let cutoff = ArrivalStamp::half_day(last);
    for entry in &mut bucket.entries {
        entry.protected_until = (entry.arrival < cutoff).then_some(next);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seeds::rng_from;

    fn entry(day: u64, sampled: bool, seq: u32, loss: f64) -> PoolEntry {
        let stamp = if sampled { ArrivalStamp::sampled(day, seq) } else { ArrivalStamp::forwarded(day, seq) };
        PoolEntry { loss, ..PoolEntry::fresh(ExpertId(seq), stamp) }
    }

    #[test]
    fn dominance_examples() {
        let early = |l| entry(3, true, 0, l);
        let late = |l| entry(7, true, 0, l);
        assert!(dominates(&early(10.0), &late(10.0), 0.1));
        assert!(!dominates(&early(12.0), &late(10.0), 0.1));
        assert!(dominates(&early(0.0), &late(0.0), 0.3));
        assert!(!dominates(&late(0.0), &early(5.0), 0.3));
        let x = early(1.0);
        assert!(!dominates(&x, &x, 0.5));
    }

    #[test]
    fn touched_levels_and_tau() {
        let c = HierarchyConfig::new(10, 2, vec![4, 16, 64], 256).unwrap();
        assert_eq!(top_touched_level(&c, 48), 1);
        assert_eq!(last_boundary(&c, 48, 1), 0);
        assert_eq!(top_touched_level(&c, 0), 2);
        assert_eq!(top_touched_level(&c, 20), 0);
        assert_eq!(last_boundary(&c, 20, 0), 16);
        assert_eq!(top_touched_level(&c, 128), 2);
        assert_eq!(last_boundary(&c, 128, 2), 0);
    }

    #[test]
    fn update_at_48_touches_levels_zero_and_one() {
        let c = HierarchyConfig::new(10, 2, vec![4, 16, 64], 256).unwrap();
        let mut pools = PoolSet::new(3);
        let mut sampler = UniformSampler::new(rng_from(0), 10);
        update_buckets(&mut pools, &c, 0, &mut sampler, None).unwrap();
        for b in pools.buckets() {
            assert_eq!(b.len(), 2);
        }
        pools.weights_mut().set(0, -1.0, -2.0);
        pools.weights_mut().set(1, -3.0, -4.0);
        let before = pools.clone();
        let r = update_buckets(&mut pools, &c, 48, &mut sampler, None).unwrap();
        assert_eq!((r.top_level, r.tau), (1, 0));
        // all-zero losses: every later entry is dominated by the first
        assert_eq!(r.evicted, vec![1, 1]);
        assert_eq!(pools.bucket(0).len(), 1 + 2);
        assert_eq!(pools.bucket(1).len(), 1 + 1 + 2);
        assert_eq!(pools.bucket(2), before.bucket(2));
        // pair 0 sits between levels 0 and 1 and is restarted; pair 1 is not
        assert_eq!((pools.weights().log_big(0), pools.weights().log_small(0)), (0.0, 0.0));
        assert_eq!(pools.weights().log_big(1), -3.0);
        let fwd = &pools.bucket(1).entries()[1];
        assert_eq!(fwd.arrival, ArrivalStamp::forwarded(48, 0));
        assert_eq!(fwd.expert, pools.bucket(0).entries()[0].expert);
    }

    #[test]
    fn initialization_fills_every_bucket() {
        let c = HierarchyConfig::new(10, 3, vec![4, 16], 64).unwrap();
        let mut pools = PoolSet::new(2);
        let mut trace = SamplingTrace::default();
        let r = update_buckets(&mut pools, &c, 0, &mut UniformSampler::new(rng_from(1), 10), Some(&mut trace))
            .unwrap();
        assert_eq!(r.evicted, vec![0, 0]);
        assert_eq!(pools.bucket(0).len(), 3);
        assert_eq!(pools.bucket(1).len(), 3);
        assert_eq!(trace.len(), 6);
    }

    #[test]
    fn protected_entry_is_retained_and_dominates() {
        // A forwarded at day 0 (before the τ = 0 half-day boundary), B sampled at day 4
        let c = HierarchyConfig::new(10, 1, vec![4, 16], 64).unwrap();
        let eps = 0.1;
        let mut b = Bucket::from_entries(1, vec![entry(0, false, 0, 5.0), entry(4, true, 1, 5.0)]);
        let removed = evict(&mut b, ArrivalStamp::half_day(0), eps);
        assert_eq!(removed, 1);
        assert_eq!(b.entries()[0].arrival, ArrivalStamp::forwarded(0, 0));
        // A is kept even when a (hypothetical) earlier entry would dominate it
        let mut b = Bucket::from_entries(
            1,
            vec![entry(0, false, 0, 0.0), entry(0, false, 1, 9.0), entry(4, true, 2, 9.0)],
        );
        evict(&mut b, ArrivalStamp::half_day(0), eps);
        assert_eq!(b.len(), 2);
        let _ = c;
    }

    #[test]
    fn bound_check_examples() {
        let c = HierarchyConfig::new(10, 16, vec![64], 4096).unwrap();
        let bound = survivor_bound(&c);
        assert!((bound - 20.87).abs() < 0.01, "{bound}");
        assert_eq!(post_eviction_bound_check(&Bucket::new(0), ArrivalStamp::half_day(0)), 0);
        let one = Bucket::from_entries(0, vec![entry(4, true, 0, 1.0)]);
        assert_eq!(post_eviction_bound_check(&one, ArrivalStamp::half_day(0)), 1);
    }

    #[test]
    fn off_boundary_update_is_rejected() {
        let c = HierarchyConfig::new(10, 2, vec![4, 16], 64).unwrap();
        let mut pools = PoolSet::new(2);
        let err = update_buckets(&mut pools, &c, 6, &mut UniformSampler::new(rng_from(0), 10), None);
        assert!(matches!(err, Err(Error::Contract(_))));
    }

    #[test]
    fn replaying_a_trace_reproduces_pools() {
        let c = HierarchyConfig::new(12, 3, vec![2, 8], 32).unwrap();
        let stream = crate::streams::generate(&crate::streams::StreamSpec::iid_one_good(12, 32, 5, 0.2, 0.5)).unwrap();
        let run = |sampler: &mut dyn SampleSource, trace: Option<&mut SamplingTrace>| {
            let mut pools = PoolSet::new(2);
            let mut trace = trace;
            update_buckets(&mut pools, &c, 0, sampler, trace.as_deref_mut()).unwrap();
            for day in 0..31 {
                pools.accumulate(|e| stream.loss(day, e)).unwrap();
                if (day + 1) % 2 == 0 {
                    update_buckets(&mut pools, &c, day + 1, sampler, trace.as_deref_mut()).unwrap();
                }
            }
            pools
        };
        let mut trace = SamplingTrace::default();
        let original = run(&mut UniformSampler::new(rng_from(9), 12), Some(&mut trace));
        let mut replay = TraceReplay::new(&trace);
        let replayed = run(&mut replay, None);
        assert!(replay.exhausted());
        assert_eq!(original, replayed);
    }

    #[test]
    fn replay_detects_mismatch() {
        let trace = SamplingTrace {
            records: vec![SampleRecord { day: 4, level: 0, expert: ExpertId(1), stamp: ArrivalStamp::sampled(4, 0) }],
        };
        let mut r = TraceReplay::new(&trace);
        assert!(matches!(r.draw(0, 0, 0), Err(Error::Trace(_))));
    }
}
