//! Domain types shared by every module: expert identifiers, arrival stamps,
//! pool entries, buckets, the external level weights and the hierarchy
//! parameterization.

use std::cmp::Ordering;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::streams::LossStream;

/// Index of an expert in the universe `[0, n)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ExpertId(pub u32);

impl ExpertId {
    pub fn new(index: usize) -> Self {
        ExpertId(u32::try_from(index).expect("expert index exceeds u32"))
    }

    #[inline]
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for ExpertId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Which half of day `t` an entry arrived in. Forwarded copies occupy
/// `[t, t + 0.5)` and fresh samples `[t + 0.5, t + 1)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Phase {
    Forwarded,
    Sampled,
}

/// Exact encoding of a fractional arrival time as `(day, phase, seq)`.
///
/// The derived ordering is lexicographic over the fields in declaration
/// order, with `Forwarded < Sampled`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ArrivalStamp {
    pub day: u64,
    pub phase: Phase,
    pub seq: u32,
}

impl ArrivalStamp {
    pub fn forwarded(day: u64, seq: u32) -> Self {
        ArrivalStamp { day, phase: Phase::Forwarded, seq }
    }

    pub fn sampled(day: u64, seq: u32) -> Self {
        ArrivalStamp { day, phase: Phase::Sampled, seq }
    }

    /// The smallest stamp at or after `day + 0.5`. Entries at or after this
    /// stamp are the ones up for eviction when `day` is the last update of
    /// the next level.
    pub fn half_day(day: u64) -> Self {
        Self::sampled(day, 0)
    }
}

pub fn compare_stamps(a: &ArrivalStamp, b: &ArrivalStamp) -> Ordering {
    a.cmp(b)
}

/// One tracked copy of an expert inside a bucket.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoolEntry {
    pub expert: ExpertId,
    pub arrival: ArrivalStamp,
    /// Loss accumulated since `arrival.day`.
    pub loss: f64,
    /// Internal MWU weight, natural-log domain.
    pub log_weight: f64,
    /// Block boundary before which this entry cannot be up for eviction.
    pub protected_until: Option<u64>,
}

impl PoolEntry {
    pub fn fresh(expert: ExpertId, arrival: ArrivalStamp) -> Self {
        PoolEntry { expert, arrival, loss: 0.0, log_weight: 0.0, protected_until: None }
    }
}

/// Pool of entries for one level, kept sorted by arrival.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Bucket {
    pub level: usize,
    pub(crate) entries: Vec<PoolEntry>,
}

impl Bucket {
    pub fn new(level: usize) -> Self {
        Bucket { level, entries: Vec::new() }
    }

    pub fn from_entries(level: usize, mut entries: Vec<PoolEntry>) -> Self {
        entries.sort_by(|a, b| a.arrival.cmp(&b.arrival));
        Bucket { level, entries }
    }

    pub fn entries(&self) -> &[PoolEntry] {
        &self.entries
    }

    pub fn entries_mut(&mut self) -> &mut [PoolEntry] {
        &mut self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Appends an entry; its stamp must be later than every existing one.
    pub(crate) fn push(&mut self, entry: PoolEntry) -> Result<()> {
        if let Some(last) = self.entries.last() {
            if entry.arrival <= last.arrival {
                return Err(Error::Invariant(format!(
                    "bucket {}: stamp {:?} not after {:?}",
                    self.level, entry.arrival, last.arrival
                )));
            }
        }
        self.entries.push(entry);
        Ok(())
    }
}

/// External weights between consecutive levels. Pair `i` mixes the level
/// `i + 1` sample (big) against the composite prediction of levels `0..=i`
/// (small). Both are kept as natural-log weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelWeights {
    pairs: Vec<(f64, f64)>,
}

impl LevelWeights {
    pub fn new(levels: usize) -> Self {
        LevelWeights { pairs: vec![(0.0, 0.0); levels.saturating_sub(1)] }
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn log_big(&self, pair: usize) -> f64 {
        self.pairs[pair].0
    }

    pub fn log_small(&self, pair: usize) -> f64 {
        self.pairs[pair].1
    }

    pub fn set(&mut self, pair: usize, log_big: f64, log_small: f64) {
        self.pairs[pair] = (log_big, log_small);
    }

    pub fn reset(&mut self, pair: usize) {
        if pair < self.pairs.len() {
            self.pairs[pair] = (0.0, 0.0);
        }
    }

    pub(crate) fn big_mut(&mut self, pair: usize) -> &mut f64 {
        &mut self.pairs[pair].0
    }

    pub(crate) fn small_mut(&mut self, pair: usize) -> &mut f64 {
        &mut self.pairs[pair].1
    }

    /// Probability of following the higher level's own sample, `w / (w + w')`.
    pub fn prob_big(&self, pair: usize) -> f64 {
        let (big, small) = self.pairs[pair];
        1.0 / (1.0 + (small - big).exp())
    }
}

/// Full parameterization of the hierarchical algorithm.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawHierarchyConfig", into = "RawHierarchyConfig")]
pub struct HierarchyConfig {
    n: usize,
    m: usize,
    block_sizes: Vec<u64>,
    horizon: u64,
    epsilon: f64,
}

#[derive(Serialize, Deserialize)]
struct RawHierarchyConfig {
    n: usize,
    m: usize,
    block_sizes: Vec<u64>,
    horizon: u64,
}

impl TryFrom<RawHierarchyConfig> for HierarchyConfig {
    type Error = Error;

    fn try_from(raw: RawHierarchyConfig) -> Result<Self> {
        HierarchyConfig::new(raw.n, raw.m, raw.block_sizes, raw.horizon)
    }
}

impl From<HierarchyConfig> for RawHierarchyConfig {
    fn from(c: HierarchyConfig) -> Self {
        RawHierarchyConfig { n: c.n, m: c.m, block_sizes: c.block_sizes, horizon: c.horizon }
    }
}

impl HierarchyConfig {
    /// Builds and validates a configuration; `epsilon` is `ln(horizon) / m`.
    ///
    /// `block_sizes` holds `T_0 < ... < T_{k-1}`; each must divide the next
    /// and `T_{k-1}` must divide `horizon`. The top block may equal the
    /// horizon, which is the single-block degenerate case.
    pub fn new(n: usize, m: usize, block_sizes: Vec<u64>, horizon: u64) -> Result<Self> {
        if n == 0 {
            return Err(Error::Config("n must be at least 1".into()));
        }
        if m == 0 {
            return Err(Error::Config("m must be at least 1".into()));
        }
        if block_sizes.is_empty() {
            return Err(Error::Config("at least one level is required".into()));
        }
        if block_sizes[0] == 0 {
            return Err(Error::Config("T_0 must be positive".into()));
        }
        for (i, w) in block_sizes.windows(2).enumerate() {
            if w[1] <= w[0] {
                return Err(Error::Config(format!("T_{} = {} not above T_{} = {}", i + 1, w[1], i, w[0])));
            }
            if w[1] % w[0] != 0 {
                return Err(Error::Config(format!("T_{} = {} not a multiple of T_{} = {}", i + 1, w[1], i, w[0])));
            }
        }
        let top = *block_sizes.last().unwrap();
        if horizon < top || horizon % top != 0 {
            return Err(Error::Config(format!("horizon {horizon} not a multiple of top block size {top}")));
        }
        let epsilon = (horizon as f64).ln() / m as f64;
        Ok(HierarchyConfig { n, m, block_sizes, horizon, epsilon })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.m
    }

    /// Number of levels `k`.
    pub fn levels(&self) -> usize {
        self.block_sizes.len()
    }

    pub fn block_sizes(&self) -> &[u64] {
        &self.block_sizes
    }

    /// `T_i` for `i < k`; `T_k` is the horizon.
    pub fn block_size(&self, level: usize) -> u64 {
        if level < self.block_sizes.len() {
            self.block_sizes[level]
        } else {
            self.horizon
        }
    }

    pub fn horizon(&self) -> u64 {
        self.horizon
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }
}

/// `L_e(I)`: total loss of expert `e` over days `[lo, hi)`.
pub fn interval_loss(stream: &LossStream, expert: ExpertId, lo: u64, hi: u64) -> Result<f64> {
    if lo > hi || hi > stream.horizon() {
        return Err(Error::Range { lo, hi, horizon: stream.horizon() });
    }
    let mut total = 0.0;
    for day in lo..hi {
        total += stream.loss(day, expert)?;
    }
    Ok(total)
}
