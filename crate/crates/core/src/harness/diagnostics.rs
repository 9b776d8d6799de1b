//! Offline stay/evict classification of blocks.
//!
//! Pools are replayed from a [`SamplingTrace`]. For every block of every
//! level and every sampling slot, the best expert in hindsight `e*` is
//! hypothetically inserted at that slot's stamp and checked against every
//! later eviction of the level up to the end of the stream. A block where
//! every slot survives is a stay block; otherwise it is an evict block.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::harness::oracle::BestTracker;
use crate::pool::{last_boundary, top_touched_level, update_buckets, PoolSet, SamplingTrace, TraceReplay};
use crate::streams::LossStream;
use crate::types::{ArrivalStamp, ExpertId, HierarchyConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Label {
    Stay,
    Evict,
    /// A stay block in which `e*` was actually sampled.
    ActualizedStay,
}

impl Label {
    pub fn is_stay(self) -> bool {
        matches!(self, Label::Stay | Label::ActualizedStay)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockLabel {
    pub level: usize,
    pub block_index: u64,
    pub label: Label,
}

/// The walk that collects stay blocks until one is actualized.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WalkReport {
    /// Stay blocks visited, including the actualized one if reached.
    pub stays: usize,
    pub stays_before_actualization: usize,
    pub actualized: bool,
    pub visited: Vec<(usize, u64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockReport {
    pub e_star: ExpertId,
    pub e_star_loss: f64,
    pub labels: Vec<BlockLabel>,
    pub walk: WalkReport,
}

impl BlockReport {
    pub fn label(&self, level: usize, block_index: u64) -> Option<Label> {
        self.labels.iter().find(|b| b.level == level && b.block_index == block_index).map(|b| b.label)
    }

    /// `(stay, evict, actualized)` counts for `level`.
    pub fn counts(&self, level: usize) -> (usize, usize, usize) {
        let mut c = (0, 0, 0);
        for b in self.labels.iter().filter(|b| b.level == level) {
            match b.label {
                Label::Stay => c.0 += 1,
                Label::Evict => c.1 += 1,
                Label::ActualizedStay => c.2 += 1,
            }
        }
        c
    }
}

/// `(n/m)·ln(1/δ)`.
pub fn stay_bound(n: usize, m: usize, delta: f64) -> f64 {
    n as f64 / m as f64 * (1.0 / delta).ln()
}

// Pre-eviction snapshot of one bucket at one boundary.
struct Touch {
    day: u64,
    boundary: ArrivalStamp,
    arrivals: Vec<ArrivalStamp>,
    // prefix_min[i]: least loss among the first i entries, copies of e* excluded
    prefix_min: Vec<f64>,
}

fn snapshot(pools: &PoolSet, level: usize, day: u64, boundary: ArrivalStamp, e_star: ExpertId) -> Touch {
    let entries = pools.bucket(level).entries();
    let mut prefix_min = Vec::with_capacity(entries.len() + 1);
    let mut running = f64::INFINITY;
    prefix_min.push(running);
    for e in entries {
        if e.expert != e_star {
            running = running.min(e.loss);
        }
        prefix_min.push(running);
    }
    Touch { day, boundary, arrivals: entries.iter().map(|e| e.arrival).collect(), prefix_min }
}

/// Labels every block that starts before the end of `stream`.
pub fn classify_blocks(trace: &SamplingTrace, stream: &LossStream, config: &HierarchyConfig) -> Result<BlockReport> {
    let days = stream.horizon();
    if days > config.horizon() {
        return Err(Error::Trace(format!("stream has {days} days, configuration only {}", config.horizon())));
    }
    if stream.n() != config.n() {
        return Err(Error::Trace(format!("stream has {} experts, configuration {}", stream.n(), config.n())));
    }
    let levels = config.levels();
    let t0 = config.block_size(0);

    let mut buf = vec![0.0; stream.n()];
    let mut tracker = BestTracker::new(stream.n());
    for d in 0..days {
        stream.fill_day(d, &mut buf)?;
        tracker.push(&buf);
    }
    let (e_star, e_star_loss) = tracker.best();
    // star_prefix[t] = loss of e* over days [0, t)
    let mut star_prefix = Vec::with_capacity(days as usize + 1);
    star_prefix.push(0.0);
    for d in 0..days {
        let last = *star_prefix.last().unwrap();
        star_prefix.push(last + stream.loss(d, e_star)?);
    }

    let mut replay = TraceReplay::new(trace);
    let mut pools = PoolSet::new(levels);
    update_buckets(&mut pools, config, 0, &mut replay, None)?;
    let mut touches: Vec<Vec<Touch>> = (0..levels).map(|_| Vec::new()).collect();
    for d in 0..days {
        stream.fill_day(d, &mut buf)?;
        pools.accumulate(|e| Ok(buf[e.index()]))?;
        let t = d + 1;
        if t % t0 == 0 && t < config.horizon() {
            let top = top_touched_level(config, t);
            let boundary = ArrivalStamp::half_day(last_boundary(config, t, top));
            for (level, list) in touches.iter_mut().enumerate().take(top + 1) {
                list.push(snapshot(&pools, level, t, boundary, e_star));
            }
            update_buckets(&mut pools, config, t, &mut replay, None)?;
        }
    }

    let sampled_star: HashSet<(u64, usize)> =
        trace.records.iter().filter(|r| r.expert == e_star).map(|r| (r.day, r.level)).collect();
    let factor = 1.0 + config.epsilon();
    let m = config.m() as u32;
    let mut labels = Vec::new();
    for (level, level_touches) in touches.iter().enumerate() {
        let size = config.block_size(level);
        let mut start = 0;
        while start < days {
            let survives = |slot: u32| {
                let stamp = ArrivalStamp::sampled(start, slot);
                level_touches.iter().filter(|t| t.day > start && stamp >= t.boundary).all(|t| {
                    let pos = t.arrivals.partition_point(|a| *a < stamp);
                    let star_loss = star_prefix[t.day as usize] - star_prefix[start as usize];
                    t.prefix_min[pos] > factor * star_loss
                })
            };
            let label = if (0..m).all(survives) {
                if sampled_star.contains(&(start, level)) {
                    Label::ActualizedStay
                } else {
                    Label::Stay
                }
            } else {
                Label::Evict
            };
            labels.push(BlockLabel { level, block_index: start / size, label });
            start += size;
        }
    }

    let walk = walk(&labels, config, days);
    Ok(BlockReport { e_star, e_star_loss, labels, walk })
}

fn walk(labels: &[BlockLabel], config: &HierarchyConfig, days: u64) -> WalkReport {
    let levels = config.levels();
    let mut by_level: Vec<Vec<Label>> = vec![Vec::new(); levels];
    for b in labels {
        by_level[b.level].push(b.label);
    }
    let mut report = WalkReport { stays: 0, stays_before_actualization: 0, actualized: false, visited: Vec::new() };
    let mut t = 0;
    let mut level = levels - 1;
    while t < days {
        let size = config.block_size(level);
        let index = t / size;
        report.visited.push((level, index));
        let label = by_level[level][index as usize];
        if label.is_stay() {
            report.stays += 1;
            if label == Label::ActualizedStay {
                report.actualized = true;
                break;
            }
            report.stays_before_actualization += 1;
            if level > 0 {
                level -= 1;
                continue;
            }
        }
        t += size;
        if t < days {
            level = top_touched_level(config, t);
        }
    }
    report
}
