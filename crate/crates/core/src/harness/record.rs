use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::harness::oracle::{regret_curve, BestTracker};
use crate::harness::space::SpaceAccountant;
use crate::learner::{Learner, LearnerSpec, LossView};
use crate::pool::SamplingTrace;
use crate::streams::{generate, LossStream, StreamSpec};
use crate::types::ExpertId;

/// Raw output of driving a learner through a stream.
#[derive(Debug, Clone, PartialEq)]
pub struct Simulation {
    pub plays: Vec<ExpertId>,
    pub losses: Vec<f64>,
    pub cumulative_loss: f64,
    pub peak_words: usize,
    pub peak_entries: usize,
    pub max_queried: usize,
    pub total_queried: u64,
    pub best: BestTracker,
}

/// Runs `learner` for the first `days` days of `stream`.
///
/// Each day the learner plays, the harness reads its query set, and the
/// learner observes a view exposing exactly that set. The played expert
/// must be in the set.
pub fn simulate(learner: &mut dyn Learner, stream: &LossStream, days: u64) -> Result<Simulation> {
    if days > stream.horizon() {
        return Err(Error::Horizon { day: days, horizon: stream.horizon() });
    }
    if days > learner.horizon() {
        return Err(Error::Horizon { day: days, horizon: learner.horizon() });
    }
    if learner.num_experts() != stream.n() {
        return Err(Error::Config(format!(
            "learner has {} experts, stream has {}",
            learner.num_experts(),
            stream.n()
        )));
    }
    let mut space = SpaceAccountant::new();
    space.observe(learner.words());
    let mut peak_entries = learner.entries();
    let mut best = BestTracker::new(stream.n());
    let mut buf = vec![0.0; stream.n()];
    let mut plays = Vec::with_capacity(days as usize);
    let mut losses = Vec::with_capacity(days as usize);
    let mut cumulative = 0.0;
    let (mut max_queried, mut total_queried) = (0usize, 0u64);
    let mut query: Vec<ExpertId> = Vec::new();
    for day in 0..days {
        let played = learner.play()?;
        query.clear();
        query.extend_from_slice(learner.query_set());
        if query.binary_search(&played).is_err() {
            return Err(Error::QueryModel(played));
        }
        max_queried = max_queried.max(query.len());
        total_queried += query.len() as u64;
        space.observe(learner.words());
        peak_entries = peak_entries.max(learner.entries());
        stream.fill_day(day, &mut buf)?;
        learner.observe(&LossView::new(&buf, &query))?;
        best.push(&buf);
        let l = buf[played.index()];
        cumulative += l;
        plays.push(played);
        losses.push(l);
        space.observe(learner.words());
        peak_entries = peak_entries.max(learner.entries());
    }
    Ok(Simulation {
        plays,
        losses,
        cumulative_loss: cumulative,
        peak_words: space.peak(),
        peak_entries,
        max_queried,
        total_queried,
        best,
    })
}

/// One trial: configuration echo, per-day plays and losses, and totals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub learner: LearnerSpec,
    pub stream: StreamSpec,
    pub seed: u64,
    pub days: u64,
    pub plays: Vec<ExpertId>,
    pub losses: Vec<f64>,
    pub cumulative_loss: f64,
    pub best_expert: ExpertId,
    pub best_loss: f64,
    pub regret: f64,
    pub peak_words: usize,
    pub peak_entries: usize,
    pub max_queried: usize,
    pub total_queried: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trace: Option<SamplingTrace>,
}

impl RunRecord {
    pub fn regret_curve(&self, stream: &LossStream) -> Result<Vec<f64>> {
        regret_curve(self, stream)
    }

    /// The record without its sampling trace.
    pub fn without_trace(&self) -> RunRecord {
        RunRecord { trace: None, ..self.clone() }
    }
}

/// Builds the learner and stream, simulates `stream.horizon` days and
/// assembles the record.
///
/// The learner may be configured for more days than the stream has; the
/// run stops at the stream's horizon.
pub fn run_trial(spec: &LearnerSpec, stream_spec: &StreamSpec, seed: u64) -> Result<RunRecord> {
    let stream = generate(stream_spec)?;
    run_on_stream(spec, stream_spec, &stream, seed)
}

/// As [`run_trial`] with an already generated stream.
pub fn run_on_stream(spec: &LearnerSpec, stream_spec: &StreamSpec, stream: &LossStream, seed: u64) -> Result<RunRecord> {
    let mut learner = spec.build(seed)?;
    let sim = simulate(learner.as_mut(), stream, stream.horizon())?;
    let (best_expert, best_loss) = sim.best.best();
    Ok(RunRecord {
        learner: spec.clone(),
        stream: stream_spec.clone(),
        seed,
        days: stream.horizon(),
        plays: sim.plays,
        losses: sim.losses,
        cumulative_loss: sim.cumulative_loss,
        best_expert,
        best_loss,
        regret: sim.cumulative_loss - best_loss,
        peak_words: sim.peak_words,
        peak_entries: sim.peak_entries,
        max_queried: sim.max_queried,
        total_queried: sim.total_queried,
        trace: learner.sampling_trace().cloned(),
    })
}
