//! The learner interface used by the harness, plus full-information MWU.
//!
//! Each day the harness asks for a play, then hands the learner a
//! [`LossView`] that only exposes the experts the learner declared in
//! [`Learner::query_set`]. Reading anything else is a query-model error.

use serde::{Deserialize, Serialize};

use crate::bootstrap::{Composed, UnknownHorizon};
use crate::error::{Error, Result};
use crate::hierarchy::{ExternalFeedback, Hierarchy};
use crate::mwu::MwuState;
use crate::pool::SamplingTrace;
use crate::seeds::{rng_from, Rng64};
use crate::types::{ExpertId, HierarchyConfig};

/// Fixed bookkeeping words every learner is charged for.
pub const WORD_OVERHEAD: usize = 8;

/// Words per tracked pool entry: id, stamp, loss, weight.
pub const WORDS_PER_ENTRY: usize = 4;

/// One day's losses, restricted to a sorted set of allowed experts.
#[derive(Debug, Clone, Copy)]
pub struct LossView<'a> {
    values: &'a [f64],
    allowed: &'a [ExpertId],
}

impl<'a> LossView<'a> {
    /// `allowed` must be sorted.
    pub fn new(values: &'a [f64], allowed: &'a [ExpertId]) -> Self {
        debug_assert!(allowed.windows(2).all(|w| w[0] < w[1]));
        LossView { values, allowed }
    }

    pub fn get(&self, expert: ExpertId) -> Result<f64> {
        if self.allowed.binary_search(&expert).is_err() {
            return Err(Error::QueryModel(expert));
        }
        self.values.get(expert.index()).copied().ok_or(Error::QueryModel(expert))
    }

    /// The same losses restricted to `allowed`, which must be a subset of
    /// the current allowed set.
    pub fn restrict<'b>(&self, allowed: &'b [ExpertId]) -> Result<LossView<'b>>
    where
        'a: 'b,
    {
        if let Some(&e) = allowed.iter().find(|e| self.allowed.binary_search(e).is_err()) {
            return Err(Error::QueryModel(e));
        }
        Ok(LossView::new(self.values, allowed))
    }

    pub fn allowed(&self) -> &'a [ExpertId] {
        self.allowed
    }
}

/// An online learner over a fixed universe of experts.
pub trait Learner: Send {
    fn num_experts(&self) -> usize;

    /// Days the learner was configured for; `u64::MAX` when open-ended.
    fn horizon(&self) -> u64;

    /// The expert played today. Called once per day before `observe`.
    fn play(&mut self) -> Result<ExpertId>;

    /// Sorted experts whose losses the learner reads today.
    fn query_set(&self) -> &[ExpertId];

    /// Consumes today's losses and advances to the next day.
    fn observe(&mut self, losses: &LossView<'_>) -> Result<()>;

    /// Current memory footprint in words.
    fn words(&self) -> usize;

    fn entries(&self) -> usize {
        0
    }

    fn sampling_trace(&self) -> Option<&SamplingTrace> {
        None
    }
}

/// Exponential weights over all `n` experts, rate `√(ln n / T)`.
pub struct MwuLearner {
    state: MwuState,
    rng: Rng64,
    all: Vec<ExpertId>,
    horizon: u64,
    buf: Vec<f64>,
    played: Option<ExpertId>,
}

impl MwuLearner {
    pub fn new(n: usize, horizon: u64, seed: u64) -> Result<Self> {
        if n == 0 {
            return Err(Error::Config("MWU needs at least one expert".into()));
        }
        let state = MwuState::uniform(n, MwuState::tuned_rate(n, horizon))?;
        Ok(MwuLearner {
            state,
            rng: rng_from(seed),
            all: (0..n).map(ExpertId::new).collect(),
            horizon,
            buf: vec![0.0; n],
            played: None,
        })
    }

    pub fn state(&self) -> &MwuState {
        &self.state
    }
}

impl Learner for MwuLearner {
    fn num_experts(&self) -> usize {
        self.all.len()
    }

    fn horizon(&self) -> u64 {
        self.horizon
    }

    fn play(&mut self) -> Result<ExpertId> {
        let e = ExpertId::new(self.state.sample(&mut self.rng)?);
        self.played = Some(e);
        Ok(e)
    }

    fn query_set(&self) -> &[ExpertId] {
        &self.all
    }

    fn observe(&mut self, losses: &LossView<'_>) -> Result<()> {
        for (slot, &e) in self.buf.iter_mut().zip(&self.all) {
            *slot = losses.get(e)?;
        }
        self.played = None;
        self.state.update(&self.buf, 1.0)
    }

    fn words(&self) -> usize {
        self.all.len() + WORD_OVERHEAD
    }
}

/// Serializable description of a learner; `build` instantiates it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum LearnerSpec {
    Mwu {
        n: usize,
        horizon: u64,
    },
    Hierarchical {
        config: HierarchyConfig,
        #[serde(default)]
        feedback: ExternalFeedback,
    },
    /// `outer` runs over episodes, `inner` over the days of one episode.
    Composed {
        outer: Box<LearnerSpec>,
        inner: Box<LearnerSpec>,
        r2: f64,
        r3: f64,
    },
    UnknownHorizon {
        n: usize,
        m: usize,
        k_offset: u32,
    },
}

impl LearnerSpec {
    pub fn num_experts(&self) -> usize {
        match self {
            LearnerSpec::Mwu { n, .. } | LearnerSpec::UnknownHorizon { n, .. } => *n,
            LearnerSpec::Hierarchical { config, .. } => config.n(),
            LearnerSpec::Composed { outer, .. } => outer.num_experts(),
        }
    }

    /// Configured horizon; `u64::MAX` for the doubling wrapper.
    pub fn horizon(&self) -> u64 {
        match self {
            LearnerSpec::Mwu { horizon, .. } => *horizon,
            LearnerSpec::Hierarchical { config, .. } => config.horizon(),
            LearnerSpec::Composed { outer, inner, .. } => outer.horizon().saturating_mul(inner.horizon()),
            LearnerSpec::UnknownHorizon { .. } => u64::MAX,
        }
    }

    pub fn build(&self, seed: u64) -> Result<Box<dyn Learner>> {
        Ok(match self {
            LearnerSpec::Mwu { n, horizon } => Box::new(MwuLearner::new(*n, *horizon, seed)?),
            LearnerSpec::Hierarchical { config, feedback } => {
                Box::new(Hierarchy::new(config.clone(), seed)?.with_feedback(*feedback))
            }
            LearnerSpec::Composed { outer, inner, r2, r3 } => {
                Box::new(Composed::new((**outer).clone(), (**inner).clone(), *r2, *r3, seed)?)
            }
            LearnerSpec::UnknownHorizon { n, m, k_offset } => Box::new(UnknownHorizon::new(*n, *m, *k_offset, seed)?),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn view_enforces_query_set() {
        let values = [0.1, 0.2, 0.3];
        let allowed = [ExpertId(0), ExpertId(2)];
        let v = LossView::new(&values, &allowed);
        assert_eq!(v.get(ExpertId(2)).unwrap(), 0.3);
        assert!(matches!(v.get(ExpertId(1)), Err(Error::QueryModel(ExpertId(1)))));
    }

    #[test]
    fn single_expert_mwu_always_plays_it() {
        let mut l = MwuLearner::new(1, 10, 3).unwrap();
        for _ in 0..10 {
            assert_eq!(l.play().unwrap(), ExpertId(0));
            let all = l.query_set().to_vec();
            l.observe(&LossView::new(&[0.7], &all)).unwrap();
        }
    }

    #[test]
    fn mwu_words_are_linear_in_n() {
        assert_eq!(MwuLearner::new(10, 100, 0).unwrap().words(), 10 + WORD_OVERHEAD);
    }

    #[test]
    fn spec_round_trips_through_json() {
        let spec = LearnerSpec::Composed {
            outer: Box::new(LearnerSpec::Mwu { n: 4, horizon: 64 }),
            inner: Box::new(LearnerSpec::Mwu { n: 4, horizon: 64 }),
            r2: 10.0,
            r3: 12.0,
        };
        let text = serde_json::to_string(&spec).unwrap();
        assert_eq!(serde_json::from_str::<LearnerSpec>(&text).unwrap(), spec);
        assert_eq!(spec.horizon(), 4096);
    }
}
