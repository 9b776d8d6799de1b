//! Width reduction by composition, its iteration, and the doubling wrapper
//! for an unknown horizon.
//!
//! A composed learner splits time into `T_1` episodes of `T_2` days. Each
//! episode runs a fresh inner learner. For every expert `e_j` the outer
//! learner queries, a two-choice MWU between `e_j` and the inner learner
//! defines a synthetic expert `s_j`. At the end of the episode the outer
//! learner is charged each synthetic expert's loss relative to the inner
//! learner, truncated from below at `−R_2`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hierarchy::Hierarchy;
use crate::learner::{Learner, LearnerSpec, LossView, WORD_OVERHEAD};
use crate::mwu::{penalize, REBASE_THRESHOLD};
use crate::params::choose_parameters;
use crate::seeds::{derive_seed, rng_from, tag, Rng64};
use crate::types::ExpertId;

/// `max(expert − alg2, −r2)`.
pub fn truncated_loss(expert_episode_loss: f64, alg2_episode_loss: f64, r2: f64) -> f64 {
    (expert_episode_loss - alg2_episode_loss).max(-r2)
}

/// Affine map of a truncated loss from `[−width, width]` onto `[0, 1]`.
/// Values outside the interval are clamped first.
pub fn normalize_truncated(tloss: f64, width: f64) -> f64 {
    (tloss.clamp(-width, width) + width) / (2.0 * width)
}

/// `4·√(T ln(nT))`, the regret envelope assumed for a learner over `T` days.
pub fn mwu_envelope(n: usize, horizon: u64) -> f64 {
    let t = horizon as f64;
    4.0 * (t * (n as f64 * t).max(std::f64::consts::E).ln()).sqrt()
}

/// `R_3 = 2·√(T_2 ln(n/δ))` with `δ = 1/T²` for the total horizon `T`.
pub fn default_r3(n: usize, episode_len: u64, total: u64) -> f64 {
    let total = total.max(2) as f64;
    let ln_n_over_delta = (n as f64 * total * total).ln();
    2.0 * (episode_len as f64 * ln_n_over_delta).sqrt()
}

/// Regret envelope used for `r2` when composing with `spec` as the inner
/// learner.
pub fn regret_envelope(spec: &LearnerSpec) -> f64 {
    mwu_envelope(spec.num_experts(), spec.horizon())
}

/// Composes `outer` (over episodes) with `inner` (over the days of one
/// episode) using the default `R_2` and `R_3`.
pub fn compose(outer: LearnerSpec, inner: LearnerSpec) -> Result<LearnerSpec> {
    let r2 = regret_envelope(&inner);
    compose_with(outer, inner, r2)
}

pub fn compose_with(outer: LearnerSpec, inner: LearnerSpec, r2: f64) -> Result<LearnerSpec> {
    let n = outer.num_experts();
    if inner.num_experts() != n {
        return Err(Error::Config(format!("outer has {n} experts, inner has {}", inner.num_experts())));
    }
    if !(r2 > 0.0 && r2.is_finite()) {
        return Err(Error::Config(format!("r2 must be positive, got {r2}")));
    }
    let total = outer.horizon().saturating_mul(inner.horizon());
    let r3 = default_r3(n, inner.horizon(), total);
    Ok(LearnerSpec::Composed { outer: Box::new(outer), inner: Box::new(inner), r2, r3 })
}

/// `R_2` for the `i`-th iterate of a base learner with regret `r` over `t`
/// days: `(r^{i−1} + Σ_{j=0}^{i−3} r^j t^{(i−j)/2}) · √ln(n/δ)`, `δ = 1/(t^i)²`.
pub fn iterate_r2(r: f64, t: u64, n: usize, i: u32) -> f64 {
    let tf = t as f64;
    let mut sum = r.powi(i as i32 - 1);
    for j in 0..i.saturating_sub(2) {
        sum += r.powi(j as i32) * tf.powf(f64::from(i - j) / 2.0);
    }
    let total = tf.powi(i as i32).max(2.0);
    sum * (n as f64 * total * total).ln().sqrt()
}

/// The base learner composed with itself `i − 1` times, covering `T^i`
/// days. `i = 1` returns the base unchanged.
pub fn iterate_compose(base: &LearnerSpec, i: u32) -> Result<LearnerSpec> {
    if i == 0 {
        return Err(Error::Config("iteration count must be at least 1".into()));
    }
    if i == 1 {
        return Ok(base.clone());
    }
    let inner = iterate_compose(base, i - 1)?;
    let r2 = iterate_r2(regret_envelope(base), base.horizon(), base.num_experts(), i);
    compose_with(base.clone(), inner, r2)
}

/// Per-episode bookkeeping of a composed run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeLedger {
    pub episode_index: u64,
    /// Realized loss of each synthetic expert, keyed by its original expert.
    pub expert_losses: Vec<(ExpertId, f64)>,
    pub alg2_episode_loss: f64,
    pub r2_bound: f64,
    /// Inner learner's plays, in day order.
    pub alg2_plays: Vec<ExpertId>,
}

impl EpisodeLedger {
    pub fn truncated_losses(&self) -> Vec<(ExpertId, f64)> {
        self.expert_losses
            .iter()
            .map(|&(e, l)| (e, truncated_loss(l, self.alg2_episode_loss, self.r2_bound)))
            .collect()
    }
}

#[derive(Debug, Clone)]
struct Synthetic {
    expert: ExpertId,
    // log-weights of (original expert, inner learner)
    weights: [f64; 2],
    follows_expert: bool,
    loss: f64,
}

pub struct Composed {
    outer: Box<dyn Learner>,
    inner_spec: LearnerSpec,
    inner: Option<Box<dyn Learner>>,
    seed: u64,
    n: usize,
    episodes: u64,
    episode_len: u64,
    r2: f64,
    width: f64,
    eta: f64,
    rng: Rng64,
    episode: u64,
    day_in_episode: u64,
    selected: ExpertId,
    synthetic: Vec<Synthetic>,
    inner_play: Option<ExpertId>,
    alg2_loss: f64,
    alg2_plays: Vec<ExpertId>,
    query: Vec<ExpertId>,
    history: Option<Vec<EpisodeLedger>>,
    outer_buf: Vec<f64>,
}

impl Composed {
    pub fn new(outer: LearnerSpec, inner: LearnerSpec, r2: f64, r3: f64, seed: u64) -> Result<Self> {
        if !(r2 > 0.0 && r3 > 0.0 && r2.is_finite() && r3.is_finite()) {
            return Err(Error::Config(format!("r2 and r3 must be positive, got {r2} and {r3}")));
        }
        let n = outer.num_experts();
        if inner.num_experts() != n {
            return Err(Error::Config(format!("outer has {n} experts, inner has {}", inner.num_experts())));
        }
        let episodes = outer.horizon();
        let episode_len = inner.horizon();
        if episodes == u64::MAX || episode_len == u64::MAX {
            return Err(Error::Config("composed learners need fixed horizons".into()));
        }
        Ok(Composed {
            outer: outer.build(derive_seed(seed, tag::OUTER, 0))?,
            inner_spec: inner,
            inner: None,
            seed,
            n,
            episodes,
            episode_len,
            r2,
            width: r2.max(r3),
            eta: (std::f64::consts::LN_2 / episode_len.max(1) as f64).sqrt(),
            rng: rng_from(derive_seed(seed, tag::SYNTHETIC, 0)),
            episode: 0,
            day_in_episode: 0,
            selected: ExpertId(0),
            synthetic: Vec::new(),
            inner_play: None,
            alg2_loss: 0.0,
            alg2_plays: Vec::new(),
            query: Vec::new(),
            history: None,
            outer_buf: vec![0.0; n],
        })
    }

    /// Keeps an [`EpisodeLedger`] for every finished episode.
    pub fn with_history(mut self) -> Self {
        self.history = Some(Vec::new());
        self
    }

    pub fn history(&self) -> &[EpisodeLedger] {
        self.history.as_deref().unwrap_or(&[])
    }

    pub fn episode_len(&self) -> u64 {
        self.episode_len
    }

    /// Seed of the inner learner for `episode`.
    pub fn episode_seed(seed: u64, episode: u64) -> u64 {
        derive_seed(seed, tag::EPISODE, episode)
    }

    fn start_episode(&mut self) -> Result<()> {
        if self.episode >= self.episodes {
            return Err(Error::Horizon { day: self.episode * self.episode_len, horizon: self.horizon() });
        }
        self.selected = self.outer.play()?;
        let tracked = self.outer.query_set();
        if tracked.binary_search(&self.selected).is_err() {
            return Err(Error::QueryModel(self.selected));
        }
        self.synthetic = tracked
            .iter()
            .map(|&expert| Synthetic { expert, weights: [0.0, 0.0], follows_expert: true, loss: 0.0 })
            .collect();
        self.inner = Some(self.inner_spec.build(Self::episode_seed(self.seed, self.episode))?);
        self.alg2_loss = 0.0;
        self.alg2_plays.clear();
        Ok(())
    }

    fn finish_episode(&mut self) -> Result<()> {
        self.outer_buf.fill(0.0);
        let mut allowed = Vec::with_capacity(self.synthetic.len());
        for s in &self.synthetic {
            let t = truncated_loss(s.loss, self.alg2_loss, self.r2);
            self.outer_buf[s.expert.index()] = normalize_truncated(t, self.width);
            allowed.push(s.expert);
        }
        self.outer.observe(&LossView::new(&self.outer_buf, &allowed))?;
        if let Some(history) = self.history.as_mut() {
            history.push(EpisodeLedger {
                episode_index: self.episode,
                expert_losses: self.synthetic.iter().map(|s| (s.expert, s.loss)).collect(),
                alg2_episode_loss: self.alg2_loss,
                r2_bound: self.r2,
                alg2_plays: self.alg2_plays.clone(),
            });
        }
        self.inner = None;
        self.episode += 1;
        self.day_in_episode = 0;
        Ok(())
    }
}

fn union_sorted(a: &[ExpertId], b: &[ExpertId]) -> Vec<ExpertId> {
    let mut out: Vec<ExpertId> = a.iter().chain(b).copied().collect();
    out.sort_unstable();
    out.dedup();
    out
}

impl Learner for Composed {
    fn num_experts(&self) -> usize {
        self.n
    }

    fn horizon(&self) -> u64 {
        self.episodes * self.episode_len
    }

    fn play(&mut self) -> Result<ExpertId> {
        if self.day_in_episode == 0 {
            self.start_episode()?;
        }
        let inner = self.inner.as_mut().expect("episode started");
        let a = inner.play()?;
        self.inner_play = Some(a);
        self.alg2_plays.push(a);
        let mut played = a;
        for s in &mut self.synthetic {
            let p_expert = 1.0 / (1.0 + (s.weights[1] - s.weights[0]).exp());
            s.follows_expert = self.rng.gen::<f64>() < p_expert;
            if s.expert == self.selected && s.follows_expert {
                played = s.expert;
            }
        }
        let tracked: Vec<ExpertId> = self.synthetic.iter().map(|s| s.expert).collect();
        self.query = union_sorted(&tracked, inner.query_set());
        Ok(played)
    }

    fn query_set(&self) -> &[ExpertId] {
        &self.query
    }

    fn observe(&mut self, losses: &LossView<'_>) -> Result<()> {
        let a = self.inner_play.take().ok_or_else(|| Error::Contract("observe called before play".into()))?;
        let inner = self.inner.as_mut().expect("episode started");
        let inner_query = inner.query_set().to_vec();
        inner.observe(&losses.restrict(&inner_query)?)?;
        let la = losses.get(a)?;
        self.alg2_loss += la;
        for s in &mut self.synthetic {
            let le = losses.get(s.expert)?;
            s.loss += if s.follows_expert { le } else { la };
            s.weights[0] = penalize(s.weights[0], self.eta, le, 1.0);
            s.weights[1] = penalize(s.weights[1], self.eta, la, 1.0);
            let max = s.weights[0].max(s.weights[1]);
            if max < REBASE_THRESHOLD {
                s.weights.iter_mut().for_each(|w| *w -= max);
            }
        }
        self.day_in_episode += 1;
        if self.day_in_episode == self.episode_len {
            self.finish_episode()?;
        }
        Ok(())
    }

    fn words(&self) -> usize {
        let inner = self.inner.as_ref().map_or(0, |l| l.words());
        self.outer.words() + inner + 3 * self.synthetic.len() + WORD_OVERHEAD
    }

    fn entries(&self) -> usize {
        self.outer.entries() + self.inner.as_ref().map_or(0, |l| l.entries())
    }
}

struct Copy {
    guess_log2: u32,
    start: u64,
    learner: Hierarchy,
    log_weight: f64,
    play: Option<ExpertId>,
}

impl Copy {
    fn end(&self) -> u64 {
        self.start + (1u64 << self.guess_log2)
    }
}

/// Runs hierarchical copies for guesses `T = 2^j` with an MWU on top.
///
/// Copy `j` starts on day `2^{j−1}` (day 0 for `j = 1`) and runs for `2^j`
/// days, so at most two copies are live. A new copy enters with the largest
/// current top-level weight; the top rate is `√(ln 2 / 2^j)` for the newest
/// live copy `j`.
pub struct UnknownHorizon {
    n: usize,
    m: usize,
    k_offset: u32,
    seed: u64,
    copies: Vec<Copy>,
    next_guess: u32,
    day: u64,
    rng: Rng64,
    chosen: Option<usize>,
    query: Vec<ExpertId>,
}

impl UnknownHorizon {
    pub fn new(n: usize, m: usize, k_offset: u32, seed: u64) -> Result<Self> {
        if n == 0 || m == 0 {
            return Err(Error::Config("n and m must be positive".into()));
        }
        Ok(UnknownHorizon {
            n,
            m,
            k_offset,
            seed,
            copies: Vec::new(),
            next_guess: 1,
            day: 0,
            rng: rng_from(derive_seed(seed, tag::TOP, 0)),
            chosen: None,
            query: Vec::new(),
        })
    }

    /// First day of the copy guessing `2^j`.
    pub fn spawn_day(j: u32) -> u64 {
        if j <= 1 {
            0
        } else {
            1u64 << (j - 1)
        }
    }

    /// Guesses of the copies live today, oldest first.
    pub fn live_guesses(&self) -> Vec<u32> {
        self.copies.iter().map(|c| c.guess_log2).collect()
    }

    fn refresh_copies(&mut self) -> Result<()> {
        let day = self.day;
        self.copies.retain(|c| c.end() > day);
        while Self::spawn_day(self.next_guess) == day {
            let j = self.next_guess;
            let config = choose_parameters(self.n, self.m, 1u64 << j, self.k_offset)?;
            let learner = Hierarchy::new(config, derive_seed(self.seed, tag::COPY, u64::from(j)))?;
            let log_weight = self.copies.iter().map(|c| c.log_weight).fold(f64::NEG_INFINITY, f64::max);
            let log_weight = if self.copies.is_empty() { 0.0 } else { log_weight };
            self.copies.push(Copy { guess_log2: j, start: day, learner, log_weight, play: None });
            self.next_guess += 1;
        }
        Ok(())
    }

    fn top_eta(&self) -> f64 {
        let j = self.copies.last().map_or(1, |c| c.guess_log2);
        (std::f64::consts::LN_2 / (1u64 << j) as f64).sqrt()
    }
}

impl Learner for UnknownHorizon {
    fn num_experts(&self) -> usize {
        self.n
    }

    fn horizon(&self) -> u64 {
        u64::MAX
    }

    fn play(&mut self) -> Result<ExpertId> {
        self.refresh_copies()?;
        for c in &mut self.copies {
            c.play = Some(c.learner.play()?);
        }
        let idx = crate::mwu::sample_log_weighted(self.copies.iter().map(|c| c.log_weight), &mut self.rng)
            .ok_or_else(|| Error::Invariant("no live copy".into()))?;
        self.chosen = Some(idx);
        let mut query: Vec<ExpertId> = Vec::new();
        for c in &self.copies {
            query = union_sorted(&query, c.learner.query_set());
        }
        self.query = query;
        Ok(self.copies[idx].play.expect("just played"))
    }

    fn query_set(&self) -> &[ExpertId] {
        &self.query
    }

    fn observe(&mut self, losses: &LossView<'_>) -> Result<()> {
        self.chosen.take().ok_or_else(|| Error::Contract("observe called before play".into()))?;
        let eta = self.top_eta();
        for c in &mut self.copies {
            let played = c.play.take().expect("played today");
            let l = losses.get(played)?;
            let q = c.learner.query_set().to_vec();
            c.learner.observe(&losses.restrict(&q)?)?;
            c.log_weight = penalize(c.log_weight, eta, l, 1.0);
        }
        let max = self.copies.iter().map(|c| c.log_weight).fold(f64::NEG_INFINITY, f64::max);
        if max < REBASE_THRESHOLD {
            self.copies.iter_mut().for_each(|c| c.log_weight -= max);
        }
        self.day += 1;
        Ok(())
    }

    fn words(&self) -> usize {
        self.copies.iter().map(|c| c.learner.words() + 2).sum::<usize>() + WORD_OVERHEAD
    }

    fn entries(&self) -> usize {
        self.copies.iter().map(|c| c.learner.entries()).sum()
    }
}
