use crate::error::{Error, Result};
use crate::harness::record::RunRecord;
use crate::streams::LossStream;
use crate::types::ExpertId;

/// Best expert in hindsight by a column-by-column scan of the stream.
/// Ties go to the smallest index.
pub fn hindsight_oracle(stream: &LossStream) -> Result<(ExpertId, f64)> {
    let mut best = (ExpertId(0), f64::INFINITY);
    for e in 0..stream.n() {
        let id = ExpertId::new(e);
        let mut total = 0.0;
        for day in 0..stream.horizon() {
            total += stream.loss(day, id)?;
        }
        if total < best.1 {
            best = (id, total);
        }
    }
    Ok(best)
}

/// Running per-expert totals, fed one day at a time.
#[derive(Debug, Clone, PartialEq)]
pub struct BestTracker {
    totals: Vec<f64>,
}

impl BestTracker {
    pub fn new(n: usize) -> Self {
        BestTracker { totals: vec![0.0; n] }
    }

    pub fn push(&mut self, day_losses: &[f64]) {
        for (t, l) in self.totals.iter_mut().zip(day_losses) {
            *t += l;
        }
    }

    pub fn totals(&self) -> &[f64] {
        &self.totals
    }

    pub fn best(&self) -> (ExpertId, f64) {
        let mut best = (ExpertId(0), f64::INFINITY);
        for (e, &t) in self.totals.iter().enumerate() {
            if t < best.1 {
                best = (ExpertId::new(e), t);
            }
        }
        best
    }
}

/// Day-by-day cumulative regret against the full-horizon winner.
pub fn regret_curve(record: &RunRecord, stream: &LossStream) -> Result<Vec<f64>> {
    if record.days != stream.horizon() || record.losses.len() as u64 != record.days {
        return Err(Error::Contract(format!(
            "record covers {} days, stream has {}",
            record.days,
            stream.horizon()
        )));
    }
    let mut alg = 0.0;
    let mut best = 0.0;
    let mut out = Vec::with_capacity(record.losses.len());
    for (day, &l) in record.losses.iter().enumerate() {
        alg += l;
        best += stream.loss(day as u64, record.best_expert)?;
        out.push(alg - best);
    }
    Ok(out)
}
