//! Seeded multi-trial sweeps over a grid of cells and learner variants.
//!
//! Every trial of a cell draws one stream, shared by all variants, so the
//! variants are compared on identical losses. Jobs run on a rayon pool whose
//! size is capped by `MEMEXPERTS_THREADS`; results are collected in grid
//! order, so the output does not depend on scheduling.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bootstrap::iterate_compose;
use crate::error::{Error, Result};
use crate::harness::record::run_on_stream;
use crate::learner::LearnerSpec;
use crate::params::{choose_parameters, one_level, DEFAULT_K_OFFSET};
use crate::seeds::{derive_seed, tag};
use crate::streams::{generate, StreamSpec};
use crate::types::ExpertId;

pub const THREADS_ENV: &str = "MEMEXPERTS_THREADS";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    FullMwu,
    OneLevel,
    Hierarchical,
    Bootstrapped,
}

impl Variant {
    pub const ALL: [Variant; 4] = [Variant::FullMwu, Variant::OneLevel, Variant::Hierarchical, Variant::Bootstrapped];

    pub fn short_name(self) -> &'static str {
        match self {
            Variant::FullMwu => "mwu",
            Variant::OneLevel => "onelevel",
            Variant::Hierarchical => "hier",
            Variant::Bootstrapped => "boot",
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.short_name())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "mwu" | "full_mwu" | "full-mwu" => Ok(Variant::FullMwu),
            "onelevel" | "one_level" | "one-level" => Ok(Variant::OneLevel),
            "hier" | "hierarchical" => Ok(Variant::Hierarchical),
            "boot" | "bootstrapped" => Ok(Variant::Bootstrapped),
            other => Err(Error::Config(format!("unknown variant '{other}' (mwu, onelevel, hier, boot)"))),
        }
    }
}

/// The learner a variant runs for `n` experts, space `m` and `horizon` days.
///
/// The bootstrapped variant composes a hierarchical base over `⌈√T⌉` days
/// with itself once.
pub fn variant_spec(variant: Variant, n: usize, m: usize, horizon: u64, k_offset: u32) -> Result<LearnerSpec> {
    Ok(match variant {
        Variant::FullMwu => LearnerSpec::Mwu { n, horizon },
        Variant::OneLevel => LearnerSpec::Hierarchical { config: one_level(n, m, horizon)?, feedback: Default::default() },
        Variant::Hierarchical => LearnerSpec::Hierarchical {
            config: choose_parameters(n, m, horizon, k_offset)?,
            feedback: Default::default(),
        },
        Variant::Bootstrapped => {
            let root = (horizon as f64).sqrt().ceil() as u64;
            let root = if root * root < horizon { root + 1 } else { root };
            let base = LearnerSpec::Hierarchical {
                config: choose_parameters(n, m, root, k_offset)?,
                feedback: Default::default(),
            };
            iterate_compose(&base, 2)?
        }
    })
}

/// One grid point. `stream` uses the command-line stream syntax.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub n: usize,
    pub m: usize,
    #[serde(rename = "T")]
    pub horizon: u64,
    pub stream: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    pub cells: Vec<Cell>,
    pub variants: Vec<Variant>,
    pub trials: u32,
    pub seed: u64,
    #[serde(default = "default_k_offset")]
    pub k_offset: u32,
}

fn default_k_offset() -> u32 {
    DEFAULT_K_OFFSET
}

/// One JSONL row: a single (cell, variant, trial).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRow {
    pub cell: usize,
    pub n: usize,
    pub m: usize,
    #[serde(rename = "T")]
    pub horizon: u64,
    pub stream: String,
    pub variant: Variant,
    pub trial: u32,
    pub stream_seed: u64,
    pub algo_seed: u64,
    pub learner: LearnerSpec,
    pub regret: f64,
    pub cumulative_loss: f64,
    pub best_expert: ExpertId,
    pub best_loss: f64,
    pub peak_words: usize,
    pub peak_entries: usize,
    pub max_queried: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariantStats {
    pub variant: Variant,
    pub median_regret: f64,
    pub q10_regret: f64,
    pub q90_regret: f64,
    pub median_peak_words: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellSummary {
    pub cell: usize,
    pub n: usize,
    pub m: usize,
    #[serde(rename = "T")]
    pub horizon: u64,
    pub stream: String,
    pub trials: u32,
    pub stats: Vec<VariantStats>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub rows: Vec<TrialRow>,
    pub summaries: Vec<CellSummary>,
}

/// Linear-interpolation quantile of unsorted data; `NaN` when empty.
pub fn quantile(values: &[f64], q: f64) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let pos = q.clamp(0.0, 1.0) * (v.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    v[lo] + (v[hi] - v[lo]) * (pos - lo as f64)
}

pub fn median(values: &[f64]) -> f64 {
    quantile(values, 0.5)
}

/// Worker count: `MEMEXPERTS_THREADS` if set and positive, else rayon's default.
pub fn thread_count() -> Option<usize> {
    std::env::var(THREADS_ENV).ok().and_then(|v| v.trim().parse::<usize>().ok()).filter(|&n| n > 0)
}

pub fn run_sweep(config: &SweepConfig) -> Result<SweepResult> {
    if config.trials == 0 || config.variants.is_empty() || config.cells.is_empty() {
        return Err(Error::Config("a sweep needs at least one cell, variant and trial".into()));
    }
    let mut jobs = Vec::new();
    for (ci, cell) in config.cells.iter().enumerate() {
        let cell_seed = derive_seed(config.seed, tag::CELL, ci as u64);
        for trial in 0..config.trials {
            let trial_seed = derive_seed(cell_seed, tag::TRIAL, u64::from(trial));
            let stream_seed = derive_seed(trial_seed, tag::STREAM, 0);
            let stream = StreamSpec::parse(&cell.stream, cell.n, cell.horizon, stream_seed)?;
            for (vi, &variant) in config.variants.iter().enumerate() {
                let algo_seed = derive_seed(trial_seed, tag::ALGORITHM, vi as u64);
                let spec = variant_spec(variant, cell.n, cell.m, cell.horizon, config.k_offset)?;
                jobs.push((ci, trial, variant, stream.clone(), stream_seed, algo_seed, spec));
            }
        }
    }

    let work = |jobs: Vec<_>| -> Result<Vec<TrialRow>> {
        jobs.into_par_iter()
            .map(|(ci, trial, variant, stream_spec, stream_seed, algo_seed, spec): (usize, u32, Variant, StreamSpec, u64, u64, LearnerSpec)| {
                let cell = &config.cells[ci];
                let stream = generate(&stream_spec)?;
                let r = run_on_stream(&spec, &stream_spec, &stream, algo_seed)?;
                Ok(TrialRow {
                    cell: ci,
                    n: cell.n,
                    m: cell.m,
                    horizon: cell.horizon,
                    stream: cell.stream.clone(),
                    variant,
                    trial,
                    stream_seed,
                    algo_seed,
                    learner: spec,
                    regret: r.regret,
                    cumulative_loss: r.cumulative_loss,
                    best_expert: r.best_expert,
                    best_loss: r.best_loss,
                    peak_words: r.peak_words,
                    peak_entries: r.peak_entries,
                    max_queried: r.max_queried,
                })
            })
            .collect()
    };
    let rows = match thread_count() {
        Some(threads) => rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?
            .install(|| work(jobs))?,
        None => work(jobs)?,
    };

    let summaries = config
        .cells
        .iter()
        .enumerate()
        .map(|(ci, cell)| {
            let stats = config
                .variants
                .iter()
                .map(|&variant| {
                    let mine: Vec<&TrialRow> = rows.iter().filter(|r| r.cell == ci && r.variant == variant).collect();
                    let regrets: Vec<f64> = mine.iter().map(|r| r.regret).collect();
                    let words: Vec<f64> = mine.iter().map(|r| r.peak_words as f64).collect();
                    VariantStats {
                        variant,
                        median_regret: median(&regrets),
                        q10_regret: quantile(&regrets, 0.1),
                        q90_regret: quantile(&regrets, 0.9),
                        median_peak_words: median(&words),
                    }
                })
                .collect();
            CellSummary {
                cell: ci,
                n: cell.n,
                m: cell.m,
                horizon: cell.horizon,
                stream: cell.stream.clone(),
                trials: config.trials,
                stats,
            }
        })
        .collect();
    Ok(SweepResult { rows, summaries })
}

impl SweepResult {
    pub fn write_jsonl<W: Write>(&self, out: W) -> Result<()> {
        let mut out = std::io::BufWriter::new(out);
        for row in &self.rows {
            serde_json::to_writer(&mut out, row)?;
            writeln!(out)?;
        }
        out.flush()?;
        Ok(())
    }

    /// One row per cell with median/q10/q90 regret and median peak words
    /// for each variant.
    pub fn write_summary_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let variants: Vec<Variant> =
            self.summaries.first().map(|s| s.stats.iter().map(|v| v.variant).collect()).unwrap_or_default();
        let mut header = vec!["cell".to_string(), "n".into(), "m".into(), "T".into(), "stream".into(), "trials".into()];
        for v in &variants {
            for col in ["median_regret", "q10_regret", "q90_regret", "median_peak_words"] {
                header.push(format!("{v}_{col}"));
            }
        }
        w.write_record(&header)?;
        for s in &self.summaries {
            let mut rec =
                vec![s.cell.to_string(), s.n.to_string(), s.m.to_string(), s.horizon.to_string(), s.stream.clone(), s.trials.to_string()];
            for v in &s.stats {
                for x in [v.median_regret, v.q10_regret, v.q90_regret, v.median_peak_words] {
                    rec.push(x.to_string());
                }
            }
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn stats(&self, cell: usize, variant: Variant) -> Option<&VariantStats> {
        self.summaries.get(cell)?.stats.iter().find(|s| s.variant == variant)
    }
}
