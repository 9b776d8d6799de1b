//! Running learners against streams and measuring what happened.

pub mod diagnostics;
pub mod oracle;
pub mod record;
pub mod space;
pub mod sweep;

pub use diagnostics::{classify_blocks, stay_bound, BlockLabel, BlockReport, Label, WalkReport};
pub use oracle::{hindsight_oracle, regret_curve, BestTracker};
pub use record::{run_trial, simulate, RunRecord, Simulation};
pub use space::SpaceAccountant;
pub use sweep::{run_sweep, variant_spec, Cell, CellSummary, SweepConfig, SweepResult, TrialRow, Variant};
