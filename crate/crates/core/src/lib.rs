//! Online learning with expert advice in sublinear memory.
//!
//! The central learner keeps `k` levels of expert pools with block sizes
//! `T_0 < … < T_{k−1}`, runs MWU inside each pool and between adjacent
//! levels, and at block boundaries evicts ε-dominated entries, forwards
//! survivors upward and samples fresh experts. Around it sit a plain MWU
//! baseline, a composition combinator that stretches a learner over a
//! product horizon, a doubling wrapper for unknown horizons, stream
//! generators, and a harness for regret, space and block diagnostics.

pub mod bootstrap;
pub mod error;
pub mod harness;
pub mod hierarchy;
pub mod learner;
pub mod mwu;
pub mod params;
pub mod pool;
pub mod seeds;
pub mod streams;
pub mod types;

pub use error::{Error, Result};
pub use hierarchy::{ExternalFeedback, Hierarchy};
pub use learner::{Learner, LearnerSpec, LossView, MwuLearner};
pub use params::choose_parameters;
pub use streams::{generate, LossStream, StreamKind, StreamSpec};
pub use types::{ArrivalStamp, Bucket, ExpertId, HierarchyConfig, LevelWeights, Phase, PoolEntry};
