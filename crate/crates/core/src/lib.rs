//! Continuous distributed monitoring of frequency moments.
//!
//! `k` sites each observe a stream of coordinate increments and a single
//! coordinator must know, at every point in time, whether `F_p` of the
//! union of the streams has crossed a threshold (or, through a ladder of
//! thresholds, an approximation of `F_p` itself). Communication is one-way,
//! from sites to the coordinator.
//!
//! The crate is organised around the entities of that model:
//!
//! - [`model`]: frequency vectors and exact (brute-force) oracles.
//! - [`sampling`]: the shared public coin (level sets) and the bucket-to-level rule.
//! - [`threshold`]: the single-threshold protocol (site send rule, coordinator).
//! - [`monitor`]: the geometric ladder of amplified threshold instances.
//! - [`harness`]: a deterministic event-driven simulator with bit accounting.
//! - [`hardgen`]: generators and evaluators for the structured hard inputs.
//! - [`reductions`]: estimator formulas for the composed problems and the
//!   Gaussian `l_2 -> l_p` embedding.

// `!(x > 0.0)` style guards are used on purpose: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod hardgen;
pub mod harness;
pub mod hashing;
pub mod model;
pub mod monitor;
pub mod reductions;
pub mod sampling;
pub mod threshold;

pub use error::{Error, Result};
pub use harness::{run_simulation, Mode, SimOptions, SimulationReport, StreamEvent, TraceRow};
pub use model::{FreqVector, SignedMultiset};
pub use monitor::{MonitorConfig, MonitorState};
pub use sampling::{level_of, PublicCoin};
pub use threshold::{
    Constants, Coordinator, EstimatorMode, GlobalParams, Message, SiteState, StreamId,
    ThresholdProtocol, TrackingReport,
};
