//! Level-based code-efficiency evaluation.
//!
//! Candidates are run against test suites of increasing input scale under a
//! single per-problem time limit. Each level earns a censoring-aware score
//! relative to a reference solution; the hardness-weighted mean of those is
//! the sample's efficiency score, and eff@k summarizes a model by the
//! expected best score among `k` samples.
//!
//! Modules, bottom up:
//! - [`value`]: canonical value tree for inputs and outputs
//! - [`problem`]: manifest types, validation, test-case generators
//! - [`timing`]: Hodges–Lehmann timing, time limits, calibration
//! - [`scoring`]: level scores, progression rules, sample score
//! - [`metrics`]: eff@k, pass@k, speedup, aggregation
//! - [`harness`]: runner protocol, worker supervision, evaluation driver
//! - [`selftest`]: statistical property suites for the estimators

pub mod error;
pub mod harness;
pub mod metrics;
pub mod problem;
pub mod scoring;
pub mod selftest;
pub mod timing;
pub mod value;

pub use error::{Error, Result};
