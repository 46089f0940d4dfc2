//! Execution-time estimation: robust per-case timing, time limits and
//! machine-speed calibration.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A measured duration that may be right-censored.
///
/// When `censored` is true the run was killed at `value` seconds and the true
/// duration is only known to be at least that long.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CensoredTime {
    pub value: f64,
    pub censored: bool,
}

impl CensoredTime {
    pub fn observed(value: f64) -> Self {
        CensoredTime { value, censored: false }
    }

    pub fn killed_at(limit: f64) -> Self {
        CensoredTime { value: limit, censored: true }
    }
}

/// Evaluation hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HarnessConfig {
    /// Multiplier on the slowest reference time that defines the time limit.
    pub timeout_factor: f64,
    /// Timed repetitions per test case.
    pub repeats: usize,
    /// Per-level weights for levels 1..=L. `None` uses the manifest's hardness.
    pub hardness_weights: Option<Vec<f64>>,
    /// Slack added to a job's total budget before the worker is killed.
    pub hard_kill_margin: f64,
    /// Address-space ceiling for worker processes.
    pub memory_limit_bytes: Option<u64>,
    /// Per-case limit used while timing a reference solution.
    pub reference_ceiling: f64,
}

pub const DEFAULT_TIMEOUT_FACTOR: f64 = 2.0;
pub const DEFAULT_REPEATS: usize = 6;
pub const DEFAULT_HARDNESS: [f64; 3] = [3.0, 3.0, 4.0];

impl Default for HarnessConfig {
    fn default() -> Self {
        HarnessConfig {
            timeout_factor: DEFAULT_TIMEOUT_FACTOR,
            repeats: DEFAULT_REPEATS,
            hardness_weights: None,
            hard_kill_margin: 10.0,
            memory_limit_bytes: Some(4 << 30),
            reference_ceiling: 60.0,
        }
    }
}

impl HarnessConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.timeout_factor > 1.0 && self.timeout_factor.is_finite()) {
            return Err(Error::Config(format!(
                "timeout factor must be > 1, got {}",
                self.timeout_factor
            )));
        }
        if self.repeats < 1 {
            return Err(Error::Config("repeats must be >= 1".into()));
        }
        if !(self.hard_kill_margin > 0.0) {
            return Err(Error::Config(format!(
                "hard kill margin must be > 0, got {}",
                self.hard_kill_margin
            )));
        }
        if !(self.reference_ceiling > 0.0) {
            return Err(Error::Config("reference ceiling must be > 0".into()));
        }
        if let Some(h) = &self.hardness_weights {
            if h.is_empty() || h.iter().any(|&w| !(w > 0.0 && w.is_finite())) {
                return Err(Error::Config(format!("hardness weights must all be > 0, got {h:?}")));
            }
        }
        Ok(())
    }
}

/// Hodges–Lehmann location estimate: the median of all Walsh averages
/// `(x[a] + x[b]) / 2` with `a <= b`.
pub fn hodges_lehmann(samples: &[f64]) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::Parameter("Hodges-Lehmann estimate of an empty sample".into()));
    }
    if let Some(bad) = samples.iter().find(|x| !x.is_finite() || **x < 0.0) {
        return Err(Error::Parameter(format!("timing sample {bad} is not a finite non-negative duration")));
    }
    let n = samples.len();
    let mut walsh = Vec::with_capacity(n * (n + 1) / 2);
    for a in 0..n {
        for b in a..n {
            walsh.push((samples[a] + samples[b]) / 2.0);
        }
    }
    Ok(median_in_place(&mut walsh))
}

fn median_in_place(values: &mut [f64]) -> f64 {
    let len = values.len();
    let mid = len / 2;
    let (lower, upper, _) = values.select_nth_unstable_by(mid, f64::total_cmp);
    let upper = *upper;
    if len % 2 == 1 {
        upper
    } else {
        let lower_max = lower.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        (lower_max + upper) / 2.0
    }
}

/// Time limit of a problem: `timeout_factor * max(reference_times)`.
pub fn compute_time_limit(reference_times: &[f64], timeout_factor: f64) -> Result<f64> {
    if !(timeout_factor > 1.0 && timeout_factor.is_finite()) {
        return Err(Error::Config(format!("timeout factor must be > 1, got {timeout_factor}")));
    }
    if reference_times.is_empty() {
        return Err(Error::Data("no reference times to derive a time limit from".into()));
    }
    if let Some(bad) = reference_times.iter().find(|t| !(**t > 0.0 && t.is_finite())) {
        return Err(Error::Data(format!(
            "reference time {bad} is not positive; the manifest is not calibrated"
        )));
    }
    let slowest = reference_times.iter().copied().fold(0.0, f64::max);
    Ok(timeout_factor * slowest)
}

/// Ratio that maps times measured on this machine onto the machine the
/// manifest was calibrated on.
pub fn calibration_ratio(stored_reference: f64, fresh_reference: f64) -> Result<f64> {
    if !(stored_reference > 0.0 && stored_reference.is_finite())
        || !(fresh_reference > 0.0 && fresh_reference.is_finite())
    {
        return Err(Error::Data(format!(
            "calibration references must be positive (stored {stored_reference}, fresh {fresh_reference})"
        )));
    }
    Ok(stored_reference / fresh_reference)
}

/// Rescales observed times by `stored_reference / fresh_reference`. Censored
/// entries are passed through: a kill is a kill regardless of machine speed.
pub fn apply_calibration(
    measurements: &[CensoredTime],
    stored_reference: f64,
    fresh_reference: f64,
) -> Result<Vec<CensoredTime>> {
    let ratio = calibration_ratio(stored_reference, fresh_reference)?;
    Ok(measurements
        .iter()
        .map(|m| if m.censored { *m } else { CensoredTime::observed(m.value * ratio) })
        .collect())
}
