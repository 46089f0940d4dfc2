//! Per-level efficiency scores, level progression and the hardness-weighted
//! sample score.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::timing::CensoredTime;

/// What happened when one level of test cases was run for a sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelOutcome {
    pub level_index: usize,
    /// One entry per executed case, in case order. Cases after the first
    /// censored one are not run.
    pub case_times: Vec<CensoredTime>,
    pub outputs_correct: bool,
    pub executed: bool,
}

impl LevelOutcome {
    pub fn skipped(level_index: usize) -> Self {
        LevelOutcome {
            level_index,
            case_times: Vec::new(),
            outputs_correct: true,
            executed: false,
        }
    }

    pub fn timed_out(&self) -> bool {
        self.case_times.iter().any(|t| t.censored)
    }

    /// Slowest case; censored cases dominate any observed time.
    pub fn worst_time(&self) -> Option<CensoredTime> {
        if let Some(c) = self.case_times.iter().find(|t| t.censored) {
            return Some(*c);
        }
        self.case_times
            .iter()
            .copied()
            .max_by(|a, b| a.value.total_cmp(&b.value))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FailureReason {
    None,
    WrongOutput,
    Level0Fail,
    RuntimeError,
}

/// Scored result for one candidate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleEvaluation {
    pub problem_id: String,
    pub sample_index: usize,
    pub correct: bool,
    /// f_l for levels 1..=L.
    pub level_scores: Vec<f64>,
    pub efficiency_score: f64,
    pub failure_reason: FailureReason,
    /// Classic speedup for comparison only; overestimates under censoring.
    #[serde(default)]
    pub speedup: f64,
    #[serde(default)]
    pub levels: Vec<LevelOutcome>,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub diagnostics: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Progression {
    Continue,
    StopTimeout,
    StopIncorrect,
}

/// Censoring-aware efficiency of one level:
/// `(T - t)^+ / (T - t*)`, and exactly 0 when the run was killed.
///
/// The result exceeds 1 when the candidate beats the reference.
pub fn level_score(worst_case_time: CensoredTime, worst_reference_time: f64, time_limit: f64) -> Result<f64> {
    if !(worst_reference_time < time_limit) {
        return Err(Error::Data(format!(
            "reference time {worst_reference_time} s must be below the time limit {time_limit} s"
        )));
    }
    if worst_case_time.censored {
        return Ok(0.0);
    }
    let slack = (time_limit - worst_case_time.value).max(0.0);
    Ok(slack / (time_limit - worst_reference_time))
}

/// Decides whether evaluation proceeds to the next level.
///
/// Wrong output anywhere, or a timeout on level 0, means the sample is
/// incorrect. A timeout on a later level stops evaluation but the sample
/// still counts as correct.
pub fn level_progression(outcomes_so_far: &[LevelOutcome]) -> Result<Progression> {
    for (expected, outcome) in outcomes_so_far.iter().enumerate() {
        if outcome.level_index != expected {
            return Err(Error::Parameter(format!(
                "level outcomes out of order: position {expected} holds level {}",
                outcome.level_index
            )));
        }
    }
    let executed = || outcomes_so_far.iter().filter(|o| o.executed);
    if executed().any(|o| !o.outputs_correct) {
        return Ok(Progression::StopIncorrect);
    }
    if let Some(level0) = outcomes_so_far.first() {
        if level0.executed && level0.timed_out() {
            return Ok(Progression::StopIncorrect);
        }
    }
    match executed().next_back() {
        Some(latest) if latest.level_index >= 1 && latest.timed_out() => Ok(Progression::StopTimeout),
        _ => Ok(Progression::Continue),
    }
}

/// Hardness-weighted mean of level scores, or 0 for incorrect code.
pub fn sample_score(level_scores: &[f64], hardness: &[f64], correct: bool) -> Result<f64> {
    if level_scores.len() != hardness.len() {
        return Err(Error::Parameter(format!(
            "{} level scores but {} hardness weights",
            level_scores.len(),
            hardness.len()
        )));
    }
    if hardness.is_empty() || hardness.iter().any(|&h| !(h > 0.0)) {
        return Err(Error::Parameter(format!("hardness weights must be positive: {hardness:?}")));
    }
    if !correct {
        return Ok(0.0);
    }
    let total: f64 = hardness.iter().sum();
    let weighted: f64 = level_scores.iter().zip(hardness).map(|(f, h)| f * h).sum();
    Ok(weighted / total)
}
