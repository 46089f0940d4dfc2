//! Runner wire protocol.
//!
//! The harness writes one [`RunnerJob`] as a JSON document to a file and
//! passes its path as the runner's first argument. The runner prints one
//! [`RunnerRecord`] per line on stdout, in case order. Exit code 0 means the
//! protocol was followed, even when the candidate itself failed.

use serde::{Deserialize, Deserializer, Serialize};

use crate::error::{Error, Result};
use crate::problem::OutputChecker;
use crate::value::Value;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JobCase {
    pub case_id: String,
    /// Positional arguments for the entry point.
    pub input: Value,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunnerJob {
    pub job_id: String,
    pub candidate_source: String,
    pub entry_point: String,
    pub cases: Vec<JobCase>,
    /// Per-case limit enforced inside the runner, in seconds.
    #[serde(rename = "soft_limit_s")]
    pub soft_limit: f64,
    pub repeats: usize,
    pub checker: OutputChecker,
    /// When absent the runner reports each case's `output` instead of
    /// checking it.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expected_outputs: Option<Vec<Value>>,
}

impl RunnerJob {
    pub fn validate(&self) -> Result<()> {
        if !(self.soft_limit > 0.0 && self.soft_limit.is_finite()) {
            return Err(Error::Config(format!("job {}: soft limit must be > 0", self.job_id)));
        }
        if self.repeats < 1 {
            return Err(Error::Config(format!("job {}: repeats must be >= 1", self.job_id)));
        }
        if let Some(expected) = &self.expected_outputs {
            if expected.len() != self.cases.len() {
                return Err(Error::Config(format!(
                    "job {}: {} expected outputs for {} cases",
                    self.job_id,
                    expected.len(),
                    self.cases.len()
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RecordStatus {
    Ok,
    WrongOutput,
    Timeout,
    RuntimeError,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunnerRecord {
    pub case_id: String,
    pub status: RecordStatus,
    /// Wall-clock seconds of each timed call.
    pub timings: Vec<f64>,
    #[serde(default)]
    pub diagnostics: String,
    #[serde(
        default,
        deserialize_with = "present_value",
        skip_serializing_if = "Option::is_none"
    )]
    pub output: Option<Value>,
}

fn present_value<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<Option<Value>, D::Error> {
    Value::deserialize(d).map(Some)
}

impl RunnerRecord {
    /// Record synthesized for a case the worker never reported on.
    pub fn censored(case_id: impl Into<String>, soft_limit: f64, diagnostics: impl Into<String>) -> Self {
        RunnerRecord {
            case_id: case_id.into(),
            status: RecordStatus::Timeout,
            timings: vec![soft_limit],
            diagnostics: diagnostics.into(),
            output: None,
        }
    }

    pub fn parse_line(line: &str) -> serde_json::Result<Self> {
        serde_json::from_str(line)
    }

    pub fn to_line(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }
}

/// Checks that `records` answer a prefix of the job's cases, in order, with
/// well-formed timings.
pub fn check_records(job: &RunnerJob, records: &[RunnerRecord]) -> Result<()> {
    let fail = |message: String| Error::RunnerProtocol {
        job_id: job.job_id.clone(),
        message,
    };
    if records.len() > job.cases.len() {
        return Err(fail(format!("{} records for {} cases", records.len(), job.cases.len())));
    }
    for (i, (rec, case)) in records.iter().zip(&job.cases).enumerate() {
        if rec.case_id != case.case_id {
            return Err(fail(format!(
                "record {i} is for case `{}`, expected `{}`",
                rec.case_id, case.case_id
            )));
        }
        if rec.timings.iter().any(|t| !(t.is_finite() && *t >= 0.0)) {
            return Err(fail(format!("case `{}` has an invalid timing {:?}", rec.case_id, rec.timings)));
        }
        match rec.status {
            RecordStatus::Ok if rec.timings.len() != job.repeats => {
                return Err(fail(format!(
                    "case `{}` is ok with {} timings, expected {}",
                    rec.case_id,
                    rec.timings.len(),
                    job.repeats
                )));
            }
            RecordStatus::Timeout if rec.timings.is_empty() || rec.timings.len() > job.repeats => {
                return Err(fail(format!("case `{}` timed out with {} timings", rec.case_id, rec.timings.len())));
            }
            _ => {}
        }
    }
    Ok(())
}

/// Something that can execute a runner job. The process-backed
/// implementation is [`super::ProcessRunner`]; tests substitute mocks.
pub trait Runner: Send + Sync {
    /// Returns one record per case, in order. May return fewer records than
    /// cases only when the last record is not `ok`.
    fn run(&self, job: &RunnerJob) -> Result<Vec<RunnerRecord>>;
}

impl<R: Runner + ?Sized> Runner for &R {
    fn run(&self, job: &RunnerJob) -> Result<Vec<RunnerRecord>> {
        (**self).run(job)
    }
}
