//! Evaluation driver: runs candidates level by level through a [`Runner`],
//! reduces repeated timings, applies calibration and scores the result.
//!
//! Jobs are dispatched one at a time, one job per (sample, level). Level 0
//! runs first as a correctness filter; later levels run in order until one
//! times out, after which the rest are never dispatched.

mod process;
mod protocol;

pub use process::{hard_kill_supervision, job_budget, ProcessRunner, SupervisedRun};
pub use protocol::{check_records, JobCase, RecordStatus, Runner, RunnerJob, RunnerRecord};

use log::debug;

use crate::error::{Error, Result};
use crate::metrics::speedup_at_1;
use crate::problem::{validate_problem, CodeSample, Level, OutputChecker, Problem};
use crate::scoring::{
    level_progression, level_score, sample_score, FailureReason, LevelOutcome, Progression, SampleEvaluation,
};
use crate::timing::{calibration_ratio, compute_time_limit, hodges_lehmann, CensoredTime, HarnessConfig};
use crate::value::Value;

/// Maps times measured on this machine onto the calibration machine's scale.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Calibration {
    /// `stored_reference / fresh_reference`.
    pub ratio: f64,
}

impl Calibration {
    pub fn identity() -> Self {
        Calibration { ratio: 1.0 }
    }

    pub fn from_reference(stored: f64, fresh: f64) -> Result<Self> {
        Ok(Calibration { ratio: calibration_ratio(stored, fresh)? })
    }
}

impl Default for Calibration {
    fn default() -> Self {
        Self::identity()
    }
}

fn case_id(level: usize, m: usize) -> String {
    format!("l{level}c{m}")
}

fn job_for_level(
    job_id: String,
    source: &str,
    problem: &Problem,
    level: &Level,
    soft_limit: f64,
    repeats: usize,
    checker: OutputChecker,
    expected: Option<Vec<Value>>,
) -> RunnerJob {
    RunnerJob {
        job_id,
        candidate_source: source.to_owned(),
        entry_point: problem.entry_point.clone(),
        cases: level
            .cases
            .iter()
            .enumerate()
            .map(|(m, c)| JobCase { case_id: case_id(level.index, m), input: c.input.clone() })
            .collect(),
        soft_limit,
        repeats,
        checker,
        expected_outputs: expected,
    }
}

/// Hardness of levels 1..=L, from the config override or the manifest.
pub fn effective_hardness(problem: &Problem, config: &HarnessConfig) -> Result<Vec<f64>> {
    let manifest: Vec<f64> = problem.scored_levels().map(|l| l.hardness).collect();
    match &config.hardness_weights {
        None => Ok(manifest),
        Some(h) if h.len() == manifest.len() => Ok(h.clone()),
        Some(h) => Err(Error::Config(format!(
            "problem `{}` has {} scored levels but {} hardness weights were given",
            problem.id,
            manifest.len(),
            h.len()
        ))),
    }
}

/// Runs one candidate through every level of a calibrated problem.
pub fn evaluate_sample(
    problem: &Problem,
    sample: &CodeSample,
    config: &HarnessConfig,
    runner: &dyn Runner,
    calibration: Calibration,
) -> Result<SampleEvaluation> {
    config.validate()?;
    if !problem.is_calibrated() {
        return Err(Error::Data(format!("problem `{}` is not calibrated", problem.id)));
    }
    if sample.problem_id != problem.id {
        return Err(Error::Parameter(format!(
            "sample for `{}` evaluated against problem `{}`",
            sample.problem_id, problem.id
        )));
    }
    if !(calibration.ratio > 0.0 && calibration.ratio.is_finite()) {
        return Err(Error::Config(format!("calibration ratio {} must be positive", calibration.ratio)));
    }
    let hardness = effective_hardness(problem, config)?;
    let limit = problem.time_limit;
    // The soft limit is expressed in this machine's time.
    let local_limit = limit / calibration.ratio;

    let mut outcomes: Vec<LevelOutcome> = Vec::with_capacity(problem.levels.len());
    let mut failure = FailureReason::None;
    let mut diagnostics = String::new();

    for level in &problem.levels {
        let expected = level
            .cases
            .iter()
            .map(|c| c.expected_output.clone().expect("calibrated"))
            .collect();
        let job = job_for_level(
            format!("{}/{}/level{}", problem.id, sample.sample_index, level.index),
            &sample.source,
            problem,
            level,
            local_limit,
            config.repeats,
            problem.output_checker.clone(),
            Some(expected),
        );
        job.validate()?;
        let records = runner.run(&job)?;
        check_records(&job, &records)?;

        let mut outcome = LevelOutcome {
            level_index: level.index,
            case_times: Vec::with_capacity(level.cases.len()),
            outputs_correct: true,
            executed: true,
        };
        let mut runtime_error = None;
        let mut finished = false;
        for rec in &records {
            match rec.status {
                RecordStatus::Ok => {
                    let local = hodges_lehmann(&rec.timings)?;
                    let scaled = local * calibration.ratio;
                    outcome.case_times.push(if scaled >= limit {
                        CensoredTime::killed_at(limit)
                    } else {
                        CensoredTime::observed(scaled)
                    });
                }
                RecordStatus::Timeout => {
                    // Killed at the local soft limit, which is T once calibrated.
                    outcome.case_times.push(CensoredTime::killed_at(limit));
                    finished = true;
                }
                RecordStatus::WrongOutput => {
                    outcome.outputs_correct = false;
                    diagnostics = format!("level {} case {}: wrong output. {}", level.index, rec.case_id, rec.diagnostics);
                    finished = true;
                }
                RecordStatus::RuntimeError => {
                    runtime_error = Some(format!("level {} case {}: {}", level.index, rec.case_id, rec.diagnostics));
                    finished = true;
                }
            }
            if finished {
                break;
            }
        }
        if !finished && records.len() < job.cases.len() {
            return Err(Error::RunnerProtocol {
                job_id: job.job_id.clone(),
                message: format!("{} records for {} cases", records.len(), job.cases.len()),
            });
        }
        outcomes.push(outcome);

        if let Some(msg) = runtime_error {
            failure = FailureReason::RuntimeError;
            diagnostics = msg;
            break;
        }
        match level_progression(&outcomes)? {
            Progression::Continue => {}
            Progression::StopTimeout => {
                debug!("{}#{} timed out at level {}", problem.id, sample.sample_index, level.index);
                break;
            }
            Progression::StopIncorrect => {
                failure = if level.index == 0 { FailureReason::Level0Fail } else { FailureReason::WrongOutput };
                if level.index == 0 && outcomes[0].timed_out() && diagnostics.is_empty() {
                    diagnostics = "level 0 timed out".into();
                }
                break;
            }
        }
    }
    for level in &problem.levels[outcomes.len()..] {
        outcomes.push(LevelOutcome::skipped(level.index));
    }

    let correct = failure == FailureReason::None;
    let mut level_scores = Vec::with_capacity(hardness.len());
    let mut speedup_times = Vec::with_capacity(hardness.len());
    let mut speedup_refs = Vec::with_capacity(hardness.len());
    for (level, outcome) in problem.scored_levels().zip(&outcomes[1..]) {
        let refs: Vec<f64> = level.cases.iter().map(|c| c.reference_time).collect();
        let worst_ref = refs.iter().copied().fold(0.0, f64::max);
        let complete = outcome.executed && outcome.case_times.len() == level.cases.len();
        let f = match outcome.worst_time() {
            Some(worst) if correct && (complete || worst.censored) => level_score(worst, worst_ref, limit)?,
            _ => 0.0,
        };
        level_scores.push(f);

        // Cases that never ran are treated as killed at the limit.
        let mut times = outcome.case_times.clone();
        times.resize(level.cases.len(), CensoredTime::killed_at(limit));
        speedup_times.push(times);
        speedup_refs.push(refs);
    }
    let efficiency_score = sample_score(&level_scores, &hardness, correct)?;
    let speedup = if correct {
        speedup_at_1(&speedup_times, &speedup_refs, limit, &hardness)?
    } else {
        0.0
    };

    Ok(SampleEvaluation {
        problem_id: problem.id.clone(),
        sample_index: sample.sample_index,
        correct,
        level_scores,
        efficiency_score,
        failure_reason: failure,
        speedup,
        levels: outcomes,
        diagnostics,
    })
}

/// Times the reference solution on every case, records its outputs as the
/// expected outputs, and sets the time limit to `timeout_factor` times the
/// slowest reference case.
///
/// Each level is run twice: once to capture outputs, then `repeats` timed
/// runs checked exactly against the captured outputs, which exposes a
/// nondeterministic reference.
pub fn measure_reference(
    problem: &Problem,
    reference_source: &str,
    config: &HarnessConfig,
    runner: &dyn Runner,
) -> Result<Problem> {
    config.validate()?;
    let reference_error = |message: String| Error::Reference { problem_id: problem.id.clone(), message };
    let ceiling = config.reference_ceiling;
    let mut calibrated = problem.clone();

    for (li, level) in problem.levels.iter().enumerate() {
        let capture = job_for_level(
            format!("{}/reference/level{}/capture", problem.id, level.index),
            reference_source,
            problem,
            level,
            ceiling,
            1,
            OutputChecker::Exact,
            None,
        );
        let records = runner.run(&capture)?;
        check_records(&capture, &records)?;
        if records.len() != capture.cases.len() {
            return Err(reference_error(format!("level {}: missing records", level.index)));
        }
        let mut outputs = Vec::with_capacity(records.len());
        for rec in &records {
            match rec.status {
                RecordStatus::Ok => outputs.push(rec.output.clone().ok_or_else(|| Error::RunnerProtocol {
                    job_id: capture.job_id.clone(),
                    message: format!("case {} reported no output in capture mode", rec.case_id),
                })?),
                RecordStatus::Timeout => {
                    return Err(reference_error(format!(
                        "case {} exceeded the sanity ceiling of {ceiling} s",
                        rec.case_id
                    )))
                }
                _ => {
                    return Err(reference_error(format!(
                        "case {} failed ({:?}): {}",
                        rec.case_id, rec.status, rec.diagnostics
                    )))
                }
            }
        }

        let timed = job_for_level(
            format!("{}/reference/level{}/timed", problem.id, level.index),
            reference_source,
            problem,
            level,
            ceiling,
            config.repeats,
            OutputChecker::Exact,
            Some(outputs.clone()),
        );
        let records = runner.run(&timed)?;
        check_records(&timed, &records)?;
        if records.len() != timed.cases.len() {
            return Err(reference_error(format!("level {}: missing records", level.index)));
        }
        for (m, rec) in records.iter().enumerate() {
            let t = match rec.status {
                RecordStatus::Ok => hodges_lehmann(&rec.timings)?,
                RecordStatus::WrongOutput => {
                    return Err(reference_error(format!(
                        "nondeterministic reference: case {} changed its output between runs",
                        rec.case_id
                    )))
                }
                RecordStatus::Timeout => {
                    return Err(reference_error(format!(
                        "case {} exceeded the sanity ceiling of {ceiling} s",
                        rec.case_id
                    )))
                }
                RecordStatus::RuntimeError => {
                    return Err(reference_error(format!("case {} failed: {}", rec.case_id, rec.diagnostics)))
                }
            };
            if !(t > 0.0) {
                return Err(reference_error(format!("case {} measured a zero duration", rec.case_id)));
            }
            let case = &mut calibrated.levels[li].cases[m];
            case.reference_time = t;
            case.expected_output = Some(outputs[m].clone());
        }
    }

    let all_times: Vec<f64> = calibrated
        .levels
        .iter()
        .flat_map(|l| l.cases.iter().map(|c| c.reference_time))
        .collect();
    calibrated.time_limit = compute_time_limit(&all_times, config.timeout_factor)?;
    let violations = validate_problem(&calibrated);
    if !violations.is_empty() {
        return Err(Error::Validation(violations));
    }
    Ok(calibrated)
}

/// Re-times the reference on the problem's slowest case and returns the
/// calibration mapping this machine onto the stored timings.
pub fn probe_reference(
    problem: &Problem,
    reference_source: &str,
    config: &HarnessConfig,
    runner: &dyn Runner,
) -> Result<Calibration> {
    config.validate()?;
    let (li, m) = problem
        .slowest_case()
        .ok_or_else(|| Error::Data(format!("problem `{}` has no cases", problem.id)))?;
    let level = problem.level(li).expect("slowest case level exists");
    let case = &level.cases[m];
    let expected = case
        .expected_output
        .clone()
        .ok_or_else(|| Error::Data(format!("problem `{}` is not calibrated", problem.id)))?;
    let job = RunnerJob {
        job_id: format!("{}/reference/probe", problem.id),
        candidate_source: reference_source.to_owned(),
        entry_point: problem.entry_point.clone(),
        cases: vec![JobCase { case_id: case_id(li, m), input: case.input.clone() }],
        soft_limit: config.reference_ceiling,
        repeats: config.repeats,
        checker: problem.output_checker.clone(),
        expected_outputs: Some(vec![expected]),
    };
    let records = runner.run(&job)?;
    check_records(&job, &records)?;
    match records.first() {
        Some(rec) if rec.status == RecordStatus::Ok => {
            let fresh = hodges_lehmann(&rec.timings)?;
            Calibration::from_reference(case.reference_time, fresh)
        }
        Some(rec) => Err(Error::Reference {
            problem_id: problem.id.clone(),
            message: format!("calibration probe failed ({:?}): {}", rec.status, rec.diagnostics),
        }),
        None => Err(Error::RunnerProtocol { job_id: job.job_id, message: "no record for probe".into() }),
    }
}
