//! Scripted in-process runner and problem builders shared by integration tests.
#![allow(dead_code)]

use std::sync::Mutex;

use effbench_core::harness::{RecordStatus, Runner, RunnerJob, RunnerRecord};
use effbench_core::problem::{Level, OutputChecker, Problem, TestCase};
use effbench_core::value::Value;
use effbench_core::Result;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Outcome {
    /// Every timed call takes this many (local) seconds.
    Takes(f64),
    Wrong,
    Crash,
}

type Script = dyn Fn(&RunnerJob, usize, usize) -> Outcome + Send + Sync;

/// Answers jobs from a closure `(job, level, case) -> Outcome`. The correct
/// output of every case is its input. Job ids are logged in dispatch order.
pub struct ScriptedRunner {
    script: Box<Script>,
    pub calls: Mutex<Vec<String>>,
}

impl ScriptedRunner {
    pub fn new(script: impl Fn(&RunnerJob, usize, usize) -> Outcome + Send + Sync + 'static) -> Self {
        ScriptedRunner { script: Box::new(script), calls: Mutex::new(Vec::new()) }
    }

    pub fn calls(&self) -> Vec<String> {
        self.calls.lock().unwrap().clone()
    }

    /// Levels that were dispatched for evaluation (excluding reference jobs).
    pub fn dispatched_levels(&self) -> Vec<usize> {
        self.calls()
            .iter()
            .filter(|id| !id.contains("/reference/"))
            .map(|id| id.rsplit("level").next().unwrap().parse().unwrap())
            .collect()
    }
}

fn parse_case_id(id: &str) -> (usize, usize) {
    let rest = id.strip_prefix('l').unwrap();
    let (l, m) = rest.split_once('c').unwrap();
    (l.parse().unwrap(), m.parse().unwrap())
}

impl Runner for ScriptedRunner {
    fn run(&self, job: &RunnerJob) -> Result<Vec<RunnerRecord>> {
        self.calls.lock().unwrap().push(job.job_id.clone());
        let capture = job.expected_outputs.is_none();
        let mut out = Vec::new();
        for case in &job.cases {
            let (l, m) = parse_case_id(&case.case_id);
            let rec = |status, timings: Vec<f64>, output: Option<Value>| RunnerRecord {
                case_id: case.case_id.clone(),
                status,
                timings,
                diagnostics: String::new(),
                output,
            };
            match (self.script)(job, l, m) {
                Outcome::Takes(t) if t >= job.soft_limit => {
                    out.push(rec(RecordStatus::Timeout, vec![job.soft_limit], None));
                    break;
                }
                Outcome::Takes(t) => {
                    let output = capture.then(|| case.input.clone());
                    out.push(rec(RecordStatus::Ok, vec![t; job.repeats], output));
                }
                Outcome::Wrong if capture => {
                    // A nondeterministic reference: the captured output differs
                    // from what the timed pass produces.
                    out.push(rec(RecordStatus::Ok, vec![1e-3; job.repeats], Some(Value::Str("drift".into()))));
                }
                Outcome::Wrong => {
                    out.push(rec(RecordStatus::WrongOutput, vec![1e-3], None));
                    break;
                }
                Outcome::Crash => {
                    out.push(rec(RecordStatus::RuntimeError, vec![], None));
                    break;
                }
            }
        }
        Ok(out)
    }
}

/// A problem whose case `m` of level `l` has input `[l, m]`, expected output
/// equal to its input, and the given reference time. `T = alpha * max t*`.
pub fn calibrated_problem(reference_times: &[Vec<f64>], hardness: &[f64], alpha: f64) -> Problem {
    let mut p = uncalibrated_problem(&reference_times.iter().map(Vec::len).collect::<Vec<_>>(), hardness);
    for (level, refs) in p.levels.iter_mut().zip(reference_times) {
        for (case, &t) in level.cases.iter_mut().zip(refs) {
            case.expected_output = Some(case.input.clone());
            case.reference_time = t;
        }
    }
    let max = reference_times.iter().flatten().copied().fold(0.0, f64::max);
    p.time_limit = alpha * max;
    p
}

pub fn uncalibrated_problem(cases_per_level: &[usize], hardness: &[f64]) -> Problem {
    assert_eq!(cases_per_level.len(), hardness.len() + 1);
    Problem {
        id: "p".into(),
        prompt: "def f(l, m):\n    ...\n".into(),
        entry_point: "f".into(),
        time_limit: 1.0,
        output_checker: OutputChecker::Exact,
        levels: cases_per_level
            .iter()
            .enumerate()
            .map(|(l, &n)| Level {
                index: l,
                hardness: if l == 0 { 0.0 } else { hardness[l - 1] },
                cases: (0..n)
                    .map(|m| TestCase {
                        input: Value::list([Value::from(l as i64), Value::from(m as i64)]),
                        expected_output: None,
                        reference_time: 0.0,
                    })
                    .collect(),
            })
            .collect(),
    }
}

pub fn sample(index: usize) -> effbench_core::problem::CodeSample {
    effbench_core::problem::CodeSample {
        problem_id: "p".into(),
        sample_index: index,
        source: "def f(l, m):\n    return [l, m]\n".into(),
        origin: Default::default(),
    }
}
