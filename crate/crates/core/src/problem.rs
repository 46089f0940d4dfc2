//! Benchmark manifest: problems, levels, test cases and reference timings.
//!
//! A manifest is one JSON document per problemset:
//!
//! ```json
//! { "problems": [ { "id": "fib", "prompt": "...", "entry_point": "fib",
//!     "time_limit_s": 0.002, "output_checker": "exact",
//!     "levels": [ { "index": 0, "hardness": 0.0,
//!       "cases": [ { "input": [10], "expected_output": 55, "reference_time_s": 1e-6 } ] } ] } ] }
//! ```
//!
//! Case inputs are the positional argument list of the entry point. A case
//! without `expected_output` has not been calibrated yet.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;
use std::process::{Command, Stdio};

use serde::{Deserialize, Deserializer, Serialize};

use crate::error::{Error, Result};
use crate::value::Value;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProblemSet {
    pub problems: Vec<Problem>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Problem {
    pub id: String,
    pub prompt: String,
    pub entry_point: String,
    #[serde(rename = "time_limit_s")]
    pub time_limit: f64,
    #[serde(default)]
    pub output_checker: OutputChecker,
    pub levels: Vec<Level>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Level {
    pub index: usize,
    pub hardness: f64,
    pub cases: Vec<TestCase>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestCase {
    pub input: Value,
    #[serde(
        default,
        deserialize_with = "present_value",
        skip_serializing_if = "Option::is_none"
    )]
    pub expected_output: Option<Value>,
    #[serde(rename = "reference_time_s", default)]
    pub reference_time: f64,
}

/// An explicit `null` is a real expected output; only a missing field means
/// "not calibrated".
fn present_value<'de, D: Deserializer<'de>>(d: D) -> Result<Option<Value>, D::Error> {
    Value::deserialize(d).map(Some)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputChecker {
    Exact,
    FloatTolerant { epsilon: f64 },
    Custom { command: Vec<String> },
}

impl Default for OutputChecker {
    fn default() -> Self {
        OutputChecker::FloatTolerant { epsilon: 1e-6 }
    }
}

/// One generated candidate solution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CodeSample {
    pub problem_id: String,
    pub sample_index: usize,
    pub source: String,
    #[serde(default)]
    pub origin: BTreeMap<String, String>,
}

impl Problem {
    pub fn level(&self, index: usize) -> Option<&Level> {
        self.levels.iter().find(|l| l.index == index)
    }

    /// Levels that contribute to the efficiency score (index >= 1).
    pub fn scored_levels(&self) -> impl Iterator<Item = &Level> {
        self.levels.iter().filter(|l| l.index >= 1)
    }

    pub fn max_reference_time(&self) -> f64 {
        self.levels
            .iter()
            .flat_map(|l| l.cases.iter())
            .map(|c| c.reference_time)
            .fold(0.0, f64::max)
    }

    /// Level and case position of the slowest reference run.
    pub fn slowest_case(&self) -> Option<(usize, usize)> {
        let mut best: Option<(usize, usize, f64)> = None;
        for level in &self.levels {
            for (m, case) in level.cases.iter().enumerate() {
                if best.is_none_or(|(_, _, t)| case.reference_time > t) {
                    best = Some((level.index, m, case.reference_time));
                }
            }
        }
        best.map(|(l, m, _)| (l, m))
    }

    pub fn is_calibrated(&self) -> bool {
        self.levels.iter().flat_map(|l| &l.cases).all(|c| {
            c.expected_output.is_some() && c.reference_time > 0.0 && c.reference_time < self.time_limit
        })
    }
}

/// A single invariant violation with a machine-readable code.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Violation {
    pub code: String,
    pub message: String,
}

impl Violation {
    fn new(code: impl Into<String>, message: impl Into<String>) -> Self {
        Violation {
            code: code.into(),
            message: message.into(),
        }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}] {}", self.code, self.message)
    }
}

fn is_identifier(s: &str) -> bool {
    let mut chars = s.chars();
    match chars.next() {
        Some(c) if c == '_' || c.is_alphabetic() => {}
        _ => return false,
    }
    chars.all(|c| c == '_' || c.is_alphanumeric())
}

/// Checks every invariant of a problem and returns all violations found.
pub fn validate_problem(problem: &Problem) -> Vec<Violation> {
    let mut out = Vec::new();
    let pid = &problem.id;

    if problem.id.trim().is_empty() {
        out.push(Violation::new("empty_id", "problem id is empty"));
    }
    if !is_identifier(&problem.entry_point) {
        out.push(Violation::new(
            "entry_point_invalid",
            format!("{pid}: entry point `{}` is not an identifier", problem.entry_point),
        ));
    }
    if !(problem.time_limit.is_finite() && problem.time_limit > 0.0) {
        out.push(Violation::new(
            "time_limit_nonpositive",
            format!("{pid}: time limit {} must be a positive finite number", problem.time_limit),
        ));
    }
    if let OutputChecker::FloatTolerant { epsilon } = problem.output_checker {
        if !(epsilon > 0.0) {
            out.push(Violation::new(
                "checker_epsilon_nonpositive",
                format!("{pid}: float tolerance {epsilon} must be positive"),
            ));
        }
    }

    let contiguous = problem.levels.iter().enumerate().all(|(i, l)| l.index == i);
    if !contiguous {
        let indices: Vec<_> = problem.levels.iter().map(|l| l.index).collect();
        out.push(Violation::new(
            "non_contiguous_levels",
            format!("{pid}: non-contiguous levels {indices:?}; expected 0, 1, 2, ... in order"),
        ));
    }
    if !problem.levels.iter().any(|l| l.index >= 1) {
        out.push(Violation::new(
            "no_scored_level",
            format!("{pid}: at least one level with index >= 1 is required"),
        ));
    }

    for level in &problem.levels {
        let l = level.index;
        if level.cases.is_empty() {
            out.push(Violation::new(
                format!("empty_level@level{l}"),
                format!("{pid}: level {l} has no test cases"),
            ));
        }
        if l == 0 {
            if level.hardness != 0.0 {
                out.push(Violation::new(
                    "hardness_nonzero@level0",
                    format!("{pid}: level 0 is a correctness filter and must have hardness 0, got {}", level.hardness),
                ));
            }
        } else if !(level.hardness.is_finite() && level.hardness > 0.0) {
            out.push(Violation::new(
                format!("hardness_nonpositive@level{l}"),
                format!("{pid}: level {l} hardness {} must be positive", level.hardness),
            ));
        }
        for (m, case) in level.cases.iter().enumerate() {
            let t = case.reference_time;
            if !(t.is_finite() && t >= 0.0) {
                out.push(Violation::new(
                    format!("reference_time_invalid@level{l}.case{m}"),
                    format!("{pid}: level {l} case {m} reference time {t} must be finite and >= 0"),
                ));
            } else if t >= problem.time_limit {
                out.push(Violation::new(
                    format!("reference_time_exceeds_limit@level{l}.case{m}"),
                    format!(
                        "{pid}: level {l} case {m} reference time {t} s is not below the time limit {} s",
                        problem.time_limit
                    ),
                ));
            }
        }
    }
    out
}

/// Validates every problem (and cross-problem id uniqueness), sorting by id.
pub fn validate_problemset(mut set: ProblemSet) -> Result<ProblemSet> {
    let mut violations = Vec::new();
    let mut seen = BTreeSet::new();
    for p in &set.problems {
        if !seen.insert(p.id.as_str()) {
            violations.push(Violation::new(
                "duplicate_problem_id",
                format!("problem id `{}` appears more than once", p.id),
            ));
        }
        violations.extend(validate_problem(p));
    }
    if !violations.is_empty() {
        return Err(Error::Validation(violations));
    }
    set.problems.sort_by(|a, b| a.id.cmp(&b.id));
    Ok(set)
}

pub fn parse_problemset_str(text: &str, origin: &Path) -> Result<ProblemSet> {
    let set: ProblemSet = serde_json::from_str(text).map_err(|e| Error::Parse {
        path: origin.to_path_buf(),
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })?;
    validate_problemset(set)
}

/// Reads and validates a problemset manifest. Problems come back sorted by id.
pub fn parse_problemset(path: &Path) -> Result<ProblemSet> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
    parse_problemset_str(&text, path)
}

/// Pretty, byte-stable JSON encoding of a manifest (trailing newline included).
pub fn serialize_problemset(set: &ProblemSet) -> Result<String> {
    let mut text = serde_json::to_string_pretty(set)?;
    text.push('\n');
    Ok(text)
}

pub fn write_problemset(set: &ProblemSet, path: &Path) -> Result<()> {
    let text = serialize_problemset(set)?;
    std::fs::write(path, text).map_err(|e| Error::io(format!("writing {}", path.display()), e))
}

/// A command line: program followed by its arguments.
pub type CommandSpec = Vec<String>;

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct GeneratedCase {
    level: usize,
    input: Value,
    #[serde(default, deserialize_with = "present_value")]
    expected_output: Option<Value>,
}

/// Runs a test-case generator and appends its cases to the declared levels.
///
/// The generator is invoked as `command... --seed <seed>` and must print one
/// JSON object per line: `{"level": 1, "input": [...]}`. An optional
/// `expected_output` is kept; reference times are left at 0 until calibration.
pub fn import_generated_cases(problem: &Problem, command: &CommandSpec, seed: u64) -> Result<Problem> {
    let (program, args) = command
        .split_first()
        .ok_or_else(|| Error::Config("empty generator command".into()))?;
    let output = Command::new(program)
        .args(args)
        .arg("--seed")
        .arg(seed.to_string())
        .stdin(Stdio::null())
        .output()
        .map_err(|e| Error::io(format!("spawning generator `{program}`"), e))?;

    if !output.status.success() {
        return Err(Error::Generator {
            status: output.status.to_string(),
            diagnostics: String::from_utf8_lossy(&output.stderr).trim().to_owned(),
        });
    }

    let stdout = String::from_utf8(output.stdout).map_err(|e| Error::Format {
        line: 0,
        message: format!("generator output is not UTF-8: {e}"),
    })?;

    let mut updated = problem.clone();
    let mut emitted = 0usize;
    for (lineno, line) in stdout.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let case: GeneratedCase = serde_json::from_str(line).map_err(|e| Error::Format {
            line: lineno + 1,
            message: e.to_string(),
        })?;
        let level = updated
            .levels
            .iter_mut()
            .find(|l| l.index == case.level)
            .ok_or_else(|| Error::Format {
                line: lineno + 1,
                message: format!("level {} does not exist in problem `{}`", case.level, problem.id),
            })?;
        level.cases.push(TestCase {
            input: case.input,
            expected_output: case.expected_output,
            reference_time: 0.0,
        });
        emitted += 1;
    }
    if emitted == 0 {
        return Err(Error::Generator {
            status: output.status.to_string(),
            diagnostics: "no cases emitted".into(),
        });
    }
    Ok(updated)
}
