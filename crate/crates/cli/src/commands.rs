use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::Mutex;

use anyhow::{anyhow, bail, Context, Result};
use effbench_core::harness::{evaluate_sample, measure_reference, probe_reference, Calibration, ProcessRunner};
use effbench_core::metrics::{aggregate_report, render_table, ProblemTally, ScoreList};
use effbench_core::problem::{
    import_generated_cases, parse_problemset, validate_problemset, write_problemset, CodeSample, Problem, ProblemSet,
};
use effbench_core::scoring::{FailureReason, SampleEvaluation};
use effbench_core::selftest;
use effbench_core::timing::HarnessConfig;
use effbench_core::Error;
use log::{info, warn};

use crate::results::{self, Appender};
use crate::{CalibrateArgs, EvaluateArgs, ImportArgs, RunnerArgs, ScoreArgs, SelftestArgs};

/// A problem with how the tool was invoked (bad flag, missing file).
#[derive(Debug, thiserror::Error)]
#[error("{0}")]
pub struct UsageError(pub String);

/// `println!` that ignores a closed pipe (`effbench ... | head`).
macro_rules! say {
    ($($arg:tt)*) => {{
        let _ = writeln!(std::io::stdout().lock(), $($arg)*);
    }};
}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

/// 2 for configuration and input errors, 3 for harness failures.
pub fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.is::<UsageError>() || cause.is::<clap::Error>() {
            return 2;
        }
        if let Some(e) = cause.downcast_ref::<Error>() {
            return match e {
                Error::RunnerProtocol { .. } | Error::Fatal { .. } | Error::Reference { .. } => 3,
                _ => 2,
            };
        }
    }
    3
}

fn split_command(line: &str, what: &str) -> Result<Vec<String>> {
    match shlex::split(line) {
        Some(parts) if !parts.is_empty() => Ok(parts),
        _ => Err(usage(format!("cannot parse {what} command `{line}`"))),
    }
}

fn harness_config(r: &RunnerArgs) -> HarnessConfig {
    HarnessConfig {
        repeats: r.repeats,
        hard_kill_margin: r.hard_kill_margin,
        memory_limit_bytes: (r.memory_mib > 0).then_some(r.memory_mib << 20),
        ..HarnessConfig::default()
    }
}

fn process_runner(r: &RunnerArgs, config: &HarnessConfig) -> Result<ProcessRunner> {
    let command = split_command(&r.runner, "runner")?;
    Ok(ProcessRunner::new(command, config.hard_kill_margin, config.memory_limit_bytes)?)
}

/// `<dir>/<problem_id>.<ext>` (or a bare `<problem_id>`), if exactly one exists.
fn find_reference(dir: &Path, problem_id: &str) -> Result<Option<PathBuf>> {
    let mut found = Vec::new();
    for entry in std::fs::read_dir(dir).with_context(|| format!("reading {}", dir.display()))? {
        let path = entry?.path();
        if path.is_file() && path.file_stem().and_then(|s| s.to_str()) == Some(problem_id) {
            found.push(path);
        }
    }
    match found.len() {
        0 => Ok(None),
        1 => Ok(found.pop()),
        _ => Err(usage(format!("several reference files for problem `{problem_id}` in {}", dir.display()))),
    }
}

fn load_references(dir: &Path, problems: &[&Problem]) -> Result<BTreeMap<String, String>> {
    if !dir.is_dir() {
        return Err(usage(format!("reference directory {} does not exist", dir.display())));
    }
    let mut sources = BTreeMap::new();
    let mut missing = Vec::new();
    for p in problems {
        match find_reference(dir, &p.id)? {
            Some(path) => {
                let src = std::fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
                sources.insert(p.id.clone(), src);
            }
            None => missing.push(p.id.as_str()),
        }
    }
    if !missing.is_empty() {
        return Err(usage(format!(
            "no reference solution in {} for problem(s): {}",
            dir.display(),
            missing.join(", ")
        )));
    }
    Ok(sources)
}

pub fn calibrate(args: &CalibrateArgs) -> Result<ExitCode> {
    let config = HarnessConfig {
        timeout_factor: args.alpha,
        reference_ceiling: args.reference_ceiling,
        ..harness_config(&args.runner)
    };
    config.validate()?;
    let set = parse_problemset(&args.problemset)?;
    let problems: Vec<&Problem> = set.problems.iter().collect();
    let references = load_references(&args.references, &problems)?;
    let runner = process_runner(&args.runner, &config)?;

    let mut calibrated = Vec::with_capacity(set.problems.len());
    for p in &set.problems {
        info!("calibrating `{}`", p.id);
        let c = measure_reference(p, &references[&p.id], &config, &runner)
            .with_context(|| format!("calibrating problem `{}`", p.id))?;
        let slowest = c.max_reference_time();
        say!("{}: T = {:.6} s (slowest reference case {:.6} s, alpha {})", c.id, c.time_limit, slowest, args.alpha);
        calibrated.push(c);
    }
    let set = validate_problemset(ProblemSet { problems: calibrated })?;
    write_problemset(&set, &args.out)?;
    say!("wrote {}", args.out.display());
    Ok(ExitCode::SUCCESS)
}

/// Sample files `<dir>/<problem_id>/<index>[.ext]`, sorted by problem then index.
fn discover_samples(dir: &Path, known: &BTreeSet<&str>) -> Result<Vec<CodeSample>> {
    if !dir.is_dir() {
        return Err(usage(format!("samples directory {} does not exist", dir.display())));
    }
    let mut out = Vec::new();
    let mut subdirs: Vec<PathBuf> = std::fs::read_dir(dir)
        .with_context(|| format!("reading {}", dir.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_dir())
        .collect();
    subdirs.sort();
    for sub in subdirs {
        let pid = sub.file_name().and_then(|s| s.to_str()).unwrap_or_default().to_owned();
        if !known.contains(pid.as_str()) {
            warn!("skipping {}: no problem `{pid}` in the manifest", sub.display());
            continue;
        }
        let mut seen = BTreeSet::new();
        for entry in std::fs::read_dir(&sub)? {
            let path = entry?.path();
            if !path.is_file() {
                continue;
            }
            let Some(index) = path.file_stem().and_then(|s| s.to_str()).and_then(|s| s.parse::<usize>().ok()) else {
                warn!("skipping {}: file name is not a sample index", path.display());
                continue;
            };
            if !seen.insert(index) {
                return Err(usage(format!("problem `{pid}` has two files for sample {index}")));
            }
            let source = std::fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
            let mut origin = BTreeMap::new();
            origin.insert("path".to_owned(), path.display().to_string());
            out.push(CodeSample { problem_id: pid.clone(), sample_index: index, source, origin });
        }
    }
    out.sort_by(|a, b| (&a.problem_id, a.sample_index).cmp(&(&b.problem_id, b.sample_index)));
    Ok(out)
}

fn describe(ev: &SampleEvaluation) -> String {
    let reason = match ev.failure_reason {
        FailureReason::None => String::new(),
        r => format!(" ({})", serde_json::to_value(r).ok().and_then(|v| v.as_str().map(str::to_owned)).unwrap_or_default()),
    };
    let scores: Vec<String> = ev.level_scores.iter().map(|f| format!("{f:.3}")).collect();
    format!(
        "{}#{}: correct={} e={:.4} levels=[{}]{}",
        ev.problem_id,
        ev.sample_index,
        ev.correct,
        ev.efficiency_score,
        scores.join(", "),
        reason
    )
}

pub fn evaluate(args: &EvaluateArgs) -> Result<ExitCode> {
    let config = HarnessConfig { hardness_weights: args.hardness.clone(), ..harness_config(&args.runner) };
    config.validate()?;
    if args.parallel == 0 {
        return Err(usage("--parallel must be at least 1"));
    }
    if args.parallel > 1 {
        warn!(
            "running {} samples concurrently: timings will be noisier and scores less comparable",
            args.parallel
        );
    }
    let set = parse_problemset(&args.problemset)?;
    let uncalibrated: Vec<&str> = set.problems.iter().filter(|p| !p.is_calibrated()).map(|p| p.id.as_str()).collect();
    if !uncalibrated.is_empty() {
        return Err(usage(format!("manifest is not calibrated for: {}", uncalibrated.join(", "))));
    }
    let by_id: BTreeMap<&str, &Problem> = set.problems.iter().map(|p| (p.id.as_str(), p)).collect();
    let samples = discover_samples(&args.samples, &by_id.keys().copied().collect())?;

    let previous = results::latest(results::load(&args.out, true)?);
    let mut appender = Appender::open(&args.out)?;
    if samples.is_empty() {
        warn!("no samples found under {}", args.samples.display());
        return Ok(ExitCode::SUCCESS);
    }
    let pending: Vec<&CodeSample> = samples
        .iter()
        .filter(|s| !previous.contains_key(&(s.problem_id.clone(), s.sample_index)))
        .collect();
    info!("{} samples, {} already evaluated", samples.len(), samples.len() - pending.len());

    let runner = process_runner(&args.runner, &config)?;
    let mut calibrations: BTreeMap<&str, Calibration> = BTreeMap::new();
    if let Some(dir) = &args.references {
        let needed: BTreeSet<&str> = pending.iter().map(|s| s.problem_id.as_str()).collect();
        let problems: Vec<&Problem> = needed.iter().map(|id| by_id[id]).collect();
        let sources = load_references(dir, &problems)?;
        for p in problems {
            let cal = probe_reference(p, &sources[&p.id], &config, &runner)
                .with_context(|| format!("probing reference for `{}`", p.id))?;
            info!("{}: calibration ratio {:.4}", p.id, cal.ratio);
            calibrations.insert(p.id.as_str(), cal);
        }
    }

    let next = AtomicUsize::new(0);
    let abort = AtomicBool::new(false);
    let fresh: Mutex<Vec<SampleEvaluation>> = Mutex::new(Vec::new());
    let first_error: Mutex<Option<anyhow::Error>> = Mutex::new(None);
    let appender = Mutex::new(&mut appender);
    let work = || loop {
        if abort.load(Ordering::SeqCst) {
            return;
        }
        let i = next.fetch_add(1, Ordering::SeqCst);
        let Some(sample) = pending.get(i) else { return };
        let problem = by_id[sample.problem_id.as_str()];
        let cal = calibrations.get(problem.id.as_str()).copied().unwrap_or_default();
        let outcome = evaluate_sample(problem, sample, &config, &runner, cal)
            .with_context(|| format!("evaluating {}#{}", sample.problem_id, sample.sample_index))
            .and_then(|ev| {
                appender.lock().unwrap().append(&ev)?;
                Ok(ev)
            });
        match outcome {
            Ok(ev) => {
                say!("{}", describe(&ev));
                fresh.lock().unwrap().push(ev);
            }
            Err(e) => {
                abort.store(true, Ordering::SeqCst);
                first_error.lock().unwrap().get_or_insert(e);
                return;
            }
        }
    };
    std::thread::scope(|s| {
        for _ in 0..args.parallel.min(pending.len().max(1)) {
            s.spawn(work);
        }
    });
    if let Some(e) = first_error.into_inner().unwrap() {
        return Err(e);
    }

    let fresh = fresh.into_inner().unwrap();
    let wanted: BTreeSet<(String, usize)> = samples.iter().map(|s| (s.problem_id.clone(), s.sample_index)).collect();
    let failures = previous
        .values()
        .filter(|ev| wanted.contains(&(ev.problem_id.clone(), ev.sample_index)))
        .chain(&fresh)
        .filter(|ev| ev.failure_reason != FailureReason::None)
        .count();
    eprintln!(
        "evaluated {} new samples ({} skipped as already done); {} with failures",
        fresh.len(),
        samples.len() - pending.len(),
        failures
    );
    Ok(if failures > 0 { ExitCode::from(1) } else { ExitCode::SUCCESS })
}

pub fn score(args: &ScoreArgs) -> Result<ExitCode> {
    if !args.results.exists() {
        return Err(usage(format!("results file {} does not exist", args.results.display())));
    }
    let records = results::latest(results::load(&args.results, false)?);
    if records.is_empty() {
        return Err(usage(format!("{} holds no evaluation records", args.results.display())));
    }
    let mut grouped: BTreeMap<String, Vec<&SampleEvaluation>> = BTreeMap::new();
    for ev in records.values() {
        grouped.entry(ev.problem_id.clone()).or_default().push(ev);
    }
    let mut tallies = BTreeMap::new();
    for (pid, evs) in grouped {
        let scores = ScoreList::new(evs.iter().map(|e| e.efficiency_score).collect())
            .with_context(|| format!("scores of problem `{pid}`"))?;
        let n_correct = evs.iter().filter(|e| e.correct).count();
        let speedup = evs.iter().map(|e| e.speedup).sum::<f64>() / evs.len() as f64;
        tallies.insert(pid, ProblemTally { scores, n_correct, speedup });
    }
    let report = aggregate_report(&tallies, &args.k)?;
    say!("{}", render_table(&report).trim_end());
    if let Some(out) = &args.out {
        let mut text = serde_json::to_string_pretty(&report)?;
        text.push('\n');
        std::fs::write(out, text).with_context(|| format!("writing {}", out.display()))?;
    }
    Ok(ExitCode::SUCCESS)
}

pub fn selftest(args: &SelftestArgs) -> Result<ExitCode> {
    let results = selftest::run_all(args.seed)?;
    let mut failed = 0;
    for r in &results {
        say!("[{}] {}: {}", if r.passed { "PASS" } else { "FAIL" }, r.name, r.detail);
        failed += usize::from(!r.passed);
    }
    say!("seed {}: {} of {} suites passed", args.seed, results.len() - failed, results.len());
    Ok(if failed == 0 { ExitCode::SUCCESS } else { ExitCode::from(1) })
}

pub fn import_cases(args: &ImportArgs) -> Result<ExitCode> {
    let mut set = parse_problemset(&args.problemset)?;
    let command = split_command(&args.generator, "generator")?;
    let slot = set
        .problems
        .iter_mut()
        .find(|p| p.id == args.problem)
        .ok_or_else(|| anyhow!(UsageError(format!("no problem `{}` in the manifest", args.problem))))?;
    let before: usize = slot.levels.iter().map(|l| l.cases.len()).sum();
    *slot = import_generated_cases(slot, &command, args.seed)?;
    let after: usize = slot.levels.iter().map(|l| l.cases.len()).sum();
    if after == before {
        bail!("generator added no cases");
    }
    let set = validate_problemset(set)?;
    write_problemset(&set, &args.out)?;
    say!("added {} cases to `{}`; wrote {}", after - before, args.problem, args.out.display());
    Ok(ExitCode::SUCCESS)
}
