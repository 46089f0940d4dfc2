//! Worker processes and hard-kill supervision.

use std::io::{BufRead, BufReader, Read};
use std::os::unix::process::CommandExt;
use std::path::Path;
use std::process::{Child, Command, ExitStatus, Stdio};
use std::sync::mpsc::{self, RecvTimeoutError};
use std::thread;
use std::time::{Duration, Instant};

use log::{debug, warn};

use super::protocol::{check_records, RecordStatus, Runner, RunnerJob, RunnerRecord};
use crate::error::{Error, Result};

const STDERR_CAPTURE_BYTES: usize = 64 * 1024;
const REAP_GRACE: Duration = Duration::from_secs(5);
const POLL: Duration = Duration::from_millis(2);

/// Total wall-clock budget of a job: every case may use its full soft limit
/// on every repeat, plus a fixed margin.
pub fn job_budget(job: &RunnerJob, margin: f64) -> Duration {
    let secs = job.cases.len() as f64 * job.repeats as f64 * job.soft_limit + margin;
    Duration::from_secs_f64(secs.max(0.0))
}

/// What a supervised worker produced.
#[derive(Debug)]
pub struct SupervisedRun {
    /// One record per case. Cases the worker never reported are censored at
    /// the soft limit when the worker was killed or stopped after a timeout.
    pub records: Vec<RunnerRecord>,
    pub killed: bool,
    pub exit_status: Option<ExitStatus>,
    pub stderr: String,
}

/// Runs `command` as the worker for `job`, enforcing `budget`.
///
/// The worker is killed (with its whole process group) once the budget is
/// spent. Reported records are kept; every unreported case becomes a
/// timeout censored at the job's soft limit. A worker that cannot be reaped
/// after the kill is a fatal error.
pub fn hard_kill_supervision(mut command: Command, job: &RunnerJob, budget: Duration) -> Result<SupervisedRun> {
    let started = Instant::now();
    let deadline = started + budget;
    let mut child = command
        .stdin(Stdio::null())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .map_err(|e| Error::io(format!("spawning worker for job `{}`", job.job_id), e))?;

    let stdout = child.stdout.take().expect("piped stdout");
    let stderr = child.stderr.take().expect("piped stderr");
    let (tx, rx) = mpsc::channel::<std::io::Result<String>>();
    let reader = thread::spawn(move || {
        for line in BufReader::new(stdout).lines() {
            let stop = line.is_err();
            if tx.send(line).is_err() || stop {
                break;
            }
        }
    });
    let stderr_reader = thread::spawn(move || {
        let mut buf = Vec::new();
        let _ = stderr.take(STDERR_CAPTURE_BYTES as u64).read_to_end(&mut buf);
        String::from_utf8_lossy(&buf).into_owned()
    });

    let mut records = Vec::new();
    let mut killed = false;
    let mut protocol_error = None;

    loop {
        let now = Instant::now();
        if now >= deadline {
            killed = true;
            break;
        }
        match rx.recv_timeout(deadline - now) {
            Ok(Ok(line)) => {
                if line.trim().is_empty() {
                    continue;
                }
                match RunnerRecord::parse_line(&line) {
                    Ok(rec) => records.push(rec),
                    Err(e) => {
                        protocol_error = Some(format!("unparseable record `{}`: {e}", clip(&line, 200)));
                        break;
                    }
                }
            }
            Ok(Err(e)) => {
                protocol_error = Some(format!("reading worker output: {e}"));
                break;
            }
            Err(RecvTimeoutError::Timeout) => {
                killed = true;
                break;
            }
            Err(RecvTimeoutError::Disconnected) => break,
        }
    }

    let exit_status = if killed || protocol_error.is_some() {
        kill_and_reap(&mut child, &job.job_id)?;
        None
    } else {
        match wait_until(&mut child, deadline)? {
            Some(status) => Some(status),
            None => {
                killed = true;
                kill_and_reap(&mut child, &job.job_id)?;
                None
            }
        }
    };
    drop(rx);
    join_within(reader, Duration::from_millis(200));
    let stderr = join_within(stderr_reader, Duration::from_millis(200)).unwrap_or_default();

    if let Some(message) = protocol_error {
        return Err(Error::RunnerProtocol { job_id: job.job_id.clone(), message });
    }
    check_records(job, &records)?;

    let complete = records.len() == job.cases.len();
    let stopped_on_timeout = records.last().is_some_and(|r| r.status == RecordStatus::Timeout);
    if killed {
        debug!("job {} killed after {:?}", job.job_id, started.elapsed());
    } else if let Some(status) = exit_status {
        if !status.success() && !stopped_on_timeout {
            return Err(Error::RunnerProtocol {
                job_id: job.job_id.clone(),
                message: format!("runner exited with {status}: {}", clip(stderr.trim(), 2000)),
            });
        }
        if !complete && !stopped_on_timeout {
            return Err(Error::RunnerProtocol {
                job_id: job.job_id.clone(),
                message: format!(
                    "runner exited after {} of {} records: {}",
                    records.len(),
                    job.cases.len(),
                    clip(stderr.trim(), 2000)
                ),
            });
        }
    }

    let note = if killed { "killed by harness: job budget exhausted" } else { "not run: worker stopped after a timeout" };
    for case in &job.cases[records.len()..] {
        records.push(RunnerRecord::censored(case.case_id.clone(), job.soft_limit, note));
    }
    Ok(SupervisedRun { records, killed, exit_status, stderr })
}

/// Joins a reader thread unless it is still blocked after `patience`, which
/// happens when an escaped grandchild keeps the pipe open.
fn join_within<T>(handle: thread::JoinHandle<T>, patience: Duration) -> Option<T> {
    let until = Instant::now() + patience;
    while !handle.is_finished() {
        if Instant::now() >= until {
            return None;
        }
        thread::sleep(POLL);
    }
    handle.join().ok()
}

fn clip(s: &str, max: usize) -> &str {
    match s.char_indices().nth(max) {
        Some((i, _)) => &s[..i],
        None => s,
    }
}

fn wait_until(child: &mut Child, deadline: Instant) -> Result<Option<ExitStatus>> {
    loop {
        if let Some(status) = child.try_wait().map_err(|e| Error::io("waiting for worker", e))? {
            return Ok(Some(status));
        }
        if Instant::now() >= deadline {
            return Ok(None);
        }
        thread::sleep(POLL);
    }
}

fn kill_group(child: &Child) {
    let pid = child.id() as libc::pid_t;
    // SAFETY: signalling a process group we created; failure (ESRCH) is harmless.
    unsafe {
        libc::kill(-pid, libc::SIGKILL);
    }
}

fn kill_and_reap(child: &mut Child, job_id: &str) -> Result<()> {
    kill_group(child);
    let _ = child.kill();
    match wait_until(child, Instant::now() + REAP_GRACE)? {
        Some(_) => Ok(()),
        None => Err(Error::Fatal {
            job_id: job_id.to_owned(),
            message: format!("worker pid {} survived SIGKILL", child.id()),
        }),
    }
}

/// Runs jobs by spawning an external runner command per job.
///
/// The worker gets a scratch working directory holding the job file, a
/// minimal environment, its own process group, an address-space ceiling
/// and, where the kernel permits, a private network namespace.
#[derive(Debug, Clone)]
pub struct ProcessRunner {
    command: Vec<String>,
    hard_kill_margin: f64,
    memory_limit_bytes: Option<u64>,
}

impl ProcessRunner {
    /// `command` is the runner program and its leading arguments; the job
    /// file path is appended. Arguments naming existing files are made
    /// absolute because the worker runs in a scratch directory.
    pub fn new(command: Vec<String>, hard_kill_margin: f64, memory_limit_bytes: Option<u64>) -> Result<Self> {
        if command.is_empty() {
            return Err(Error::Config("runner command is empty".into()));
        }
        if !(hard_kill_margin > 0.0) {
            return Err(Error::Config("hard kill margin must be > 0".into()));
        }
        let command = command
            .into_iter()
            .map(|arg| match Path::new(&arg).canonicalize() {
                Ok(abs) if Path::new(&arg).exists() && arg.contains('/') => abs.display().to_string(),
                _ => arg,
            })
            .collect();
        Ok(ProcessRunner { command, hard_kill_margin, memory_limit_bytes })
    }

    fn command_for(&self, job_file: &Path, workdir: &Path) -> Command {
        let mut cmd = Command::new(&self.command[0]);
        cmd.args(&self.command[1..])
            .arg(job_file)
            .current_dir(workdir)
            .env_clear()
            .env("HOME", workdir)
            .env("TMPDIR", workdir)
            .env("LANG", "C.UTF-8")
            .env("PYTHONDONTWRITEBYTECODE", "1")
            .process_group(0);
        if let Some(path) = std::env::var_os("PATH") {
            cmd.env("PATH", path);
        }
        let memory = self.memory_limit_bytes;
        // SAFETY: the closure only issues async-signal-safe syscalls.
        unsafe {
            cmd.pre_exec(move || {
                if let Some(bytes) = memory {
                    let lim = libc::rlimit { rlim_cur: bytes as libc::rlim_t, rlim_max: bytes as libc::rlim_t };
                    libc::setrlimit(libc::RLIMIT_AS, &lim);
                }
                // Needs CAP_SYS_ADMIN; without it the worker keeps the host network.
                libc::unshare(libc::CLONE_NEWNET);
                Ok(())
            });
        }
        cmd
    }
}

impl Runner for ProcessRunner {
    fn run(&self, job: &RunnerJob) -> Result<Vec<RunnerRecord>> {
        job.validate()?;
        let workdir = tempfile::Builder::new()
            .prefix("effbench-job-")
            .tempdir()
            .map_err(|e| Error::io("creating worker directory", e))?;
        let job_file = workdir.path().join("job.json");
        let text = serde_json::to_vec(job)?;
        std::fs::write(&job_file, text).map_err(|e| Error::io("writing job file", e))?;

        let budget = job_budget(job, self.hard_kill_margin);
        let run = hard_kill_supervision(self.command_for(&job_file, workdir.path()), job, budget)?;
        if run.killed {
            warn!("job {} exceeded its {:.3}s budget and was killed", job.job_id, budget.as_secs_f64());
        }
        Ok(run.records)
    }
}
