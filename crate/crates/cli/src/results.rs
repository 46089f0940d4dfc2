//! Line-delimited evaluation results: one `SampleEvaluation` per line,
//! appended as samples finish so an interrupted run can be resumed.

use std::collections::BTreeMap;
use std::fs::{File, OpenOptions};
use std::io::Write;
use std::path::Path;

use anyhow::{Context, Result};
use effbench_core::scoring::SampleEvaluation;
use log::warn;

pub type SampleKey = (String, usize);

/// Reads every complete record. A final line without a newline is the trace
/// of an interrupted write: it is dropped (and cut from the file when
/// `repair` is set). Any other bad line is an error.
pub fn load(path: &Path, repair: bool) -> Result<Vec<SampleEvaluation>> {
    let text = match std::fs::read_to_string(path) {
        Ok(t) => t,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
        Err(e) => return Err(e).with_context(|| format!("reading {}", path.display())),
    };
    let complete_len = if text.ends_with('\n') { text.len() } else { text.rfind('\n').map_or(0, |i| i + 1) };
    if complete_len < text.len() {
        warn!("{}: ignoring a truncated final record", path.display());
        if repair {
            let f = OpenOptions::new().write(true).open(path)?;
            f.set_len(complete_len as u64)?;
        }
    }
    let mut out = Vec::new();
    for (i, line) in text[..complete_len].lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let ev: SampleEvaluation = serde_json::from_str(line).map_err(|e| effbench_core::Error::Format {
            line: i + 1,
            message: format!("{}: {e}", path.display()),
        })?;
        out.push(ev);
    }
    Ok(out)
}

/// Latest record per (problem, sample).
pub fn latest(records: Vec<SampleEvaluation>) -> BTreeMap<SampleKey, SampleEvaluation> {
    records
        .into_iter()
        .map(|r| ((r.problem_id.clone(), r.sample_index), r))
        .collect()
}

pub struct Appender {
    file: File,
}

impl Appender {
    pub fn open(path: &Path) -> Result<Self> {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        }
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .with_context(|| format!("opening {}", path.display()))?;
        Ok(Appender { file })
    }

    /// Writes one record as a single line and flushes it.
    pub fn append(&mut self, ev: &SampleEvaluation) -> Result<()> {
        let mut line = serde_json::to_string(ev)?;
        line.push('\n');
        self.file.write_all(line.as_bytes())?;
        self.file.flush()?;
        Ok(())
    }
}
