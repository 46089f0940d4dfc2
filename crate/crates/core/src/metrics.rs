//! eff@k and pass@k estimators, the speedup baseline and benchmark
//! aggregation.
//!
//! eff@k is the expected maximum efficiency score among `k` samples. Given
//! `n >= k` scores, averaging the subset maximum over every size-`k` subset
//! gives an unbiased estimator that is a fixed linear combination of order
//! statistics:
//!
//! ```text
//! eff@k = sum_{r=k}^{n} lambda_r * e_(r),   lambda_r = C(r-1, k-1) / C(n, k)
//! ```
//!
//! The weights are built with the ratio recurrence
//! `lambda_n = k/n`, `lambda_r = lambda_{r+1} * (1 - (k-1)/r)`, which never
//! forms a binomial coefficient and stays finite for `n` in the tens of
//! thousands.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::timing::CensoredTime;

/// Efficiency scores of all samples for one problem.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct ScoreList(Vec<f64>);

impl ScoreList {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Parameter("score list is empty".into()));
        }
        if let Some(bad) = values.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
            return Err(Error::Parameter(format!("score {bad} is not finite and non-negative")));
        }
        Ok(ScoreList(values))
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl TryFrom<Vec<f64>> for ScoreList {
    type Error = Error;
    fn try_from(v: Vec<f64>) -> Result<Self> {
        ScoreList::new(v)
    }
}

impl From<ScoreList> for Vec<f64> {
    fn from(s: ScoreList) -> Self {
        s.0
    }
}

/// Order-statistic weights `lambda_k..=lambda_n`.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientVector {
    pub k: usize,
    pub n: usize,
    /// `lambda[i]` is the weight of the `(k + i)`-th smallest score.
    pub lambda: Vec<f64>,
}

impl CoefficientVector {
    /// Weight of the `r`-th smallest score (1-based); zero below `k`.
    pub fn weight(&self, r: usize) -> f64 {
        if r < self.k || r > self.n {
            0.0
        } else {
            self.lambda[r - self.k]
        }
    }
}

fn check_k(n: usize, k: usize) -> Result<()> {
    if k < 1 || k > n {
        return Err(Error::Parameter(format!("k must satisfy 1 <= k <= n, got k={k}, n={n}")));
    }
    Ok(())
}

pub fn eff_coefficients(n: usize, k: usize) -> Result<CoefficientVector> {
    check_k(n, k)?;
    let mut lambda = vec![0.0; n - k + 1];
    let last = n - k;
    lambda[last] = k as f64 / n as f64;
    let km1 = (k - 1) as f64;
    for r in (k..n).rev() {
        lambda[r - k] = lambda[r + 1 - k] * (1.0 - km1 / r as f64);
    }
    Ok(CoefficientVector { k, n, lambda })
}

/// Neumaier's compensated sum.
fn compensated_sum(terms: impl IntoIterator<Item = f64>) -> f64 {
    let mut sum = 0.0f64;
    let mut comp = 0.0f64;
    for x in terms {
        let t = sum + x;
        if sum.abs() >= x.abs() {
            comp += (sum - t) + x;
        } else {
            comp += (x - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

/// Rao–Blackwellized eff@k estimate from `n >= k` scores.
pub fn eff_at_k(scores: &ScoreList, k: usize) -> Result<f64> {
    let n = scores.len();
    let coeffs = eff_coefficients(n, k)?;
    let mut sorted = scores.values().to_vec();
    sorted.sort_unstable_by(f64::total_cmp);
    Ok(compensated_sum(
        sorted[k - 1..].iter().zip(&coeffs.lambda).map(|(e, w)| e * w),
    ))
}

/// Largest `n` accepted by [`eff_at_k_bruteforce`].
pub const BRUTEFORCE_MAX_N: usize = 20;

/// Exact mean of the subset maximum over all `C(n, k)` subsets.
///
/// Exponential; used as an oracle for [`eff_at_k`].
pub fn eff_at_k_bruteforce(scores: &ScoreList, k: usize) -> Result<f64> {
    let n = scores.len();
    if n > BRUTEFORCE_MAX_N {
        return Err(Error::Parameter(format!(
            "brute-force enumeration is limited to n <= {BRUTEFORCE_MAX_N}, got n={n}"
        )));
    }
    check_k(n, k)?;
    let values = scores.values();
    let mut total = 0.0;
    let mut count = 0u64;
    // Gosper's hack: walk every n-bit mask with exactly k bits set.
    let mut mask: u32 = (1u32 << k) - 1;
    let limit: u32 = 1u32 << n;
    while mask < limit {
        let mut best = f64::NEG_INFINITY;
        let mut bits = mask;
        while bits != 0 {
            let j = bits.trailing_zeros() as usize;
            best = best.max(values[j]);
            bits &= bits - 1;
        }
        total += best;
        count += 1;
        let low = mask & mask.wrapping_neg();
        let ripple = mask + low;
        mask = (((ripple ^ mask) >> 2) / low) | ripple;
    }
    Ok(total / count as f64)
}

/// Probability that at least one of `k` draws (without replacement) from `n`
/// samples with `c` correct is correct: `1 - C(n-c, k) / C(n, k)`.
pub fn pass_at_k(n: usize, c: usize, k: usize) -> Result<f64> {
    check_k(n, k)?;
    if c > n {
        return Err(Error::Parameter(format!("c={c} exceeds n={n}")));
    }
    if n - c < k {
        return Ok(1.0);
    }
    let kf = k as f64;
    let miss: f64 = (n - c + 1..=n).map(|i| 1.0 - kf / i as f64).product();
    Ok(1.0 - miss)
}

/// Hardness-weighted mean over levels of the per-case speedup
/// `t* / min(t, T)`, averaged within each level.
///
/// Reported for comparison only: a censored case still earns `t*/T`, so
/// timeouts are over-credited.
pub fn speedup_at_1(
    case_times: &[Vec<CensoredTime>],
    reference_times: &[Vec<f64>],
    time_limit: f64,
    hardness: &[f64],
) -> Result<f64> {
    if case_times.len() != reference_times.len() || case_times.len() != hardness.len() {
        return Err(Error::Parameter(format!(
            "shape mismatch: {} levels of times, {} of references, {} weights",
            case_times.len(),
            reference_times.len(),
            hardness.len()
        )));
    }
    if hardness.is_empty() || hardness.iter().any(|h| !(*h > 0.0)) {
        return Err(Error::Parameter(format!("hardness weights must be positive: {hardness:?}")));
    }
    if !(time_limit > 0.0) {
        return Err(Error::Parameter(format!("time limit {time_limit} must be positive")));
    }
    let mut weighted = 0.0;
    for (l, (times, refs)) in case_times.iter().zip(reference_times).enumerate() {
        if times.len() != refs.len() || times.is_empty() {
            return Err(Error::Parameter(format!(
                "level {}: {} case times for {} reference times",
                l + 1,
                times.len(),
                refs.len()
            )));
        }
        let mut level_sum = 0.0;
        for (t, t_ref) in times.iter().zip(refs) {
            let effective = if t.censored { time_limit } else { t.value.min(time_limit) };
            if !(effective > 0.0) {
                return Err(Error::Parameter(format!("level {}: non-positive case time {}", l + 1, t.value)));
            }
            level_sum += t_ref / effective;
        }
        weighted += hardness[l] * level_sum / times.len() as f64;
    }
    Ok(weighted / hardness.iter().sum::<f64>())
}

/// Per-problem inputs to [`aggregate_report`].
#[derive(Debug, Clone, PartialEq)]
pub struct ProblemTally {
    pub scores: ScoreList,
    pub n_correct: usize,
    /// Mean per-sample speedup.
    pub speedup: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProblemMetrics {
    pub n_samples: usize,
    pub n_correct: usize,
    pub eff_at_k: BTreeMap<usize, f64>,
    pub pass_at_k: BTreeMap<usize, f64>,
    pub speedup: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateMetrics {
    pub n_problems: usize,
    pub eff_at_k: BTreeMap<usize, f64>,
    pub pass_at_k: BTreeMap<usize, f64>,
    pub speedup: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub ks: Vec<usize>,
    pub per_problem: BTreeMap<String, ProblemMetrics>,
    pub aggregate: AggregateMetrics,
    pub speedup_note: String,
}

pub const SPEEDUP_NOTE: &str = "speedup overestimates under censoring: timed-out cases are credited t*/T";

/// Computes eff@k and pass@k for every problem and every requested `k`, and
/// their unweighted means across problems.
pub fn aggregate_report(per_problem: &BTreeMap<String, ProblemTally>, ks: &[usize]) -> Result<MetricReport> {
    if ks.is_empty() || ks.contains(&0) {
        return Err(Error::Parameter(format!("k values must be >= 1, got {ks:?}")));
    }
    if per_problem.is_empty() {
        return Err(Error::Parameter("no problems to aggregate".into()));
    }
    let mut ks = ks.to_vec();
    ks.sort_unstable();
    ks.dedup();

    let mut rows = BTreeMap::new();
    for (id, tally) in per_problem {
        let n = tally.scores.len();
        if tally.n_correct > n {
            return Err(Error::Parameter(format!("problem `{id}`: {} correct of {n} samples", tally.n_correct)));
        }
        let mut eff = BTreeMap::new();
        let mut pass = BTreeMap::new();
        for &k in &ks {
            if k > n {
                return Err(Error::InsufficientSamples { problem_id: id.clone(), available: n, k });
            }
            eff.insert(k, eff_at_k(&tally.scores, k)?);
            pass.insert(k, pass_at_k(n, tally.n_correct, k)?);
        }
        rows.insert(
            id.clone(),
            ProblemMetrics {
                n_samples: n,
                n_correct: tally.n_correct,
                eff_at_k: eff,
                pass_at_k: pass,
                speedup: tally.speedup,
            },
        );
    }

    let count = rows.len() as f64;
    let mean_of = |pick: &dyn Fn(&ProblemMetrics) -> f64| rows.values().map(pick).sum::<f64>() / count;
    let aggregate = AggregateMetrics {
        n_problems: rows.len(),
        eff_at_k: ks.iter().map(|&k| (k, mean_of(&|m| m.eff_at_k[&k]))).collect(),
        pass_at_k: ks.iter().map(|&k| (k, mean_of(&|m| m.pass_at_k[&k]))).collect(),
        speedup: mean_of(&|m| m.speedup),
    };
    Ok(MetricReport {
        ks,
        per_problem: rows,
        aggregate,
        speedup_note: SPEEDUP_NOTE.into(),
    })
}

/// Plain-text table with eff@k beside pass@k for each k.
pub fn render_table(report: &MetricReport) -> String {
    let mut header = format!("{:<20} {:>5} {:>5}", "problem", "n", "c");
    for k in &report.ks {
        let _ = write!(header, " {:>9} {:>9}", format!("eff@{k}"), format!("pass@{k}"));
    }
    let _ = write!(header, " {:>9}", "speedup*");
    let mut out = header.clone();
    out.push('\n');
    out.push_str(&"-".repeat(header.len()));
    out.push('\n');
    for (id, m) in &report.per_problem {
        let _ = write!(out, "{:<20} {:>5} {:>5}", truncate(id, 20), m.n_samples, m.n_correct);
        for k in &report.ks {
            let _ = write!(out, " {:>9.3} {:>9.3}", m.eff_at_k[k], m.pass_at_k[k]);
        }
        let _ = writeln!(out, " {:>9.3}", m.speedup);
    }
    out.push_str(&"-".repeat(header.len()));
    out.push('\n');
    let agg = &report.aggregate;
    let _ = write!(out, "{:<20} {:>5} {:>5}", format!("mean ({} problems)", agg.n_problems), "", "");
    for k in &report.ks {
        let _ = write!(out, " {:>9.3} {:>9.3}", agg.eff_at_k[k], agg.pass_at_k[k]);
    }
    let _ = writeln!(out, " {:>9.3}", agg.speedup);
    let _ = writeln!(out, "* {}", report.speedup_note);
    out
}

fn truncate(s: &str, width: usize) -> String {
    if s.chars().count() <= width {
        s.to_owned()
    } else {
        s.chars().take(width - 1).chain(['~']).collect()
    }
}
