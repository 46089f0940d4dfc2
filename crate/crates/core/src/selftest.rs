//! Statistical property suites for the eff@k estimator.
//!
//! Each suite takes the estimator as a parameter so that a deliberately
//! broken estimator can be fed through and shown to fail.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::metrics::{eff_at_k, eff_at_k_bruteforce, eff_coefficients, pass_at_k, ScoreList};

pub type Estimator<'a> = &'a dyn Fn(&ScoreList, usize) -> Result<f64>;

#[derive(Debug, Clone, PartialEq)]
pub struct SuiteResult {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

impl SuiteResult {
    fn new(name: &'static str, passed: bool, detail: String) -> Self {
        SuiteResult { name, passed, detail }
    }
}

fn rng_for(seed: u64, salt: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed ^ salt.wrapping_mul(0x9E37_79B9_7F4A_7C15))
}

fn uniform_scores(rng: &mut impl Rng, n: usize) -> ScoreList {
    ScoreList::new((0..n).map(|_| rng.gen::<f64>()).collect()).expect("uniform scores are valid")
}

/// Estimator versus exhaustive subset enumeration for every `n <= max_n` and
/// every `k`. Half the lists use a coarse grid of values so ties occur.
pub fn oracle_equivalence(seed: u64, lists_per_n: usize, max_n: usize, estimator: Estimator) -> Result<SuiteResult> {
    let mut rng = rng_for(seed, 1);
    let mut worst = 0.0f64;
    let mut checked = 0usize;
    for n in 1..=max_n {
        for i in 0..lists_per_n {
            let values: Vec<f64> = if i % 2 == 0 {
                (0..n).map(|_| rng.gen::<f64>()).collect()
            } else {
                (0..n).map(|_| rng.gen_range(0..5) as f64 * 0.25).collect()
            };
            let scores = ScoreList::new(values)?;
            for k in 1..=n {
                let d = (estimator(&scores, k)? - eff_at_k_bruteforce(&scores, k)?).abs();
                worst = worst.max(d);
                checked += 1;
            }
        }
    }
    Ok(SuiteResult::new(
        "oracle-equivalence",
        worst <= 1e-10,
        format!("{checked} (list, k) pairs, n <= {max_n}; max |diff| = {worst:.3e} (tol 1e-10)"),
    ))
}

/// On 0/1 scores the estimator must reduce to the closed-form pass@k.
pub fn binary_reduction(seed: u64, triples: usize, max_n: usize, estimator: Estimator) -> Result<SuiteResult> {
    let mut rng = rng_for(seed, 2);
    let mut worst = 0.0f64;
    for _ in 0..triples {
        let n = rng.gen_range(1..=max_n);
        let c = rng.gen_range(0..=n);
        let k = rng.gen_range(1..=n);
        let mut values = vec![0.0; n];
        values[..c].fill(1.0);
        values.shuffle(&mut rng);
        let est = estimator(&ScoreList::new(values)?, k)?;
        worst = worst.max((est - pass_at_k(n, c, k)?).abs());
    }
    Ok(SuiteResult::new(
        "binary-reduction",
        worst <= 1e-9,
        format!("{triples} random (n <= {max_n}, c, k); max |eff - pass| = {worst:.3e} (tol 1e-9)"),
    ))
}

/// With Uniform(0,1) scores the max of `k` has mean `k / (k + 1)`.
pub fn unbiasedness(seed: u64, trials: usize, n: usize, k: usize, estimator: Estimator) -> Result<SuiteResult> {
    let mut rng = rng_for(seed, 3);
    let estimates = (0..trials)
        .map(|_| estimator(&uniform_scores(&mut rng, n), k))
        .collect::<Result<Vec<_>>>()?;
    let (mean, var) = mean_var(&estimates);
    let se = (var / trials as f64).sqrt();
    let target = k as f64 / (k as f64 + 1.0);
    let z = (mean - target) / se;
    Ok(SuiteResult::new(
        "unbiasedness",
        z.abs() <= 3.0,
        format!("n={n}, k={k}, {trials} trials: mean {mean:.6} vs {target:.6}, z = {z:+.2} (|z| <= 3)"),
    ))
}

/// Var of the estimator from `n` samples against `k/n` times the variance of
/// the plain max of `k` fresh samples.
pub fn variance_reduction(seed: u64, trials: usize, n: usize, ks: &[usize], estimator: Estimator) -> Result<Vec<SuiteResult>> {
    let mut out = Vec::new();
    for &k in ks {
        let mut rng = rng_for(seed, 4 + k as u64);
        let rb = (0..trials)
            .map(|_| estimator(&uniform_scores(&mut rng, n), k))
            .collect::<Result<Vec<_>>>()?;
        let vanilla: Vec<f64> = (0..trials)
            .map(|_| (0..k).map(|_| rng.gen::<f64>()).fold(0.0, f64::max))
            .collect();
        let (_, var_rb) = mean_var(&rb);
        let (_, var_vanilla) = mean_var(&vanilla);
        let bound = k as f64 / n as f64 * var_vanilla * 1.05;
        let mut passed = var_rb <= bound;
        let ratio = (var_rb / var_vanilla).sqrt();
        let mut detail = format!(
            "k={k}, n={n}, {trials} trials: Var(eff) = {var_rb:.3e} <= (k/n)*Var(max)*1.05 = {bound:.3e}; std ratio {ratio:.4}"
        );
        if k == 1 {
            let expected = (1.0 / n as f64).sqrt();
            let within = (ratio - expected).abs() <= 0.3 * expected;
            passed &= within;
            detail.push_str(&format!(" (expect {expected:.3} +/- 30%)"));
        }
        out.push(SuiteResult::new("variance-reduction", passed, detail));
    }
    Ok(out)
}

/// Weights are finite, non-negative, non-decreasing in `r`, and sum to one.
pub fn coefficient_validity(cases: &[(usize, usize)]) -> Result<SuiteResult> {
    let mut failures = Vec::new();
    for &(n, k) in cases {
        let c = eff_coefficients(n, k)?;
        let finite = c.lambda.iter().all(|w| w.is_finite() && *w >= 0.0);
        let monotone = c.lambda.windows(2).all(|w| w[0] <= w[1]);
        let sum: f64 = c.lambda.iter().sum();
        if !(finite && monotone && (sum - 1.0).abs() <= 1e-9) {
            failures.push(format!("(n={n}, k={k}: finite={finite}, monotone={monotone}, sum={sum})"));
        }
    }
    Ok(SuiteResult::new(
        "coefficients",
        failures.is_empty(),
        if failures.is_empty() {
            format!("{} (n, k) pairs valid", cases.len())
        } else {
            failures.join(" ")
        },
    ))
}

pub fn coefficient_grid() -> Vec<(usize, usize)> {
    let mut cases = Vec::new();
    for n in [3usize, 10, 100, 1000, 10_000] {
        for k in [1usize, 10, 100.min(n)] {
            if k <= n {
                cases.push((n, k));
            }
        }
    }
    cases.sort_unstable();
    cases.dedup();
    cases
}

fn mean_var(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var)
}

/// Every suite against the given estimator.
pub fn run_all_with(seed: u64, estimator: Estimator) -> Result<Vec<SuiteResult>> {
    let mut results = vec![
        oracle_equivalence(seed, 1000, 12, estimator)?,
        coefficient_validity(&coefficient_grid())?,
        binary_reduction(seed, 500, 100, estimator)?,
        unbiasedness(seed, 20_000, 20, 5, estimator)?,
    ];
    results.extend(variance_reduction(seed, 10_000, 100, &[1, 10], estimator)?);
    Ok(results)
}

pub fn run_all(seed: u64) -> Result<Vec<SuiteResult>> {
    run_all_with(seed, &eff_at_k)
}
