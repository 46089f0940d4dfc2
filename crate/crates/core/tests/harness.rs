mod common;

use common::{calibrated_problem, sample, uncalibrated_problem, Outcome, ScriptedRunner};
use effbench_core::harness::{evaluate_sample, measure_reference, probe_reference, Calibration};
use effbench_core::scoring::FailureReason;
use effbench_core::timing::HarnessConfig;
use effbench_core::Error;
use proptest::prelude::*;

const H: [f64; 3] = [3.0, 3.0, 4.0];

fn refs() -> Vec<Vec<f64>> {
    vec![vec![0.01, 0.02, 0.01], vec![0.1, 0.2], vec![0.3, 0.25], vec![0.5, 0.4]]
}

fn config() -> HarnessConfig {
    HarnessConfig { repeats: 3, ..HarnessConfig::default() }
}

#[test]
fn replaying_reference_timings_scores_one() {
    let r = refs();
    let problem = calibrated_problem(&r, &H, 2.0);
    let times = r.clone();
    let runner = ScriptedRunner::new(move |_, l, m| Outcome::Takes(times[l][m]));
    let ev = evaluate_sample(&problem, &sample(0), &config(), &runner, Calibration::identity()).unwrap();
    assert!(ev.correct);
    assert_eq!(ev.failure_reason, FailureReason::None);
    assert!((ev.efficiency_score - 1.0).abs() <= 1e-9, "{}", ev.efficiency_score);
    assert!(ev.level_scores.iter().all(|f| (f - 1.0).abs() <= 1e-9));
    assert!((ev.speedup - 1.0).abs() <= 1e-9);
    assert_eq!(runner.dispatched_levels(), [0, 1, 2, 3]);
}

#[test]
fn slower_machine_is_calibrated_away() {
    // This machine runs everything twice as slow as the one that produced
    // the stored reference timings.
    let r = refs();
    let problem = calibrated_problem(&r, &H, 2.0);
    let times = r.clone();
    let runner = ScriptedRunner::new(move |_, l, m| Outcome::Takes(2.0 * times[l][m]));
    let cal = Calibration::from_reference(0.5, 1.0).unwrap();
    let ev = evaluate_sample(&problem, &sample(0), &config(), &runner, cal).unwrap();
    assert!((ev.efficiency_score - 1.0).abs() <= 1e-9);

    // The soft limit handed to the runner is in local seconds.
    let runner = ScriptedRunner::new(move |job, _, _| {
        assert!((job.soft_limit - 2.0).abs() < 1e-12);
        Outcome::Takes(0.01)
    });
    evaluate_sample(&problem, &sample(0), &config(), &runner, cal).unwrap();
}

#[test]
fn timeout_at_level_two_keeps_earlier_credit() {
    let r = refs();
    let problem = calibrated_problem(&r, &H, 2.0);
    let times = r.clone();
    let runner = ScriptedRunner::new(move |job, l, m| {
        if l >= 2 {
            Outcome::Takes(job.soft_limit)
        } else {
            Outcome::Takes(times[l][m])
        }
    });
    let ev = evaluate_sample(&problem, &sample(0), &config(), &runner, Calibration::identity()).unwrap();
    assert!(ev.correct);
    assert_eq!(runner.dispatched_levels(), [0, 1, 2]);
    assert_eq!(ev.level_scores.len(), 3);
    assert!((ev.level_scores[0] - 1.0).abs() < 1e-9);
    assert_eq!(&ev.level_scores[1..], &[0.0, 0.0]);
    assert!((ev.efficiency_score - 0.3).abs() < 1e-9);
    assert!(!ev.levels[3].executed);
    // Speedup credits every censored or skipped case with t*/T.
    assert!(ev.speedup > 0.3);
}

#[test]
fn all_of_level_one_censored() {
    let problem = calibrated_problem(&refs(), &H, 2.0);
    let runner = ScriptedRunner::new(|job, l, _| Outcome::Takes(if l == 1 { 10.0 * job.soft_limit } else { 0.01 }));
    let ev = evaluate_sample(&problem, &sample(0), &config(), &runner, Calibration::identity()).unwrap();
    assert!(ev.correct);
    assert_eq!(ev.efficiency_score, 0.0);
    assert!(ev.levels[1].case_times[0].censored);
    assert_eq!(ev.levels[1].case_times[0].value, problem.time_limit);
}

#[test]
fn level_zero_timeout_is_a_correctness_failure() {
    let problem = calibrated_problem(&refs(), &H, 2.0);
    let runner = ScriptedRunner::new(|job, _, _| Outcome::Takes(job.soft_limit));
    let ev = evaluate_sample(&problem, &sample(0), &config(), &runner, Calibration::identity()).unwrap();
    assert!(!ev.correct);
    assert_eq!(ev.failure_reason, FailureReason::Level0Fail);
    assert_eq!(ev.speedup, 0.0);
    assert!(ev.diagnostics.contains("timed out"));
}

#[test]
fn wrong_output_late_and_runtime_error() {
    let problem = calibrated_problem(&refs(), &H, 2.0);
    let wrong = ScriptedRunner::new(|_, l, _| if l == 2 { Outcome::Wrong } else { Outcome::Takes(0.01) });
    let ev = evaluate_sample(&problem, &sample(0), &config(), &wrong, Calibration::identity()).unwrap();
    assert_eq!(ev.failure_reason, FailureReason::WrongOutput);
    assert_eq!(ev.efficiency_score, 0.0);
    assert_eq!(wrong.dispatched_levels(), [0, 1, 2]);

    let crash = ScriptedRunner::new(|_, l, _| if l == 1 { Outcome::Crash } else { Outcome::Takes(0.01) });
    let ev = evaluate_sample(&problem, &sample(0), &config(), &crash, Calibration::identity()).unwrap();
    assert_eq!(ev.failure_reason, FailureReason::RuntimeError);
    assert!(!ev.correct);
    assert_eq!(crash.dispatched_levels(), [0, 1]);
}

#[test]
fn uncalibrated_problem_is_rejected() {
    let problem = uncalibrated_problem(&[1, 1, 1, 1], &H);
    let runner = ScriptedRunner::new(|_, _, _| Outcome::Takes(0.01));
    let err = evaluate_sample(&problem, &sample(0), &config(), &runner, Calibration::identity()).unwrap_err();
    assert!(matches!(err, Error::Data(_)));
    assert!(runner.calls().is_empty());
}

#[test]
fn hardness_override_length_is_checked() {
    let problem = calibrated_problem(&refs(), &H, 2.0);
    let runner = ScriptedRunner::new(|_, _, _| Outcome::Takes(0.01));
    let cfg = HarnessConfig { hardness_weights: Some(vec![1.0, 1.0]), ..config() };
    assert!(matches!(
        evaluate_sample(&problem, &sample(0), &cfg, &runner, Calibration::identity()),
        Err(Error::Config(_))
    ));
}

#[test]
fn evaluation_is_deterministic_for_a_deterministic_runner() {
    let problem = calibrated_problem(&refs(), &H, 2.5);
    let make = || ScriptedRunner::new(|_, l, m| Outcome::Takes(0.05 * (l + m + 1) as f64));
    let a = evaluate_sample(&problem, &sample(3), &config(), &make(), Calibration::identity()).unwrap();
    let b = evaluate_sample(&problem, &sample(3), &config(), &make(), Calibration::identity()).unwrap();
    assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
}

#[test]
fn measure_reference_sets_outputs_times_and_limit() {
    let problem = uncalibrated_problem(&[3, 2, 2, 2], &H);
    let runner = ScriptedRunner::new(|_, l, m| Outcome::Takes(if (l, m) == (3, 1) { 0.9 } else { 0.1 }));
    let cfg = HarnessConfig { timeout_factor: 2.0, ..config() };
    let cal = measure_reference(&problem, "def f(l, m): return [l, m]", &cfg, &runner).unwrap();
    assert!(cal.is_calibrated());
    assert!((cal.time_limit - 1.8).abs() < 1e-12);
    assert_eq!(cal.levels[3].cases[1].reference_time, 0.9);
    for level in &cal.levels {
        for case in &level.cases {
            assert_eq!(case.expected_output.as_ref(), Some(&case.input));
        }
    }
    // A capture and a timed pass per level.
    assert_eq!(runner.calls().len(), 8);

    let fresh = ScriptedRunner::new(|_, _, _| Outcome::Takes(1.8));
    let probe = probe_reference(&cal, "", &cfg, &fresh).unwrap();
    assert!((probe.ratio - 0.5).abs() < 1e-12);
}

#[test]
fn nondeterministic_or_slow_reference_is_an_error() {
    let problem = uncalibrated_problem(&[1, 1, 1, 1], &H);
    let drift = ScriptedRunner::new(|_, l, _| if l == 2 { Outcome::Wrong } else { Outcome::Takes(0.1) });
    match measure_reference(&problem, "", &config(), &drift) {
        Err(Error::Reference { message, .. }) => assert!(message.contains("nondeterministic"), "{message}"),
        other => panic!("{other:?}"),
    }
    let slow = ScriptedRunner::new(|job, _, _| Outcome::Takes(job.soft_limit + 1.0));
    match measure_reference(&problem, "", &config(), &slow) {
        Err(Error::Reference { message, .. }) => assert!(message.contains("ceiling"), "{message}"),
        other => panic!("{other:?}"),
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn no_observed_time_reaches_the_limit(
        times in prop::collection::vec(0.001f64..3.0, 9),
        ratio in 0.25f64..4.0,
    ) {
        let problem = calibrated_problem(&refs(), &H, 2.0);
        let t = times.clone();
        let runner = ScriptedRunner::new(move |_, l, m| Outcome::Takes(t[(l * 2 + m) % 9]));
        let ev = evaluate_sample(&problem, &sample(0), &config(), &runner, Calibration { ratio }).unwrap();
        for level in &ev.levels {
            for c in &level.case_times {
                prop_assert!(c.censored || c.value < problem.time_limit);
                if c.censored {
                    prop_assert_eq!(c.value, problem.time_limit);
                }
            }
        }
        prop_assert!(ev.level_scores.iter().all(|f| *f >= 0.0));
        prop_assert!(ev.efficiency_score >= 0.0);
    }
}
