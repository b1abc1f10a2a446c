use replicore::coin::CoinProblemParams;
use replicore::compose::n_coin_test;
use replicore::harness::presets::{preset, run_preset, PartOutcome};
use replicore::harness::{
    run_paired, run_paired_records, sweep, AlgorithmSpec, PairedTrialConfig, ScalarGen,
    TrialReport, VectorGen,
};
use replicore::randomness::{Bernoulli, Coin};
use replicore::tiling::TilingDescriptor;
use replicore::SharedRandomness;

fn coin(rho: f64, trials: usize) -> PairedTrialConfig {
    PairedTrialConfig::new(
        AlgorithmSpec::CoinTest {
            p0: 0.3,
            q0: 0.6,
            rho,
            delta: 0.05,
            bias: ScalarGen::Uniform { lo: 0.3, hi: 0.6 },
        },
        trials,
        17,
    )
}

#[test]
fn coin_preset_replicates_within_rho() {
    let r = run_paired(&coin(0.2, 4000)).unwrap();
    let sigma = (0.2f64 * 0.8 / 4000.0).sqrt();
    assert!(r.non_replication.rate <= 0.2 + 3.0 * sigma);
    assert!(r.non_replication.ci_low <= r.non_replication.rate);
    assert!(r.non_replication.rate <= r.non_replication.ci_high);
    assert_eq!(r.stream_mismatches, 0);
    assert!(!r.fail);
}

#[test]
fn rho_sweep_sample_ratios() {
    let reports = sweep(&coin(0.4, 1500), "rho", &[0.4, 0.2, 0.1]).unwrap();
    for w in reports.windows(2) {
        let ratio = w[1].samples.mean / w[0].samples.mean;
        assert!((1.4..=2.8).contains(&ratio), "ratio {ratio}");
    }
}

#[test]
fn rounding_disagreement_grows_with_distance() {
    let base = PairedTrialConfig::new(
        AlgorithmSpec::Rounding {
            n: 3,
            eps: 0.5,
            rho: 0.2,
            tiling: TilingDescriptor::cube(),
            distance: Some(0.0),
            c_q: 10.0,
        },
        3000,
        5,
    );
    let distances = [0.0, 0.001, 0.004, 0.016, 0.064];
    let reports = sweep(&base, "distance", &distances).unwrap();
    assert_eq!(reports[0].non_replication.count, 0);
    for w in reports.windows(2) {
        // non-decreasing up to sampling noise
        let slack = 3.0 * (w[1].non_replication.rate / 3000.0).sqrt() + 1.0 / 3000.0;
        assert!(w[1].non_replication.rate + slack >= w[0].non_replication.rate);
    }
    assert!(reports[4].non_replication.rate > reports[1].non_replication.rate);
    assert!(reports.iter().all(|r| r.error.count == 0));
}

#[test]
fn report_totals_match_execution_counters() {
    let cfg = PairedTrialConfig::new(
        AlgorithmSpec::NCoin {
            n: 6,
            p0: 0.3,
            q0: 0.6,
            rho: 0.3,
            delta: 0.05,
            slack: None,
            biases: VectorGen::Uniform { lo: 0.0, hi: 1.0 },
        },
        200,
        3,
    );
    let run = run_paired_records(&cfg).unwrap();
    let summed = run
        .records
        .iter()
        .flat_map(|r| r.executions.iter())
        .fold(0u64, |a, e| a.saturating_add(e.samples));
    assert_eq!(run.report.samples.total, summed);

    let params = CoinProblemParams::new(0.3, 0.6, 0.3, 0.05).unwrap();
    let mut sources: Vec<Bernoulli> = [0.1, 0.45, 0.7, 0.9]
        .iter()
        .enumerate()
        .map(|(i, &p)| Bernoulli::new(p, 100 + i as u64).unwrap())
        .collect();
    let out = n_coin_test(&mut sources, &params, &SharedRandomness::new(9)).unwrap();
    let consumed: u64 = sources.iter().map(|c| c.consumed()).sum();
    assert_eq!(out.total_samples, consumed);
    assert_eq!(out.samples_per_coin.iter().sum::<u64>(), consumed);
}

#[test]
fn reports_do_not_depend_on_worker_count() {
    let cfg = coin(0.2, 400);
    let with = |threads: usize| -> TrialReport {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| run_paired(&cfg).unwrap())
    };
    assert_eq!(with(1), with(4));
}

#[test]
fn report_json_round_trip() {
    let r = run_paired(&coin(0.3, 100)).unwrap();
    let text = serde_json::to_string(&r).unwrap();
    let back: TrialReport = serde_json::from_str(&text).unwrap();
    assert_eq!(back, r);
    assert_eq!(
        back.generator.version,
        replicore::randomness::GENERATOR_VERSION
    );
    assert_eq!(back.constants["sample_constant"], 3.0);
}

#[test]
fn config_json_round_trip() {
    let cfg = coin(0.2, 100).with_slack(2);
    let text = serde_json::to_string(&cfg).unwrap();
    let back: PairedTrialConfig = serde_json::from_str(&text).unwrap();
    assert_eq!(back, cfg);
    let minimal = r#"{"algorithm":{"algorithm":"coin_test","p0":0.3,"q0":0.6,"rho":0.2,"delta":0.05,
        "bias":{"kind":"fixed","value":0.45}},"trials":100,"seed":1}"#;
    let parsed: PairedTrialConfig = serde_json::from_str(minimal).unwrap();
    assert_eq!((parsed.slack_r, parsed.c_slack), (1, 3.0));
}

#[test]
fn invalid_parameters_surface_before_running() {
    let mut cfg = coin(0.2, 100);
    cfg.algorithm = AlgorithmSpec::CoinTest {
        p0: 0.6,
        q0: 0.3,
        rho: 0.2,
        delta: 0.05,
        bias: ScalarGen::Fixed { value: 0.4 },
    };
    assert!(run_paired(&cfg).is_err());
}

#[test]
fn cheap_presets_pass_at_reduced_trials() {
    for id in ["c2", "c5", "c13"] {
        let out = run_preset(&preset(id).unwrap(), Some(200), Some(1)).unwrap();
        assert!(!out.fail, "{id}: {out:?}");
        assert!(out
            .parts
            .iter()
            .any(|p| matches!(p, PartOutcome::Paired(_))));
    }
}
