use memexperts::harness::sweep::{quantile, THREADS_ENV};
use memexperts::harness::{hindsight_oracle, regret_curve, run_sweep, run_trial, Cell, SweepConfig, Variant};
use memexperts::{generate, LearnerSpec, StreamSpec};

fn config() -> SweepConfig {
    SweepConfig {
        cells: vec![
            Cell { n: 8, m: 2, horizon: 600, stream: "drift".into() },
            Cell { n: 12, m: 3, horizon: 900, stream: "iid:0.2,0.6".into() },
        ],
        variants: vec![Variant::FullMwu, Variant::Hierarchical],
        trials: 3,
        seed: 42,
        k_offset: 1,
    }
}

#[test]
fn sweep_rows_come_out_in_grid_order() {
    let result = run_sweep(&config()).unwrap();
    assert_eq!(result.rows.len(), 2 * 2 * 3);
    let keys: Vec<(usize, u32, Variant)> = result.rows.iter().map(|r| (r.cell, r.trial, r.variant)).collect();
    let mut expected = Vec::new();
    for cell in 0..2 {
        for trial in 0..3 {
            for v in [Variant::FullMwu, Variant::Hierarchical] {
                expected.push((cell, trial, v));
            }
        }
    }
    assert_eq!(keys, expected);
    // both variants of a trial see the same stream
    for pair in result.rows.chunks(2) {
        assert_eq!(pair[0].stream_seed, pair[1].stream_seed);
        assert_eq!(pair[0].best_loss, pair[1].best_loss);
        assert_ne!(pair[0].algo_seed, pair[1].algo_seed);
    }
    assert_eq!(result.summaries.len(), 2);
}

#[test]
fn sweep_output_ignores_thread_count() {
    let mut a = Vec::new();
    run_sweep(&config()).unwrap().write_jsonl(&mut a).unwrap();
    std::env::set_var(THREADS_ENV, "1");
    let mut b = Vec::new();
    run_sweep(&config()).unwrap().write_jsonl(&mut b).unwrap();
    std::env::remove_var(THREADS_ENV);
    assert_eq!(a, b);
}

#[test]
fn summary_csv_has_variant_columns() {
    let result = run_sweep(&config()).unwrap();
    let mut out = Vec::new();
    result.write_summary_csv(&mut out).unwrap();
    let text = String::from_utf8(out).unwrap();
    let mut lines = text.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    assert_eq!(header.len(), 6 + 2 * 4);
    assert!(header.contains(&"hier_median_peak_words"));
    let first: Vec<&str> = lines.next().unwrap().split(',').collect();
    let regrets: Vec<f64> = result.rows.iter().filter(|r| r.cell == 0 && r.variant == Variant::FullMwu).map(|r| r.regret).collect();
    let col = header.iter().position(|h| *h == "mwu_q90_regret").unwrap();
    assert_eq!(first[col].parse::<f64>().unwrap(), quantile(&regrets, 0.9));
}

#[test]
fn regret_curve_ends_at_the_final_regret() {
    let spec = StreamSpec::drifting(10, 700, 1);
    let r = run_trial(&LearnerSpec::Mwu { n: 10, horizon: 700 }, &spec, 3).unwrap();
    let stream = generate(&spec).unwrap();
    let curve = regret_curve(&r, &stream).unwrap();
    assert_eq!(curve.len(), 700);
    assert!((curve[699] - r.regret).abs() < 1e-9);
    assert_eq!(hindsight_oracle(&stream).unwrap(), (r.best_expert, r.best_loss));
}

#[test]
fn played_expert_is_always_queried() {
    for variant in Variant::ALL {
        let spec = memexperts::harness::variant_spec(variant, 20, 4, 1500, 1).unwrap();
        let r = run_trial(&spec, &StreamSpec::drifting(20, 1500, 9), 2).unwrap();
        assert_eq!(r.plays.len(), 1500);
        assert!(r.max_queried >= 1);
        if variant != Variant::FullMwu {
            assert!(r.max_queried < 20 || variant == Variant::Bootstrapped, "{variant}: {}", r.max_queried);
        }
    }
}
