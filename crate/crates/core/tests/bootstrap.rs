use memexperts::bootstrap::{compose, default_r3, regret_envelope, Composed, UnknownHorizon};
use memexperts::harness::record::run_on_stream;
use memexperts::harness::{simulate, sweep::median};
use memexperts::{choose_parameters, generate, Learner, LearnerSpec, LossView, StreamSpec};

#[test]
fn composed_space_is_within_four_times_the_operands() {
    let n = 16;
    let operand = LearnerSpec::Hierarchical { config: choose_parameters(n, 4, 64, 1).unwrap(), feedback: Default::default() };
    let spec = compose(operand.clone(), operand.clone()).unwrap();
    let len = operand.horizon();
    assert_eq!(spec.horizon(), len * len);
    for seed in 0..5 {
        let s = StreamSpec::drifting(n, len * len, seed);
        let r = run_on_stream(&spec, &s, &generate(&s).unwrap(), seed).unwrap();
        let short = StreamSpec::drifting(n, len, seed);
        let operand_peak = run_on_stream(&operand, &short, &generate(&short).unwrap(), seed).unwrap().peak_words;
        let cap = 4 * 2 * operand_peak;
        assert!(r.peak_words <= cap, "seed {seed}: {} > {cap}", r.peak_words);
    }
}

#[test]
fn episodes_do_not_leak_into_the_inner_learner() {
    let n = 5;
    let inner = LearnerSpec::Hierarchical { config: choose_parameters(n, 2, 32, 1).unwrap(), feedback: Default::default() };
    let outer = LearnerSpec::Mwu { n, horizon: 16 };
    let r2 = regret_envelope(&inner);
    let len = inner.horizon();
    let total = 16 * len;
    let r3 = default_r3(n, len, total);
    let seed = 23;
    let stream = generate(&StreamSpec::drifting(n, total, 6)).unwrap();
    let mut composed = Composed::new(outer, inner.clone(), r2, r3, seed).unwrap().with_history();
    assert_eq!(composed.episode_len(), len);
    simulate(&mut composed, &stream, total).unwrap();
    assert_eq!(composed.history().len(), 16);

    let mut buf = vec![0.0; n];
    for ledger in composed.history() {
        let ep = ledger.episode_index;
        let mut fresh = inner.build(Composed::episode_seed(seed, ep)).unwrap();
        let mut plays = Vec::new();
        for d in 0..len {
            plays.push(fresh.play().unwrap());
            stream.fill_day(ep * len + d, &mut buf).unwrap();
            let q = fresh.query_set().to_vec();
            fresh.observe(&LossView::new(&buf, &q)).unwrap();
        }
        assert_eq!(plays, ledger.alg2_plays, "episode {ep}");
    }
}

#[test]
fn unknown_horizon_is_close_to_the_best_guess() {
    let (n, m, t) = (16, 8, 3000);
    let (mut wrapped, mut best) = (Vec::new(), Vec::new());
    for seed in 0..20 {
        let s = StreamSpec::drifting(n, t, seed);
        let stream = generate(&s).unwrap();
        let u = LearnerSpec::UnknownHorizon { n, m, k_offset: 1 };
        wrapped.push(run_on_stream(&u, &s, &stream, seed).unwrap().regret);
        let guesses = [3000u64, 4096].map(|g| {
            let spec = LearnerSpec::Hierarchical { config: choose_parameters(n, m, g, 1).unwrap(), feedback: Default::default() };
            run_on_stream(&spec, &s, &stream, seed).unwrap().regret
        });
        best.push(guesses[0].min(guesses[1]));
    }
    let (w, b) = (median(&wrapped), median(&best));
    assert!(w <= 3.0 * b, "unknown horizon {w} vs best guess {b}");
}

#[test]
fn unknown_horizon_keeps_at_most_two_copies() {
    let mut u = UnknownHorizon::new(8, 2, 1, 3).unwrap();
    let stream = generate(&StreamSpec::drifting(8, 2000, 1)).unwrap();
    let mut buf = vec![0.0; 8];
    for d in 0..2000 {
        u.play().unwrap();
        assert!(u.live_guesses().len() <= 2, "day {d}: {:?}", u.live_guesses());
        stream.fill_day(d, &mut buf).unwrap();
        let q = u.query_set().to_vec();
        u.observe(&LossView::new(&buf, &q)).unwrap();
    }
    assert_eq!(u.horizon(), u64::MAX);
}
