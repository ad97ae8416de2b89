use diec::chsh::{optimal_strategy, winning_probability, Strategy};
use diec::quantum::{random_density, random_observable};
use diec::rates::{completeness_bound, delta_for_completeness, ProtocolParams};
use diec::sim::{
    check_kept_state_structure, check_statistics_equivalence, estimate_abort_probability,
    format_transcript, parse_transcript, run_protocol, trial_seed, ClassicalDeterministic,
    HonestIid, MemorySwitcher, Mode, RunOptions, SwitchRule,
};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

fn params(n: u64, gamma: f64, omega: f64, delta: f64) -> ProtocolParams {
    ProtocolParams::relaxed(n, gamma, omega, delta).unwrap()
}

#[test]
fn honest_mean_win_rate_over_many_seeds() {
    let model = HonestIid::new(optimal_strategy()).unwrap();
    let p = params(1000, 1.0, 0.8, 0.01);
    let total: u64 = (0..10_000u64)
        .into_par_iter()
        .map(|k| {
            run_protocol(&model, &p, RunOptions::standard(), trial_seed(17, k))
                .unwrap()
                .win_count
        })
        .sum();
    let mean = total as f64 / 1e7;
    let exact = winning_probability(&optimal_strategy()).omega;
    assert!((mean - exact).abs() < 0.002, "{mean} vs {exact}");
}

#[test]
fn classical_device_almost_always_aborts() {
    let model = ClassicalDeterministic::new([0, 0], [0, 0]).unwrap();
    let e = estimate_abort_probability(
        &model,
        &params(10_000, 1.0, 0.8, 0.01),
        Mode::Standard,
        1000,
        3,
    )
    .unwrap();
    assert!(e.estimate >= 0.999);
}

#[test]
fn honest_abort_within_hoeffding() {
    let device = HonestIid::with_winning_probability(0.85).unwrap();
    let n = 100_000;
    let delta = ((100f64).ln() / (2.0 * n as f64)).sqrt();
    assert!((completeness_bound(n, delta) - 0.01).abs() < 1e-12);
    let e = estimate_abort_probability(
        &device,
        &params(n, 0.1, 0.85, delta),
        Mode::Standard,
        300,
        4,
    )
    .unwrap();
    assert!(e.estimate <= 0.01 + (e.interval.1 - e.interval.0));
}

#[test]
fn device_at_threshold_aborts_about_half_the_time() {
    let (n, gamma, omega_exp, delta) = (10_000, 0.5, 0.85, 0.01);
    let device = HonestIid::with_winning_probability((omega_exp * gamma - delta) / gamma).unwrap();
    let e = estimate_abort_probability(
        &device,
        &params(n, gamma, omega_exp, delta),
        Mode::Standard,
        1000,
        5,
    )
    .unwrap();
    assert!((e.estimate - 0.5).abs() <= 0.1, "{}", e.estimate);
}

#[test]
fn vacuous_threshold_estimate_is_zero() {
    let device = ClassicalDeterministic::new([1, 1], [0, 1]).unwrap();
    let e = estimate_abort_probability(
        &device,
        &params(2000, 0.05, 0.8, 0.04),
        Mode::Standard,
        100,
        6,
    )
    .unwrap();
    assert_eq!(e.estimate, 0.0);
    assert!(
        estimate_abort_probability(&device, &params(10, 0.5, 0.8, 0.01), Mode::Standard, 0, 6)
            .is_err()
    );
}

#[test]
fn born_frequencies_converge() {
    let strategy = optimal_strategy();
    let born = strategy.born_table();
    let model = HonestIid::new(strategy).unwrap();
    let (n, gamma) = (200_000u64, 0.25);
    let t = run_protocol(
        &model,
        &params(n, gamma, 0.8, 0.01),
        RunOptions::standard(),
        8,
    )
    .unwrap();
    let mut counts = [[[[0u64; 2]; 2]; 2]; 2];
    for r in t.rounds.iter().filter(|r| r.t == 1) {
        counts[r.x.unwrap() as usize][r.y.unwrap() as usize][r.a.unwrap() as usize]
            [r.b.unwrap() as usize] += 1;
    }
    let bound = 4.0 * (1.0 / (gamma * n as f64)).sqrt();
    for x in 0..2 {
        for y in 0..2 {
            let total: u64 = counts[x][y].iter().flatten().sum();
            let mut tv = 0.0;
            for a in 0..2 {
                for b in 0..2 {
                    tv += (counts[x][y][a][b] as f64 / total as f64 - born[x][y][a][b]).abs() / 2.0;
                }
            }
            assert!(tv < bound, "tv {tv} >= {bound}");
        }
    }
}

#[test]
fn equivalence_for_adaptive_and_high_dimensional_devices() {
    let memory = MemorySwitcher::new(
        optimal_strategy(),
        diec::chsh::deterministic_strategy([0, 0], [0, 0]),
        SwitchRule::EvenRounds,
    )
    .unwrap();
    let p = params(5000, 0.5, 0.8, delta_for_completeness(5000, 0.01));
    assert!(
        check_statistics_equivalence(&memory, &p, 10, 1)
            .unwrap()
            .passed
    );

    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let strategy = Strategy::new(
        random_density(&mut rng, 36, 5),
        [
            random_observable(&mut rng, 6, 3),
            random_observable(&mut rng, 6, 2),
        ],
        [
            random_observable(&mut rng, 6, 3),
            random_observable(&mut rng, 6, 4),
        ],
    )
    .unwrap();
    let qudit = HonestIid::new(strategy).unwrap();
    let report = check_statistics_equivalence(&qudit, &p, 10, 2).unwrap();
    assert!(report.passed, "{report:?}");
    let t = run_protocol(&qudit, &p, RunOptions::modified(), 3).unwrap();
    let kept = check_kept_state_structure(&t).unwrap();
    assert!(kept.all_bell_diagonal);
    assert!(kept.round_independent);
    assert!(kept.groups.len() > 1);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn transcripts_are_deterministic_and_round_trip(
        seed in any::<u64>(),
        n in 1u64..200,
        gamma in 0.0..=1.0f64,
        xi in 0.0..=1.0f64,
        modified in any::<bool>(),
    ) {
        let model = HonestIid::werner(xi).unwrap();
        let p = params(n, gamma, 0.8, 0.01);
        let options = if modified { RunOptions::modified() } else { RunOptions::standard() };
        let a = run_protocol(&model, &p, options, seed).unwrap();
        let b = run_protocol(&model, &p, options, seed).unwrap();
        prop_assert_eq!(&a, &b);
        let text = format_transcript(&a);
        let parsed = parse_transcript(&text).unwrap();
        prop_assert_eq!(format_transcript(&parsed), text);
        prop_assert_eq!(a.aborted, (a.win_count as f64) < p.abort_threshold());
        for r in &a.rounds {
            let tested = r.t == 1;
            prop_assert_eq!(r.x.is_some() && r.y.is_some() && r.a.is_some() && r.b.is_some() && r.w.is_some(), tested);
            prop_assert_eq!(r.x.is_none() && r.w.is_none(), !tested);
            prop_assert_eq!(r.kept_state.is_some(), !tested && modified);
            if let (Some(x), Some(y), Some(a), Some(b), Some(w)) = (r.x, r.y, r.a, r.b, r.w) {
                prop_assert_eq!(w == 1, (a ^ b) == (x & y));
            }
        }
    }
}
