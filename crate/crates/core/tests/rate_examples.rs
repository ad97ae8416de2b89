use diec::entropy::g;
use diec::rates::{
    certified_log_l, optimize_curve, optimize_parameters, ErrorTargets, FrequencyDistribution,
    GradientMode, ProtocolParams,
};
use diec::reference::finite_n_curve;
use proptest::prelude::*;

fn per_point(n: u64, omega: f64) -> f64 {
    optimize_parameters(n, omega, &ErrorTargets::default(), GradientMode::AsPrinted)
        .unwrap()
        .rate
}

#[test]
fn plotted_points_reproduced() {
    assert!((per_point(100_000_000, 0.8447) - 0.540_666_32).abs() <= 0.01);
    assert!((per_point(10_000_000_000, 0.8447) - 0.713_722).abs() <= 0.01);
    assert!((per_point(1_000_000_000_000, 0.853) - 0.931_351).abs() <= 0.01);
    assert!((per_point(1_000_000, 0.832_25) - 0.081_133).abs() <= 0.01);
    assert!((per_point(10_000_000, 0.8032) - 0.061_111_6).abs() <= 0.01);
}

#[test]
fn near_classical_rate_is_zero() {
    for n in [1_000_000, 100_000_000, 1_000_000_000_000] {
        let c = optimize_parameters(n, 0.76, &ErrorTargets::default(), GradientMode::EatStrict)
            .unwrap();
        assert_eq!(c.rate, 0.0);
        assert!(c.rate_raw <= 0.0);
        assert!(c.diagnostic.is_some());
    }
}

#[test]
fn large_n_approaches_minus_g() {
    let rate = per_point(100_000_000_000_000, 0.8);
    assert!((rate + g(0.8).unwrap()).abs() < 0.005, "{rate}");
}

#[test]
fn shared_gamma_curve_tracks_reference() {
    let points = finite_n_curve(100_000_000).unwrap();
    let omegas: Vec<f64> = points.iter().map(|p| p.0).collect();
    let fit = optimize_curve(
        100_000_000,
        &omegas,
        &ErrorTargets::default(),
        GradientMode::AsPrinted,
    )
    .unwrap();
    for (c, p) in fit.certificates.iter().zip(points) {
        assert!(
            (c.rate_raw - p.1).abs() <= 0.01,
            "omega {}: {} vs {}",
            p.0,
            c.rate_raw,
            p.1
        );
        assert_eq!(c.params.gamma, fit.gamma);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn certificate_identities(
        log_n in 5.0..13.0f64,
        omega in 0.78..0.853f64,
        gamma in 0.05..1.0f64,
        smo_frac in 0.01..0.99f64,
    ) {
        let n = 10f64.powf(log_n).round() as u64;
        let delta = diec::rates::delta_for_completeness(n, 0.01);
        prop_assume!(omega * gamma - delta > 0.0);
        let params = ProtocolParams::new(n, gamma, omega, delta).unwrap();
        let budget = ErrorTargets::default().with_eps_smo(smo_frac * 1e-5f64.sqrt()).unwrap();
        for mode in GradientMode::ALL {
            let c = certified_log_l(&params, &budget, mode).unwrap();
            let penalty = 4.0 * (1.0 / (budget.eps_dist.sqrt() - budget.eps_smo)).log2();
            prop_assert!((c.log_l - (-(n as f64) * c.eta_opt_value - penalty)).abs() <= 1e-9 * c.log_l.abs().max(1.0));
            prop_assert!((c.rate_raw - c.log_l / n as f64).abs() < 1e-12);
            prop_assert_eq!(c.rate, c.rate_raw.max(0.0));
            prop_assert!(c.pt_omega > 0.75 && c.pt_omega < diec::chsh::OMEGA_MAX);
            let pt = FrequencyDistribution::from_test_rate(c.pt_omega * gamma, gamma).unwrap();
            prop_assert_eq!(pt, c.minimizer_pt);
        }
    }
}
