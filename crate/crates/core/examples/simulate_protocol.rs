//! Running the protocol against simulated devices.
//!
//! ```bash
//! cargo run --release --example simulate_protocol
//! ```

use diec::chsh::{deterministic_strategy, optimal_strategy};
use diec::rates::{delta_for_completeness, ProtocolParams};
use diec::sim::{
    check_kept_state_structure, check_statistics_equivalence, estimate_abort_probability,
    format_transcript, run_protocol, ClassicalDeterministic, HonestIid, MemorySwitcher, Mode,
    RunOptions, SwitchRule,
};

fn main() -> diec::Result<()> {
    let n = 10_000;
    let delta = delta_for_completeness(n, 0.01);
    let params = ProtocolParams::relaxed(n, 0.5, 0.85, delta)?;
    println!("n = {n}, gamma = 0.5, omega_exp = 0.85, delta_est = {delta:.5}");

    let honest = HonestIid::new(optimal_strategy())?;
    let t = run_protocol(&honest, &params, RunOptions::standard(), 1)?;
    println!(
        "one honest run: {} test rounds, {} wins, aborted = {}",
        t.test_rounds(),
        t.win_count,
        t.aborted
    );
    let text = format_transcript(&t);
    println!("first transcript lines:");
    for line in text.lines().take(14) {
        println!("    {line}");
    }

    let est = estimate_abort_probability(&honest, &params, Mode::Standard, 500, 2)?;
    println!(
        "honest abort frequency {:.4} in [{:.4}, {:.4}], Hoeffding bound {:.4}",
        est.estimate, est.interval.0, est.interval.1, est.hoeffding_bound
    );
    let classical = ClassicalDeterministic::new([0, 0], [0, 0])?;
    let est = estimate_abort_probability(&classical, &params, Mode::Standard, 200, 3)?;
    println!("classical abort frequency {:.4}", est.estimate);

    let noisy = HonestIid::werner(0.2)?;
    let m = run_protocol(&noisy, &params, RunOptions::modified(), 4)?;
    let report = check_kept_state_structure(&m)?;
    println!(
        "modified run on Werner(0.2): {} kept pairs, max Bell off-diagonal {:.1e}, mean spectrum {:.4?}",
        report.kept_rounds, report.max_off_diagonal, report.groups[0].mean_spectrum
    );

    let memory = MemorySwitcher::new(
        optimal_strategy(),
        deterministic_strategy([0, 0], [0, 0]),
        SwitchRule::AfterLoss,
    )?;
    let eq = check_statistics_equivalence(&memory, &params, 20, 5)?;
    println!(
        "standard vs modified on an adaptive device: {} rounds per side, max z = {:.2}, passed = {}",
        eq.rounds_per_side, eq.max_z, eq.passed
    );
    Ok(())
}
