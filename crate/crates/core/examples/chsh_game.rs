//! Winning probabilities of quantum and classical CHSH strategies.
//!
//! ```bash
//! cargo run --example chsh_game
//! ```

use diec::chsh::{
    all_deterministic_strategies, optimal_observables_on, optimal_strategy, winning_probability,
    OMEGA_MAX,
};
use diec::quantum::werner_state;

fn main() -> diec::Result<()> {
    let best = winning_probability(&optimal_strategy());
    println!(
        "optimal quantum strategy: omega = {:.12}, beta = {:.12}",
        best.omega, best.beta
    );
    println!("(2 + sqrt 2)/4         = {OMEGA_MAX:.12}");

    let classical = all_deterministic_strategies()
        .iter()
        .map(|s| winning_probability(s).omega)
        .fold(0.0, f64::max);
    println!("best of 16 deterministic strategies: omega = {classical}");

    println!("\nWerner(xi) with the optimal measurements");
    println!("{:>6} {:>10} {:>10}", "xi", "omega", "beta");
    for k in 0..=5 {
        let xi = k as f64 * 0.1;
        let score = winning_probability(&optimal_observables_on(werner_state(xi)?));
        println!("{xi:>6.2} {:>10.6} {:>10.6}", score.omega, score.beta);
    }
    Ok(())
}
