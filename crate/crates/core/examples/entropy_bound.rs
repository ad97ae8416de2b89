//! The conditional-entropy bound g(ω) and the maximal Bell-diagonal entropy at a CHSH value.
//!
//! ```bash
//! cargo run --example entropy_bound
//! ```

use diec::chsh::{beta_from_omega, winning_probability, BETA_MAX, OMEGA_MAX};
use diec::entropy::{bell_diag_entropy_bound, g, g_zero_crossing, saturating_strategy};
use diec::quantum::conditional_entropy;

fn main() -> diec::Result<()> {
    println!(
        "{:>8} {:>8} {:>10} {:>10}",
        "omega", "beta", "S_H(beta)", "g(omega)"
    );
    for k in 0..=8 {
        let omega = 0.75 + (OMEGA_MAX - 0.75) * k as f64 / 8.0;
        let beta = beta_from_omega(omega).min(BETA_MAX);
        let r = bell_diag_entropy_bound(beta)?;
        println!(
            "{omega:>8.5} {beta:>8.5} {:>10.6} {:>10.6}",
            r.max_total_entropy,
            g(omega)?
        );
    }

    let r = bell_diag_entropy_bound(2.5)?;
    let spectrum = r.optimal_spectrum;
    let strategy = saturating_strategy(&spectrum)?;
    let state = spectrum.to_state();
    println!(
        "\nbeta = 2.5: optimal spectrum {:.6?}, H(A|B) = {:.6}, realised CHSH value {:.6}",
        spectrum.to_array(),
        conditional_entropy(&state)?,
        winning_probability(&strategy).beta
    );

    let (lo, hi) = g_zero_crossing(1e-6)?;
    println!("g changes sign between omega = {lo:.6} and {hi:.6}");
    Ok(())
}
