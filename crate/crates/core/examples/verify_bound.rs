//! Brute-force maximisation of the Bell-diagonal entropy against the closed form.
//!
//! ```bash
//! cargo run --release --example verify_bound
//! ```

use diec::chsh::BETA_MAX;
use diec::entropy::{brute_force_max_entropy, max_total_entropy, optimal_spectrum};
use diec::optimize::linspace;

fn main() -> diec::Result<()> {
    println!(
        "{:>8} {:>12} {:>12} {:>10} {:>10}",
        "beta", "grid", "closed form", "|diff|", "argmax"
    );
    for beta in linspace(2.05, BETA_MAX, 8) {
        let brute = brute_force_max_entropy(beta, 1e-3)?;
        let exact = max_total_entropy(beta)?;
        let arg = brute.spectrum.max_abs_diff(&optimal_spectrum(beta)?);
        println!(
            "{beta:>8.4} {:>12.8} {exact:>12.8} {:>10.2e} {arg:>10.2e}",
            brute.entropy,
            (brute.entropy - exact).abs()
        );
    }

    let coarse = brute_force_max_entropy(2.4, 0.05)?;
    println!(
        "\ncoarse grid (step 0.05) at beta = 2.4: {} feasible grid points, deviation {:.2e}",
        coarse.feasible_grid_points,
        (coarse.entropy - max_total_entropy(2.4)?).abs()
    );
    Ok(())
}
