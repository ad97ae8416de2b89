//! Twirling a two-qubit state makes it diagonal in the Bell basis without changing
//! its Bell-basis populations.
//!
//! ```bash
//! cargo run --example twirl_bell_diagonal
//! ```

use diec::quantum::{
    bell_diagonal_entries, bell_off_diagonal, bell_spectrum, conditional_entropy,
    random_two_qubit_state, twirl, werner_state, TwoQubitState,
};
use nalgebra::Complex;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn show(label: &str, state: &TwoQubitState) -> diec::Result<()> {
    let t = twirl(state);
    let s = bell_spectrum(&t)?;
    println!(
        "{label:<10} off-diag before {:.3e}, after {:.3e}; spectrum (phi+, phi-, psi+, psi-) = {:.6?}; H(A|B) = {:.6}",
        bell_off_diagonal(state),
        bell_off_diagonal(&t),
        s.to_array(),
        conditional_entropy(&t)?
    );
    Ok(())
}

fn main() -> diec::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for k in 0..3 {
        let rho = random_two_qubit_state(&mut rng);
        show(&format!("random {k}"), &rho)?;
        let before = bell_diagonal_entries(&rho);
        let after = bell_diagonal_entries(&twirl(&rho));
        let drift = before
            .iter()
            .zip(&after)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        println!("{:<10} populations move by at most {drift:.1e}", "");
    }

    let zero = Complex::new(0.0, 0.0);
    let one = Complex::new(1.0, 0.0);
    let product = TwoQubitState::pure(&diec::quantum::ket(&[one, zero, zero, zero]))?;
    show("|00>", &product)?;
    show("Werner 0.3", &werner_state(0.3)?)?;
    Ok(())
}
