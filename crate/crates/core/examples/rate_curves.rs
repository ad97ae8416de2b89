//! Finite-n rate curves next to the tabulated reference points.
//!
//! ```bash
//! cargo run --release --example rate_curves
//! ```

use diec::rates::{optimize_curve, ErrorTargets, GradientMode};
use diec::reference::FINITE_N_RATES;

fn main() -> diec::Result<()> {
    let targets = ErrorTargets::default();
    for &(n, points) in FINITE_N_RATES {
        let omegas: Vec<f64> = points.iter().map(|p| p.0).collect();
        let fit = optimize_curve(n, &omegas, &targets, GradientMode::AsPrinted)?;
        let worst = fit
            .certificates
            .iter()
            .zip(points)
            .map(|(c, p)| (c.rate_raw - p.1).abs())
            .fold(0.0, f64::max);
        println!(
            "n = {n:e}: gamma = {:.4}, {} points, worst deviation {worst:.4}",
            fit.gamma,
            points.len()
        );
        for (c, p) in fit.certificates.iter().zip(points).step_by(4) {
            println!(
                "    omega {:.5}  raw rate {:.5}  reference {:.5}",
                p.0, c.rate_raw, p.1
            );
        }
    }
    Ok(())
}
