//! Splitting a pair of binary observables into 2×2 Jordan blocks.
//!
//! ```bash
//! cargo run --example jordan_blocks
//! ```

use diec::quantum::{jordan_blocks, random_observable, CMatrix};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> diec::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let dim = 6;
    let a0 = random_observable(&mut rng, dim, 3);
    let a1 = random_observable(&mut rng, dim, 3);
    let blocks = jordan_blocks(&a0, &a1)?;
    println!(
        "{} blocks for two random reflections on C^{dim}",
        blocks.len()
    );

    let mut sum = CMatrix::zeros(dim, dim);
    for (k, b) in blocks.iter().enumerate() {
        let v = b.isometry();
        let r0 = a0.restrict(&v);
        let r1 = a1.restrict(&v);
        println!(
            "block {k}: angle {:.6} rad, canonical {}, restricted A0 diagonal ({:+.3}, {:+.3}), tr(A0 A1)/2 = {:+.6}",
            b.angle,
            b.canonical,
            r0[(0, 0)].re,
            r0[(1, 1)].re,
            (&r0 * &r1).trace().re / 2.0
        );
        sum += b.projector();
    }
    let defect = (sum - CMatrix::identity(dim, dim))
        .iter()
        .map(|z| z.norm())
        .fold(0.0, f64::max);
    println!("block projectors sum to the identity within {defect:.2e}");
    Ok(())
}
