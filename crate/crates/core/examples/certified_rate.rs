//! A single rate certificate, with the free parameters optimised.
//!
//! ```bash
//! cargo run --release --example certified_rate
//! ```

use diec::rates::{
    asymptotic_rate, completeness_bound, optimize_parameters, ErrorTargets, GradientMode,
};

fn main() -> diec::Result<()> {
    let targets = ErrorTargets::default();
    let (n, omega) = (100_000_000, 0.8447);
    for mode in GradientMode::ALL {
        let c = optimize_parameters(n, omega, &targets, mode)?;
        println!("mode {mode}");
        println!("  gamma      {:.6}", c.params.gamma);
        println!("  delta_est  {:.3e}", c.params.delta_est);
        println!("  eps_smo    {:.3e}", c.errors.eps_smo);
        println!("  p_t(1)/g   {:.6}", c.pt_omega);
        println!("  v          {:.3}", c.second_order_v);
        println!("  eta_opt    {:.6}", c.eta_opt_value);
        println!("  log L      {:.6e}", c.log_l);
        println!("  rate       {:.6}", c.rate);
        println!(
            "  honest abort probability at most {:.3e}",
            completeness_bound(n, c.params.delta_est)
        );
    }
    println!(
        "n -> infinity limit at the same omega: {:.6}",
        asymptotic_rate(omega)?
    );
    Ok(())
}
