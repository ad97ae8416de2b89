//! Single-round entropy bound for Bell-diagonal states and its brute-force oracle.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::chsh::{omega_from_beta, Strategy, BETA_MAX, OMEGA_MAX};
use crate::error::{Error, Result};
use crate::quantum::{
    pauli_x, pauli_y, pauli_z, shannon_entropy, BellDiagonalSpectrum, CMatrix, Observable,
};

const SQRT_2: f64 = std::f64::consts::SQRT_2;
const DOMAIN_TOL: f64 = 1e-12;

/// h(x) = −x log x − (1−x) log(1−x), in bits.
pub fn binary_entropy(x: f64) -> Result<f64> {
    if !(-DOMAIN_TOL..=1.0 + DOMAIN_TOL).contains(&x) || x.is_nan() {
        return Err(Error::OutOfRange {
            name: "x",
            value: x,
            range: "[0, 1]",
        });
    }
    let x = x.clamp(0.0, 1.0);
    Ok(shannon_entropy(&[x, 1.0 - x]))
}

fn g_argument(omega: f64) -> f64 {
    0.5 - (2.0 * omega - 1.0) / SQRT_2
}

/// g(ω) = 2h(½ − (2ω−1)/√2) − 1, the bound on H(Â|B̂) at winning probability ω.
pub fn g(omega: f64) -> Result<f64> {
    let x = g_argument(omega);
    if !(-DOMAIN_TOL..=1.0 + DOMAIN_TOL).contains(&x) || x.is_nan() {
        return Err(Error::OutOfRange {
            name: "omega",
            value: omega,
            range: "[1/2 - sqrt(2)/4, (2+sqrt(2))/4]; use the piecewise tradeoff function beyond the quantum maximum",
        });
    }
    Ok(2.0 * binary_entropy(x)? - 1.0)
}

/// dg/dω = −2√2 · log₂((1−x)/x) with x = ½ − (2ω−1)/√2.
pub fn g_prime(omega: f64) -> Result<f64> {
    let x = g_argument(omega);
    if !(x > 0.0 && x < 1.0) {
        return Err(Error::OutOfRange {
            name: "omega",
            value: omega,
            range: "(1/2 - sqrt(2)/4, (2+sqrt(2))/4)",
        });
    }
    Ok(-2.0 * SQRT_2 * ((1.0 - x) / x).log2())
}

/// 𝒮H(β) = 2h(½ − β/(4√2)), the largest H(ÂB̂) of a Bell-diagonal state with CHSH value β.
pub fn max_total_entropy(beta: f64) -> Result<f64> {
    Ok(2.0 * binary_entropy(0.5 - beta / (4.0 * SQRT_2))?)
}

fn check_beta(beta: f64) -> Result<f64> {
    if !(2.0 - DOMAIN_TOL..=BETA_MAX + DOMAIN_TOL).contains(&beta) || beta.is_nan() {
        return Err(Error::OutOfRange {
            name: "beta",
            value: beta,
            range: "[2, 2*sqrt(2)]",
        });
    }
    Ok(beta.clamp(2.0, BETA_MAX))
}

/// The maximising spectrum (a², ac, c², ac) with a, c = ½ ∓ β/(4√2).
pub fn optimal_spectrum(beta: f64) -> Result<BellDiagonalSpectrum> {
    let beta = check_beta(beta)?;
    let a = 0.5 - beta / (4.0 * SQRT_2);
    let c = 0.5 + beta / (4.0 * SQRT_2);
    BellDiagonalSpectrum::new(a * a, a * c, c * c, a * c)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EntropyBoundResult {
    pub beta: f64,
    pub omega: f64,
    pub max_total_entropy: f64,
    pub conditional_bound: f64,
    pub optimal_spectrum: BellDiagonalSpectrum,
}

pub fn bell_diag_entropy_bound(beta: f64) -> Result<EntropyBoundResult> {
    let beta = check_beta(beta)?;
    let total = max_total_entropy(beta)?;
    Ok(EntropyBoundResult {
        beta,
        omega: omega_from_beta(beta),
        max_total_entropy: total,
        conditional_bound: total - 1.0,
        optimal_spectrum: optimal_spectrum(beta)?,
    })
}

/// Squared half-CHSH quantities for the three ways of pairing correlation axes.
///
/// A Bell-diagonal state with spectrum λ has maximal CHSH value 2√2·√(max of these).
pub fn branch_values(l: &[f64; 4]) -> [f64; 3] {
    let [pp, pm, sp, sm] = *l;
    [
        (pp - sp).powi(2) + (pm - sm).powi(2),
        (pp - pm).powi(2) + (sp - sm).powi(2),
        (pp - sm).powi(2) + (sp - pm).powi(2),
    ]
}

/// Largest CHSH value attainable on a Bell-diagonal state with this spectrum.
pub fn max_chsh_of_spectrum(l: &BellDiagonalSpectrum) -> f64 {
    let b = branch_values(&l.to_array());
    (8.0 * b.iter().cloned().fold(0.0, f64::max)).sqrt()
}

/// Correlations ⟨σk⊗σk⟩ for k = x, y, z of the Bell-diagonal state with this spectrum.
pub fn correlations(l: &BellDiagonalSpectrum) -> [f64; 3] {
    let [pp, pm, sp, sm] = l.to_array();
    [pp - pm + sp - sm, -pp + pm + sp - sm, pp + pm - sp - sm]
}

/// Observables reaching [`max_chsh_of_spectrum`] on the Bell-diagonal state `l`.
pub fn saturating_strategy(l: &BellDiagonalSpectrum) -> Result<Strategy> {
    let t = correlations(l);
    let paulis: [CMatrix; 3] = [pauli_x(), pauli_y(), pauli_z()];
    let mut axes = [0usize, 1, 2];
    axes.sort_by(|&i, &j| t[j].abs().total_cmp(&t[i].abs()));
    let (i, j) = (axes[0], axes[1]);
    let norm = (t[i] * t[i] + t[j] * t[j]).sqrt();
    if norm == 0.0 {
        return Err(Error::InvalidParameters(
            "spectrum has no correlations".into(),
        ));
    }
    let plus = (paulis[i].scale(t[i]) + paulis[j].scale(t[j])).unscale(norm);
    let minus = (paulis[i].scale(t[i]) - paulis[j].scale(t[j])).unscale(norm);
    Strategy::two_qubit(
        l.to_state(),
        [
            Observable::new(paulis[i].clone())?,
            Observable::new(paulis[j].clone())?,
        ],
        [Observable::new(plus)?, Observable::new(minus)?],
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BruteForceResult {
    pub beta: f64,
    pub spectrum: BellDiagonalSpectrum,
    pub entropy: f64,
    pub feasible_grid_points: usize,
    /// max H(λ) − 𝒮H(β) over a coarse simplex grid restricted to β(λ) ≥ β, using all branches.
    pub other_branch_excess: f64,
}

/// Spectrum at (λΦ−, λΨ−) = (u, v) on the constraint surface, if feasible.
///
/// The remaining eigenvalues are ½(1 − s ± √(β²/8 − d²)) with s = u+v, d = u−v;
/// the larger is λΨ+ and the smaller λΦ+, matching the labelling of [`optimal_spectrum`].
fn constrained_spectrum(u: f64, v: f64, beta: f64) -> Option<[f64; 4]> {
    const FEAS_TOL: f64 = 1e-12;
    if u < 0.0 || v < 0.0 {
        return None;
    }
    let s = u + v;
    let d = u - v;
    if s > 1.0 + FEAS_TOL {
        return None;
    }
    let disc = (beta * beta / 8.0).min(1.0) - d * d;
    if disc < -FEAS_TOL {
        return None;
    }
    let disk = (u - 0.5).powi(2) + (v - 0.5).powi(2) - (beta / 4.0).powi(2);
    if disk < -FEAS_TOL {
        return None;
    }
    let root = disc.max(0.0).sqrt();
    let rest = (1.0 - s).max(0.0);
    let lo = (0.5 * (rest - root)).max(0.0);
    let hi = 0.5 * (rest + root);
    Some([lo, u, hi, v])
}

fn objective(u: f64, v: f64, beta: f64) -> Option<f64> {
    constrained_spectrum(u, v, beta).map(|l| shannon_entropy(&l))
}

/// Ordering for maximisation with ties broken toward the lexicographically smallest point.
fn better(a: (f64, f64, f64), b: (f64, f64, f64)) -> bool {
    a.0 > b.0 || (a.0 == b.0 && (a.1, a.2) < (b.1, b.2))
}

/// Maximises H(λ) over the reduced constraint set by grid search and coordinate descent.
pub fn brute_force_max_entropy(beta: f64, grid_step: f64) -> Result<BruteForceResult> {
    if !(beta > 2.0 - DOMAIN_TOL && beta <= BETA_MAX + DOMAIN_TOL) {
        return Err(Error::OutOfRange {
            name: "beta",
            value: beta,
            range: "(2, 2*sqrt(2)]",
        });
    }
    let beta = beta.min(BETA_MAX);
    if !(grid_step > 0.0 && grid_step <= 0.05) {
        return Err(Error::OutOfRange {
            name: "grid_step",
            value: grid_step,
            range: "(0, 0.05]",
        });
    }
    let steps = (1.0 / grid_step).round() as usize;
    let h = 1.0 / steps as f64;

    let (best, count) = (0..=steps)
        .into_par_iter()
        .map(|i| {
            let u = i as f64 * h;
            let mut best: Option<(f64, f64, f64)> = None;
            let mut count = 0usize;
            for j in 0..=(steps - i) {
                let v = j as f64 * h;
                if let Some(e) = objective(u, v, beta) {
                    count += 1;
                    let cand = (e, u, v);
                    if best.is_none_or(|b| better(cand, b)) {
                        best = Some(cand);
                    }
                }
            }
            (best, count)
        })
        .reduce(
            || (None, 0),
            |(a, ca), (b, cb)| {
                let best = match (a, b) {
                    (Some(x), Some(y)) => Some(if better(y, x) { y } else { x }),
                    (x, None) => x,
                    (None, y) => y,
                };
                (best, ca + cb)
            },
        );

    let (mut e, mut u, mut v) =
        best.ok_or_else(|| Error::Numerical(format!("no feasible grid point for beta = {beta}")))?;

    let mut step = h;
    while step >= 1e-8 {
        let mut improved = false;
        for (du, dv) in [(step, 0.0), (-step, 0.0), (0.0, step), (0.0, -step)] {
            if let Some(cand) = objective(u + du, v + dv, beta) {
                if cand > e {
                    e = cand;
                    u += du;
                    v += dv;
                    improved = true;
                }
            }
        }
        if !improved {
            step /= 2.0;
        }
    }

    let spectrum = BellDiagonalSpectrum::from_array(
        constrained_spectrum(u, v, beta).expect("refined point stays feasible"),
    )
    .or_else(|_| {
        let l = constrained_spectrum(u, v, beta).expect("refined point stays feasible");
        let sum: f64 = l.iter().sum();
        BellDiagonalSpectrum::from_array(l.map(|x| x / sum))
    })?;

    Ok(BruteForceResult {
        beta,
        spectrum,
        entropy: e,
        feasible_grid_points: count,
        other_branch_excess: other_branch_excess(beta, 0.02)?,
    })
}

/// max over a simplex grid of H(λ) − 𝒮H(β) among spectra whose CHSH value reaches β.
pub fn other_branch_excess(beta: f64, step: f64) -> Result<f64> {
    let bound = max_total_entropy(beta)?;
    let k = (1.0 / step).round() as usize;
    let target = beta * beta / 8.0;
    let excess = (0..=k)
        .into_par_iter()
        .map(|i| {
            let mut worst = f64::NEG_INFINITY;
            for j in 0..=(k - i) {
                for m in 0..=(k - i - j) {
                    let n = k - i - j - m;
                    let l = [i, j, m, n].map(|q| q as f64 / k as f64);
                    let b = branch_values(&l);
                    if b.iter().cloned().fold(0.0, f64::max) >= target - 1e-12 {
                        worst = worst.max(shannon_entropy(&l) - bound);
                    }
                }
            }
            worst
        })
        .reduce(|| f64::NEG_INFINITY, f64::max);
    Ok(excess)
}

/// 𝒮H(Σ w_k β_k) − 1 for a mixture of Bell-diagonal states, checked against the per-component average.
pub fn convex_mixture_bound(components: &[(f64, f64)]) -> Result<f64> {
    if components.is_empty() {
        return Err(Error::InvalidDistribution("empty mixture".into()));
    }
    if components.iter().any(|&(w, _)| !(w >= 0.0)) {
        return Err(Error::InvalidDistribution("negative mixture weight".into()));
    }
    let total: f64 = components.iter().map(|&(w, _)| w).sum();
    if (total - 1.0).abs() > 1e-12 {
        return Err(Error::InvalidDistribution(format!(
            "weights sum to {total}"
        )));
    }
    let mut mean_beta = 0.0;
    let mut average = 0.0;
    for &(w, beta) in components {
        let beta = check_beta(beta)?;
        mean_beta += w * beta;
        average += w * (max_total_entropy(beta)? - 1.0);
    }
    let result = max_total_entropy(mean_beta.clamp(2.0, BETA_MAX))? - 1.0;
    if average > result + 1e-12 {
        return Err(Error::Numerical(format!(
            "concavity violated: average {average} exceeds {result}"
        )));
    }
    Ok(result)
}

/// ω values where g changes sign, bracketed on a grid of the given step.
pub fn g_zero_crossing(step: f64) -> Result<(f64, f64)> {
    let mut lo = 0.75;
    while lo + step <= OMEGA_MAX {
        if g(lo)? > 0.0 && g(lo + step)? <= 0.0 {
            return Ok((lo, lo + step));
        }
        lo += step;
    }
    Err(Error::Numerical("g has no sign change".into()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chsh::winning_probability;
    use crate::quantum::conditional_entropy;
    use proptest::prelude::{prop_assert, prop_assume, proptest};

    #[test]
    fn binary_entropy_examples() {
        assert_eq!(binary_entropy(0.5).unwrap(), 1.0);
        assert_eq!(binary_entropy(0.0).unwrap(), 0.0);
        assert_eq!(binary_entropy(1.0).unwrap(), 0.0);
        assert!((binary_entropy(0.146447).unwrap() - 0.600_877_030).abs() < 1e-8);
        assert!(binary_entropy(1.1).is_err());
        assert!(binary_entropy(-0.01).is_err());
    }

    #[test]
    fn g_examples() {
        assert!((g(OMEGA_MAX).unwrap() + 1.0).abs() < 1e-12);
        assert!((g(0.75).unwrap() - 0.201_752_073).abs() < 1e-8);
        assert!((g(0.75).unwrap() - 0.201752).abs() < 1e-3);
        assert!((g(0.85).unwrap() + 0.908_785_102).abs() < 1e-8);
        assert!((g(0.8).unwrap() + 0.226_053_388).abs() < 1e-8);
        assert!(g(0.9).is_err());
    }

    #[test]
    fn g_prime_matches_finite_difference() {
        assert!((g_prime(0.8).unwrap() + 10.208_515_52).abs() < 1e-7);
        for &w in &[0.76, 0.78, 0.8, 0.82, 0.84] {
            let h = 1e-6;
            let fd = (g(w + h).unwrap() - g(w - h).unwrap()) / (2.0 * h);
            let an = g_prime(w).unwrap();
            assert!(((fd - an) / an).abs() < 1e-6, "{w}: {fd} vs {an}");
        }
    }

    #[test]
    fn bound_examples() {
        let top = bell_diag_entropy_bound(BETA_MAX).unwrap();
        assert!((top.conditional_bound + 1.0).abs() < 1e-12);
        assert!(
            top.optimal_spectrum
                .max_abs_diff(&BellDiagonalSpectrum::new(0.0, 0.0, 1.0, 0.0).unwrap())
                < 1e-12
        );

        let two = bell_diag_entropy_bound(2.0).unwrap();
        assert!((two.conditional_bound - 0.201_752_073).abs() < 1e-8);
        let expected = [0.021_446_609_4, 0.125, 0.728_553_390_6, 0.125];
        for (x, y) in two.optimal_spectrum.to_array().iter().zip(expected) {
            assert!((x - y).abs() < 1e-9);
        }

        let mid = bell_diag_entropy_bound(2.5).unwrap();
        assert!((mid.conditional_bound + 0.360_623_547).abs() < 1e-8);
        let expected = [0.003_370_762, 0.054_687_5, 0.887_254_238, 0.054_687_5];
        for (x, y) in mid.optimal_spectrum.to_array().iter().zip(expected) {
            assert!((x - y).abs() < 1e-9);
        }
        let state = mid.optimal_spectrum.to_state();
        assert!((conditional_entropy(&state).unwrap() - mid.conditional_bound).abs() < 1e-10);

        assert!(bell_diag_entropy_bound(1.9).is_err());
        assert!(bell_diag_entropy_bound(2.9).is_err());
    }

    #[test]
    fn optimum_is_stationary_along_symmetric_line() {
        for &beta in &[2.1, 2.3, 2.5, 2.7] {
            let l = optimal_spectrum(beta).unwrap();
            let t0 = l.phi_minus;
            let h = 1e-6;
            let e = |t: f64| objective(t, t, beta).unwrap();
            let deriv = (e(t0 + h) - e(t0 - h)) / (2.0 * h);
            assert!(deriv.abs() < 1e-5, "beta {beta}: {deriv}");
            assert!((e(t0) - max_total_entropy(beta).unwrap()).abs() < 1e-12);
        }
    }

    #[test]
    fn brute_force_examples() {
        let r = brute_force_max_entropy(2.5, 1e-3).unwrap();
        assert!((r.entropy - 0.639_376_453).abs() < 1e-4);
        assert!(r.spectrum.max_abs_diff(&optimal_spectrum(2.5).unwrap()) < 2e-3);
        assert!(r.other_branch_excess <= 1e-12);

        let top = brute_force_max_entropy(BETA_MAX, 1e-2).unwrap();
        assert!(top.entropy.abs() < 1e-12);

        let two = brute_force_max_entropy(2.0, 1e-3).unwrap();
        assert!((two.entropy - 1.201_752_073).abs() < 1e-4);

        assert!(brute_force_max_entropy(2.5, 0.1).is_err());
        assert!(brute_force_max_entropy(1.5, 0.01).is_err());
    }

    #[test]
    fn mixture_examples() {
        let single = convex_mixture_bound(&[(1.0, 2.3)]).unwrap();
        assert!((single - bell_diag_entropy_bound(2.3).unwrap().conditional_bound).abs() < 1e-15);
        let half = convex_mixture_bound(&[(0.5, 2.0), (0.5, BETA_MAX)]).unwrap();
        assert!((half + 0.244_322_270).abs() < 1e-8);
        assert!((convex_mixture_bound(&[(1.0, BETA_MAX)]).unwrap() + 1.0).abs() < 1e-12);
        assert!(convex_mixture_bound(&[(0.6, 2.0), (0.6, 2.5)]).is_err());
        assert!(convex_mixture_bound(&[(-0.5, 2.0), (1.5, 2.5)]).is_err());
    }

    #[test]
    fn g_decreasing_with_single_sign_change() {
        let mut prev = g(0.75).unwrap();
        let mut w = 0.751;
        while w <= OMEGA_MAX {
            let cur = g(w).unwrap();
            assert!(cur < prev);
            prev = cur;
            w += 1e-3;
        }
        let (lo, hi) = g_zero_crossing(1e-4).unwrap();
        assert!(lo > 0.775 && hi < 0.7767, "{lo}..{hi}");
    }

    #[test]
    fn optimal_spectra_saturate_their_beta() {
        for k in 0..=10 {
            let beta = 2.0 + (BETA_MAX - 2.0) * k as f64 / 10.0;
            let l = optimal_spectrum(beta).unwrap();
            let s = saturating_strategy(&l).unwrap();
            let score = winning_probability(&s);
            assert!((score.beta - beta).abs() < 1e-8, "{beta} vs {}", score.beta);
            assert!((max_chsh_of_spectrum(&l) - beta).abs() < 1e-10);
        }
    }

    proptest! {
        #[test]
        fn mixture_bound_dominates_average(
            w in 0.0..1.0f64,
            b1 in 2.0..BETA_MAX,
            b2 in 2.0..BETA_MAX,
        ) {
            let r = convex_mixture_bound(&[(w, b1), (1.0 - w, b2)]).unwrap();
            let avg = w * (max_total_entropy(b1).unwrap() - 1.0)
                + (1.0 - w) * (max_total_entropy(b2).unwrap() - 1.0);
            prop_assert!(avg <= r + 1e-12);
        }

        #[test]
        fn no_bell_diagonal_state_beats_the_bound(raw in proptest::array::uniform4(0.0..1.0f64)) {
            let sum: f64 = raw.iter().sum();
            prop_assume!(sum > 1e-6);
            let l = BellDiagonalSpectrum::from_array(raw.map(|x| x / sum));
            prop_assume!(l.is_ok());
            let l = l.unwrap();
            let beta = max_chsh_of_spectrum(&l);
            if beta >= 2.0 {
                prop_assert!(l.entropy() <= max_total_entropy(beta.min(BETA_MAX)).unwrap() + 1e-9);
            }
        }
    }
}
