//! Certified distillation rates: tradeoff functions, η, η_opt, log L and the parameter search.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::chsh::{OMEGA_CLASSICAL, OMEGA_MAX};
use crate::entropy::{g, g_prime};
use crate::error::{check_range, Error, Result};
use crate::optimize::{scan_then_golden, scan_then_golden_max};

/// log₂(1 + 2·d_O) for a one-bit output register.
pub const LOG2_5: f64 = 2.321_928_094_887_362_3;
/// Endpoint shrink for the open interval of admissible p_t(1)/γ.
pub const OPEN_INTERVAL_SHRINK: f64 = 1e-9;
pub const ETA_SCAN_POINTS: usize = 200;
pub const ETA_TOL: f64 = 1e-9;

/// Which quantity enters the gradient term of the second-order correction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GradientMode {
    /// |a(p_t)|, the slope of the tradeoff function at the junction.
    #[default]
    AsPrinted,
    /// ⌈|a(p_t)|⌉, the ceiling of the gradient norm of f_max.
    EatStrict,
}

impl GradientMode {
    pub const ALL: [GradientMode; 2] = [GradientMode::AsPrinted, GradientMode::EatStrict];

    pub fn name(self) -> &'static str {
        match self {
            GradientMode::AsPrinted => "as-printed",
            GradientMode::EatStrict => "eat-strict",
        }
    }

    fn term(self, slope: f64) -> f64 {
        match self {
            GradientMode::AsPrinted => slope.abs(),
            GradientMode::EatStrict => slope.abs().ceil(),
        }
    }
}

impl fmt::Display for GradientMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for GradientMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "as-printed" => Ok(GradientMode::AsPrinted),
            "eat-strict" => Ok(GradientMode::EatStrict),
            other => Err(Error::InvalidParameters(format!(
                "unknown gradient mode '{other}' (expected as-printed or eat-strict)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProtocolParams {
    pub n: u64,
    pub gamma: f64,
    pub omega_exp: f64,
    pub delta_est: f64,
}

impl ProtocolParams {
    /// Parameters for rate certification; the abort threshold must be positive.
    pub fn new(n: u64, gamma: f64, omega_exp: f64, delta_est: f64) -> Result<Self> {
        let p = Self::relaxed(n, gamma, omega_exp, delta_est)?;
        if gamma <= 0.0 {
            return Err(Error::OutOfRange {
                name: "gamma",
                value: gamma,
                range: "(0, 1]",
            });
        }
        check_range(
            "omega_exp",
            omega_exp,
            OMEGA_CLASSICAL,
            OMEGA_MAX,
            "[0.75, (2+sqrt(2))/4]",
        )?;
        if delta_est <= 0.0 {
            return Err(Error::OutOfRange {
                name: "delta_est",
                value: delta_est,
                range: "(0, 1)",
            });
        }
        if p.threshold() <= 0.0 {
            return Err(Error::InvalidParameters(format!(
                "omega_exp * gamma - delta_est = {} must be positive",
                p.threshold()
            )));
        }
        Ok(p)
    }

    /// Parameters for simulation, where vacuous thresholds and γ = 0 are allowed.
    pub fn relaxed(n: u64, gamma: f64, omega_exp: f64, delta_est: f64) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidParameters("n must be at least 1".into()));
        }
        check_range("gamma", gamma, 0.0, 1.0, "[0, 1]")?;
        check_range("omega_exp", omega_exp, 0.0, 1.0, "[0, 1]")?;
        check_range("delta_est", delta_est, 0.0, 1.0, "[0, 1)")?;
        if delta_est >= 1.0 {
            return Err(Error::OutOfRange {
                name: "delta_est",
                value: delta_est,
                range: "[0, 1)",
            });
        }
        Ok(Self {
            n,
            gamma,
            omega_exp,
            delta_est,
        })
    }

    /// ω_exp·γ − δ_est, the per-round win fraction below which the protocol aborts.
    pub fn threshold(&self) -> f64 {
        self.omega_exp * self.gamma - self.delta_est
    }

    /// Aborts when the number of won test rounds is strictly below this.
    pub fn abort_threshold(&self) -> f64 {
        self.threshold() * self.n as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorBudget {
    pub eps_dist: f64,
    pub eps_snd: f64,
    pub eps_cmp: f64,
    pub eps_smo: f64,
}

impl ErrorBudget {
    pub fn new(eps_dist: f64, eps_snd: f64, eps_cmp: f64, eps_smo: f64) -> Result<Self> {
        check_range("eps_dist", eps_dist, 0.0, 1.0, "[0, 1]")?;
        check_range("eps_snd", eps_snd, 0.0, 1.0, "[0, 1]")?;
        check_range("eps_cmp", eps_cmp, 0.0, 1.0, "[0, 1]")?;
        if !(eps_smo >= 0.0 && eps_smo < eps_dist.sqrt()) {
            return Err(Error::OutOfRange {
                name: "eps_smo",
                value: eps_smo,
                range: "[0, sqrt(eps_dist))",
            });
        }
        Ok(Self {
            eps_dist,
            eps_snd,
            eps_cmp,
            eps_smo,
        })
    }

    /// 4·log(1/(√ε_dist − ε_smo)), the finite-size distillation penalty.
    pub fn distillation_penalty(&self) -> f64 {
        4.0 * (1.0 / (self.eps_dist.sqrt() - self.eps_smo)).log2()
    }

    /// √(1 − 2·log(ε_smo·ε_snd)).
    pub fn smoothing_factor(&self) -> Result<f64> {
        let prod = self.eps_smo * self.eps_snd;
        if prod <= 0.0 {
            return Err(Error::InvalidParameters(
                "eps_smo * eps_snd must be positive".into(),
            ));
        }
        Ok((1.0 - 2.0 * prod.log2()).sqrt())
    }
}

/// ε_dist, ε_snd and ε_cmp; ε_smo is left to the optimiser.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorTargets {
    pub eps_dist: f64,
    pub eps_snd: f64,
    pub eps_cmp: f64,
}

impl Default for ErrorTargets {
    fn default() -> Self {
        Self {
            eps_dist: 1e-5,
            eps_snd: 1e-5,
            eps_cmp: 1e-2,
        }
    }
}

impl ErrorTargets {
    pub fn new(eps_dist: f64, eps_snd: f64, eps_cmp: f64) -> Result<Self> {
        ErrorBudget::new(eps_dist, eps_snd, eps_cmp, 0.0)?;
        if eps_dist <= 0.0 || eps_snd <= 0.0 {
            return Err(Error::InvalidParameters(
                "eps_dist and eps_snd must be positive".into(),
            ));
        }
        if eps_cmp <= 0.0 || eps_cmp >= 1.0 {
            return Err(Error::OutOfRange {
                name: "eps_cmp",
                value: eps_cmp,
                range: "(0, 1)",
            });
        }
        Ok(Self {
            eps_dist,
            eps_snd,
            eps_cmp,
        })
    }

    pub fn with_eps_smo(&self, eps_smo: f64) -> Result<ErrorBudget> {
        ErrorBudget::new(self.eps_dist, self.eps_snd, self.eps_cmp, eps_smo)
    }
}

/// Frequencies of W = 0, 1, ⊥.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrequencyDistribution {
    pub p0: f64,
    pub p1: f64,
    pub p_bot: f64,
}

impl FrequencyDistribution {
    pub fn new(p0: f64, p1: f64, p_bot: f64) -> Result<Self> {
        for (name, v) in [("p0", p0), ("p1", p1), ("p_bot", p_bot)] {
            if !(v >= 0.0) {
                return Err(Error::InvalidDistribution(format!(
                    "{name} = {v} is negative"
                )));
            }
        }
        let sum = p0 + p1 + p_bot;
        if (sum - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidDistribution(format!(
                "frequencies sum to {sum}"
            )));
        }
        Ok(Self { p0, p1, p_bot })
    }

    /// The distribution with test probability γ and test-round win frequency p1.
    pub fn from_test_rate(p1: f64, gamma: f64) -> Result<Self> {
        Self::new(gamma - p1, p1, 1.0 - gamma)
    }

    /// p(1)/γ, the winning probability conditioned on testing.
    pub fn omega(&self, gamma: f64) -> f64 {
        self.p1 / gamma
    }

    fn check_gamma(&self, gamma: f64) -> Result<()> {
        if (self.p0 + self.p1 - gamma).abs() > 1e-12 {
            return Err(Error::InvalidDistribution(format!(
                "p0 + p1 = {} differs from gamma = {gamma}",
                self.p0 + self.p1
            )));
        }
        Ok(())
    }
}

fn f_value(p1: f64, gamma: f64) -> Result<f64> {
    let w = p1 / gamma;
    if w > OMEGA_MAX {
        Ok(gamma - 1.0)
    } else {
        Ok((1.0 - gamma) * g(w)?)
    }
}

fn slope_value(wt: f64, gamma: f64) -> Result<f64> {
    Ok((1.0 - gamma) / gamma * g_prime(wt)?)
}

fn fmax_value(p1: f64, wt: f64, gamma: f64) -> Result<f64> {
    let pt1 = wt * gamma;
    if p1 <= pt1 {
        f_value(p1, gamma)
    } else {
        let a = slope_value(wt, gamma)?;
        Ok(a * p1 + f_value(pt1, gamma)? - a * pt1)
    }
}

fn check_pt(p_t: &FrequencyDistribution, gamma: f64) -> Result<f64> {
    p_t.check_gamma(gamma)?;
    let wt = p_t.omega(gamma);
    if !(wt > OMEGA_CLASSICAL && wt < OMEGA_MAX) {
        return Err(Error::OutOfRange {
            name: "p_t(1)/gamma",
            value: wt,
            range: "(3/4, (2+sqrt(2))/4)",
        });
    }
    Ok(wt)
}

/// f(p) = (1−γ)·g(p(1)/γ), or γ − 1 beyond the quantum maximum.
pub fn tradeoff_f(p: &FrequencyDistribution, gamma: f64) -> Result<f64> {
    check_range("gamma", gamma, f64::MIN_POSITIVE, 1.0, "(0, 1]")?;
    p.check_gamma(gamma)?;
    f_value(p.p1, gamma)
}

/// a(p_t) = d f / d p(1) at p_t = ((1−γ)/γ)·g′(p_t(1)/γ).
pub fn tradeoff_slope(p_t: &FrequencyDistribution, gamma: f64) -> Result<f64> {
    let wt = check_pt(p_t, gamma)?;
    slope_value(wt, gamma)
}

/// f below p_t(1), and the tangent to f at p_t above it.
pub fn tradeoff_fmax(
    p: &FrequencyDistribution,
    p_t: &FrequencyDistribution,
    gamma: f64,
) -> Result<f64> {
    check_range("gamma", gamma, f64::MIN_POSITIVE, 1.0, "(0, 1]")?;
    p.check_gamma(gamma)?;
    let wt = check_pt(p_t, gamma)?;
    fmax_value(p.p1, wt, gamma)
}

/// v = 2(log 5 + grad)·√(1 − 2 log(ε_smo·ε_snd)) for the slope at p_t.
pub fn second_order_coefficient(slope: f64, smoothing_factor: f64, mode: GradientMode) -> f64 {
    2.0 * (LOG2_5 + mode.term(slope)) * smoothing_factor
}

/// η(p1, p_t) = f_max(p1, p_t) + v/√n.
pub fn eta(
    p1_observed: f64,
    p_t: &FrequencyDistribution,
    budget: &ErrorBudget,
    params: &ProtocolParams,
    mode: GradientMode,
) -> Result<f64> {
    let gamma = params.gamma;
    let wt = check_pt(p_t, gamma)?;
    let k = budget.smoothing_factor()?;
    let a = slope_value(wt, gamma)?;
    let v = second_order_coefficient(a, k, mode);
    Ok(fmax_value(p1_observed, wt, gamma)? + v / (params.n as f64).sqrt())
}

/// Unchecked η for the inner loops; infeasible inputs give NaN.
fn eta_fast(p1: f64, wt: f64, gamma: f64, sqrt_n: f64, k: f64, mode: GradientMode) -> f64 {
    let (Ok(fm), Ok(a)) = (fmax_value(p1, wt, gamma), slope_value(wt, gamma)) else {
        return f64::NAN;
    };
    fm + second_order_coefficient(a, k, mode) / sqrt_n
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EtaOptimum {
    pub value: f64,
    pub minimizer: FrequencyDistribution,
    /// p_t(1)/γ at the minimiser.
    pub pt_omega: f64,
    pub second_order_v: f64,
}

fn eta_opt_raw(p1: f64, gamma: f64, n: u64, k: f64, mode: GradientMode) -> (f64, f64) {
    let sqrt_n = (n as f64).sqrt();
    let m = scan_then_golden(
        |wt| eta_fast(p1, wt, gamma, sqrt_n, k, mode),
        OMEGA_CLASSICAL + OPEN_INTERVAL_SHRINK,
        OMEGA_MAX - OPEN_INTERVAL_SHRINK,
        ETA_SCAN_POINTS,
        ETA_TOL,
    );
    (m.value, m.x)
}

/// min over p_t(1)/γ ∈ (3/4, (2+√2)/4) of η(ω_exp·γ − δ_est, p_t).
pub fn eta_opt(
    params: &ProtocolParams,
    budget: &ErrorBudget,
    mode: GradientMode,
) -> Result<EtaOptimum> {
    let params = ProtocolParams::new(params.n, params.gamma, params.omega_exp, params.delta_est)?;
    let k = budget.smoothing_factor()?;
    let p1 = params.threshold();
    f_value(p1, params.gamma)?;
    let (value, wt) = eta_opt_raw(p1, params.gamma, params.n, k, mode);
    if !value.is_finite() {
        return Err(Error::Numerical(format!("eta_opt is not finite ({value})")));
    }
    let a = slope_value(wt, params.gamma)?;
    Ok(EtaOptimum {
        value,
        minimizer: FrequencyDistribution::from_test_rate(wt * params.gamma, params.gamma)?,
        pt_omega: wt,
        second_order_v: second_order_coefficient(a, k, mode),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateCertificate {
    pub params: ProtocolParams,
    pub errors: ErrorBudget,
    pub mode: GradientMode,
    pub eta_opt_value: f64,
    pub minimizer_pt: FrequencyDistribution,
    pub pt_omega: f64,
    pub second_order_v: f64,
    pub log_l: f64,
    pub rate_raw: f64,
    pub rate: f64,
    pub diagnostic: Option<String>,
}

/// log L = −n·η_opt − 4·log(1/(√ε_dist − ε_smo)) and the rate log L / n.
pub fn certified_log_l(
    params: &ProtocolParams,
    budget: &ErrorBudget,
    mode: GradientMode,
) -> Result<RateCertificate> {
    let budget = ErrorBudget::new(
        budget.eps_dist,
        budget.eps_snd,
        budget.eps_cmp,
        budget.eps_smo,
    )?;
    let opt = eta_opt(params, &budget, mode)?;
    let n = params.n as f64;
    let log_l = -n * opt.value - budget.distillation_penalty();
    let rate_raw = log_l / n;
    Ok(RateCertificate {
        params: *params,
        errors: budget,
        mode,
        eta_opt_value: opt.value,
        minimizer_pt: opt.minimizer,
        pt_omega: opt.pt_omega,
        second_order_v: opt.second_order_v,
        log_l,
        rate_raw,
        rate: rate_raw.max(0.0),
        diagnostic: (rate_raw <= 0.0).then(|| "no positive rate certified".to_string()),
    })
}

/// Hoeffding bound exp(−2nδ²) on the honest abort probability.
pub fn completeness_bound(n: u64, delta_est: f64) -> f64 {
    (-2.0 * n as f64 * delta_est * delta_est).exp()
}

/// δ_est = √(ln(1/ε_cmp)/(2n)), solving exp(−2nδ²) = ε_cmp.
pub fn delta_for_completeness(n: u64, eps_cmp: f64) -> f64 {
    ((1.0 / eps_cmp).ln() / (2.0 * n as f64)).sqrt()
}

/// Rate in the limit n → ∞ with γ → 0: −g(ω).
pub fn asymptotic_rate(omega: f64) -> Result<f64> {
    Ok(-g(omega)?)
}

/// Search ranges for the parameter optimiser.
const LOG_GAMMA_MIN: f64 = -6.0;
const GAMMA_SCAN_POINTS: usize = 61;
const GAMMA_TOL: f64 = 1e-6;
const SMO_SCAN_POINTS: usize = 41;
const SMO_SPAN: f64 = 10.0;
const SMO_TOL: f64 = 1e-4;

/// Maps s ∈ ℝ onto (0, 1): 0.5·10^s below zero and 1 − 0.5·10^(−s) above.
fn smo_fraction(s: f64) -> f64 {
    if s <= 0.0 {
        0.5 * 10f64.powf(s)
    } else {
        1.0 - 0.5 * 10f64.powf(-s)
    }
}

fn raw_rate(
    n: u64,
    omega: f64,
    gamma: f64,
    delta: f64,
    eps_smo: f64,
    t: &ErrorTargets,
    mode: GradientMode,
) -> f64 {
    let p1 = omega * gamma - delta;
    if !(p1 > 0.0) || f_value(p1, gamma).is_err() {
        return f64::NEG_INFINITY;
    }
    let k = (1.0 - 2.0 * (eps_smo * t.eps_snd).log2()).sqrt();
    let (eta, _) = eta_opt_raw(p1, gamma, n, k, mode);
    if !eta.is_finite() {
        return f64::NEG_INFINITY;
    }
    -eta - 4.0 * (1.0 / (t.eps_dist.sqrt() - eps_smo)).log2() / n as f64
}

/// Best ε_smo for a fixed γ; returns (rate_raw, eps_smo).
fn best_eps_smo(
    n: u64,
    omega: f64,
    gamma: f64,
    delta: f64,
    t: &ErrorTargets,
    mode: GradientMode,
) -> (f64, f64) {
    let root = t.eps_dist.sqrt();
    let m = scan_then_golden_max(
        |s| raw_rate(n, omega, gamma, delta, root * smo_fraction(s), t, mode),
        -SMO_SPAN,
        SMO_SPAN,
        SMO_SCAN_POINTS,
        SMO_TOL,
    );
    (m.value, root * smo_fraction(m.x))
}

fn certificate_for(
    n: u64,
    omega: f64,
    gamma: f64,
    delta: f64,
    eps_smo: f64,
    t: &ErrorTargets,
    mode: GradientMode,
) -> Result<RateCertificate> {
    let params = ProtocolParams::new(n, gamma, omega, delta)?;
    certified_log_l(&params, &t.with_eps_smo(eps_smo)?, mode)
}

fn check_inputs(n: u64, omega: f64) -> Result<()> {
    if n == 0 {
        return Err(Error::InvalidParameters("n must be at least 1".into()));
    }
    check_range(
        "omega_exp",
        omega,
        OMEGA_CLASSICAL,
        OMEGA_MAX,
        "[0.75, (2+sqrt(2))/4]",
    )
}

/// Values that bypass the optimiser when set.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct FixedParameters {
    pub gamma: Option<f64>,
    pub eps_smo: Option<f64>,
    pub delta_est: Option<f64>,
}

/// Certificate at a fixed γ with ε_smo optimised.
pub fn optimize_eps_smo(
    n: u64,
    omega_exp: f64,
    gamma: f64,
    targets: &ErrorTargets,
    mode: GradientMode,
) -> Result<RateCertificate> {
    let fixed = FixedParameters {
        gamma: Some(gamma),
        ..Default::default()
    };
    optimize_with(n, omega_exp, targets, &fixed, mode)
}

/// Maximises the certified rate over γ ∈ (0, 1] and ε_smo ∈ (0, √ε_dist) at fixed δ_est.
pub fn optimize_parameters(
    n: u64,
    omega_exp: f64,
    targets: &ErrorTargets,
    mode: GradientMode,
) -> Result<RateCertificate> {
    optimize_with(n, omega_exp, targets, &FixedParameters::default(), mode)
}

/// [`optimize_parameters`] with any of γ, ε_smo and δ_est pinned.
///
/// δ_est defaults to √(ln(1/ε_cmp)/(2n)).
pub fn optimize_with(
    n: u64,
    omega_exp: f64,
    targets: &ErrorTargets,
    fixed: &FixedParameters,
    mode: GradientMode,
) -> Result<RateCertificate> {
    check_inputs(n, omega_exp)?;
    if let Some(e) = fixed.eps_smo {
        targets.with_eps_smo(e)?;
    }
    if let Some(gamma) = fixed.gamma {
        check_range("gamma", gamma, f64::MIN_POSITIVE, 1.0, "(0, 1]")?;
    }
    let delta = match fixed.delta_est {
        Some(d) => {
            check_range("delta_est", d, f64::MIN_POSITIVE, 1.0, "(0, 1)")?;
            d
        }
        None => delta_for_completeness(n, targets.eps_cmp),
    };
    let best = |gamma: f64| match fixed.eps_smo {
        Some(e) => (raw_rate(n, omega_exp, gamma, delta, e, targets, mode), e),
        None => best_eps_smo(n, omega_exp, gamma, delta, targets, mode),
    };
    let gamma = match fixed.gamma {
        Some(gamma) => gamma,
        None => {
            let m = scan_then_golden_max(
                |lg| best(10f64.powf(lg)).0,
                LOG_GAMMA_MIN,
                0.0,
                GAMMA_SCAN_POINTS,
                GAMMA_TOL,
            );
            if !m.value.is_finite() {
                return Err(Error::InvalidParameters(format!(
                    "no feasible test probability for n = {n}, omega_exp = {omega_exp}"
                )));
            }
            10f64.powf(m.x).min(1.0)
        }
    };
    let (_, eps_smo) = best(gamma);
    certificate_for(n, omega_exp, gamma, delta, eps_smo, targets, mode)
}

/// A family of certificates sharing one test probability γ.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveFit {
    pub n: u64,
    pub gamma: f64,
    pub certificates: Vec<RateCertificate>,
}

/// Chooses one γ for the whole ω grid, maximising the summed raw rate; ε_smo stays per point.
pub fn optimize_curve(
    n: u64,
    omegas: &[f64],
    targets: &ErrorTargets,
    mode: GradientMode,
) -> Result<CurveFit> {
    if omegas.is_empty() {
        return Err(Error::InvalidParameters("empty omega grid".into()));
    }
    for &w in omegas {
        check_inputs(n, w)?;
    }
    let delta = delta_for_completeness(n, targets.eps_cmp);
    let total = |lg: f64| -> f64 {
        let gamma = 10f64.powf(lg);
        omegas
            .par_iter()
            .map(|&w| best_eps_smo(n, w, gamma, delta, targets, mode).0)
            .sum()
    };
    let m = scan_then_golden_max(total, LOG_GAMMA_MIN, 0.0, GAMMA_SCAN_POINTS, GAMMA_TOL);
    if !m.value.is_finite() {
        return Err(Error::InvalidParameters(format!(
            "no test probability is feasible for every point of the n = {n} grid"
        )));
    }
    let gamma = 10f64.powf(m.x).min(1.0);
    let certificates = omegas
        .par_iter()
        .map(|&w| {
            let (_, eps_smo) = best_eps_smo(n, w, gamma, delta, targets, mode);
            certificate_for(n, w, gamma, delta, eps_smo, targets, mode)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(CurveFit {
        n,
        gamma,
        certificates,
    })
}
