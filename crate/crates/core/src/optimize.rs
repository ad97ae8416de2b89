//! Deterministic one-dimensional minimisation: a fixed scan followed by golden-section refinement.

const INV_PHI: f64 = 0.618_033_988_749_894_9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Minimum {
    pub x: f64,
    pub value: f64,
}

fn key(v: f64) -> f64 {
    if v.is_nan() {
        f64::INFINITY
    } else {
        v
    }
}

/// `n` equally spaced points covering [lo, hi].
pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![lo],
        _ => (0..n)
            .map(|k| lo + (hi - lo) * k as f64 / (n - 1) as f64)
            .collect(),
    }
}

/// Golden-section search for a minimum of `f` on [a, b], stopping at bracket width `tol`.
pub fn golden_section<F: Fn(f64) -> f64>(f: F, mut a: f64, mut b: f64, tol: f64) -> Minimum {
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let mut fc = key(f(c));
    let mut fd = key(f(d));
    while (b - a).abs() > tol {
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INV_PHI * (b - a);
            fc = key(f(c));
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INV_PHI * (b - a);
            fd = key(f(d));
        }
    }
    if fc <= fd {
        Minimum { x: c, value: fc }
    } else {
        Minimum { x: d, value: fd }
    }
}

/// Scans `points` equally spaced abscissae on [lo, hi], then refines around the best one.
///
/// The returned minimum is never worse than the best scanned point. Ties in the scan go
/// to the smallest abscissa, so results do not depend on evaluation order.
pub fn scan_then_golden<F: Fn(f64) -> f64>(
    f: F,
    lo: f64,
    hi: f64,
    points: usize,
    tol: f64,
) -> Minimum {
    let grid = linspace(lo, hi, points.max(3));
    let values: Vec<f64> = grid.iter().map(|&x| key(f(x))).collect();
    let mut best = 0;
    for (k, &v) in values.iter().enumerate() {
        if v < values[best] {
            best = k;
        }
    }
    let scanned = Minimum {
        x: grid[best],
        value: values[best],
    };
    if !scanned.value.is_finite() {
        return scanned;
    }
    let a = grid[best.saturating_sub(1)];
    let b = grid[(best + 1).min(grid.len() - 1)];
    let refined = golden_section(&f, a, b, tol);
    if refined.value < scanned.value {
        refined
    } else {
        scanned
    }
}

/// Maximisation counterpart of [`scan_then_golden`].
pub fn scan_then_golden_max<F: Fn(f64) -> f64>(
    f: F,
    lo: f64,
    hi: f64,
    points: usize,
    tol: f64,
) -> Minimum {
    let m = scan_then_golden(|x| -f(x), lo, hi, points, tol);
    Minimum {
        x: m.x,
        value: -m.value,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn golden_finds_parabola_minimum() {
        let m = golden_section(|x| (x - 0.3).powi(2), 0.0, 1.0, 1e-9);
        assert!((m.x - 0.3).abs() < 1e-8);
        assert!(m.value < 1e-16);
    }

    #[test]
    fn scan_escapes_local_minimum() {
        let f = |x: f64| (10.0 * x).sin() + 0.1 * x;
        let m = scan_then_golden(f, 0.0, 3.0, 200, 1e-10);
        let brute = linspace(0.0, 3.0, 300_001)
            .into_iter()
            .map(f)
            .fold(f64::INFINITY, f64::min);
        assert!((m.value - brute).abs() < 1e-8);
    }

    #[test]
    fn nan_treated_as_infeasible() {
        let f = |x: f64| if x < 0.5 { f64::NAN } else { (x - 0.7).powi(2) };
        let m = scan_then_golden(f, 0.0, 1.0, 50, 1e-10);
        assert!((m.x - 0.7).abs() < 1e-6);
        let max = scan_then_golden_max(|x| -(x - 0.2).powi(2), 0.0, 1.0, 11, 1e-10);
        assert!((max.x - 0.2).abs() < 1e-6);
    }

    #[test]
    fn linspace_endpoints() {
        assert_eq!(linspace(0.0, 1.0, 3), vec![0.0, 0.5, 1.0]);
        assert_eq!(linspace(2.0, 5.0, 1), vec![2.0]);
        assert!(linspace(0.0, 1.0, 0).is_empty());
    }
}
