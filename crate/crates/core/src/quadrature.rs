//! Gauss-Legendre quadrature: fixed composite rules and an adaptive
//! integrator for piecewise smooth integrands with known breakpoints.

use std::sync::OnceLock;

/// Nodes and weights of the `n`-point Gauss-Legendre rule on `[-1, 1]`.
///
/// Roots are found by Newton iteration on the three-term Legendre recurrence.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1, "at least one node");
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre_with_derivative(n, x);
        if d != 0.0 {
            dp = d;
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

const ADAPTIVE_ORDER: usize = 15;

fn adaptive_rule() -> &'static (Vec<f64>, Vec<f64>) {
    static RULE: OnceLock<(Vec<f64>, Vec<f64>)> = OnceLock::new();
    RULE.get_or_init(|| gauss_legendre(ADAPTIVE_ORDER))
}

/// Applies a fixed rule to `[a, b]`.
pub fn fixed<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, nodes: &[f64], weights: &[f64]) -> f64 {
    let half = 0.5 * (b - a);
    let mid = 0.5 * (a + b);
    nodes
        .iter()
        .zip(weights)
        .map(|(&x, &w)| w * f(mid + half * x))
        .sum::<f64>()
        * half
}

/// Composite Gauss-Legendre: `[a, b]` cut into `panels` equal pieces, each
/// integrated with an `order`-point rule.
pub fn composite<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, order: usize, panels: usize) -> f64 {
    let (nodes, weights) = gauss_legendre(order);
    let width = (b - a) / panels as f64;
    (0..panels)
        .map(|i| {
            let lo = a + i as f64 * width;
            fixed(&f, lo, lo + width, &nodes, &weights)
        })
        .sum()
}

/// Globally adaptive Gauss-Legendre: the panel with the largest error
/// estimate (15-point rule against its two halves) is bisected until the
/// summed estimate drops below `abs_tol` or below roundoff. Breakpoints
/// inside `(a, b)` split the range first so that kinks and jumps of the
/// integrand fall on panel edges.
pub fn adaptive<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, breakpoints: &[f64], abs_tol: f64) -> f64 {
    if b <= a {
        return 0.0;
    }
    let mut cuts: Vec<f64> = breakpoints
        .iter()
        .copied()
        .filter(|x| x.is_finite() && *x > a && *x < b)
        .collect();
    cuts.push(a);
    cuts.push(b);
    cuts.sort_by(|x, y| x.partial_cmp(y).unwrap());
    cuts.dedup();
    let (nodes, weights) = adaptive_rule();
    let mut panels: Vec<Panel> = cuts
        .windows(2)
        .map(|w| Panel::new(&f, w[0], w[1], nodes, weights))
        .collect();
    for _ in 0..MAX_PANELS {
        let err: f64 = panels.iter().map(|p| p.err).sum();
        let scale: f64 = panels.iter().map(|p| p.abs).sum();
        if err <= abs_tol.max(ROUNDOFF * scale) {
            break;
        }
        let (worst, _) = panels
            .iter()
            .enumerate()
            .max_by(|x, y| x.1.err.total_cmp(&y.1.err))
            .expect("at least one panel");
        let p = panels.swap_remove(worst);
        let mid = 0.5 * (p.a + p.b);
        if mid <= p.a || mid >= p.b {
            panels.push(Panel { err: 0.0, ..p });
            continue;
        }
        panels.push(Panel::new(&f, p.a, mid, nodes, weights));
        panels.push(Panel::new(&f, mid, p.b, nodes, weights));
    }
    panels.sort_by(|x, y| x.a.total_cmp(&y.a));
    panels.iter().map(|p| p.value).sum()
}

const MAX_PANELS: usize = 20_000;
const ROUNDOFF: f64 = 50.0 * f64::EPSILON;

struct Panel {
    a: f64,
    b: f64,
    value: f64,
    abs: f64,
    err: f64,
}

impl Panel {
    fn new<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, nodes: &[f64], weights: &[f64]) -> Self {
        let mid = 0.5 * (a + b);
        let whole = fixed(f, a, b, nodes, weights);
        let left = fixed(f, a, mid, nodes, weights);
        let right = fixed(f, mid, b, nodes, weights);
        let abs = fixed(&|x| f(x).abs(), a, b, nodes, weights);
        Panel {
            a,
            b,
            value: left + right,
            abs,
            err: (left + right - whole).abs(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn rule_integrates_polynomials_exactly() {
        let (x, w) = gauss_legendre(5);
        // degree 9 is the highest exact degree for 5 nodes
        let got = fixed(&|t: f64| t.powi(8) + 3.0 * t.powi(3), -1.0, 1.0, &x, &w);
        assert_abs_diff_eq!(got, 2.0 / 9.0, epsilon = 1e-14);
        assert_abs_diff_eq!(w.iter().sum::<f64>(), 2.0, epsilon = 1e-14);
    }

    #[test]
    fn high_order_rule_is_symmetric() {
        let (x, w) = gauss_legendre(64);
        for i in 0..32 {
            assert_abs_diff_eq!(x[i], -x[63 - i], epsilon = 1e-15);
            assert_abs_diff_eq!(w[i], w[63 - i], epsilon = 1e-15);
        }
        assert_abs_diff_eq!(w.iter().sum::<f64>(), 2.0, epsilon = 1e-13);
    }

    #[test]
    fn adaptive_handles_jump_at_breakpoint() {
        let step = |x: f64| if x <= 0.3 { 1.0 } else { 0.0 };
        let got = adaptive(step, -1.0, 1.0, &[0.3], 1e-12);
        assert_abs_diff_eq!(got, 1.3, epsilon = 1e-12);
    }

    #[test]
    fn adaptive_converges_on_kink_without_hint() {
        let got = adaptive(|x: f64| x.abs(), -1.0, 2.0, &[], 1e-10);
        assert_abs_diff_eq!(got, 2.5, epsilon = 1e-9);
    }

    #[test]
    fn composite_matches_smooth_integral() {
        let got = composite(|x: f64| x.cos(), 0.0, std::f64::consts::FRAC_PI_2, 8, 4);
        assert_abs_diff_eq!(got, 1.0, epsilon = 1e-14);
    }
}
