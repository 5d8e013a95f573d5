//! Gauss-Legendre quadrature used for density normalization checks and the
//! Fourier-side evaluations of the bump norms.

use std::sync::OnceLock;

/// Nodes and weights of the `m`-point Gauss-Legendre rule on `[-1, 1]`,
/// computed by Newton iteration on the Legendre recurrence.
pub fn gauss_legendre(m: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(m >= 2);
    let mut nodes = vec![0.0; m];
    let mut weights = vec![0.0; m];
    for k in 0..(m + 1) / 2 {
        // Chebyshev-like initial guess for the k-th positive root.
        let mut x = (std::f64::consts::PI * (k as f64 + 0.75) / (m as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre(m, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[k] = -x;
        nodes[m - 1 - k] = x;
        weights[k] = w;
        weights[m - 1 - k] = w;
    }
    (nodes, weights)
}

/// Legendre polynomial `P_m(x)` and its derivative.
fn legendre(m: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for k in 2..=m {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let d = m as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

fn rule_128() -> &'static (Vec<f64>, Vec<f64>) {
    static RULE: OnceLock<(Vec<f64>, Vec<f64>)> = OnceLock::new();
    RULE.get_or_init(|| gauss_legendre(128))
}

/// Integrate `f` over `[a, b]` with a fixed 128-point rule.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64) -> f64 {
    let (nodes, weights) = rule_128();
    let half = 0.5 * (b - a);
    let mid = 0.5 * (a + b);
    let mut acc = 0.0;
    for (x, w) in nodes.iter().zip(weights) {
        acc += w * f(mid + half * x);
    }
    acc * half
}

/// Integrate over `[a, b]` split into `parts` panels; useful when the
/// integrand has localized structure.
pub fn integrate_panels<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, parts: usize) -> f64 {
    let step = (b - a) / parts as f64;
    (0..parts)
        .map(|p| integrate(&f, a + p as f64 * step, a + (p + 1) as f64 * step))
        .sum()
}

/// Tensor-product integration of `f(x, y)` over `[a, b]^2`.
pub fn integrate_2d<F: Fn(f64, f64) -> f64>(f: F, a: f64, b: f64) -> f64 {
    let (nodes, weights) = rule_128();
    let half = 0.5 * (b - a);
    let mid = 0.5 * (a + b);
    let mut acc = 0.0;
    for (x, wx) in nodes.iter().zip(weights) {
        let px = mid + half * x;
        let mut inner = 0.0;
        for (y, wy) in nodes.iter().zip(weights) {
            inner += wy * f(px, mid + half * y);
        }
        acc += wx * inner;
    }
    acc * half * half
}
