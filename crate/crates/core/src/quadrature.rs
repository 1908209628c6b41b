//! Gauss–Legendre rules, adaptive bisection on top of them, and composite
//! Simpson weights for sampled integrands with known derivative jumps.

use std::sync::OnceLock;

use crate::error::{Result, VolcalError};

/// Nodes and weights of an n-point Gauss–Legendre rule on [−1, 1].
#[derive(Debug, Clone)]
pub struct GaussLegendre {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl GaussLegendre {
    pub fn new(n: usize) -> Self {
        assert!(n >= 1, "Gauss-Legendre order must be positive");
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        let m = n.div_ceil(2);
        for i in 0..m {
            // Tricomi initial guess, then Newton on P_n.
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
        GaussLegendre { nodes, weights }
    }

    /// Shared 20-point rule.
    pub fn standard() -> &'static GaussLegendre {
        static RULE: OnceLock<GaussLegendre> = OnceLock::new();
        RULE.get_or_init(|| GaussLegendre::new(20))
    }

    pub fn order(&self) -> usize {
        self.nodes.len()
    }

    pub fn integrate<F: Fn(f64) -> f64>(&self, f: F, a: f64, b: f64) -> f64 {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&x, &w)| w * f(mid + half * x))
            .sum::<f64>()
            * half
    }

    /// Composite rule over `panels` equal sub-intervals.
    pub fn integrate_panels<F: Fn(f64) -> f64>(&self, f: F, a: f64, b: f64, panels: usize) -> f64 {
        let h = (b - a) / panels as f64;
        (0..panels)
            .map(|k| {
                let lo = a + k as f64 * h;
                self.integrate(&f, lo, lo + h)
            })
            .sum()
    }
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for k in 2..=n {
        let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
        p0 = p1;
        p1 = p2;
    }
    let (p, pm1) = if n == 0 { (1.0, 0.0) } else { (p1, p0) };
    let dp = if n == 0 {
        0.0
    } else {
        n as f64 * (x * p - pm1) / (x * x - 1.0)
    };
    (p, dp)
}

/// Adaptive bisection driven by the 20-point Gauss–Legendre rule.
///
/// A sub-interval is accepted when the rule on the whole interval agrees with
/// the sum over its two halves to `rel_tol·|total| + abs_tol`.
pub fn adaptive<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, rel_tol: f64, abs_tol: f64) -> Result<f64> {
    if a == b {
        return Ok(0.0);
    }
    let rule = GaussLegendre::standard();
    let whole = rule.integrate(&f, a, b);
    let scale = whole.abs();
    adaptive_step(&f, rule, a, b, whole, rel_tol, abs_tol, scale, 0)
}

#[allow(clippy::too_many_arguments)]
fn adaptive_step<F: Fn(f64) -> f64>(
    f: &F,
    rule: &GaussLegendre,
    a: f64,
    b: f64,
    whole: f64,
    rel_tol: f64,
    abs_tol: f64,
    scale: f64,
    depth: usize,
) -> Result<f64> {
    let mid = 0.5 * (a + b);
    let left = rule.integrate(f, a, mid);
    let right = rule.integrate(f, mid, b);
    let refined = left + right;
    let tol = (rel_tol * scale.max(refined.abs())).max(abs_tol);
    if (refined - whole).abs() <= tol || mid <= a.min(b) || mid >= a.max(b) {
        return Ok(refined);
    }
    if depth >= 100 {
        return Err(VolcalError::OracleFailure(format!(
            "adaptive quadrature on [{a}, {b}] stalled at depth {depth}"
        )));
    }
    let l = adaptive_step(f, rule, a, mid, left, rel_tol, abs_tol, scale, depth + 1)?;
    let r = adaptive_step(f, rule, mid, b, right, rel_tol, abs_tol, scale, depth + 1)?;
    Ok(l + r)
}

/// Adaptive integration over consecutive break points (each sub-range smooth).
pub fn adaptive_piecewise<F: Fn(f64) -> f64>(f: F, breaks: &[f64], rel_tol: f64, abs_tol: f64) -> Result<f64> {
    let mut total = 0.0;
    for w in breaks.windows(2) {
        if w[1] > w[0] {
            total += adaptive(&f, w[0], w[1], rel_tol, abs_tol)?;
        }
    }
    Ok(total)
}

/// Adds composite Simpson weights for the equally spaced nodes `lo..=hi`
/// (indices into a sample vector) into `weights`.
///
/// Even interval counts use the 1/3 rule throughout; odd counts ≥ 3 start with
/// one 3/8 panel; a single interval falls back to the trapezoid rule.
pub fn add_simpson_weights(weights: &mut [f64], lo: usize, hi: usize, h: f64) {
    if hi <= lo {
        return;
    }
    let intervals = hi - lo;
    if intervals == 1 {
        weights[lo] += 0.5 * h;
        weights[hi] += 0.5 * h;
        return;
    }
    let mut start = lo;
    if intervals % 2 == 1 {
        let c = 3.0 * h / 8.0;
        weights[lo] += c;
        weights[lo + 1] += 3.0 * c;
        weights[lo + 2] += 3.0 * c;
        weights[lo + 3] += c;
        start = lo + 3;
    }
    let mut k = start;
    while k < hi {
        weights[k] += h / 3.0;
        weights[k + 1] += 4.0 * h / 3.0;
        weights[k + 2] += h / 3.0;
        k += 2;
    }
}

/// Simpson weights over `0..n` samples with the integrand allowed to have
/// derivative jumps at the listed sample indices.
pub fn kinked_simpson_weights(n: usize, h: f64, kinks: &[usize]) -> Vec<f64> {
    let mut cuts: Vec<usize> = kinks.iter().copied().filter(|&k| k > 0 && k + 1 < n).collect();
    cuts.push(0);
    cuts.push(n.saturating_sub(1));
    cuts.sort_unstable();
    cuts.dedup();
    let mut w = vec![0.0; n];
    for pair in cuts.windows(2) {
        add_simpson_weights(&mut w, pair[0], pair[1], h);
    }
    w
}

/// Product-integration weights for ∫ K(y) f(y) dy over m equally spaced nodes
/// y_l = a + l·h, with f replaced on each interval by the cubic through the
/// four nearest nodes and K integrated by Gauss–Legendre. K may have kinks at
/// nodes; f is assumed smooth.
pub fn product_weights<K: Fn(f64) -> f64>(a: f64, h: f64, m: usize, kernel: K, rule: &GaussLegendre) -> Vec<f64> {
    assert!(m >= 4, "product integration needs at least 4 nodes");
    let mut w = vec![0.0; m];
    for k in 0..m - 1 {
        let first = k.saturating_sub(1).min(m - 4);
        let lo = a + k as f64 * h;
        for (x, wt) in rule.nodes.iter().zip(&rule.weights) {
            let t = 0.5 * (x + 1.0);
            let y = lo + t * h;
            let kv = kernel(y) * wt * 0.5 * h;
            if kv == 0.0 {
                continue;
            }
            // local coordinate of y relative to node `first`, in steps
            let s = (k - first) as f64 + t;
            let basis = lagrange4(s);
            for (j, bj) in basis.iter().enumerate() {
                w[first + j] += kv * bj;
            }
        }
    }
    w
}

// Cubic Lagrange basis on nodes 0, 1, 2, 3 evaluated at s.
fn lagrange4(s: f64) -> [f64; 4] {
    let (a, b, c, d) = (s, s - 1.0, s - 2.0, s - 3.0);
    [-b * c * d / 6.0, a * c * d / 2.0, -a * b * d / 2.0, a * b * c / 6.0]
}
