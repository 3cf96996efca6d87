//! One-dimensional quadrature: composite Simpson, refinement-based adaptive
//! Simpson, and composite Gauss-Legendre panels.

use crate::error::{Error, Result};

/// Composite Simpson rule with `n` subintervals (`n` rounded up to even).
pub fn composite_simpson<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, n: usize) -> f64 {
    let n = if n % 2 == 0 { n.max(2) } else { n + 1 };
    let h = (b - a) / n as f64;
    let mut acc = f(a) + f(b);
    for k in 1..n {
        let w = if k % 2 == 1 { 4.0 } else { 2.0 };
        acc += w * f(a + k as f64 * h);
    }
    acc * h / 3.0
}

/// Simpson integration over already-sampled values on a uniform grid.
/// Falls back to a trapezoid step for the last interval when the interval
/// count is odd.
pub fn simpson_sampled(values: &[f64], dx: f64) -> f64 {
    let n = values.len();
    assert!(n >= 2, "need at least two samples");
    let intervals = n - 1;
    let even = intervals - intervals % 2;
    let mut acc = 0.0;
    if even >= 2 {
        let mut s = values[0] + values[even];
        for k in 1..even {
            let w = if k % 2 == 1 { 4.0 } else { 2.0 };
            s += w * values[k];
        }
        acc += s * dx / 3.0;
    }
    if intervals % 2 == 1 {
        acc += 0.5 * dx * (values[n - 2] + values[n - 1]);
    }
    acc
}

/// Composite Simpson with interval doubling until two successive refinements
/// agree to `rel_tol` (relative to the latest value), starting from
/// `n_start` subintervals. Errors after `max_levels` doublings.
pub fn adaptive_simpson<F: Fn(f64) -> f64>(
    f: F,
    a: f64,
    b: f64,
    rel_tol: f64,
    n_start: usize,
    max_levels: u32,
) -> Result<f64> {
    let mut n = n_start.max(2);
    if n % 2 == 1 {
        n += 1;
    }
    let mut prev = composite_simpson(&f, a, b, n);
    let mut last_change = f64::INFINITY;
    for _ in 0..max_levels {
        n *= 2;
        let next = composite_simpson(&f, a, b, n);
        let scale = next.abs().max(f64::MIN_POSITIVE);
        last_change = (next - prev).abs() / scale;
        if last_change <= rel_tol {
            return Ok(next);
        }
        prev = next;
    }
    Err(Error::QuadratureNonConvergence {
        last_change,
        levels: max_levels,
    })
}

/// Gauss-Legendre nodes and weights on [-1, 1], by Newton iteration on the
/// Legendre recurrence.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1);
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        // Tricomi initial guess for the i-th root.
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            // Legendre P_n(x) and derivative via the three-term recurrence.
            let mut p0 = 1.0;
            let mut p1 = x;
            for k in 2..=n {
                let kf = k as f64;
                let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.0;
    }
    (nodes, weights)
}

/// Panelized Gauss-Legendre rule over [a, b]: `panels` equal panels with an
/// `order`-point rule on each. Returns the flattened (node, weight) pairs.
pub fn panel_nodes(a: f64, b: f64, panels: usize, order: usize) -> Vec<(f64, f64)> {
    let (xs, ws) = gauss_legendre(order);
    let h = (b - a) / panels as f64;
    let mut out = Vec::with_capacity(panels * order);
    for p in 0..panels {
        let lo = a + p as f64 * h;
        let mid = lo + 0.5 * h;
        let half = 0.5 * h;
        for (x, w) in xs.iter().zip(ws.iter()) {
            out.push((mid + half * x, w * half));
        }
    }
    out
}
