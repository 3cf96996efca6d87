//! Hermite-Gaussian mode machinery.
//!
//! The mode family used throughout is the orthonormal set
//!
//! ```text
//! φ_q(x) = (2πσ²)^{-1/4} (2^q q!)^{-1/2} H_q(ξ) e^{-ξ²/2},   ξ = (x - c) / (σ√2),
//! ```
//!
//! whose fundamental mode φ₀ is the Gaussian amplitude of width σ (intensity
//! variance σ²). A ground-state amplitude displaced by `d` expands over this
//! family with coefficients
//!
//! ```text
//! c_q(d) = e^{-β²/2} β^q / √(q!),   β = d / (2σ),
//! ```
//!
//! the real coherent-state amplitudes with mean mode index Q = β². Mode
//! overlaps between two differently-centered families have no comparably
//! simple closed form and are computed with panelized Gauss-Legendre
//! quadrature.

use nalgebra::{DMatrix, DVector};

use crate::quad::panel_nodes;

/// Evaluate φ_0..φ_{dim-1} at a point via the stable three-term recurrence
/// φ_{q+1} = ξ √(2/(q+1)) φ_q − √(q/(q+1)) φ_{q−1}.
pub fn mode_values(dim: usize, sigma: f64, center: f64, x: f64, out: &mut [f64]) {
    debug_assert_eq!(out.len(), dim);
    let xi = (x - center) / (sigma * std::f64::consts::SQRT_2);
    let norm = (2.0 * std::f64::consts::PI * sigma * sigma).powf(-0.25);
    out[0] = norm * (-0.5 * xi * xi).exp();
    if dim == 1 {
        return;
    }
    out[1] = xi * std::f64::consts::SQRT_2 * out[0];
    for q in 1..dim - 1 {
        let qf = q as f64;
        out[q + 1] = xi * (2.0 / (qf + 1.0)).sqrt() * out[q] - (qf / (qf + 1.0)).sqrt() * out[q - 1];
    }
}

/// Single mode value φ_q(x).
pub fn mode_value(q: usize, sigma: f64, center: f64, x: f64) -> f64 {
    let mut buf = vec![0.0; q + 1];
    mode_values(q + 1, sigma, center, x, &mut buf);
    buf[q]
}

/// Expansion coefficients of a ground-state amplitude displaced by `d`,
/// c_q(d) = e^{-β²/2} β^q / √(q!) with β = d/(2σ).
pub fn displaced_coefficients(dim: usize, sigma: f64, d: f64) -> DVector<f64> {
    let beta = d / (2.0 * sigma);
    let mut c = DVector::zeros(dim);
    c[0] = (-0.5 * beta * beta).exp();
    for q in 1..dim {
        c[q] = c[q - 1] * beta / (q as f64).sqrt();
    }
    c
}

/// d/dd of [`displaced_coefficients`]: (√q c_{q−1} − β c_q) / (2σ).
pub fn displaced_coefficient_derivatives(dim: usize, sigma: f64, d: f64) -> DVector<f64> {
    let beta = d / (2.0 * sigma);
    let c = displaced_coefficients(dim, sigma, d);
    let mut dc = DVector::zeros(dim);
    for q in 0..dim {
        let lower = if q == 0 { 0.0 } else { (q as f64).sqrt() * c[q - 1] };
        dc[q] = (lower - beta * c[q]) / (2.0 * sigma);
    }
    dc
}

/// Overlap matrix O[m, q] = ∫ φ_m(x; center_a) φ_q(x; center_b) dx between two
/// equal-width mode families. Quadrature range covers the classical turning
/// points of the highest mode around both centers.
pub fn overlap_matrix(dim: usize, sigma: f64, center_a: f64, center_b: f64) -> DMatrix<f64> {
    let spread = mode_support_half_width(dim, sigma);
    let lo = center_a.min(center_b) - spread;
    let hi = center_a.max(center_b) + spread;
    let panels = ((hi - lo) / sigma).ceil() as usize + 1;
    let nodes = panel_nodes(lo, hi, panels, 20);

    let mut overlap = DMatrix::zeros(dim, dim);
    let mut va = vec![0.0; dim];
    let mut vb = vec![0.0; dim];
    for &(x, w) in &nodes {
        mode_values(dim, sigma, center_a, x, &mut va);
        mode_values(dim, sigma, center_b, x, &mut vb);
        for q in 0..dim {
            let wb = w * vb[q];
            if wb == 0.0 {
                continue;
            }
            for m in 0..dim {
                overlap[(m, q)] += va[m] * wb;
            }
        }
    }
    overlap
}

/// Half-width beyond which every mode of index < dim is negligible:
/// the classical turning point σ√(2(2q+1)) plus a tail margin.
pub fn mode_support_half_width(dim: usize, sigma: f64) -> f64 {
    let q = (dim.max(1) - 1) as f64;
    sigma * (2.0 * (2.0 * q + 1.0)).sqrt() + 8.0 * sigma
}
