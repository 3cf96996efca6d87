//! Point-spread-function models.
//!
//! Two amplitude models are supported: the analytic Gaussian
//! ψ(x) = (2πσ²)^{-1/4} e^{-x²/(4σ²)}, and a tabulated real amplitude on a
//! uniform grid. Amplitudes are square-normalized, ∫|ψ|²dx = 1, and carry
//! their momentum-space variance Δk² = ∫|ψ'(x)|² dx (real amplitudes have
//! zero mean momentum). For the Gaussian, Δk² = 1/(4σ²) exactly.

use crate::error::{Error, Result};
use crate::quad::simpson_sampled;

pub const NORMALIZATION_TOL: f64 = 1e-9;

#[derive(Debug, Clone)]
pub enum Psf {
    Gaussian { sigma: f64 },
    Tabulated(TabulatedPsf),
}

/// Real amplitude sampled on a uniform grid; zero outside the grid.
#[derive(Debug, Clone)]
pub struct TabulatedPsf {
    xs_start: f64,
    dx: f64,
    amplitude: Vec<f64>,
    momentum_variance: f64,
}

impl Psf {
    pub fn gaussian(sigma: f64) -> Result<Self> {
        if !(sigma.is_finite() && sigma > 0.0) {
            return Err(Error::Validation(format!("psf width must be positive, got {sigma}")));
        }
        Ok(Psf::Gaussian { sigma })
    }

    /// Build a tabulated PSF from samples of a real amplitude on a uniform
    /// grid. The samples must be square-normalized within the quadrature
    /// tolerance.
    pub fn tabulated(xs: &[f64], amplitude: &[f64]) -> Result<Self> {
        if xs.len() != amplitude.len() {
            return Err(Error::DimensionMismatch {
                expected: xs.len(),
                found: amplitude.len(),
            });
        }
        if xs.len() < 5 {
            return Err(Error::Validation("tabulated psf needs at least 5 samples".into()));
        }
        let dx = xs[1] - xs[0];
        if dx <= 0.0 {
            return Err(Error::Validation("tabulated psf grid must be increasing".into()));
        }
        for w in xs.windows(2) {
            if ((w[1] - w[0]) - dx).abs() > 1e-9 * dx {
                return Err(Error::Validation("tabulated psf grid must be uniform".into()));
            }
        }
        if amplitude.iter().any(|a| !a.is_finite()) {
            return Err(Error::Validation("tabulated psf amplitude must be finite".into()));
        }
        let sq: Vec<f64> = amplitude.iter().map(|a| a * a).collect();
        let norm = simpson_sampled(&sq, dx);
        if (norm - 1.0).abs() > NORMALIZATION_TOL {
            return Err(Error::Validation(format!(
                "tabulated psf is not square-normalized: ∫|ψ|²dx = {norm:.12}"
            )));
        }
        // Central differences for ψ' (one-sided at the ends), then Simpson.
        let n = amplitude.len();
        let mut deriv_sq = vec![0.0; n];
        for i in 0..n {
            let d = if i == 0 {
                (amplitude[1] - amplitude[0]) / dx
            } else if i == n - 1 {
                (amplitude[n - 1] - amplitude[n - 2]) / dx
            } else {
                (amplitude[i + 1] - amplitude[i - 1]) / (2.0 * dx)
            };
            deriv_sq[i] = d * d;
        }
        let momentum_variance = simpson_sampled(&deriv_sq, dx);
        Ok(Psf::Tabulated(TabulatedPsf {
            xs_start: xs[0],
            dx,
            amplitude: amplitude.to_vec(),
            momentum_variance,
        }))
    }

    /// Amplitude ψ(x). Tabulated amplitudes interpolate linearly and vanish
    /// outside their grid.
    pub fn amplitude(&self, x: f64) -> f64 {
        match self {
            Psf::Gaussian { sigma } => {
                let s2 = sigma * sigma;
                (2.0 * std::f64::consts::PI * s2).powf(-0.25) * (-x * x / (4.0 * s2)).exp()
            }
            Psf::Tabulated(t) => t.interpolate(x),
        }
    }

    /// Amplitude derivative ψ'(x). Tabulated amplitudes differentiate the
    /// interpolant with a grid-spacing central difference.
    pub fn amplitude_derivative(&self, x: f64) -> f64 {
        match self {
            Psf::Gaussian { sigma } => -x / (2.0 * sigma * sigma) * self.amplitude(x),
            Psf::Tabulated(t) => {
                let h = t.dx;
                (t.interpolate(x + h) - t.interpolate(x - h)) / (2.0 * h)
            }
        }
    }

    /// Momentum-space variance Δk².
    pub fn momentum_variance(&self) -> f64 {
        match self {
            Psf::Gaussian { sigma } => 1.0 / (4.0 * sigma * sigma),
            Psf::Tabulated(t) => t.momentum_variance,
        }
    }

    /// Width parameter σ; for tabulated amplitudes the effective width
    /// 1/(2Δk) implied by the momentum variance.
    pub fn width(&self) -> f64 {
        match self {
            Psf::Gaussian { sigma } => *sigma,
            Psf::Tabulated(t) => 0.5 / t.momentum_variance.sqrt(),
        }
    }

    pub fn is_gaussian(&self) -> bool {
        matches!(self, Psf::Gaussian { .. })
    }
}

impl TabulatedPsf {
    fn interpolate(&self, x: f64) -> f64 {
        let u = (x - self.xs_start) / self.dx;
        if u < 0.0 {
            return 0.0;
        }
        let i = u.floor() as usize;
        if i + 1 >= self.amplitude.len() {
            return 0.0;
        }
        let frac = u - i as f64;
        self.amplitude[i] * (1.0 - frac) + self.amplitude[i + 1] * frac
    }

    pub fn grid(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.amplitude.len()).map(move |i| self.xs_start + i as f64 * self.dx)
    }

    pub fn samples(&self) -> &[f64] {
        &self.amplitude
    }

    pub fn spacing(&self) -> f64 {
        self.dx
    }
}
