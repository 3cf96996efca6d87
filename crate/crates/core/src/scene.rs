//! Two-source scene model and its correlation operator.
//!
//! A scene is two equal-strength incoherent point sources imaged through a
//! diffraction-limited PSF, parameterized by the centroid θ₁ = (X₁+X₂)/2 and
//! the separation θ₂ = X₂ − X₁ ≥ 0, with photon budget N = Mε. Mutual
//! incoherence (random relative phase) makes the normalized correlation
//! operator a rank-≤2 mixture of the two displaced PSF amplitudes,
//!
//! ```text
//! g(x, x') = [ψ(x−X₁)ψ(x'−X₁) + ψ(x−X₂)ψ(x'−X₂)] / 2,
//! ```
//!
//! represented here in a truncated Hermite-Gaussian basis. Truncation mass is
//! recorded as `leakage` and the matrix is renormalized to unit trace, which
//! keeps downstream information quantities well-posed.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::hermite;
use crate::matrix::{self, C64};
use crate::psf::Psf;
use crate::quad::simpson_sampled;

/// Default Hermite-Gaussian truncation depth.
pub const DEFAULT_DIM: usize = 40;
/// Default ceiling on truncation leakage before construction fails.
pub const DEFAULT_LEAKAGE_TOL: f64 = 1e-6;
/// Default central-difference step, in units of the PSF width.
pub const DEFAULT_FD_STEP_SIGMA: f64 = 1e-5;
/// Sample count for tabulated-PSF overlap quadrature.
const TABULATED_OVERLAP_SAMPLES: usize = 4001;

#[derive(Debug, Clone)]
pub struct Scene {
    pub psf: Psf,
    /// Centroid θ₁ = (X₁ + X₂)/2.
    pub centroid: f64,
    /// Separation θ₂ = X₂ − X₁ ≥ 0.
    pub separation: f64,
    /// Mean energy per coherence interval, in quanta.
    pub epsilon: f64,
    /// Number of coherence intervals M.
    pub intervals: u64,
}

impl Scene {
    pub fn new(psf: Psf, centroid: f64, separation: f64, epsilon: f64, intervals: u64) -> Result<Self> {
        if !(separation.is_finite() && separation >= 0.0) {
            return Err(Error::Validation(format!(
                "separation must be finite and nonnegative, got {separation}"
            )));
        }
        if !centroid.is_finite() {
            return Err(Error::Validation("centroid must be finite".into()));
        }
        if !(epsilon.is_finite() && epsilon > 0.0) {
            return Err(Error::Validation(format!("epsilon must be positive, got {epsilon}")));
        }
        if intervals == 0 {
            return Err(Error::Validation("interval count must be at least 1".into()));
        }
        Ok(Scene { psf, centroid, separation, epsilon, intervals })
    }

    /// Mean total photon number N = Mε.
    pub fn photon_budget(&self) -> f64 {
        self.epsilon * self.intervals as f64
    }

    /// Source positions (X₁, X₂) = (θ₁ − θ₂/2, θ₁ + θ₂/2).
    pub fn positions(&self) -> (f64, f64) {
        (
            self.centroid - 0.5 * self.separation,
            self.centroid + 0.5 * self.separation,
        )
    }

    pub fn with_separation(&self, separation: f64) -> Scene {
        Scene { separation, ..self.clone() }
    }

    pub fn with_centroid(&self, centroid: f64) -> Scene {
        Scene { centroid, ..self.clone() }
    }

    /// Mean intensity N·[|ψ(x−X₁)|² + |ψ(x−X₂)|²]/2 on the image plane.
    pub fn intensity(&self, x: f64) -> f64 {
        self.photon_budget() * self.normalized_intensity(x)
    }

    /// Intensity per photon, integrating to one over the line.
    pub fn normalized_intensity(&self, x: f64) -> f64 {
        let (x1, x2) = self.positions();
        0.5 * (self.psf.amplitude(x - x1).powi(2) + self.psf.amplitude(x - x2).powi(2))
    }
}

/// Which scene parameters are being estimated, in index order.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParameterSet {
    /// θ₂ only (centroid known); information matrices are 1×1.
    SeparationOnly,
    /// (θ₁, θ₂); information matrices are 2×2 with θ₂ last.
    CentroidAndSeparation,
}

impl ParameterSet {
    pub fn len(&self) -> usize {
        match self {
            ParameterSet::SeparationOnly => 1,
            ParameterSet::CentroidAndSeparation => 2,
        }
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// (∂X₁/∂θ_μ, ∂X₂/∂θ_μ) for each estimated parameter.
    pub fn position_sensitivities(&self) -> Vec<(f64, f64)> {
        match self {
            ParameterSet::SeparationOnly => vec![(-0.5, 0.5)],
            ParameterSet::CentroidAndSeparation => vec![(1.0, 1.0), (-0.5, 0.5)],
        }
    }

    /// Index of the θ₂ row/column in information matrices.
    pub fn separation_index(&self) -> usize {
        self.len() - 1
    }
}

/// Truncated-basis representation of the two source amplitudes.
#[derive(Debug, Clone)]
pub struct SourceComponents {
    pub v1: DVector<f64>,
    pub v2: DVector<f64>,
    /// Retained trace mass (‖v₁‖² + ‖v₂‖²)/2 before renormalization.
    pub trace: f64,
}

impl SourceComponents {
    pub fn leakage(&self) -> f64 {
        1.0 - self.trace
    }
}

/// Expand both displaced source amplitudes in the HG basis at `basis_center`.
pub fn source_components(scene: &Scene, dim: usize, basis_center: f64) -> Result<SourceComponents> {
    if dim < 2 {
        return Err(Error::Validation(format!("basis dimension must be at least 2, got {dim}")));
    }
    let (x1, x2) = scene.positions();
    let v1 = amplitude_coefficients(&scene.psf, dim, basis_center, x1);
    let v2 = amplitude_coefficients(&scene.psf, dim, basis_center, x2);
    let trace = 0.5 * (v1.norm_squared() + v2.norm_squared());
    Ok(SourceComponents { v1, v2, trace })
}

/// Coefficients of ψ(x − source_pos) in the HG basis centered at
/// `basis_center` with the PSF's own width as the basis scale.
fn amplitude_coefficients(psf: &Psf, dim: usize, basis_center: f64, source_pos: f64) -> DVector<f64> {
    let sigma = psf.width();
    match psf {
        Psf::Gaussian { .. } => hermite::displaced_coefficients(dim, sigma, source_pos - basis_center),
        Psf::Tabulated(t) => {
            // Simpson overlap over the shifted tabulated support.
            let xs: Vec<f64> = t.grid().collect();
            let lo = xs[0] + source_pos;
            let hi = xs[xs.len() - 1] + source_pos;
            let n = TABULATED_OVERLAP_SAMPLES;
            let dx = (hi - lo) / (n - 1) as f64;
            let mut modes = vec![0.0; dim];
            let mut samples = vec![vec![0.0; n]; dim];
            for k in 0..n {
                let x = lo + k as f64 * dx;
                let amp = psf.amplitude(x - source_pos);
                hermite::mode_values(dim, sigma, basis_center, x, &mut modes);
                for q in 0..dim {
                    samples[q][k] = modes[q] * amp;
                }
            }
            DVector::from_iterator(dim, samples.iter().map(|row| simpson_sampled(row, dx)))
        }
    }
}

/// Unit-trace correlation operator in a truncated HG basis.
#[derive(Debug, Clone)]
pub struct CorrelationMatrix {
    entries: DMatrix<C64>,
    leakage: f64,
    basis_center: f64,
}

impl CorrelationMatrix {
    /// Wrap an externally supplied matrix, validating Hermiticity, positive
    /// semidefiniteness, and unit trace.
    pub fn from_matrix(entries: DMatrix<C64>, basis_center: f64) -> Result<Self> {
        if entries.nrows() != entries.ncols() {
            return Err(Error::DimensionMismatch {
                expected: entries.nrows(),
                found: entries.ncols(),
            });
        }
        let herm = matrix::hermiticity_violation(&entries);
        if herm > 1e-12 {
            return Err(Error::Validation(format!(
                "correlation matrix is not Hermitian (violation {herm:.3e})"
            )));
        }
        let trace = matrix::trace_re(&entries);
        if (trace - 1.0).abs() > 1e-12 {
            return Err(Error::Validation(format!(
                "correlation matrix trace is {trace:.15}, expected 1"
            )));
        }
        let eigenvalues = matrix::hermitian_eigenvalues(&entries);
        let min = eigenvalues.first().copied().unwrap_or(0.0);
        if min < -1e-10 {
            return Err(Error::Validation(format!(
                "correlation matrix is not positive semidefinite (min eigenvalue {min:.3e})"
            )));
        }
        Ok(CorrelationMatrix { entries, leakage: 0.0, basis_center })
    }

    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }

    pub fn entries(&self) -> &DMatrix<C64> {
        &self.entries
    }

    /// Trace mass lost to truncation before renormalization.
    pub fn leakage(&self) -> f64 {
        self.leakage
    }

    pub fn basis_center(&self) -> f64 {
        self.basis_center
    }

    /// Eigenvalues in descending order.
    pub fn eigenvalues(&self) -> Vec<f64> {
        let mut ev = matrix::hermitian_eigenvalues(&self.entries);
        ev.reverse();
        ev
    }
}

/// Build the renormalized two-source correlation matrix, failing when the
/// truncation leakage exceeds `DEFAULT_LEAKAGE_TOL`.
pub fn build_correlation(scene: &Scene, dim: usize, basis_center: f64) -> Result<CorrelationMatrix> {
    build_correlation_with_tolerance(scene, dim, basis_center, DEFAULT_LEAKAGE_TOL)
}

pub fn build_correlation_with_tolerance(
    scene: &Scene,
    dim: usize,
    basis_center: f64,
    leakage_tol: f64,
) -> Result<CorrelationMatrix> {
    let comp = source_components(scene, dim, basis_center)?;
    // Retained mass can exceed 1 by rounding; truncation loss is never negative.
    let leakage = comp.leakage().max(0.0);
    if leakage > leakage_tol {
        return Err(Error::Truncation { leakage, tolerance: leakage_tol });
    }
    let real = correlation_real(&comp);
    Ok(CorrelationMatrix {
        entries: matrix::real_to_complex(&real),
        leakage,
        basis_center,
    })
}

fn correlation_real(comp: &SourceComponents) -> DMatrix<f64> {
    let dim = comp.v1.len();
    let mut g = DMatrix::zeros(dim, dim);
    g.ger(0.5 / comp.trace, &comp.v1, &comp.v1, 1.0);
    g.ger(0.5 / comp.trace, &comp.v2, &comp.v2, 1.0);
    g
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DerivativeMethod {
    /// Closed-form derivative of the displaced-Gaussian HG coefficients;
    /// Gaussian PSF only.
    Analytic,
    /// Central difference [g(θ+h) − g(θ−h)]/(2h) on the renormalized matrix.
    CentralDifference { step: f64 },
}

/// Parameter derivatives ∂g/∂θ_μ of the renormalized correlation matrix.
#[derive(Debug, Clone)]
pub struct CorrelationDerivatives {
    per_parameter: Vec<DMatrix<C64>>,
    method: DerivativeMethod,
    parameters: ParameterSet,
}

impl CorrelationDerivatives {
    /// Wrap externally supplied derivative matrices, validating Hermiticity
    /// and tracelessness.
    pub fn from_matrices(per_parameter: Vec<DMatrix<C64>>, parameters: ParameterSet) -> Result<Self> {
        if per_parameter.len() != parameters.len() {
            return Err(Error::DimensionMismatch {
                expected: parameters.len(),
                found: per_parameter.len(),
            });
        }
        for m in &per_parameter {
            let herm = matrix::hermiticity_violation(m);
            if herm > 1e-10 {
                return Err(Error::Validation(format!(
                    "derivative matrix is not Hermitian (violation {herm:.3e})"
                )));
            }
            let tr = matrix::trace_re(m);
            if tr.abs() > 1e-8 {
                return Err(Error::Validation(format!(
                    "derivative matrix has trace {tr:.3e}, expected 0"
                )));
            }
        }
        Ok(CorrelationDerivatives {
            per_parameter,
            method: DerivativeMethod::Analytic,
            parameters,
        })
    }

    pub fn matrices(&self) -> &[DMatrix<C64>] {
        &self.per_parameter
    }

    pub fn method(&self) -> DerivativeMethod {
        self.method
    }

    pub fn parameters(&self) -> ParameterSet {
        self.parameters
    }
}

/// Differentiate the renormalized correlation matrix with respect to the
/// estimated parameters.
pub fn build_derivatives(
    scene: &Scene,
    dim: usize,
    basis_center: f64,
    parameters: ParameterSet,
    method: DerivativeMethod,
) -> Result<CorrelationDerivatives> {
    match method {
        DerivativeMethod::Analytic => analytic_derivatives(scene, dim, basis_center, parameters),
        DerivativeMethod::CentralDifference { step } => {
            central_difference_derivatives(scene, dim, basis_center, parameters, step)
        }
    }
}

fn analytic_derivatives(
    scene: &Scene,
    dim: usize,
    basis_center: f64,
    parameters: ParameterSet,
) -> Result<CorrelationDerivatives> {
    if !scene.psf.is_gaussian() {
        return Err(Error::Unsupported(
            "analytic derivatives require a gaussian PSF; use DerivativeMethod::CentralDifference".into(),
        ));
    }
    let sigma = scene.psf.width();
    let (x1, x2) = scene.positions();
    let comp = source_components(scene, dim, basis_center)?;
    let dv1 = hermite::displaced_coefficient_derivatives(dim, sigma, x1 - basis_center);
    let dv2 = hermite::displaced_coefficient_derivatives(dim, sigma, x2 - basis_center);
    let g = correlation_real(&comp);
    let t = comp.trace;

    let mut out = Vec::with_capacity(parameters.len());
    for (w1, w2) in parameters.position_sensitivities() {
        // dG = Σ_i w_i (v_i' v_iᵀ + v_i v_i'ᵀ)/2, dt = Σ_i w_i v_i·v_i',
        // and d(G/t) = (dG − dt·g)/t.
        let mut dg_raw = DMatrix::zeros(dim, dim);
        dg_raw.ger(0.5 * w1, &dv1, &comp.v1, 1.0);
        dg_raw.ger(0.5 * w1, &comp.v1, &dv1, 1.0);
        dg_raw.ger(0.5 * w2, &dv2, &comp.v2, 1.0);
        dg_raw.ger(0.5 * w2, &comp.v2, &dv2, 1.0);
        let dt = w1 * comp.v1.dot(&dv1) + w2 * comp.v2.dot(&dv2);
        let dg = (dg_raw - &g * dt) / t;
        out.push(matrix::real_to_complex(&dg));
    }
    Ok(CorrelationDerivatives {
        per_parameter: out,
        method: DerivativeMethod::Analytic,
        parameters,
    })
}

fn central_difference_derivatives(
    scene: &Scene,
    dim: usize,
    basis_center: f64,
    parameters: ParameterSet,
    step: f64,
) -> Result<CorrelationDerivatives> {
    if !(step.is_finite() && step > 0.0) {
        return Err(Error::Validation(format!("finite-difference step must be positive, got {step}")));
    }
    let mut out = Vec::with_capacity(parameters.len());
    let shifted = |centroid_shift: f64, separation_shift: f64| -> Result<DMatrix<C64>> {
        let moved = Scene {
            centroid: scene.centroid + centroid_shift,
            // Separation may cross zero inside the stencil; the correlation
            // matrix is even under θ₂ → −θ₂, so reflecting keeps it valid.
            separation: (scene.separation + separation_shift).abs(),
            ..scene.clone()
        };
        Ok(build_correlation_with_tolerance(&moved, dim, basis_center, 1.0)?
            .entries()
            .clone())
    };
    for (idx, _) in parameters.position_sensitivities().iter().enumerate() {
        let is_centroid = parameters == ParameterSet::CentroidAndSeparation && idx == 0;
        let (plus, minus) = if is_centroid {
            (shifted(step, 0.0)?, shifted(-step, 0.0)?)
        } else {
            (shifted(0.0, step)?, shifted(0.0, -step)?)
        };
        let dg = (plus - minus) / C64::new(2.0 * step, 0.0);
        out.push(dg);
    }
    Ok(CorrelationDerivatives {
        per_parameter: out,
        method: DerivativeMethod::CentralDifference { step },
        parameters,
    })
}
