//! Measurement schemes as finite projection-measure families.
//!
//! Every scheme is a list of Hermitian PSD matrices {Π_j} on the truncated
//! mode space together with a designated completeness bucket
//! Π_res = I − Σ_j Π_j, so outcome probabilities p_j = Re tr(Π_j g) always
//! form a full distribution. Direct imaging discretizes the image plane into
//! pixels, SPADE sorts Hermite-Gaussian modes (optionally misaligned by an
//! offset d), binary SPADE keeps only the fundamental-mode/rest split, and
//! custom unitaries route each output channel j through Π_j = F†e_je_j†F.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::hermite;
use crate::matrix::{self, C64};
use crate::quad::panel_nodes;
use crate::scene::{source_components, CorrelationDerivatives, CorrelationMatrix, Scene, SourceComponents};

/// Probabilities this far below zero are rounding noise and clamp to zero;
/// anything lower is a construction bug and errors.
pub const NEGATIVE_PROBABILITY_TOL: f64 = 1e-12;

/// Residual mass above this at construction marks poor pixel-grid coverage.
pub const COVERAGE_WARNING_THRESHOLD: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SchemeKind {
    DirectImaging,
    HgSpade,
    BinarySpade,
    CustomUnitary,
}

/// What a measurement outcome physically is; used for reporting.
#[derive(Debug, Clone, PartialEq)]
pub enum OutcomeLabel {
    Pixel { center: f64, width: f64 },
    Mode { index: usize },
    /// Binary SPADE's complement of the fundamental mode.
    ModeComplement,
    Channel { index: usize },
    Residual,
}

impl OutcomeLabel {
    pub fn text(&self) -> String {
        match self {
            OutcomeLabel::Pixel { center, .. } => format!("pixel@{center:.6}"),
            OutcomeLabel::Mode { index } => format!("mode_{index}"),
            OutcomeLabel::ModeComplement => "mode_complement".into(),
            OutcomeLabel::Channel { index } => format!("channel_{index}"),
            OutcomeLabel::Residual => "residual".into(),
        }
    }
}

/// Non-overlapping pixels of equal width.
#[derive(Debug, Clone)]
pub struct PixelGrid {
    centers: Vec<f64>,
    width: f64,
}

impl PixelGrid {
    /// Contiguous pixels tiling [lo, hi]; the width is adjusted to the
    /// nearest exact tiling.
    pub fn uniform(lo: f64, hi: f64, width: f64) -> Result<Self> {
        if !(width.is_finite() && width > 0.0) {
            return Err(Error::Validation(format!("pixel width must be positive, got {width}")));
        }
        if hi <= lo {
            return Err(Error::Validation("pixel grid extent must have hi > lo".into()));
        }
        let count = ((hi - lo) / width).round().max(1.0) as usize;
        let w = (hi - lo) / count as f64;
        let centers = (0..count).map(|k| lo + (k as f64 + 0.5) * w).collect();
        Ok(PixelGrid { centers, width: w })
    }

    /// Explicit centers with a shared width; pixels must not overlap.
    pub fn from_centers(centers: Vec<f64>, width: f64) -> Result<Self> {
        if !(width.is_finite() && width > 0.0) {
            return Err(Error::Validation(format!("pixel width must be positive, got {width}")));
        }
        if centers.is_empty() {
            return Err(Error::Validation("pixel grid needs at least one pixel".into()));
        }
        let mut sorted = centers.clone();
        sorted.sort_by(f64::total_cmp);
        for pair in sorted.windows(2) {
            if pair[1] - pair[0] < width * (1.0 - 1e-12) {
                return Err(Error::Validation(format!(
                    "pixels at {} and {} overlap for width {width}",
                    pair[0], pair[1]
                )));
            }
        }
        Ok(PixelGrid { centers, width })
    }

    pub fn centers(&self) -> &[f64] {
        &self.centers
    }

    pub fn width(&self) -> f64 {
        self.width
    }

    pub fn len(&self) -> usize {
        self.centers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.centers.is_empty()
    }
}

/// A finite projection-measure family with an explicit completeness bucket.
#[derive(Debug, Clone)]
pub struct MeasurementScheme {
    kind: SchemeKind,
    elements: Vec<DMatrix<C64>>,
    labels: Vec<OutcomeLabel>,
    residual_index: usize,
    dim: usize,
    offset: f64,
    /// Residual mass at the construction scene when it exceeds
    /// [`COVERAGE_WARNING_THRESHOLD`] (direct imaging only).
    coverage_residual: Option<f64>,
}

impl MeasurementScheme {
    /// Pixelated direct imaging: Π_pixel = ∫_pixel |x⟩⟨x| dx in the HG basis,
    /// by Gauss-Legendre quadrature of φ_m(x)φ_n(x) over each pixel.
    pub fn direct_imaging(grid: &PixelGrid, scene: &Scene, dim: usize, basis_center: f64) -> Result<Self> {
        let sigma = scene.psf.width();
        let mut elements = Vec::with_capacity(grid.len() + 1);
        let mut labels = Vec::with_capacity(grid.len() + 1);
        let mut running = DMatrix::<f64>::zeros(dim, dim);
        let mut modes = vec![0.0; dim];
        for &center in grid.centers() {
            let (lo, hi) = (center - 0.5 * grid.width(), center + 0.5 * grid.width());
            let panels = ((hi - lo) / (0.5 * sigma)).ceil().max(1.0) as usize;
            let mut pixel = DMatrix::<f64>::zeros(dim, dim);
            for (x, w) in panel_nodes(lo, hi, panels, 24) {
                hermite::mode_values(dim, sigma, basis_center, x, &mut modes);
                for n in 0..dim {
                    let wn = w * modes[n];
                    if wn == 0.0 {
                        continue;
                    }
                    for m in n..dim {
                        pixel[(m, n)] += modes[m] * wn;
                    }
                }
            }
            // Mirror the accumulated lower triangle.
            for n in 0..dim {
                for m in n + 1..dim {
                    pixel[(n, m)] = pixel[(m, n)];
                }
            }
            running += &pixel;
            elements.push(matrix::real_to_complex(&pixel));
            labels.push(OutcomeLabel::Pixel { center, width: grid.width() });
        }
        let mut residual = DMatrix::<f64>::identity(dim, dim);
        residual -= &running;
        elements.push(matrix::real_to_complex(&residual));
        labels.push(OutcomeLabel::Residual);
        let residual_index = elements.len() - 1;

        let mut scheme = MeasurementScheme {
            kind: SchemeKind::DirectImaging,
            elements,
            labels,
            residual_index,
            dim,
            offset: 0.0,
            coverage_residual: None,
        };
        let comp = source_components(scene, dim, basis_center)?;
        let residual_mass = scheme.expected_from_components(&comp)[residual_index];
        if residual_mass > COVERAGE_WARNING_THRESHOLD {
            scheme.coverage_residual = Some(residual_mass);
        }
        Ok(scheme)
    }

    /// Hermite-Gaussian mode sorting over modes 0..q_max, with the mode
    /// family displaced by `offset` from the computational basis center.
    /// Displaced projectors are re-expanded in the computational basis by
    /// overlap quadrature, so offset zero and nonzero share one code path.
    pub fn hg_spade(q_max: usize, offset: f64, scene: &Scene, dim: usize, basis_center: f64) -> Result<Self> {
        if q_max == 0 || q_max > dim {
            return Err(Error::Validation(format!(
                "mode count must be in 1..={dim}, got {q_max}"
            )));
        }
        if !offset.is_finite() {
            return Err(Error::Validation("offset must be finite".into()));
        }
        let sigma = scene.psf.width();
        let overlap = hermite::overlap_matrix(dim, sigma, basis_center, basis_center + offset);
        let mut elements = Vec::with_capacity(q_max + 1);
        let mut labels = Vec::with_capacity(q_max + 1);
        let mut running = DMatrix::<f64>::zeros(dim, dim);
        for q in 0..q_max {
            let col: DVector<f64> = overlap.column(q).into();
            let mut proj = DMatrix::<f64>::zeros(dim, dim);
            proj.ger(1.0, &col, &col, 1.0);
            running += &proj;
            elements.push(matrix::real_to_complex(&proj));
            labels.push(OutcomeLabel::Mode { index: q });
        }
        let mut residual = DMatrix::<f64>::identity(dim, dim);
        residual -= &running;
        elements.push(matrix::real_to_complex(&residual));
        labels.push(OutcomeLabel::Residual);
        let residual_index = elements.len() - 1;
        Ok(MeasurementScheme {
            kind: SchemeKind::HgSpade,
            elements,
            labels,
            residual_index,
            dim,
            offset,
            coverage_residual: None,
        })
    }

    /// Two-outcome scheme {Π₀, I − Π₀} splitting the (possibly displaced)
    /// fundamental mode from everything else. Π₀ is built by the same
    /// overlap expansion as [`MeasurementScheme::hg_spade`], so the two
    /// constructions agree exactly.
    pub fn binary_spade(offset: f64, scene: &Scene, dim: usize, basis_center: f64) -> Result<Self> {
        let spade = Self::hg_spade(1, offset, scene, dim, basis_center)?;
        let fundamental = spade.elements[0].clone();
        let rest = spade.elements[1].clone();
        Ok(MeasurementScheme {
            kind: SchemeKind::BinarySpade,
            elements: vec![fundamental, rest],
            labels: vec![OutcomeLabel::Mode { index: 0 }, OutcomeLabel::ModeComplement],
            residual_index: 1,
            dim,
            offset,
            coverage_residual: None,
        })
    }

    /// Channel projectors Π_j = F†e_je_j†F of a unitary scattering matrix.
    /// The residual bucket is identically zero.
    pub fn custom_unitary(f: DMatrix<C64>) -> Result<Self> {
        let dim = f.nrows();
        if f.ncols() != dim {
            return Err(Error::DimensionMismatch { expected: dim, found: f.ncols() });
        }
        let defect = matrix::max_abs(&(f.adjoint() * &f - DMatrix::<C64>::identity(dim, dim)));
        if defect >= 1e-10 {
            return Err(Error::Validation(format!(
                "scattering matrix is not unitary (‖F†F − I‖_max = {defect:.3e})"
            )));
        }
        let mut elements = Vec::with_capacity(dim + 1);
        let mut labels = Vec::with_capacity(dim + 1);
        for j in 0..dim {
            let row = f.row(j).adjoint();
            let mut proj = DMatrix::<C64>::zeros(dim, dim);
            proj.gerc(C64::new(1.0, 0.0), &row, &row, C64::new(1.0, 0.0));
            elements.push(proj);
            labels.push(OutcomeLabel::Channel { index: j });
        }
        elements.push(DMatrix::zeros(dim, dim));
        labels.push(OutcomeLabel::Residual);
        let residual_index = dim;
        Ok(MeasurementScheme {
            kind: SchemeKind::CustomUnitary,
            elements,
            labels,
            residual_index,
            dim,
            offset: 0.0,
            coverage_residual: None,
        })
    }

    /// Arbitrary elements with an explicit residual index. Hermiticity and
    /// completeness are enforced; positive semidefiniteness is the caller's
    /// responsibility and is policed by the probability clamp.
    pub fn from_raw_elements(
        elements: Vec<DMatrix<C64>>,
        labels: Vec<OutcomeLabel>,
        residual_index: usize,
    ) -> Result<Self> {
        if elements.is_empty() || residual_index >= elements.len() || labels.len() != elements.len() {
            return Err(Error::Validation("inconsistent scheme element lists".into()));
        }
        let dim = elements[0].nrows();
        let mut total = DMatrix::<C64>::zeros(dim, dim);
        for e in &elements {
            if e.nrows() != dim || e.ncols() != dim {
                return Err(Error::DimensionMismatch { expected: dim, found: e.nrows() });
            }
            if matrix::hermiticity_violation(e) > 1e-12 {
                return Err(Error::Validation("scheme element is not Hermitian".into()));
            }
            total += e;
        }
        let defect = matrix::max_abs(&(total - DMatrix::<C64>::identity(dim, dim)));
        if defect > 1e-10 {
            return Err(Error::Validation(format!(
                "scheme elements do not sum to identity (defect {defect:.3e})"
            )));
        }
        Ok(MeasurementScheme {
            kind: SchemeKind::CustomUnitary,
            elements,
            labels,
            residual_index,
            dim,
            offset: 0.0,
            coverage_residual: None,
        })
    }

    pub fn kind(&self) -> SchemeKind {
        self.kind
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }

    pub fn residual_index(&self) -> usize {
        self.residual_index
    }

    pub fn offset(&self) -> f64 {
        self.offset
    }

    pub fn elements(&self) -> &[DMatrix<C64>] {
        &self.elements
    }

    pub fn labels(&self) -> &[OutcomeLabel] {
        &self.labels
    }

    pub fn coverage_residual(&self) -> Option<f64> {
        self.coverage_residual
    }

    /// Full invariant check: Hermitian PSD elements summing to identity.
    /// Costs an eigendecomposition per element.
    pub fn validate(&self) -> Result<()> {
        let mut total = DMatrix::<C64>::zeros(self.dim, self.dim);
        for e in &self.elements {
            if matrix::hermiticity_violation(e) > 1e-12 {
                return Err(Error::Validation("scheme element is not Hermitian".into()));
            }
            let min = e
                .clone()
                .symmetric_eigen()
                .eigenvalues
                .iter()
                .cloned()
                .fold(f64::INFINITY, f64::min);
            if min < -1e-10 {
                return Err(Error::Validation(format!(
                    "scheme element has negative eigenvalue {min:.3e}"
                )));
            }
            total += e;
        }
        let defect = matrix::max_abs(&(total - DMatrix::<C64>::identity(self.dim, self.dim)));
        if defect > 1e-10 {
            return Err(Error::Validation(format!(
                "scheme completeness defect {defect:.3e}"
            )));
        }
        Ok(())
    }

    /// Output distribution p_j = Re tr(Π_j g) with parameter derivatives
    /// ∂p_j/∂θ_μ = Re tr(Π_j ∂g/∂θ_μ).
    pub fn probabilities(
        &self,
        g: &CorrelationMatrix,
        dgs: &CorrelationDerivatives,
    ) -> Result<ProbabilityVector> {
        if g.dim() != self.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, found: g.dim() });
        }
        let values = self.clamped_values(g)?;
        let mut derivatives = Vec::with_capacity(dgs.matrices().len());
        for dg in dgs.matrices() {
            if dg.nrows() != self.dim {
                return Err(Error::DimensionMismatch { expected: self.dim, found: dg.nrows() });
            }
            derivatives.push(
                self.elements
                    .iter()
                    .map(|e| matrix::trace_product_re(e, dg))
                    .collect(),
            );
        }
        Ok(ProbabilityVector {
            values,
            derivatives,
            residual_index: self.residual_index,
        })
    }

    /// Probabilities only, without derivatives.
    pub fn probability_values(&self, g: &CorrelationMatrix) -> Result<Vec<f64>> {
        if g.dim() != self.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, found: g.dim() });
        }
        self.clamped_values(g)
    }

    fn clamped_values(&self, g: &CorrelationMatrix) -> Result<Vec<f64>> {
        let mut values = Vec::with_capacity(self.elements.len());
        for (j, e) in self.elements.iter().enumerate() {
            let p = matrix::trace_product_re(e, g.entries());
            if p < -NEGATIVE_PROBABILITY_TOL {
                return Err(Error::NegativeProbability { index: j, value: p });
            }
            values.push(p.max(0.0));
        }
        Ok(values)
    }

    /// Fast probability evaluation from source components, bypassing the
    /// correlation-matrix build: p_j = [v₁ᵀΠ_j v₁ + v₂ᵀΠ_j v₂] / (2 tr).
    pub fn expected_from_components(&self, comp: &SourceComponents) -> Vec<f64> {
        let scale = 0.5 / comp.trace;
        let v1 = comp.v1.as_slice();
        let v2 = comp.v2.as_slice();
        self.elements
            .iter()
            .map(|e| {
                let p = scale
                    * (matrix::real_quadratic_form(e, v1) + matrix::real_quadratic_form(e, v2));
                p.max(0.0)
            })
            .collect()
    }
}

/// Outcome probabilities with per-parameter derivatives; the residual bucket
/// is one of the entries.
#[derive(Debug, Clone)]
pub struct ProbabilityVector {
    values: Vec<f64>,
    /// derivatives[μ][j] = ∂p_j/∂θ_μ.
    derivatives: Vec<Vec<f64>>,
    residual_index: usize,
}

impl ProbabilityVector {
    pub fn from_parts(values: Vec<f64>, derivatives: Vec<Vec<f64>>, residual_index: usize) -> Result<Self> {
        if residual_index >= values.len() {
            return Err(Error::Validation("residual index out of range".into()));
        }
        for row in &derivatives {
            if row.len() != values.len() {
                return Err(Error::DimensionMismatch {
                    expected: values.len(),
                    found: row.len(),
                });
            }
        }
        Ok(ProbabilityVector { values, derivatives, residual_index })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn derivatives(&self) -> &[Vec<f64>] {
        &self.derivatives
    }

    pub fn parameter_count(&self) -> usize {
        self.derivatives.len()
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn residual_index(&self) -> usize {
        self.residual_index
    }

    pub fn residual_mass(&self) -> f64 {
        self.values[self.residual_index]
    }

    /// Sum over non-residual outcomes.
    pub fn signal_mass(&self) -> f64 {
        self.values
            .iter()
            .enumerate()
            .filter(|(j, _)| *j != self.residual_index)
            .map(|(_, p)| p)
            .sum()
    }

    /// Distribution invariants: nonnegative values summing to one, with
    /// derivative rows summing to zero.
    pub fn validate(&self) -> Result<()> {
        if self.values.iter().any(|p| *p < 0.0 || !p.is_finite()) {
            return Err(Error::Validation("probabilities must be finite and nonnegative".into()));
        }
        let total: f64 = self.values.iter().sum();
        if (total - 1.0).abs() > 1e-10 {
            return Err(Error::Validation(format!(
                "probabilities sum to {total:.15}, expected 1"
            )));
        }
        for row in &self.derivatives {
            let s: f64 = row.iter().sum();
            if s.abs() > 1e-8 {
                return Err(Error::Validation(format!(
                    "derivative row sums to {s:.3e}, expected 0"
                )));
            }
        }
        Ok(())
    }
}
