//! Information matrices and Cramér-Rao bounds under Poissonian detection.
//!
//! For independent Poisson counts with means N·p_j(θ), the Fisher information
//! collapses to
//!
//! ```text
//! J_{μν} = N Σ_j (1/p_j) (∂p_j/∂θ_μ)(∂p_j/∂θ_ν),
//! ```
//!
//! the per-photon Fisher information of the outcome distribution. Because
//! p_j = tr Π_j g, J is bounded by the Helstrom-Fisher matrix
//! K_{μν} = N Re tr(ℒ_μ ℒ_ν g), where ℒ_μ solves the symmetric Lyapunov
//! equation ∂g/∂θ_μ = (ℒ_μ g + g ℒ_μ)/2, and the bound is independent of the
//! measurement. Direct imaging additionally gets a continuum evaluation of
//! J₂₂ (the pixel-width → 0 limit) by adaptive quadrature.
//!
//! Zero-probability outcomes carry information only through their
//! derivatives; outcomes with vanishing probability but non-vanishing
//! derivative make the sum diverge at isolated parameter points, so they are
//! flagged and excluded instead of poisoning the matrix with infinities.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::matrix::{self, C64};
use crate::scene::{
    build_correlation, build_derivatives, CorrelationDerivatives, CorrelationMatrix,
    DerivativeMethod, ParameterSet, Scene,
};
use crate::schemes::{MeasurementScheme, ProbabilityVector};

/// Floors separating structural zeros from divergent contributions in the
/// Poissonian Fisher sum.
#[derive(Debug, Clone, Copy)]
pub struct FisherOptions {
    /// Outcomes with probability below this are excluded from the sum.
    pub probability_floor: f64,
    /// Excluded outcomes whose derivative exceeds this are flagged.
    pub derivative_floor: f64,
}

impl Default for FisherOptions {
    fn default() -> Self {
        FisherOptions { probability_floor: 1e-15, derivative_floor: 1e-12 }
    }
}

#[derive(Debug, Clone)]
pub struct ClassicalFisher {
    pub matrix: DMatrix<f64>,
    /// Outcomes excluded with a non-negligible derivative: the information
    /// may be unbounded or ill-conditioned at this parameter point.
    pub flagged_outcomes: usize,
    pub min_probability: f64,
}

/// Poissonian classical Fisher matrix from an outcome distribution.
pub fn classical_fisher(
    p: &ProbabilityVector,
    n_photons: f64,
    opts: &FisherOptions,
) -> Result<ClassicalFisher> {
    if !(n_photons.is_finite() && n_photons > 0.0) {
        return Err(Error::Validation(format!(
            "photon budget must be positive, got {n_photons}"
        )));
    }
    p.validate()?;
    let r = p.parameter_count();
    if r == 0 {
        return Err(Error::Validation("probability vector carries no derivatives".into()));
    }
    let mut m = DMatrix::<f64>::zeros(r, r);
    let mut flagged = 0usize;
    let mut min_probability = f64::INFINITY;
    for (j, &pj) in p.values().iter().enumerate() {
        min_probability = min_probability.min(pj);
        if pj < opts.probability_floor {
            let worst = p
                .derivatives()
                .iter()
                .map(|row| row[j].abs())
                .fold(0.0, f64::max);
            if worst > opts.derivative_floor {
                flagged += 1;
            }
            continue;
        }
        for mu in 0..r {
            let du = p.derivatives()[mu][j];
            for nu in mu..r {
                m[(mu, nu)] += du * p.derivatives()[nu][j] / pj;
            }
        }
    }
    for mu in 0..r {
        for nu in 0..mu {
            m[(mu, nu)] = m[(nu, mu)];
        }
    }
    m *= n_photons;
    Ok(ClassicalFisher { matrix: m, flagged_outcomes: flagged, min_probability })
}

/// Thresholds for the SLD eigen-decomposition solve.
#[derive(Debug, Clone, Copy)]
pub struct SldOptions {
    /// Eigenvalue pairs with λ_a + λ_b at or below this (relative to the
    /// trace) are outside the support and their SLD components are zeroed.
    pub eigenvalue_floor_rel: f64,
    /// Eigenvalues below this are numerical dust and treated as exact zeros.
    pub rank_floor: f64,
    /// Largest derivative component tolerated on a dropped eigenpair.
    pub support_tol: f64,
}

impl Default for SldOptions {
    fn default() -> Self {
        SldOptions { eigenvalue_floor_rel: 1e-12, rank_floor: 1e-14, support_tol: 1e-8 }
    }
}

/// A symmetric-logarithmic-derivative solution.
#[derive(Debug, Clone)]
pub struct Sld {
    pub matrix: DMatrix<C64>,
    /// Upper-triangle eigenpairs (a ≤ b) zeroed by the support convention.
    pub dropped_pairs: usize,
    /// max |ℒg + gℒ − 2∂g| over all entries.
    pub lyapunov_residual: f64,
}

/// Solve ∂g = (ℒg + gℒ)/2 for Hermitian ℒ in the eigenbasis of g:
/// ℒ_{ab} = 2 (∂g)_{ab} / (λ_a + λ_b) on the support, zero elsewhere.
pub fn sld_solve(g: &CorrelationMatrix, dg: &DMatrix<C64>, opts: &SldOptions) -> Result<Sld> {
    let dim = g.dim();
    if dg.nrows() != dim || dg.ncols() != dim {
        return Err(Error::DimensionMismatch { expected: dim, found: dg.nrows() });
    }
    if matrix::hermiticity_violation(dg) > 1e-10 {
        return Err(Error::Validation("derivative matrix is not Hermitian".into()));
    }
    let (raw_lambda, u) = matrix::hermitian_eigen(g.entries());
    let trace: f64 = raw_lambda.iter().sum();
    let floor = opts.eigenvalue_floor_rel * trace.max(f64::MIN_POSITIVE);
    let lambda: Vec<f64> = raw_lambda
        .iter()
        .map(|&l| if l < opts.rank_floor { 0.0 } else { l })
        .collect();
    let dg_eigen = u.adjoint() * dg * &u;
    let mut l_eigen = DMatrix::<C64>::zeros(dim, dim);
    let mut dropped = 0usize;
    for a in 0..dim {
        for b in a..dim {
            let denom = lambda[a] + lambda[b];
            if denom > floor {
                let val = dg_eigen[(a, b)] * C64::new(2.0 / denom, 0.0);
                l_eigen[(a, b)] = val;
                l_eigen[(b, a)] = val.conj();
            } else {
                let mag = dg_eigen[(a, b)].norm();
                if mag > opts.support_tol {
                    return Err(Error::SupportViolation { magnitude: mag });
                }
                dropped += 1;
            }
        }
    }
    let l = matrix::hermitize(&(&u * l_eigen * u.adjoint()));
    let residual = {
        let lg = &l * g.entries();
        let recomposed = &lg + lg.adjoint();
        matrix::max_abs(&(recomposed - dg * C64::new(2.0, 0.0)))
    };
    Ok(Sld { matrix: l, dropped_pairs: dropped, lyapunov_residual: residual })
}

#[derive(Debug, Clone)]
pub struct HelstromFisher {
    pub matrix: DMatrix<f64>,
    pub dropped_pairs: usize,
}

/// Helstrom-Fisher matrix K_{μν} = N Re tr(ℒ_μ ℒ_ν g), symmetrized.
pub fn helstrom_fisher(
    g: &CorrelationMatrix,
    dgs: &CorrelationDerivatives,
    n_photons: f64,
) -> Result<HelstromFisher> {
    if !(n_photons.is_finite() && n_photons > 0.0) {
        return Err(Error::Validation(format!(
            "photon budget must be positive, got {n_photons}"
        )));
    }
    let opts = SldOptions::default();
    let slds: Vec<Sld> = dgs
        .matrices()
        .iter()
        .map(|dg| sld_solve(g, dg, &opts))
        .collect::<Result<_>>()?;
    let r = slds.len();
    let mut k = DMatrix::<f64>::zeros(r, r);
    for nu in 0..r {
        let product = &slds[nu].matrix * g.entries();
        for mu in 0..r {
            k[(mu, nu)] = n_photons * matrix::trace_product_re(&slds[mu].matrix, &product);
        }
    }
    let k = (&k + k.transpose()) * 0.5;
    Ok(HelstromFisher {
        matrix: k,
        dropped_pairs: slds.iter().map(|s| s.dropped_pairs).sum(),
    })
}

/// Quadrature controls for the continuum direct-imaging information.
#[derive(Debug, Clone, Copy)]
pub struct ContinuumQuadrature {
    /// Integration half-width in PSF widths, measured beyond each source.
    pub half_width_sigmas: f64,
    pub rel_tol: f64,
    pub max_levels: u32,
    pub start_intervals: usize,
}

impl Default for ContinuumQuadrature {
    fn default() -> Self {
        ContinuumQuadrature {
            half_width_sigmas: 12.0,
            rel_tol: 1e-8,
            max_levels: 20,
            start_intervals: 64,
        }
    }
}

/// Continuum-limit direct-imaging Fisher information for the separation,
/// J₂₂ = N ∫ (∂Ī/∂θ₂)² / Ī dx with Ī the per-photon intensity.
pub fn continuum_direct_fisher(scene: &Scene, quad: &ContinuumQuadrature) -> Result<f64> {
    let sigma = scene.psf.width();
    let (x1, x2) = scene.positions();
    let half = quad.half_width_sigmas * sigma + 0.5 * scene.separation;
    let integrand = |x: f64| {
        let a1 = scene.psf.amplitude(x - x1);
        let a2 = scene.psf.amplitude(x - x2);
        let intensity = 0.5 * (a1 * a1 + a2 * a2);
        if intensity < 1e-300 {
            return 0.0;
        }
        let d1 = scene.psf.amplitude_derivative(x - x1);
        let d2 = scene.psf.amplitude_derivative(x - x2);
        // ∂Ī/∂θ₂ = [(ψ²)'(x−X₁) − (ψ²)'(x−X₂)]/4 with (ψ²)' = 2ψψ'.
        let slope = 0.5 * (a1 * d1 - a2 * d2);
        slope * slope / intensity
    };
    let value = crate::quad::adaptive_simpson(
        integrand,
        scene.centroid - half,
        scene.centroid + half,
        quad.rel_tol,
        quad.start_intervals,
        quad.max_levels,
    )?;
    Ok(scene.photon_budget() * value)
}

/// Invert an information matrix into a Cramér-Rao bound, refusing
/// ill-conditioned input (condition number ≥ 1e12).
pub fn crb(info: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = info.nrows();
    if info.ncols() != n || n == 0 {
        return Err(Error::DimensionMismatch { expected: n, found: info.ncols() });
    }
    let (vals, u) = matrix::symmetric_eigen_real(info);
    let max = vals.iter().cloned().fold(0.0f64, |a, b| a.max(b.abs()));
    let min = vals.iter().cloned().fold(f64::INFINITY, f64::min);
    if min <= 0.0 {
        return Err(Error::Singular { condition: f64::INFINITY });
    }
    let condition = max / min;
    if condition >= 1e12 {
        return Err(Error::Singular { condition });
    }
    let inv_diag = DMatrix::from_fn(n, n, |i, j| if i == j { 1.0 / vals[i] } else { 0.0 });
    Ok(&u * inv_diag * u.transpose())
}

/// Scalar bound 1/J for the separation-only problem.
pub fn crb_scalar(j: f64) -> Result<f64> {
    if !(j.is_finite() && j > 0.0) || j < 1e-300 {
        return Err(Error::Singular { condition: f64::INFINITY });
    }
    Ok(1.0 / j)
}

#[derive(Debug, Clone)]
pub struct InformationDiagnostics {
    pub dropped_pairs: usize,
    pub flagged_outcomes: usize,
    pub min_probability: f64,
    pub leakage: f64,
}

/// Classical and Helstrom-Fisher matrices for one scheme at one scene.
#[derive(Debug, Clone)]
pub struct InformationResult {
    pub classical: DMatrix<f64>,
    pub helstrom: DMatrix<f64>,
    pub crb_classical: Option<DMatrix<f64>>,
    pub crb_helstrom: Option<DMatrix<f64>>,
    pub diagnostics: InformationDiagnostics,
}

/// Build the correlation matrix and derivatives for `scene`, evaluate the
/// scheme's outcome distribution, and assemble J, K, and their bounds.
pub fn analyze_scheme(
    scene: &Scene,
    scheme: &MeasurementScheme,
    dim: usize,
    basis_center: f64,
    parameters: ParameterSet,
    method: DerivativeMethod,
) -> Result<InformationResult> {
    let g = build_correlation(scene, dim, basis_center)?;
    let dgs = build_derivatives(scene, dim, basis_center, parameters, method)?;
    let p = scheme.probabilities(&g, &dgs)?;
    let n_photons = scene.photon_budget();
    let classical = classical_fisher(&p, n_photons, &FisherOptions::default())?;
    let helstrom = helstrom_fisher(&g, &dgs, n_photons)?;
    let crb_classical = optional_crb(&classical.matrix)?;
    let crb_helstrom = optional_crb(&helstrom.matrix)?;
    Ok(InformationResult {
        classical: classical.matrix,
        helstrom: helstrom.matrix,
        crb_classical,
        crb_helstrom,
        diagnostics: InformationDiagnostics {
            dropped_pairs: helstrom.dropped_pairs,
            flagged_outcomes: classical.flagged_outcomes,
            min_probability: classical.min_probability,
            leakage: g.leakage(),
        },
    })
}

fn optional_crb(info: &DMatrix<f64>) -> Result<Option<DMatrix<f64>>> {
    match crb(info) {
        Ok(m) => Ok(Some(m)),
        Err(Error::Singular { .. }) => Ok(None),
        Err(e) => Err(e),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::psf::Psf;
    use crate::schemes::{MeasurementScheme, PixelGrid};
    use nalgebra::DVector;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    const DIM: usize = 40;

    fn scene(sigma: f64, separation: f64) -> Scene {
        Scene::new(Psf::gaussian(sigma).unwrap(), 0.0, separation, 1e-3, 10_000_000).unwrap()
    }

    fn spade_fisher(sigma: f64, separation: f64) -> f64 {
        let sc = scene(sigma, separation);
        let scheme = MeasurementScheme::hg_spade(DIM, 0.0, &sc, DIM, 0.0).unwrap();
        let g = build_correlation(&sc, DIM, 0.0).unwrap();
        let dg = build_derivatives(&sc, DIM, 0.0, ParameterSet::SeparationOnly, DerivativeMethod::Analytic)
            .unwrap();
        let p = scheme.probabilities(&g, &dg).unwrap();
        classical_fisher(&p, sc.photon_budget(), &FisherOptions::default())
            .unwrap()
            .matrix[(0, 0)]
    }

    #[test]
    fn binomial_family_fisher_information() {
        let n = 100.0;
        for theta in [0.2, 0.5, 0.7] {
            let p = ProbabilityVector::from_parts(vec![theta, 1.0 - theta], vec![vec![1.0, -1.0]], 1)
                .unwrap();
            let f = classical_fisher(&p, n, &FisherOptions::default()).unwrap();
            let want = n / (theta * (1.0 - theta));
            assert!((f.matrix[(0, 0)] - want).abs() < 1e-9 * want);
        }
        let p = ProbabilityVector::from_parts(vec![0.5, 0.5], vec![vec![1.0, -1.0]], 1).unwrap();
        let f = classical_fisher(&p, n, &FisherOptions::default()).unwrap();
        assert!((f.matrix[(0, 0)] - 4.0 * n).abs() < 1e-9 * n);
    }

    #[test]
    fn vanishing_probability_with_live_derivative_is_flagged() {
        let p = ProbabilityVector::from_parts(vec![1.0, 0.0], vec![vec![0.1, -0.1]], 1).unwrap();
        let f = classical_fisher(&p, 10.0, &FisherOptions::default()).unwrap();
        assert_eq!(f.flagged_outcomes, 1);
        assert!((f.matrix[(0, 0)] - 10.0 * 0.01).abs() < 1e-12);
    }

    #[test]
    fn full_spade_attains_the_constant_rate() {
        let sigma = 0.9;
        let n = 1e4;
        let want = n / (4.0 * sigma * sigma);
        for sep_over_sigma in [0.05, 0.3, 1.0, 3.0, 5.0] {
            let j = spade_fisher(sigma, sep_over_sigma * sigma);
            assert!(
                (j - want).abs() < 1e-6 * want,
                "θ₂ = {sep_over_sigma}σ: J = {j}, want {want}"
            );
        }
    }

    #[test]
    fn direct_imaging_collapses_at_small_separation() {
        let sigma = 1.0;
        let sc = scene(sigma, 0.01 * sigma);
        let grid = PixelGrid::uniform(-8.0 * sigma, 8.0 * sigma, 0.1 * sigma).unwrap();
        let scheme = MeasurementScheme::direct_imaging(&grid, &sc, DIM, 0.0).unwrap();
        let g = build_correlation(&sc, DIM, 0.0).unwrap();
        let dg = build_derivatives(&sc, DIM, 0.0, ParameterSet::SeparationOnly, DerivativeMethod::Analytic)
            .unwrap();
        let p = scheme.probabilities(&g, &dg).unwrap();
        let j = classical_fisher(&p, sc.photon_budget(), &FisherOptions::default())
            .unwrap()
            .matrix[(0, 0)];
        let ceiling = sc.photon_budget() / (4.0 * sigma * sigma);
        assert!(j / ceiling < 1e-3, "J/(N/4σ²) = {}", j / ceiling);
    }

    #[test]
    fn sld_for_maximally_mixed_state_is_rescaled_derivative() {
        let d = 5;
        let g = CorrelationMatrix::from_matrix(
            DMatrix::<C64>::identity(d, d) * C64::new(1.0 / d as f64, 0.0),
            0.0,
        )
        .unwrap();
        let mut h = DMatrix::<C64>::zeros(d, d);
        h[(0, 1)] = C64::new(0.3, 0.1);
        h[(1, 0)] = C64::new(0.3, -0.1);
        h[(0, 0)] = C64::new(0.2, 0.0);
        h[(1, 1)] = C64::new(-0.2, 0.0);
        let sld = sld_solve(&g, &h, &SldOptions::default()).unwrap();
        let want = &h * C64::new(d as f64, 0.0);
        assert!(matrix::max_abs(&(&sld.matrix - &want)) < 1e-10);
        assert_eq!(sld.dropped_pairs, 0);
    }

    #[test]
    fn sld_of_pure_state_with_zero_derivative_is_zero() {
        let d = 4;
        let mut gm = DMatrix::<C64>::zeros(d, d);
        gm[(0, 0)] = C64::new(1.0, 0.0);
        let g = CorrelationMatrix::from_matrix(gm, 0.0).unwrap();
        let sld = sld_solve(&g, &DMatrix::<C64>::zeros(d, d), &SldOptions::default()).unwrap();
        assert!(matrix::max_abs(&sld.matrix) == 0.0);
        assert!(sld.dropped_pairs > 0);
    }

    #[test]
    fn sld_satisfies_lyapunov_identity_on_random_rank_two_state() {
        let d = 6;
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut rand_vec = |scale: f64| {
            DVector::from_fn(d, |_, _| {
                C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)) * C64::new(scale, 0.0)
            })
        };
        let w1 = rand_vec(1.0);
        let w2 = rand_vec(0.7);
        let dw1 = rand_vec(0.4);
        let dw2 = rand_vec(0.5);
        let state = |t: f64| -> DMatrix<C64> {
            let a = &w1 + &dw1 * C64::new(t, 0.0);
            let b = &w2 + &dw2 * C64::new(t, 0.0);
            let mut m = DMatrix::<C64>::zeros(d, d);
            m.gerc(C64::new(1.0, 0.0), &a, &a, C64::new(1.0, 0.0));
            m.gerc(C64::new(1.0, 0.0), &b, &b, C64::new(1.0, 0.0));
            let tr: f64 = (0..d).map(|i| m[(i, i)].re).sum();
            m * C64::new(1.0 / tr, 0.0)
        };
        let g = CorrelationMatrix::from_matrix(state(0.0), 0.0).unwrap();
        let h = 1e-5;
        let dg = (state(h) - state(-h)) * C64::new(0.5 / h, 0.0);
        let dg = matrix::hermitize(&dg);
        let sld = sld_solve(&g, &dg, &SldOptions::default()).unwrap();
        assert!(
            sld.lyapunov_residual < 1e-8,
            "residual {:e}",
            sld.lyapunov_residual
        );
        assert!(sld.dropped_pairs > 0);
    }

    #[test]
    fn sld_rejects_derivative_leaving_the_support() {
        let d = 4;
        let mut gm = DMatrix::<C64>::zeros(d, d);
        gm[(0, 0)] = C64::new(1.0, 0.0);
        let g = CorrelationMatrix::from_matrix(gm, 0.0).unwrap();
        // Derivative living entirely on the kernel block.
        let mut dg = DMatrix::<C64>::zeros(d, d);
        dg[(2, 3)] = C64::new(0.1, 0.0);
        dg[(3, 2)] = C64::new(0.1, 0.0);
        match sld_solve(&g, &dg, &SldOptions::default()) {
            Err(Error::SupportViolation { magnitude }) => assert!(magnitude > 0.05),
            other => panic!("expected support violation, got {other:?}"),
        }
    }

    #[test]
    fn helstrom_rate_is_constant_in_separation() {
        let sigma = 1.2;
        let n = 1e4;
        let want = n / (4.0 * sigma * sigma);
        let mut values = Vec::new();
        for k in 0..20 {
            let frac = k as f64 / 19.0;
            let sep = sigma * (0.01 * (500.0f64).powf(frac)); // log grid 0.01σ..5σ
            let sc = scene(sigma, sep);
            let g = build_correlation(&sc, DIM, 0.0).unwrap();
            let dg =
                build_derivatives(&sc, DIM, 0.0, ParameterSet::SeparationOnly, DerivativeMethod::Analytic)
                    .unwrap();
            let k22 = helstrom_fisher(&g, &dg, n).unwrap().matrix[(0, 0)];
            assert!(
                (k22 - want).abs() < 1e-6 * want,
                "θ₂ = {sep}: K = {k22}, want {want}"
            );
            values.push(k22);
        }
        let mean = values.iter().sum::<f64>() / values.len() as f64;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / values.len() as f64;
        assert!(var.sqrt() < 1e-6 * mean, "stddev {} vs mean {mean}", var.sqrt());
    }

    #[test]
    fn helstrom_matches_dense_lyapunov_solve() {
        // 4×4 full-rank g: solve the 16-unknown linear system
        // (gᵀ⊗I + I⊗g) vec(L) = 2 vec(dg) and compare K entries.
        let d = 4;
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let u = matrix::random_unitary(d, &mut rng);
        let lambda = [0.4, 0.3, 0.2, 0.1];
        let mut gm = DMatrix::<C64>::zeros(d, d);
        for (k, &l) in lambda.iter().enumerate() {
            let col: DVector<C64> = u.column(k).into();
            gm.gerc(C64::new(l, 0.0), &col, &col, C64::new(1.0, 0.0));
        }
        let gm = matrix::hermitize(&gm);
        let g = CorrelationMatrix::from_matrix(gm.clone(), 0.0).unwrap();

        let mut random_traceless = || {
            let raw = DMatrix::from_fn(d, d, |_, _| {
                C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
            });
            let mut h = matrix::hermitize(&raw);
            let tr = matrix::trace_re(&h) / d as f64;
            for i in 0..d {
                h[(i, i)] -= C64::new(tr, 0.0);
            }
            h
        };
        let dg1 = random_traceless();
        let dg2 = random_traceless();

        let dense_sld = |dg: &DMatrix<C64>| -> DMatrix<C64> {
            let n2 = d * d;
            let mut m = DMatrix::<C64>::zeros(n2, n2);
            let id = DMatrix::<C64>::identity(d, d);
            let gt = gm.transpose();
            for i in 0..d {
                for j in 0..d {
                    for k in 0..d {
                        for l in 0..d {
                            // vec(L g) = (gᵀ ⊗ I) vec(L); vec(g L) = (I ⊗ g) vec(L)
                            m[(j * d + i, l * d + k)] +=
                                gt[(j, l)] * id[(i, k)] + id[(j, l)] * gm[(i, k)];
                        }
                    }
                }
            }
            let rhs = DMatrix::from_fn(n2, 1, |idx, _| dg[(idx % d, idx / d)] * C64::new(2.0, 0.0));
            let sol = m.lu().solve(&rhs).expect("dense solve");
            DMatrix::from_fn(d, d, |i, j| sol[(j * d + i, 0)])
        };

        let n_photons = 250.0;
        let dgs = CorrelationDerivatives::from_matrices(
            vec![dg1.clone(), dg2.clone()],
            ParameterSet::CentroidAndSeparation,
        )
        .unwrap();
        let k_fast = helstrom_fisher(&g, &dgs, n_photons).unwrap().matrix;

        let l1 = dense_sld(&dg1);
        let l2 = dense_sld(&dg2);
        let slow_entry = |a: &DMatrix<C64>, b: &DMatrix<C64>| {
            n_photons * ((a * b * &gm).trace().re)
        };
        let k_slow = DMatrix::from_fn(2, 2, |mu, nu| {
            let (a, b) = match (mu, nu) {
                (0, 0) => (&l1, &l1),
                (0, 1) => (&l1, &l2),
                (1, 0) => (&l2, &l1),
                _ => (&l2, &l2),
            };
            slow_entry(a, b)
        });
        let k_slow = (&k_slow + k_slow.transpose()) * 0.5;
        for i in 0..2 {
            for j in 0..2 {
                assert!(
                    (k_fast[(i, j)] - k_slow[(i, j)]).abs() < 1e-8 * k_slow[(0, 0)].abs().max(1.0),
                    "K[{i},{j}]: {} vs {}",
                    k_fast[(i, j)],
                    k_slow[(i, j)]
                );
            }
        }
    }

    #[test]
    fn continuum_fisher_reaches_the_ceiling_for_separated_sources() {
        let sigma = 1.0;
        let sc = scene(sigma, 8.0 * sigma);
        let j = continuum_direct_fisher(&sc, &ContinuumQuadrature::default()).unwrap();
        let want = sc.photon_budget() / (4.0 * sigma * sigma);
        assert!((j - want).abs() < 1e-3 * want, "J = {j}, want {want}");
    }

    #[test]
    fn continuum_fisher_vanishes_quadratically_at_small_separation() {
        let sigma = 1.0;
        let ceiling = 1e4 / (4.0 * sigma * sigma);
        let j_at = |sep: f64| {
            continuum_direct_fisher(&scene(sigma, sep), &ContinuumQuadrature::default()).unwrap()
        };
        let j1 = j_at(0.01 * sigma);
        assert!(j1 < 1e-3 * ceiling);
        // J ∝ θ₂²: doubling the separation quadruples the information.
        let j2 = j_at(0.02 * sigma);
        let ratio = j2 / j1;
        assert!((ratio - 4.0).abs() < 0.05, "ratio {ratio}");
    }

    #[test]
    fn pixelated_fisher_converges_to_continuum() {
        let sigma = 1.0;
        let sc = scene(sigma, 2.0 * sigma);
        let grid = PixelGrid::uniform(-8.0 * sigma, 8.0 * sigma, 0.1 * sigma).unwrap();
        let scheme = MeasurementScheme::direct_imaging(&grid, &sc, DIM, 0.0).unwrap();
        let g = build_correlation(&sc, DIM, 0.0).unwrap();
        let dg = build_derivatives(&sc, DIM, 0.0, ParameterSet::SeparationOnly, DerivativeMethod::Analytic)
            .unwrap();
        let p = scheme.probabilities(&g, &dg).unwrap();
        let j_pix = classical_fisher(&p, sc.photon_budget(), &FisherOptions::default())
            .unwrap()
            .matrix[(0, 0)];
        let j_cont = continuum_direct_fisher(&sc, &ContinuumQuadrature::default()).unwrap();
        assert!(
            (j_pix - j_cont).abs() < 1e-3 * j_cont,
            "pixelated {j_pix} vs continuum {j_cont}"
        );
    }

    #[test]
    fn crb_inverts_where_possible() {
        let j = DMatrix::from_row_slice(1, 1, &[400.0]);
        let b = crb(&j).unwrap();
        assert!((b[(0, 0)] - 1.0 / 400.0).abs() < 1e-15);

        let d = DMatrix::from_row_slice(2, 2, &[5.0, 0.0, 0.0, 0.25]);
        let b = crb(&d).unwrap();
        assert!((b[(0, 0)] - 0.2).abs() < 1e-12);
        assert!((b[(1, 1)] - 4.0).abs() < 1e-12);

        assert!((crb_scalar(4.0 * 100.0).unwrap() - 1.0 / 400.0).abs() < 1e-18);
        assert!(crb_scalar(0.0).is_err());
        assert!(matches!(
            crb(&DMatrix::from_row_slice(1, 1, &[0.0])),
            Err(Error::Singular { .. })
        ));
    }

    #[test]
    fn analyze_scheme_bundles_dominance() {
        let sigma = 1.0;
        let sc = scene(sigma, 0.7 * sigma);
        let scheme = MeasurementScheme::binary_spade(0.0, &sc, DIM, 0.0).unwrap();
        let result = analyze_scheme(
            &sc,
            &scheme,
            DIM,
            0.0,
            ParameterSet::SeparationOnly,
            DerivativeMethod::Analytic,
        )
        .unwrap();
        let (j, k) = (result.classical[(0, 0)], result.helstrom[(0, 0)]);
        assert!(j <= k * (1.0 + 1e-8), "J = {j} exceeds K = {k}");
        assert!(result.crb_classical.is_some());
        assert!(result.crb_helstrom.is_some());
        assert!(result.diagnostics.leakage < 1e-9);
    }
}
