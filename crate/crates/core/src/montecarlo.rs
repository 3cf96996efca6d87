//! Poissonian photodetection Monte Carlo and maximum-likelihood estimation.
//!
//! # Reproducibility contract
//!
//! Campaigns are deterministic for a fixed seed, independent of thread
//! count. Each trial draws from its own counter-based stream: the 256-bit
//! ChaCha8 key of trial t is four successive SplitMix64 outputs of the state
//! `seed XOR (t · 0xD1B54A32D192ED03)`. Trials therefore never share state
//! and may run in any order; aggregation walks records in trial-index order.
//!
//! # Poisson sampler
//!
//! Counts are drawn with a pinned two-regime sampler so that outputs are
//! reproducible across runs of this implementation:
//!
//! - mean < 10: sequential inversion — walk the CDF multiplying the pmf
//!   recurrence p_{k+1} = p_k · μ/(k+1) until it passes a single uniform.
//! - mean ≥ 10: transformed-rejection (PTRS, Hörmann 1993) with the usual
//!   squeeze, one uniform pair per attempt, and a Stirling-series
//!   log-factorial in the acceptance test.
//!
//! Bitwise identity is guaranteed within one build of this crate; across
//! platforms the sampler is distribution-identical but the last bit may
//! differ with the platform's `exp`/`ln`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::information::{classical_fisher, crb_scalar, helstrom_fisher, FisherOptions};
use crate::scene::{
    build_correlation, build_derivatives, source_components, DerivativeMethod, ParameterSet, Scene,
};
use crate::schemes::{MeasurementScheme, ProbabilityVector};

/// Default absolute optimizer tolerance, in units of the PSF width.
pub const DEFAULT_MLE_TOL_SIGMA: f64 = 1e-6;

const PTRS_SWITCH_MEAN: f64 = 10.0;

// ---------------------------------------------------------------------------
// Poisson sampling
// ---------------------------------------------------------------------------

/// Draw one Poisson variate with the documented inversion/PTRS split.
pub fn sample_poisson<R: Rng + ?Sized>(rng: &mut R, mean: f64) -> u64 {
    assert!(mean.is_finite() && mean >= 0.0, "Poisson mean must be nonnegative");
    if mean == 0.0 {
        0
    } else if mean < PTRS_SWITCH_MEAN {
        poisson_inversion(rng, mean)
    } else {
        poisson_ptrs(rng, mean)
    }
}

fn poisson_inversion<R: Rng + ?Sized>(rng: &mut R, mean: f64) -> u64 {
    let u: f64 = rng.gen();
    let mut k = 0u64;
    let mut pmf = (-mean).exp();
    let mut cdf = pmf;
    while u > cdf {
        k += 1;
        pmf *= mean / k as f64;
        cdf += pmf;
        if pmf < f64::MIN_POSITIVE {
            break;
        }
    }
    k
}

fn poisson_ptrs<R: Rng + ?Sized>(rng: &mut R, mean: f64) -> u64 {
    let b = 0.931 + 2.53 * mean.sqrt();
    let a = -0.059 + 0.02483 * b;
    let inv_alpha = 1.1239 + 1.1328 / (b - 3.4);
    let v_r = 0.9277 - 3.6224 / (b - 2.0);
    let ln_mean = mean.ln();
    loop {
        let u: f64 = rng.gen::<f64>() - 0.5;
        let v: f64 = rng.gen();
        let us = 0.5 - u.abs();
        let k = ((2.0 * a / us + b) * u + mean + 0.43).floor();
        if us >= 0.07 && v <= v_r {
            return k as u64;
        }
        if k < 0.0 || (us < 0.013 && v > us) {
            continue;
        }
        let accept =
            v.ln() + inv_alpha.ln() - (a / (us * us) + b).ln() <= k * ln_mean - mean - ln_factorial(k as u64);
        if accept {
            return k as u64;
        }
    }
}

/// ln(k!) — cumulative table below 128, Stirling series above.
fn ln_factorial(k: u64) -> f64 {
    const TABLE_LEN: usize = 128;
    static TABLE: std::sync::OnceLock<[f64; TABLE_LEN]> = std::sync::OnceLock::new();
    let table = TABLE.get_or_init(|| {
        let mut t = [0.0; TABLE_LEN];
        for i in 2..TABLE_LEN {
            t[i] = t[i - 1] + (i as f64).ln();
        }
        t
    });
    if (k as usize) < TABLE_LEN {
        return table[k as usize];
    }
    let x = k as f64;
    let inv = 1.0 / x;
    let inv2 = inv * inv;
    (x + 0.5) * x.ln() - x + 0.5 * (2.0 * std::f64::consts::PI).ln()
        + inv * (1.0 / 12.0 - inv2 * (1.0 / 360.0 - inv2 / 1260.0))
}

/// Independent Poisson counts with means N·p_j, residual bucket included.
pub fn sample_counts<R: Rng + ?Sized>(
    p: &ProbabilityVector,
    n_photons: f64,
    rng: &mut R,
) -> Vec<u64> {
    p.values()
        .iter()
        .map(|&pj| sample_poisson(rng, n_photons * pj))
        .collect()
}

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E3779B97F4A7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D049BB133111EB);
    z ^ (z >> 31)
}

/// Counter-based per-trial RNG derivation; see the module docs.
pub fn trial_rng(seed: u64, trial: u64) -> ChaCha8Rng {
    let mut state = seed ^ trial.wrapping_mul(0xD1B54A32D192ED03);
    let mut key = [0u8; 32];
    for chunk in key.chunks_exact_mut(8) {
        chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
    }
    ChaCha8Rng::from_seed(key)
}

// ---------------------------------------------------------------------------
// Separation likelihood model
// ---------------------------------------------------------------------------

/// Outcome probabilities of a fixed scheme as a function of the separation,
/// with everything else frozen from a template scene.
pub struct SeparationModel<'a> {
    scheme: &'a MeasurementScheme,
    template: Scene,
    dim: usize,
    basis_center: f64,
}

impl<'a> SeparationModel<'a> {
    pub fn new(
        scheme: &'a MeasurementScheme,
        scene: &Scene,
        dim: usize,
        basis_center: f64,
    ) -> Result<Self> {
        if scheme.dim() != dim {
            return Err(Error::DimensionMismatch { expected: scheme.dim(), found: dim });
        }
        // Fail here rather than in the optimizer loop.
        source_components(scene, dim, basis_center)?;
        Ok(SeparationModel { scheme, template: scene.clone(), dim, basis_center })
    }

    pub fn scheme(&self) -> &MeasurementScheme {
        self.scheme
    }

    pub fn photon_budget(&self) -> f64 {
        self.template.photon_budget()
    }

    /// p_j(θ₂) for all outcomes, residual included.
    pub fn probabilities_at(&self, separation: f64) -> Vec<f64> {
        let moved = self.template.with_separation(separation);
        let comp = source_components(&moved, self.dim, self.basis_center)
            .expect("dimension validated at construction");
        self.scheme.expected_from_components(&comp)
    }

    /// Poisson log-likelihood Σ_j [n_j ln n̄_j(θ₂) − n̄_j(θ₂)], up to the
    /// count-factorial constant. Counts may be real-valued.
    pub fn log_likelihood(&self, counts: &[f64], separation: f64) -> f64 {
        let p = self.probabilities_at(separation);
        let n = self.photon_budget();
        let mut acc = 0.0;
        for (&nj, &pj) in counts.iter().zip(p.iter()) {
            let mean = n * pj;
            if nj > 0.0 {
                if mean <= 0.0 {
                    return f64::NEG_INFINITY;
                }
                acc += nj * mean.ln() - mean;
            } else {
                acc -= mean;
            }
        }
        acc
    }
}

// ---------------------------------------------------------------------------
// Maximum-likelihood estimation
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy)]
pub struct MleOptions {
    /// Search interval [θ₂min, θ₂max], θ₂min ≥ 0.
    pub bounds: (f64, f64),
    /// Absolute tolerance on the estimate.
    pub tolerance: f64,
    pub max_iterations: u32,
}

impl MleOptions {
    pub fn new(bounds: (f64, f64), tolerance: f64) -> Self {
        MleOptions { bounds, tolerance, max_iterations: 200 }
    }

    fn validate(&self) -> Result<()> {
        let (lo, hi) = self.bounds;
        if !(lo.is_finite() && hi.is_finite() && lo >= 0.0 && hi > lo) {
            return Err(Error::Validation(format!(
                "estimator bounds must satisfy 0 ≤ lo < hi, got [{lo}, {hi}]"
            )));
        }
        if !(self.tolerance.is_finite() && self.tolerance > 0.0) {
            return Err(Error::Validation("optimizer tolerance must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy)]
pub struct MleResult {
    pub estimate: f64,
    /// False when the maximum sits at a search bound (including the
    /// all-zero-counts degeneracy pinned to θ₂min).
    pub converged: bool,
    pub log_likelihood: f64,
}

/// Maximize the Poisson log-likelihood of `counts` over the separation by
/// golden-section search with parabolic refinement (Brent's method).
pub fn mle_separation(
    counts: &[f64],
    model: &SeparationModel,
    opts: &MleOptions,
) -> Result<MleResult> {
    opts.validate()?;
    if counts.len() != model.scheme.len() {
        return Err(Error::DimensionMismatch {
            expected: model.scheme.len(),
            found: counts.len(),
        });
    }
    if counts.iter().any(|c| !c.is_finite() || *c < 0.0) {
        return Err(Error::Validation("counts must be finite and nonnegative".into()));
    }
    let (lo, hi) = opts.bounds;
    if counts.iter().all(|&c| c == 0.0) {
        // Flat likelihood ℓ = −N: pin to the lower bound and flag.
        return Ok(MleResult {
            estimate: lo,
            converged: false,
            log_likelihood: model.log_likelihood(counts, lo),
        });
    }
    let objective = |theta: f64| model.log_likelihood(counts, theta);
    let (x, fx) = brent_maximize(&objective, lo, hi, opts.tolerance, opts.max_iterations);
    let margin = 2.0 * opts.tolerance;
    if x - lo <= margin {
        let f_lo = objective(lo);
        if f_lo >= fx {
            return Ok(MleResult { estimate: lo, converged: false, log_likelihood: f_lo });
        }
    } else if hi - x <= margin {
        let f_hi = objective(hi);
        if f_hi >= fx {
            return Ok(MleResult { estimate: hi, converged: false, log_likelihood: f_hi });
        }
    }
    Ok(MleResult { estimate: x, converged: true, log_likelihood: fx })
}

/// Brent's derivative-free scalar maximizer on [lo, hi].
fn brent_maximize<F: Fn(f64) -> f64>(
    f: &F,
    lo: f64,
    hi: f64,
    xtol: f64,
    max_iterations: u32,
) -> (f64, f64) {
    const GOLDEN: f64 = 0.381_966_011_250_105_1; // (3 − √5)/2
    let g = |x: f64| -f(x);
    let (mut a, mut b) = (lo, hi);
    let mut x = a + GOLDEN * (b - a);
    let (mut w, mut v) = (x, x);
    let mut fx = g(x);
    let (mut fw, mut fv) = (fx, fx);
    let mut d: f64 = 0.0;
    let mut e: f64 = 0.0;
    let tol1 = 0.5 * xtol;
    for _ in 0..max_iterations {
        let m = 0.5 * (a + b);
        let tol2 = 2.0 * tol1;
        if (x - m).abs() <= tol2 - 0.5 * (b - a) {
            break;
        }
        let mut take_golden = true;
        if e.abs() > tol1 {
            // Parabola through (v, fv), (w, fw), (x, fx).
            let r = (x - w) * (fx - fv);
            let mut q = (x - v) * (fx - fw);
            let mut p = (x - v) * q - (x - w) * r;
            q = 2.0 * (q - r);
            if q > 0.0 {
                p = -p;
            }
            q = q.abs();
            let e_prev = e;
            e = d;
            if p.abs() < (0.5 * q * e_prev).abs() && p > q * (a - x) && p < q * (b - x) && q != 0.0 {
                d = p / q;
                let u = x + d;
                if u - a < tol2 || b - u < tol2 {
                    d = if m > x { tol1 } else { -tol1 };
                }
                take_golden = false;
            }
        }
        if take_golden {
            e = if x < m { b - x } else { a - x };
            d = GOLDEN * e;
        }
        let u = if d.abs() >= tol1 {
            x + d
        } else if d > 0.0 {
            x + tol1
        } else {
            x - tol1
        };
        let fu = g(u);
        if fu <= fx {
            if u < x {
                b = x;
            } else {
                a = x;
            }
            v = w;
            fv = fw;
            w = x;
            fw = fx;
            x = u;
            fx = fu;
        } else {
            if u < x {
                a = u;
            } else {
                b = u;
            }
            if fu <= fw || w == x {
                v = w;
                fv = fw;
                w = u;
                fw = fu;
            } else if fu <= fv || v == x || v == w {
                v = u;
                fv = fu;
            }
        }
    }
    (x, -fx)
}

// ---------------------------------------------------------------------------
// Campaigns
// ---------------------------------------------------------------------------

/// A reproducible estimation campaign: sampling, estimation, and bound
/// comparison at one true scene.
pub struct TrialConfig<'a> {
    pub scheme: &'a MeasurementScheme,
    pub scene: &'a Scene,
    pub dim: usize,
    pub basis_center: f64,
    pub trials: u64,
    pub seed: u64,
    pub bounds: (f64, f64),
    pub tolerance: f64,
}

#[derive(Debug, Clone)]
pub struct TrialRecord {
    pub counts: Vec<u64>,
    pub estimate: f64,
    pub converged: bool,
    pub log_likelihood: f64,
}

#[derive(Debug, Clone)]
pub struct ErrorReport {
    pub trials: u64,
    pub mse: f64,
    pub bias: f64,
    /// Batch-means standard error of the MSE estimate (10 batches).
    pub mse_standard_error: f64,
    /// 1/J₂₂ at the true scene, when J₂₂ is invertible.
    pub crb_classical: Option<f64>,
    /// 1/K₂₂ at the true scene.
    pub crb_helstrom: Option<f64>,
    pub mse_over_crb: Option<f64>,
    pub convergence_rate: f64,
    /// Set when more than 20% of trials failed to converge.
    pub unreliable: bool,
}

pub struct CampaignResult {
    pub report: ErrorReport,
    pub records: Vec<TrialRecord>,
}

/// Run `trials` independent trials with derived per-trial seeds; the result
/// is identical for any thread count.
pub fn run_campaign(config: &TrialConfig) -> Result<CampaignResult> {
    if config.trials == 0 {
        return Err(Error::Validation("campaign needs at least one trial".into()));
    }
    let true_sep = config.scene.separation;
    let (lo, hi) = config.bounds;
    if !(lo <= true_sep && true_sep <= hi) {
        return Err(Error::Validation(format!(
            "estimator bounds [{lo}, {hi}] do not bracket the true separation {true_sep}"
        )));
    }
    let opts = MleOptions::new(config.bounds, config.tolerance);
    opts.validate()?;
    let model = SeparationModel::new(config.scheme, config.scene, config.dim, config.basis_center)?;
    let p_true = model.probabilities_at(true_sep);
    let n_photons = config.scene.photon_budget();

    let records: Vec<TrialRecord> = (0..config.trials)
        .into_par_iter()
        .map(|trial| {
            let mut rng = trial_rng(config.seed, trial);
            let counts: Vec<u64> = p_true
                .iter()
                .map(|&pj| sample_poisson(&mut rng, n_photons * pj))
                .collect();
            let counts_f: Vec<f64> = counts.iter().map(|&c| c as f64).collect();
            let mle = mle_separation(&counts_f, &model, &opts)
                .expect("counts and bounds validated above");
            TrialRecord {
                counts,
                estimate: mle.estimate,
                converged: mle.converged,
                log_likelihood: mle.log_likelihood,
            }
        })
        .collect();

    // Aggregate strictly in trial-index order.
    let t = config.trials as f64;
    let mut mse = 0.0;
    let mut bias = 0.0;
    let mut converged = 0u64;
    for r in &records {
        let err = r.estimate - true_sep;
        mse += err * err;
        bias += err;
        converged += r.converged as u64;
    }
    mse /= t;
    bias /= t;
    let convergence_rate = converged as f64 / t;

    let batches = (config.trials.min(10)).max(1) as usize;
    let mut batch_means = vec![0.0f64; batches];
    let mut batch_counts = vec![0u64; batches];
    for (i, r) in records.iter().enumerate() {
        let b = i * batches / records.len();
        let err = r.estimate - true_sep;
        batch_means[b] += err * err;
        batch_counts[b] += 1;
    }
    for (m, c) in batch_means.iter_mut().zip(&batch_counts) {
        *m /= (*c).max(1) as f64;
    }
    let batch_mean = batch_means.iter().sum::<f64>() / batches as f64;
    let batch_var = batch_means
        .iter()
        .map(|m| (m - batch_mean).powi(2))
        .sum::<f64>()
        / (batches.saturating_sub(1)).max(1) as f64;
    let mse_standard_error = (batch_var / batches as f64).sqrt();

    let (crb_classical, crb_helstrom) = campaign_bounds(config)?;
    let mse_over_crb = crb_classical.map(|c| mse / c);
    let unreliable = 1.0 - convergence_rate > 0.2;

    Ok(CampaignResult {
        report: ErrorReport {
            trials: config.trials,
            mse,
            bias,
            mse_standard_error,
            crb_classical,
            crb_helstrom,
            mse_over_crb,
            convergence_rate,
            unreliable,
        },
        records,
    })
}

fn campaign_bounds(config: &TrialConfig) -> Result<(Option<f64>, Option<f64>)> {
    let method = if config.scene.psf.is_gaussian() {
        DerivativeMethod::Analytic
    } else {
        DerivativeMethod::CentralDifference {
            step: crate::scene::DEFAULT_FD_STEP_SIGMA * config.scene.psf.width(),
        }
    };
    let g = build_correlation(config.scene, config.dim, config.basis_center)?;
    let dgs = build_derivatives(
        config.scene,
        config.dim,
        config.basis_center,
        ParameterSet::SeparationOnly,
        method,
    )?;
    let n = config.scene.photon_budget();
    let p = config.scheme.probabilities(&g, &dgs)?;
    let j = classical_fisher(&p, n, &FisherOptions::default())?.matrix[(0, 0)];
    let k = helstrom_fisher(&g, &dgs, n)?.matrix[(0, 0)];
    Ok((crb_scalar(j).ok(), crb_scalar(k).ok()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::psf::Psf;

    fn scene(sigma: f64, separation: f64, n_photons: f64) -> Scene {
        Scene::new(
            Psf::gaussian(sigma).unwrap(),
            0.0,
            separation,
            1e-3,
            (n_photons / 1e-3) as u64,
        )
        .unwrap()
    }

    #[test]
    fn poisson_zero_mean_always_zero() {
        let mut rng = trial_rng(1, 0);
        for _ in 0..100 {
            assert_eq!(sample_poisson(&mut rng, 0.0), 0);
        }
    }

    #[test]
    fn poisson_moments_match_in_both_regimes() {
        // Inversion regime (mean 4) and PTRS regime (mean 5000).
        for (mean, trials, var_tol) in [(4.0, 200_000u64, 0.05), (5000.0, 40_000u64, 0.05)] {
            let mut rng = trial_rng(42, mean as u64);
            let mut sum = 0.0f64;
            let mut sumsq = 0.0f64;
            for _ in 0..trials {
                let k = sample_poisson(&mut rng, mean) as f64;
                sum += k;
                sumsq += k * k;
            }
            let t = trials as f64;
            let m = sum / t;
            let var = sumsq / t - m * m;
            let se_mean = (mean / t).sqrt();
            assert!(
                (m - mean).abs() < 3.0 * se_mean,
                "mean {m} vs {mean} (se {se_mean})"
            );
            assert!(
                (var - mean).abs() < var_tol * mean,
                "variance {var} vs {mean}"
            );
        }
    }

    #[test]
    fn ln_factorial_matches_direct_sum() {
        let direct: f64 = (2..=200u64).map(|k| (k as f64).ln()).sum();
        assert!((ln_factorial(200) - direct).abs() < 1e-9);
        assert_eq!(ln_factorial(0), 0.0);
        assert_eq!(ln_factorial(1), 0.0);
        assert!((ln_factorial(5) - 120.0f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn total_counts_have_the_right_mean() {
        let sigma = 1.0;
        let sc = scene(sigma, sigma, 100.0);
        let scheme = MeasurementScheme::hg_spade(10, 0.0, &sc, 30, 0.0).unwrap();
        let model = SeparationModel::new(&scheme, &sc, 30, 0.0).unwrap();
        let p = model.probabilities_at(sigma);
        let pv = ProbabilityVector::from_parts(p, vec![], scheme.residual_index()).unwrap();
        let trials = 20_000;
        let mut total = 0u64;
        for t in 0..trials {
            let mut rng = trial_rng(7, t);
            total += sample_counts(&pv, 100.0, &mut rng).iter().sum::<u64>();
        }
        let mean = total as f64 / trials as f64;
        let se = (100.0 / trials as f64).sqrt();
        assert!((mean - 100.0).abs() < 3.0 * se, "mean {mean}");
    }

    #[test]
    fn per_trial_streams_are_deterministic_and_distinct() {
        let a1: Vec<u64> = {
            let mut rng = trial_rng(9, 4);
            (0..8).map(|_| rng.gen()).collect()
        };
        let a2: Vec<u64> = {
            let mut rng = trial_rng(9, 4);
            (0..8).map(|_| rng.gen()).collect()
        };
        assert_eq!(a1, a2);
        let b: Vec<u64> = {
            let mut rng = trial_rng(9, 5);
            (0..8).map(|_| rng.gen()).collect()
        };
        assert_ne!(a1, b);
    }

    #[test]
    fn brent_finds_quadratic_maximum() {
        let (x, fx) = brent_maximize(&|x: f64| -(x - 2.0).powi(2) + 3.0, 0.0, 5.0, 1e-9, 200);
        assert!((x - 2.0).abs() < 1e-7);
        assert!((fx - 3.0).abs() < 1e-12);
    }

    #[test]
    fn brent_handles_boundary_maximum() {
        // Monotone increasing: maximum at the upper bound.
        let (x, _) = brent_maximize(&|x: f64| x, 0.0, 1.0, 1e-8, 200);
        assert!(1.0 - x < 1e-6);
    }

    #[test]
    fn noiseless_counts_recover_the_truth() {
        let sigma = 1.0;
        let n = 1e4;
        let true_sep = 1.3 * sigma;
        let sc = scene(sigma, true_sep, n);
        let scheme = MeasurementScheme::hg_spade(40, 0.0, &sc, 40, 0.0).unwrap();
        let model = SeparationModel::new(&scheme, &sc, 40, 0.0).unwrap();
        let counts: Vec<f64> = model.probabilities_at(true_sep).iter().map(|p| n * p).collect();
        let opts = MleOptions::new((0.0, 4.0 * sigma), 1e-8 * sigma);
        let mle = mle_separation(&counts, &model, &opts).unwrap();
        assert!(mle.converged);
        assert!(
            (mle.estimate - true_sep).abs() < 1e-6 * sigma,
            "estimate {}",
            mle.estimate
        );
    }

    #[test]
    fn all_zero_counts_pin_to_lower_bound() {
        let sigma = 1.0;
        let sc = scene(sigma, 0.5 * sigma, 10.0);
        let scheme = MeasurementScheme::binary_spade(0.0, &sc, 30, 0.0).unwrap();
        let model = SeparationModel::new(&scheme, &sc, 30, 0.0).unwrap();
        let opts = MleOptions::new((0.0, 2.0), 1e-6);
        let mle = mle_separation(&[0.0, 0.0], &model, &opts).unwrap();
        assert_eq!(mle.estimate, 0.0);
        assert!(!mle.converged);
        assert!(mle.log_likelihood.is_finite());
    }

    #[test]
    fn likelihood_is_finite_for_feasible_counts() {
        let sigma = 1.0;
        let sc = scene(sigma, 0.8 * sigma, 500.0);
        let scheme = MeasurementScheme::hg_spade(40, 0.0, &sc, 40, 0.0).unwrap();
        let model = SeparationModel::new(&scheme, &sc, 40, 0.0).unwrap();
        let p = model.probabilities_at(sc.separation);
        for trial in 0..50 {
            let mut rng = trial_rng(3, trial);
            let counts: Vec<f64> = p
                .iter()
                .map(|&pj| sample_poisson(&mut rng, 500.0 * pj) as f64)
                .collect();
            let ll = model.log_likelihood(&counts, sc.separation);
            assert!(ll.is_finite(), "trial {trial}: ll = {ll}");
        }
    }

    #[test]
    fn single_trial_campaign_reproduces_one_mle_call() {
        let sigma = 1.0;
        let sc = scene(sigma, sigma, 1000.0);
        let scheme = MeasurementScheme::hg_spade(20, 0.0, &sc, 30, 0.0).unwrap();
        let config = TrialConfig {
            scheme: &scheme,
            scene: &sc,
            dim: 30,
            basis_center: 0.0,
            trials: 1,
            seed: 77,
            bounds: (0.0, 4.0 * sigma),
            tolerance: 1e-6 * sigma,
        };
        let campaign = run_campaign(&config).unwrap();
        let model = SeparationModel::new(&scheme, &sc, 30, 0.0).unwrap();
        let mut rng = trial_rng(77, 0);
        let p = model.probabilities_at(sigma);
        let counts: Vec<f64> = p
            .iter()
            .map(|&pj| sample_poisson(&mut rng, 1000.0 * pj) as f64)
            .collect();
        let opts = MleOptions::new((0.0, 4.0 * sigma), 1e-6 * sigma);
        let mle = mle_separation(&counts, &model, &opts).unwrap();
        assert_eq!(campaign.records[0].estimate.to_bits(), mle.estimate.to_bits());
    }

    #[test]
    fn campaigns_are_bitwise_reproducible() {
        let sigma = 1.0;
        let sc = scene(sigma, sigma, 500.0);
        let scheme = MeasurementScheme::hg_spade(20, 0.0, &sc, 30, 0.0).unwrap();
        let run = || {
            let config = TrialConfig {
                scheme: &scheme,
                scene: &sc,
                dim: 30,
                basis_center: 0.0,
                trials: 64,
                seed: 123,
                bounds: (0.0, 4.0 * sigma),
                tolerance: 1e-6 * sigma,
            };
            run_campaign(&config).unwrap()
        };
        let (a, b) = (run(), run());
        assert_eq!(a.report.mse.to_bits(), b.report.mse.to_bits());
        assert_eq!(a.report.bias.to_bits(), b.report.bias.to_bits());
        for (ra, rb) in a.records.iter().zip(b.records.iter()) {
            assert_eq!(ra.counts, rb.counts);
            assert_eq!(ra.estimate.to_bits(), rb.estimate.to_bits());
        }
    }

    #[test]
    fn campaigns_ignore_thread_count() {
        let sigma = 1.0;
        let sc = scene(sigma, sigma, 500.0);
        let scheme = MeasurementScheme::hg_spade(20, 0.0, &sc, 30, 0.0).unwrap();
        let run_with = |threads: usize| {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap();
            pool.install(|| {
                let config = TrialConfig {
                    scheme: &scheme,
                    scene: &sc,
                    dim: 30,
                    basis_center: 0.0,
                    trials: 48,
                    seed: 2024,
                    bounds: (0.0, 4.0 * sigma),
                    tolerance: 1e-6 * sigma,
                };
                run_campaign(&config).unwrap()
            })
        };
        let serial = run_with(1);
        let parallel = run_with(4);
        assert_eq!(serial.report.mse.to_bits(), parallel.report.mse.to_bits());
        assert_eq!(
            serial.report.mse_standard_error.to_bits(),
            parallel.report.mse_standard_error.to_bits()
        );
    }

    #[test]
    fn campaign_rejects_bounds_missing_the_truth() {
        let sigma = 1.0;
        let sc = scene(sigma, 3.0 * sigma, 100.0);
        let scheme = MeasurementScheme::binary_spade(0.0, &sc, 30, 0.0).unwrap();
        let config = TrialConfig {
            scheme: &scheme,
            scene: &sc,
            dim: 30,
            basis_center: 0.0,
            trials: 4,
            seed: 1,
            bounds: (0.0, 2.0 * sigma),
            tolerance: 1e-6,
        };
        assert!(run_campaign(&config).is_err());
    }
}
