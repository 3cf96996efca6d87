//! Small helpers for dense complex Hermitian matrices.

use nalgebra::{Complex, DMatrix};
use rand::Rng;

pub type C64 = Complex<f64>;

/// Largest elementwise deviation from Hermitian symmetry.
pub fn hermiticity_violation(m: &DMatrix<C64>) -> f64 {
    let n = m.nrows();
    let mut worst = 0.0f64;
    for i in 0..n {
        for j in i..n {
            let d = (m[(i, j)] - m[(j, i)].conj()).norm();
            if d > worst {
                worst = d;
            }
        }
    }
    worst
}

/// Symmetrize to the nearest Hermitian matrix, (M + M†)/2.
pub fn hermitize(m: &DMatrix<C64>) -> DMatrix<C64> {
    (m + m.adjoint()) * C64::new(0.5, 0.0)
}

pub fn trace_re(m: &DMatrix<C64>) -> f64 {
    (0..m.nrows()).map(|i| m[(i, i)].re).sum()
}

/// Re tr(A B) for Hermitian `a`, computed as a Frobenius inner product.
///
/// tr(AB) = Σ_{mn} A_{mn} B_{nm} = Σ_{mn} conj(A_{nm}) B_{nm} when A = A†.
pub fn trace_product_re(a: &DMatrix<C64>, b: &DMatrix<C64>) -> f64 {
    debug_assert_eq!(a.shape(), b.shape());
    let (sa, sb) = (a.as_slice(), b.as_slice());
    let mut acc = 0.0;
    for (x, y) in sa.iter().zip(sb.iter()) {
        acc += x.re * y.re + x.im * y.im;
    }
    acc
}

pub fn max_abs(m: &DMatrix<C64>) -> f64 {
    m.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

pub fn real_to_complex(m: &DMatrix<f64>) -> DMatrix<C64> {
    m.map(|x| C64::new(x, 0.0))
}

/// Quadratic form vᵀ M v for a real vector against a complex Hermitian matrix.
/// The result is real up to rounding; the real part is returned.
pub fn real_quadratic_form(m: &DMatrix<C64>, v: &[f64]) -> f64 {
    let n = m.nrows();
    debug_assert_eq!(v.len(), n);
    let data = m.as_slice(); // column-major
    let mut acc = 0.0;
    for j in 0..n {
        let vj = v[j];
        if vj == 0.0 {
            continue;
        }
        let col = &data[j * n..(j + 1) * n];
        let mut dot = 0.0;
        for i in 0..n {
            dot += col[i].re * v[i];
        }
        acc += vj * dot;
    }
    acc
}

/// Eigendecomposition of a Hermitian matrix by cyclic Jacobi rotations.
///
/// Returns unordered eigenvalues and the unitary of eigenvector columns.
/// Jacobi is unconditionally convergent and, unlike tridiagonalization-based
/// solvers, stays exact on the heavily rank-deficient matrices this crate
/// produces (a rank-2 correlation operator in a 40-dimensional basis drives
/// QL-style iterations into 0/0).
pub fn hermitian_eigen(m: &DMatrix<C64>) -> (Vec<f64>, DMatrix<C64>) {
    let n = m.nrows();
    assert_eq!(n, m.ncols(), "hermitian_eigen needs a square matrix");
    let mut a = hermitize(m);
    let mut v = DMatrix::<C64>::identity(n, n);
    if n <= 1 {
        return ((0..n).map(|i| a[(i, i)].re).collect(), v);
    }
    let scale: f64 = a.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt().max(f64::MIN_POSITIVE);
    let tol = 1e-15 * scale;
    for _sweep in 0..64 {
        let mut off = 0.0f64;
        for p in 0..n - 1 {
            for q in p + 1..n {
                off = off.max(a[(p, q)].norm());
            }
        }
        if off <= tol {
            break;
        }
        for p in 0..n - 1 {
            for q in p + 1..n {
                let gamma = a[(p, q)];
                let mag = gamma.norm();
                if mag <= 1e-3 * tol {
                    continue;
                }
                let phase = gamma / C64::new(mag, 0.0);
                let alpha = a[(p, p)].re;
                let beta = a[(q, q)].re;
                let tau = (alpha - beta) / (2.0 * mag);
                let t = if tau >= 0.0 {
                    1.0 / (tau + (1.0 + tau * tau).sqrt())
                } else {
                    -1.0 / (-tau + (1.0 + tau * tau).sqrt())
                };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = t * c;
                // Unitary columns u_p = c e_p + s e^{-iφ} e_q,
                //                 u_q = -s e^{iφ} e_p + c e_q.
                let cc = C64::new(c, 0.0);
                let sp = phase.conj() * C64::new(s, 0.0); // s e^{-iφ}
                let sq = phase * C64::new(s, 0.0); // s e^{+iφ}
                // A ← A R (columns p, q).
                for i in 0..n {
                    let aip = a[(i, p)];
                    let aiq = a[(i, q)];
                    a[(i, p)] = aip * cc + aiq * sp;
                    a[(i, q)] = aiq * cc - aip * sq;
                }
                // A ← R† A (rows p, q).
                for i in 0..n {
                    let api = a[(p, i)];
                    let aqi = a[(q, i)];
                    a[(p, i)] = api * cc + aqi * sq;
                    a[(q, i)] = aqi * cc - api * sp;
                }
                // Clean the rotated pair to keep Hermitian structure exact.
                a[(p, q)] = C64::new(0.0, 0.0);
                a[(q, p)] = C64::new(0.0, 0.0);
                a[(p, p)] = C64::new(a[(p, p)].re, 0.0);
                a[(q, q)] = C64::new(a[(q, q)].re, 0.0);
                // V ← V R.
                for i in 0..n {
                    let vip = v[(i, p)];
                    let viq = v[(i, q)];
                    v[(i, p)] = vip * cc + viq * sp;
                    v[(i, q)] = viq * cc - vip * sq;
                }
            }
        }
    }
    ((0..n).map(|i| a[(i, i)].re).collect(), v)
}

/// Eigenvalues of a Hermitian matrix, ascending.
pub fn hermitian_eigenvalues(m: &DMatrix<C64>) -> Vec<f64> {
    let (mut vals, _) = hermitian_eigen(m);
    vals.sort_by(f64::total_cmp);
    vals
}

/// Real symmetric eigendecomposition via the Hermitian solver; rotations on
/// real input are real, so the eigenvector matrix is real exactly.
pub fn symmetric_eigen_real(m: &DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let (vals, u) = hermitian_eigen(&real_to_complex(m));
    (vals, u.map(|z| z.re))
}

/// Haar-like random unitary from the QR decomposition of a complex Ginibre
/// matrix, with the R diagonal phases absorbed into Q.
pub fn random_unitary<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> DMatrix<C64> {
    // Box-Muller from explicit uniforms keeps the construction reproducible
    // for a fixed RNG stream.
    let mut normal = || {
        let u1: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
        let u2: f64 = rng.gen();
        (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    };
    let ginibre = DMatrix::from_fn(dim, dim, |_, _| C64::new(normal(), normal()));
    let qr = ginibre.qr();
    let r = qr.r();
    let mut q = qr.q();
    for k in 0..dim {
        let d = r[(k, k)];
        let phase = if d.norm() > 0.0 {
            d / C64::new(d.norm(), 0.0)
        } else {
            C64::new(1.0, 0.0)
        };
        for i in 0..dim {
            q[(i, k)] *= phase;
        }
    }
    q
}
