//! Complex-matrix numerics shared by every module.
//!
//! Thin layer over `nalgebra` dynamic matrices with the handful of
//! operations the key-rate formulas need: Kronecker products, column-major
//! vectorization, Hermitian PSD square roots and eigenvalue clipping,
//! log-determinants via Cholesky factorization, and deterministic
//! chunk-ordered parallel reductions.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::error::{Error, Result};

pub type Cpx = Complex64;
pub type CMat = DMatrix<Cpx>;
pub type CVec = DVector<Cpx>;

pub const ONE: Cpx = Cpx::new(1.0, 0.0);
pub const ZERO: Cpx = Cpx::new(0.0, 0.0);

/// e^{j theta}.
#[inline]
pub fn cis(theta: f64) -> Cpx {
    Cpx::new(theta.cos(), theta.sin())
}

/// One draw from a circularly-symmetric complex Gaussian CN(0, var).
#[inline]
pub fn cn_scalar<R: Rng + ?Sized>(rng: &mut R, var: f64) -> Cpx {
    let s = (var / 2.0).sqrt();
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Cpx::new(re * s, im * s)
}

/// Matrix with i.i.d. CN(0, var) entries, filled in column-major order.
pub fn cn_matrix<R: Rng + ?Sized>(rng: &mut R, rows: usize, cols: usize, var: f64) -> CMat {
    CMat::from_fn(rows, cols, |_, _| cn_scalar(rng, var))
}

/// Column-major stacking of a matrix into a vector (the `vec` operator).
pub fn vec_stack(m: &CMat) -> CVec {
    CVec::from_column_slice(m.as_slice())
}

/// Inverse of [`vec_stack`].
pub fn unvec(v: &CVec, rows: usize, cols: usize) -> CMat {
    CMat::from_column_slice(rows, cols, v.as_slice())
}

/// Kronecker product A (x) B.
pub fn kron(a: &CMat, b: &CMat) -> CMat {
    a.kronecker(b)
}

/// Selection matrix whose j-th column is the unit vector e_{idx[j]} (0-based).
pub fn selection_matrix(dim: usize, indices: &[usize]) -> CMat {
    let mut m = CMat::zeros(dim, indices.len());
    for (j, &i) in indices.iter().enumerate() {
        m[(i, j)] = ONE;
    }
    m
}

/// Largest absolute entry.
pub fn max_abs(m: &CMat) -> f64 {
    m.iter().fold(0.0, |acc, z| acc.max(z.norm()))
}

/// Relative Hermitian asymmetry ||A - A^H|| / max(1, ||A||).
pub fn hermitian_residual(m: &CMat) -> f64 {
    let diff = m - m.adjoint();
    diff.norm() / m.norm().max(1.0)
}

/// Eigendecomposition of a Hermitian matrix; eigenvalues ascending.
pub fn hermitian_eigen(m: &CMat) -> (Vec<f64>, CMat) {
    let se = m.clone().symmetric_eigen();
    let mut order: Vec<usize> = (0..se.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| se.eigenvalues[a].total_cmp(&se.eigenvalues[b]));
    let vals: Vec<f64> = order.iter().map(|&i| se.eigenvalues[i]).collect();
    let vecs = CMat::from_columns(
        &order
            .iter()
            .map(|&i| se.eigenvectors.column(i).into_owned())
            .collect::<Vec<_>>(),
    );
    (vals, vecs)
}

/// Hermitian PSD square root, clipping slightly negative sample eigenvalues.
pub fn psd_sqrt(m: &CMat) -> CMat {
    let (vals, vecs) = hermitian_eigen(m);
    let d = CVec::from_iterator(
        vals.len(),
        vals.iter().map(|&l| Cpx::new(l.max(0.0).sqrt(), 0.0)),
    );
    let scaled = CMat::from_columns(
        &(0..vals.len())
            .map(|i| vecs.column(i) * d[i])
            .collect::<Vec<_>>(),
    );
    &scaled * vecs.adjoint()
}

/// Repair a sample covariance: clip eigenvalues in [-tol*trace, 0) to zero.
///
/// Eigenvalues below -tol*trace indicate a genuinely indefinite input and
/// are reported as an error rather than silently clipped.
pub fn clip_psd(m: &CMat, tol: f64) -> Result<CMat> {
    let tr: f64 = m.diagonal().iter().map(|z| z.re).sum();
    let floor = -tol * tr.abs().max(f64::MIN_POSITIVE);
    let (vals, vecs) = hermitian_eigen(m);
    if let Some(l) = vals.iter().find(|&&l| l < floor) {
        return Err(Error::Numerical(format!(
            "matrix is not PSD: eigenvalue {l:.3e} below tolerance {floor:.3e}"
        )));
    }
    let scaled = CMat::from_columns(
        &(0..vals.len())
            .map(|i| vecs.column(i) * Cpx::new(vals[i].max(0.0), 0.0))
            .collect::<Vec<_>>(),
    );
    Ok(&scaled * vecs.adjoint())
}

/// log det of a Hermitian positive-definite matrix via Cholesky (natural log).
pub fn ln_det_hpd(m: &CMat) -> Result<f64> {
    let chol = m
        .clone()
        .cholesky()
        .ok_or_else(|| Error::Numerical("Cholesky factorization failed (matrix not HPD)".into()))?;
    Ok(chol
        .l_dirty()
        .diagonal()
        .iter()
        .map(|z| 2.0 * z.re.ln())
        .sum())
}

/// [`ln_det_hpd`] with a ridge retry for nearly singular sample covariances.
///
/// Returns the log-determinant and whether a ridge was applied.
pub fn ln_det_hpd_ridged(m: &CMat, ridge_rel: f64) -> Result<(f64, bool)> {
    if let Ok(v) = ln_det_hpd(m) {
        return Ok((v, false));
    }
    let d = m.nrows();
    let tr: f64 = m.diagonal().iter().map(|z| z.re).sum();
    let ridge = ridge_rel * (tr / d as f64).max(f64::MIN_POSITIVE);
    let mut r = m.clone();
    for i in 0..d {
        r[(i, i)] += Cpx::new(ridge, 0.0);
    }
    ln_det_hpd(&r).map(|v| (v, true))
}

/// Deterministic parallel reduction over `n` items.
///
/// Items are split into fixed chunks of `chunk` consecutive indices; each
/// chunk folds sequentially and chunk results combine in index order, so the
/// result is bit-identical for any thread count.
pub fn chunked_par_fold<T, F, G>(n: usize, chunk: usize, zero: impl Fn() -> T + Sync, f: F, combine: G) -> T
where
    T: Send,
    F: Fn(&mut T, usize) + Sync,
    G: Fn(T, T) -> T,
{
    assert!(chunk > 0, "chunk size must be positive");
    let n_chunks = n.div_ceil(chunk);
    let partials: Vec<T> = (0..n_chunks)
        .into_par_iter()
        .map(|c| {
            let mut acc = zero();
            let lo = c * chunk;
            let hi = ((c + 1) * chunk).min(n);
            for i in lo..hi {
                f(&mut acc, i);
            }
            acc
        })
        .collect();
    partials.into_iter().fold(zero(), combine)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_hpd(rng: &mut ChaCha8Rng, d: usize) -> CMat {
        let a = cn_matrix(rng, d, d, 1.0);
        &a * a.adjoint() + CMat::identity(d, d) * Cpx::new(0.1, 0.0)
    }

    #[test]
    fn vec_stack_is_column_major() {
        let m = CMat::from_row_slice(
            2,
            3,
            &[
                Cpx::new(1.0, 0.0),
                Cpx::new(2.0, 0.0),
                Cpx::new(3.0, 0.0),
                Cpx::new(4.0, 0.0),
                Cpx::new(5.0, 0.0),
                Cpx::new(6.0, 0.0),
            ],
        );
        let v = vec_stack(&m);
        assert_eq!(v.len(), 6);
        let re: Vec<f64> = v.iter().map(|z| z.re).collect();
        assert_eq!(re, vec![1.0, 4.0, 2.0, 5.0, 3.0, 6.0]);
        assert_eq!(unvec(&v, 2, 3), m);
    }

    #[test]
    fn kron_vec_identity() {
        // vec(A X B) = (B^T kron A) vec(X)
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a = cn_matrix(&mut rng, 2, 3, 1.0);
        let x = cn_matrix(&mut rng, 3, 4, 1.0);
        let b = cn_matrix(&mut rng, 4, 2, 1.0);
        let lhs = vec_stack(&(&a * &x * &b));
        let rhs = kron(&b.transpose(), &a) * vec_stack(&x);
        assert!((lhs - rhs).norm() < 1e-12);
    }

    #[test]
    fn ln_det_matches_direct_two_by_two() {
        let m = CMat::from_row_slice(
            2,
            2,
            &[
                Cpx::new(2.0, 0.0),
                Cpx::new(0.5, 0.3),
                Cpx::new(0.5, -0.3),
                Cpx::new(1.5, 0.0),
            ],
        );
        let det = 2.0 * 1.5 - (0.5f64.powi(2) + 0.3f64.powi(2));
        assert_relative_eq!(ln_det_hpd(&m).unwrap(), det.ln(), epsilon = 1e-12);
    }

    #[test]
    fn psd_sqrt_squares_back() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let m = random_hpd(&mut rng, 5);
        let s = psd_sqrt(&m);
        assert!((&s * &s - &m).norm() / m.norm() < 1e-10);
        assert!(hermitian_residual(&s) < 1e-12);
    }

    #[test]
    fn clip_psd_rejects_indefinite() {
        let mut m = CMat::identity(3, 3);
        m[(2, 2)] = Cpx::new(-1.0, 0.0);
        assert!(clip_psd(&m, 1e-12).is_err());
        // tiny negative within tolerance is repaired
        let mut m2 = CMat::identity(3, 3);
        m2[(2, 2)] = Cpx::new(-1e-15, 0.0);
        let fixed = clip_psd(&m2, 1e-12).unwrap();
        assert!(fixed[(2, 2)].re >= 0.0);
    }

    #[test]
    fn chunked_fold_is_thread_count_independent() {
        let serial = chunked_par_fold(1000, 1000, || 0.0_f64, |a, i| *a += (i as f64).sin(), |a, b| a + b);
        let chunked = chunked_par_fold(1000, 7, || 0.0_f64, |a, i| *a += (i as f64).sin(), |a, b| a + b);
        // identical chunking => bit-identical; different chunking agrees to fp tolerance
        assert_relative_eq!(serial, chunked, epsilon = 1e-9);
        let again = chunked_par_fold(1000, 7, || 0.0_f64, |a, i| *a += (i as f64).sin(), |a, b| a + b);
        assert_eq!(chunked.to_bits(), again.to_bits());
    }

    #[test]
    fn ridge_recovers_singular_covariance() {
        let mut m = CMat::identity(3, 3);
        m[(2, 2)] = ZERO;
        let (_, ridged) = ln_det_hpd_ridged(&m, 1e-10).unwrap();
        assert!(ridged);
    }
}
