//! Dense linear-algebra helpers shared by every module.
//!
//! Everything here works on `nalgebra::DMatrix<f64>`; dimensions in this crate
//! never exceed a few dozen, so nothing is blocked or sparse.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{EdlnError, Result};

pub type Mat = DMatrix<f64>;
pub type Vector = DVector<f64>;

/// Relative threshold on singular values used for invertibility checks.
pub const INVERTIBILITY_TOL: f64 = 1e-8;

/// Relative singular-value cutoff for pseudoinverses.
pub const PINV_CUTOFF: f64 = 1e-10;

pub fn frob(m: &Mat) -> f64 {
    m.norm()
}

/// `‖a − b‖_F / max(‖b‖_F, tiny)`.
pub fn rel_err(a: &Mat, b: &Mat) -> f64 {
    let denom = frob(b).max(1e-300);
    frob(&(a - b)) / denom
}

/// Symmetric normalized residual `‖a − b‖ / (‖a‖ + ‖b‖ + 1e-30)`, always in [0, 1].
pub fn normalized_residual(a: &Mat, b: &Mat) -> f64 {
    frob(&(a - b)) / (frob(a) + frob(b) + 1e-30)
}

pub fn symmetrize(m: &Mat) -> Mat {
    (m + m.transpose()) * 0.5
}

fn sym_eigen(m: &Mat) -> SymmetricEigen<f64, nalgebra::Dyn> {
    SymmetricEigen::new(symmetrize(m))
}

/// Apply a scalar function to the spectrum of a symmetric matrix.
pub fn sym_fn(m: &Mat, f: impl Fn(f64) -> f64) -> Mat {
    let eig = sym_eigen(m);
    let vals = eig.eigenvalues.map(f);
    &eig.eigenvectors * Mat::from_diagonal(&vals) * eig.eigenvectors.transpose()
}

/// Principal square root of a symmetric PSD matrix (negative round-off clipped to zero).
pub fn sym_sqrt(m: &Mat) -> Mat {
    sym_fn(m, |v| v.max(0.0).sqrt())
}

/// Inverse square root of a symmetric positive-definite matrix.
pub fn sym_inv_sqrt(m: &Mat) -> Result<Mat> {
    let eig = sym_eigen(m);
    let max = eig.eigenvalues.iter().cloned().fold(0.0_f64, f64::max);
    if eig.eigenvalues.iter().any(|&v| v <= INVERTIBILITY_TOL * max) {
        return Err(EdlnError::NotInvertible("symmetric matrix is not positive definite".into()));
    }
    let vals = eig.eigenvalues.map(|v| 1.0 / v.sqrt());
    Ok(&eig.eigenvectors * Mat::from_diagonal(&vals) * eig.eigenvectors.transpose())
}

/// Principal real power of a symmetric PSD matrix.
pub fn sym_pow(m: &Mat, p: f64) -> Mat {
    sym_fn(m, |v| if v <= 0.0 { 0.0 } else { v.powf(p) })
}

pub fn min_sym_eigenvalue(m: &Mat) -> f64 {
    sym_eigen(m).eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min)
}

pub fn max_sym_eigenvalue(m: &Mat) -> f64 {
    sym_eigen(m).eigenvalues.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
}

pub fn singular_values(m: &Mat) -> Vec<f64> {
    let mut s: Vec<f64> = m.clone().svd(false, false).singular_values.iter().cloned().collect();
    s.sort_by(|a, b| b.partial_cmp(a).unwrap());
    s
}

pub fn condition_number(m: &Mat) -> f64 {
    let s = singular_values(m);
    match (s.first(), s.last()) {
        (Some(&hi), Some(&lo)) if lo > 0.0 => hi / lo,
        _ => f64::INFINITY,
    }
}

/// Full rank check: smallest singular value above `INVERTIBILITY_TOL` times the largest.
pub fn is_invertible(m: &Mat) -> bool {
    if !m.is_square() || m.nrows() == 0 {
        return false;
    }
    let s = singular_values(m);
    let hi = s[0];
    hi > 0.0 && s[s.len() - 1] > INVERTIBILITY_TOL * hi
}

pub fn numerical_rank(m: &Mat, rel_tol: f64) -> usize {
    let s = singular_values(m);
    let hi = s.first().cloned().unwrap_or(0.0);
    if hi == 0.0 {
        return 0;
    }
    s.iter().filter(|&&v| v > rel_tol * hi).count()
}

pub fn inverse(m: &Mat, what: &str) -> Result<Mat> {
    if !is_invertible(m) {
        return Err(EdlnError::NotInvertible(what.to_string()));
    }
    m.clone()
        .try_inverse()
        .ok_or_else(|| EdlnError::NotInvertible(what.to_string()))
}

/// Moore–Penrose pseudoinverse with a relative singular-value cutoff.
pub fn pinv(m: &Mat, rel_cutoff: f64) -> Mat {
    let svd = m.clone().svd(true, true);
    let hi = svd.singular_values.iter().cloned().fold(0.0_f64, f64::max);
    let u = svd.u.expect("requested u");
    let vt = svd.v_t.expect("requested v_t");
    let inv: Vec<f64> = svd
        .singular_values
        .iter()
        .map(|&s| if hi > 0.0 && s > rel_cutoff * hi { 1.0 / s } else { 0.0 })
        .collect();
    vt.transpose() * Mat::from_diagonal(&DVector::from_vec(inv)) * u.transpose()
}

/// Thin SVD `m = U diag(s) Vᵀ` with singular values sorted descending.
pub struct SortedSvd {
    pub u: Mat,
    pub s: Vec<f64>,
    pub v: Mat,
}

pub fn sorted_svd(m: &Mat) -> SortedSvd {
    let svd = m.clone().svd(true, true);
    let u = svd.u.expect("requested u");
    let v = svd.v_t.expect("requested v_t").transpose();
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| svd.singular_values[b].partial_cmp(&svd.singular_values[a]).unwrap());
    let k = order.len();
    let mut uu = Mat::zeros(u.nrows(), k);
    let mut vv = Mat::zeros(v.nrows(), k);
    let mut s = Vec::with_capacity(k);
    for (dst, &src) in order.iter().enumerate() {
        uu.set_column(dst, &u.column(src));
        vv.set_column(dst, &v.column(src));
        s.push(svd.singular_values[src]);
    }
    SortedSvd { u: uu, s, v: vv }
}

pub fn gaussian_matrix<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> Mat {
    Mat::from_fn(rows, cols, |_, _| rng.sample::<f64, _>(StandardNormal))
}

pub fn gaussian_vector<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vector {
    Vector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal))
}

/// Haar-distributed orthogonal matrix (QR of a Gaussian matrix with the sign fix on R's diagonal).
pub fn random_orthogonal<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Mat {
    let g = gaussian_matrix(n, n, rng);
    let qr = g.qr();
    let mut q = qr.q();
    let r = qr.r();
    for j in 0..n {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    q
}

/// Geometrically spaced spectrum from 1 down to `1/cond` (length `n`).
pub fn log_spaced_spectrum(n: usize, cond: f64) -> Vec<f64> {
    if n == 1 {
        return vec![1.0];
    }
    (0..n)
        .map(|k| cond.powf(-(k as f64) / (n as f64 - 1.0)))
        .collect()
}

/// Symmetric positive-definite matrix with largest eigenvalue `scale` and condition number `cond`,
/// in a Haar-random eigenbasis.
pub fn random_spd<R: Rng + ?Sized>(n: usize, cond: f64, scale: f64, rng: &mut R) -> Mat {
    let q = random_orthogonal(n, rng);
    let spec: Vec<f64> = log_spaced_spectrum(n, cond).into_iter().map(|v| v * scale).collect();
    let d = Mat::from_diagonal(&DVector::from_vec(spec));
    symmetrize(&(&q * d * q.transpose()))
}

/// Invertible matrix `U diag(s) Vᵀ` with condition number `cond` and unit geometric-mean scale.
pub fn random_invertible<R: Rng + ?Sized>(n: usize, cond: f64, rng: &mut R) -> Mat {
    let u = random_orthogonal(n, rng);
    let v = random_orthogonal(n, rng);
    let spec = log_spaced_spectrum(n, cond);
    let gm = spec.iter().map(|s| s.ln()).sum::<f64>() / n as f64;
    let spec: Vec<f64> = spec.into_iter().map(|s| s / gm.exp()).collect();
    u * Mat::from_diagonal(&DVector::from_vec(spec)) * v.transpose()
}

/// First `k` columns of `q` (an orthonormal frame when `q` is orthogonal).
pub fn leading_columns(q: &Mat, k: usize) -> Mat {
    q.columns(0, k).into_owned()
}

/// Orthogonal Procrustes: the orthogonal `O` minimizing `‖a − O b‖_F`.
pub fn procrustes_left(a: &Mat, b: &Mat) -> Mat {
    let m = a * b.transpose();
    let svd = m.svd(true, true);
    svd.u.expect("u") * svd.v_t.expect("v_t")
}

/// Frobenius inner product.
pub fn inner(a: &Mat, b: &Mat) -> f64 {
    a.component_mul(b).sum()
}

/// Matrix exponential `exp(λT)` by Taylor scaling-and-squaring.
///
/// The argument is halved until its 1-norm is at most 0.5, the Taylor series is summed until a
/// term drops below 1e-16 in magnitude relative to the partial sum, and the result is squared back.
pub fn matrix_exponential(t: &Mat, lambda: f64) -> Mat {
    assert!(t.is_square(), "matrix exponential needs a square matrix");
    let n = t.nrows();
    let a = t * lambda;
    let norm1 = (0..n)
        .map(|j| a.column(j).iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0_f64, f64::max);
    let mut squarings = 0u32;
    let mut scale = 1.0;
    while norm1 * scale > 0.5 {
        scale *= 0.5;
        squarings += 1;
    }
    let a = a * scale;
    let mut result = Mat::identity(n, n);
    let mut term = Mat::identity(n, n);
    for k in 1..=60 {
        term = &term * &a / k as f64;
        result += &term;
        let tn = term.amax();
        if tn <= 1e-16 * result.amax().max(1.0) {
            break;
        }
    }
    for _ in 0..squarings {
        result = &result * &result;
    }
    result
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn expm_zero_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let t = gaussian_matrix(4, 4, &mut rng);
        let e = matrix_exponential(&t, 0.0);
        assert!(rel_err(&e, &Mat::identity(4, 4)) < 1e-15);
    }

    #[test]
    fn expm_diagonal() {
        let t = Mat::from_diagonal(&Vector::from_vec(vec![1.5, -0.7]));
        let e = matrix_exponential(&t, 0.9);
        assert!((e[(0, 0)] - (1.35f64).exp()).abs() < 1e-13 * (1.35f64).exp());
        assert!((e[(1, 1)] - (-0.63f64).exp()).abs() < 1e-14);
        assert_eq!(e[(0, 1)], 0.0);
    }

    #[test]
    fn expm_inverse_pair() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..10 {
            let t = gaussian_matrix(6, 6, &mut rng);
            let p = matrix_exponential(&t, 0.8) * matrix_exponential(&t, -0.8);
            assert!(rel_err(&p, &Mat::identity(6, 6)) < 1e-10);
        }
    }

    /// Oracle: `T = P D P⁻¹` with a random real `P`, so `exp(λT) = P exp(λD) P⁻¹`.
    #[test]
    fn expm_matches_eigendecomposition_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            let p = random_invertible(5, 4.0, &mut rng);
            let d: Vec<f64> = (0..5).map(|_| rng.random_range(-1.5..1.5)).collect();
            let pinv = p.clone().try_inverse().unwrap();
            let t = &p * Mat::from_diagonal(&Vector::from_vec(d.clone())) * &pinv;
            let lambda = 0.7;
            let ed = Mat::from_diagonal(&Vector::from_vec(d.iter().map(|v| (lambda * v).exp()).collect()));
            let oracle = &p * ed * &pinv;
            assert!(rel_err(&matrix_exponential(&t, lambda), &oracle) < 1e-9);
        }
        // symmetric case through the symmetric eigensolver
        for _ in 0..10 {
            let g = gaussian_matrix(6, 6, &mut rng);
            let s = symmetrize(&g);
            let oracle = sym_fn(&s, |v| (0.3 * v).exp());
            assert!(rel_err(&matrix_exponential(&s, 0.3), &oracle) < 1e-9);
        }
    }

    #[test]
    fn spd_has_requested_condition() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let s = random_spd(8, 25.0, 2.0, &mut rng);
        assert!((condition_number(&s) - 25.0).abs() < 1e-8);
        assert!((max_sym_eigenvalue(&s) - 2.0).abs() < 1e-12);
        let z = random_invertible(6, 10.0, &mut rng);
        assert!((condition_number(&z) - 10.0).abs() < 1e-8);
    }

    #[test]
    fn sqrt_and_pinv() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let s = random_spd(5, 30.0, 1.0, &mut rng);
        let r = sym_sqrt(&s);
        assert!(rel_err(&(&r * &r), &s) < 1e-12);
        let ir = sym_inv_sqrt(&s).unwrap();
        assert!(rel_err(&(&ir * &r), &Mat::identity(5, 5)) < 1e-12);
        let a = gaussian_matrix(3, 5, &mut rng);
        let ap = pinv(&a, PINV_CUTOFF);
        assert!(rel_err(&(&a * &ap * &a), &a) < 1e-12);
    }

    #[test]
    fn orthogonal_is_orthogonal() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let q = random_orthogonal(7, &mut rng);
        assert!(rel_err(&(q.transpose() * &q), &Mat::identity(7, 7)) < 1e-13);
    }
}
