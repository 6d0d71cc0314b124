//! Dense symmetric eigenvalues by cyclic Jacobi rotations.
//!
//! Matrices here are at most a few dozen rows, where Jacobi is accurate to
//! working precision on every eigenvalue, including the small ones the PSD
//! test cares about.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::model::symmetrize;

const MAX_SWEEPS: usize = 100;
/// Sweeps stop once the off-diagonal Frobenius norm is below this fraction
/// of the full Frobenius norm.
const OFF_DIAGONAL_TOL: f64 = 1e-13;

#[derive(Debug, Clone)]
pub struct SymmetricEigen {
    /// Ascending.
    pub values: Vec<f64>,
    /// Column `k` is the unit eigenvector for `values[k]`.
    pub vectors: DMatrix<f64>,
    pub sweeps: usize,
}

fn off_diagonal_norm(a: &DMatrix<f64>) -> f64 {
    let n = a.nrows();
    let mut s = 0.0;
    for i in 0..n {
        for j in (i + 1)..n {
            s += 2.0 * a[(i, j)] * a[(i, j)];
        }
    }
    s.sqrt()
}

/// Full eigendecomposition of a symmetric matrix.
///
/// Asymmetry up to `1e-12` (relative to the largest entry) is averaged away;
/// larger asymmetry and non-finite entries are errors.
pub fn symmetric_eigen(m: &DMatrix<f64>) -> Result<SymmetricEigen> {
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("matrix"));
    }
    let mut a = symmetrize(m, 1e-12)?;
    let n = a.nrows();
    let mut v = DMatrix::<f64>::identity(n, n);
    let scale = a.norm();
    let mut sweeps = 0;

    while sweeps < MAX_SWEEPS {
        let off = off_diagonal_norm(&a);
        if off == 0.0 || off <= OFF_DIAGONAL_TOL * scale {
            break;
        }
        sweeps += 1;
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[(p, q)];
                if apq == 0.0 {
                    continue;
                }
                let theta = (a[(q, q)] - a[(p, p)]) / (2.0 * apq);
                let t = if theta.abs() > 1e150 {
                    0.5 / theta
                } else {
                    theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt())
                };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;

                a[(p, p)] -= t * apq;
                a[(q, q)] += t * apq;
                a[(p, q)] = 0.0;
                a[(q, p)] = 0.0;
                for r in 0..n {
                    if r != p && r != q {
                        let g = a[(r, p)];
                        let h = a[(r, q)];
                        let rp = c * g - s * h;
                        let rq = s * g + c * h;
                        a[(r, p)] = rp;
                        a[(p, r)] = rp;
                        a[(r, q)] = rq;
                        a[(q, r)] = rq;
                    }
                    let g = v[(r, p)];
                    let h = v[(r, q)];
                    v[(r, p)] = c * g - s * h;
                    v[(r, q)] = s * g + c * h;
                }
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[(i, i)].total_cmp(&a[(j, j)]));
    let values = order.iter().map(|&i| a[(i, i)]).collect();
    let vectors = DMatrix::from_fn(n, n, |r, k| v[(r, order[k])]);
    Ok(SymmetricEigen {
        values,
        vectors,
        sweeps,
    })
}

/// All eigenvalues in ascending order.
pub fn symmetric_eigenvalues(m: &DMatrix<f64>) -> Result<Vec<f64>> {
    Ok(symmetric_eigen(m)?.values)
}

pub fn min_eigenvalue(m: &DMatrix<f64>) -> Result<f64> {
    Ok(symmetric_eigenvalues(m)?
        .first()
        .copied()
        .unwrap_or(f64::INFINITY))
}

/// `min_eigenvalue(m) >= -tol`.
pub fn is_psd(m: &DMatrix<f64>, tol: f64) -> Result<bool> {
    Ok(min_eigenvalue(m)? >= -tol)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};

    fn mat(rows: &[&[f64]]) -> DMatrix<f64> {
        DMatrix::from_fn(rows.len(), rows.len(), |i, j| rows[i][j])
    }

    #[test]
    fn diagonal() {
        let m = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![3.0, 1.0, 2.0]));
        assert_eq!(symmetric_eigenvalues(&m).unwrap(), vec![1.0, 2.0, 3.0]);
    }

    #[test]
    fn swap_matrix() {
        let e = symmetric_eigenvalues(&mat(&[&[0.0, 1.0], &[1.0, 0.0]])).unwrap();
        assert_abs_diff_eq!(e[0], -1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(e[1], 1.0, epsilon = 1e-15);
    }

    #[test]
    fn two_by_two_characteristic_roots() {
        let e = symmetric_eigenvalues(&mat(&[&[3.0, 2.0], &[2.0, 1.0]])).unwrap();
        let r = 5f64.sqrt();
        assert_abs_diff_eq!(e[0], 2.0 - r, epsilon = 1e-14);
        assert_abs_diff_eq!(e[1], 2.0 + r, epsilon = 1e-14);
    }

    #[test]
    fn psd_checks() {
        assert!(is_psd(&DMatrix::identity(4, 4), 1e-9).unwrap());
        let m = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![1.0, -1e-6]));
        assert!(!is_psd(&m, 1e-9).unwrap());
        // [[3,2],[2,1]] - diag(1,-1) has eigenvalues 0 and 4.
        let shifted = mat(&[&[2.0, 2.0], &[2.0, 2.0]]);
        assert!(is_psd(&shifted, 1e-9).unwrap());
        assert_abs_diff_eq!(min_eigenvalue(&shifted).unwrap(), 0.0, epsilon = 1e-15);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(matches!(
            symmetric_eigen(&mat(&[&[1.0, f64::NAN], &[f64::NAN, 1.0]])),
            Err(Error::NonFinite(_))
        ));
        assert!(matches!(
            symmetric_eigen(&mat(&[&[1.0, 0.5], &[0.4, 1.0]])),
            Err(Error::Asymmetric(_))
        ));
        assert!(symmetric_eigen(&mat(&[&[1.0, 0.5], &[0.5 + 1e-14, 1.0]])).is_ok());
    }

    #[test]
    fn residuals_and_orthogonality() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for n in 1..=12 {
            let g = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
            let m = &g + g.transpose();
            let eig = symmetric_eigen(&m).unwrap();
            let norm = m.norm();
            for k in 0..n {
                let u = eig.vectors.column(k);
                let r = &m * u - u * eig.values[k];
                assert!(r.norm() <= 1e-9 * (1.0 + norm), "n={n} k={k}");
            }
            let vtv = eig.vectors.transpose() * &eig.vectors;
            assert!((vtv - DMatrix::identity(n, n)).amax() < 1e-12);
            assert!(eig.values.windows(2).all(|w| w[0] <= w[1]));
        }
    }
}
