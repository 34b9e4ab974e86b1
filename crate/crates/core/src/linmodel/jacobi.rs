//! Cyclic Jacobi eigen-oracle for symmetric matrices.
//!
//! Kept deliberately separate from everything the learning rules use so it can
//! serve as an independent reference decomposition in tests and checks.

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Off-diagonal Frobenius norm, relative to the input norm, at which sweeping stops.
pub const JACOBI_THRESHOLD: f64 = 1e-12;
/// Maximum number of full sweeps.
pub const JACOBI_MAX_SWEEPS: usize = 100;
/// Largest tolerated `max|C - Cᵀ|`.
pub const SYMMETRY_TOLERANCE: f64 = 1e-8;

/// Decomposes a symmetric matrix into descending eigenvalues and matching
/// eigenvector columns.
///
/// Each eigenvector is sign-normalized so that its largest-magnitude
/// component is positive.
pub fn symmetric_eigen_oracle(c: &DMatrix<f64>) -> Result<(Vec<f64>, DMatrix<f64>)> {
    let (rows, cols) = c.shape();
    if rows != cols {
        return Err(Error::Shape { rows, cols });
    }
    let residual = max_asymmetry(c);
    if residual.is_nan() || residual >= SYMMETRY_TOLERANCE {
        return Err(Error::Symmetry { residual });
    }
    let n = rows;
    let mut a = c.clone();
    let mut v = DMatrix::<f64>::identity(n, n);
    let scale = c.norm();

    let mut converged = scale == 0.0;
    for _sweep in 0..JACOBI_MAX_SWEEPS {
        if converged {
            break;
        }
        if off_diagonal_norm(&a) <= JACOBI_THRESHOLD * scale {
            converged = true;
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                rotate(&mut a, &mut v, p, q);
            }
        }
    }
    if !converged && off_diagonal_norm(&a) > JACOBI_THRESHOLD * scale {
        return Err(Error::Convergence {
            what: "cyclic Jacobi",
            iterations: JACOBI_MAX_SWEEPS,
        });
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[(j, j)].total_cmp(&a[(i, i)]));
    let values = order.iter().map(|&i| a[(i, i)]).collect();
    let mut vectors = DMatrix::<f64>::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        let mut col = v.column(src).clone_owned();
        let lead = col.iter().copied().fold(0.0f64, |m, x| if x.abs() > m.abs() { x } else { m });
        if lead < 0.0 {
            col.neg_mut();
        }
        vectors.set_column(dst, &col);
    }
    Ok((values, vectors))
}

fn rotate(a: &mut DMatrix<f64>, v: &mut DMatrix<f64>, p: usize, q: usize) {
    let apq = a[(p, q)];
    if apq == 0.0 {
        return;
    }
    let theta = (a[(q, q)] - a[(p, p)]) / (2.0 * apq);
    let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
    let c = 1.0 / (t * t + 1.0).sqrt();
    let s = t * c;
    let n = a.nrows();

    // A <- Jᵀ A J, columns first then rows.
    for k in 0..n {
        let akp = a[(k, p)];
        let akq = a[(k, q)];
        a[(k, p)] = c * akp - s * akq;
        a[(k, q)] = s * akp + c * akq;
    }
    for k in 0..n {
        let apk = a[(p, k)];
        let aqk = a[(q, k)];
        a[(p, k)] = c * apk - s * aqk;
        a[(q, k)] = s * apk + c * aqk;
    }
    a[(p, q)] = 0.0;
    a[(q, p)] = 0.0;

    for k in 0..n {
        let vkp = v[(k, p)];
        let vkq = v[(k, q)];
        v[(k, p)] = c * vkp - s * vkq;
        v[(k, q)] = s * vkp + c * vkq;
    }
}

fn off_diagonal_norm(a: &DMatrix<f64>) -> f64 {
    let mut sum = 0.0;
    for j in 0..a.ncols() {
        for i in 0..a.nrows() {
            if i != j {
                sum += a[(i, j)] * a[(i, j)];
            }
        }
    }
    sum.sqrt()
}

/// `max|A - Aᵀ|` for a square matrix.
pub fn max_asymmetry(a: &DMatrix<f64>) -> f64 {
    let mut worst = 0.0f64;
    for j in 0..a.ncols() {
        for i in 0..j {
            let d = (a[(i, j)] - a[(j, i)]).abs();
            if d.is_nan() {
                return f64::NAN;
            }
            worst = worst.max(d);
        }
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn diagonal_input_is_returned_sorted() {
        let c = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![3.0, 2.0, 1.0]));
        let (values, vectors) = symmetric_eigen_oracle(&c).unwrap();
        assert_eq!(values, vec![3.0, 2.0, 1.0]);
        assert_eq!(vectors, DMatrix::identity(3, 3));
    }

    #[test]
    fn classic_two_by_two() {
        let c = DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 2.0]);
        let (values, vectors) = symmetric_eigen_oracle(&c).unwrap();
        assert!((values[0] - 3.0).abs() < 1e-14);
        assert!((values[1] - 1.0).abs() < 1e-14);
        let h = std::f64::consts::FRAC_1_SQRT_2;
        assert!((vectors[(0, 0)] - h).abs() < 1e-14 && (vectors[(1, 0)] - h).abs() < 1e-14);
    }

    #[test]
    fn unsorted_diagonal_is_reordered() {
        let c = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![1.0, 5.0, 3.0]));
        let (values, vectors) = symmetric_eigen_oracle(&c).unwrap();
        assert_eq!(values, vec![5.0, 3.0, 1.0]);
        assert_eq!(vectors[(1, 0)], 1.0);
        assert_eq!(vectors[(2, 1)], 1.0);
        assert_eq!(vectors[(0, 2)], 1.0);
    }

    #[test]
    fn rejects_asymmetric_input() {
        let c = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.0, 1.0]);
        assert!(matches!(symmetric_eigen_oracle(&c), Err(Error::Symmetry { .. })));
    }

    #[test]
    fn rejects_non_square_input() {
        let c = DMatrix::<f64>::zeros(2, 3);
        assert!(matches!(symmetric_eigen_oracle(&c), Err(Error::Shape { rows: 2, cols: 3 })));
    }

    #[test]
    fn zero_matrix() {
        let (values, _) = symmetric_eigen_oracle(&DMatrix::zeros(3, 3)).unwrap();
        assert_eq!(values, vec![0.0; 3]);
    }
}
