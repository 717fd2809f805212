use crate::error::{dim_err, Error, Result};

use super::Matrix;

pub const DEFAULT_TOL: f64 = 1e-12;
pub const MAX_SWEEPS: usize = 100;

/// Eigenvalues of a symmetric matrix in descending order, by cyclic Jacobi
/// rotations.
///
/// Sweeps continue until every off-diagonal magnitude is below `tol` (scaled
/// by the Frobenius norm of the input for matrices with large entries).
pub fn symmetric_eigenvalues(k: &Matrix, tol: f64) -> Result<Vec<f64>> {
    let n = k.rows();
    if k.cols() != n {
        return dim_err(format!("eigenvalues of a {}x{} matrix", n, k.cols()));
    }
    for i in 0..n {
        for j in (i + 1)..n {
            let gap = (k.get(i, j) - k.get(j, i)).abs();
            if gap > tol {
                return Err(Error::Input(format!(
                    "matrix not symmetric: |K[{i},{j}] - K[{j},{i}]| = {gap:e}"
                )));
            }
        }
    }

    let mut a: Vec<f64> = k.data().to_vec();
    // symmetrize exactly so the rotations see a consistent matrix
    for i in 0..n {
        for j in (i + 1)..n {
            let avg = 0.5 * (a[i * n + j] + a[j * n + i]);
            a[i * n + j] = avg;
            a[j * n + i] = avg;
        }
    }
    let threshold = tol * k.frobenius_norm_sq().sqrt().max(1.0);

    let off_max = |a: &[f64]| {
        let mut m = 0.0f64;
        for i in 0..n {
            for j in (i + 1)..n {
                m = m.max(a[i * n + j].abs());
            }
        }
        m
    };

    let mut sweeps = 0;
    while off_max(&a) >= threshold {
        if sweeps == MAX_SWEEPS {
            return Err(Error::Numerical(format!(
                "Jacobi did not converge in {MAX_SWEEPS} sweeps"
            )));
        }
        sweeps += 1;
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[p * n + q];
                if apq.abs() < f64::MIN_POSITIVE {
                    continue;
                }
                let app = a[p * n + p];
                let aqq = a[q * n + q];
                // t = tan(theta), the smaller root of t^2 + 2 t cot(2 theta) - 1 = 0
                let theta = (aqq - app) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;

                for r in 0..n {
                    let arp = a[r * n + p];
                    let arq = a[r * n + q];
                    a[r * n + p] = c * arp - s * arq;
                    a[r * n + q] = s * arp + c * arq;
                }
                for r in 0..n {
                    let apr = a[p * n + r];
                    let aqr = a[q * n + r];
                    a[p * n + r] = c * apr - s * aqr;
                    a[q * n + r] = s * apr + c * aqr;
                }
                a[p * n + q] = 0.0;
                a[q * n + p] = 0.0;
            }
        }
    }

    let mut eig: Vec<f64> = (0..n).map(|i| a[i * n + i]).collect();
    eig.sort_by(|x, y| y.total_cmp(x));
    Ok(eig)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_eigenvalues() {
        let e = symmetric_eigenvalues(&Matrix::identity(3), DEFAULT_TOL).unwrap();
        assert_eq!(e, vec![1.0, 1.0, 1.0]);
    }

    #[test]
    fn two_by_two_closed_form() {
        let k = Matrix::from_vec(2, 2, vec![1.0, 0.5, 0.5, 1.0]).unwrap();
        let e = symmetric_eigenvalues(&k, DEFAULT_TOL).unwrap();
        assert!((e[0] - 1.5).abs() < 1e-14);
        assert!((e[1] - 0.5).abs() < 1e-14);
    }

    #[test]
    fn asymmetric_rejected() {
        let k = Matrix::from_vec(2, 2, vec![1.0, 0.5, 0.4, 1.0]).unwrap();
        assert!(matches!(
            symmetric_eigenvalues(&k, DEFAULT_TOL),
            Err(Error::Input(_))
        ));
        assert!(symmetric_eigenvalues(&Matrix::zeros(2, 3), DEFAULT_TOL).is_err());
    }

    #[test]
    fn empty_and_diagonal() {
        assert!(symmetric_eigenvalues(&Matrix::zeros(0, 0), DEFAULT_TOL)
            .unwrap()
            .is_empty());
        let d = Matrix::from_vec(3, 3, vec![2.0, 0.0, 0.0, 0.0, -1.0, 0.0, 0.0, 0.0, 5.0]).unwrap();
        assert_eq!(
            symmetric_eigenvalues(&d, DEFAULT_TOL).unwrap(),
            vec![5.0, 2.0, -1.0]
        );
    }
}
