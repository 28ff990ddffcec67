//! Symmetric eigenproblems via cyclic Jacobi rotations.

use super::linalg::{Matrix, SymmetricMatrix};

/// Full eigendecomposition of a symmetric matrix.
///
/// Returns eigenvalues sorted descending and the matching orthonormal
/// eigenvectors as columns. Rotations sweep cyclically until the
/// off-diagonal Frobenius norm falls below 1e-14 times the matrix norm,
/// which converges for every symmetric input.
pub fn symmetric_eigen(m: &SymmetricMatrix) -> (Vec<f64>, Matrix) {
    let n = m.dimension();
    let mut a = m.as_matrix().clone();
    let mut v = Matrix::identity(n);
    let norm = a.frobenius_norm().max(1e-300);

    for _sweep in 0..100 {
        let mut off = 0.0;
        for p in 0..n {
            for q in p + 1..n {
                off += 2.0 * a[(p, q)] * a[(p, q)];
            }
        }
        if off.sqrt() <= 1e-14 * norm {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = a[(p, q)];
                if apq.abs() <= 1e-300 {
                    continue;
                }
                // Classic Jacobi rotation zeroing a_pq.
                let theta = (a[(q, q)] - a[(p, p)]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
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
                for k in 0..n {
                    let vkp = v[(k, p)];
                    let vkq = v[(k, q)];
                    v[(k, p)] = c * vkp - s * vkq;
                    v[(k, q)] = s * vkp + c * vkq;
                }
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[(j, j)].partial_cmp(&a[(i, i)]).unwrap());
    let eigenvalues: Vec<f64> = order.iter().map(|&i| a[(i, i)]).collect();
    let eigenvectors = Matrix::from_fn(n, n, |i, j| v[(i, order[j])]);
    (eigenvalues, eigenvectors)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::RandomStream;

    fn column(m: &Matrix, j: usize) -> Vec<f64> {
        (0..m.rows()).map(|i| m[(i, j)]).collect()
    }

    #[test]
    fn identity_eigenvalues() {
        let m = SymmetricMatrix::from_fn(2, |i, j| if i == j { 1.0 } else { 0.0 });
        let (vals, _) = symmetric_eigen(&m);
        assert_eq!(vals, vec![1.0, 1.0]);
    }

    #[test]
    fn correlation_matrix_example() {
        // (1/3) [[2,1],[1,2]]: eigenpairs (1, (1,1)/sqrt(2)) and (1/3, (-1,1)/sqrt(2)).
        let m = SymmetricMatrix::from_fn(2, |i, j| if i == j { 2.0 / 3.0 } else { 1.0 / 3.0 });
        let (vals, vecs) = symmetric_eigen(&m);
        assert!((vals[0] - 1.0).abs() < 1e-12);
        assert!((vals[1] - 1.0 / 3.0).abs() < 1e-12);
        let u1 = column(&vecs, 0);
        let dot = (u1[0] + u1[1]) / 2f64.sqrt();
        assert!((dot.abs() - 1.0).abs() < 1e-12, "u1 misaligned: {u1:?}");
    }

    #[test]
    fn rank_one_covariance_example() {
        // (1/4) [[10,5],[5,10/4]]: lambda_1 = 25/8 with u1 = (2,1)/sqrt(5), lambda_2 = 0.
        let m = SymmetricMatrix::from_fn(2, |i, j| match (i, j) {
            (0, 0) => 2.5,
            (1, 1) => 0.625,
            _ => 1.25,
        });
        let (vals, vecs) = symmetric_eigen(&m);
        assert!((vals[0] - 25.0 / 8.0).abs() < 1e-12);
        assert!(vals[1].abs() < 1e-12);
        let u1 = column(&vecs, 0);
        let dot = (2.0 * u1[0] + u1[1]) / 5f64.sqrt();
        assert!((dot.abs() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn reconstructs_random_matrices() {
        let mut stream = RandomStream::new(2024);
        for n in [2usize, 3, 5, 8, 13, 20] {
            let m = SymmetricMatrix::from_fn(n, |_, _| stream.gaussian());
            let (vals, vecs) = symmetric_eigen(&m);
            // Residual M v = lambda v per pair.
            for j in 0..n {
                let vj = column(&vecs, j);
                let mv = m.mul_vec(&vj);
                for i in 0..n {
                    assert!(
                        (mv[i] - vals[j] * vj[i]).abs() < 1e-10,
                        "residual at n={n}, pair {j}"
                    );
                }
            }
            // Orthonormality.
            for j in 0..n {
                for k in j..n {
                    let dot: f64 = (0..n).map(|i| vecs[(i, j)] * vecs[(i, k)]).sum();
                    let want = if j == k { 1.0 } else { 0.0 };
                    assert!((dot - want).abs() < 1e-10);
                }
            }
            // Frobenius reconstruction.
            let mut err = 0.0f64;
            for i in 0..n {
                for j in 0..n {
                    let rebuilt: f64 = (0..n).map(|k| vecs[(i, k)] * vals[k] * vecs[(j, k)]).sum();
                    err += (rebuilt - m.get(i, j)).powi(2);
                }
            }
            assert!(err.sqrt() < 1e-9, "reconstruction error at n={n}");
            // Descending order.
            for w in vals.windows(2) {
                assert!(w[0] >= w[1]);
            }
        }
    }
}
